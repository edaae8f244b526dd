#include "disp/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "disp/attack.hpp"
#include "disp/recovery.hpp"

namespace disp {
namespace {

using nlohmann::json;

std::string pseudo_word(Rng& rng) {
  const std::size_t len = 4 + rng.uniform_index(5);
  std::string s(len, 'a');
  for (auto& ch : s) ch = static_cast<char>('a' + rng.uniform_index(26));
  return s;
}

std::vector<double> centroid(Rng& rng, std::size_t dim) {
  std::vector<double> c(dim);
  for (auto& v : c) v = rng.normal(0.0, 1.0);
  return c;
}

Document synthetic_document(const SyntheticTaskSpec& spec, std::size_t index, Rng& rng,
                            const std::vector<Token>& words) {
  const std::size_t cue_begin = spec.class_tokens * static_cast<std::size_t>(spec.num_classes);
  const std::size_t neutral_begin = cue_begin + spec.cue_tokens;
  const std::size_t neutral = spec.neutral_tokens();
  const auto classes = static_cast<std::size_t>(spec.num_classes);

  const std::size_t y = rng.uniform_index(classes);
  const std::size_t other = (y + 1 + rng.uniform_index(classes - 1)) % classes;
  const std::size_t a = 2 + rng.uniform_index(2);

  auto phrase = [&](std::size_t cls, std::size_t count) {
    std::vector<Token> p;
    if (spec.cue_tokens) p.push_back(words[cue_begin + rng.uniform_index(spec.cue_tokens)]);
    for (std::size_t i = 0; i < count; ++i) {
      p.push_back(words[cls * spec.class_tokens + rng.uniform_index(spec.class_tokens)]);
    }
    if (spec.cue_tokens) p.push_back(words[cue_begin + rng.uniform_index(spec.cue_tokens)]);
    return p;
  };
  std::vector<std::vector<Token>> phrases{phrase(y, a), phrase(other, a - 1)};
  if (rng.bernoulli(0.5)) std::swap(phrases[0], phrases[1]);

  const std::size_t phrase_len = phrases[0].size() + phrases[1].size();
  const std::size_t length = spec.min_length + rng.uniform_index(spec.max_length - spec.min_length + 1);
  std::vector<Token> filler;
  if (neutral > 0) {
    for (std::size_t i = phrase_len; i < length; ++i) {
      filler.push_back(words[neutral_begin + rng.uniform_index(neutral)]);
    }
  }
  // Two phrase slots among the filler gaps, the first strictly before the second.
  std::size_t g0 = rng.uniform_index(filler.size() + 1);
  std::size_t g1 = rng.uniform_index(filler.size() + 1);
  if (g0 > g1) std::swap(g0, g1);

  Document doc;
  doc.id = std::to_string(index);
  doc.label = static_cast<int>(y);
  for (std::size_t i = 0; i <= filler.size(); ++i) {
    if (i == g0) doc.tokens.insert(doc.tokens.end(), phrases[0].begin(), phrases[0].end());
    if (i == g1) doc.tokens.insert(doc.tokens.end(), phrases[1].begin(), phrases[1].end());
    if (i < filler.size()) doc.tokens.push_back(filler[i]);
  }
  return doc;
}

std::uint64_t hash_documents(std::span<const Document> docs) {
  std::uint64_t h = fnv1a64("");
  for (const auto& d : docs) {
    h = fnv1a64(d.id, h);
    h = fnv1a64(std::to_string(d.label), h);
    h = fnv1a64(d.text(), h);
    h = fnv1a64("\n", h);
  }
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json records_to_json(std::span<const PerturbationRecord> records) {
  json out = json::array();
  for (const auto& r : records) {
    out.push_back({{"position", r.position},
                   {"kind", std::string(to_string(r.kind))},
                   {"original", r.original.str()},
                   {"replacement", r.replacement.str()}});
  }
  return out;
}

std::vector<PerturbationRecord> records_from_json(const json& j) {
  std::vector<PerturbationRecord> out;
  for (const auto& r : j) {
    out.push_back({r.at("position").get<std::size_t>(),
                   parse_attack_kind(r.at("kind").get<std::string>()),
                   Token(r.at("original").get<std::string>()),
                   Token(r.at("replacement").get<std::string>())});
  }
  return out;
}

// Oracle attacks for one (task, kind, count, seed, classifier) key.
std::vector<OracleAttackResult> oracle_attacks(std::span<const Document> docs,
                                               const ModelBundle& models, const AttackConfig& cfg,
                                               const EvalOptions& options,
                                               const std::string& task_id) {
  std::filesystem::path cache_file;
  if (!options.attack_cache.empty()) {
    std::uint64_t key = fnv1a64(task_id);
    key = fnv1a64(to_string(cfg.kind), key);
    key = derive_seed(key, cfg.num_attacks);
    key = derive_seed(key, cfg.rng_seed);
    key = derive_seed(key, options.candidates);
    key = derive_seed(key, model_fingerprint(models.classifier));
    key = derive_seed(key, hash_documents(docs));
    key = derive_seed(key, models.corpus->content_hash());
    cache_file = options.attack_cache / ("attacks-" + std::string(to_string(cfg.kind)) + "-" +
                                         std::to_string(cfg.num_attacks) + "-" + hex(key) + ".json");
    if (std::filesystem::exists(cache_file)) {
      std::ifstream in(cache_file);
      const json j = json::parse(in, nullptr, false);
      if (!j.is_discarded() && j.is_array() && j.size() == docs.size()) {
        std::vector<OracleAttackResult> out;
        out.reserve(docs.size());
        for (std::size_t i = 0; i < docs.size(); ++i) {
          const auto& e = j[i];
          OracleAttackResult r;
          r.adversarial.document = docs[i];
          r.adversarial.records = records_from_json(e.at("records"));
          for (const auto& rec : r.adversarial.records) {
            if (rec.position >= docs[i].size()) throw DataError("attack cache record out of range");
            r.adversarial.document.tokens[rec.position] = rec.replacement;
          }
          r.candidate_index = e.at("candidate").get<std::size_t>();
          r.flipped = e.at("flipped").get<bool>();
          r.original_label = e.at("original_label").get<int>();
          out.push_back(std::move(r));
        }
        return out;
      }
    }
  }

  std::vector<OracleAttackResult> out(docs.size());
  parallel_for(docs.size(), options.threads, [&](std::size_t i) {
    try {
      out[i] = oracle_attack(docs[i], models.classifier, cfg, *models.corpus, options.candidates);
    } catch (const NotEnoughAttackableTokensError&) {
      out[i].adversarial = {docs[i], {}};
      out[i].original_label = predict(models.classifier, docs[i]).label;
    }
  });

  if (!cache_file.empty()) {
    json j = json::array();
    for (const auto& r : out) {
      j.push_back({{"records", records_to_json(r.adversarial.records)},
                   {"candidate", r.candidate_index},
                   {"flipped", r.flipped},
                   {"original_label", r.original_label}});
    }
    std::filesystem::create_directories(options.attack_cache);
    std::ofstream(cache_file) << j.dump() << '\n';
  }
  return out;
}

std::span<const Document> eval_documents(const SyntheticTask& task, const EvalOptions& options) {
  std::span<const Document> docs = task.test.documents;
  if (options.max_documents && docs.size() > options.max_documents) {
    docs = docs.first(options.max_documents);
  }
  return docs;
}

std::uint64_t attack_seed(std::uint64_t seed, AttackKind kind, std::size_t num_attacks) {
  return derive_seed(derive_seed(seed, to_string(kind)), num_attacks);
}

json summary_to_json(const KindSummary& s) {
  return {{"documents", s.documents},
          {"attack_free_accuracy", s.attack_free_accuracy},
          {"attacked_accuracy", s.attacked_accuracy},
          {"defended_accuracy", s.defended_accuracy},
          {"ground_truth_accuracy", s.ground_truth_accuracy},
          {"precision", s.detection.precision},
          {"recall", s.detection.recall},
          {"f1", s.detection.f1},
          {"true_positives", s.detection.true_positives},
          {"false_positives", s.detection.false_positives},
          {"false_negatives", s.detection.false_negatives}};
}

}  // namespace

std::size_t SyntheticTaskSpec::neutral_tokens() const {
  const std::size_t reserved = class_tokens * static_cast<std::size_t>(std::max(num_classes, 0)) + cue_tokens;
  return vocab_size > reserved ? vocab_size - reserved : 0;
}

void SyntheticTaskSpec::validate() const {
  if (num_classes < 2) throw DataError("synthetic task needs at least two classes");
  if (class_tokens == 0) throw DataError("synthetic task needs class tokens");
  if (class_tokens * static_cast<std::size_t>(num_classes) + cue_tokens > vocab_size) {
    throw DataError("class and cue tokens exceed the synthetic vocabulary size");
  }
  if (min_length == 0 || min_length > max_length) throw DataError("invalid synthetic length range");
  if (dim == 0) throw DataError("synthetic embedding dimension must be positive");
  if (train_docs == 0 || test_docs == 0) throw DataError("synthetic splits must be non-empty");
  if (!(class_spread > 0.0) || !(neutral_spread > 0.0)) {
    throw DataError("synthetic spreads must be positive");
  }
  // 26^4 four-letter words alone are far more than any desk vocabulary.
  if (vocab_size > 1'000'000) throw DataError("synthetic vocabulary too large");
}

std::pair<std::size_t, std::size_t> class_token_rows(const SyntheticTaskSpec& spec, int c) {
  const std::size_t begin = static_cast<std::size_t>(c) * spec.class_tokens;
  return {begin, begin + spec.class_tokens};
}

SyntheticTask generate_synthetic_task(const SyntheticTaskSpec& spec) {
  spec.validate();
  Rng word_rng(derive_seed(spec.corpus_seed, "words"));
  std::set<std::string> seen;
  std::vector<Token> words;
  words.reserve(spec.vocab_size);
  while (words.size() < spec.vocab_size) {
    auto w = pseudo_word(word_rng);
    if (seen.insert(w).second) words.emplace_back(std::move(w));
  }

  Rng vec_rng(derive_seed(spec.corpus_seed, "embeddings"));
  const auto classes = static_cast<std::size_t>(spec.num_classes);
  std::vector<std::vector<double>> centroids;
  for (std::size_t c = 0; c < classes + 2; ++c) centroids.push_back(centroid(vec_rng, spec.dim));
  std::vector<float> vectors(spec.vocab_size * spec.dim);
  const std::size_t cue_begin = spec.class_tokens * classes;
  for (std::size_t r = 0; r < spec.vocab_size; ++r) {
    std::size_t group = classes + 1;
    double spread = spec.neutral_spread;
    if (r < cue_begin) {
      group = r / spec.class_tokens;
      spread = spec.class_spread;
    } else if (r < cue_begin + spec.cue_tokens) {
      group = classes;
      spread = spec.class_spread;
    }
    for (std::size_t j = 0; j < spec.dim; ++j) {
      vectors[r * spec.dim + j] = static_cast<float>(centroids[group][j] + vec_rng.normal(0.0, spread));
    }
  }

  SyntheticTask task;
  task.id = spec.id;
  task.corpus = std::make_shared<const EmbeddingCorpus>(words, std::move(vectors), spec.dim);
  Rng doc_rng(derive_seed(spec.seed, "documents"));
  task.train = {{}, spec.num_classes, Split::Train};
  task.test = {{}, spec.num_classes, Split::Test};
  for (std::size_t i = 0; i < spec.train_docs; ++i) {
    task.train.documents.push_back(synthetic_document(spec, i, doc_rng, words));
  }
  for (std::size_t i = 0; i < spec.test_docs; ++i) {
    task.test.documents.push_back(synthetic_document(spec, i, doc_rng, words));
  }
  return task;
}

ModelBundle train_models(const Dataset& defense_train, const Dataset& classifier_train,
                         std::shared_ptr<const EmbeddingCorpus> corpus, const PipelineConfig& config,
                         std::uint64_t seed) {
  if (!corpus) throw DataError("train_models needs an embedding corpus");
  auto with_seed = [seed](EncoderConfig e, std::string_view salt) {
    e.seed = derive_seed(seed, salt);
    return e;
  };
  auto train_seed = [seed](TrainOptions t, std::string_view salt) {
    t.seed = derive_seed(seed, salt);
    return t;
  };
  ModelBundle b;
  b.corpus = corpus;

  b.classifier = ClassifierModel(Vocabulary::from_dataset(classifier_train, config.vocabulary_limit),
                                 with_seed(config.classifier_encoder, "classifier"),
                                 classifier_train.num_classes);
  b.classifier_trace = train_classifier(b.classifier, classifier_train,
                                        train_seed(config.classifier_training, "classifier-train"));

  const Vocabulary defense_vocab = Vocabulary::from_dataset(defense_train, config.vocabulary_limit);
  b.discriminator = DiscriminatorModel(defense_vocab, with_seed(config.discriminator_encoder, "discriminator"));
  b.discriminator_trace =
      train_discriminator(b.discriminator, defense_train, *corpus,
                          train_seed(config.discriminator_training, "discriminator-train"));

  b.estimator = EstimatorModel(defense_vocab, with_seed(config.estimator_encoder, "estimator"),
                               corpus->dim(), config.window);
  b.estimator_trace = train_estimator(b.estimator, defense_train, *corpus,
                                      train_seed(config.estimator_training, "estimator-train"));

  HnswParams ip = config.index;
  ip.seed = derive_seed(seed, "index");
  b.index = std::make_shared<const HnswIndex>(HnswIndex::build(corpus, ip));
  return b;
}

void summarize(EvalReport& report) {
  struct Acc {
    std::size_t n = 0, clean = 0, attacked = 0, defended = 0, truth = 0;
    std::vector<PerturbationSet> flagged;
    std::vector<std::vector<PerturbationRecord>> records;
  };
  std::map<AttackKind, Acc> acc;
  Acc all;
  for (const auto& e : report.log) {
    for (Acc* a : {&acc[e.kind], &all}) {
      ++a->n;
      a->clean += e.clean_prediction == e.label;
      a->attacked += e.attacked_prediction == e.label;
      a->defended += e.defended_prediction == e.label;
      a->truth += e.ground_truth_prediction == e.label;
      a->flagged.push_back({e.flagged});
      a->records.push_back(e.records);
    }
  }
  auto finish = [](const Acc& a) {
    KindSummary s;
    s.documents = a.n;
    if (a.n == 0) return s;
    const double n = static_cast<double>(a.n);
    s.attack_free_accuracy = static_cast<double>(a.clean) / n;
    s.attacked_accuracy = static_cast<double>(a.attacked) / n;
    s.defended_accuracy = static_cast<double>(a.defended) / n;
    s.ground_truth_accuracy = static_cast<double>(a.truth) / n;
    s.detection = eval_discriminator(a.flagged, a.records).overall;
    return s;
  };
  report.per_kind.clear();
  for (const auto& [kind, a] : acc) report.per_kind[kind] = finish(a);
  report.overall = finish(all);
}

EvalReport run_defense_eval(const SyntheticTask& task, const ModelBundle& models,
                            const EvalOptions& options) {
  if (task.corpus && task.corpus->content_hash() != models.corpus->content_hash()) {
    throw VocabularyMismatchError("task corpus differs from the corpus the models were built on");
  }
  const auto docs = eval_documents(task, options);
  const auto& corpus = *models.corpus;

  std::vector<int> clean(docs.size());
  parallel_for(docs.size(), options.threads,
               [&](std::size_t i) { clean[i] = predict(models.classifier, docs[i]).label; });

  EvalReport report;
  report.task_id = task.id;
  report.defense_task_id = task.id;
  report.seed = options.seed;
  report.num_attacks = options.num_attacks;
  report.candidates = options.candidates;

  for (AttackKind kind : options.kinds) {
    AttackConfig cfg{kind, options.num_attacks, attack_seed(options.seed, kind, options.num_attacks), 10};
    const auto attacks = oracle_attacks(docs, models, cfg, options, task.id);
    std::vector<DocumentLogEntry> entries(docs.size());
    parallel_for(docs.size(), options.threads, [&](std::size_t i) {
      const auto& adv = attacks[i].adversarial;
      DocumentLogEntry& e = entries[i];
      e.doc_id = docs[i].id;
      e.kind = kind;
      e.label = docs[i].label;
      e.clean_prediction = clean[i];
      e.flipped = attacks[i].flipped;
      e.candidate = attacks[i].candidate_index;
      e.records = adv.records;
      e.attacked_prediction = predict(models.classifier, adv.document).label;

      const auto flagged = discriminate(models.discriminator, adv.document).flagged;
      e.flagged = flagged.positions;
      const auto recovered =
          recover(adv.document, flagged, models.estimator, *models.index, options.ef_search);
      e.recovered_text = recovered.recovered.text();
      e.defended_prediction = predict(models.classifier, recovered.recovered).label;

      // Ground-truth flags and the original tokens' own corpus vectors.
      PerturbationSet truth_flags;
      for (const auto& r : adv.records) truth_flags.positions.push_back(r.position);
      const EmbeddingSource source = [&](const Document& d, std::size_t p) {
        for (const auto& r : adv.records) {
          if (r.position != p) continue;
          if (const auto row = corpus.lookup(r.original.str())) {
            const auto v = corpus.vector(*row);
            return std::vector<float>(v.begin(), v.end());
          }
        }
        return estimate(models.estimator, d, p).vector;
      };
      const auto ideal = recover_with(adv.document, truth_flags, source, *models.index, options.ef_search);
      e.ground_truth_prediction = predict(models.classifier, ideal.recovered).label;
    });
    for (auto& e : entries) report.log.push_back(std::move(e));
  }
  summarize(report);
  report.metadata["classifier_fingerprint"] = hex(model_fingerprint(models.classifier));
  report.metadata["corpus_hash"] = hex(corpus.content_hash());
  report.metadata["test_documents_hash"] = hex(hash_documents(docs));
  return report;
}

SweepTable run_sweep(const SyntheticTask& task, const ModelBundle& models, std::size_t max_attacks,
                     const EvalOptions& options) {
  if (max_attacks == 0) throw DataError("sweep needs max_attacks >= 1");
  SweepTable table;
  table.task_id = task.id;
  std::map<std::pair<AttackKind, std::size_t>, SweepPoint> points;
  for (std::size_t n = 1; n <= max_attacks; ++n) {
    EvalOptions o = options;
    o.num_attacks = n;
    const auto report = run_defense_eval(task, models, o);
    table.attack_free_accuracy = report.overall.attack_free_accuracy;
    for (const auto& [kind, s] : report.per_kind) {
      points[{kind, n}] = {kind, n, s.attacked_accuracy, s.defended_accuracy};
    }
  }
  for (AttackKind kind : options.kinds) {
    for (std::size_t n = 1; n <= max_attacks; ++n) table.points.push_back(points.at({kind, n}));
  }
  return table;
}

EvalReport run_transfer_eval(const SyntheticTask& train_task, const SyntheticTask& defend_task,
                             const PipelineConfig& config, std::uint64_t model_seed,
                             const EvalOptions& options) {
  if (!train_task.corpus || !defend_task.corpus ||
      train_task.corpus->content_hash() != defend_task.corpus->content_hash()) {
    throw VocabularyMismatchError("transfer tasks " + train_task.id + " and " + defend_task.id +
                                  " do not share an embedding corpus");
  }
  const auto models =
      train_models(train_task.train, defend_task.train, defend_task.corpus, config, model_seed);
  auto report = run_defense_eval(defend_task, models, options);
  report.defense_task_id = train_task.id;
  return report;
}

std::string report_to_json(const EvalReport& report) {
  json per_kind = json::object();
  for (const auto& [kind, s] : report.per_kind) per_kind[std::string(to_string(kind))] = summary_to_json(s);
  json log = json::array();
  for (const auto& e : report.log) {
    log.push_back({{"doc_id", e.doc_id},
                   {"kind", std::string(to_string(e.kind))},
                   {"label", e.label},
                   {"clean_prediction", e.clean_prediction},
                   {"attacked_prediction", e.attacked_prediction},
                   {"defended_prediction", e.defended_prediction},
                   {"ground_truth_prediction", e.ground_truth_prediction},
                   {"flipped", e.flipped},
                   {"candidate", e.candidate},
                   {"records", records_to_json(e.records)},
                   {"flagged", e.flagged},
                   {"recovered_text", e.recovered_text}});
  }
  json j = {{"schema_version", EvalReport::kSchemaVersion},
            {"task_id", report.task_id},
            {"defense_task_id", report.defense_task_id},
            {"seed", report.seed},
            {"num_attacks", report.num_attacks},
            {"candidates", report.candidates},
            {"per_kind", per_kind},
            {"overall", summary_to_json(report.overall)},
            {"metadata", report.metadata},
            {"log", log}};
  return j.dump(2) + "\n";
}

std::string sweep_to_json(const SweepTable& table) {
  json points = json::array();
  for (const auto& p : table.points) {
    points.push_back({{"kind", std::string(to_string(p.kind))},
                      {"num_attacks", p.num_attacks},
                      {"attacked_accuracy", p.attacked_accuracy},
                      {"defended_accuracy", p.defended_accuracy}});
  }
  json j = {{"schema_version", EvalReport::kSchemaVersion},
            {"task_id", table.task_id},
            {"attack_free_accuracy", table.attack_free_accuracy},
            {"points", points}};
  return j.dump(2) + "\n";
}

std::string report_to_csv(const EvalReport& report) {
  std::ostringstream out;
  out.precision(6);
  out << "kind,documents,attack_free_accuracy,attacked_accuracy,defended_accuracy,"
         "ground_truth_accuracy,precision,recall,f1\n";
  auto row = [&](std::string_view name, const KindSummary& s) {
    out << name << ',' << s.documents << ',' << s.attack_free_accuracy << ',' << s.attacked_accuracy
        << ',' << s.defended_accuracy << ',' << s.ground_truth_accuracy << ',' << s.detection.precision
        << ',' << s.detection.recall << ',' << s.detection.f1 << '\n';
  };
  for (const auto& [kind, s] : report.per_kind) row(to_string(kind), s);
  row("overall", report.overall);
  return out.str();
}

std::uint64_t model_fingerprint(const ClassifierModel& model) {
  std::uint64_t h = fnv1a64("");
  for (const auto* p : model.parameters()) {
    h = fnv1a64(p->name, h);
    h = fnv1a64({reinterpret_cast<const char*>(p->value.data()), p->value.size() * sizeof(float)}, h);
  }
  for (const auto& t : model.vocab().regular_tokens()) h = fnv1a64(t, h);
  return h;
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  for (std::size_t t = 0; t < threads; ++t) {
    workers.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace disp

#include "disp/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace disp {
namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// Reads keys from one JSON object and rejects any it was not asked about.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }
  ~ObjectReader() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError("unknown key " + path_ + "." + key);
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_unsigned_v<T>) {
        if (!it->is_number_unsigned()) throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw ConfigError("");
      }
      out = it->get<T>();
    } catch (const std::exception&) {
      throw ConfigError(path_ + "." + key + " has the wrong type");
    }
  }

  void get_path(const char* key, std::filesystem::path& out) {
    std::string s = out.string();
    get(key, s);
    out = s;
  }

  const json* child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  std::string child_path(const char* key) const { return path_ + "." + key; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_encoder(const json& j, const std::string& path, EncoderConfig& e) {
  ObjectReader r(j, path);
  r.get("d", e.d);
  r.get("num_heads", e.num_heads);
  r.get("num_layers", e.num_layers);
  r.get("max_seq_len", e.max_seq_len);
  r.get("ffn_multiplier", e.ffn_multiplier);
  r.get("dropout", e.dropout);
}

void read_training(const json& j, const std::string& path, TrainOptions& t) {
  ObjectReader r(j, path);
  r.get("epochs", t.epochs);
  r.get("batch_size", t.batch_size);
  r.get("learning_rate", t.optimizer.learning_rate);
  r.get("beta1", t.optimizer.beta1);
  r.get("beta2", t.optimizer.beta2);
  r.get("epsilon", t.optimizer.epsilon);
  r.get("clip_norm", t.optimizer.clip_norm);
  r.get("max_examples_per_epoch", t.max_examples_per_epoch);
}

void read_model(ObjectReader& parent, const char* key, EncoderConfig& e, TrainOptions& t,
                std::size_t* window = nullptr) {
  const json* j = parent.child(key);
  if (!j) return;
  ObjectReader r(*j, parent.child_path(key));
  if (const json* enc = r.child("encoder")) read_encoder(*enc, r.child_path("encoder"), e);
  if (const json* tr = r.child("training")) read_training(*tr, r.child_path("training"), t);
  if (window) r.get("window", *window);
}

void read_task(const json& j, const std::string& path, SyntheticTaskSpec& s) {
  ObjectReader r(j, path);
  r.get("id", s.id);
  r.get("vocab_size", s.vocab_size);
  r.get("num_classes", s.num_classes);
  r.get("class_tokens", s.class_tokens);
  r.get("cue_tokens", s.cue_tokens);
  r.get("train_docs", s.train_docs);
  r.get("test_docs", s.test_docs);
  r.get("min_length", s.min_length);
  r.get("max_length", s.max_length);
  r.get("dim", s.dim);
  r.get("class_spread", s.class_spread);
  r.get("neutral_spread", s.neutral_spread);
  r.get("corpus_seed", s.corpus_seed);
  r.get("seed", s.seed);
}

ordered_json encoder_json(const EncoderConfig& e) {
  return {{"d", e.d},
          {"num_heads", e.num_heads},
          {"num_layers", e.num_layers},
          {"max_seq_len", e.max_seq_len},
          {"ffn_multiplier", e.ffn_multiplier},
          {"dropout", e.dropout}};
}

ordered_json training_json(const TrainOptions& t) {
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"learning_rate", t.optimizer.learning_rate},
          {"beta1", t.optimizer.beta1},
          {"beta2", t.optimizer.beta2},
          {"epsilon", t.optimizer.epsilon},
          {"clip_norm", t.optimizer.clip_norm},
          {"max_examples_per_epoch", t.max_examples_per_epoch}};
}

ordered_json task_json(const SyntheticTaskSpec& s) {
  return {{"id", s.id},
          {"vocab_size", s.vocab_size},
          {"num_classes", s.num_classes},
          {"class_tokens", s.class_tokens},
          {"cue_tokens", s.cue_tokens},
          {"train_docs", s.train_docs},
          {"test_docs", s.test_docs},
          {"min_length", s.min_length},
          {"max_length", s.max_length},
          {"dim", s.dim},
          {"class_spread", s.class_spread},
          {"neutral_spread", s.neutral_spread},
          {"corpus_seed", s.corpus_seed},
          {"seed", s.seed}};
}

}  // namespace

RunConfig default_run_config() {
  RunConfig c;
  EncoderConfig e;
  e.d = 32;
  e.num_heads = 4;
  e.num_layers = 1;
  e.max_seq_len = 32;
  c.pipeline.classifier_encoder = e;
  c.pipeline.discriminator_encoder = e;
  c.pipeline.estimator_encoder = e;
  c.pipeline.estimator_encoder.max_seq_len = 2 * c.pipeline.window + 1;
  TrainOptions t;
  t.epochs = 6;
  c.pipeline.classifier_training = t;
  c.pipeline.discriminator_training = t;
  c.pipeline.estimator_training = t;
  c.pipeline.estimator_training.max_examples_per_epoch = 16000;
  c.transfer_task = c.task;
  c.transfer_task.id = "synthetic-transfer";
  c.transfer_task.seed = c.task.seed + 1000;
  c.transfer_task.min_length = 12;
  c.transfer_task.max_length = 32;
  return c;
}

RunConfig parse_run_config(const std::string& json_text, const std::string& source) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source + ": " + e.what());
  }
  RunConfig c = default_run_config();
  ObjectReader r(j, "config");
  int version = 0;
  r.get("version", version);
  if (!j.contains("version")) throw ConfigError(source + ": missing version field");
  if (version != RunConfig::kVersion) {
    throw ConfigError(source + ": config version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(RunConfig::kVersion) + ")");
  }
  r.get("seed", c.seed);
  r.get("threads", c.threads);
  r.get_path("output_dir", c.output_dir);
  if (const json* t = r.child("task")) read_task(*t, "config.task", c.task);
  if (const json* t = r.child("transfer_task")) read_task(*t, "config.transfer_task", c.transfer_task);
  if (const json* f = r.child("files"); f && !f->is_null()) {
    FileTaskConfig fc;
    ObjectReader fr(*f, "config.files");
    fr.get("id", fc.id);
    fr.get_path("train", fc.train);
    fr.get_path("test", fc.test);
    fr.get_path("corpus", fc.corpus);
    fr.get("num_classes", fc.num_classes);
    c.files = fc;
  }
  read_model(r, "classifier", c.pipeline.classifier_encoder, c.pipeline.classifier_training);
  read_model(r, "discriminator", c.pipeline.discriminator_encoder, c.pipeline.discriminator_training);
  read_model(r, "estimator", c.pipeline.estimator_encoder, c.pipeline.estimator_training,
             &c.pipeline.window);
  if (const json* ix = r.child("index")) {
    ObjectReader ir(*ix, "config.index");
    ir.get("M", c.pipeline.index.M);
    ir.get("ef_construction", c.pipeline.index.ef_construction);
    ir.get("ef_search", c.eval.ef_search);
  }
  r.get("vocabulary_limit", c.pipeline.vocabulary_limit);
  if (const json* a = r.child("attack")) {
    ObjectReader ar(*a, "config.attack");
    std::vector<std::string> kinds;
    for (AttackKind k : c.eval.kinds) kinds.emplace_back(to_string(k));
    ar.get("kinds", kinds);
    c.eval.kinds.clear();
    for (const auto& k : kinds) c.eval.kinds.push_back(parse_attack_kind(k));
    ar.get("num_attacks", c.eval.num_attacks);
    ar.get("candidates", c.eval.candidates);
    ar.get("seed", c.eval.seed);
    ar.get("max_attacks", c.sweep_max_attacks);
  }
  if (const json* e = r.child("eval")) {
    ObjectReader er(*e, "config.eval");
    er.get("max_documents", c.eval.max_documents);
    er.get_path("attack_cache", c.eval.attack_cache);
  }
  c.eval.threads = c.threads;
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.string());
}

std::string run_config_to_json(const RunConfig& c) {
  std::vector<std::string> kinds;
  for (AttackKind k : c.eval.kinds) kinds.emplace_back(to_string(k));
  ordered_json j = {
      {"version", RunConfig::kVersion},
      {"seed", c.seed},
      {"threads", c.threads},
      {"output_dir", c.output_dir.string()},
      {"task", task_json(c.task)},
      {"transfer_task", task_json(c.transfer_task)},
      {"files", nullptr},
      {"classifier",
       {{"encoder", encoder_json(c.pipeline.classifier_encoder)},
        {"training", training_json(c.pipeline.classifier_training)}}},
      {"discriminator",
       {{"encoder", encoder_json(c.pipeline.discriminator_encoder)},
        {"training", training_json(c.pipeline.discriminator_training)}}},
      {"estimator",
       {{"encoder", encoder_json(c.pipeline.estimator_encoder)},
        {"training", training_json(c.pipeline.estimator_training)},
        {"window", c.pipeline.window}}},
      {"index",
       {{"M", c.pipeline.index.M},
        {"ef_construction", c.pipeline.index.ef_construction},
        {"ef_search", c.eval.ef_search}}},
      {"vocabulary_limit", c.pipeline.vocabulary_limit},
      {"attack",
       {{"kinds", kinds},
        {"num_attacks", c.eval.num_attacks},
        {"candidates", c.eval.candidates},
        {"seed", c.eval.seed},
        {"max_attacks", c.sweep_max_attacks}}},
      {"eval", {{"max_documents", c.eval.max_documents}, {"attack_cache", c.eval.attack_cache.string()}}}};
  if (c.files) {
    j["files"] = {{"id", c.files->id},
                  {"train", c.files->train.string()},
                  {"test", c.files->test.string()},
                  {"corpus", c.files->corpus.string()},
                  {"num_classes", c.files->num_classes}};
  }
  return j.dump(2) + "\n";
}

SyntheticTask load_task(const RunConfig& config) {
  if (!config.files) return generate_synthetic_task(config.task);
  const auto& f = *config.files;
  SyntheticTask task;
  task.id = f.id;
  task.train = load_dataset(f.train, f.num_classes, Split::Train);
  task.test = load_dataset(f.test, f.num_classes, Split::Test);
  task.corpus = std::make_shared<const EmbeddingCorpus>(load_embedding_corpus(f.corpus));
  return task;
}

}  // namespace disp

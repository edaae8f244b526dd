#include <cstdio>
#include <fstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "disp/attack.hpp"
#include "disp/classifier.hpp"
#include "disp/config.hpp"
#include "disp/discriminator.hpp"
#include "disp/estimator.hpp"
#include "disp/eval.hpp"
#include "disp/knn_index.hpp"
#include "disp/recovery.hpp"
#include "disp/verification.hpp"
#include "manifest.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace disp::cli {
namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct Common {
  std::string config_path;
  std::size_t threads = 1;
};

RunConfig base_config(const Common& common) {
  return common.config_path.empty() ? default_run_config() : load_run_config(common.config_path);
}

std::vector<fs::path> config_inputs(const Common& common) {
  if (common.config_path.empty()) return {};
  return {common.config_path};
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

ordered_json train_json(const TrainOptions& t) {
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"learning_rate", t.optimizer.learning_rate},
          {"clip_norm", t.optimizer.clip_norm},
          {"max_examples_per_epoch", t.max_examples_per_epoch},
          {"seed", t.seed}};
}

ordered_json encoder_json(const EncoderConfig& e) {
  return {{"d", e.d},
          {"num_heads", e.num_heads},
          {"num_layers", e.num_layers},
          {"max_seq_len", e.max_seq_len},
          {"ffn_multiplier", e.ffn_multiplier},
          {"dropout", e.dropout},
          {"seed", e.seed}};
}

void print_epoch(const char* what, std::size_t epoch, double loss) {
  std::fprintf(stderr, "%s epoch %zu loss %.6f\n", what, epoch, loss);
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Adversarial text defense: attack, detect, estimate and recover"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("disp ") + DISP_VERSION);
  Common common;
  app.add_option("--config", common.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--threads", common.threads, "worker threads for document-parallel stages")
      ->check(CLI::PositiveNumber);

  // gen-task
  auto* gen = app.add_subcommand("gen-task", "write a synthetic task: train.tsv, test.tsv, corpus.vec");
  std::string gen_out;
  std::uint64_t gen_seed = 0, gen_corpus_seed = 0;
  gen->add_option("--out-dir", gen_out, "output directory")->required();
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "document seed");
  auto* gen_cseed_opt = gen->add_option("--corpus-seed", gen_corpus_seed, "corpus seed");
  bool gen_transfer = false;
  gen->add_flag("--transfer", gen_transfer, "write the configured transfer task instead");

  // train-classifier
  auto* tc = app.add_subcommand("train-classifier", "train the protected classifier on clean data");
  std::string tc_dataset, tc_out;
  int num_classes = 2;
  std::size_t epochs = 0;
  std::uint64_t seed = 0;
  tc->add_option("--dataset", tc_dataset, "train TSV")->required()->check(CLI::ExistingFile);
  tc->add_option("--out", tc_out, "checkpoint path")->required();
  tc->add_option("--num-classes", num_classes, "number of classes")->check(CLI::Range(2, 1 << 20));
  auto* tc_epochs = tc->add_option("--epochs", epochs, "training epochs");
  auto* tc_seed = tc->add_option("--seed", seed, "model seed");

  // train-discriminator
  auto* td = app.add_subcommand("train-discriminator", "train the perturbation discriminator");
  std::string td_dataset, td_corpus, td_out;
  td->add_option("--dataset", td_dataset, "train TSV")->required()->check(CLI::ExistingFile);
  td->add_option("--corpus", td_corpus, "embedding corpus (.vec)")->required()->check(CLI::ExistingFile);
  td->add_option("--out", td_out, "checkpoint path")->required();
  td->add_option("--num-classes", num_classes, "number of classes");
  auto* td_epochs = td->add_option("--epochs", epochs, "training epochs");
  auto* td_seed = td->add_option("--seed", seed, "model seed");

  // train-estimator
  auto* te = app.add_subcommand("train-estimator", "train the masked-context embedding estimator");
  std::string te_dataset, te_corpus, te_out;
  std::size_t window = 2;
  te->add_option("--dataset", te_dataset, "train TSV")->required()->check(CLI::ExistingFile);
  te->add_option("--corpus", te_corpus, "embedding corpus (.vec)")->required()->check(CLI::ExistingFile);
  te->add_option("--out", te_out, "checkpoint path")->required();
  te->add_option("--num-classes", num_classes, "number of classes");
  auto* te_w = te->add_option("--w", window, "half window size");
  auto* te_epochs = te->add_option("--epochs", epochs, "training epochs");
  auto* te_seed = te->add_option("--seed", seed, "model seed");

  // build-index
  auto* bi = app.add_subcommand("build-index", "build the small-world graph over a corpus");
  std::string bi_corpus, bi_out;
  HnswParams hp;
  bi->add_option("--corpus", bi_corpus, "embedding corpus (.vec)")->required()->check(CLI::ExistingFile);
  bi->add_option("--out", bi_out, "index path")->required();
  bi->add_option("--M", hp.M, "max degree per upper layer")->check(CLI::Range(2, 1 << 16));
  bi->add_option("--ef-construction", hp.ef_construction, "construction beam width")->check(CLI::PositiveNumber);
  bi->add_option("--seed", hp.seed, "level assignment seed");

  // attack
  auto* at = app.add_subcommand("attack", "perturb a dataset; oracle mode when --classifier is given");
  std::string at_kind, at_corpus, at_dataset, at_out, at_classifier;
  std::size_t at_num = 1, at_candidates = 50, at_top_k = 10;
  std::uint64_t at_seed = 1;
  at->add_option("--kind", at_kind, "insertion|deletion|swap|random|embed")->required();
  at->add_option("--num", at_num, "attacks per document");
  at->add_option("--seed", at_seed, "attack seed");
  at->add_option("--corpus", at_corpus, "embedding corpus (.vec)")->required()->check(CLI::ExistingFile);
  at->add_option("--dataset", at_dataset, "input TSV")->required()->check(CLI::ExistingFile);
  at->add_option("--out", at_out, "perturbed TSV; records go to <out>.records.json")->required();
  at->add_option("--num-classes", num_classes, "number of classes");
  at->add_option("--classifier", at_classifier, "classifier checkpoint for oracle attacks")
      ->check(CLI::ExistingFile);
  at->add_option("--candidates", at_candidates, "oracle candidates per document")->check(CLI::PositiveNumber);
  at->add_option("--embed-top-k", at_top_k, "neighbors considered by embed attacks")->check(CLI::PositiveNumber);

  // defend
  auto* df = app.add_subcommand("defend", "detect and recover perturbed tokens");
  std::string df_in, df_disc, df_est, df_index, df_corpus, df_out, df_report;
  std::size_t ef_search = 64;
  df->add_option("--in", df_in, "perturbed TSV")->required()->check(CLI::ExistingFile);
  df->add_option("--disc", df_disc, "discriminator checkpoint")->required()->check(CLI::ExistingFile);
  df->add_option("--est", df_est, "estimator checkpoint")->required()->check(CLI::ExistingFile);
  df->add_option("--index", df_index, "index file")->required()->check(CLI::ExistingFile);
  df->add_option("--corpus", df_corpus, "embedding corpus (.vec)")->required()->check(CLI::ExistingFile);
  df->add_option("--out", df_out, "recovered TSV")->required();
  df->add_option("--report", df_report, "per-document recovery report (JSON)");
  df->add_option("--num-classes", num_classes, "number of classes");
  df->add_option("--ef-search", ef_search, "query beam width")->check(CLI::PositiveNumber);

  // eval / sweep / transfer
  auto* ev = app.add_subcommand("eval", "train every model on a task and run the defense evaluation");
  std::string ev_task = "synthetic", ev_out, ev_csv, ev_models;
  ev->add_option("--task", ev_task, "synthetic|files")->check(CLI::IsMember({"synthetic", "files"}));
  ev->add_option("--out", ev_out, "report JSON")->required();
  ev->add_option("--csv", ev_csv, "table-style CSV");
  ev->add_option("--save-models", ev_models, "directory for the trained checkpoints and index");
  auto* ev_seed = ev->add_option("--seed", seed, "model seed");

  auto* sw = app.add_subcommand("sweep", "accuracy over 1..max attacks per kind");
  std::string sw_out;
  sw->add_option("--out", sw_out, "sweep JSON")->required();
  auto* sw_seed = sw->add_option("--seed", seed, "model seed");

  auto* tr = app.add_subcommand("transfer", "defend one task with models trained on another");
  std::string tr_out;
  tr->add_option("--out", tr_out, "report JSON")->required();
  auto* tr_seed = tr->add_option("--seed", seed, "model seed");

  // grad-check
  auto* gc = app.add_subcommand("grad-check", "finite-difference check of every model's gradients");
  GradCheckOptions gco;
  std::uint64_t gc_seed = 1;
  gc->add_option("--seed", gc_seed, "parameter seed");
  gc->add_option("--coordinates", gco.coordinates, "sampled coordinates per model")->check(CLI::PositiveNumber);
  gc->add_option("--tolerance", gco.tolerance, "maximum relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  RunConfig cfg = base_config(common);
  if (app.get_option("--threads")->count()) cfg.threads = common.threads;
  cfg.eval.threads = cfg.threads;
  const auto cfg_inputs = config_inputs(common);
  auto override_seed = [&](CLI::Option* opt) {
    if (opt->count()) cfg.seed = seed;
  };

  if (gen->parsed()) {
    SyntheticTaskSpec spec = gen_transfer ? cfg.transfer_task : cfg.task;
    if (gen_seed_opt->count()) spec.seed = gen_seed;
    if (gen_cseed_opt->count()) spec.corpus_seed = gen_corpus_seed;
    const auto task = generate_synthetic_task(spec);
    const fs::path dir = gen_out;
    fs::create_directories(dir);
    save_dataset(task.train, dir / "train.tsv");
    save_dataset(task.test, dir / "test.tsv");
    save_embedding_corpus(*task.corpus, dir / "corpus.vec");
    RunConfig eff = cfg;
    eff.task = spec;
    write_manifest({"gen-task", run_config_to_json(eff), cfg_inputs,
                    {dir, dir / "train.tsv", dir / "test.tsv", dir / "corpus.vec"}});
    return 0;
  }

  if (tc->parsed()) {
    override_seed(tc_seed);
    TrainOptions t = cfg.pipeline.classifier_training;
    if (tc_epochs->count()) t.epochs = epochs;
    t.seed = derive_seed(cfg.seed, "classifier-train");
    EncoderConfig e = cfg.pipeline.classifier_encoder;
    e.seed = derive_seed(cfg.seed, "classifier");
    const Dataset ds = load_dataset(tc_dataset, num_classes, Split::Train);
    ClassifierModel model(Vocabulary::from_dataset(ds, cfg.pipeline.vocabulary_limit), e, num_classes);
    const auto result = train_classifier(model, ds, t, [](std::size_t ep, double l) { print_epoch("classifier", ep, l); });
    model.save(tc_out);
    std::printf("train accuracy %.4f\n", accuracy(model, ds));
    ordered_json eff = {{"encoder", encoder_json(model.encoder().config())}, {"training", train_json(t)},
                        {"num_classes", num_classes}, {"steps", result.steps}};
    auto inputs = cfg_inputs;
    inputs.push_back(tc_dataset);
    write_manifest({"train-classifier", eff.dump(), inputs, {tc_out}});
    return 0;
  }

  if (td->parsed()) {
    override_seed(td_seed);
    TrainOptions t = cfg.pipeline.discriminator_training;
    if (td_epochs->count()) t.epochs = epochs;
    t.seed = derive_seed(cfg.seed, "discriminator-train");
    EncoderConfig e = cfg.pipeline.discriminator_encoder;
    e.seed = derive_seed(cfg.seed, "discriminator");
    const Dataset ds = load_dataset(td_dataset, num_classes, Split::Train);
    const auto corpus = load_embedding_corpus(td_corpus);
    DiscriminatorModel model(Vocabulary::from_dataset(ds, cfg.pipeline.vocabulary_limit), e);
    const auto result = train_discriminator(model, ds, corpus, t,
                                            [](std::size_t ep, double l) { print_epoch("discriminator", ep, l); });
    model.save(td_out);
    ordered_json eff = {{"encoder", encoder_json(model.encoder().config())}, {"training", train_json(t)},
                        {"steps", result.steps}};
    auto inputs = cfg_inputs;
    inputs.insert(inputs.end(), {td_dataset, td_corpus});
    write_manifest({"train-discriminator", eff.dump(), inputs, {td_out}});
    return 0;
  }

  if (te->parsed()) {
    override_seed(te_seed);
    TrainOptions t = cfg.pipeline.estimator_training;
    if (te_epochs->count()) t.epochs = epochs;
    t.seed = derive_seed(cfg.seed, "estimator-train");
    EncoderConfig e = cfg.pipeline.estimator_encoder;
    e.seed = derive_seed(cfg.seed, "estimator");
    std::size_t w = cfg.pipeline.window;
    if (te_w->count()) {
      w = window;
      e.max_seq_len = std::max(e.max_seq_len, 2 * w + 1);
    }
    const Dataset ds = load_dataset(te_dataset, num_classes, Split::Train);
    const auto corpus = load_embedding_corpus(te_corpus);
    EstimatorModel model(Vocabulary::from_dataset(ds, cfg.pipeline.vocabulary_limit), e, corpus.dim(), w);
    const auto result = train_estimator(model, ds, corpus, t,
                                        [](std::size_t ep, double l) { print_epoch("estimator", ep, l); });
    model.save(te_out);
    auto windows = enumerate_windows(ds.documents, model.vocab(), corpus, w);
    if (windows.size() > 4000) windows.resize(4000);
    const auto err = evaluate_estimator(model, windows);
    std::printf("final loss %.6f rmse %.6f over %zu windows\n",
                result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back(), err.rmse, err.windows);
    ordered_json eff = {{"encoder", encoder_json(model.encoder().config())}, {"training", train_json(t)},
                        {"window", w}, {"steps", result.steps}, {"rmse", err.rmse}};
    auto inputs = cfg_inputs;
    inputs.insert(inputs.end(), {te_dataset, te_corpus});
    write_manifest({"train-estimator", eff.dump(), inputs, {te_out}});
    return 0;
  }

  if (bi->parsed()) {
    auto corpus = std::make_shared<const EmbeddingCorpus>(load_embedding_corpus(bi_corpus));
    const auto index = HnswIndex::build(corpus, hp);
    index.save(bi_out);
    ordered_json eff = {{"M", hp.M}, {"ef_construction", hp.ef_construction}, {"seed", hp.seed}};
    write_manifest({"build-index", eff.dump(), {bi_corpus}, {bi_out}});
    return 0;
  }

  if (at->parsed()) {
    const AttackKind kind = parse_attack_kind(at_kind);
    const Dataset ds = load_dataset(at_dataset, num_classes, Split::Test);
    const auto corpus = load_embedding_corpus(at_corpus);
    const AttackConfig acfg{kind, at_num, at_seed, at_top_k};
    std::optional<ClassifierModel> classifier;
    if (!at_classifier.empty()) classifier = ClassifierModel::load(at_classifier);

    Dataset out = ds;
    std::vector<std::vector<PerturbationRecord>> records(ds.size());
    std::vector<std::uint8_t> skipped(ds.size(), 0);
    parallel_for(ds.size(), cfg.threads, [&](std::size_t i) {
      try {
        PerturbedDocument p = classifier
                                  ? oracle_attack(ds.documents[i], *classifier, acfg, corpus, at_candidates).adversarial
                                  : perturb_document(ds.documents[i], acfg, corpus);
        out.documents[i] = std::move(p.document);
        records[i] = std::move(p.records);
      } catch (const NotEnoughAttackableTokensError&) {
        skipped[i] = 1;
      }
    });
    const auto n_skipped = std::count(skipped.begin(), skipped.end(), 1);
    if (n_skipped) std::fprintf(stderr, "%td documents left unchanged: too few attackable tokens\n", n_skipped);
    save_dataset(out, at_out);
    nlohmann::json rec = nlohmann::json::array();
    for (std::size_t i = 0; i < ds.size(); ++i) {
      for (const auto& r : records[i]) {
        rec.push_back({{"doc_id", ds.documents[i].id},
                       {"position", r.position},
                       {"kind", std::string(to_string(r.kind))},
                       {"original", r.original.str()},
                       {"replacement", r.replacement.str()}});
      }
    }
    const std::string records_path = at_out + ".records.json";
    write_text(records_path, rec.dump(2) + "\n");
    ordered_json eff = {{"kind", std::string(to_string(kind))}, {"num", at_num}, {"seed", at_seed},
                        {"embed_top_k", at_top_k}, {"oracle", classifier.has_value()},
                        {"candidates", at_candidates}};
    std::vector<fs::path> inputs{at_dataset, at_corpus};
    if (classifier) inputs.push_back(at_classifier);
    write_manifest({"attack", eff.dump(), inputs, {at_out, records_path}});
    return 0;
  }

  if (df->parsed()) {
    const Dataset ds = load_dataset(df_in, num_classes, Split::Test);
    auto corpus = std::make_shared<const EmbeddingCorpus>(load_embedding_corpus(df_corpus));
    const auto disc = DiscriminatorModel::load(df_disc);
    const auto est = EstimatorModel::load(df_est);
    const auto index = HnswIndex::load(df_index, corpus);
    std::vector<RecoveryReport> reports(ds.size());
    parallel_for(ds.size(), cfg.threads,
                 [&](std::size_t i) { reports[i] = defend(ds.documents[i], disc, est, index, ef_search); });
    Dataset out = ds;
    nlohmann::json rep = nlohmann::json::array();
    for (std::size_t i = 0; i < ds.size(); ++i) {
      out.documents[i] = reports[i].recovered;
      nlohmann::json entries = nlohmann::json::array();
      for (const auto& e : reports[i].entries) {
        entries.push_back({{"position", e.position},
                           {"flagged", e.flagged},
                           {"original", e.original.str()},
                           {"recovered", e.recovered.str()},
                           {"distance", e.distance}});
      }
      rep.push_back({{"doc_id", ds.documents[i].id}, {"entries", entries}});
    }
    save_dataset(out, df_out);
    std::vector<fs::path> outputs{df_out};
    if (!df_report.empty()) {
      write_text(df_report, rep.dump(2) + "\n");
      outputs.push_back(df_report);
    }
    ordered_json eff = {{"ef_search", ef_search}, {"num_classes", num_classes}};
    write_manifest({"defend", eff.dump(), {df_in, df_disc, df_est, df_index, df_corpus}, outputs});
    return 0;
  }

  if (ev->parsed() || sw->parsed() || tr->parsed()) {
    if (ev->parsed()) override_seed(ev_seed);
    if (sw->parsed()) override_seed(sw_seed);
    if (tr->parsed()) override_seed(tr_seed);
    if (ev->parsed() && ev_task == "files" && !cfg.files) {
      throw DataError("--task files needs a \"files\" block in the config");
    }
    if (ev->parsed() && ev_task == "synthetic") cfg.files.reset();
    const auto task = load_task(cfg);
    std::vector<fs::path> inputs = cfg_inputs;
    if (cfg.files) inputs.insert(inputs.end(), {cfg.files->train, cfg.files->test, cfg.files->corpus});

    if (tr->parsed()) {
      const auto source = generate_synthetic_task(cfg.transfer_task);
      const auto report = run_transfer_eval(source, task, cfg.pipeline, cfg.seed, cfg.eval);
      write_text(tr_out, report_to_json(report));
      write_manifest({"transfer", run_config_to_json(cfg), inputs, {tr_out}});
      return 0;
    }
    const auto models = train_models(task.train, task.train, task.corpus, cfg.pipeline, cfg.seed);
    if (sw->parsed()) {
      const auto table = run_sweep(task, models, cfg.sweep_max_attacks, cfg.eval);
      write_text(sw_out, sweep_to_json(table));
      write_manifest({"sweep", run_config_to_json(cfg), inputs, {sw_out}});
      return 0;
    }
    const auto report = run_defense_eval(task, models, cfg.eval);
    write_text(ev_out, report_to_json(report));
    std::vector<fs::path> outputs{ev_out};
    if (!ev_csv.empty()) {
      write_text(ev_csv, report_to_csv(report));
      outputs.push_back(ev_csv);
    }
    if (!ev_models.empty()) {
      const fs::path dir = ev_models;
      fs::create_directories(dir);
      models.classifier.save(dir / "classifier.ckpt");
      models.discriminator.save(dir / "discriminator.ckpt");
      models.estimator.save(dir / "estimator.ckpt");
      models.index->save(dir / "index.hnsw");
      for (const char* f : {"classifier.ckpt", "discriminator.ckpt", "estimator.ckpt", "index.hnsw"}) {
        outputs.push_back(dir / f);
      }
    }
    std::fputs(report_to_csv(report).c_str(), stdout);
    write_manifest({"eval", run_config_to_json(cfg), inputs, outputs});
    return 0;
  }

  if (gc->parsed()) {
    gco.seed = gc_seed;
    bool ok = true;
    for (const auto& r : grad_check_models(gco, gc_seed)) {
      std::printf("%-14s max_rel_err %.3e over %zu coordinates (worst %s[%zu]) %s\n", r.model.c_str(),
                  r.report.max_relative_error, r.report.coordinates_checked, r.report.worst_parameter.c_str(),
                  r.report.worst_index, r.report.passed ? "pass" : "FAIL");
      ok = ok && r.report.passed;
    }
    return ok ? 0 : kExitNumeric;
  }
  return kExitUsage;
}

}  // namespace disp::cli

int main(int argc, char** argv) {
  try {
    return disp::cli::run(argc, argv);
  } catch (const disp::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return disp::cli::kExitNumeric;
  } catch (const disp::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return disp::cli::kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return disp::cli::kExitData;
  }
}

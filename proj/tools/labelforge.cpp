// Command-line front end. Subcommands are composable pipeline stages:
// synth -> curate -> train / pretrain -> label -> evaluate, with run-all
// executing the whole grid and compare testing two run reports against
// each other.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "labelforge/checkpoint.hpp"
#include "labelforge/errors.hpp"
#include "labelforge/experiment.hpp"

namespace fs = std::filesystem;
using labelforge::Dataset;
using labelforge::ExperimentConfig;
using labelforge::RngStream;

namespace {

// id -> absolute image path, recovered from a manifest's path column so
// derived manifests can reference the same files from anywhere.
std::map<std::string, std::string> manifest_paths(const std::string& manifest) {
  std::ifstream in(manifest);
  if (!in)
    throw labelforge::IoError("cannot open manifest '" + manifest + "'");
  const fs::path dir = fs::absolute(fs::path(manifest)).parent_path();
  std::map<std::string, std::string> out;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    if (c1 == std::string::npos) continue;
    const auto c2 = line.find(',', c1 + 1);
    const std::string id = line.substr(0, c1);
    const std::string rel = c2 == std::string::npos
                                ? line.substr(c1 + 1)
                                : line.substr(c1 + 1, c2 - c1 - 1);
    out[id] = (dir / rel).lexically_normal().string();
  }
  return out;
}

std::vector<std::string> paths_for(const Dataset& ds,
                                   const std::map<std::string, std::string>& m) {
  std::vector<std::string> out;
  out.reserve(ds.size());
  for (const labelforge::Sample& s : ds.samples) {
    auto it = m.find(s.id);
    if (it == m.end())
      throw labelforge::UsageError("no image path known for sample '" + s.id +
                                   "'");
    out.push_back(it->second);
  }
  return out;
}

Dataset open_corpus(const ExperimentConfig& cfg) {
  if (cfg.corpus.source == "synthetic")
    return labelforge::generate_synthetic_corpus(cfg.corpus.samples, cfg.seed,
                                                 cfg.corpus.synth);
  return labelforge::load_corpus(cfg.corpus.manifest_path);
}

std::pair<Dataset, Dataset> open_split(const ExperimentConfig& cfg) {
  Dataset corpus = open_corpus(cfg);
  return labelforge::split_train_eval(corpus, cfg.train_fraction,
                                      RngStream(cfg.seed).derive("split").state());
}

nlohmann::json metrics_json(const labelforge::Metrics& m,
                            const labelforge::ConfusionCounts& c) {
  return {{"accuracy", m.accuracy},
          {"precision", m.precision},
          {"recall", m.recall},
          {"f1", m.f1},
          {"degenerate",
           {{"precision", m.precision_degenerate},
            {"recall", m.recall_degenerate},
            {"f1", m.f1_degenerate}}},
          {"confusion",
           {{"t_pos", c.t_pos},
            {"t_neg", c.t_neg},
            {"f_pos", c.f_pos},
            {"f_neg", c.f_neg}}}};
}

void write_json(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw labelforge::IoError("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw labelforge::IoError("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw labelforge::FormatError("'" + path + "' is not valid JSON: " +
                                  e.what());
  }
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "labelforge: a desk-scale harness comparing supervised, pseudo-label "
      "semi-supervised, and contrastive self-supervised training"};
  app.require_subcommand(1);
  int exit_code = 0;

  // ---- synth ----------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  struct {
    std::string out;
    int samples = 625;
    int size = 32;
    std::uint64_t seed = 42;
    float separability = 0.9f;
    float tint = 0.2f;
    std::string image_format = "lfim";
  } sy;
  synth->add_option("--out", sy.out, "Corpus directory")->required();
  synth->add_option("--samples", sy.samples, "Number of images");
  synth->add_option("--size", sy.size, "Image side length");
  synth->add_option("--seed", sy.seed, "Generator seed");
  synth->add_option("--separability", sy.separability,
                    "Class separability in [0,1]");
  synth->add_option("--tint", sy.tint, "Class-independent tint strength");
  synth->add_option("--image-format", sy.image_format, "lfim or png");
  synth->callback([&] {
    labelforge::SynthParams sp;
    sp.size = sy.size;
    sp.separability = sy.separability;
    sp.tint_strength = sy.tint;
    Dataset ds = labelforge::generate_synthetic_corpus(sy.samples, sy.seed, sp);
    const std::string manifest =
        labelforge::write_corpus(ds, sy.out, sy.image_format);
    std::cout << manifest << "\n";
  });

  // ---- shared config/override plumbing --------------------------------
  struct Overrides {
    std::string config_path;
    std::uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;
    std::string corpus;
    CLI::Option* corpus_opt = nullptr;
    int epochs = 0;
    CLI::Option* epochs_opt = nullptr;
    std::string refresh;
    CLI::Option* refresh_opt = nullptr;

    ExperimentConfig resolve() const {
      ExperimentConfig cfg =
          config_path.empty() ? labelforge::default_experiment_config()
                              : labelforge::load_experiment_config(config_path);
      if (seed_opt && *seed_opt) cfg.seed = seed;
      if (corpus_opt && *corpus_opt) {
        cfg.corpus.source = "manifest";
        cfg.corpus.manifest_path = corpus;
      }
      if (epochs_opt && *epochs_opt) cfg.supervised.epochs = epochs;
      if (refresh_opt && *refresh_opt) {
        if (refresh == "per-epoch")
          cfg.semi.refresh_per_epoch = true;
        else if (refresh == "once")
          cfg.semi.refresh_per_epoch = false;
        else
          throw labelforge::ConfigError(
              "--refresh must be 'per-epoch' or 'once'");
      }
      return cfg;
    }
  };
  auto add_common = [](CLI::App* cmd, Overrides& o, bool with_corpus) {
    cmd->add_option("--config", o.config_path, "Experiment config JSON");
    o.seed_opt = cmd->add_option("--seed", o.seed, "Master seed override");
    if (with_corpus)
      o.corpus_opt = cmd->add_option(
          "--corpus", o.corpus,
          "Corpus manifest (defaults to the config's corpus source)");
  };

  // ---- curate ---------------------------------------------------------
  auto* curate = app.add_subcommand(
      "curate", "Split a corpus and emit per-training-set manifests");
  static Overrides cu;
  add_common(curate, cu, true);
  std::string cu_out = "curated";
  std::vector<std::string> cu_sets;
  double cu_fraction = 0;
  curate->add_option("--out", cu_out, "Output directory");
  auto* cu_sets_opt =
      curate->add_option("--sets,--set", cu_sets, "Training sets, e.g. TS1,TS4")
          ->delimiter(',');
  auto* cu_frac_opt = curate->add_option("--train-fraction", cu_fraction,
                                         "Training split fraction");
  curate->callback([&] {
    ExperimentConfig cfg = cu.resolve();
    if (*cu_frac_opt) cfg.train_fraction = cu_fraction;
    if (*cu_sets_opt) cfg.training_sets = cu_sets;
    labelforge::validate(cfg);
    if (cfg.corpus.source != "manifest")
      throw labelforge::ConfigError(
          "curate needs --corpus (or a manifest corpus in the config); run "
          "synth first for synthetic data");
    auto paths = manifest_paths(cfg.corpus.manifest_path);
    auto split = open_split(cfg);
    fs::create_directories(cu_out);
    labelforge::save_manifest(split.first, (fs::path(cu_out) / "train.csv").string(),
                              paths_for(split.first, paths), false);
    labelforge::save_manifest(split.second, (fs::path(cu_out) / "eval.csv").string(),
                              paths_for(split.second, paths), false);
    nlohmann::json ledgers = nlohmann::json::array();
    for (const std::string& name : cfg.training_sets) {
      const labelforge::TrainingSetSpec& spec =
          labelforge::training_set_spec(name);
      labelforge::CuratedSet cur =
          labelforge::curate_training_set(split.first, spec, cfg.seed);
      const fs::path dir = fs::path(cu_out) / name;
      fs::create_directories(dir);
      labelforge::save_manifest(cur.labeled, (dir / "labeled.csv").string(),
                                paths_for(cur.labeled, paths), false);
      labelforge::save_manifest(cur.unlabeled, (dir / "unlabeled.csv").string(),
                                paths_for(cur.unlabeled, paths), true);
      ledgers.push_back({{"set", name},
                         {"setting", setting_name(spec.setting)},
                         {"labeled_benign", cur.ledger.labeled_benign},
                         {"labeled_malignant", cur.ledger.labeled_malignant},
                         {"unlabeled_before_benign",
                          cur.ledger.unlabeled_before_benign},
                         {"unlabeled_before_malignant",
                          cur.ledger.unlabeled_before_malignant},
                         {"labeled_total", cur.ledger.labeled_total()},
                         {"unlabeled_total", cur.ledger.before_total()}});
      std::cout << name << ": " << cur.ledger.labeled_total() << " labeled, "
                << cur.ledger.before_total() << " unlabeled\n";
    }
    nlohmann::json top = {{"train", split.first.size()},
                          {"eval", split.second.size()},
                          {"sets", ledgers}};
    write_json(top, (fs::path(cu_out) / "ledger.json").string());
    std::cout << "train=" << split.first.size()
              << " eval=" << split.second.size() << " -> " << cu_out << "\n";
  });

  // ---- train ----------------------------------------------------------
  auto* train = app.add_subcommand(
      "train", "Run one grid cell: curate, label if needed, train, evaluate");
  static Overrides tr;
  add_common(train, tr, true);
  tr.epochs_opt = train->add_option("--epochs", tr.epochs,
                                    "Supervised epoch override");
  tr.refresh_opt = train->add_option(
      "--refresh", tr.refresh, "Pseudo-label refresh: per-epoch or once");
  std::string tr_set, tr_preset, tr_ckpt, tr_metrics;
  train->add_option("--set", tr_set, "Training set TS1..TS7")->required();
  train->add_option("--preset", tr_preset, "Backbone preset")->required();
  train->add_option("--out", tr_ckpt, "Checkpoint output path");
  train->add_option("--metrics-out", tr_metrics, "Metrics JSON output path");
  train->callback([&] {
    ExperimentConfig cfg = tr.resolve();
    labelforge::validate(cfg);
    auto split = open_split(cfg);
    labelforge::PreparedSet prep =
        labelforge::prepare_training_set(split.first, split.second, tr_set, cfg);
    labelforge::Model model;
    labelforge::CellResult cell =
        labelforge::run_grid_cell(prep, split.second, tr_preset, cfg, &model);
    if (!tr_ckpt.empty()) {
      labelforge::CheckpointMeta meta;
      meta.rng_state = cfg.seed;
      meta.epoch = cfg.supervised.epochs;
      meta.losses = cell.losses;
      labelforge::save_checkpoint(model, tr_ckpt, meta);
    }
    nlohmann::json j = metrics_json(cell.metrics, cell.counts);
    j["id"] = cell.id();
    j["setting"] = cell.setting;
    j["train_size"] = cell.train_size;
    j["labels"] = {{"ground_truth", cell.labels_ground_truth},
                   {"pseudo", cell.labels_pseudo},
                   {"cluster", cell.labels_cluster}};
    j["parameters"] = cell.parameters;
    j["tripwire"] = cell.tripwire;
    j["prep_tripwire"] = prep.result.prep_tripwire;
    if (!tr_ckpt.empty()) j["checkpoint"] = tr_ckpt;
    if (!tr_metrics.empty()) write_json(j, tr_metrics);
    std::cout << j.dump(2) << "\n";
  });

  // ---- pretrain -------------------------------------------------------
  auto* pretrain = app.add_subcommand(
      "pretrain", "Contrastive pretraining of an encoder on unlabeled data");
  static Overrides pt;
  add_common(pretrain, pt, true);
  std::string pt_out, pt_preset;
  int pt_epochs = 0;
  pretrain->add_option("--out", pt_out, "Encoder checkpoint path")->required();
  pretrain->add_option("--preset", pt_preset, "Encoder preset override");
  auto* pt_epochs_opt =
      pretrain->add_option("--epochs", pt_epochs, "Pretraining epoch override");
  pretrain->callback([&] {
    ExperimentConfig cfg = pt.resolve();
    if (!pt_preset.empty()) cfg.encoder_preset = pt_preset;
    if (*pt_epochs_opt) cfg.contrastive.epochs = pt_epochs;
    labelforge::validate(cfg);
    auto split = open_split(cfg);
    labelforge::CuratedSet cur = labelforge::curate_training_set(
        split.first, labelforge::training_set_spec("TS7"), cfg.seed);
    const labelforge::Tensor& first = split.first.samples.front().pixels;
    labelforge::BackbonePreset bp =
        labelforge::preset_from_name(cfg.encoder_preset);
    bp.input_h = first.dim(0);
    bp.input_w = first.dim(1);
    bp.input_c = first.dim(2);
    RngStream erng = RngStream(cfg.seed).derive("encoder").derive("TS7");
    labelforge::Model encoder =
        labelforge::build_backbone(bp, erng.derive("init").state(), true);
    labelforge::ContrastiveConfig con = cfg.contrastive;
    con.policy.target_h = first.dim(0);
    con.policy.target_w = first.dim(1);
    std::vector<double> losses = labelforge::pretrain_contrastive(
        encoder, cur.unlabeled, con, erng.derive("pretrain"));
    labelforge::CheckpointMeta meta;
    meta.rng_state = cfg.seed;
    meta.epoch = con.epochs;
    meta.losses = losses;
    labelforge::save_checkpoint(encoder, pt_out, meta);
    nlohmann::json j = {{"checkpoint", pt_out},
                        {"epochs", con.epochs},
                        {"samples", cur.unlabeled.size()},
                        {"losses", losses}};
    std::cout << j.dump(2) << "\n";
  });

  // ---- label ----------------------------------------------------------
  auto* label = app.add_subcommand(
      "label", "Assign pseudo- or cluster-labels to an unlabeled manifest");
  struct {
    std::string checkpoint, manifest, mode, probe, out;
    std::uint64_t seed = 42;
  } lb;
  label->add_option("--checkpoint", lb.checkpoint, "Model checkpoint")
      ->required();
  label->add_option("--manifest", lb.manifest, "Unlabeled manifest")
      ->required();
  label->add_option("--mode", lb.mode, "pseudo or cluster")->required();
  label->add_option("--probe", lb.probe,
                    "Labeled probe manifest (cluster mode)");
  label->add_option("--out", lb.out, "Relabeled manifest path")->required();
  label->add_option("--seed", lb.seed, "Clustering seed");
  label->callback([&] {
    labelforge::Model model = labelforge::load_checkpoint(lb.checkpoint);
    Dataset ds = labelforge::load_manifest(lb.manifest);
    Dataset relabeled;
    if (lb.mode == "pseudo") {
      relabeled = labelforge::pseudo_label(model, ds);
    } else if (lb.mode == "cluster") {
      if (lb.probe.empty())
        throw labelforge::UsageError("cluster mode needs --probe");
      Dataset probe = labelforge::load_corpus(lb.probe);
      relabeled = labelforge::cluster_label(model, ds, probe,
                                            RngStream(lb.seed).derive("cluster"));
    } else {
      throw labelforge::ConfigError("--mode must be 'pseudo' or 'cluster'");
    }
    auto paths = manifest_paths(lb.manifest);
    labelforge::save_manifest(relabeled, lb.out, paths_for(relabeled, paths),
                              true);
    nlohmann::json j = {
        {"out", lb.out},
        {"benign", relabeled.count_assigned(labelforge::kBenign)},
        {"malignant", relabeled.count_assigned(labelforge::kMalignant)}};
    std::cout << j.dump(2) << "\n";
  });

  // ---- evaluate -------------------------------------------------------
  auto* evaluate =
      app.add_subcommand("evaluate", "Metrics of a checkpoint on a manifest");
  struct {
    std::string checkpoint, manifest, out;
  } ev;
  evaluate->add_option("--checkpoint", ev.checkpoint, "Model checkpoint")
      ->required();
  evaluate->add_option("--manifest", ev.manifest, "Labeled manifest")
      ->required();
  evaluate->add_option("--out", ev.out, "Metrics JSON output path");
  evaluate->callback([&] {
    labelforge::Model model = labelforge::load_checkpoint(ev.checkpoint);
    Dataset ds = labelforge::load_corpus(ev.manifest);
    std::vector<int> preds;
    labelforge::Metrics m = labelforge::evaluate_model(model, ds, &preds);
    std::vector<int> truth(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i)
      truth[i] = *ds.audit_true_label(i);
    nlohmann::json j = metrics_json(m, labelforge::confusion(preds, truth));
    j["samples"] = ds.size();
    if (!ev.out.empty()) write_json(j, ev.out);
    std::cout << j.dump(2) << "\n";
  });

  // ---- compare --------------------------------------------------------
  auto* compare = app.add_subcommand(
      "compare", "Paired t-tests between two run reports");
  struct {
    std::string a, b, out;
  } cp;
  compare->add_option("report_a", cp.a, "First report.json")->required();
  compare->add_option("report_b", cp.b, "Second report.json")->required();
  compare->add_option("--out", cp.out, "Comparison JSON output path");
  compare->callback([&] {
    nlohmann::json j =
        labelforge::compare_reports(read_json(cp.a), read_json(cp.b));
    if (!cp.out.empty()) write_json(j, cp.out);
    std::cout << j.dump(2) << "\n";
  });

  // ---- run-all --------------------------------------------------------
  auto* runall = app.add_subcommand("run-all", "Execute the full grid");
  static Overrides ra;
  add_common(runall, ra, true);
  ra.refresh_opt = runall->add_option(
      "--refresh", ra.refresh, "Pseudo-label refresh: per-epoch or once");
  std::string ra_out;
  std::vector<std::string> ra_sets, ra_presets, ra_formats;
  auto* ra_out_opt =
      runall->add_option("--out", ra_out, "Report output directory");
  auto* ra_sets_opt =
      runall->add_option("--sets", ra_sets, "Training set selection")
          ->delimiter(',');
  auto* ra_presets_opt =
      runall->add_option("--presets", ra_presets, "Backbone preset selection")
          ->delimiter(',');
  auto* ra_formats_opt =
      runall->add_option("--format", ra_formats, "json,csv,plotdata subset")
          ->delimiter(',');
  runall->callback([&] {
    ExperimentConfig cfg = ra.resolve();
    if (*ra_out_opt) cfg.output_dir = ra_out;
    if (*ra_sets_opt) cfg.training_sets = ra_sets;
    if (*ra_presets_opt) cfg.presets = ra_presets;
    if (*ra_formats_opt) cfg.formats = ra_formats;
    labelforge::validate(cfg);
    labelforge::ExperimentReport rep = labelforge::run_experiment(cfg);
    const std::vector<std::string> files =
        labelforge::emit_report(rep, cfg.output_dir, cfg.formats);
    int failed = 0;
    for (const labelforge::CellResult& c : rep.cells) {
      if (c.ok) {
        std::printf("%-18s accuracy=%.4f recall=%.4f\n", c.id().c_str(),
                    c.metrics.accuracy, c.metrics.recall);
      } else {
        ++failed;
        std::printf("%-18s FAILED: %s\n", c.id().c_str(), c.error.c_str());
      }
    }
    std::cout << rep.cells.size() - failed << "/" << rep.cells.size()
              << " cells ok, " << files.size() << " files in " << cfg.output_dir
              << "\n";
    if (failed) exit_code = 3;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const labelforge::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return exit_code;
}

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "labelforge/contrastive.hpp"
#include "labelforge/curation.hpp"
#include "labelforge/learning.hpp"
#include "labelforge/metrics.hpp"
#include "labelforge/synth.hpp"
#include "labelforge/ttest.hpp"

namespace labelforge {

inline constexpr const char* kArtifactVersion = "0.1.0";
inline constexpr int kReportSchemaVersion = 1;

struct CorpusSpec {
  std::string source = "synthetic";  // "synthetic" | "manifest"
  std::string manifest_path;         // used when source == "manifest"
  int samples = 625;                 // synthetic corpus size before the split
  SynthParams synth;
};

// Full grid description. Every field has a default so a config file may
// specify any subset; the provenance block of the report echoes the whole
// resolved struct back, making runs self-describing.
struct ExperimentConfig {
  std::uint64_t seed = 42;
  std::string output_dir = "run";
  CorpusSpec corpus;
  double train_fraction = 0.8;
  std::vector<std::string> training_sets;  // default TS1..TS7
  std::vector<std::string> presets;  // default mini-res, mini-vgg, mini-eff
  TrainConfig supervised;
  // the residual preset is the most forgiving optimizer target, which makes
  // it the right default for the label-producing side models
  std::string teacher_preset = "mini-res";  // pseudo-label source model
  SemiConfig semi;
  std::string encoder_preset = "mini-res";  // contrastive encoder
  ContrastiveConfig contrastive;
  std::vector<std::string> formats;      // default json, csv, plotdata
  std::vector<std::string> fault_cells;  // "TSk/preset" forced failures
};

ExperimentConfig default_experiment_config();

// Strict parse: unknown keys anywhere raise ConfigError naming the key.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);

// Full echo including defaults; parse(config_to_json(c)) == c.
nlohmann::json config_to_json(const ExperimentConfig& c);

// FNV-1a over the canonical config dump, hex string.
std::string config_digest(const ExperimentConfig& c);

void validate(const ExperimentConfig& c);

struct CellResult {
  std::string training_set;
  std::string preset;
  std::string setting;
  bool ok = false;
  std::string error;
  ConfusionCounts counts;
  Metrics metrics;
  std::vector<double> losses;  // per-epoch supervised loss
  long long parameters = 0;
  int train_size = 0;
  int labels_ground_truth = 0;
  int labels_pseudo = 0;
  int labels_cluster = 0;
  std::uint64_t tripwire = 0;   // guarded truth reads during this cell
  double cpu_seconds = 0;       // timings sidecar only, never in the report

  std::string id() const { return training_set + "/" + preset; }
};

struct SetResult {
  std::string name;
  Setting setting = Setting::supervised;
  float labeled_fraction = 1.f;
  CurationLedger ledger;
  bool prep_ok = true;
  std::string prep_error;
  std::vector<double> prep_losses;  // teacher (semi) or pretraining loss
  std::vector<double> prep_alphas;  // semi ramp values, empty otherwise
  std::uint64_t prep_tripwire = 0;
  double prep_cpu_seconds = 0;
};

struct CorpusStats {
  int total = 0;
  int train = 0;
  int eval = 0;
  int train_benign = 0;
  int train_malignant = 0;
  int eval_benign = 0;
  int eval_malignant = 0;
};

struct ExperimentReport {
  ExperimentConfig config;
  CorpusStats corpus;
  std::vector<SetResult> sets;    // config order
  std::vector<CellResult> cells;  // training-set major, preset minor
  int threads_used = 1;
  double wall_seconds = 0;  // timings sidecar only
};

struct PreparedSet {
  Dataset final_train;
  SetResult result;
};

// Curation plus setting-specific labeling for one training set: nothing
// extra for SL, teacher training and pseudo-label merge for Semi-SL,
// contrastive pretraining and cluster labeling for Self-SL. The returned
// dataset sits on a fresh tripwire shared by all its subsets. eval_probe is
// read only for the cluster-to-class mapping. Throws on failure.
PreparedSet prepare_training_set(const Dataset& train,
                                 const Dataset& eval_probe,
                                 const std::string& set_name,
                                 const ExperimentConfig& config);

// One grid cell: fresh backbone for `preset`, supervised training on the
// prepared data, evaluation on the held-out split. model_out receives the
// trained network when non-null. Throws on failure.
CellResult run_grid_cell(const PreparedSet& prep, const Dataset& eval_set,
                         const std::string& preset,
                         const ExperimentConfig& config,
                         Model* model_out = nullptr);

// Executes the whole grid: curation and setting-specific preparation per
// training set, then one supervised cell per (set, preset). A cell failure
// is recorded in place and never aborts the remaining cells.
ExperimentReport run_experiment(const ExperimentConfig& config);

// Deterministic serialization: sorted keys, no timestamps, identical bytes
// for identical (config, seed) regardless of thread count.
nlohmann::json report_to_json(const ExperimentReport& report);

// Writes report.json / results.csv + summary.csv / plotdata.csv according
// to formats, plus the loss-history files referenced from the report and a
// non-deterministic timings.json sidecar. Returns the files written.
std::vector<std::string> emit_report(const ExperimentReport& report,
                                     const std::string& out_dir,
                                     const std::vector<std::string>& formats);

// Paired t-tests between two report JSONs over the accuracy vectors of
// their shared successful cells, overall and per setting.
nlohmann::json compare_reports(const nlohmann::json& a,
                               const nlohmann::json& b);

// LABELFORGE_THREADS override, else hardware concurrency, at least 1.
int thread_cap();

// Runs task(0..count-1) on up to thread_cap() workers pulling from a shared
// counter. Tasks must not throw. Returns the worker count used.
int run_parallel(std::size_t count, const std::function<void(std::size_t)>& task);

}  // namespace labelforge

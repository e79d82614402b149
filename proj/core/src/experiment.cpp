#include "labelforge/experiment.hpp"

#include <sys/resource.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <thread>
#include <utility>

#include "labelforge/errors.hpp"

namespace labelforge {

namespace {

// Wall-clock-free CPU meter; per-thread where the platform supports it so
// parallel cells report their own cost.
double thread_cpu_seconds() {
  rusage ru{};
#if defined(RUSAGE_THREAD)
  getrusage(RUSAGE_THREAD, &ru);
#else
  getrusage(RUSAGE_SELF, &ru);
#endif
  return static_cast<double>(ru.ru_utime.tv_sec) +
         1e-6 * static_cast<double>(ru.ru_utime.tv_usec) +
         static_cast<double>(ru.ru_stime.tv_sec) +
         1e-6 * static_cast<double>(ru.ru_stime.tv_usec);
}

// Object walker that records consumed keys and rejects leftovers, so config
// typos fail loudly instead of silently using a default.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string path)
      : j_(j), path_(std::move(path)) {
    if (!j_.is_object())
      throw ConfigError("config node '" + path_ + "' must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.push_back(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config key '" + path_ + "." + key +
                        "' has the wrong type");
    }
  }

  const nlohmann::json* child(const char* key) {
    seen_.push_back(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void done() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end())
        throw ConfigError("unknown config key '" + path_ + "." + it.key() +
                          "'");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::vector<std::string> seen_;
};

void reject_duplicates(const std::vector<std::string>& v, const char* what) {
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t k = i + 1; k < v.size(); ++k)
      if (v[i] == v[k])
        throw ConfigError(std::string(what) + " lists '" + v[i] + "' twice");
}

void check_sgd(const SgdConfig& s, const std::string& where) {
  if (!(s.learning_rate > 0.f))
    throw ConfigError(where + ": learning rate must be positive");
  if (s.momentum < 0.f || s.momentum >= 1.f)
    throw ConfigError(where + ": momentum must lie in [0, 1)");
  if (s.weight_decay < 0.f)
    throw ConfigError(where + ": weight decay must be >= 0");
}

}  // namespace

ExperimentConfig default_experiment_config() {
  ExperimentConfig c;
  c.training_sets = {"TS1", "TS2", "TS3", "TS4", "TS5", "TS6", "TS7"};
  c.presets = {"mini-res", "mini-vgg", "mini-eff"};
  c.formats = {"json", "csv", "plotdata"};
  return c;
}

void validate(const ExperimentConfig& c) {
  if (c.corpus.source != "synthetic" && c.corpus.source != "manifest")
    throw ConfigError("corpus.source must be 'synthetic' or 'manifest'");
  if (c.corpus.source == "manifest" && c.corpus.manifest_path.empty())
    throw ConfigError("corpus.source 'manifest' needs corpus.manifest_path");
  if (c.corpus.source == "synthetic" && c.corpus.samples < 10)
    throw ConfigError("synthetic corpus needs at least 10 samples");
  if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0))
    throw ConfigError("train_fraction must lie strictly between 0 and 1");
  if (c.training_sets.empty()) throw ConfigError("training_sets is empty");
  if (c.presets.empty()) throw ConfigError("presets is empty");
  reject_duplicates(c.training_sets, "training_sets");
  reject_duplicates(c.presets, "presets");
  for (const std::string& s : c.training_sets) training_set_spec(s);
  for (const std::string& p : c.presets) preset_from_name(p);
  preset_from_name(c.teacher_preset);
  preset_from_name(c.encoder_preset);
  for (const std::string& f : c.formats)
    if (f != "json" && f != "csv" && f != "plotdata")
      throw ConfigError("unknown report format '" + f + "'");
  if (c.supervised.epochs < 1)
    throw ConfigError("supervised.epochs must be >= 1");
  if (c.supervised.batch_size < 1)
    throw ConfigError("supervised.batch_size must be >= 1");
  check_sgd(c.supervised.sgd, "supervised");
  if (c.semi.total_epochs < 1) throw ConfigError("semi.total_epochs must be >= 1");
  validate(c.semi.pl);
  check_sgd(c.semi.sgd, "semi");
  if (c.contrastive.epochs < 0)
    throw ConfigError("contrastive.epochs must be >= 0");
  if (c.contrastive.batch_views < 2 || c.contrastive.batch_views % 2 != 0)
    throw ConfigError("contrastive.batch_views must be even and >= 2");
  if (!(c.contrastive.temperature > 0.f))
    throw ConfigError("contrastive.temperature must be positive");
  check_sgd(c.contrastive.sgd, "contrastive");
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c = default_experiment_config();
  ObjectReader top(j, "config");
  top.get("seed", c.seed);
  top.get("output_dir", c.output_dir);
  if (const nlohmann::json* jc = top.child("corpus")) {
    ObjectReader r(*jc, "corpus");
    r.get("source", c.corpus.source);
    r.get("manifest_path", c.corpus.manifest_path);
    r.get("samples", c.corpus.samples);
    r.get("image_size", c.corpus.synth.size);
    r.get("separability", c.corpus.synth.separability);
    r.get("tint_strength", c.corpus.synth.tint_strength);
    r.done();
  }
  top.get("train_fraction", c.train_fraction);
  top.get("training_sets", c.training_sets);
  top.get("presets", c.presets);
  if (const nlohmann::json* js = top.child("supervised")) {
    ObjectReader r(*js, "supervised");
    r.get("epochs", c.supervised.epochs);
    r.get("batch_size", c.supervised.batch_size);
    r.get("learning_rate", c.supervised.sgd.learning_rate);
    r.get("momentum", c.supervised.sgd.momentum);
    r.get("weight_decay", c.supervised.sgd.weight_decay);
    r.get("augment", c.supervised.augment);
    r.done();
  }
  if (const nlohmann::json* js = top.child("semi")) {
    ObjectReader r(*js, "semi");
    r.get("teacher_preset", c.teacher_preset);
    r.get("total_epochs", c.semi.total_epochs);
    r.get("alpha_f", c.semi.pl.alpha_f);
    r.get("ramp_start", c.semi.pl.t1);
    r.get("ramp_end", c.semi.pl.t2);
    r.get("labeled_batch", c.semi.pl.labeled_batch);
    r.get("unlabeled_batch", c.semi.pl.unlabeled_batch);
    std::string refresh = c.semi.refresh_per_epoch ? "per-epoch" : "once";
    r.get("refresh", refresh);
    if (refresh == "per-epoch")
      c.semi.refresh_per_epoch = true;
    else if (refresh == "once")
      c.semi.refresh_per_epoch = false;
    else
      throw ConfigError("semi.refresh must be 'per-epoch' or 'once'");
    r.get("learning_rate", c.semi.sgd.learning_rate);
    r.get("momentum", c.semi.sgd.momentum);
    r.get("weight_decay", c.semi.sgd.weight_decay);
    r.done();
  }
  if (const nlohmann::json* js = top.child("contrastive")) {
    ObjectReader r(*js, "contrastive");
    r.get("encoder_preset", c.encoder_preset);
    r.get("epochs", c.contrastive.epochs);
    r.get("batch_views", c.contrastive.batch_views);
    r.get("temperature", c.contrastive.temperature);
    r.get("learning_rate", c.contrastive.sgd.learning_rate);
    r.get("momentum", c.contrastive.sgd.momentum);
    r.get("weight_decay", c.contrastive.sgd.weight_decay);
    r.done();
  }
  if (const nlohmann::json* ja = top.child("augment")) {
    ObjectReader r(*ja, "augment");
    AugmentPolicy p = c.supervised.policy;
    r.get("max_rotation_deg", p.max_rotation_deg);
    r.get("shear", p.shear);
    r.get("hflip_prob", p.hflip_prob);
    r.get("vflip_prob", p.vflip_prob);
    r.done();
    c.supervised.policy = p;
    c.contrastive.policy = p;
  }
  top.get("formats", c.formats);
  top.get("fault_cells", c.fault_cells);
  top.done();
  validate(c);
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " +
                      e.what());
  }
  return config_from_json(j);
}

// output_dir is deliberately absent: the canonical dump (and therefore the
// digest and the report echo) must not depend on where results are written,
// or two otherwise identical runs would produce different reports.
nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["corpus"] = {{"source", c.corpus.source},
                 {"manifest_path", c.corpus.manifest_path},
                 {"samples", c.corpus.samples},
                 {"image_size", c.corpus.synth.size},
                 {"separability", c.corpus.synth.separability},
                 {"tint_strength", c.corpus.synth.tint_strength}};
  j["train_fraction"] = c.train_fraction;
  j["training_sets"] = c.training_sets;
  j["presets"] = c.presets;
  j["supervised"] = {{"epochs", c.supervised.epochs},
                     {"batch_size", c.supervised.batch_size},
                     {"learning_rate", c.supervised.sgd.learning_rate},
                     {"momentum", c.supervised.sgd.momentum},
                     {"weight_decay", c.supervised.sgd.weight_decay},
                     {"augment", c.supervised.augment}};
  j["semi"] = {{"teacher_preset", c.teacher_preset},
               {"total_epochs", c.semi.total_epochs},
               {"alpha_f", c.semi.pl.alpha_f},
               {"ramp_start", c.semi.pl.t1},
               {"ramp_end", c.semi.pl.t2},
               {"labeled_batch", c.semi.pl.labeled_batch},
               {"unlabeled_batch", c.semi.pl.unlabeled_batch},
               {"refresh", c.semi.refresh_per_epoch ? "per-epoch" : "once"},
               {"learning_rate", c.semi.sgd.learning_rate},
               {"momentum", c.semi.sgd.momentum},
               {"weight_decay", c.semi.sgd.weight_decay}};
  j["contrastive"] = {{"encoder_preset", c.encoder_preset},
                      {"epochs", c.contrastive.epochs},
                      {"batch_views", c.contrastive.batch_views},
                      {"temperature", c.contrastive.temperature},
                      {"learning_rate", c.contrastive.sgd.learning_rate},
                      {"momentum", c.contrastive.sgd.momentum},
                      {"weight_decay", c.contrastive.sgd.weight_decay}};
  j["augment"] = {{"max_rotation_deg", c.supervised.policy.max_rotation_deg},
                  {"shear", c.supervised.policy.shear},
                  {"hflip_prob", c.supervised.policy.hflip_prob},
                  {"vflip_prob", c.supervised.policy.vflip_prob}};
  j["formats"] = c.formats;
  j["fault_cells"] = c.fault_cells;
  return j;
}

std::string config_digest(const ExperimentConfig& c) {
  const std::string dump = config_to_json(c).dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : dump) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

int thread_cap() {
  if (const char* env = std::getenv("LABELFORGE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1)
      throw ConfigError("LABELFORGE_THREADS must be a positive integer");
    return static_cast<int>(v);
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

int run_parallel(std::size_t count,
                 const std::function<void(std::size_t)>& task) {
  const int workers =
      static_cast<int>(std::min<std::size_t>(count, static_cast<std::size_t>(
                                                        thread_cap())));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return 1;
  }
  std::atomic<std::size_t> next{0};
  auto pull = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      task(i);
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) pool.emplace_back(pull);
  for (std::thread& t : pool) t.join();
  return workers;
}

namespace {

Dataset copy_all(const Dataset& ds) {
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), 0);
  return ds.subset(all);
}

BackbonePreset sized_preset(const std::string& name, const Tensor& hwc) {
  BackbonePreset p = preset_from_name(name);
  p.input_h = hwc.dim(0);
  p.input_w = hwc.dim(1);
  p.input_c = hwc.dim(2);
  return p;
}

}  // namespace

PreparedSet prepare_training_set(const Dataset& train,
                                 const Dataset& eval_probe,
                                 const std::string& set_name,
                                 const ExperimentConfig& config) {
  const TrainingSetSpec& spec = training_set_spec(set_name);
  if (train.empty()) throw InputError("training split is empty");
  const Tensor& first = train.samples.front().pixels;

  PreparedSet P;
  P.result.name = spec.name;
  P.result.setting = spec.setting;
  P.result.labeled_fraction = spec.labeled_fraction;
  const double cpu0 = thread_cpu_seconds();

  RngStream root(config.seed);
  CuratedSet cur = curate_training_set(train, spec, config.seed);
  // everything derived from this set shares one fresh counter
  cur.labeled.rebind_tripwire();
  cur.unlabeled.adopt_tripwire(cur.labeled);

  switch (spec.setting) {
    case Setting::supervised:
      P.final_train = std::move(cur.labeled);
      break;
    case Setting::semi_supervised: {
      RngStream trng = root.derive("teacher").derive(spec.name);
      Model teacher = build_backbone(sized_preset(config.teacher_preset, first),
                                     trng.derive("init").state(), false);
      SemiResult res =
          train_semi_supervised(teacher, cur.labeled, cur.unlabeled,
                                config.semi, trng.derive("train"));
      P.result.prep_losses = std::move(res.losses);
      P.result.prep_alphas = std::move(res.alphas);
      P.final_train = merge_pseudo(cur.labeled, res.relabeled, &cur.ledger);
      break;
    }
    case Setting::self_supervised: {
      RngStream erng = root.derive("encoder").derive(spec.name);
      Model encoder = build_backbone(sized_preset(config.encoder_preset, first),
                                     erng.derive("init").state(), true);
      ContrastiveConfig con = config.contrastive;
      con.policy.target_h = first.dim(0);
      con.policy.target_w = first.dim(1);
      P.result.prep_losses =
          pretrain_contrastive(encoder, cur.unlabeled, con,
                               erng.derive("pretrain"));
      Dataset relabeled = cluster_label(encoder, cur.unlabeled, eval_probe,
                                        erng.derive("cluster"));
      P.final_train = merge_pseudo(cur.labeled, relabeled, &cur.ledger);
      break;
    }
  }
  P.result.ledger = cur.ledger;
  P.result.prep_tripwire = P.final_train.tripwire_count();
  P.result.prep_cpu_seconds = thread_cpu_seconds() - cpu0;
  return P;
}

CellResult run_grid_cell(const PreparedSet& prep, const Dataset& eval_set,
                         const std::string& preset,
                         const ExperimentConfig& config, Model* model_out) {
  CellResult cell;
  cell.training_set = prep.result.name;
  cell.preset = preset;
  cell.setting = setting_name(prep.result.setting);
  const double cpu0 = thread_cpu_seconds();

  if (prep.final_train.empty())
    throw UsageError("prepared training set is empty");
  const Tensor& first = prep.final_train.samples.front().pixels;

  // own data copy on an own counter so the cell's truth-read tally is
  // attributable to this cell alone
  Dataset cell_train = copy_all(prep.final_train);
  cell_train.rebind_tripwire();
  cell.train_size = static_cast<int>(cell_train.size());
  for (const Sample& s : cell_train.samples) {
    if (s.label_source == LabelSource::ground_truth)
      ++cell.labels_ground_truth;
    else if (s.label_source == LabelSource::pseudo)
      ++cell.labels_pseudo;
    else if (s.label_source == LabelSource::cluster)
      ++cell.labels_cluster;
  }

  TrainConfig sup = config.supervised;
  sup.policy.target_h = first.dim(0);
  sup.policy.target_w = first.dim(1);

  RngStream crng = RngStream(config.seed)
                       .derive("cell")
                       .derive(cell.training_set)
                       .derive(cell.preset);
  Model model = build_backbone(sized_preset(preset, first),
                               crng.derive("init").state(), false);
  cell.parameters = model.parameter_count();
  cell.losses = train_supervised(model, cell_train, sup, crng.derive("train"));

  std::vector<int> preds = predict_classes(model, eval_set);
  std::vector<int> truth(eval_set.size());
  for (std::size_t i = 0; i < eval_set.size(); ++i)
    truth[i] = *eval_set.audit_true_label(i);
  cell.counts = confusion(preds, truth);
  cell.metrics = compute_metrics(cell.counts);
  cell.tripwire = cell_train.tripwire_count();
  cell.ok = true;
  cell.cpu_seconds = thread_cpu_seconds() - cpu0;
  if (model_out) *model_out = std::move(model);
  return cell;
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  validate(config);
  const auto wall0 = std::chrono::steady_clock::now();

  ExperimentReport rep;
  rep.config = config;
  rep.threads_used = thread_cap();

  Dataset corpus =
      config.corpus.source == "synthetic"
          ? generate_synthetic_corpus(config.corpus.samples, config.seed,
                                      config.corpus.synth)
          : load_corpus(config.corpus.manifest_path);

  RngStream root(config.seed);
  auto split = split_train_eval(corpus, config.train_fraction,
                                root.derive("split").state());
  Dataset train = std::move(split.first);
  Dataset eval = std::move(split.second);

  rep.corpus.total = static_cast<int>(corpus.size());
  rep.corpus.train = static_cast<int>(train.size());
  rep.corpus.eval = static_cast<int>(eval.size());
  for (std::size_t i = 0; i < train.size(); ++i)
    (*train.audit_true_label(i) == kBenign ? rep.corpus.train_benign
                                           : rep.corpus.train_malignant)++;
  for (std::size_t i = 0; i < eval.size(); ++i)
    (*eval.audit_true_label(i) == kBenign ? rep.corpus.eval_benign
                                          : rep.corpus.eval_malignant)++;

  // Phase A: per-set curation and labeling machinery, then phase B: one
  // supervised cell per (set, preset). Both phases may run cells
  // concurrently; every task only writes its own slot.
  struct Prep {
    PreparedSet ps;
    bool usable = false;
  };
  const std::size_t n_sets = config.training_sets.size();
  std::vector<Prep> preps(n_sets);

  run_parallel(n_sets, [&](std::size_t si) {
    Prep& P = preps[si];
    const double cpu0 = thread_cpu_seconds();
    try {
      P.ps = prepare_training_set(train, eval, config.training_sets[si],
                                  config);
      P.usable = true;
    } catch (const std::exception& e) {
      const TrainingSetSpec& spec =
          training_set_spec(config.training_sets[si]);
      P.ps.result.name = spec.name;
      P.ps.result.setting = spec.setting;
      P.ps.result.labeled_fraction = spec.labeled_fraction;
      P.ps.result.prep_ok = false;
      P.ps.result.prep_error = e.what();
      P.ps.result.prep_cpu_seconds = thread_cpu_seconds() - cpu0;
    }
  });

  const std::size_t n_presets = config.presets.size();
  rep.cells.resize(n_sets * n_presets);
  run_parallel(n_sets * n_presets, [&](std::size_t ci) {
    const std::size_t si = ci / n_presets;
    const std::size_t pi = ci % n_presets;
    CellResult& cell = rep.cells[ci];
    cell.training_set = config.training_sets[si];
    cell.preset = config.presets[pi];
    cell.setting = setting_name(preps[si].ps.result.setting);
    const double cpu0 = thread_cpu_seconds();
    try {
      if (!preps[si].usable)
        throw Error("training-set preparation failed: " +
                    preps[si].ps.result.prep_error);
      if (std::find(config.fault_cells.begin(), config.fault_cells.end(),
                    cell.id()) != config.fault_cells.end())
        throw Error("injected fault");
      cell = run_grid_cell(preps[si].ps, eval, config.presets[pi], config);
    } catch (const std::exception& e) {
      cell.ok = false;
      cell.error = e.what();
      cell.cpu_seconds = thread_cpu_seconds() - cpu0;
    }
  });

  rep.sets.reserve(n_sets);
  for (Prep& p : preps) rep.sets.push_back(std::move(p.ps.result));
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0)
          .count();
  return rep;
}

}  // namespace labelforge

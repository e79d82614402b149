#include "labelforge/curation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "labelforge/errors.hpp"
#include "labelforge/rng.hpp"

namespace labelforge {

const char* setting_name(Setting s) {
  switch (s) {
    case Setting::supervised: return "SL";
    case Setting::semi_supervised: return "Semi-SL";
    case Setting::self_supervised: return "Self-SL";
  }
  throw InputError("bad setting");
}

const std::vector<TrainingSetSpec>& training_set_specs() {
  static const std::vector<TrainingSetSpec> specs = {
      {"TS1", 1.0f, Setting::supervised},
      {"TS2", 0.5f, Setting::semi_supervised},
      {"TS3", 0.4f, Setting::semi_supervised},
      {"TS4", 0.3f, Setting::semi_supervised},
      {"TS5", 0.2f, Setting::semi_supervised},
      {"TS6", 0.1f, Setting::semi_supervised},
      {"TS7", 0.0f, Setting::self_supervised},
  };
  return specs;
}

const TrainingSetSpec& training_set_spec(const std::string& name) {
  for (const TrainingSetSpec& s : training_set_specs())
    if (s.name == name) return s;
  throw ConfigError("unknown training set: " + name);
}

std::pair<Dataset, Dataset> split_train_eval(const Dataset& dataset,
                                             double train_fraction,
                                             std::uint64_t seed) {
  if (dataset.empty()) throw InputError("cannot split an empty dataset");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train fraction must lie strictly between 0 and 1");

  // class membership comes from ground truth; a corpus being split must be
  // fully labeled
  std::vector<std::vector<std::size_t>> by_class(2);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Sample& s = dataset.samples[i];
    if (s.label_source != LabelSource::ground_truth || !s.assigned_label)
      throw InputError("split requires ground-truth labels on every sample");
    by_class[static_cast<std::size_t>(*s.assigned_label)].push_back(i);
  }
  for (int c = 0; c < 2; ++c)
    if (by_class[c].size() < 2)
      throw InputError(std::string("class ") + class_token(c) +
                       " has fewer than 2 samples, cannot stratify");

  const std::size_t target =
      static_cast<std::size_t>(std::floor(train_fraction * dataset.size()));

  // per-class floor, then largest fractional remainder takes the shortfall
  std::size_t base[2];
  double frac[2];
  std::size_t total_base = 0;
  for (int c = 0; c < 2; ++c) {
    double exact = train_fraction * static_cast<double>(by_class[c].size());
    base[c] = static_cast<std::size_t>(std::floor(exact));
    frac[c] = exact - std::floor(exact);
    total_base += base[c];
  }
  std::size_t deficit = target - total_base;
  int order[2] = {0, 1};
  if (frac[1] > frac[0]) std::swap(order[0], order[1]);
  for (std::size_t k = 0; k < deficit; ++k) base[order[k % 2]] += 1;

  RngStream rng = RngStream(seed).derive("split");
  std::vector<std::size_t> train_idx, eval_idx;
  for (int c = 0; c < 2; ++c) {
    std::vector<std::size_t> idx = by_class[c];
    RngStream cls = rng.derive("class", static_cast<std::uint64_t>(c));
    cls.shuffle(idx);
    std::size_t n = std::min(base[c], idx.size());
    train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + n);
    eval_idx.insert(eval_idx.end(), idx.begin() + n, idx.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(eval_idx.begin(), eval_idx.end());
  return {dataset.subset(train_idx), dataset.subset(eval_idx)};
}

CuratedSet curate_training_set(const Dataset& train,
                               const TrainingSetSpec& spec,
                               std::uint64_t seed) {
  if (train.empty()) throw InputError("cannot curate an empty training set");
  const std::size_t n = train.size();
  const double exact =
      (1.0 - static_cast<double>(spec.labeled_fraction)) * static_cast<double>(n);
  const std::size_t unlabeled_count =
      static_cast<std::size_t>(std::llround(exact));

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  RngStream rng = RngStream(seed).derive("curate").derive(spec.name);
  rng.shuffle(idx);

  std::vector<std::size_t> unl(idx.begin(), idx.begin() + unlabeled_count);
  std::vector<std::size_t> lab(idx.begin() + unlabeled_count, idx.end());
  std::sort(unl.begin(), unl.end());
  std::sort(lab.begin(), lab.end());

  CuratedSet out;
  out.labeled = train.subset(lab);
  out.unlabeled = train.subset(unl);
  for (Sample& s : out.unlabeled.samples) s.strip_label();

  out.ledger.set_name = spec.name;
  for (const Sample& s : out.labeled.samples) {
    if (*s.assigned_label == kBenign)
      ++out.ledger.labeled_benign;
    else
      ++out.ledger.labeled_malignant;
  }
  // hidden make-up of the stripped pool, audit path only
  for (std::size_t i = 0; i < out.unlabeled.size(); ++i) {
    auto t = out.unlabeled.audit_true_label(i);
    if (t && *t == kBenign)
      ++out.ledger.unlabeled_before_benign;
    else if (t)
      ++out.ledger.unlabeled_before_malignant;
  }
  return out;
}

Dataset merge_pseudo(const Dataset& labeled, const Dataset& relabeled,
                     CurationLedger* ledger) {
  Dataset out = labeled.subset([&] {
    std::vector<std::size_t> all(labeled.size());
    std::iota(all.begin(), all.end(), 0);
    return all;
  }());
  int after_b = 0, after_m = 0;
  for (const Sample& s : relabeled.samples) {
    if (!s.assigned_label || (s.label_source != LabelSource::pseudo &&
                              s.label_source != LabelSource::cluster))
      throw UsageError("merge requires pseudo- or cluster-labeled samples; '" +
                       s.id + "' has none");
    if (*s.assigned_label == kBenign)
      ++after_b;
    else
      ++after_m;
    out.samples.push_back(s);
  }
  if (ledger) {
    ledger->predicted_after_benign = after_b;
    ledger->predicted_after_malignant = after_m;
    ledger->has_predictions = true;
  }
  return out;
}

}  // namespace labelforge

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "labelforge/dataset.hpp"

namespace labelforge {

enum class Setting { supervised, semi_supervised, self_supervised };

const char* setting_name(Setting s);

// One of the seven labeled/unlabeled budget configurations.
struct TrainingSetSpec {
  std::string name;        // TS1..TS7
  float labeled_fraction;  // 1.0, 0.5, 0.4, 0.3, 0.2, 0.1, 0.0
  Setting setting;
};

// All seven specs in order TS1..TS7.
const std::vector<TrainingSetSpec>& training_set_specs();
const TrainingSetSpec& training_set_spec(const std::string& name);

// Per-class bookkeeping for one training set: how many samples kept their
// labels, the hidden class make-up of the stripped pool, and the class
// make-up assigned back by pseudo- or cluster-labeling.
struct CurationLedger {
  std::string set_name;
  int labeled_benign = 0;
  int labeled_malignant = 0;
  int unlabeled_before_benign = 0;
  int unlabeled_before_malignant = 0;
  int predicted_after_benign = 0;
  int predicted_after_malignant = 0;
  bool has_predictions = false;

  int labeled_total() const { return labeled_benign + labeled_malignant; }
  int before_total() const {
    return unlabeled_before_benign + unlabeled_before_malignant;
  }
  int after_total() const {
    return predicted_after_benign + predicted_after_malignant;
  }
  // Table-3 row property: prediction changes classes, never the total.
  bool totals_preserved() const {
    return !has_predictions || after_total() == before_total();
  }
};

// Class-stratified split. |train| = floor(train_fraction * N) exactly, with
// per-class counts at floor(train_fraction * n_c) plus largest-remainder
// top-up, so class proportions are preserved within one sample.
std::pair<Dataset, Dataset> split_train_eval(const Dataset& dataset,
                                             double train_fraction,
                                             std::uint64_t seed);

// Strips labels from a uniformly drawn subset of round-half-away-from-zero
// ((1 - labeled_fraction) * |train|) samples. Stripped samples keep their
// hidden class for later scoring only.
struct CuratedSet {
  Dataset labeled;
  Dataset unlabeled;
  CurationLedger ledger;
};

CuratedSet curate_training_set(const Dataset& train,
                               const TrainingSetSpec& spec,
                               std::uint64_t seed);

// Concatenates the kept-label subset with relabeled samples, recording the
// assigned class counts in the ledger. Every relabeled sample must carry an
// assigned label from pseudo- or cluster-labeling.
Dataset merge_pseudo(const Dataset& labeled, const Dataset& relabeled,
                     CurationLedger* ledger = nullptr);

}  // namespace labelforge

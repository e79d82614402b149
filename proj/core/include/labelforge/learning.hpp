#pragma once

#include <cstdint>
#include <vector>

#include "labelforge/augment.hpp"
#include "labelforge/dataset.hpp"
#include "labelforge/metrics.hpp"
#include "labelforge/model.hpp"
#include "labelforge/rng.hpp"
#include "labelforge/sgd.hpp"

namespace labelforge {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 64;
  // the plain-conv family trains stably only below lr ~0.01; the shared
  // default keeps every preset on the safe side
  SgdConfig sgd{0.005f, 0.9f, 1e-4f};
  bool augment = false;  // per-sample streams keyed by (id, epoch)
  AugmentPolicy policy;
};

// Plain supervised training on a fully labeled set. Returns the per-epoch
// mean cross-entropy. The model is updated in place.
std::vector<double> train_supervised(Model& model, const Dataset& labeled,
                                     const TrainConfig& config, RngStream rng);

// Argmax class per sample in eval mode; ties resolve to the lowest index.
std::vector<int> predict_classes(Model& model, const Dataset& ds,
                                 int batch_size = 128);

// Confusion metrics of the model's predictions against the ground-truth
// labels of a fully labeled evaluation split.
Metrics evaluate_model(Model& model, const Dataset& eval_set,
                       std::vector<int>* predictions_out = nullptr);

// Assigns each sample its argmax class with label_source=pseudo. Count and
// hidden classes are preserved; deterministic and idempotent per model.
Dataset pseudo_label(Model& model, const Dataset& unlabeled,
                     int batch_size = 128);

struct PseudoLabelConfig {
  float alpha_f = 3.0f;
  // the warm-up must leave a usable teacher even when only a handful of
  // labeled samples remain; 15 epochs at batch 32 holds up down to the
  // 10%-labeled budget
  int t1 = 15;  // ramp start epoch (also the supervised warm-up length)
  int t2 = 40;  // ramp end epoch
  int labeled_batch = 32;
  int unlabeled_batch = 32;
};

void validate(const PseudoLabelConfig& config);

// 0 before t1, linear to alpha_f on [t1, t2), alpha_f from t2 on.
double alpha_schedule(int epoch, const PseudoLabelConfig& config);

// Balanced joint objective: mean labeled cross-entropy plus alpha times the
// mean unlabeled-vs-pseudo-label cross-entropy. With alpha == 0 or no
// unlabeled logits this returns the labeled term's node itself, so the
// reduction to plain supervised loss is exact to the bit.
Var joint_loss(Graph& g, Var labeled_logits, const std::vector<int>& targets,
               Var unlabeled_logits, const std::vector<int>& pseudo_targets,
               double alpha);

struct SemiConfig {
  PseudoLabelConfig pl;
  int total_epochs = 40;
  SgdConfig sgd{0.005f, 0.9f, 1e-4f};
  bool refresh_per_epoch = true;  // false: pseudo-labels fixed after warm-up
};

struct SemiResult {
  Dataset relabeled;  // final hard pseudo-labels for the curation merge
  std::vector<double> losses;  // per-epoch mean joint loss
  std::vector<double> alphas;  // alpha(t) per epoch
};

// Warm-up supervised on the labeled subset for t1 epochs, then joint-loss
// training with the alpha ramp; pseudo-labels come from the current model
// (refreshed per epoch by default). The trained model is the teacher.
SemiResult train_semi_supervised(Model& model, const Dataset& labeled,
                                 const Dataset& unlabeled,
                                 const SemiConfig& config, RngStream rng);

}  // namespace labelforge

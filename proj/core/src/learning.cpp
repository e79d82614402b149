#include "labelforge/learning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "labelforge/errors.hpp"

namespace labelforge {

namespace {

std::vector<int> batch_targets(const Dataset& ds,
                               const std::vector<std::size_t>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) {
    const auto& label = ds.samples[i].assigned_label;
    if (!label) throw UsageError("sample " + ds.samples[i].id + " is unlabeled");
    out.push_back(*label);
  }
  return out;
}

Tensor make_training_batch(const Dataset& ds,
                           const std::vector<std::size_t>& idx,
                           const TrainConfig& cfg, const RngStream& aug_root,
                           int epoch) {
  if (!cfg.augment) return make_batch(ds, idx);
  Dataset views;
  views.samples.reserve(idx.size());
  for (std::size_t i : idx) {
    const Sample& s = ds.samples[i];
    views.samples.push_back(augment(
        s, cfg.policy,
        aug_root.derive(s.id, static_cast<std::uint64_t>(epoch))));
  }
  std::vector<std::size_t> all(idx.size());
  std::iota(all.begin(), all.end(), 0);
  return make_batch(views, all);
}

}  // namespace

std::vector<double> train_supervised(Model& model, const Dataset& labeled,
                                     const TrainConfig& config,
                                     RngStream rng) {
  if (labeled.empty()) throw UsageError("supervised training on an empty set");
  if (!labeled.all_labeled())
    throw UsageError("supervised training requires labels on every sample");
  if (config.batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (config.epochs < 0) throw ConfigError("epoch count must be >= 0");

  auto params = model.backbone_params();
  for (Tensor* p : model.classifier_params()) params.push_back(p);
  SgdOptimizer opt(params, config.sgd);

  const RngStream aug_root = rng.derive("augment");
  const std::size_t n = labeled.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  std::vector<double> history;
  history.reserve(static_cast<std::size_t>(config.epochs));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    RngStream shuf = rng.derive("order", static_cast<std::uint64_t>(epoch));
    shuf.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n;
         start += static_cast<std::size_t>(config.batch_size)) {
      std::size_t stop =
          std::min(n, start + static_cast<std::size_t>(config.batch_size));
      std::vector<std::size_t> idx(order.begin() + start, order.begin() + stop);
      Tensor batch = make_training_batch(labeled, idx, config, aug_root, epoch);
      Graph g;
      Var logits = model.forward_logits(g, g.input(std::move(batch)), true);
      Var loss = g.softmax_cross_entropy(logits, batch_targets(labeled, idx));
      g.backward(loss);
      loss_sum += static_cast<double>(g.value(loss)[0]) *
                  static_cast<double>(idx.size());
      opt.step();
    }
    history.push_back(loss_sum / static_cast<double>(n));
  }
  return history;
}

std::vector<int> predict_classes(Model& model, const Dataset& ds,
                                 int batch_size) {
  if (ds.empty()) throw UsageError("prediction on an empty dataset");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  std::vector<int> out;
  out.reserve(ds.size());
  for (std::size_t start = 0; start < ds.size();
       start += static_cast<std::size_t>(batch_size)) {
    std::size_t stop =
        std::min(ds.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<std::size_t> idx(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    Tensor logits = model.logits(make_batch(ds, idx));
    for (int r = 0; r < logits.dim(0); ++r) {
      int best = 0;
      for (int c = 1; c < logits.dim(1); ++c)
        if (logits.at(r, c) > logits.at(r, best)) best = c;
      out.push_back(best);
    }
  }
  return out;
}

Metrics evaluate_model(Model& model, const Dataset& eval_set,
                       std::vector<int>* predictions_out) {
  if (!eval_set.all_labeled())
    throw UsageError("evaluation requires a labeled split");
  std::vector<int> preds = predict_classes(model, eval_set);
  std::vector<int> truth;
  truth.reserve(eval_set.size());
  for (const Sample& s : eval_set.samples) truth.push_back(*s.assigned_label);
  if (predictions_out) *predictions_out = preds;
  return compute_metrics(confusion(preds, truth));
}

Dataset pseudo_label(Model& model, const Dataset& unlabeled, int batch_size) {
  std::vector<std::size_t> all(unlabeled.size());
  std::iota(all.begin(), all.end(), 0);
  Dataset out = unlabeled.subset(all);
  if (out.empty()) return out;
  std::vector<int> cls = predict_classes(model, unlabeled, batch_size);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.samples[i].assigned_label = cls[i];
    out.samples[i].label_source = LabelSource::pseudo;
  }
  return out;
}

void validate(const PseudoLabelConfig& config) {
  if (config.t1 < 0 || config.t1 >= config.t2)
    throw ConfigError("pseudo-label schedule requires 0 <= t1 < t2");
  if (!(config.alpha_f > 0.f))
    throw ConfigError("alpha_f must be positive");
  if (config.labeled_batch < 1)
    throw ConfigError("labeled batch size must be >= 1");
  if (config.unlabeled_batch < 0)
    throw ConfigError("unlabeled batch size must be >= 0");
}

double alpha_schedule(int epoch, const PseudoLabelConfig& config) {
  validate(config);
  if (epoch < config.t1) return 0.0;
  if (epoch >= config.t2) return config.alpha_f;
  return static_cast<double>(config.alpha_f) *
         static_cast<double>(epoch - config.t1) /
         static_cast<double>(config.t2 - config.t1);
}

Var joint_loss(Graph& g, Var labeled_logits, const std::vector<int>& targets,
               Var unlabeled_logits, const std::vector<int>& pseudo_targets,
               double alpha) {
  Var supervised = g.softmax_cross_entropy(labeled_logits, targets);
  if (alpha == 0.0 || !unlabeled_logits.valid() || pseudo_targets.empty())
    return supervised;
  Var unl = g.softmax_cross_entropy(unlabeled_logits, pseudo_targets);
  return g.add(supervised, g.scale(unl, static_cast<float>(alpha)));
}

SemiResult train_semi_supervised(Model& model, const Dataset& labeled,
                                 const Dataset& unlabeled,
                                 const SemiConfig& config, RngStream rng) {
  if (labeled.empty())
    throw UsageError(
        "semi-supervised training needs labeled samples; a fully unlabeled "
        "set belongs to the self-supervised setting");
  if (!labeled.all_labeled())
    throw UsageError("labeled subset contains unlabeled samples");
  validate(config.pl);
  if (config.total_epochs < 0) throw ConfigError("epoch count must be >= 0");

  auto params = model.backbone_params();
  for (Tensor* p : model.classifier_params()) params.push_back(p);
  SgdOptimizer opt(params, config.sgd);

  const std::size_t nl = labeled.size();
  const std::size_t nu = unlabeled.size();
  const std::size_t k = static_cast<std::size_t>(config.pl.labeled_batch);
  const std::size_t ku = static_cast<std::size_t>(config.pl.unlabeled_batch);

  std::vector<std::size_t> order_l(nl), order_u(nu);
  std::iota(order_l.begin(), order_l.end(), 0);
  std::iota(order_u.begin(), order_u.end(), 0);

  Dataset pseudo;  // current pseudo-labeled view of the unlabeled pool
  SemiResult result;
  for (int epoch = 0; epoch < config.total_epochs; ++epoch) {
    const double alpha = alpha_schedule(epoch, config.pl);
    const bool use_unlabeled = alpha > 0.0 && nu > 0 && ku > 0;
    if (use_unlabeled &&
        (config.refresh_per_epoch || pseudo.empty()))
      pseudo = pseudo_label(model, unlabeled);

    RngStream shuf = rng.derive("order", static_cast<std::uint64_t>(epoch));
    shuf.shuffle(order_l);
    if (use_unlabeled) {
      RngStream shu = rng.derive("order-u", static_cast<std::uint64_t>(epoch));
      shu.shuffle(order_u);
    }

    const std::size_t steps_l = (nl + k - 1) / k;
    const std::size_t steps_u = use_unlabeled ? (nu + ku - 1) / ku : 0;
    const std::size_t steps = std::max(steps_l, std::size_t{1});
    const std::size_t total_steps = std::max(steps, steps_u);

    double loss_sum = 0.0;
    for (std::size_t s = 0; s < total_steps; ++s) {
      std::size_t ls = (s % steps_l) * k;
      std::size_t le = std::min(nl, ls + k);
      std::vector<std::size_t> lidx(order_l.begin() + ls, order_l.begin() + le);

      Graph g;
      Var llog = model.forward_logits(g, g.input(make_batch(labeled, lidx)), true);
      Var ulog;
      std::vector<int> ut;
      if (use_unlabeled) {
        std::size_t us = (s % steps_u) * ku;
        std::size_t ue = std::min(nu, us + ku);
        std::vector<std::size_t> uidx(order_u.begin() + us,
                                      order_u.begin() + ue);
        ulog = model.forward_logits(g, g.input(make_batch(pseudo, uidx)), true);
        ut = batch_targets(pseudo, uidx);
      }
      Var loss = joint_loss(g, llog, batch_targets(labeled, lidx), ulog, ut,
                            alpha);
      g.backward(loss);
      loss_sum += static_cast<double>(g.value(loss)[0]);
      opt.step();
    }
    result.losses.push_back(loss_sum / static_cast<double>(total_steps));
    result.alphas.push_back(alpha);
  }

  // final hard export for the curation merge
  result.relabeled = pseudo_label(model, unlabeled);
  return result;
}

}  // namespace labelforge

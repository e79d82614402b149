#include "labelforge/metrics.hpp"

#include <cmath>

#include "labelforge/errors.hpp"

namespace labelforge {

ConfusionCounts confusion(const std::vector<int>& predictions,
                          const std::vector<int>& truth, int positive_class) {
  if (predictions.size() != truth.size())
    throw UsageError("confusion: prediction and truth lengths differ");
  if (predictions.empty())
    throw UsageError("confusion: need at least one sample");
  ConfusionCounts c;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    bool pred_pos = predictions[i] == positive_class;
    bool true_pos = truth[i] == positive_class;
    if (pred_pos && true_pos)
      ++c.t_pos;
    else if (!pred_pos && !true_pos)
      ++c.t_neg;
    else if (pred_pos)
      ++c.f_pos;
    else
      ++c.f_neg;
  }
  return c;
}

Metrics compute_metrics(const ConfusionCounts& c) {
  if (c.total() <= 0) throw UsageError("metrics over an empty confusion matrix");
  if (c.t_pos < 0 || c.t_neg < 0 || c.f_pos < 0 || c.f_neg < 0)
    throw InputError("confusion counts must be non-negative");
  Metrics m;
  m.accuracy = static_cast<double>(c.t_pos + c.t_neg) /
               static_cast<double>(c.total());
  if (c.t_pos + c.f_pos > 0)
    m.precision = static_cast<double>(c.t_pos) /
                  static_cast<double>(c.t_pos + c.f_pos);
  else
    m.precision_degenerate = true;
  if (c.t_pos + c.f_neg > 0)
    m.recall = static_cast<double>(c.t_pos) /
               static_cast<double>(c.t_pos + c.f_neg);
  else
    m.recall_degenerate = true;
  if (m.precision + m.recall > 0)
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  else
    m.f1_degenerate = true;
  return m;
}

double mean_accuracy(const std::vector<double>& values) {
  if (values.empty()) throw UsageError("mean over an empty vector");
  double sum = 0;
  for (double v : values) sum += v;
  double mean = sum / static_cast<double>(values.size());
  return std::floor(mean * 100.0 + 1e-9) / 100.0;
}

}  // namespace labelforge

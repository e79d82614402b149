#pragma once

#include <vector>

namespace labelforge {

struct ConfusionCounts {
  long long t_pos = 0;
  long long t_neg = 0;
  long long f_pos = 0;
  long long f_neg = 0;
  long long total() const { return t_pos + t_neg + f_pos + f_neg; }
};

struct Metrics {
  double accuracy = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  // zero-denominator cases report 0 with the flag set instead of failing
  bool precision_degenerate = false;
  bool recall_degenerate = false;
  bool f1_degenerate = false;
};

// positive_class defaults to Malignant (index 1).
ConfusionCounts confusion(const std::vector<int>& predictions,
                          const std::vector<int>& truth,
                          int positive_class = 1);

Metrics compute_metrics(const ConfusionCounts& counts);

// Arithmetic mean reported at two decimals. The displayed value floors at
// the second decimal (a tiny epsilon absorbs float noise on exact values);
// that is the only rounding rule consistent with every aggregate row this
// function is checked against.
double mean_accuracy(const std::vector<double>& values);

}  // namespace labelforge

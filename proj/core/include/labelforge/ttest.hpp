#pragma once

#include <vector>

namespace labelforge {

struct TTestResult {
  double t = 0;
  int df = 0;
  double p = 1;
  // all differences equal with nonzero mean: t is +/- infinity, p reported 0
  bool infinite_t = false;
};

// Two-tailed paired t-test on equal-length vectors (n >= 2). Sample standard
// deviation uses the n-1 denominator. Zero-variance differences with zero
// mean give t=0, p=1.
TTestResult paired_t_test(const std::vector<double>& a,
                          const std::vector<double>& b);

// Regularized incomplete beta I_x(a, b) by continued fraction, the kernel of
// the t distribution tail: p_two_tailed = I_{df/(df+t^2)}(df/2, 1/2).
double regularized_incomplete_beta(double a, double b, double x);

double student_t_two_tailed_p(double t, int df);

}  // namespace labelforge

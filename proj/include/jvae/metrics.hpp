#pragma once

#include "jvae/common.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace jvae {

/// Counts n_ij of true class i against predicted class j. Labels are
/// compacted, so any integer labels work.
struct ContingencyTable {
  std::vector<std::vector<std::int64_t>> counts;
  std::vector<std::int64_t> row_sums;  ///< a_i
  std::vector<std::int64_t> col_sums;  ///< b_j
  std::int64_t total = 0;

  static ContingencyTable build(std::span<const int> labels_true, std::span<const int> labels_pred);
};

/// Adjusted Rand Index. Returns 1.0 in the degenerate case where the
/// expected and maximum indices coincide (both partitions trivial).
double ari(std::span<const int> labels_true, std::span<const int> labels_pred);

/// 1 - H(true | pred) / H(true), natural-log entropies; 1.0 when H(true) = 0.
double homogeneity(std::span<const int> labels_true, std::span<const int> labels_pred);

using LabelMetric = std::function<double(std::span<const int>, std::span<const int>)>;

struct BootstrapReport {
  double point = 0.0;
  std::vector<double> values;
  double mean = 0.0;
  double sd = 0.0;  ///< sample standard deviation (0 when B = 1)
  double lo = 0.0;  ///< 2.5th percentile
  double hi = 0.0;  ///< 97.5th percentile
  int resamples = 0;
  std::uint64_t seed = 0;
};

/// Paired bootstrap: each resample draws N row indices with replacement and
/// evaluates `metric` on both label vectors at those indices.
BootstrapReport bootstrap_metric(std::span<const int> labels_true, std::span<const int> labels_pred,
                                 const LabelMetric& metric, int resamples, std::uint64_t seed);

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  bool degenerate = false;  ///< both samples constant
};

/// Regularized incomplete beta I_x(a, b) by continued fraction.
double incomplete_beta(double a, double b, double x);
/// Student-t CDF with nu degrees of freedom.
double student_t_cdf(double t, double nu);
/// Two-sided p-value P(|T| >= |t|).
double student_t_two_sided_p(double t, double nu);

enum class Tail { two_sided, greater, less };

/// Welch's unequal-variance t-test; `greater` tests mean(a) > mean(b).
TTestResult welch_ttest(std::span<const double> a, std::span<const double> b,
                        Tail tail = Tail::two_sided);

/// Nearest-rank percentile (always a sample value), q in [0,1].
double percentile(std::vector<double> values, double q);
double median(std::vector<double> values);

}  // namespace jvae

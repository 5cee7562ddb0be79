#include "jvae/metrics.hpp"

#include "jvae/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace jvae {

namespace {

void check_labels(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) {
    throw DimensionError("label vectors differ in length (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
  }
  if (a.size() > 1'000'000) throw ConfigError("label vectors longer than 1e6 are not supported");
}

std::vector<int> compact(std::span<const int> labels, int* n_classes) {
  std::map<int, int> ids;
  for (int l : labels) ids.emplace(l, 0);
  int next = 0;
  for (auto& [k, v] : ids) v = next++;
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = ids[labels[i]];
  *n_classes = next;
  return out;
}

std::int64_t choose2(std::int64_t n) { return n * (n - 1) / 2; }

}  // namespace

ContingencyTable ContingencyTable::build(std::span<const int> labels_true, std::span<const int> labels_pred) {
  check_labels(labels_true, labels_pred);
  int rows = 0;
  int cols = 0;
  const auto t = compact(labels_true, &rows);
  const auto p = compact(labels_pred, &cols);
  ContingencyTable ct;
  ct.counts.assign(static_cast<std::size_t>(rows), std::vector<std::int64_t>(static_cast<std::size_t>(cols), 0));
  ct.row_sums.assign(static_cast<std::size_t>(rows), 0);
  ct.col_sums.assign(static_cast<std::size_t>(cols), 0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    ++ct.counts[static_cast<std::size_t>(t[i])][static_cast<std::size_t>(p[i])];
    ++ct.row_sums[static_cast<std::size_t>(t[i])];
    ++ct.col_sums[static_cast<std::size_t>(p[i])];
  }
  ct.total = static_cast<std::int64_t>(t.size());
  return ct;
}

double ari(std::span<const int> labels_true, std::span<const int> labels_pred) {
  check_labels(labels_true, labels_pred);
  if (labels_true.size() < 2) throw ConfigError("ari: need at least 2 samples");
  const auto ct = ContingencyTable::build(labels_true, labels_pred);

  std::int64_t index = 0;
  for (const auto& row : ct.counts) {
    for (std::int64_t c : row) index += choose2(c);
  }
  std::int64_t sum_a = 0;
  for (std::int64_t a : ct.row_sums) sum_a += choose2(a);
  std::int64_t sum_b = 0;
  for (std::int64_t b : ct.col_sums) sum_b += choose2(b);

  using Wide = long double;
  const Wide expected = static_cast<Wide>(sum_a) * static_cast<Wide>(sum_b) / static_cast<Wide>(choose2(ct.total));
  const Wide max_index = 0.5L * static_cast<Wide>(sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return static_cast<double>((static_cast<Wide>(index) - expected) / (max_index - expected));
}

double homogeneity(std::span<const int> labels_true, std::span<const int> labels_pred) {
  check_labels(labels_true, labels_pred);
  if (labels_true.empty()) return 1.0;
  const auto ct = ContingencyTable::build(labels_true, labels_pred);
  const double n = static_cast<double>(ct.total);

  double h_true = 0.0;
  for (std::int64_t a : ct.row_sums) {
    if (a > 0) {
      const double pa = static_cast<double>(a) / n;
      h_true -= pa * std::log(pa);
    }
  }
  if (h_true == 0.0) return 1.0;

  double h_cond = 0.0;  // H(true | pred)
  for (std::size_t i = 0; i < ct.counts.size(); ++i) {
    for (std::size_t j = 0; j < ct.col_sums.size(); ++j) {
      const auto nij = ct.counts[i][j];
      if (nij == 0) continue;
      h_cond -= (static_cast<double>(nij) / n) *
                std::log(static_cast<double>(nij) / static_cast<double>(ct.col_sums[j]));
    }
  }
  return 1.0 - h_cond / h_true;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ConfigError("percentile of an empty sample");
  std::sort(values.begin(), values.end());
  // Nearest-rank: the result is always one of the sample values.
  const auto n = static_cast<double>(values.size());
  auto rank = static_cast<std::size_t>(std::ceil(q * n));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

double median(std::vector<double> values) {
  if (values.empty()) throw ConfigError("median of an empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

BootstrapReport bootstrap_metric(std::span<const int> labels_true, std::span<const int> labels_pred,
                                 const LabelMetric& metric, int resamples, std::uint64_t seed) {
  check_labels(labels_true, labels_pred);
  if (resamples < 1) throw ConfigError("bootstrap: resamples must be >= 1");
  BootstrapReport rep;
  rep.resamples = resamples;
  rep.seed = seed;
  rep.point = metric(labels_true, labels_pred);

  const std::size_t n = labels_true.size();
  RngStream rng(seed, "bootstrap");
  std::vector<int> bt(n), bp(n);
  rep.values.reserve(static_cast<std::size_t>(resamples));
  for (int b = 0; b < resamples; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = static_cast<std::size_t>(rng.below(n));
      bt[i] = labels_true[j];
      bp[i] = labels_pred[j];
    }
    rep.values.push_back(metric(bt, bp));
  }
  rep.mean = std::accumulate(rep.values.begin(), rep.values.end(), 0.0) / resamples;
  if (resamples > 1) {
    double ss = 0.0;
    for (double v : rep.values) ss += (v - rep.mean) * (v - rep.mean);
    rep.sd = std::sqrt(ss / (resamples - 1));
  }
  rep.lo = percentile(rep.values, 0.025);
  rep.hi = percentile(rep.values, 0.975);
  return rep;
}

namespace {

// Continued fraction for I_x(a,b) (modified Lentz).
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw NumericalError("incomplete beta continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw DomainError("incomplete_beta: a and b must be > 0");
  if (x < 0.0 || x > 1.0) throw DomainError("incomplete_beta: x must be in [0,1]");
  if (x == 0.0 || x == 1.0) return x;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double nu) {
  if (!(nu > 0.0)) throw DomainError("student_t: degrees of freedom must be > 0");
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(0.5 * nu, 0.5, nu / (nu + t * t));
}

double student_t_cdf(double t, double nu) {
  const double tail = 0.5 * student_t_two_sided_p(t, nu);
  return t >= 0.0 ? 1.0 - tail : tail;
}

TTestResult welch_ttest(std::span<const double> a, std::span<const double> b, Tail tail) {
  if (a.size() < 2 || b.size() < 2) throw ConfigError("welch_ttest: each sample needs at least 2 values");
  auto moments = [](std::span<const double> s, double* mean, double* var) {
    const double n = static_cast<double>(s.size());
    *mean = std::accumulate(s.begin(), s.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : s) ss += (v - *mean) * (v - *mean);
    *var = ss / (n - 1.0);
  };
  double ma, va, mb, vb;
  moments(a, &ma, &va);
  moments(b, &mb, &vb);
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double sa = va / na;
  const double sb = vb / nb;

  TTestResult r;
  if (sa + sb == 0.0) {
    r.degenerate = true;
    r.df = na + nb - 2.0;
    if (ma == mb) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = ma > mb ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
      const bool hit = tail == Tail::two_sided || (tail == Tail::greater) == (ma > mb);
      r.p = hit ? 0.0 : 1.0;
    }
    return r;
  }
  r.t = (ma - mb) / std::sqrt(sa + sb);
  r.df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
  switch (tail) {
    case Tail::two_sided: r.p = student_t_two_sided_p(r.t, r.df); break;
    case Tail::greater: r.p = 1.0 - student_t_cdf(r.t, r.df); break;
    case Tail::less: r.p = student_t_cdf(r.t, r.df); break;
  }
  r.p = std::clamp(r.p, 0.0, 1.0);
  return r;
}

}  // namespace jvae

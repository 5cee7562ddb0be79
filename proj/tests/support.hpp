#pragma once

// Independent oracles and fixtures shared by the unit and acceptance tests.

#include "jvae/common.hpp"
#include "jvae/ndgrad.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numbers>
#include <string>
#include <unistd.h>
#include <vector>

namespace jvae::testing {

/// Builds a scalar loss from the given parameters on a fresh graph.
using LossFn = std::function<nd::Var(nd::Graph&, std::vector<nd::Var>&)>;

/// Largest |analytic - numeric| / max(|analytic|, |numeric|, floor) over every
/// parameter entry, numeric from central differences with step h.
inline double gradient_check(std::vector<nd::Parameter*> params, const LossFn& fn, double h = 1e-6,
                             double floor = 1e-2) {
  auto eval = [&] {
    nd::Graph g;
    std::vector<nd::Var> vars;
    for (auto* p : params) vars.push_back(g.param(*p));
    return fn(g, vars).item();
  };
  for (auto* p : params) p->zero_grad();
  {
    nd::Graph g;
    std::vector<nd::Var> vars;
    for (auto* p : params) vars.push_back(g.param(*p));
    g.backward(fn(g, vars));
  }
  double worst = 0.0;
  for (auto* p : params) {
    for (Index i = 0; i < p->value.size(); ++i) {
      double& w = p->value.data()[i];
      const double orig = w;
      w = orig + h;
      const double up = eval();
      w = orig - h;
      const double down = eval();
      w = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p->grad.data()[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  }
  return worst;
}

/// ARI by explicit enumeration of all N(N-1)/2 pairs.
inline double brute_force_ari(const std::vector<int>& a, const std::vector<int>& b) {
  const std::size_t n = a.size();
  double both = 0, only_a = 0, only_b = 0, total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool sa = a[i] == a[j];
      const bool sb = b[i] == b[j];
      both += (sa && sb) ? 1 : 0;
      only_a += sa ? 1 : 0;
      only_b += sb ? 1 : 0;
      total += 1;
    }
  }
  const double expected = only_a * only_b / total;
  const double max_index = 0.5 * (only_a + only_b);
  if (max_index == expected) return 1.0;
  return (both - expected) / (max_index - expected);
}

/// Two-sided Student-t p-value by composite Simpson integration of the
/// density over [0, |t|] in long double.
inline double t_two_sided_by_integration(double t, double nu, int panels = 200000) {
  using L = long double;
  const L v = nu;
  const L log_norm = std::lgamma((v + 1) / 2) - std::lgamma(v / 2) - 0.5L * std::log(v * std::numbers::pi_v<L>);
  auto pdf = [&](L x) { return std::exp(log_norm - (v + 1) / 2 * std::log1p(x * x / v)); };
  const L a = 0, b = std::abs(static_cast<L>(t));
  const L h = (b - a) / panels;
  L s = pdf(a) + pdf(b);
  for (int i = 1; i < panels; ++i) s += pdf(a + i * h) * ((i % 2) ? 4 : 2);
  const L half_mass = s * h / 3;  // P(0 <= T <= |t|)
  return static_cast<double>(1 - 2 * half_mass);
}

/// Kolmogorov-Smirnov distance of a sample from Uniform(0,1).
inline double ks_uniform(std::vector<double> p) {
  std::sort(p.begin(), p.end());
  const double n = static_cast<double>(p.size());
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    d = std::max(d, std::max((i + 1) / n - p[i], p[i] - i / n));
  }
  return d;
}

/// Fresh directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "jvae") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::FILE* f = std::fopen(p.c_str(), "rb");
  if (f == nullptr) return {};
  std::string s;
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) s.append(buf, n);
  std::fclose(f);
  return s;
}

}  // namespace jvae::testing

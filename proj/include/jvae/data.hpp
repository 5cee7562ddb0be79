#pragma once

#include "jvae/common.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace jvae {

/// Records how raw counts were mapped into [0,1] so the transform can be
/// inverted: x = log(1 + count) / global_max.
struct NormManifest {
  std::string transform = "log1p_max";
  double global_max = 1.0;
  bool include_diagonal = false;
};

struct ConnectomeDataset {
  Matrix x;                         ///< N x D, normalized to [0,1]
  std::vector<int> site;            ///< N labels in [0, n_sites)
  int n_sites = 0;
  std::vector<std::string> subject_id;
  std::vector<std::map<std::string, std::string>> meta;  ///< per-row covariates (may be empty)
  NormManifest norm;

  Index size() const { return x.rows(); }
  Index dim() const { return x.cols(); }

  /// Rows `idx` as a new dataset (site labels kept as-is).
  ConnectomeDataset subset(const std::vector<Index>& idx) const;
  /// Throws ConfigError if any invariant (range, label contiguity) fails.
  void validate() const;
};

struct SyntheticConfig {
  Index n_subjects = 800;
  Index n_edges = 300;
  int n_sites = 4;
  Index bio_rank = 4;
  double site_strength = 10.0;   ///< rho, per-edge RMS of the per-site mean shift
  double noise_sd = 0.1;
  /// 0 gives round-robin (balanced) sites; > 0 draws site proportions from a
  /// symmetric Dirichlet with this concentration.
  double site_imbalance = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// The planted generative structure, exposed for tests that need it.
struct SyntheticTruth {
  Vector template_log;  ///< B, D entries ~ U[1,6]
  Matrix loadings;      ///< W, D x r
  Matrix site_means;    ///< M, S x D, orthogonal rows of norm sqrt(D)
  Matrix factors;       ///< u, N x r
  Matrix log_signal;    ///< y before rounding, N x D
};

/// Log-domain model y_i = B + W u_i + rho M[site_i] + eps_i, counts =
/// max(round(exp(y) - 1), 0), then normalize(). Deterministic given cfg.seed.
ConnectomeDataset generate(const SyntheticConfig& cfg, SyntheticTruth* truth = nullptr);

/// Number of strict-upper-triangle (or upper-triangle incl. diagonal) entries.
Index vector_dim(Index regions, bool include_diagonal = false);
/// Inverse of vector_dim; throws FormatError when d is not triangular.
Index region_count(Index d, bool include_diagonal = false);

/// Row-major upper triangle, i < j (or i <= j with the diagonal).
RowVector vectorize(const Matrix& a, bool include_diagonal = false);
/// Symmetric matrix from its vectorized upper triangle; diagonal zero when excluded.
Matrix devectorize(const RowVector& v, Index regions, bool include_diagonal = false);

struct Normalized {
  Matrix x;
  NormManifest manifest;
};

/// x = log1p(count) / G with G the global max of log1p(count).
Normalized normalize(const Matrix& counts);
Matrix denormalize(const Matrix& x, const NormManifest& manifest);

/// Reads `<dir>/metadata.csv` (header `subject_id,site[,covariate...]`) and
/// every file in `dir` whose name matches the glob `pattern` as an R x R
/// matrix named by its stem. Site names are mapped to 0..S-1 in sorted order.
ConnectomeDataset load_matrix_dir(const std::filesystem::path& dir,
                                  const std::string& pattern = "*.csv",
                                  bool include_diagonal = false);

/// Stratified split. Returns (train indices, validation indices).
std::pair<std::vector<Index>, std::vector<Index>> stratified_split(const ConnectomeDataset& ds,
                                                                   double val_fraction,
                                                                   std::uint64_t seed);

/// Between-site / within-site variance ratio of the rows of x.
double site_variance_ratio(const ConnectomeDataset& ds);

// Binary cache: "LFDS1", u64 N, u64 D, u64 S, N*D f64, N u32 labels, JSON manifest.
void save_dataset(const ConnectomeDataset& ds, const std::filesystem::path& path);
ConnectomeDataset load_dataset(const std::filesystem::path& path);

/// Simple '*'/'?' glob match on a file name.
bool glob_match(std::string_view pattern, std::string_view name);

}  // namespace jvae

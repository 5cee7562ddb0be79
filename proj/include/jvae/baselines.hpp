#pragma once

// Linear PCA + k-means and VAE-latent + k-means comparison pipelines.
// The numerical kernels are header templates over Eigen expressions so they
// work for any floating scalar.

#include "jvae/common.hpp"
#include "jvae/rng.hpp"
#include "jvae/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace jvae {

template <typename Scalar>
struct SymmetricEigen {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> values;                 ///< descending
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> vectors;   ///< columns, matching values
  int sweeps = 0;
  Scalar off_norm = 0;  ///< final off-diagonal Frobenius norm
};

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops to
/// tol * ||A||_F (or max_sweeps). Only the symmetric part of `a` is used.
template <typename Derived>
SymmetricEigen<typename Derived::Scalar> jacobi_eigen(const Eigen::MatrixBase<Derived>& a,
                                                      typename Derived::Scalar tol = 1e-12,
                                                      int max_sweeps = 100) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (a.rows() != a.cols()) throw DimensionError("jacobi_eigen: matrix is " + shape_str(a));
  const Index n = a.rows();
  Mat m = (a + a.transpose()) / Scalar(2);
  Mat v = Mat::Identity(n, n);

  auto off = [&m, n]() {
    Scalar s = 0;
    for (Index j = 0; j < n; ++j) {
      for (Index i = 0; i < n; ++i) {
        if (i != j) s += m(i, j) * m(i, j);
      }
    }
    return std::sqrt(s);
  };
  const Scalar target = tol * std::max(m.norm(), std::numeric_limits<Scalar>::min());

  SymmetricEigen<Scalar> out;
  Scalar off_norm = off();
  while (off_norm > target && out.sweeps < max_sweeps) {
    for (Index p = 0; p < n - 1; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const Scalar apq = m(p, q);
        if (apq == Scalar(0)) continue;
        const Scalar theta = (m(q, q) - m(p, p)) / (Scalar(2) * apq);
        const Scalar t = (theta >= 0 ? Scalar(1) : Scalar(-1)) /
                         (std::abs(theta) + std::sqrt(theta * theta + Scalar(1)));
        const Scalar c = Scalar(1) / std::sqrt(t * t + Scalar(1));
        const Scalar s = t * c;
        // A <- J^T A J with J the (p,q) rotation.
        for (Index k = 0; k < n; ++k) {
          const Scalar akp = m(k, p);
          const Scalar akq = m(k, q);
          m(k, p) = c * akp - s * akq;
          m(k, q) = s * akp + c * akq;
        }
        for (Index k = 0; k < n; ++k) {
          const Scalar apk = m(p, k);
          const Scalar aqk = m(q, k);
          m(p, k) = c * apk - s * aqk;
          m(q, k) = s * apk + c * aqk;
        }
        for (Index k = 0; k < n; ++k) {
          const Scalar vkp = v(k, p);
          const Scalar vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
    ++out.sweeps;
    off_norm = off();
  }
  out.off_norm = off_norm;

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&m](Index i, Index j) { return m(i, i) > m(j, j); });
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Index r = 0; r < n; ++r) {
    const Index src = order[static_cast<std::size_t>(r)];
    out.values(r) = m(src, src);
    out.vectors.col(r) = v.col(src);
  }
  return out;
}

template <typename Scalar>
struct PcaModel {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> mean;  ///< 1 x D
  Mat components;                                 ///< D x p, orthonormal columns
  Vec explained_variance;                         ///< p, descending
  Vec spectrum;                                   ///< every eigenvalue found, descending
  bool rank_deficient = false;  ///< fewer than the requested p components were kept
  bool used_gram = false;

  template <typename Derived>
  Mat transform(const Eigen::MatrixBase<Derived>& x) const {
    return (x.rowwise() - mean) * components;
  }
  template <typename Derived>
  Mat inverse_transform(const Eigen::MatrixBase<Derived>& z) const {
    Mat out = z * components.transpose();
    out.rowwise() += mean;
    return out;
  }
};

/// PCA by symmetric eigendecomposition: of the D x D covariance when N >= D,
/// otherwise of the N x N Gram matrix with eigenvectors mapped back to D.
/// Components with variance <= rank_tol * largest are dropped and the model
/// flagged rank-deficient.
template <typename Derived>
PcaModel<typename Derived::Scalar> pca_fit(const Eigen::MatrixBase<Derived>& x, Index p,
                                           typename Derived::Scalar rank_tol = 1e-10) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Index n = x.rows();
  const Index d = x.cols();
  if (n < 2) throw ConfigError("pca_fit: need at least 2 samples");
  if (p < 1 || p > std::min(n, d)) {
    throw ConfigError("pca_fit: p=" + std::to_string(p) + " must be in [1, min(N, D)=" +
                      std::to_string(std::min(n, d)) + "]");
  }
  PcaModel<Scalar> model;
  model.mean = x.colwise().mean();
  const Mat xc = x.rowwise() - model.mean;
  const Scalar denom = static_cast<Scalar>(n - 1);

  Mat basis;  // D x m eigenvectors of the covariance
  if (n < d) {
    model.used_gram = true;
    const Mat gram = (xc * xc.transpose()) / denom;
    auto eig = jacobi_eigen(gram);
    model.spectrum = eig.values;
    basis.resize(d, n);
    for (Index i = 0; i < n; ++i) {
      const Scalar lam = eig.values(i);
      if (lam > 0) {
        basis.col(i) = xc.transpose() * eig.vectors.col(i) / std::sqrt(denom * lam);
      } else {
        basis.col(i).setZero();
      }
    }
  } else {
    const Mat cov = (xc.transpose() * xc) / denom;
    auto eig = jacobi_eigen(cov);
    model.spectrum = eig.values;
    basis = eig.vectors;
  }

  const Scalar top = std::max(model.spectrum(0), Scalar(0));
  Index keep = 0;
  while (keep < p && model.spectrum(keep) > rank_tol * top && top > 0) ++keep;
  model.rank_deficient = keep < p;
  model.components.resize(d, keep);
  model.explained_variance.resize(keep);
  for (Index i = 0; i < keep; ++i) {
    auto col = basis.col(i);
    Index arg = 0;
    col.cwiseAbs().maxCoeff(&arg);
    const Scalar sign = col(arg) < 0 ? Scalar(-1) : Scalar(1);
    model.components.col(i) = sign * col / col.norm();
    model.explained_variance(i) = model.spectrum(i);
  }
  return model;
}

struct KMeansOptions {
  int restarts = 10;
  int max_iter = 300;
  double tol = 1e-6;  ///< relative inertia change
  bool record_history = false;
};

template <typename Scalar>
struct KMeansResult {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> centroids;  ///< k x p
  std::vector<int> assignment;
  Scalar inertia = 0;
  int n_iter = 0;
  int restarts_used = 0;
  /// Inertia after each assignment step, one vector per restart (when recorded).
  std::vector<std::vector<Scalar>> history;
};

namespace detail {

template <typename Mat, typename Derived>
Index nearest(const Mat& centroids, const Eigen::MatrixBase<Derived>& row,
              typename Mat::Scalar* dist) {
  Index best = 0;
  auto best_d = std::numeric_limits<typename Mat::Scalar>::infinity();
  for (Index c = 0; c < centroids.rows(); ++c) {
    const auto dd = (centroids.row(c) - row).squaredNorm();
    if (dd < best_d) {
      best_d = dd;
      best = c;
    }
  }
  *dist = best_d;
  return best;
}

}  // namespace detail

/// k-means++ seeding and Lloyd iterations; best of `restarts` runs by inertia.
/// An empty cluster takes the point currently farthest from its centroid.
template <typename Derived>
KMeansResult<typename Derived::Scalar> kmeans(const Eigen::MatrixBase<Derived>& x, Index k,
                                              std::uint64_t seed, const KMeansOptions& opts = {}) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Index n = x.rows();
  const Index p = x.cols();
  if (k < 1 || k > n) {
    throw ConfigError("kmeans: k=" + std::to_string(k) + " must be in [1, N=" + std::to_string(n) + "]");
  }
  const Mat data = x;

  KMeansResult<Scalar> best;
  best.inertia = std::numeric_limits<Scalar>::infinity();
  for (int r = 0; r < opts.restarts; ++r) {
    RngStream rng(seed, "kmeans.restart." + std::to_string(r));

    // k-means++ seeding.
    Mat cent(k, p);
    std::vector<Scalar> d2(static_cast<std::size_t>(n), std::numeric_limits<Scalar>::infinity());
    cent.row(0) = data.row(static_cast<Index>(rng.below(static_cast<std::uint64_t>(n))));
    for (Index c = 1; c < k; ++c) {
      Scalar total = 0;
      for (Index i = 0; i < n; ++i) {
        d2[static_cast<std::size_t>(i)] =
            std::min(d2[static_cast<std::size_t>(i)], (data.row(i) - cent.row(c - 1)).squaredNorm());
        total += d2[static_cast<std::size_t>(i)];
      }
      Index pick = 0;
      if (total > 0) {
        Scalar u = static_cast<Scalar>(rng.uniform()) * total;
        pick = n - 1;
        for (Index i = 0; i < n; ++i) {
          u -= d2[static_cast<std::size_t>(i)];
          if (u < 0) {
            pick = i;
            break;
          }
        }
      } else {
        pick = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
      }
      cent.row(c) = data.row(pick);
    }

    std::vector<int> assign(static_cast<std::size_t>(n), 0);
    std::vector<Scalar> dist(static_cast<std::size_t>(n), 0);
    std::vector<Scalar> history;
    Scalar prev = std::numeric_limits<Scalar>::infinity();
    Scalar inertia = 0;
    int iter = 0;
    while (true) {
      inertia = 0;
      for (Index i = 0; i < n; ++i) {
        Scalar dd;
        assign[static_cast<std::size_t>(i)] = static_cast<int>(detail::nearest(cent, data.row(i), &dd));
        dist[static_cast<std::size_t>(i)] = dd;
        inertia += dd;
      }
      ++iter;
      if (opts.record_history) history.push_back(inertia);
      const bool converged = std::isfinite(prev) && (prev - inertia) <= opts.tol * std::max(prev, Scalar(1e-300));
      if (converged || iter >= opts.max_iter) break;
      prev = inertia;

      Mat sums = Mat::Zero(k, p);
      std::vector<Index> count(static_cast<std::size_t>(k), 0);
      for (Index i = 0; i < n; ++i) {
        sums.row(assign[static_cast<std::size_t>(i)]) += data.row(i);
        ++count[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
      }
      for (Index c = 0; c < k; ++c) {
        if (count[static_cast<std::size_t>(c)] > 0) {
          cent.row(c) = sums.row(c) / static_cast<Scalar>(count[static_cast<std::size_t>(c)]);
          continue;
        }
        // Empty cluster: steal the farthest point.
        const auto far = std::max_element(dist.begin(), dist.end()) - dist.begin();
        cent.row(c) = data.row(far);
        dist[static_cast<std::size_t>(far)] = 0;
      }
    }

    // Exact inertia of the final partition against the final centroids.
    Scalar exact = 0;
    for (Index i = 0; i < n; ++i) exact += (data.row(i) - cent.row(assign[static_cast<std::size_t>(i)])).squaredNorm();
    if (opts.record_history) best.history.push_back(std::move(history));
    if (exact < best.inertia) {
      best.inertia = exact;
      best.centroids = cent;
      best.assignment = assign;
      best.n_iter = iter;
    }
    best.restarts_used = r + 1;
  }
  return best;
}

/// PCA to p dims then k-means with k clusters. Returns the assignments.
std::vector<int> pca_kmeans_pipeline(const ConnectomeDataset& ds, Index p, Index k, std::uint64_t seed);

struct VaeKmeansFit {
  JointVae vae;
  TrainResult training;
  std::vector<int> assignment;
};

/// Trains a continuous-only VAE (k_classes = 0, plain objective) and clusters
/// its posterior means with k-means. `beta` weights the KL term.
VaeKmeansFit fit_vae_kmeans(const ConnectomeDataset& ds, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                            Index k, std::uint64_t seed, double beta = 1.0);

/// Assignments of fit_vae_kmeans.
std::vector<int> vae_kmeans_pipeline(const ConnectomeDataset& ds, const ModelConfig& model_cfg,
                                     const TrainConfig& train_cfg, Index k, std::uint64_t seed,
                                     double beta = 1.0);

}  // namespace jvae

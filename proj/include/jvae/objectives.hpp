#pragma once

// Loss terms for the joint continuous/discrete VAE. Every term is a batch
// mean of a per-sample quantity summed over its dimensions, in nats.
//
// Each term exists twice: as a graph op (for training) and as a plain
// function of Eigen expressions (for evaluation and tests). The two are
// checked against each other in the unit tests.

#include "jvae/common.hpp"
#include "jvae/ndgrad.hpp"

#include <cmath>
#include <optional>
#include <string>

namespace jvae {

enum class ObjectiveMode { plain, hinge, loss_anneal, arch_anneal };

std::string to_string(ObjectiveMode m);
ObjectiveMode objective_mode_from_string(const std::string& s);

struct ObjectiveSpec {
  ObjectiveMode mode = ObjectiveMode::arch_anneal;
  double beta = 1.0;    ///< single weight for hinge / annealed modes
  double beta_c = 1.0;  ///< plain mode, continuous KL weight
  double beta_d = 1.0;  ///< plain mode, discrete KL weight
  std::optional<double> capacity_c;  ///< hinge mode, nats
  std::optional<double> capacity_d;  ///< hinge mode, nats

  void validate() const;
};

/// All fields are batch means in nats. For every mode
/// total == recon + penalty_c + penalty_d, where the penalties are the
/// weighted KL contributions that mode adds.
struct LossBreakdown {
  double total = 0.0;
  double recon = 0.0;
  double kl_c = 0.0;
  double kl_d = 0.0;
  double kl_c_annealed = 0.0;
  double penalty_c = 0.0;
  double penalty_d = 0.0;
};

// ---- graph versions -------------------------------------------------------

/// batch mean of 1/2 ||x - x_hat||^2.
nd::Var recon_loss(nd::Var x, nd::Var x_hat);
/// batch mean of 1/2 sum_j (sigma_j^2 + mu_j^2 - 1 - log sigma_j^2).
nd::Var kl_continuous(nd::Var mu, nd::Var log_var);
/// batch mean of sum_i q_i (log q_i + log K), q = softmax(logits).
nd::Var kl_discrete(nd::Var logits);
/// batch mean of 1/2 sum_j (exp(lambda log sigma^2) + lambda^2 mu^2 - 1 - lambda log sigma^2),
/// evaluated on the raw (unscaled) encoder heads.
nd::Var kl_continuous_annealed(nd::Var mu, nd::Var log_var, double lambda);

struct LossParts {
  nd::Var recon;
  nd::Var kl_c;
  nd::Var kl_d;           ///< invalid for continuous-only models (treated as 0)
  nd::Var kl_c_annealed;  ///< required by loss_anneal
};

struct Objective {
  nd::Var total;
  LossBreakdown parts;
};

/// recon + beta |kl_c - C_c| + beta |kl_d - C_d|.
Objective hinge_objective(nd::Var recon, nd::Var kl_c, nd::Var kl_d, double beta, double capacity_c,
                          double capacity_d);

/// plain:       recon + beta_c kl_c + beta_d kl_d
/// hinge:       recon + beta |kl_c - C_c| + beta |kl_d - C_d|
/// loss_anneal: recon + beta kl_c_annealed + beta kl_d
/// arch_anneal: recon + beta kl_c + beta kl_d (kl_c already sees the scaled heads)
Objective compose(const ObjectiveSpec& spec, const LossParts& parts);

// ---- value versions -------------------------------------------------------

template <typename DX, typename DY>
double recon_loss(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DY>& x_hat) {
  if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols()) {
    throw DimensionError("recon_loss: " + shape_str(x) + " vs " + shape_str(x_hat));
  }
  return 0.5 * (x - x_hat).squaredNorm() / static_cast<double>(x.rows());
}

template <typename DM, typename DV>
double kl_continuous(const Eigen::MatrixBase<DM>& mu, const Eigen::MatrixBase<DV>& log_var) {
  const auto lv = log_var.array();
  return 0.5 * (lv.exp() + mu.array().square() - 1.0 - lv).sum() / static_cast<double>(mu.rows());
}

template <typename DM, typename DV>
double kl_continuous_annealed(const Eigen::MatrixBase<DM>& mu, const Eigen::MatrixBase<DV>& log_var,
                              double lambda) {
  const auto lv = log_var.array();
  return 0.5 *
         ((lambda * lv).exp() + lambda * lambda * mu.array().square() - 1.0 - lambda * lv).sum() /
         static_cast<double>(mu.rows());
}

double kl_discrete(const Matrix& logits);

LossBreakdown hinge_objective(double recon, double kl_c, double kl_d, double beta, double capacity_c,
                              double capacity_d);

}  // namespace jvae

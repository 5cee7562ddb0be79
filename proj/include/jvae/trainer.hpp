#pragma once

#include "jvae/data.hpp"
#include "jvae/model.hpp"
#include "jvae/objectives.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace jvae {

/// Linear warm-up: lambda(t) = min(t / anneal_iters, 1).
struct Schedule {
  std::int64_t anneal_iters = 5000;
};

double lambda_at(const Schedule& schedule, std::int64_t t);

struct TrainConfig {
  std::int64_t epochs = 2500;
  Index batch_size = 512;
  std::int64_t anneal_iters = 5000;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  double grad_clip = 10.0;  ///< global L2 norm; <= 0 disables clipping
  /// Start the decoder at the data mean (JointVae::set_output_prior).
  bool init_output_prior = true;
  std::uint64_t seed = 0;
  std::int64_t log_every = 0;  ///< progress line to stderr; 0 = silent
  std::int64_t checkpoint_every = 0;
  std::filesystem::path checkpoint_dir;

  void validate(Index n_samples) const;
  /// floor(n / batch_size): the last partial batch of an epoch is dropped.
  std::int64_t iters_per_epoch(Index n_samples) const { return n_samples / batch_size; }
  std::int64_t total_iters(Index n_samples) const { return epochs * iters_per_epoch(n_samples); }
};

struct LogRow {
  std::int64_t iter = 0;
  double lambda = 0.0;
  LossBreakdown loss;
};

struct TrainResult {
  std::vector<LogRow> log;
  std::vector<double> epoch_recon;  ///< mean recon per epoch
  std::int64_t iterations = 0;
};

/// Raised when the loss becomes non-finite. Carries the last finite breakdown.
class TrainingAborted : public NumericalError {
 public:
  TrainingAborted(std::int64_t iteration, LossBreakdown last_finite);
  std::int64_t iteration() const { return iteration_; }
  const LossBreakdown& last_finite() const { return last_finite_; }

 private:
  std::int64_t iteration_;
  LossBreakdown last_finite_;
};

/// Adaptive-moment optimizer with bias correction.
class Adam {
 public:
  Adam(std::vector<nd::Parameter*> params, double lr, double beta1, double beta2, double eps,
       double weight_decay = 0.0);
  void step();
  std::int64_t steps() const { return t_; }

 private:
  std::vector<nd::Parameter*> params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  double lr_, beta1_, beta2_, eps_, weight_decay_;
  std::int64_t t_ = 0;
};

/// Scales all gradients so their joint L2 norm is at most max_norm. Returns
/// the norm before clipping.
double clip_grad_norm(const std::vector<nd::Parameter*>& params, double max_norm);

/// Checks that model and objective modes agree (e.g. arch_anneal needs both).
void check_compatible(const ModelConfig& model, const ObjectiveSpec& spec);

/// One forward pass plus loss for a batch. Used by train() and by tests that
/// compare modes on shared weights and noise.
struct StepResult {
  ForwardPass pass;
  Objective objective;
};
StepResult evaluate_step(nd::Graph& g, JointVae& model, const ObjectiveSpec& spec, const Matrix& x,
                         double lambda, const ForwardNoise& noise);

TrainResult train(JointVae& model, const ConnectomeDataset& ds, const ObjectiveSpec& spec,
                  const TrainConfig& cfg);

Latents extract_latents(const JointVae& model, const ConnectomeDataset& ds);

/// Number of classes holding at least `min_share` of the assignments.
int effective_classes(const std::vector<int>& assignment, Index k, double min_share = 0.01);

void write_training_log(const std::vector<LogRow>& log, const std::filesystem::path& path);

}  // namespace jvae

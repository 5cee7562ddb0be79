#pragma once

#include "jvae/common.hpp"
#include "jvae/ndgrad.hpp"
#include "jvae/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace jvae {

enum class AnnealMode { none, hinge, loss_anneal, arch_anneal };

std::string to_string(AnnealMode m);
AnnealMode anneal_mode_from_string(const std::string& s);

struct ModelConfig {
  Index input_dim = 300;
  std::vector<Index> hidden_dims{1024, 512, 256, 128};
  Index z_c_dim = 32;
  /// Number of discrete categories. 0 builds a plain continuous VAE.
  Index k_classes = 25;
  double gumbel_temperature = 0.67;
  AnnealMode anneal_mode = AnnealMode::arch_anneal;
  /// Feed one-hot argmax samples forward with soft-sample gradients.
  bool straight_through = false;

  bool has_discrete() const { return k_classes > 0; }
  void validate() const;
};

struct Linear {
  nd::Parameter weight;  ///< in x out
  nd::Parameter bias;    ///< 1 x out
};

class JointVae;
struct LatentPosterior;

template <typename Model>
LatentPosterior encode_impl(nd::Graph& g, Model& model, const Matrix& x, double lambda);
template <typename Model>
nd::Var decode_impl(nd::Graph& g, Model& model, nd::Var z_c, nd::Var z_d);

/// Encoder: hidden_dims ReLU layers, then three linear heads (mu, log_var,
/// logits). Decoder: the reversed hidden widths on concat(z_c, z_d), then a
/// sigmoid output layer.
class JointVae {
 public:
  JointVae(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  /// Every trainable tensor in declaration order (also the checkpoint order).
  std::vector<nd::Parameter*> parameters();
  std::vector<const nd::Parameter*> parameters() const;
  void zero_grad();

  /// Sets the output bias to logit(mean) so the untrained decoder already
  /// predicts the per-feature mean. `mean` entries are clamped to (0,1).
  void set_output_prior(const RowVector& mean);

 private:
  template <typename Model>
  friend LatentPosterior encode_impl(nd::Graph&, Model&, const Matrix&, double);
  template <typename Model>
  friend nd::Var decode_impl(nd::Graph&, Model&, nd::Var, nd::Var);

  ModelConfig cfg_;
  std::vector<Linear> encoder_;
  Linear mu_head_;
  Linear log_var_head_;
  Linear logits_head_;  ///< empty when k_classes == 0
  std::vector<Linear> decoder_;
  Linear output_;
};

/// Posterior parameters as graph nodes. Under arch_anneal mu and log_var are
/// already lambda-scaled; `raw_mu`/`raw_log_var` are the unscaled heads (the
/// same nodes in every other mode).
struct LatentPosterior {
  nd::Var mu;
  nd::Var log_var;
  nd::Var logits;  ///< invalid when the model has no discrete channel
  nd::Var raw_mu;
  nd::Var raw_log_var;
  double lambda_applied = 1.0;
};

struct DiscreteSample {
  nd::Var soft;             ///< batch x K; what the decoder sees
  std::vector<int> hard;    ///< rowwise argmax of the relaxed sample
};

LatentPosterior encode(nd::Graph& g, JointVae& model, const Matrix& x, double lambda);

/// z_c = mu + exp(log_var / 2) * eps. `eps` is a constant: no gradient.
nd::Var sample_continuous(const LatentPosterior& post, const Matrix& eps);

/// softmax((logits + gumbel) / tau); hard = argmax. With straight_through the
/// forward value is the one-hot of `hard` while gradients follow the soft sample.
DiscreteSample sample_discrete(const LatentPosterior& post, const Matrix& gumbel, double tau,
                               bool straight_through = false);

/// x_hat in (0,1)^D. `z_d` is ignored (may be invalid) for continuous-only models.
nd::Var decode(nd::Graph& g, JointVae& model, nd::Var z_c, nd::Var z_d);

std::vector<int> argmax_rows(const Matrix& m);

/// Noise for one forward pass.
struct ForwardNoise {
  Matrix eps;     ///< batch x z_c_dim standard normal
  Matrix gumbel;  ///< batch x K standard Gumbel (empty for continuous-only)

  static ForwardNoise draw(RngStream& rng, Index batch, const ModelConfig& cfg);
  static ForwardNoise zeros(Index batch, const ModelConfig& cfg);
};

struct ForwardPass {
  LatentPosterior posterior;
  nd::Var z_c;
  DiscreteSample z_d;
  nd::Var x_hat;
};

/// encode -> sample both channels -> decode.
ForwardPass forward(nd::Graph& g, JointVae& model, const Matrix& x, double lambda,
                    const ForwardNoise& noise);

/// Noise-free evaluation pass at lambda = 1.
struct Latents {
  Matrix mu;                    ///< N x z_c_dim
  std::vector<int> assignment;  ///< argmax softmax(logits); empty for continuous-only
  Matrix probs;                 ///< N x K posterior class probabilities
};

Latents extract_latents(const JointVae& model, const Matrix& x);

// Checkpoint: "LFCK1", u64 length + JSON ModelConfig, each parameter as raw
// little-endian f64 in declaration order, u64 iteration, u64 count then
// (u64 length + bytes) per PRNG stream state.
struct CheckpointExtras {
  std::uint64_t iteration = 0;
  std::vector<std::string> rng_states;
};

void save_checkpoint(const JointVae& model, const CheckpointExtras& extras,
                     const std::filesystem::path& path);
JointVae load_checkpoint(const std::filesystem::path& path, CheckpointExtras* extras = nullptr);

}  // namespace jvae

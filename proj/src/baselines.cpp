#include "jvae/baselines.hpp"

#include "jvae/data.hpp"
#include "jvae/trainer.hpp"

namespace jvae {

std::vector<int> pca_kmeans_pipeline(const ConnectomeDataset& ds, Index p, Index k, std::uint64_t seed) {
  const auto pca = pca_fit(ds.x, p);
  const Matrix z = pca.transform(ds.x);
  return kmeans(z, k, seed).assignment;
}

VaeKmeansFit fit_vae_kmeans(const ConnectomeDataset& ds, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                            Index k, std::uint64_t seed, double beta) {
  ModelConfig cfg = model_cfg;
  cfg.k_classes = 0;
  cfg.anneal_mode = AnnealMode::none;
  cfg.input_dim = ds.dim();
  VaeKmeansFit fit{JointVae(cfg, seed), {}, {}};
  ObjectiveSpec spec;
  spec.mode = ObjectiveMode::plain;
  spec.beta_c = beta;
  TrainConfig tc = train_cfg;
  tc.seed = seed;
  fit.training = train(fit.vae, ds, spec, tc);
  const Latents lat = extract_latents(fit.vae, ds);
  fit.assignment = kmeans(lat.mu, k, seed).assignment;
  return fit;
}

std::vector<int> vae_kmeans_pipeline(const ConnectomeDataset& ds, const ModelConfig& model_cfg,
                                     const TrainConfig& train_cfg, Index k, std::uint64_t seed,
                                     double beta) {
  return fit_vae_kmeans(ds, model_cfg, train_cfg, k, seed, beta).assignment;
}

}  // namespace jvae

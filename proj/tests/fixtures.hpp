#pragma once

#include "jvae/harness.hpp"

#include <filesystem>

namespace jvae::testing {

/// Sub-second experiment: 64 subjects, 15 edges, 2 sites, one hidden layer.
inline ExperimentConfig tiny_experiment(const std::filesystem::path& out) {
  ExperimentConfig c = ExperimentConfig::desk();
  c.data.synthetic.n_subjects = 64;
  c.data.synthetic.n_edges = 15;
  c.data.synthetic.n_sites = 2;
  c.data.synthetic.site_strength = 4.0;
  c.model.hidden_dims = {8};
  c.model.z_c_dim = 2;
  c.model.k_classes = 2;
  c.train.epochs = 3;
  c.train.batch_size = 16;
  c.seeds = {1, 2};
  c.methods = {Method::jointvae_arch, Method::pca_kmeans};
  c.class_grid = {2};
  c.capacities = {1.0, 20.0};
  c.capacity_classes = 3;
  c.anneal_fractions = {0.5, 1.0};
  c.bootstrap_resamples = 50;
  c.out = out;
  c.verbose = false;
  return c;
}

}  // namespace jvae::testing

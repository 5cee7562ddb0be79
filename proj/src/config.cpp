#include "jvae/config.hpp"

#include <algorithm>
#include <cstring>

namespace jvae {

using nlohmann::json;

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed, const char* section) {
  if (!j.is_object()) throw ConfigError(std::string(section) + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&key](const char* a) { return key == a; });
    if (!known) throw ConfigError(std::string(section) + ": unknown key '" + key + "'");
  }
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

void to_json(json& j, const ModelConfig& c) {
  j = json{{"input_dim", c.input_dim},
           {"hidden_dims", c.hidden_dims},
           {"z_c_dim", c.z_c_dim},
           {"k_classes", c.k_classes},
           {"gumbel_temperature", c.gumbel_temperature},
           {"anneal_mode", to_string(c.anneal_mode)},
           {"straight_through", c.straight_through}};
}

void from_json(const json& j, ModelConfig& c) {
  reject_unknown_keys(j,
                      {"input_dim", "hidden_dims", "z_c_dim", "k_classes", "gumbel_temperature",
                       "anneal_mode", "straight_through"},
                      "model");
  read(j, "input_dim", c.input_dim);
  read(j, "hidden_dims", c.hidden_dims);
  read(j, "z_c_dim", c.z_c_dim);
  read(j, "k_classes", c.k_classes);
  read(j, "gumbel_temperature", c.gumbel_temperature);
  if (j.contains("anneal_mode")) c.anneal_mode = anneal_mode_from_string(j.at("anneal_mode").get<std::string>());
  read(j, "straight_through", c.straight_through);
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"anneal_iters", c.anneal_iters},
           {"learning_rate", c.learning_rate},
           {"beta1", c.beta1},
           {"beta2", c.beta2},
           {"adam_eps", c.adam_eps},
           {"weight_decay", c.weight_decay},
           {"grad_clip", c.grad_clip},
           {"init_output_prior", c.init_output_prior},
           {"seed", c.seed},
           {"log_every", c.log_every},
           {"checkpoint_every", c.checkpoint_every},
           {"checkpoint_dir", c.checkpoint_dir.string()}};
}

void from_json(const json& j, TrainConfig& c) {
  reject_unknown_keys(j,
                      {"epochs", "batch_size", "anneal_iters", "learning_rate", "beta1", "beta2", "adam_eps",
                       "weight_decay", "grad_clip", "init_output_prior", "seed", "log_every", "checkpoint_every", "checkpoint_dir"},
                      "train");
  read(j, "epochs", c.epochs);
  read(j, "batch_size", c.batch_size);
  read(j, "anneal_iters", c.anneal_iters);
  read(j, "learning_rate", c.learning_rate);
  read(j, "beta1", c.beta1);
  read(j, "beta2", c.beta2);
  read(j, "adam_eps", c.adam_eps);
  read(j, "weight_decay", c.weight_decay);
  read(j, "grad_clip", c.grad_clip);
  read(j, "init_output_prior", c.init_output_prior);
  read(j, "seed", c.seed);
  read(j, "log_every", c.log_every);
  read(j, "checkpoint_every", c.checkpoint_every);
  if (j.contains("checkpoint_dir")) c.checkpoint_dir = j.at("checkpoint_dir").get<std::string>();
}

void to_json(json& j, const ObjectiveSpec& c) {
  j = json{{"mode", to_string(c.mode)}, {"beta", c.beta}, {"beta_c", c.beta_c}, {"beta_d", c.beta_d}};
  j["capacity_c"] = c.capacity_c ? json(*c.capacity_c) : json(nullptr);
  j["capacity_d"] = c.capacity_d ? json(*c.capacity_d) : json(nullptr);
}

void from_json(const json& j, ObjectiveSpec& c) {
  reject_unknown_keys(j, {"mode", "beta", "beta_c", "beta_d", "capacity_c", "capacity_d"}, "objective");
  if (j.contains("mode")) c.mode = objective_mode_from_string(j.at("mode").get<std::string>());
  read(j, "beta", c.beta);
  read(j, "beta_c", c.beta_c);
  read(j, "beta_d", c.beta_d);
  if (j.contains("capacity_c") && !j.at("capacity_c").is_null()) c.capacity_c = j.at("capacity_c").get<double>();
  if (j.contains("capacity_d") && !j.at("capacity_d").is_null()) c.capacity_d = j.at("capacity_d").get<double>();
}

void to_json(json& j, const SyntheticConfig& c) {
  j = json{{"n_subjects", c.n_subjects},     {"n_edges", c.n_edges},
           {"n_sites", c.n_sites},           {"bio_rank", c.bio_rank},
           {"site_strength", c.site_strength}, {"noise_sd", c.noise_sd},
           {"site_imbalance", c.site_imbalance}, {"seed", c.seed}};
}

void from_json(const json& j, SyntheticConfig& c) {
  reject_unknown_keys(j,
                      {"n_subjects", "n_edges", "n_sites", "bio_rank", "site_strength", "noise_sd",
                       "site_imbalance", "seed"},
                      "synthetic");
  read(j, "n_subjects", c.n_subjects);
  read(j, "n_edges", c.n_edges);
  read(j, "n_sites", c.n_sites);
  read(j, "bio_rank", c.bio_rank);
  read(j, "site_strength", c.site_strength);
  read(j, "noise_sd", c.noise_sd);
  read(j, "site_imbalance", c.site_imbalance);
  read(j, "seed", c.seed);
}

}  // namespace jvae

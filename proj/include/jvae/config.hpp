#pragma once

// JSON mapping for every configuration struct. Missing keys keep their
// defaults; unknown keys are rejected so typos surface as config errors.

#include "jvae/data.hpp"
#include "jvae/model.hpp"
#include "jvae/objectives.hpp"
#include "jvae/trainer.hpp"

#include <json.hpp>

namespace jvae {

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

void to_json(nlohmann::json& j, const ObjectiveSpec& c);
void from_json(const nlohmann::json& j, ObjectiveSpec& c);

void to_json(nlohmann::json& j, const SyntheticConfig& c);
void from_json(const nlohmann::json& j, SyntheticConfig& c);

/// Throws ConfigError naming the first key of `j` not in `allowed`.
void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                         const char* section);

}  // namespace jvae

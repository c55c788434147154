#pragma once

#include <string>

#include <json.hpp>

#include "dpsw/estimator.hpp"

namespace dpsw {

// Versioned JSON checkpoint: mode, dims, frozen statistics, hyperparameters,
// and every layer as a row-major matrix with recorded shape.
void save_checkpoint(const DPSWModel& model, const std::string& path);
DPSWModel load_checkpoint(const std::string& path);

nlohmann::json hyperparams_to_json(const Hyperparams& hp);
// Unknown keys are rejected; absent keys keep their defaults.
Hyperparams hyperparams_from_json(const nlohmann::json& j);

}  // namespace dpsw

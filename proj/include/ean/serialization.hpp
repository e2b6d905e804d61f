#pragma once

// Portable JSON form of parameters and whole model bundles.
//
// model.json layout:
//   { "format": "ean-model/1",
//     "metadata": { "hidden_size", "embedding_dim", "config_hash", "best_epoch" },
//     "config": { key: value, ... },
//     "vocabulary": [ token, ... ],
//     "parameters": { "<network>.<name>": { "shape": [r, c], "values": [...] }, ... },
//     "frozen": [ "<network>.<name>", ... ] }
// Values are row-major. The embedding table is stored as parameter
// "embeddings.table".

#include "ean/training.hpp"

#include "json.hpp"

#include <filesystem>

namespace ean {

nlohmann::json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const nlohmann::json& j);

/// Adds every entry of `params` under `prefix.` to `out`.
void parameters_to_json(const ParameterSet& params, const std::string& prefix, nlohmann::json& out);
/// Overwrites the values of `params` from `in`; names and shapes must match.
void parameters_from_json(ParameterSet& params, const std::string& prefix, const nlohmann::json& in);

nlohmann::json bundle_to_json(const ModelBundle& bundle);
ModelBundle bundle_from_json(const nlohmann::json& j);

/// Writes model.json, config.txt and epochs.csv into `dir` (created if needed).
void save_bundle(const std::filesystem::path& dir, const ModelBundle& bundle);
ModelBundle load_bundle(const std::filesystem::path& dir);

}  // namespace ean

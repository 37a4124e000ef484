#pragma once

#include <filesystem>

#include "json.hpp"

#include "gbdtbp/datasets.hpp"
#include "gbdtbp/stack.hpp"

namespace gbdtbp {

inline constexpr int kModelFormatVersion = 1;

struct ModelFile {
  int format_version = kModelFormatVersion;
  nlohmann::json config;  // echo of the run configuration
  DatasetEncoding encoding;
  LayerStack stack;
};

nlohmann::json tree_to_json(const DecisionTree& tree);
DecisionTree tree_from_json(const nlohmann::json& j);

nlohmann::json layer_to_json(const Layer& layer);
Layer layer_from_json(const nlohmann::json& j);

nlohmann::json stack_to_json(const LayerStack& stack);
LayerStack stack_from_json(const nlohmann::json& j);

nlohmann::json encoding_to_json(const DatasetEncoding& encoding);
DatasetEncoding encoding_from_json(const nlohmann::json& j);

nlohmann::json model_to_json(const ModelFile& model);
// Throws VersionMismatch for files written by a newer format.
ModelFile model_from_json(const nlohmann::json& j);

void save_model(const std::filesystem::path& path, const ModelFile& model);
ModelFile load_model(const std::filesystem::path& path);

}  // namespace gbdtbp

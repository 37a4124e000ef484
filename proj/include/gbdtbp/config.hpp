#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "gbdtbp/datasets.hpp"
#include "gbdtbp/stack.hpp"

namespace gbdtbp {

// Either a named generator ("circle", "curve", "rand-nn") or a CSV file.
struct DatasetSpec {
  std::string generator;
  std::size_t n = 2000;
  std::uint64_t seed = 0;
  std::filesystem::path csv;
  std::vector<std::string> targets;
  std::vector<std::string> categorical;
  Task task = Task::Regression;
};

struct CvSettings {
  std::size_t folds = 10;
  std::uint64_t seed = 0;
};

struct GradcheckSettings {
  std::size_t points = 100;
  double eps = 1e-5;
  double tolerance = 1e-5;
};

struct RunConfig {
  DatasetSpec dataset;
  TrainConfig train;
  CvSettings cv;
  GradcheckSettings gradcheck;
  std::filesystem::path output_dir = "out";
  bool dump_hidden = false;
};

// Parses the nested configuration document. Unknown keys at any level are
// rejected with ConfigError. Missing loss/metric default from the dataset
// task: classification with one output uses mse + accuracy, with several
// outputs softmax_ce + accuracy; regression uses mse + rmse.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json run_config_to_json(const RunConfig& config);

Dataset load_dataset(const DatasetSpec& spec);

}  // namespace gbdtbp

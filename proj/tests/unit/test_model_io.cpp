#include <filesystem>

#include "doctest.h"
#include "gbdtbp/error.hpp"
#include "gbdtbp/experiments.hpp"
#include "gbdtbp/model_io.hpp"

using namespace gbdtbp;

namespace {

TrainConfig hybrid_config() {
  TrainConfig c;
  c.widths = {2, 3, 2, 1};
  GbdtLayerSpec g;
  g.params.n_boosters = 3;
  g.params.tree.max_depth = 3;
  GbdtLayerSpec constant = g;
  constant.params.tree.leaf_mode = LeafMode::Constant;
  DenseLayerSpec d;
  d.activation = Activation::Relu;
  c.layers = {g, d, constant};
  c.epochs = 2;
  return c;
}

}  // namespace

TEST_CASE("model files round-trip predictions bitwise") {
  const Dataset data = gen_circle(200, 4);
  const TrainedModel trained = train_model(hybrid_config(), data);
  ModelFile file;
  file.stack = trained.stack;
  file.encoding = data.encoding;
  file.config = {{"note", "test"}};

  const auto path = std::filesystem::temp_directory_path() / "gbdtbp_model_io_test.json";
  save_model(path, file);
  const ModelFile back = load_model(path);
  std::filesystem::remove(path);

  CHECK(back.format_version == kModelFormatVersion);
  CHECK(back.config == file.config);
  CHECK(back.encoding.feature_width() == data.encoding.feature_width());
  CHECK(predict(back.stack, data.x) == predict(trained.stack, data.x));
  CHECK(stack_to_json(back.stack) == stack_to_json(trained.stack));
}

TEST_CASE("tree json round trip keeps structure") {
  const Dataset data = gen_curve(100, 1);
  BoosterParams p;
  p.n_boosters = 2;
  p.tree.max_depth = 2;
  const Booster b = fit_booster(data.x, data.y.column(1), p);
  for (const DecisionTree& t : b.trees()) {
    const DecisionTree back = tree_from_json(tree_to_json(t));
    CHECK(back.nodes().size() == t.nodes().size());
    for (std::size_t r = 0; r < data.rows(); ++r) CHECK(back.predict(data.x.row(r)) == t.predict(data.x.row(r)));
  }
}

TEST_CASE("model files: version and malformed input") {
  ModelFile file;
  file.stack = train_model(hybrid_config(), gen_circle(100, 2)).stack;
  nlohmann::json j = model_to_json(file);
  j["format_version"] = kModelFormatVersion + 1;
  try {
    model_from_json(j);
    FAIL("expected VersionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::VersionMismatch);
  }
  CHECK_THROWS_AS(model_from_json(nlohmann::json::object()), Error);
  CHECK_THROWS_AS(load_model("/nonexistent/gbdtbp/model.json"), Error);
}

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gbdtbp/config.hpp"
#include "gbdtbp/datasets.hpp"
#include "gbdtbp/error.hpp"
#include "gbdtbp/experiments.hpp"
#include "gbdtbp/metrics.hpp"
#include "gbdtbp/model_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gbdtbp;

namespace {

// Flags shared by every command that builds a run configuration. Unset flags
// leave the config file untouched.
struct Overrides {
  std::string config_path;
  std::optional<std::string> generator;
  std::optional<std::size_t> n;
  std::optional<std::uint64_t> data_seed;
  std::optional<std::string> csv;
  std::vector<std::string> targets;
  std::vector<std::string> categorical;
  std::optional<std::string> task;

  std::vector<std::size_t> widths;
  std::optional<int> n_boosters;
  std::optional<double> shrinkage;
  std::optional<int> max_depth;
  std::optional<int> min_samples_leaf;
  std::optional<int> min_samples_split;
  std::optional<double> lambda;
  std::optional<std::string> leaf_mode;

  std::optional<double> alpha;
  std::optional<double> mu;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> loss;
  std::optional<std::string> metric;
  std::optional<double> init_std;
  std::optional<std::string> gradient_scale;

  std::optional<std::size_t> folds;
  std::optional<std::uint64_t> cv_seed;
  std::optional<std::size_t> points;
  std::optional<double> eps;
  std::optional<double> tolerance;

  std::optional<std::string> output_dir;
  bool dump_hidden = false;
};

void add_dataset_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "JSON run configuration");
  cmd->add_option("--generator", o.generator, "circle | curve | rand-nn");
  cmd->add_option("--n", o.n, "rows to generate");
  cmd->add_option("--data-seed", o.data_seed, "generator seed");
  cmd->add_option("--data", o.csv, "CSV file with a header row");
  cmd->add_option("--target", o.targets, "target column (repeatable)");
  cmd->add_option("--categorical", o.categorical, "categorical feature column (repeatable)");
  cmd->add_option("--task", o.task, "regression | classification");
}

void add_model_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--widths", o.widths, "layer widths d0,...,dL")->delimiter(',');
  cmd->add_option("--n-boosters", o.n_boosters, "boosters per output (all GBDT layers)");
  cmd->add_option("--shrinkage", o.shrinkage, "booster shrinkage");
  cmd->add_option("--max-depth", o.max_depth);
  cmd->add_option("--min-samples-leaf", o.min_samples_leaf);
  cmd->add_option("--min-samples-split", o.min_samples_split);
  cmd->add_option("--lambda", o.lambda, "ridge penalty of linear leaves");
  cmd->add_option("--leaf-mode", o.leaf_mode, "linear | constant");
  cmd->add_option("--alpha", o.alpha, "hidden-variable learning rate");
  cmd->add_option("--mu", o.mu, "momentum");
  cmd->add_option("--epochs", o.epochs);
  cmd->add_option("--seed", o.seed, "training seed");
  cmd->add_option("--loss", o.loss, "mse | softmax_ce");
  cmd->add_option("--metric", o.metric, "rmse | accuracy");
  cmd->add_option("--init-std", o.init_std, "std of the initial hidden targets");
  cmd->add_option("--gradient-scale", o.gradient_scale, "per_sample | mean");
}

json read_config_json(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open config '" + path + "'");
  try {
    return json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigError, "invalid config '" + path + "': " + e.what());
  }
}

template <class T>
void patch(json& j, const char* key, const std::optional<T>& value) {
  if (value) j[key] = *value;
}

// Flags are written into the config document before it is parsed, so the
// file and the command line go through the same validation.
RunConfig resolve_config(const Overrides& o) {
  json j = read_config_json(o.config_path);
  if (!j.is_object()) fail(ErrorCode::ConfigError, "config must be an object");

  if (o.generator || o.csv) {
    // A new data source replaces the old one wholesale.
    json& d = j["dataset"];
    if (!d.is_object()) d = json::object();
    d.erase("generator");
    d.erase("csv");
  }
  if (o.generator || o.n || o.data_seed || o.csv || !o.targets.empty() ||
      !o.categorical.empty() || o.task) {
    json& d = j["dataset"];
    if (!d.is_object()) d = json::object();
    patch(d, "generator", o.generator);
    patch(d, "n", o.n);
    patch(d, "seed", o.data_seed);
    patch(d, "csv", o.csv);
    if (!o.targets.empty()) d["targets"] = o.targets;
    if (!o.categorical.empty()) d["categorical"] = o.categorical;
    patch(d, "task", o.task);
  }

  json layer_patch = json::object();
  patch(layer_patch, "n_boosters", o.n_boosters);
  patch(layer_patch, "shrinkage", o.shrinkage);
  patch(layer_patch, "max_depth", o.max_depth);
  patch(layer_patch, "min_samples_leaf", o.min_samples_leaf);
  patch(layer_patch, "min_samples_split", o.min_samples_split);
  patch(layer_patch, "lambda", o.lambda);
  patch(layer_patch, "leaf_mode", o.leaf_mode);
  if (!o.widths.empty() || !layer_patch.empty()) {
    json& m = j["model"];
    if (!m.is_object()) m = json::object();
    if (!o.widths.empty()) m["widths"] = o.widths;
    if (!layer_patch.empty()) {
      if (m.contains("layers")) {
        for (json& layer : m["layers"]) {
          if (layer.value("type", std::string("gbdt")) == "gbdt") layer.update(layer_patch);
        }
      } else {
        json& shared = m["layer"];
        if (!shared.is_object()) shared = json::object();
        shared.update(layer_patch);
      }
    }
  }

  json train_patch = json::object();
  patch(train_patch, "alpha", o.alpha);
  patch(train_patch, "mu", o.mu);
  patch(train_patch, "epochs", o.epochs);
  patch(train_patch, "seed", o.seed);
  patch(train_patch, "loss", o.loss);
  patch(train_patch, "metric", o.metric);
  patch(train_patch, "init_std", o.init_std);
  patch(train_patch, "gradient_scale", o.gradient_scale);
  if (!train_patch.empty()) {
    json& t = j["train"];
    if (!t.is_object()) t = json::object();
    t.update(train_patch);
  }

  if (o.folds || o.cv_seed) {
    json& c = j["cv"];
    if (!c.is_object()) c = json::object();
    patch(c, "folds", o.folds);
    patch(c, "seed", o.cv_seed);
  }
  if (o.points || o.eps || o.tolerance) {
    json& g = j["gradcheck"];
    if (!g.is_object()) g = json::object();
    patch(g, "points", o.points);
    patch(g, "eps", o.eps);
    patch(g, "tolerance", o.tolerance);
  }
  patch(j, "output_dir", o.output_dir);
  if (o.dump_hidden) j["dump_hidden"] = true;
  return parse_run_config(j);
}

void emit(const json& record) {
  std::cout << record.dump() << '\n' << std::flush;
}

// Writes doubles in shortest round-trip form so record files are stable.
std::string jsonl_number(double v) { return format_double(v); }

std::string history_line(const EpochRecord& r, MetricKind metric) {
  std::ostringstream os;
  os << "{\"epoch\":" << r.epoch << ",\"loss\":" << jsonl_number(r.loss) << ",\""
     << to_string(metric) << "\":" << jsonl_number(r.metric) << "}";
  return os.str();
}

// Streams epoch records to stdout and the history file, and writes hidden
// dumps when asked.
class CliObserver : public TrainObserver {
 public:
  CliObserver(const RunConfig& config, const Matrix& y, std::ofstream& history)
      : config_(config), y_(y), history_(history) {}

  void on_epoch_end(int epoch, const LayerStack& /*stack*/,
                    const std::vector<Matrix>& hiddens) override {
    if (config_.dump_hidden) {
      for (std::size_t i = 0; i < hiddens.size(); ++i) {
        std::vector<std::string> header;
        for (std::size_t c = 0; c < hiddens[i].cols(); ++c) header.push_back("h" + std::to_string(c));
        write_matrix_csv(config_.output_dir / ("hidden_L" + std::to_string(i + 1) + "_epoch" +
                                                std::to_string(epoch) + ".csv"),
                         hiddens[i], header);
      }
    }
    if (epoch == 0) return;
    EpochRecord r;
    r.epoch = epoch;
    r.loss = loss_and_gradient(hiddens.back(), y_, config_.train.loss).loss;
    r.metric = evaluate_metric(hiddens.back(), y_, config_.train.metric, config_.train.loss);
    const std::string line = history_line(r, config_.train.metric);
    history_ << line << '\n';
    std::cout << line << '\n' << std::flush;
  }

 private:
  const RunConfig& config_;
  const Matrix& y_;
  std::ofstream& history_;
};

int cmd_gen(const std::string& generator, std::size_t n, std::uint64_t seed,
            const std::string& out) {
  DatasetSpec spec;
  spec.generator = generator;
  spec.n = n;
  spec.seed = seed;
  const Dataset data = load_dataset(spec);
  if (out.empty()) fail(ErrorCode::ConfigError, "gen needs --out");
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  write_csv(out, data);
  emit({{"command", "gen"},
        {"generator", generator},
        {"rows", data.rows()},
        {"features", data.x.cols()},
        {"targets", data.target_names},
        {"path", out}});
  return 0;
}

int cmd_train(const Overrides& o) {
  const RunConfig config = resolve_config(o);
  const Dataset data = load_dataset(config.dataset);
  fs::create_directories(config.output_dir);
  const fs::path history_path = config.output_dir / "history.jsonl";
  std::ofstream history(history_path, std::ios::binary);
  if (!history) fail(ErrorCode::IoError, "cannot write '" + history_path.string() + "'");

  CliObserver observer(config, data.y, history);
  TrainedModel model = train_model(config.train, data, &observer);
  history.close();
  if (!history) fail(ErrorCode::IoError, "failed writing '" + history_path.string() + "'");

  ModelFile file;
  file.config = run_config_to_json(config);
  file.encoding = data.encoding;
  file.stack = std::move(model.stack);
  const fs::path model_path = config.output_dir / "model.json";
  save_model(model_path, file);

  json done = {{"command", "train"},
               {"rows", data.rows()},
               {"epochs", config.train.epochs},
               {"model", model_path.string()},
               {"history", history_path.string()}};
  if (!model.result.history.empty()) {
    done[to_string(config.train.metric)] = model.result.history.back().metric;
    done["loss"] = model.result.history.back().loss;
  }
  emit(done);
  return 0;
}

int cmd_eval(const std::string& model_path, const Overrides& o) {
  const ModelFile model = load_model(model_path);
  Dataset data;
  if (o.csv) {
    data = load_csv(*o.csv, model.encoding);
  } else if (o.generator || !o.config_path.empty()) {
    data = load_dataset(resolve_config(o).dataset);
  } else {
    // Default to the data the model was trained on.
    data = load_dataset(parse_run_config(model.config).dataset);
  }
  if (data.x.cols() != model.stack.input_dim()) {
    fail(ErrorCode::DimensionMismatch, "model expects " + std::to_string(model.stack.input_dim()) +
                                           " features, data has " +
                                           std::to_string(data.x.cols()));
  }
  if (data.y.cols() != model.stack.output_dim()) {
    fail(ErrorCode::DimensionMismatch, "model predicts " +
                                           std::to_string(model.stack.output_dim()) +
                                           " outputs, data has " + std::to_string(data.y.cols()) +
                                           " target columns");
  }
  const RunConfig trained = parse_run_config(model.config);
  MetricKind metric = trained.train.metric;
  if (o.metric) metric = parse_metric(*o.metric);
  const Matrix pred = predict(model.stack, data.x);
  const double value = evaluate_metric(pred, data.y, metric, model.stack.loss);
  const double loss = loss_and_gradient(pred, data.y, model.stack.loss).loss;
  std::cout << "{\"command\":\"eval\",\"rows\":" << data.rows() << ",\"loss\":"
            << format_double(loss) << ",\"" << to_string(metric)
            << "\":" << format_double(value) << "}\n";
  return 0;
}

int cmd_gradcheck(const Overrides& o, const std::string& model_path) {
  RunConfig config = resolve_config(o);
  LayerStack stack;
  Matrix reference;
  if (!model_path.empty()) {
    ModelFile model = load_model(model_path);
    stack = std::move(model.stack);
    const RunConfig trained = parse_run_config(model.config);
    reference = load_dataset(config.dataset.generator.empty() && config.dataset.csv.empty()
                                 ? trained.dataset
                                 : config.dataset)
                    .x;
  } else {
    const Dataset data = load_dataset(config.dataset);
    stack = train_model(config.train, data).stack;
    reference = data.x;
  }
  Rng rng(config.train.seed);
  const GradcheckReport report = gradcheck_stack(stack, reference, config.gradcheck, rng);
  emit({{"command", "gradcheck"},
        {"points_checked", report.points_checked},
        {"points_rejected", report.points_rejected},
        {"max_abs_error", report.max_abs_error},
        {"tolerance", report.tolerance},
        {"analytic_all_zero", report.analytic_all_zero},
        {"zero_jacobian_layers", report.zero_jacobian_layers},
        {"passed", report.passed}});
  return 0;
}

int cmd_cv(const Overrides& o) {
  const RunConfig config = resolve_config(o);
  const Dataset data = load_dataset(config.dataset);
  const CvReport report = run_cv(config, data);
  const std::string name = to_string(report.metric);
  for (const FoldResult& f : report.folds) {
    emit({{"command", "cv"},
          {"fold", f.fold},
          {"train_rows", f.train_rows},
          {"test_rows", f.test_rows},
          {"train_" + name, f.train_metric},
          {"test_" + name, f.test_metric}});
  }
  emit({{"command", "cv"},
        {"folds", report.folds.size()},
        {"metric", name},
        {"mean", report.mean},
        {"std", report.std},
        {"summary", format_mean_std(report.mean, report.std)}});
  return 0;
}

void report_error(const std::string& code, const std::string& message) {
  std::cerr << json{{"error", code}, {"message", message}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-layered gradient boosted decision trees trained by back-propagation"};
  app.require_subcommand(1);

  std::string gen_name;
  std::size_t gen_n = 2000;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen", "write a synthetic dataset as CSV");
  gen->add_option("generator", gen_name, "circle | curve | rand-nn")->required();
  gen->add_option("--n", gen_n, "rows");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--out", gen_out, "output CSV path")->required();

  Overrides train_o;
  auto* train = app.add_subcommand("train", "train a stack and write model.json + history.jsonl");
  add_dataset_flags(train, train_o);
  add_model_flags(train, train_o);
  train->add_option("--out", train_o.output_dir, "output directory");
  train->add_flag("--dump-hidden", train_o.dump_hidden, "write hidden_L{i}_epoch{e}.csv");

  Overrides eval_o;
  std::string eval_model;
  auto* eval = app.add_subcommand("eval", "evaluate a saved model");
  eval->add_option("--model", eval_model, "model.json")->required();
  add_dataset_flags(eval, eval_o);
  eval->add_option("--metric", eval_o.metric, "rmse | accuracy");

  Overrides grad_o;
  std::string grad_model;
  auto* grad = app.add_subcommand("gradcheck", "compare back-propagated and numerical gradients");
  add_dataset_flags(grad, grad_o);
  add_model_flags(grad, grad_o);
  grad->add_option("--model", grad_model, "check a saved model instead of training one");
  grad->add_option("--points", grad_o.points);
  grad->add_option("--eps", grad_o.eps);
  grad->add_option("--tolerance", grad_o.tolerance);

  Overrides cv_o;
  auto* cv = app.add_subcommand("cv", "k-fold cross-validation");
  add_dataset_flags(cv, cv_o);
  add_model_flags(cv, cv_o);
  cv->add_option("--folds", cv_o.folds);
  cv->add_option("--cv-seed", cv_o.cv_seed, "fold assignment seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("UsageError", e.what());
    return 2;
  }

  try {
    if (*gen) return cmd_gen(gen_name, gen_n, gen_seed, gen_out);
    if (*train) return cmd_train(train_o);
    if (*eval) return cmd_eval(eval_model, eval_o);
    if (*grad) return cmd_gradcheck(grad_o, grad_model);
    if (*cv) return cmd_cv(cv_o);
  } catch (const Error& e) {
    report_error(std::string(error_code_name(e.code())), e.what());
    return 1;
  } catch (const std::exception& e) {
    report_error("InternalError", e.what());
    return 1;
  }
  return 1;
}

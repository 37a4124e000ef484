#include "gbdtbp/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string_view>

#include "gbdtbp/error.hpp"
#include "gbdtbp/metrics.hpp"

namespace gbdtbp {

std::string to_string(Task task) {
  return task == Task::Regression ? "regression" : "classification";
}

Task parse_task(const std::string& name) {
  if (name == "regression") return Task::Regression;
  if (name == "classification") return Task::Classification;
  fail(ErrorCode::ConfigError, "unknown task '" + name + "'");
}

std::size_t DatasetEncoding::feature_width() const {
  std::size_t width = 0;
  for (const ColumnEncoding& c : features) width += c.categorical ? c.categories.size() : 1;
  return width;
}

std::size_t DatasetEncoding::target_width() const {
  if (task == Task::Regression) return target_columns.size();
  return classes.size() == 2 ? 1 : classes.size();
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.x = select_rows(x, rows);
  out.y = select_rows(y, rows);
  out.feature_names = feature_names;
  out.target_names = target_names;
  out.task = task;
  out.encoding = encoding;
  return out;
}

namespace {

DatasetEncoding numeric_encoding(std::size_t features, std::vector<std::string> targets,
                                 Task task, std::vector<std::string> classes = {}) {
  DatasetEncoding enc;
  for (std::size_t j = 0; j < features; ++j) enc.features.push_back(ColumnEncoding{"x" + std::to_string(j), false, {}});
  enc.target_columns = std::move(targets);
  enc.task = task;
  enc.classes = std::move(classes);
  return enc;
}

void fill_names(Dataset& data) {
  data.feature_names.clear();
  for (const ColumnEncoding& c : data.encoding.features) {
    if (!c.categorical) {
      data.feature_names.push_back(c.name);
      continue;
    }
    for (const std::string& cat : c.categories) data.feature_names.push_back(c.name + "=" + cat);
  }
  data.target_names.clear();
  if (data.task == Task::Regression) {
    data.target_names = data.encoding.target_columns;
  } else if (data.encoding.classes.size() == 2) {
    data.target_names.push_back(data.encoding.target_columns.front() + "=" +
                                data.encoding.classes[1]);
  } else {
    for (const std::string& cls : data.encoding.classes) {
      data.target_names.push_back(data.encoding.target_columns.front() + "=" + cls);
    }
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

RawTable split_table(const std::string& text) {
  RawTable table;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      fields.emplace_back(trim(rest.substr(0, comma)));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (table.header.empty()) {
      table.header = std::move(fields);
      continue;
    }
    if (fields.size() != table.header.size()) {
      fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected " +
                                      std::to_string(table.header.size()) + " fields, got " +
                                      std::to_string(fields.size()));
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (fields[c].empty()) {
        fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ", column '" +
                                        table.header[c] + "': missing value");
      }
    }
    table.rows.push_back(std::move(fields));
  }
  if (table.header.empty()) fail(ErrorCode::ParseError, "CSV has no header row");
  return table;
}

double parse_number(const std::string& field, std::size_t row, const std::string& column) {
  double value = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  if (begin != end && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
    fail(ErrorCode::ParseError, "row " + std::to_string(row + 1) + ", column '" + column +
                                    "': not a finite number: '" + field + "'");
  }
  return value;
}

std::size_t column_index(const RawTable& table, const std::string& name) {
  auto it = std::find(table.header.begin(), table.header.end(), name);
  if (it == table.header.end()) fail(ErrorCode::ParseError, "missing column '" + name + "'");
  return static_cast<std::size_t>(it - table.header.begin());
}

Dataset encode(const RawTable& table, const DatasetEncoding& enc) {
  const std::size_t n = table.rows.size();
  if (n == 0) fail(ErrorCode::EmptyInput, "CSV has no data rows");
  Dataset data;
  data.encoding = enc;
  data.task = enc.task;
  data.x = Matrix(n, enc.feature_width());
  data.y = Matrix(n, enc.target_width());

  std::size_t offset = 0;
  for (const ColumnEncoding& col : enc.features) {
    const std::size_t src = column_index(table, col.name);
    for (std::size_t r = 0; r < n; ++r) {
      const std::string& field = table.rows[r][src];
      if (!col.categorical) {
        data.x(r, offset) = parse_number(field, r, col.name);
        continue;
      }
      auto it = std::lower_bound(col.categories.begin(), col.categories.end(), field);
      if (it != col.categories.end() && *it == field) {
        data.x(r, offset + static_cast<std::size_t>(it - col.categories.begin())) = 1.0;
      }
    }
    offset += col.categorical ? col.categories.size() : 1;
  }

  if (enc.task == Task::Regression) {
    for (std::size_t t = 0; t < enc.target_columns.size(); ++t) {
      const std::size_t src = column_index(table, enc.target_columns[t]);
      for (std::size_t r = 0; r < n; ++r) {
        data.y(r, t) = parse_number(table.rows[r][src], r, enc.target_columns[t]);
      }
    }
  } else {
    const std::size_t src = column_index(table, enc.target_columns.front());
    for (std::size_t r = 0; r < n; ++r) {
      const std::string& field = table.rows[r][src];
      auto it = std::lower_bound(enc.classes.begin(), enc.classes.end(), field);
      if (it == enc.classes.end() || *it != field) {
        fail(ErrorCode::ParseError, "row " + std::to_string(r + 1) + ": unknown class '" +
                                        field + "'");
      }
      const auto cls = static_cast<std::size_t>(it - enc.classes.begin());
      if (enc.classes.size() == 2) {
        data.y(r, 0) = cls == 1 ? 1.0 : 0.0;
      } else {
        data.y(r, cls) = 1.0;
      }
    }
  }
  fill_names(data);
  return data;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

Dataset gen_circle(std::size_t n, std::uint64_t seed) {
  if (n % 2 != 0) fail(ErrorCode::InvalidArgument, "gen_circle needs an even n");
  Rng rng(seed);
  Dataset data;
  data.task = Task::Classification;
  data.x = Matrix(n, 2);
  data.y = Matrix(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const bool inner = i % 2 == 1;
    const double radius = inner ? rng.uniform(0.4, 0.6) : rng.uniform(0.8, 1.0);
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    data.x(i, 0) = radius * std::cos(angle);
    data.x(i, 1) = radius * std::sin(angle);
    data.y(i, 0) = inner ? 1.0 : 0.0;
  }
  data.encoding = numeric_encoding(2, {"label"}, Task::Classification, {"0", "1"});
  fill_names(data);
  return data;
}

Dataset gen_curve(std::size_t n, std::uint64_t seed) {
  if (n == 0) fail(ErrorCode::InvalidArgument, "gen_curve needs n >= 1");
  Rng rng(seed);
  Dataset data;
  data.task = Task::Regression;
  data.x = Matrix(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    double t;
    do {
      t = rng.uniform(-1.0, 1.0);
    } while (t == -1.0);
    data.x(i, 0) = t;
    data.x(i, 1) = rng.normal(0.0, 0.05) + std::sin(t);
    data.x(i, 2) = rng.normal(0.0, 0.05) + std::cos(t);
  }
  data.y = data.x;
  data.encoding = numeric_encoding(3, {"y0", "y1", "y2"}, Task::Regression);
  fill_names(data);
  return data;
}

Dataset gen_random_nn(std::size_t n, std::uint64_t seed, std::size_t in_dim, std::size_t hidden) {
  if (n == 0 || in_dim == 0 || hidden == 0) {
    fail(ErrorCode::InvalidArgument, "gen_random_nn needs positive sizes");
  }
  Rng root(seed);
  Rng net_rng = root.split(0);
  Rng input_rng = root.split(1);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(in_dim));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  const Matrix w1 = gaussian_matrix(hidden, in_dim, 0.0, s1, net_rng);
  const Matrix b1 = gaussian_matrix(hidden, 1, 0.0, s1, net_rng);
  const Matrix w2 = gaussian_matrix(1, hidden, 0.0, s2, net_rng);
  const double b2 = net_rng.normal(0.0, s2);

  Dataset data;
  data.task = Task::Regression;
  data.x = Matrix(n, in_dim);
  data.y = Matrix(n, 1);
  Vector act(hidden);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = data.x.row(i);
    for (double& v : row) v = input_rng.uniform();
    for (std::size_t h = 0; h < hidden; ++h) act[h] = std::max(0.0, b1(h, 0) + dot(w1.row(h), row));
    data.y(i, 0) = b2 + dot(w2.row(0), act);
  }
  data.encoding = numeric_encoding(in_dim, {"y"}, Task::Regression);
  fill_names(data);
  return data;
}

Dataset parse_csv(const std::string& text, const std::vector<std::string>& target_columns,
                  const std::vector<std::string>& categorical_columns, Task task) {
  const RawTable table = split_table(text);
  if (target_columns.empty()) fail(ErrorCode::ConfigError, "no target columns given");
  if (task == Task::Classification && target_columns.size() != 1) {
    fail(ErrorCode::ConfigError, "classification takes exactly one target column");
  }
  for (const std::string& t : target_columns) column_index(table, t);
  for (const std::string& c : categorical_columns) column_index(table, c);

  DatasetEncoding enc;
  enc.task = task;
  enc.target_columns = target_columns;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    const std::string& name = table.header[c];
    if (std::find(target_columns.begin(), target_columns.end(), name) != target_columns.end()) {
      continue;
    }
    ColumnEncoding col{name, false, {}};
    col.categorical = std::find(categorical_columns.begin(), categorical_columns.end(), name) !=
                      categorical_columns.end();
    if (col.categorical) {
      std::set<std::string> seen;
      for (const auto& row : table.rows) seen.insert(row[c]);
      col.categories.assign(seen.begin(), seen.end());
    }
    enc.features.push_back(std::move(col));
  }
  if (task == Task::Classification) {
    const std::size_t src = column_index(table, target_columns.front());
    std::set<std::string> seen;
    for (const auto& row : table.rows) seen.insert(row[src]);
    enc.classes.assign(seen.begin(), seen.end());
    if (enc.classes.size() < 2) fail(ErrorCode::ParseError, "classification needs >= 2 classes");
  }
  return encode(table, enc);
}

Dataset parse_csv(const std::string& text, const DatasetEncoding& encoding) {
  return encode(split_table(text), encoding);
}

Dataset load_csv(const std::filesystem::path& path, const std::vector<std::string>& target_columns,
                 const std::vector<std::string>& categorical_columns, Task task) {
  return parse_csv(read_file(path), target_columns, categorical_columns, task);
}

Dataset load_csv(const std::filesystem::path& path, const DatasetEncoding& encoding) {
  return parse_csv(read_file(path), encoding);
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) fail(ErrorCode::IoError, "cannot format number");
  return std::string(buf, ptr);
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m,
                      const std::vector<std::string>& header) {
  if (header.size() != m.cols()) fail(ErrorCode::DimensionMismatch, "CSV header width");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? "," : "") << format_double(m(r, c));
    out << '\n';
  }
  if (!out) fail(ErrorCode::IoError, "write failed for '" + path.string() + "'");
}

void write_csv(const std::filesystem::path& path, const Dataset& data) {
  const DatasetEncoding& enc = data.encoding;
  for (const ColumnEncoding& c : enc.features) {
    if (c.categorical) fail(ErrorCode::InvalidArgument, "write_csv supports numeric features only");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  std::vector<std::string> header;
  for (const ColumnEncoding& c : enc.features) header.push_back(c.name);
  for (const std::string& t : enc.target_columns) header.push_back(t);
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << '\n';
  for (std::size_t r = 0; r < data.rows(); ++r) {
    for (std::size_t c = 0; c < data.x.cols(); ++c) {
      out << (c ? "," : "") << format_double(data.x(r, c));
    }
    if (enc.task == Task::Regression) {
      for (std::size_t t = 0; t < data.y.cols(); ++t) out << ',' << format_double(data.y(r, t));
    } else {
      const std::size_t cls = data.y.cols() == 1 ? (data.y(r, 0) > 0.5 ? 1 : 0)
                                                 : argmax(data.y.row(r));
      out << ',' << enc.classes[cls];
    }
    out << '\n';
  }
  if (!out) fail(ErrorCode::IoError, "write failed for '" + path.string() + "'");
}

std::vector<std::size_t> FoldPlan::test_rows(std::size_t fold) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] == fold) rows.push_back(i);
  }
  return rows;
}

std::vector<std::size_t> FoldPlan::train_rows(std::size_t fold) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] != fold) rows.push_back(i);
  }
  return rows;
}

std::vector<std::size_t> FoldPlan::fold_sizes() const {
  std::vector<std::size_t> sizes(k, 0);
  for (std::size_t a : assignments) ++sizes[a];
  return sizes;
}

FoldPlan kfold(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 1 || k > n) {
    fail(ErrorCode::InvalidK, "k = " + std::to_string(k) + " must lie in [1, n = " +
                                  std::to_string(n) + "]");
  }
  Rng rng(seed);
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.assignments.assign(n, 0);
  const std::size_t base = n / k;
  const std::size_t extra = n % k;
  std::size_t pos = 0;
  for (std::size_t fold = 0; fold < k; ++fold) {
    const std::size_t size = base + (fold < extra ? 1 : 0);
    for (std::size_t j = 0; j < size; ++j) plan.assignments[perm[pos++]] = fold;
  }
  return plan;
}

}  // namespace gbdtbp

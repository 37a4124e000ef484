#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gbdtbp/numeric.hpp"

namespace gbdtbp {

enum class Task { Regression, Classification };

std::string to_string(Task task);
Task parse_task(const std::string& name);

// How raw CSV columns become model inputs. Categorical features expand into
// one indicator column per category (lexicographic order); a value unseen at
// fit time encodes as an all-zero block. Classification targets expand the
// same way, except that a two-class target stays a single 0/1 column
// indicating classes[1].
struct ColumnEncoding {
  std::string name;
  bool categorical = false;
  std::vector<std::string> categories;
};

struct DatasetEncoding {
  std::vector<ColumnEncoding> features;
  std::vector<std::string> target_columns;
  Task task = Task::Regression;
  std::vector<std::string> classes;  // classification only

  std::size_t feature_width() const;
  std::size_t target_width() const;
};

struct Dataset {
  Matrix x;
  Matrix y;
  std::vector<std::string> feature_names;
  std::vector<std::string> target_names;
  Task task = Task::Regression;
  DatasetEncoding encoding;

  std::size_t rows() const noexcept { return x.rows(); }
  Dataset subset(const std::vector<std::size_t>& rows) const;
};

// n/2 outer points (radius U(0.8, 1.0), label 0) and n/2 inner points
// (radius U(0.4, 0.6), label 1); angles U(0, 2 pi). Rows alternate outer,
// inner. Target is a single 0/1 column.
Dataset gen_circle(std::size_t n, std::uint64_t seed);

// [t, sin t + N(0, 0.05), cos t + N(0, 0.05)], t ~ U(-1, 1); Y = X.
Dataset gen_curve(std::size_t n, std::uint64_t seed);

// Inputs U(0, 1)^in_dim; target from a fixed random network
// Dense(in_dim, hidden) -> ReLU -> Dense(hidden, 1) whose weights and biases
// are N(0, 1 / fan_in).
Dataset gen_random_nn(std::size_t n, std::uint64_t seed, std::size_t in_dim = 32,
                      std::size_t hidden = 16);

// Comma-delimited with a header row. Columns not listed as targets are
// features; every non-categorical field must parse as a finite number.
Dataset load_csv(const std::filesystem::path& path, const std::vector<std::string>& target_columns,
                 const std::vector<std::string>& categorical_columns, Task task);
// Applies an encoding learned earlier (e.g. stored with a model).
Dataset load_csv(const std::filesystem::path& path, const DatasetEncoding& encoding);
Dataset parse_csv(const std::string& text, const std::vector<std::string>& target_columns,
                  const std::vector<std::string>& categorical_columns, Task task);
Dataset parse_csv(const std::string& text, const DatasetEncoding& encoding);

// Writes feature columns followed by target columns. Classification targets
// are written back as class labels; numbers use shortest round-trip form.
void write_csv(const std::filesystem::path& path, const Dataset& data);
void write_matrix_csv(const std::filesystem::path& path, const Matrix& m,
                      const std::vector<std::string>& header);

std::string format_double(double v);

struct FoldPlan {
  std::size_t k = 0;
  std::vector<std::size_t> assignments;  // fold index per row
  std::uint64_t seed = 0;

  std::vector<std::size_t> test_rows(std::size_t fold) const;
  std::vector<std::size_t> train_rows(std::size_t fold) const;
  std::vector<std::size_t> fold_sizes() const;
};

// Seeded permutation split into k folds whose sizes differ by at most one.
FoldPlan kfold(std::size_t n, std::size_t k, std::uint64_t seed);

}  // namespace gbdtbp

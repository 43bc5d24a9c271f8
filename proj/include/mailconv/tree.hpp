#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace mailconv {

/// Dense row-major matrix; NaN marks a missing value.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

/// Per-feature split candidates. A feature with at most 255 distinct values
/// keeps every value as a candidate; otherwise 255 quantiles are used.
class Quantizer {
 public:
  static constexpr std::uint8_t kMissingCode = 255;
  static constexpr std::size_t kMaxEdges = 255;

  static Quantizer fit(const Matrix& x);

  /// Smallest k with x <= edge k; kMissingCode for NaN.
  std::uint8_t code(std::size_t feature, double x) const;
  const std::vector<double>& edges(std::size_t feature) const { return edges_[feature]; }
  std::size_t features() const noexcept { return edges_.size(); }

 private:
  std::vector<std::vector<double>> edges_;
};

/// Column-major codes of a training matrix.
struct QuantizedData {
  Quantizer quantizer;
  std::size_t rows = 0;
  std::vector<std::uint8_t> codes;  // feature-major: codes[f * rows + i]

  static QuantizedData build(const Matrix& x);
  std::uint8_t code(std::size_t row, std::size_t feature) const { return codes[feature * rows + row]; }
};

struct TreeParams {
  std::size_t max_depth = 12;
  double min_leaf = 5;  // minimum training weight per child
};

/// Binary classification tree, Gini impurity, axis-aligned "x <= threshold"
/// splits. Missing values follow the child that received more training
/// weight at fit time.
class DecisionTree {
 public:
  struct Node {
    std::int32_t feature = -1;  // -1 for a leaf
    double threshold = 0;
    bool missing_left = true;
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    std::vector<double> probabilities;  // leaves only
  };

  DecisionTree() = default;
  explicit DecisionTree(std::vector<Node> nodes, std::size_t n_classes);

  /// Rows with zero weight are ignored. Labels must be < n_classes.
  static DecisionTree fit(const QuantizedData& data, std::span<const std::uint8_t> labels, std::size_t n_classes,
                          std::span<const double> weights, const TreeParams& params);

  std::span<const double> predict_proba(std::span<const double> x) const;

  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  std::size_t n_classes() const noexcept { return n_classes_; }
  std::size_t depth() const;

 private:
  std::vector<Node> nodes_;
  std::size_t n_classes_ = 0;
};

}  // namespace mailconv

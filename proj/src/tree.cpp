#include "mailconv/tree.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "mailconv/error.hpp"

namespace mailconv {

Quantizer Quantizer::fit(const Matrix& x) {
  Quantizer q;
  q.edges_.resize(x.cols);
  std::vector<double> values;
  for (std::size_t f = 0; f < x.cols; ++f) {
    values.clear();
    for (std::size_t r = 0; r < x.rows; ++r)
      if (double v = x.at(r, f); !std::isnan(v)) values.push_back(v);
    std::sort(values.begin(), values.end());
    auto& e = q.edges_[f];
    std::unique_copy(values.begin(), values.end(), std::back_inserter(e));
    if (e.size() > kMaxEdges) {
      e.clear();
      const auto n = values.size();
      for (std::size_t k = 1; k <= kMaxEdges; ++k) {
        const double v = values[(k * n + kMaxEdges - 1) / kMaxEdges - 1];
        if (e.empty() || e.back() < v) e.push_back(v);
      }
    }
  }
  return q;
}

std::uint8_t Quantizer::code(std::size_t feature, double x) const {
  if (std::isnan(x)) return kMissingCode;
  const auto& e = edges_[feature];
  const auto k = static_cast<std::size_t>(std::lower_bound(e.begin(), e.end(), x) - e.begin());
  // Values above every edge only occur outside the fitted data.
  return static_cast<std::uint8_t>(std::min(k, kMaxEdges - 1));
}

QuantizedData QuantizedData::build(const Matrix& x) {
  QuantizedData d;
  d.quantizer = Quantizer::fit(x);
  d.rows = x.rows;
  d.codes.resize(x.rows * x.cols);
  for (std::size_t f = 0; f < x.cols; ++f)
    for (std::size_t r = 0; r < x.rows; ++r) d.codes[f * x.rows + r] = d.quantizer.code(f, x.at(r, f));
  return d;
}

// ---------------------------------------------------------------------------

DecisionTree::DecisionTree(std::vector<Node> nodes, std::size_t n_classes)
    : nodes_(std::move(nodes)), n_classes_(n_classes) {
  if (nodes_.empty()) throw DomainError("tree without nodes");
  for (const auto& n : nodes_) {
    if (n.feature < 0) {
      if (n.probabilities.size() != n_classes_) throw DomainError("leaf probability vector of the wrong size");
    } else if (n.left >= nodes_.size() || n.right >= nodes_.size()) {
      throw DomainError("tree node points outside the tree");
    }
  }
}

namespace {

class Builder {
 public:
  Builder(const QuantizedData& data, std::span<const std::uint8_t> labels, std::size_t k,
          std::span<const double> weights, const TreeParams& params)
      : data_(data), labels_(labels), k_(k), weights_(weights), params_(params), hist_(256 * k) {}

  std::vector<DecisionTree::Node> run() {
    std::vector<std::uint32_t> idx;
    for (std::size_t i = 0; i < data_.rows; ++i)
      if (weights_[i] > 0) idx.push_back(static_cast<std::uint32_t>(i));
    if (idx.empty()) throw DomainError("tree training set is empty");
    grow(idx, 0);
    return std::move(nodes_);
  }

 private:
  struct Split {
    std::size_t feature = 0;
    std::size_t bin = 0;
    bool missing_left = true;
    double score = 0;
  };

  std::uint32_t grow(std::vector<std::uint32_t>& idx, std::size_t depth) {
    std::vector<double> totals(k_, 0.0);
    for (auto i : idx) totals[labels_[i]] += weights_[i];
    double w = 0, sq = 0;
    for (double t : totals) {
      w += t;
      sq += t * t;
    }
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();

    const bool pure = std::count_if(totals.begin(), totals.end(), [](double t) { return t > 0; }) <= 1;
    std::optional<Split> split;
    if (!pure && depth < params_.max_depth && w >= 2 * params_.min_leaf) split = best_split(idx, sq / w, w);
    if (!split) {
      auto& leaf = nodes_[id];
      leaf.probabilities = totals;
      for (auto& p : leaf.probabilities) p /= w;
      return id;
    }

    const auto f = split->feature;
    const auto b = split->bin;
    std::vector<std::uint32_t> left, right;
    for (auto i : idx) {
      const auto c = data_.code(i, f);
      const bool go_left = c == Quantizer::kMissingCode ? split->missing_left : c <= b;
      (go_left ? left : right).push_back(i);
    }
    std::vector<std::uint32_t>().swap(idx);
    const auto l = grow(left, depth + 1);
    const auto r = grow(right, depth + 1);
    auto& node = nodes_[id];
    node.feature = static_cast<std::int32_t>(f);
    node.threshold = data_.quantizer.edges(f)[b];
    node.missing_left = split->missing_left;
    node.left = l;
    node.right = r;
    return id;
  }

  std::optional<Split> best_split(const std::vector<std::uint32_t>& idx, double parent_score, double total) {
    std::optional<Split> best;
    const double tolerance = 1e-12 * total;
    std::vector<double> left(k_), missing(k_), all(k_);
    for (std::size_t f = 0; f < data_.quantizer.features(); ++f) {
      const auto n_edges = data_.quantizer.edges(f).size();
      if (n_edges < 2) continue;
      std::fill(hist_.begin(), hist_.end(), 0.0);
      const std::uint8_t* col = data_.codes.data() + f * data_.rows;
      for (auto i : idx) hist_[col[i] * k_ + labels_[i]] += weights_[i];

      double w_missing = 0;
      for (std::size_t c = 0; c < k_; ++c) {
        missing[c] = hist_[Quantizer::kMissingCode * k_ + c];
        w_missing += missing[c];
        all[c] = 0;
      }
      double w_present = 0;
      for (std::size_t bin = 0; bin < n_edges; ++bin)
        for (std::size_t c = 0; c < k_; ++c) {
          all[c] += hist_[bin * k_ + c];
          w_present += hist_[bin * k_ + c];
        }
      std::fill(left.begin(), left.end(), 0.0);
      double w_left = 0;
      for (std::size_t bin = 0; bin + 1 < n_edges; ++bin) {
        double added = 0;
        for (std::size_t c = 0; c < k_; ++c) {
          left[c] += hist_[bin * k_ + c];
          added += hist_[bin * k_ + c];
        }
        if (added == 0) continue;
        w_left += added;
        const double w_right = w_present - w_left;
        if (w_right <= 0) break;
        const bool missing_left = w_left >= w_right;
        double wl = w_left, wr = w_right, sl = 0, sr = 0;
        for (std::size_t c = 0; c < k_; ++c) {
          double lc = left[c], rc = all[c] - left[c];
          if (missing_left) lc += missing[c]; else rc += missing[c];
          sl += lc * lc;
          sr += rc * rc;
        }
        (missing_left ? wl : wr) += w_missing;
        if (wl < params_.min_leaf || wr < params_.min_leaf) continue;
        const double score = sl / wl + sr / wr;
        if (score - parent_score <= tolerance) continue;
        if (!best || score > best->score + tolerance) best = Split{f, bin, missing_left, score};
      }
    }
    return best;
  }

  const QuantizedData& data_;
  std::span<const std::uint8_t> labels_;
  std::size_t k_;
  std::span<const double> weights_;
  TreeParams params_;
  std::vector<double> hist_;
  std::vector<DecisionTree::Node> nodes_;
};

}  // namespace

DecisionTree DecisionTree::fit(const QuantizedData& data, std::span<const std::uint8_t> labels, std::size_t n_classes,
                               std::span<const double> weights, const TreeParams& params) {
  if (labels.size() != data.rows || weights.size() != data.rows) throw DomainError("labels/weights size mismatch");
  if (n_classes < 2) throw DomainError("a classifier needs at least two classes");
  for (auto y : labels)
    if (y >= n_classes) throw DomainError("label out of range");
  Builder b(data, labels, n_classes, weights, params);
  return DecisionTree(b.run(), n_classes);
}

std::span<const double> DecisionTree::predict_proba(std::span<const double> x) const {
  std::size_t at = 0;
  for (;;) {
    const auto& n = nodes_[at];
    if (n.feature < 0) return n.probabilities;
    const auto f = static_cast<std::size_t>(n.feature);
    if (f >= x.size()) throw DomainError("feature vector too short for this tree");
    const double v = x[f];
    const bool go_left = std::isnan(v) ? n.missing_left : v <= n.threshold;
    at = go_left ? n.left : n.right;
  }
}

std::size_t DecisionTree::depth() const {
  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
  std::size_t deepest = 0;
  while (!stack.empty()) {
    auto [at, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    if (nodes_[at].feature >= 0) {
      stack.push_back({nodes_[at].left, d + 1});
      stack.push_back({nodes_[at].right, d + 1});
    }
  }
  return deepest;
}

}  // namespace mailconv

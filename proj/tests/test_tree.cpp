#include <doctest.h>

#include <cmath>
#include <limits>

#include "mailconv/error.hpp"
#include "mailconv/random.hpp"
#include "mailconv/tree.hpp"

using namespace mailconv;

namespace {

const double kNan = std::numeric_limits<double>::quiet_NaN();

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, std::size_t levels = 0) {
  Matrix x(rows, cols);
  for (auto& v : x.data) v = levels ? static_cast<double>(rng.below(levels)) : rng.normal();
  return x;
}

/// Sum over children of (sum of squared class weights / child weight);
/// larger is purer. The best split maximizes it.
double purity(const Matrix& x, const std::vector<std::uint8_t>& y, std::size_t k, std::size_t f, double t) {
  std::vector<double> l(k, 0), r(k, 0);
  double wl = 0, wr = 0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    if (x.at(i, f) <= t) {
      l[y[i]] += 1;
      wl += 1;
    } else {
      r[y[i]] += 1;
      wr += 1;
    }
  }
  double s = 0;
  for (std::size_t c = 0; c < k; ++c) s += l[c] * l[c] / wl + r[c] * r[c] / wr;
  return s;
}

std::size_t predict_label(const DecisionTree& t, std::span<const double> row) {
  const auto p = t.predict_proba(row);
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

}  // namespace

TEST_CASE("quantizer keeps every value when there are few") {
  Matrix x(6, 1);
  x.data = {3, 1, kNan, 2, 3, 1};
  const auto q = Quantizer::fit(x);
  CHECK(q.edges(0) == std::vector<double>{1, 2, 3});
  CHECK(q.code(0, 1) == 0);
  CHECK(q.code(0, 1.5) == 1);
  CHECK(q.code(0, 3) == 2);
  CHECK(q.code(0, kNan) == Quantizer::kMissingCode);
  CHECK(q.code(0, 0) == 0);
}

TEST_CASE("quantizer caps edges for continuous features") {
  Rng rng(4);
  const auto x = random_matrix(5000, 2, rng);
  const auto q = Quantizer::fit(x);
  for (std::size_t f = 0; f < 2; ++f) {
    const auto& e = q.edges(f);
    CHECK(e.size() <= Quantizer::kMaxEdges);
    CHECK(e.size() > 200);
    CHECK(std::is_sorted(e.begin(), e.end()));
    CHECK(std::adjacent_find(e.begin(), e.end()) == e.end());
    double top = -1e300;
    for (std::size_t r = 0; r < x.rows; ++r) top = std::max(top, x.at(r, f));
    CHECK(e.back() == top);
  }
  // Codes are monotone in the value.
  double prev = -1e300;
  std::uint8_t prev_code = 0;
  for (double v = -4; v < 4; v += 0.01) {
    const auto c = q.code(0, v);
    if (v > prev) CHECK(c >= prev_code);
    prev = v;
    prev_code = c;
  }
}

TEST_CASE("a stump finds the exhaustive best threshold") {
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 40 + rng.below(60), k = 2 + rng.below(2);
    const auto x = random_matrix(n, 3, rng, 12);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<std::uint8_t>(x.at(i, 1) > 5 ? (rng.bernoulli(0.8) ? 1 : 0) : rng.below(k));
    double best = -1;
    for (std::size_t f = 0; f < 3; ++f)
      for (double t = 0; t < 11; ++t) {
        std::size_t left = 0;
        for (std::size_t i = 0; i < n; ++i) left += x.at(i, f) <= t;
        if (left == 0 || left == n) continue;
        best = std::max(best, purity(x, y, k, f, t));
      }
    const auto data = QuantizedData::build(x);
    const std::vector<double> w(n, 1.0);
    const auto tree = DecisionTree::fit(data, y, k, w, TreeParams{1, 1});
    const auto& root = tree.nodes().at(0);
    REQUIRE(root.feature >= 0);
    CHECK(purity(x, y, k, static_cast<std::size_t>(root.feature), root.threshold) == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("separable data is fitted exactly") {
  Rng rng(2);
  const auto x = random_matrix(400, 4, rng);
  std::vector<std::uint8_t> y(400);
  for (std::size_t i = 0; i < 400; ++i) y[i] = static_cast<std::uint8_t>((x.at(i, 0) > 0) + (x.at(i, 2) > 0.5));
  const std::vector<double> w(400, 1.0);
  const auto tree = DecisionTree::fit(QuantizedData::build(x), y, 3, w, TreeParams{12, 1});
  std::size_t hits = 0;
  for (std::size_t i = 0; i < 400; ++i) hits += predict_label(tree, x.row(i)) == y[i];
  CHECK(hits == 400);
  CHECK(tree.depth() <= 12);
  for (const auto& n : tree.nodes())
    if (n.feature < 0) {
      double s = 0;
      for (double p : n.probabilities) s += p;
      CHECK(s == doctest::Approx(1.0));
    }
}

TEST_CASE("depth and leaf weight limits hold") {
  Rng rng(6);
  const auto x = random_matrix(300, 5, rng);
  std::vector<std::uint8_t> y(300);
  for (auto& v : y) v = static_cast<std::uint8_t>(rng.below(2));
  const std::vector<double> w(300, 1.0);
  const auto data = QuantizedData::build(x);
  CHECK(DecisionTree::fit(data, y, 2, w, TreeParams{3, 1}).depth() <= 3);
  const auto tree = DecisionTree::fit(data, y, 2, w, TreeParams{30, 20});
  // Every leaf holds at least 20 rows, so its probabilities are multiples of 1/n with n >= 20.
  std::vector<std::size_t> leaf_rows(tree.nodes().size(), 0);
  for (std::size_t i = 0; i < 300; ++i) {
    std::uint32_t at = 0;
    while (tree.nodes()[at].feature >= 0) {
      const auto& n = tree.nodes()[at];
      at = x.at(i, static_cast<std::size_t>(n.feature)) <= n.threshold ? n.left : n.right;
    }
    ++leaf_rows[at];
  }
  for (std::size_t id = 0; id < leaf_rows.size(); ++id)
    if (tree.nodes()[id].feature < 0) CHECK(leaf_rows[id] >= 20);
}

TEST_CASE("missing values follow the heavier child") {
  Matrix x(10, 1);
  x.data = {1, 1, 1, 1, 1, 1, 5, 5, 5, kNan};
  const std::vector<std::uint8_t> y{0, 0, 0, 0, 0, 0, 1, 1, 1, 0};
  const std::vector<double> w(10, 1.0);
  const auto tree = DecisionTree::fit(QuantizedData::build(x), y, 2, w, TreeParams{1, 1});
  const auto& root = tree.nodes()[0];
  REQUIRE(root.feature == 0);
  CHECK(root.missing_left);
  const std::vector<double> probe{kNan};
  CHECK(predict_label(tree, probe) == 0);

  x.data = {1, 1, 1, 5, 5, 5, 5, 5, 5, kNan};
  const std::vector<std::uint8_t> y2{0, 0, 0, 1, 1, 1, 1, 1, 1, 1};
  const auto t2 = DecisionTree::fit(QuantizedData::build(x), y2, 2, w, TreeParams{1, 1});
  CHECK_FALSE(t2.nodes()[0].missing_left);
  CHECK(predict_label(t2, probe) == 1);
}

TEST_CASE("integer weights act like duplicated rows") {
  Rng rng(8);
  const auto x = random_matrix(60, 3, rng, 7);
  std::vector<std::uint8_t> y(60);
  std::vector<double> w(60);
  Matrix dup(0, 3);
  std::vector<std::uint8_t> ydup;
  for (std::size_t i = 0; i < 60; ++i) {
    y[i] = static_cast<std::uint8_t>(rng.below(2));
    w[i] = static_cast<double>(1 + rng.below(3));
    for (int c = 0; c < w[i]; ++c) {
      for (std::size_t f = 0; f < 3; ++f) dup.data.push_back(x.at(i, f));
      ydup.push_back(y[i]);
    }
  }
  dup.rows = ydup.size();
  const auto a = DecisionTree::fit(QuantizedData::build(x), y, 2, w, TreeParams{6, 2});
  const std::vector<double> ones(dup.rows, 1.0);
  const auto b = DecisionTree::fit(QuantizedData::build(dup), ydup, 2, ones, TreeParams{6, 2});
  REQUIRE(a.nodes().size() == b.nodes().size());
  for (std::size_t i = 0; i < a.nodes().size(); ++i) {
    CHECK(a.nodes()[i].feature == b.nodes()[i].feature);
    CHECK(a.nodes()[i].threshold == b.nodes()[i].threshold);
    for (std::size_t c = 0; c < a.nodes()[i].probabilities.size(); ++c)
      CHECK(a.nodes()[i].probabilities[c] == doctest::Approx(b.nodes()[i].probabilities[c]));
  }
}

TEST_CASE("tree fitting is deterministic and validated") {
  Rng rng(3);
  const auto x = random_matrix(200, 6, rng);
  std::vector<std::uint8_t> y(200);
  for (auto& v : y) v = static_cast<std::uint8_t>(rng.below(3));
  const std::vector<double> w(200, 1.0);
  const auto data = QuantizedData::build(x);
  const auto a = DecisionTree::fit(data, y, 3, w, {});
  const auto b = DecisionTree::fit(data, y, 3, w, {});
  REQUIRE(a.nodes().size() == b.nodes().size());
  for (std::size_t i = 0; i < a.nodes().size(); ++i) {
    CHECK(a.nodes()[i].feature == b.nodes()[i].feature);
    CHECK(a.nodes()[i].threshold == b.nodes()[i].threshold);
    CHECK(a.nodes()[i].probabilities == b.nodes()[i].probabilities);
  }

  const std::vector<double> zero(200, 0.0);
  CHECK_THROWS_AS(DecisionTree::fit(data, y, 3, zero, {}), DomainError);
  CHECK_THROWS_AS(DecisionTree::fit(data, y, 1, w, {}), DomainError);
  CHECK_THROWS_AS(DecisionTree::fit(data, y, 2, w, {}), DomainError);  // label 2 out of range
  CHECK_THROWS_AS(DecisionTree({}, 2), DomainError);
  DecisionTree::Node bad;
  bad.feature = 0;
  bad.left = 4;
  CHECK_THROWS_AS(DecisionTree({bad}, 2), DomainError);
}

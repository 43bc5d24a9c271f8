#pragma once

// Synthetic datasets shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mailconv/embedding.hpp"

#include "mailconv/features.hpp"
#include "mailconv/predict.hpp"
#include "mailconv/random.hpp"
#include "oracles.hpp"

namespace scenario {

/// Binary labels with one column equal to the label and every other column
/// Gaussian noise, laid out like the standard catalog.
inline mailconv::Dataset planted_chi2(std::size_t n, std::size_t informative, std::uint64_t seed) {
  mailconv::Rng rng(seed);
  const auto cols = mailconv::FeatureCatalog::standard().size();
  mailconv::Dataset d;
  d.n_classes = 2;
  d.x = mailconv::Matrix(n, cols);
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::uint8_t>(i % 2);
    d.y.push_back(y);
    for (std::size_t f = 0; f < cols; ++f) d.x.at(i, f) = f == informative ? y : rng.normal();
  }
  return d;
}

struct Predictions {
  std::vector<std::uint8_t> truth;
  std::vector<std::vector<double>> probabilities;
};

/// Random K-class predictions on a coarse grid so that ties occur.
inline Predictions random_predictions(std::size_t n, std::size_t k, std::uint64_t seed) {
  mailconv::Rng rng(seed);
  Predictions p;
  for (std::size_t i = 0; i < n; ++i) {
    p.truth.push_back(static_cast<std::uint8_t>(rng.below(k)));
    std::vector<double> v(k);
    double s = 0;
    for (auto& x : v) s += (x = static_cast<double>(1 + rng.below(4)));
    for (auto& x : v) x /= s;
    p.probabilities.push_back(v);
  }
  return p;
}

/// Largest absolute difference between computed metrics and direct enumeration.
inline double metric_error(const Predictions& p, std::size_t k) {
  const auto m = mailconv::compute_metrics(p.truth, p.probabilities, k);
  double err = std::abs(m.accuracy - oracle::accuracy(p.truth, p.probabilities));
  err = std::max(err, std::abs(m.rmse - oracle::rmse(p.truth, p.probabilities, k)));
  err = std::max(err, std::abs(m.weighted_auc - oracle::weighted_auc(p.truth, p.probabilities, k)));
  if (m.confusion != oracle::confusion(p.truth, p.probabilities, k)) err = INFINITY;
  return err;
}

using Docs = std::vector<std::vector<std::string>>;

/// Two topics with disjoint vocabularies; documents alternate topics.
inline Docs two_topic_corpus(std::size_t n_docs, std::uint64_t seed) {
  const std::vector<std::string> a{"budget", "invoice", "payment", "quarter", "revenue", "audit", "ledger", "tax"};
  const std::vector<std::string> b{"hiking", "trail", "mountain", "camp", "river", "forest", "summit", "tent"};
  mailconv::Rng rng(seed);
  Docs docs;
  for (std::size_t i = 0; i < n_docs; ++i) {
    const auto& vocab = i % 2 ? b : a;
    std::vector<std::string> d;
    for (int w = 0; w < 20; ++w) d.push_back(vocab[rng.below(vocab.size())]);
    docs.push_back(std::move(d));
  }
  return docs;
}

/// Mean cosine between same-topic documents minus mean cosine across topics,
/// for a model trained on two_topic_corpus.
inline double topic_separation(const mailconv::EmbeddingModel& m) {
  const auto& v = m.document_vectors;
  double intra = 0, inter = 0;
  std::size_t ni = 0, nx = 0;
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = i + 1; j < v.size(); ++j) {
      const double c = mailconv::cosine(v[i], v[j]);
      if (i % 2 == j % 2) {
        intra += c;
        ++ni;
      } else {
        inter += c;
        ++nx;
      }
    }
  return intra / static_cast<double>(ni) - inter / static_cast<double>(nx);
}

/// Downward trend with tolerance: the last value is below the first, and near
/// its floor the objective never climbs more than `slack` above the best so far.
inline bool objective_decreases(const std::vector<double>& loss, double slack = 0.02) {
  if (loss.size() < 2 || !(loss.back() < loss.front())) return false;
  double best = loss.front();
  for (double l : loss) {
    if (!std::isfinite(l) || l > best * (1 + slack)) return false;
    best = std::min(best, l);
  }
  return true;
}

}  // namespace scenario

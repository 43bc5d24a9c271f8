#include "mailconv/embedding.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <thread>
#include <unordered_map>

#include "mailconv/error.hpp"
#include "mailconv/random.hpp"

namespace mailconv {

double cosine(std::span<const float> u, std::span<const float> v) {
  if (u.size() != v.size()) throw DomainError("cosine of vectors with different dimensions");
  double dot = 0, nu = 0, nv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += static_cast<double>(u[i]) * v[i];
    nu += static_cast<double>(u[i]) * u[i];
    nv += static_cast<double>(v[i]) * v[i];
  }
  if (nu == 0 && nv == 0) throw DomainError("cosine of two zero vectors is undefined");
  if (nu == 0 || nv == 0) return 0.0;
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

double cosine(const SparseVector& u, const SparseVector& v) {
  double dot = 0, nu = 0, nv = 0;
  for (const auto& [_, w] : u.entries) nu += static_cast<double>(w) * w;
  for (const auto& [_, w] : v.entries) nv += static_cast<double>(w) * w;
  if (nu == 0 && nv == 0) throw DomainError("cosine of two zero vectors is undefined");
  if (nu == 0 || nv == 0) return 0.0;
  auto a = u.entries.begin(), b = v.entries.begin();
  while (a != u.entries.end() && b != v.entries.end()) {
    if (a->first < b->first)
      ++a;
    else if (b->first < a->first)
      ++b;
    else {
      dot += static_cast<double>(a->second) * b->second;
      ++a;
      ++b;
    }
  }
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

TfVectors tf_vectorize(std::span<const std::vector<std::string>> documents) {
  TfVectors out;
  std::map<std::string, std::uint32_t> ids;
  for (const auto& doc : documents)
    for (const auto& w : doc) ids.emplace(w, 0);
  out.vocabulary.reserve(ids.size());
  for (auto& [w, id] : ids) {
    id = static_cast<std::uint32_t>(out.vocabulary.size());
    out.vocabulary.push_back(w);
  }

  out.vectors.reserve(documents.size());
  for (const auto& doc : documents) {
    std::map<std::uint32_t, double> tf;
    for (const auto& w : doc) tf[ids.at(w)] += 1;
    double norm = 0;
    for (const auto& [_, c] : tf) norm += c * c;
    norm = std::sqrt(norm);
    SparseVector v;
    for (const auto& [id, c] : tf) v.entries.emplace_back(id, static_cast<float>(c / norm));
    if (v.empty()) ++out.empty_documents;
    out.vectors.push_back(std::move(v));
  }
  return out;
}

void EmbeddingParams::validate() const {
  if (dim < 1) throw DomainError("embedding dimension must be >= 1");
  if (window < 1) throw DomainError("window must be >= 1");
  if (iterations < 1) throw DomainError("iterations must be >= 1");
  if (workers < 1) throw DomainError("workers must be >= 1");
  if (!(learning_rate > 0)) throw DomainError("learning rate must be positive");
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-std::clamp(x, -30.0, 30.0))); }

double log_sigmoid(double x) { return -std::log1p(std::exp(-std::clamp(x, -30.0, 30.0))); }

class NoiseTable {
 public:
  explicit NoiseTable(const std::vector<std::uint64_t>& counts) : cumulative_(counts.size()) {
    double acc = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
      acc += std::pow(static_cast<double>(counts[i]), 0.75);
      cumulative_[i] = acc;
    }
  }

  std::uint32_t draw(Rng& rng) const {
    const double u = rng.uniform() * cumulative_.back();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    return static_cast<std::uint32_t>(std::min<std::size_t>(it - cumulative_.begin(), cumulative_.size() - 1));
  }

 private:
  std::vector<double> cumulative_;
};

/// One negative-sampling step: `input` predicts `target` against `scores_from`
/// (the output rows used for the gradient); output deltas go to `output`.
/// Returns the gradient for `input` in `grad` (accumulated).
void sgns_step(std::span<const float> input, std::uint32_t target, std::size_t negatives, const NoiseTable& noise,
               Rng& rng, const std::vector<float>& scores_from, std::vector<float>& output, std::size_t dim,
               double lr, std::vector<float>& grad) {
  for (std::size_t k = 0; k <= negatives; ++k) {
    std::uint32_t word;
    double label;
    if (k == 0) {
      word = target;
      label = 1;
    } else {
      word = noise.draw(rng);
      if (word == target) continue;
      label = 0;
    }
    const float* row = scores_from.data() + std::size_t{word} * dim;
    double dot = 0;
    for (std::size_t i = 0; i < dim; ++i) dot += static_cast<double>(input[i]) * row[i];
    const double g = (label - sigmoid(dot)) * lr;
    float* out = output.data() + std::size_t{word} * dim;
    for (std::size_t i = 0; i < dim; ++i) {
      grad[i] += static_cast<float>(g * row[i]);
      out[i] += static_cast<float>(g * input[i]);
    }
  }
}

/// Fixed pairs and negatives on which the objective is measured after each
/// iteration, so successive values differ only through the parameters.
class ObjectiveSample {
 public:
  static constexpr std::size_t kMaxPairs = 20000;

  ObjectiveSample(const std::vector<std::vector<std::uint32_t>>& docs, std::size_t window, std::size_t negatives,
                  const NoiseTable& noise, std::uint64_t seed) {
    std::size_t candidates = 0;
    for (const auto& seq : docs) {
      candidates += seq.size();
      for (std::size_t t = 0; t < seq.size(); ++t)
        candidates += std::min(seq.size() - 1, t + window) - (t >= window ? t - window : 0);
    }
    const double keep = std::min(1.0, static_cast<double>(kMaxPairs) / static_cast<double>(std::max<std::size_t>(candidates, 1)));
    Rng rng(seed);
    auto add = [&](std::uint32_t source, bool document, std::uint32_t target) {
      if (rng.uniform() >= keep) return;
      Pair p{source, document, target, {}};
      for (std::size_t k = 0; k < negatives; ++k)
        if (const auto w = noise.draw(rng); w != target) p.negatives.push_back(w);
      pairs_.push_back(std::move(p));
    };
    for (std::size_t d = 0; d < docs.size(); ++d) {
      const auto& seq = docs[d];
      for (std::size_t t = 0; t < seq.size(); ++t) {
        const auto lo = t >= window ? t - window : 0;
        const auto hi = std::min(seq.size() - 1, t + window);
        for (std::size_t c = lo; c <= hi; ++c)
          if (c != t) add(seq[t], false, seq[c]);
        add(static_cast<std::uint32_t>(d), true, seq[t]);
      }
    }
  }

  /// Mean negative-sampling loss per pair.
  double evaluate(const EmbeddingModel& model, const std::vector<float>& output) const {
    if (pairs_.empty()) return 0.0;
    const auto dim = model.dim;
    auto dot = [&](std::span<const float> in, std::uint32_t word) {
      double s = 0;
      for (std::size_t i = 0; i < dim; ++i) s += static_cast<double>(in[i]) * output[std::size_t{word} * dim + i];
      return s;
    };
    double total = 0;
    for (const auto& p : pairs_) {
      const std::span<const float> in = p.document ? std::span<const float>(model.document_vectors[p.source]) : model.word(p.source);
      total -= log_sigmoid(dot(in, p.target));
      for (auto w : p.negatives) total -= log_sigmoid(-dot(in, w));
    }
    return total / static_cast<double>(pairs_.size());
  }

 private:
  struct Pair {
    std::uint32_t source;  // word id, or document index
    bool document;
    std::uint32_t target;
    std::vector<std::uint32_t> negatives;
  };
  std::vector<Pair> pairs_;
};

}  // namespace

EmbeddingModel train_embeddings(std::span<const std::vector<std::string>> documents, const EmbeddingParams& params) {
  params.validate();
  const auto dim = params.dim;

  std::map<std::string, std::uint64_t> counts;
  for (const auto& doc : documents)
    for (const auto& w : doc) ++counts[w];
  std::vector<std::pair<std::string, std::uint64_t>> kept;
  for (const auto& [w, c] : counts)
    if (c >= params.min_count) kept.emplace_back(w, c);
  if (kept.empty()) throw DomainError("embedding vocabulary is empty (no word reaches min_count)");
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

  EmbeddingModel model;
  model.dim = dim;
  std::unordered_map<std::string, std::uint32_t> ids;
  std::vector<std::uint64_t> freq;
  for (const auto& [w, c] : kept) {
    ids.emplace(w, static_cast<std::uint32_t>(model.vocabulary.size()));
    model.vocabulary.push_back(w);
    freq.push_back(c);
  }
  const NoiseTable noise(freq);
  const auto vocab = model.vocabulary.size();

  std::vector<std::vector<std::uint32_t>> docs;
  std::vector<std::uint64_t> doc_keys;
  docs.reserve(documents.size());
  for (const auto& doc : documents) {
    std::vector<std::uint32_t> seq;
    std::uint64_t h = fnv1a("doc");
    for (const auto& w : doc) {
      h = fnv1a(w, h ^ 0x1f);
      if (auto it = ids.find(w); it != ids.end()) seq.push_back(it->second);
    }
    docs.push_back(std::move(seq));
    doc_keys.push_back(h);
  }

  {
    Rng init(derive_seed(params.seed, "embedding/words"));
    model.word_vectors.resize(vocab * dim);
    for (auto& x : model.word_vectors) x = static_cast<float>((init.uniform() - 0.5) / dim);
  }
  model.document_vectors.resize(docs.size());
  for (std::size_t d = 0; d < docs.size(); ++d) {
    Rng init(splitmix64(derive_seed(params.seed, "embedding/docs") ^ doc_keys[d]));
    auto& v = model.document_vectors[d];
    v.resize(dim);
    for (auto& x : v) x = static_cast<float>((init.uniform() - 0.5) / dim);
  }
  std::vector<float> output(vocab * dim, 0.0f);

  const ObjectiveSample objective(docs, params.window, params.negatives, noise,
                                  derive_seed(params.seed, "embedding/objective"));
  Rng word_rng(derive_seed(params.seed, "embedding/skipgram"));
  std::vector<float> grad(dim);

  for (std::size_t epoch = 0; epoch < params.iterations; ++epoch) {
    const double lr = std::max(params.min_learning_rate,
                               params.learning_rate * (1.0 - static_cast<double>(epoch) / params.iterations));
    // Word vectors: skip-gram with a randomly shrunk window.
    for (const auto& seq : docs) {
      for (std::size_t t = 0; t < seq.size(); ++t) {
        const auto shrink = word_rng.below(params.window);
        const auto reach = params.window - shrink;
        const auto lo = t >= reach ? t - reach : 0;
        const auto hi = std::min(seq.size() - 1, t + reach);
        for (std::size_t c = lo; c <= hi; ++c) {
          if (c == t) continue;
          std::span<float> in(model.word_vectors.data() + std::size_t{seq[t]} * dim, dim);
          std::fill(grad.begin(), grad.end(), 0.0f);
          sgns_step(in, seq[c], params.negatives, noise, word_rng, output, output, dim, lr, grad);
          for (std::size_t i = 0; i < dim; ++i) in[i] += grad[i];
        }
      }
    }

    // Document vectors: global context predicting each word of the document.
    // Every document scores against the same post-word-phase snapshot, so results
    // do not depend on document order or worker count.
    auto train_docs = [&](std::size_t begin, std::size_t end, const std::vector<float>& scores_from,
                          std::vector<float>& out_delta) {
      std::vector<float> g(dim);
      for (std::size_t d = begin; d < end; ++d) {
        Rng rng(splitmix64(derive_seed(params.seed, "embedding/docsteps") ^ doc_keys[d] ^ (epoch * 0x9e37ULL)));
        auto& v = model.document_vectors[d];
        for (auto w : docs[d]) {
          std::fill(g.begin(), g.end(), 0.0f);
          sgns_step(v, w, params.negatives, noise, rng, scores_from, out_delta, dim, lr, g);
          for (std::size_t i = 0; i < dim; ++i) v[i] += g[i];
        }
      }
    };
    const std::vector<float> snapshot = output;
    if (params.workers <= 1) {
      train_docs(0, docs.size(), snapshot, output);
    } else {
      const auto w = std::min(params.workers, std::max<std::size_t>(1, docs.size()));
      std::vector<std::vector<float>> deltas(w, std::vector<float>(vocab * dim, 0.0f));
      std::vector<std::thread> pool;
      for (std::size_t k = 0; k < w; ++k) {
        const auto b = docs.size() * k / w, e = docs.size() * (k + 1) / w;
        pool.emplace_back([&, k, b, e] { train_docs(b, e, snapshot, deltas[k]); });
      }
      for (auto& t : pool) t.join();
      for (std::size_t k = 0; k < w; ++k)
        for (std::size_t i = 0; i < output.size(); ++i) output[i] += deltas[k][i];
    }
    model.epoch_loss.push_back(objective.evaluate(model, output));
  }
  return model;
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw InputError("truncated vector file");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

void write_vectors(std::ostream& out, std::span<const DocVector> vectors) {
  const std::uint32_t dim = vectors.empty() ? 0 : static_cast<std::uint32_t>(vectors.front().values.size());
  put_le<std::uint32_t>(out, dim);
  put_le<std::uint64_t>(out, vectors.size());
  for (const auto& v : vectors) {
    if (v.values.size() != dim) throw DomainError("vectors of different dimensions");
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(v.message_id.size()));
    out.write(v.message_id.data(), static_cast<std::streamsize>(v.message_id.size()));
    for (float x : v.values) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(x));
  }
}

std::vector<DocVector> read_vectors(std::istream& in) {
  const auto dim = get_le<std::uint32_t>(in);
  const auto count = get_le<std::uint64_t>(in);
  std::vector<DocVector> out;
  for (std::uint64_t k = 0; k < count; ++k) {
    DocVector v;
    const auto len = get_le<std::uint32_t>(in);
    v.message_id.resize(len);
    if (!in.read(v.message_id.data(), len)) throw InputError("truncated vector file");
    v.values.resize(dim);
    for (auto& x : v.values) x = std::bit_cast<float>(get_le<std::uint32_t>(in));
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace mailconv

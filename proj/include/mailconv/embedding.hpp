#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace mailconv {

struct DocVector {
  std::string message_id;
  std::vector<float> values;
};

/// Sorted (term id, weight) pairs.
struct SparseVector {
  std::vector<std::pair<std::uint32_t, float>> entries;
  bool empty() const noexcept { return entries.empty(); }
};

/// Cosine similarity. Throws DomainError on dimension mismatch or when both
/// vectors are zero; exactly one zero vector gives 0.
double cosine(std::span<const float> u, std::span<const float> v);
double cosine(const SparseVector& u, const SparseVector& v);

struct TfVectors {
  std::vector<std::string> vocabulary;  // term id -> word, sorted
  std::vector<SparseVector> vectors;    // L2-normalized; empty for empty documents
  std::size_t empty_documents = 0;
};

/// L2-normalized term-frequency vectors over the corpus vocabulary.
TfVectors tf_vectorize(std::span<const std::vector<std::string>> documents);

struct EmbeddingParams {
  std::size_t dim = 32;
  std::size_t window = 5;
  std::size_t iterations = 10;
  std::size_t negatives = 5;
  std::size_t min_count = 5;
  double learning_rate = 0.025;
  double min_learning_rate = 0.0001;
  std::uint64_t seed = 1;
  std::size_t workers = 1;  // >1 trains documents concurrently; reproducible only for the same count

  void validate() const;  // throws DomainError
};

struct EmbeddingModel {
  std::vector<std::string> vocabulary;
  std::vector<float> word_vectors;      // vocabulary.size() x dim, row-major
  std::vector<std::vector<float>> document_vectors;
  std::vector<double> epoch_loss;       // objective after each iteration, on a fixed sample of pairs
  std::size_t dim = 0;

  std::span<const float> word(std::size_t id) const { return {word_vectors.data() + id * dim, dim}; }
};

/// Trains word vectors with skip-gram and one global-context vector per
/// document that predicts every word of its document, both with negative
/// sampling against a shared output layer. Throws DomainError if no word
/// reaches `min_count`.
///
/// Document vectors are updated against the output layer as it stood after
/// each pass's word updates and draw negatives from a stream keyed on their content,
/// so identical documents receive identical vectors.
EmbeddingModel train_embeddings(std::span<const std::vector<std::string>> documents, const EmbeddingParams& params);

/// Little-endian layout: u32 dim, u64 count, then per vector u32 id length,
/// id bytes, dim x f32.
void write_vectors(std::ostream& out, std::span<const DocVector> vectors);
std::vector<DocVector> read_vectors(std::istream& in);

}  // namespace mailconv

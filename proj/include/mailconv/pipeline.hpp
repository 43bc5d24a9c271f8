#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mailconv/embedding.hpp"
#include "mailconv/predict.hpp"
#include "mailconv/threading.hpp"

namespace mailconv {

/// A pipeline stage failed for a reason other than bad input. Maps to exit code 2.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct AnalysisToggles {
  bool tables = true;          // threads.tsv, replies.tsv, summary.json
  bool distributions = true;
  bool steps = true;
  bool correlation = true;
  bool circadian = true;
  bool groups = true;
  bool overload = true;
  bool synchronization = true;
  bool markers = true;
  bool similarity = true;
  bool features = true;
  bool train = true;           // models and evaluation reports; needs features
  bool rank = true;            // chi-squared rankings; needs features

  static AnalysisToggles none();
};

struct RunConfig {
  std::filesystem::path records;
  std::optional<std::filesystem::path> profiles;
  std::optional<std::filesystem::path> lexicon;
  std::optional<std::filesystem::path> templates;
  std::filesystem::path output_dir = "out";

  std::size_t min_replies_each_way = 5;
  ReplyTimeAnchor anchor = ReplyTimeAnchor::FirstOfRun;
  double immediate_max_minutes = 15;
  double fast_max_minutes = 164;
  double short_max_words = 21;
  double medium_max_words = 88;
  double train_fraction = 0.75;

  ModelParams model;  // model.seed is replaced by the run seed
  std::size_t chi2_bins = 10;
  std::size_t top_k = 0;  // >0 also trains and evaluates models on the k best features
  bool global_replier_baselines = false;

  bool use_embeddings = false;  // similarity from trained vectors instead of term frequencies
  EmbeddingParams embedding;

  std::optional<std::uint64_t> seed;  // required when training
  std::size_t workers = 1;
  bool deterministic = false;  // single-worker embedding training

  AnalysisToggles toggles;
};

struct ManifestEntry {
  std::string path;  // relative to the output directory
  std::string sha256;
  std::optional<std::size_t> rows;  // data rows of tables; absent for binary files
};

struct PipelineResult {
  std::vector<ManifestEntry> manifest;
  std::size_t records = 0;
  std::size_t rejected = 0;
  std::size_t dyads = 0;
  std::size_t dyads_kept = 0;
  std::size_t reply_events = 0;
  ThreadingCounters counters;
};

/// Runs every enabled stage and writes manifest.json into the output
/// directory. On failure every file written by this run is removed and the
/// error is rethrown: InputError for unreadable or invalid input, StageError
/// otherwise.
PipelineResult run_pipeline(const RunConfig& config);

/// Hex SHA-256 of a file's contents.
std::string sha256_file(const std::filesystem::path& path);

/// manifest.json: {"files": [{"path", "sha256", "rows"}]} sorted by path.
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

}  // namespace mailconv

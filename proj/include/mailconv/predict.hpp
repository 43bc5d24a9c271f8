#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mailconv/features.hpp"
#include "mailconv/tree.hpp"

namespace mailconv {

enum class Task : std::uint8_t { ReplyTime, ReplyLength, LastEmail };

std::string_view to_string(Task t);
std::optional<Task> parse_task(std::string_view s);

enum class ReplyTimeClass : std::uint8_t { Immediate, Fast, Slow };
enum class ReplyLengthClass : std::uint8_t { Short, Medium, Long };

/// Throws DomainError for minutes <= 0.
ReplyTimeClass bin_reply_time(double minutes, double fast_from = 15, double slow_from = 164);
ReplyLengthClass bin_reply_length(std::uint32_t words, std::uint32_t medium_from = 21, std::uint32_t long_from = 88);

/// Ordered upper-inclusive boundaries: class k holds values in
/// (boundary k-1, boundary k].
struct ClassScheme {
  Task task = Task::ReplyTime;
  std::vector<double> boundaries;
  std::vector<std::string> names;

  static ClassScheme reply_time(double immediate_max = 15, double fast_max = 164);
  static ClassScheme reply_length(double short_max = 21, double medium_max = 88);
  static ClassScheme last_email();
  static ClassScheme for_task(Task t);

  std::size_t n_classes() const noexcept { return names.size(); }
  std::uint8_t classify(double value) const;
  std::uint8_t label_of(const FeatureRow& row) const;
};

// ---------------------------------------------------------------------------

struct Dataset {
  Matrix x;
  std::vector<std::uint8_t> y;
  std::size_t n_classes = 0;
};

/// Rows `indices` of `rows`, restricted to catalog columns `columns` (all
/// columns when empty), labelled by `scheme`.
Dataset make_dataset(std::span<const FeatureRow> rows, std::span<const std::size_t> indices,
                     const ClassScheme& scheme, std::span<const std::size_t> columns = {});

struct ModelParams {
  std::size_t n_trees = 50;
  std::size_t max_depth = 12;
  double min_leaf = 5;
  bool bootstrap = true;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
};

struct Prediction {
  std::uint8_t label = 0;
  std::vector<double> probabilities;
};

/// Bagged decision trees. Tree t is trained on a bootstrap resample drawn
/// from seed + t, so results do not depend on the worker count.
class Model {
 public:
  Model() = default;
  Model(Task task, std::vector<std::string> feature_names, std::size_t n_classes, std::vector<DecisionTree> trees);

  /// Throws DomainError when the training labels hold fewer than two classes.
  static Model train(const Dataset& train, Task task, std::vector<std::string> feature_names,
                     const ModelParams& params);

  /// Throws DomainError when x does not have one value per model feature.
  Prediction predict(std::span<const double> x) const;

  Task task() const noexcept { return task_; }
  std::size_t n_classes() const noexcept { return n_classes_; }
  const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }
  const std::vector<DecisionTree>& trees() const noexcept { return trees_; }
  std::uint64_t catalog_hash() const;

  /// Little-endian container: magic "MCVMODEL", u32 version, u8 task,
  /// u64 catalog hash, feature names, u32 classes, trees.
  void save(std::ostream& out) const;
  static Model load(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static Model load(const std::filesystem::path& path);

 private:
  Task task_ = Task::ReplyTime;
  std::vector<std::string> feature_names_;
  std::size_t n_classes_ = 0;
  std::vector<DecisionTree> trees_;
};

// ---------------------------------------------------------------------------
// Evaluation

struct Metrics {
  std::size_t n = 0;
  double accuracy = 0;
  double weighted_auc = 0;  // NaN when no class has both positives and negatives
  double rmse = 0;          // on classes coded k / (K - 1)
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
};

/// `probabilities` holds one K-vector per sample. The predicted class is the
/// first maximum.
Metrics compute_metrics(std::span<const std::uint8_t> truth, std::span<const std::vector<double>> probabilities,
                        std::size_t n_classes);

/// One-vs-rest AUC via the Mann-Whitney statistic with mid-ranks for ties.
/// nullopt when either side is empty.
std::optional<double> binary_auc(std::span<const double> scores, std::span<const bool> positive);

struct BaselineAccuracy {
  double majority = 0;
  double last_reply = 0;
  double most_used = 0;
};

struct BaselineOptions {
  bool global_replier = false;  // history of the replier across all pairs, not just this pair
};

/// Majority is the modal training class. The history baselines use every
/// earlier reply by the same replier (in the same pair unless global), in
/// time order; without history they fall back to the majority class.
/// `rows` must be grouped by dyad and time-ordered.
BaselineAccuracy baselines(std::span<const FeatureRow> rows, const TrainTestSplit& split, const ClassScheme& scheme,
                           const BaselineOptions& options = {});

struct EvalReport {
  Task task = Task::ReplyTime;
  Metrics metrics;
  BaselineAccuracy baseline;
  std::optional<Metrics> two_class;  // middle class removed; three-class tasks only
  std::vector<std::string> class_names;
};

/// Evaluates `model` on the test rows of `split`. The two-class variant
/// restricts both truth and prediction to the outer classes.
EvalReport evaluate(const Model& model, std::span<const FeatureRow> rows, const TrainTestSplit& split,
                    const ClassScheme& scheme, std::span<const std::size_t> columns,
                    const BaselineOptions& options = {});

void write_eval_report(std::ostream& out, const EvalReport& report);

// ---------------------------------------------------------------------------
// Feature ranking

struct Chi2Entry {
  std::size_t feature = 0;
  std::string name;
  double chi2 = 0;
};

/// Chi-squared statistic of each feature against the class. A feature with at
/// most `n_bins` distinct values is binned by value; otherwise by rank into
/// `n_bins` quantile bins. Missing values form their own bin. Sorted by
/// decreasing statistic, ties by feature index.
std::vector<Chi2Entry> chi2_rank(const Dataset& data, const FeatureCatalog& catalog, std::size_t n_bins = 10);

/// Catalog indices of the `k` best-ranked features, in catalog order.
/// Throws DomainError unless 1 <= k <= ranked.size().
std::vector<std::size_t> top_k(std::span<const Chi2Entry> ranked, std::size_t k);

std::size_t write_chi2_table(std::ostream& out, std::span<const Chi2Entry> ranked);

}  // namespace mailconv

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "mailconv/profile.hpp"
#include "mailconv/stats.hpp"
#include "mailconv/threading.hpp"

namespace mailconv {

using ThreadRefs = std::vector<const Thread*>;

ThreadRefs thread_refs(std::span<const Dyad> dyads);
ThreadRefs thread_refs(std::span<const Thread> threads);

enum class Measure : std::uint8_t { ReplyTime, ReplyLength };

std::string_view to_string(Measure m);
double measure_of(const ReplyEvent& e, Measure m);

// ---------------------------------------------------------------------------
// Curves

enum class CurveStatistic : std::uint8_t { Median, Mean };

struct CurveBin {
  std::string label;
  double x = 0;  // numeric position of the bin (center or key)
  std::size_t count = 0;
  double value = 0;  // median or mean, per the curve's statistic
  double p25 = 0;
  double p75 = 0;
  double ci_half = 0;  // normal-approximation 95% half-width of the mean
};

struct SummaryCurve {
  std::string name;
  CurveStatistic statistic = CurveStatistic::Median;
  std::vector<CurveBin> bins;  // populated bins only, ascending key

  std::size_t population() const;
  const CurveBin* find(std::string_view label) const;
};

/// Per-bin sample collector. Builders merge associatively; the resulting
/// curve does not depend on insertion or merge order.
class CurveBuilder {
 public:
  using Describe = std::function<std::pair<std::string, double>(std::int64_t key)>;

  void add(std::int64_t key, double value) { samples_[key].push_back(value); }
  void merge(const CurveBuilder& other);
  bool empty() const noexcept { return samples_.empty(); }

  SummaryCurve build(std::string name, CurveStatistic statistic, const Describe& describe) const;
  /// Bins labelled by their integer key.
  SummaryCurve build(std::string name, CurveStatistic statistic) const;

 private:
  std::map<std::int64_t, std::vector<double>> samples_;
};

/// Columns: curve, bin, x, count, statistic, value, p25, p75, ci_half.
std::size_t write_curves(std::ostream& out, std::span<const SummaryCurve> curves);

// ---------------------------------------------------------------------------
// Reply time / length distributions

struct HistogramBin {
  double lower = 0;
  double upper = 0;
  std::size_t count = 0;
  double fraction = 0;  // probability mass of the bin
  double density = 0;   // fraction / width; NaN for the zero-width bin
  double cdf = 0;       // fraction of samples <= upper
};

struct DistributionOptions {
  bool log_binning = true;
  int bins_per_decade = 10;   // log binning
  double linear_width = 1.0;  // linear binning
};

struct Distribution {
  stats::Summary summary;
  std::vector<HistogramBin> histogram;
};

/// Throws DomainError on empty input.
Distribution distribution(std::span<const double> values, const DistributionOptions& options = {});
std::vector<double> collect(const ThreadRefs& threads, Measure m);
std::size_t write_distribution(std::ostream& out, const Distribution& d);

// ---------------------------------------------------------------------------
// Thread evolution, correlation, circadian and group breakdowns

struct StepStats {
  std::vector<SummaryCurve> by_step;  // "<measure>/length=<L>", x = step
  SummaryCurve time_by_thread_length;
  SummaryCurve length_by_thread_length;
};

/// Thread length is the number of reply events; only lengths below
/// `max_thread_length` are reported per step.
StepStats step_stats(const ThreadRefs& threads, std::size_t max_thread_length = 50);

/// Median reply time binned by reply length and by received length.
std::vector<SummaryCurve> time_length_correlation(const ThreadRefs& threads, double bin_width_words = 10);

/// Median reply time and length by day of week and by local hour of the
/// received message.
std::vector<SummaryCurve> circadian_stats(const ThreadRefs& threads);

enum class GroupBy : std::uint8_t { AgeGroup, Gender, Device, HasAttachment };
std::string_view to_string(GroupBy g);

struct GroupSummary {
  std::string group;
  std::size_t events = 0;
  double median_reply_time = 0;
  double median_reply_length = 0;
};

struct GroupStats {
  std::vector<GroupSummary> groups;  // sorted by label
  std::vector<SummaryCurve> time_given_length;  // "time_given_length/<group>"
  std::vector<SummaryCurve> distributions;      // "<measure>/<group>" log-binned medians
};

/// Demographic groups use the replier's profile; users without one fall in
/// "unknown". Device is the replier's device; attachment status refers to the
/// received message.
GroupStats group_stats(const ThreadRefs& threads, const ProfileMap& profiles, GroupBy by,
                       double length_bin_width = 10);
std::size_t write_group_summaries(std::ostream& out, std::span<const GroupSummary> groups);

// ---------------------------------------------------------------------------
// Load and overload

struct DailyLoad {
  std::string user_id;
  std::int64_t day = 0;  // local days since epoch
  std::uint32_t received = 0;
  std::uint32_t received_from_contacts = 0;
  std::uint32_t sent = 0;
  std::uint32_t replied = 0;
};

/// Message ids of every reply message in the corpus (the replying side of a
/// reply event), over all dyads before any filtering.
std::unordered_set<std::string> reply_message_ids(std::span<const Dyad> dyads);

/// Per user-day counts over the full corpus. A message's day is its local
/// date under the record's timezone offset. A contact of a user is anyone
/// the user sends at least one message to anywhere in the corpus.
std::vector<DailyLoad> compute_daily_loads(std::span<const EmailRecord> records,
                                           const std::unordered_set<std::string>& reply_ids);
std::size_t write_daily_loads(std::ostream& out, std::span<const DailyLoad> loads);

struct OverloadOptions {
  std::size_t load_bins = 20;
  double top_quantile = 0.99;        // log bins span [1, this quantile of load]
  std::uint32_t max_daily_sent = 1000;  // users above this on any day are excluded
};

struct OverloadReport {
  std::vector<SummaryCurve> curves;  // "<metric>/<slice>"
  std::set<std::string> excluded_users;
};

/// Metrics: sent, replied, fraction_replied, fraction_replied_contacts,
/// reply_time, reply_length. Slices: all, activity=low|high, age=<group>,
/// gender=<F|M|U>. Daily reply fractions are capped at 1.
OverloadReport overload_curves(std::span<const DailyLoad> loads, const ThreadRefs& threads,
                               const ProfileMap& profiles, const OverloadOptions& options = {});

// ---------------------------------------------------------------------------
// Coordination over the course of a thread

struct SegmentOptions {
  std::size_t segments = 10;
  std::size_t min_steps = 10;  // threads with fewer reply events are skipped
};

/// Segment of item i (1-based) in a sequence of n items.
std::size_t segment_of(std::size_t i, std::size_t n, std::size_t segments = 10);

struct SegmentCurve {
  SummaryCurve curve;  // mean with 95% CI across threads, x = segment 1..10
  std::size_t threads_used = 0;
  std::size_t threads_skipped_zero_median = 0;
};

/// Mean absolute difference between consecutive median-normalized reply
/// values. Each user's median is taken over all their events in `threads`.
SegmentCurve synchronization_curve(const ThreadRefs& threads, Measure m, const SegmentOptions& options = {});

/// One curve per marker category of |rate(reply) - rate(replied-to message)|.
std::vector<SegmentCurve> marker_coordination(const ThreadRefs& threads, const SegmentOptions& options = {});

/// Returns nullopt when the similarity is undefined (e.g. a zero vector).
using MessageSimilarity = std::function<std::optional<double>(const ThreadMessage&, const ThreadMessage&)>;

/// Mean similarity between each reply and the message it answers.
SegmentCurve content_similarity_curve(const ThreadRefs& threads, const MessageSimilarity& similarity,
                                      const SegmentOptions& options = {});

}  // namespace mailconv

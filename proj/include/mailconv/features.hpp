#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mailconv/ingest.hpp"
#include "mailconv/profile.hpp"
#include "mailconv/threading.hpp"

namespace mailconv {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

enum class FeatureGroup : std::uint8_t {
  PairHistory,
  Demographics,
  ThreadStep,
  CountStats,
  ContactStats,
  LengthStats,
  ReceivedTime,
  Attachments,
  DeviceHistory,
};

std::string_view to_string(FeatureGroup g);

struct FeatureSpec {
  std::string name;
  FeatureGroup group;
  std::string description;
};

class FeatureCatalog {
 public:
  /// The full 83-feature catalog.
  static const FeatureCatalog& standard();

  explicit FeatureCatalog(std::vector<FeatureSpec> entries);

  std::size_t size() const noexcept { return entries_.size(); }
  const FeatureSpec& operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<FeatureSpec>& entries() const noexcept { return entries_; }
  std::size_t group_size(FeatureGroup g) const;
  /// Throws DomainError for an unknown name.
  std::size_t index_of(std::string_view name) const;

  /// Catalog restricted to `indices` (in the given order).
  FeatureCatalog select(std::span<const std::size_t> indices) const;

  /// Stable digest of the ordered names; stored with trained models.
  std::uint64_t hash() const;

 private:
  std::vector<FeatureSpec> entries_;
};

// ---------------------------------------------------------------------------
// Causal per-user daily activity

/// Accumulates, in time order, each user's per-day activity and answers
/// mean/median/max statistics over the days seen so far.
class LoadTracker {
 public:
  enum Metric : std::size_t {
    Received,
    Sent,
    Replied,
    ContactsEmailed,
    ContactsReceivedFrom,
    CumulativeContacts,
    WordsReceived,
    WordsSent,
    WordsReplied,
    kMetrics
  };
  static constexpr std::size_t kStatsPerUser = kMetrics * 3;  // mean, median, max per metric
  using Snapshot = std::array<double, kStatsPerUser>;

  /// A record's day is its local date under the record's timezone offset.
  /// Self-addressed records are ignored.
  void add(const EmailRecord& record, bool is_reply);

  /// Statistics over the user's active days; all missing for an unseen user.
  Snapshot snapshot(std::string_view user) const;

  /// True once the user has sent a message from a phone or tablet.
  bool used_mobile(std::string_view user) const;

 private:
  struct Day {
    std::array<double, kMetrics> value{};
    std::unordered_set<std::string> emailed;
    std::unordered_set<std::string> received_from;
  };
  struct User {
    std::map<std::int64_t, Day> days;
    std::array<std::vector<double>, kMetrics> sorted;  // one value per active day
    std::array<double, kMetrics> sum{};
    std::unordered_set<std::string> contacts;
    bool mobile = false;
  };

  Day& day_of(User& u, std::int64_t day);
  static void set(User& u, Day& d, std::size_t metric, double value);

  std::unordered_map<std::string, User> users_;
};

// ---------------------------------------------------------------------------
// Pair history

struct PastReply {
  std::string replier;
  double reply_time_minutes;
  double reply_length_words;
};

/// The 20 pair-history features. `history` holds the dyad's earlier replies
/// in time order.
std::array<double, 20> pair_history_features(std::span<const PastReply> history, std::string_view replier,
                                             std::string_view receiver);

// ---------------------------------------------------------------------------

struct FeatureRow {
  std::string dyad;
  std::string subject_root;
  std::size_t step = 0;
  std::string replier;
  std::string receiver;
  std::string reply_message_id;
  std::int64_t reply_timestamp_utc = 0;

  double reply_time_minutes = 0;
  std::uint32_t reply_length_words = 0;
  bool is_last = false;

  std::vector<double> values;  // catalog order, NaN = missing
};

/// One row per reply event of `dyads`, grouped by dyad (in the given order)
/// and ordered by reply time within each dyad. Every feature uses only
/// records strictly earlier than the reply. Activity statistics are taken
/// over the whole `corpus`; `reply_ids` names the messages that count as
/// replies.
std::vector<FeatureRow> assemble_features(std::span<const EmailRecord> corpus, std::span<const Dyad> dyads,
                                          const ProfileMap& profiles,
                                          const std::unordered_set<std::string>& reply_ids);

struct TrainTestSplit {
  std::vector<std::size_t> train;  // row indices
  std::vector<std::size_t> test;
  std::vector<std::string> short_dyads;  // fewer than 4 events, all kept for training
};

/// Per dyad, the first ceil(train_fraction * n) rows in time order train and
/// the rest test. Rows must be grouped by dyad as assemble_features emits them.
TrainTestSplit split_train_test(std::span<const FeatureRow> rows, double train_fraction = 0.75);

/// Header: dyad, subject_root, step, reply_message_id, replier, receiver, reply_timestamp_utc,
/// reply_time_minutes, reply_length_words, is_last, then one column per feature.
std::size_t write_feature_table(std::ostream& out, std::span<const FeatureRow> rows, const FeatureCatalog& catalog);

/// Inverse of write_feature_table. Throws InputError if the header does not
/// match the catalog.
std::vector<FeatureRow> read_feature_table(std::istream& in, const FeatureCatalog& catalog);

}  // namespace mailconv

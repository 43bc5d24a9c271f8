#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mailconv/ingest.hpp"

namespace mailconv {

enum class Weekday : std::uint8_t { Monday, Tuesday, Wednesday, Thursday, Friday, Saturday, Sunday };

std::string_view to_string(Weekday d);

/// Local calendar day number (days since 1970-01-01) of a UTC timestamp
/// shifted by a timezone offset.
std::int64_t local_day(std::int64_t timestamp_utc, std::int32_t tz_offset_minutes);
int local_hour(std::int64_t timestamp_utc, std::int32_t tz_offset_minutes);
Weekday local_weekday(std::int64_t timestamp_utc, std::int32_t tz_offset_minutes);

/// The fields of a record that thread analysis needs; the body stays behind
/// in the corpus.
struct ThreadMessage {
  std::string message_id;
  std::string sender_id;
  std::int64_t timestamp_utc = 0;
  std::int32_t tz_offset_minutes = 0;
  std::uint32_t word_count = 0;
  std::uint32_t n_attachments = 0;
  Device device = Device::Desktop;
  bool is_reply_subject = false;
  MarkerCounts marker_counts{};
  std::size_t record_index = 0;  // position in the corpus the thread was built from
};

struct ReplyEvent {
  std::size_t step = 0;  // 1-based among the thread's reply events
  std::string replier;
  std::string receiver;
  double reply_time_minutes = 0;
  std::uint32_t reply_length_words = 0;
  std::uint32_t received_length_words = 0;
  std::int64_t received_timestamp_utc = 0;
  int received_local_hour = 0;
  Weekday received_day_of_week = Weekday::Monday;
  std::uint32_t n_attachments_received = 0;
  Device replier_device = Device::Desktop;
  bool is_last = false;

  // Positions in Thread::messages: the message the reply time is measured
  // from, the last message of the answered run, and the reply itself.
  std::size_t anchor_index = 0;
  std::size_t replied_to_index = 0;
  std::size_t reply_index = 0;
  std::string reply_message_id;
  std::int64_t reply_timestamp_utc = 0;
  std::int32_t reply_tz_offset_minutes = 0;
};

struct Thread {
  std::string user_a;
  std::string user_b;
  std::string subject_root;
  std::vector<ThreadMessage> messages;  // ordered by (timestamp, message_id)
  std::vector<ReplyEvent> reply_events;
  double span_hours = 0;
};

struct Dyad {
  std::string user_a;  // lexicographically smaller id
  std::string user_b;
  std::vector<Thread> threads;  // ordered by first message
  std::size_t replies_a_to_b = 0;
  std::size_t replies_b_to_a = 0;

  std::string key() const { return user_a + "|" + user_b; }
};

enum class ReplyTimeAnchor : std::uint8_t {
  FirstOfRun,  // default: measured from the first message of the answered run
  LastOfRun,
};

struct ThreadingOptions {
  ReplyTimeAnchor anchor = ReplyTimeAnchor::FirstOfRun;
};

struct ThreadingCounters {
  std::size_t nonpositive_reply_times = 0;  // events dropped for clock skew or ties
  std::size_t self_addressed = 0;           // records skipped, sender == recipient

  ThreadingCounters& operator+=(const ThreadingCounters& o) {
    nonpositive_reply_times += o.nonpositive_reply_times;
    self_addressed += o.self_addressed;
    return *this;
  }
};

/// Groups one dyad's records by subject root and orders each group in time.
/// A bare-subject message joins the group of its "Re:" replies and, being
/// earliest, becomes the thread root. Reply events are not filled in.
std::vector<Thread> build_threads(std::span<const EmailRecord> records);

/// Same, for the subset `members` of a larger corpus.
std::vector<Thread> build_threads(std::span<const EmailRecord> corpus, std::span<const std::size_t> members);

/// Collapses same-sender runs and emits one event per change of sender.
std::vector<ReplyEvent> extract_reply_pairs(const Thread& thread, const ThreadingOptions& options = {},
                                            ThreadingCounters* counters = nullptr);

/// Splits a corpus into dyads, builds threads and reply events for each.
/// Dyads are ordered by key, so the result does not depend on record order.
std::vector<Dyad> build_dyads(std::span<const EmailRecord> corpus, const ThreadingOptions& options = {},
                              ThreadingCounters* counters = nullptr);

/// Keeps dyads with at least `min_replies_each_direction` events each way.
std::vector<Dyad> filter_dyads(std::vector<Dyad> dyads, std::size_t min_replies_each_direction = 5);

/// Thread and reply tables (TSV). Return the number of data rows.
std::size_t write_thread_table(std::ostream& out, std::span<const Dyad> dyads);
std::size_t write_reply_table(std::ostream& out, std::span<const Dyad> dyads);

}  // namespace mailconv

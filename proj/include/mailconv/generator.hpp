#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mailconv/ingest.hpp"
#include "mailconv/profile.hpp"

namespace mailconv {

struct GeneratorParams {
  std::size_t n_dyads = 100;
  std::uint64_t seed = 1;

  // Conversation shape.
  std::size_t min_threads_per_dyad = 2;
  std::size_t max_threads_per_dyad = 8;
  double mean_thread_length = 5;         // messages, at least 2
  std::size_t max_messages_per_dyad = 200;
  double followup_probability = 0.15;    // next message comes from the same sender
  double mean_gap_hours = 20;            // between consecutive threads of a dyad

  // Reply time in minutes: log-normal unless the planted signal is on.
  double reply_time_median_minutes = 45;
  double reply_time_log_sd = 1.8;

  double reply_length_median_words = 35;
  double reply_length_log_sd = 0.9;

  double quote_probability = 0.5;        // reply carries the quoted message
  double attachment_probability = 0.1;
  double mobile_user_fraction = 0.3;     // users who sometimes write from a phone or tablet
  double profile_fraction = 0.95;        // users with a demographic profile

  /// Bulk messages from one-way senders, per dyad.
  double background_messages_per_dyad = 2;

  /// Reply-time class follows the replier's historical median in the pair:
  /// median <= 40 min gives Slow, <= 400 min Immediate, otherwise Fast, with
  /// `label_noise` of replies moved to another class. Without history the
  /// class is uniform. Times are drawn log-uniformly within the class.
  bool planted_signal = false;
  double label_noise = 0.1;

  /// Replies of exactly 15 and 164 minutes open the first dyad, and
  /// `boundary_rate` of later replies land exactly on a boundary.
  bool boundary_replies = true;
  double boundary_rate = 0.01;

  std::int64_t start_timestamp = 1420070400;  // 2015-01-01T00:00:00Z
  double span_days = 90;

  void validate() const;  // throws DomainError
};

struct TrueEvent {
  std::string reply_message_id;
  std::string anchor_message_id;      // first message of the answered run
  std::string replied_to_message_id;  // last message of the answered run
  std::string replier;
  std::string receiver;
  std::int64_t reply_time_seconds = 0;
  std::uint32_t reply_length_words = 0;
  std::uint8_t time_class = 0;
  bool rule_applied = false;  // class came from the planted rule
  double history_median_minutes = 0;
  bool is_last = false;
};

struct TrueThread {
  std::string user_a;  // smaller id
  std::string user_b;
  std::string subject_root;
  std::vector<std::string> message_ids;  // time order
  std::vector<TrueEvent> events;
};

struct GeneratedCorpus {
  std::vector<EmailRecord> records;  // derived fields filled
  ProfileMap profiles;
  std::vector<TrueThread> threads;
};

GeneratedCorpus generate_corpus(const GeneratorParams& params, const IngestConfig& config = {});

/// One JSON object per thread.
void write_truth(std::ostream& out, const std::vector<TrueThread>& threads);
std::vector<TrueThread> read_truth(std::istream& in);

/// Writes records.jsonl, profiles.tsv and truth.jsonl into `dir`.
void write_generated(const std::filesystem::path& dir, const GeneratedCorpus& corpus);

}  // namespace mailconv

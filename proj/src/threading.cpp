#include "mailconv/threading.hpp"

#include <algorithm>
#include <map>
#include <ostream>

#include "mailconv/table.hpp"

namespace mailconv {

namespace {

constexpr std::int64_t kSecondsPerDay = 86400;

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  auto q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

ThreadMessage to_message(const EmailRecord& r, std::size_t index) {
  ThreadMessage m;
  m.message_id = r.message_id;
  m.sender_id = r.sender_id;
  m.timestamp_utc = r.timestamp_utc;
  m.tz_offset_minutes = r.tz_offset_minutes;
  m.word_count = r.word_count;
  m.n_attachments = r.n_attachments;
  m.device = r.device;
  m.is_reply_subject = r.is_reply_subject;
  m.marker_counts = r.marker_counts;
  m.record_index = index;
  return m;
}

bool earlier(const ThreadMessage& a, const ThreadMessage& b) {
  if (a.timestamp_utc != b.timestamp_utc) return a.timestamp_utc < b.timestamp_utc;
  return a.message_id < b.message_id;
}

}  // namespace

std::string_view to_string(Weekday d) {
  static constexpr std::string_view names[] = {"mon", "tue", "wed", "thu", "fri", "sat", "sun"};
  return names[static_cast<std::size_t>(d)];
}

std::int64_t local_day(std::int64_t timestamp_utc, std::int32_t tz_offset_minutes) {
  return floor_div(timestamp_utc + std::int64_t{tz_offset_minutes} * 60, kSecondsPerDay);
}

int local_hour(std::int64_t timestamp_utc, std::int32_t tz_offset_minutes) {
  const auto local = timestamp_utc + std::int64_t{tz_offset_minutes} * 60;
  return static_cast<int>((local - floor_div(local, kSecondsPerDay) * kSecondsPerDay) / 3600);
}

Weekday local_weekday(std::int64_t timestamp_utc, std::int32_t tz_offset_minutes) {
  // 1970-01-01 was a Thursday.
  const auto day = local_day(timestamp_utc, tz_offset_minutes);
  return static_cast<Weekday>(((day + 3) % 7 + 7) % 7);
}

std::vector<Thread> build_threads(std::span<const EmailRecord> corpus, std::span<const std::size_t> members) {
  std::map<std::string, std::vector<ThreadMessage>> groups;
  for (auto idx : members) {
    const auto& r = corpus[idx];
    groups[r.subject_root].push_back(to_message(r, idx));
  }

  std::vector<Thread> threads;
  threads.reserve(groups.size());
  for (auto& [root, msgs] : groups) {
    std::sort(msgs.begin(), msgs.end(), earlier);
    Thread t;
    t.subject_root = root;
    t.messages = std::move(msgs);
    threads.push_back(std::move(t));
  }
  if (!members.empty()) {
    const auto& first = corpus[members.front()];
    const auto& [lo, hi] = std::minmax(first.sender_id, first.recipient_id);
    for (auto& t : threads) {
      t.user_a = lo;
      t.user_b = hi;
      t.span_hours = static_cast<double>(t.messages.back().timestamp_utc - t.messages.front().timestamp_utc) / 3600.0;
    }
  }
  std::sort(threads.begin(), threads.end(), [](const Thread& a, const Thread& b) {
    if (earlier(a.messages.front(), b.messages.front())) return true;
    if (earlier(b.messages.front(), a.messages.front())) return false;
    return a.subject_root < b.subject_root;
  });
  return threads;
}

std::vector<Thread> build_threads(std::span<const EmailRecord> records) {
  std::vector<std::size_t> all(records.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return build_threads(records, all);
}

std::vector<ReplyEvent> extract_reply_pairs(const Thread& thread, const ThreadingOptions& options,
                                            ThreadingCounters* counters) {
  std::vector<ReplyEvent> events;
  const auto& m = thread.messages;
  if (m.empty()) return events;

  std::size_t run_start = 0;
  for (std::size_t i = 1; i < m.size(); ++i) {
    if (m[i].sender_id == m[run_start].sender_id) continue;

    const std::size_t anchor = options.anchor == ReplyTimeAnchor::FirstOfRun ? run_start : i - 1;
    const auto& a = m[anchor];
    const auto& reply = m[i];
    const auto delta = reply.timestamp_utc - a.timestamp_utc;
    if (delta <= 0) {
      if (counters) ++counters->nonpositive_reply_times;
    } else {
      ReplyEvent e;
      e.step = events.size() + 1;
      e.replier = reply.sender_id;
      e.receiver = a.sender_id;
      e.reply_time_minutes = static_cast<double>(delta) / 60.0;
      e.reply_length_words = reply.word_count;
      e.received_length_words = m[i - 1].word_count;
      e.received_timestamp_utc = a.timestamp_utc;
      e.received_local_hour = local_hour(a.timestamp_utc, a.tz_offset_minutes);
      e.received_day_of_week = local_weekday(a.timestamp_utc, a.tz_offset_minutes);
      e.n_attachments_received = a.n_attachments;
      e.replier_device = reply.device;
      e.anchor_index = anchor;
      e.replied_to_index = i - 1;
      e.reply_index = i;
      e.reply_message_id = reply.message_id;
      e.reply_timestamp_utc = reply.timestamp_utc;
      e.reply_tz_offset_minutes = reply.tz_offset_minutes;
      events.push_back(std::move(e));
    }
    run_start = i;
  }
  if (!events.empty()) events.back().is_last = true;
  return events;
}

std::vector<Dyad> build_dyads(std::span<const EmailRecord> corpus, const ThreadingOptions& options,
                              ThreadingCounters* counters) {
  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& r = corpus[i];
    if (r.sender_id == r.recipient_id) {
      if (counters) ++counters->self_addressed;
      continue;
    }
    auto key = r.sender_id < r.recipient_id ? std::make_pair(r.sender_id, r.recipient_id)
                                            : std::make_pair(r.recipient_id, r.sender_id);
    members[std::move(key)].push_back(i);
  }

  std::vector<Dyad> dyads;
  dyads.reserve(members.size());
  for (auto& [key, idx] : members) {
    Dyad d;
    d.user_a = key.first;
    d.user_b = key.second;
    d.threads = build_threads(corpus, idx);
    for (auto& t : d.threads) {
      t.reply_events = extract_reply_pairs(t, options, counters);
      for (const auto& e : t.reply_events) (e.replier == d.user_a ? d.replies_a_to_b : d.replies_b_to_a)++;
    }
    dyads.push_back(std::move(d));
  }
  return dyads;
}

std::vector<Dyad> filter_dyads(std::vector<Dyad> dyads, std::size_t min_replies_each_direction) {
  std::erase_if(dyads, [&](const Dyad& d) {
    return d.replies_a_to_b < min_replies_each_direction || d.replies_b_to_a < min_replies_each_direction;
  });
  return dyads;
}

std::size_t write_thread_table(std::ostream& out, std::span<const Dyad> dyads) {
  TsvWriter w(out, {"dyad", "subject_root", "n_messages", "n_replies", "first_timestamp_utc", "span_hours"});
  for (const auto& d : dyads) {
    const auto key = d.key();
    for (const auto& t : d.threads) {
      w << key << t.subject_root << t.messages.size() << t.reply_events.size() << t.messages.front().timestamp_utc
        << t.span_hours;
      w.end_row();
    }
  }
  return w.rows();
}

std::size_t write_reply_table(std::ostream& out, std::span<const Dyad> dyads) {
  TsvWriter w(out, {"dyad", "subject_root", "step", "replier", "receiver", "reply_message_id", "reply_time_minutes",
                    "reply_length_words", "received_length_words", "received_local_hour", "received_day_of_week",
                    "n_attachments_received", "replier_device", "is_last"});
  for (const auto& d : dyads) {
    const auto key = d.key();
    for (const auto& t : d.threads)
      for (const auto& e : t.reply_events) {
        w << key << t.subject_root << e.step << e.replier << e.receiver << e.reply_message_id << e.reply_time_minutes
          << e.reply_length_words << e.received_length_words << e.received_local_hour
          << to_string(e.received_day_of_week) << e.n_attachments_received << to_string(e.replier_device)
          << e.is_last;
        w.end_row();
      }
  }
  return w.rows();
}

}  // namespace mailconv

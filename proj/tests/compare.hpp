#pragma once

// Field-by-field comparison of library threads against the reference.

#include <cmath>
#include <string>
#include <vector>

#include "mailconv/threading.hpp"
#include "oracles.hpp"

namespace compare {

struct ThreadDiff {
  std::size_t threads = 0;
  std::size_t events = 0;
  std::size_t mismatches = 0;
  std::vector<std::string> examples;  // first few mismatch descriptions

  void note(const std::string& what) {
    ++mismatches;
    if (examples.size() < 5) examples.push_back(what);
  }
};

inline ThreadDiff against_reference(const std::vector<mailconv::Dyad>& dyads,
                                    const std::map<std::tuple<std::string, std::string, std::string>, oracle::Thread>& ref) {
  ThreadDiff diff;
  std::size_t seen = 0;
  for (const auto& d : dyads) {
    std::size_t a_to_b = 0, b_to_a = 0;
    for (const auto& t : d.threads) {
      ++diff.threads;
      const auto key = std::make_tuple(d.user_a, d.user_b, t.subject_root);
      const auto it = ref.find(key);
      const std::string where = d.key() + "/" + t.subject_root;
      if (it == ref.end()) {
        diff.note(where + ": thread missing from reference");
        continue;
      }
      ++seen;
      const auto& r = it->second;
      std::vector<std::string> ids;
      for (const auto& m : t.messages) ids.push_back(m.message_id);
      if (ids != r.message_ids) diff.note(where + ": message order");
      if (t.user_a != r.user_a || t.user_b != r.user_b) diff.note(where + ": endpoints");
      if (t.reply_events.size() != r.events.size()) {
        diff.note(where + ": event count");
        continue;
      }
      for (std::size_t k = 0; k < r.events.size(); ++k) {
        ++diff.events;
        const auto& e = t.reply_events[k];
        const auto& o = r.events[k];
        (e.replier == d.user_a ? a_to_b : b_to_a)++;
        const bool same =
            e.step == o.step && e.replier == o.replier && e.receiver == o.receiver && e.reply_message_id == o.reply_id &&
            t.messages[e.anchor_index].message_id == o.anchor_id &&
            t.messages[e.replied_to_index].message_id == o.replied_to_id &&
            t.messages[e.reply_index].message_id == o.reply_id &&
            e.reply_time_minutes == static_cast<double>(o.reply_seconds) / 60.0 &&
            e.reply_length_words == o.reply_length && e.received_length_words == o.received_length &&
            e.received_timestamp_utc == o.received_timestamp && e.received_local_hour == o.received_hour &&
            static_cast<int>(e.received_day_of_week) == o.received_weekday &&
            e.n_attachments_received == o.attachments_received && e.replier_device == o.device &&
            e.is_last == o.is_last;
        if (!same) diff.note(where + ": event " + std::to_string(k + 1));
      }
    }
    if (a_to_b != d.replies_a_to_b || b_to_a != d.replies_b_to_a) diff.note(d.key() + ": direction counts");
  }
  if (seen != ref.size()) diff.note("reference has " + std::to_string(ref.size() - seen) + " unmatched threads");
  return diff;
}

}  // namespace compare

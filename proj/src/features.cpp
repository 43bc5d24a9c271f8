#include "mailconv/features.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include <fmt/format.h>

#include "mailconv/error.hpp"
#include "mailconv/random.hpp"
#include "mailconv/stats.hpp"
#include "mailconv/table.hpp"

namespace mailconv {

std::string_view to_string(FeatureGroup g) {
  switch (g) {
    case FeatureGroup::PairHistory: return "pair_history";
    case FeatureGroup::Demographics: return "demographics";
    case FeatureGroup::ThreadStep: return "thread_step";
    case FeatureGroup::CountStats: return "count_stats";
    case FeatureGroup::ContactStats: return "contact_stats";
    case FeatureGroup::LengthStats: return "length_stats";
    case FeatureGroup::ReceivedTime: return "received_time";
    case FeatureGroup::Attachments: return "attachments";
    case FeatureGroup::DeviceHistory: return "device_history";
  }
  return "?";
}

namespace {

constexpr std::array<std::string_view, 2> kRoles = {"replier", "receiver"};
constexpr std::array<std::string_view, 3> kDayStats = {"mean", "median", "max"};

struct MetricName {
  std::string_view name;
  std::string_view text;
};

// Indexed by LoadTracker::Metric.
constexpr std::array<MetricName, LoadTracker::kMetrics> kMetricNames = {{
    {"received_per_day", "messages received per day"},
    {"sent_per_day", "messages sent per day"},
    {"replied_per_day", "replies sent per day"},
    {"contacts_emailed_per_day", "distinct contacts emailed per day"},
    {"contacts_received_from_per_day", "distinct contacts received from per day"},
    {"cumulative_contacts", "distinct contacts emailed so far, at the end of each day"},
    {"words_received_per_day", "words received per day"},
    {"words_sent_per_day", "words sent per day"},
    {"words_replied_per_day", "words in replies sent per day"},
}};

constexpr std::array<std::size_t, 3> kCountMetrics = {LoadTracker::Received, LoadTracker::Sent, LoadTracker::Replied};
constexpr std::array<std::size_t, 3> kContactMetrics = {LoadTracker::ContactsEmailed, LoadTracker::ContactsReceivedFrom,
                                                        LoadTracker::CumulativeContacts};
constexpr std::array<std::size_t, 3> kLengthMetrics = {LoadTracker::WordsReceived, LoadTracker::WordsSent,
                                                       LoadTracker::WordsReplied};

std::vector<FeatureSpec> standard_entries() {
  std::vector<FeatureSpec> e;
  for (auto role : kRoles)
    for (std::string_view measure : {"reply_time", "reply_length"})
      for (std::string_view stat : {"mean", "median", "last", "2nd_last", "3rd_last"})
        e.push_back({fmt::format("{}_{}_{}", role, measure, stat), FeatureGroup::PairHistory,
                     fmt::format("{} of the {}'s earlier {}s in this pair", stat, role, measure)});
  for (auto role : kRoles) {
    e.push_back({fmt::format("{}_age", role), FeatureGroup::Demographics, fmt::format("{} age in years", role)});
    e.push_back({fmt::format("{}_gender", role), FeatureGroup::Demographics,
                 fmt::format("{} gender, F=0 M=1", role)});
  }
  e.push_back({"thread_step", FeatureGroup::ThreadStep, "position of the reply among the thread's replies"});
  auto day_stats = [&](FeatureGroup g, const std::array<std::size_t, 3>& metrics) {
    for (auto role : kRoles)
      for (auto m : metrics)
        for (auto stat : kDayStats)
          e.push_back({fmt::format("{}_{}_{}", role, kMetricNames[m].name, stat), g,
                       fmt::format("{} over active days of {}: {}", stat, role, kMetricNames[m].text)});
  };
  day_stats(FeatureGroup::CountStats, kCountMetrics);
  day_stats(FeatureGroup::ContactStats, kContactMetrics);
  day_stats(FeatureGroup::LengthStats, kLengthMetrics);
  e.push_back({"received_hour", FeatureGroup::ReceivedTime, "local hour of the received message, 0-23"});
  e.push_back({"received_day_of_week", FeatureGroup::ReceivedTime, "local weekday of the received message, Monday=0"});
  e.push_back({"received_attachments", FeatureGroup::Attachments, "attachments on the received message"});
  e.push_back({"replier_used_mobile", FeatureGroup::DeviceHistory, "1 if the replier sent from a phone or tablet before"});
  return e;
}

double median_sorted(const std::vector<double>& v) {
  const auto n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

}  // namespace

FeatureCatalog::FeatureCatalog(std::vector<FeatureSpec> entries) : entries_(std::move(entries)) {}

const FeatureCatalog& FeatureCatalog::standard() {
  static const FeatureCatalog catalog(standard_entries());
  return catalog;
}

std::size_t FeatureCatalog::group_size(FeatureGroup g) const {
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(), [g](const FeatureSpec& s) { return s.group == g; }));
}

std::size_t FeatureCatalog::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return i;
  throw DomainError(fmt::format("unknown feature '{}'", name));
}

FeatureCatalog FeatureCatalog::select(std::span<const std::size_t> indices) const {
  std::vector<FeatureSpec> out;
  for (auto i : indices) {
    if (i >= entries_.size()) throw DomainError("feature index out of range");
    out.push_back(entries_[i]);
  }
  return FeatureCatalog(std::move(out));
}

std::uint64_t FeatureCatalog::hash() const {
  std::uint64_t h = fnv1a("features");
  for (const auto& e : entries_) h = fnv1a("\n", fnv1a(e.name, h));
  return h;
}

// ---------------------------------------------------------------------------

LoadTracker::Day& LoadTracker::day_of(User& u, std::int64_t day) {
  auto [it, fresh] = u.days.try_emplace(day);
  if (fresh) {
    it->second.value[CumulativeContacts] = static_cast<double>(u.contacts.size());
    for (std::size_t m = 0; m < kMetrics; ++m) {
      const double v = it->second.value[m];
      auto& s = u.sorted[m];
      s.insert(std::upper_bound(s.begin(), s.end(), v), v);
      u.sum[m] += v;
    }
  }
  return it->second;
}

void LoadTracker::set(User& u, Day& d, std::size_t metric, double value) {
  const double old = d.value[metric];
  if (old == value) return;
  auto& s = u.sorted[metric];
  s.erase(std::lower_bound(s.begin(), s.end(), old));
  s.insert(std::upper_bound(s.begin(), s.end(), value), value);
  u.sum[metric] += value - old;
  d.value[metric] = value;
}

void LoadTracker::add(const EmailRecord& r, bool is_reply) {
  if (r.sender_id == r.recipient_id) return;
  const auto words = static_cast<double>(r.word_count);

  auto& s = users_[r.sender_id];
  auto& sd = day_of(s, local_day(r.timestamp_utc, r.tz_offset_minutes));
  set(s, sd, Sent, sd.value[Sent] + 1);
  set(s, sd, WordsSent, sd.value[WordsSent] + words);
  if (is_reply) {
    set(s, sd, Replied, sd.value[Replied] + 1);
    set(s, sd, WordsReplied, sd.value[WordsReplied] + words);
  }
  sd.emailed.insert(r.recipient_id);
  set(s, sd, ContactsEmailed, static_cast<double>(sd.emailed.size()));
  s.contacts.insert(r.recipient_id);
  set(s, sd, CumulativeContacts, static_cast<double>(s.contacts.size()));
  if (r.device != Device::Desktop) s.mobile = true;

  auto& u = users_[r.recipient_id];
  auto& ud = day_of(u, local_day(r.timestamp_utc, r.tz_offset_minutes));
  set(u, ud, Received, ud.value[Received] + 1);
  set(u, ud, WordsReceived, ud.value[WordsReceived] + words);
  ud.received_from.insert(r.sender_id);
  set(u, ud, ContactsReceivedFrom, static_cast<double>(ud.received_from.size()));
}

LoadTracker::Snapshot LoadTracker::snapshot(std::string_view user) const {
  Snapshot out;
  out.fill(kMissing);
  auto it = users_.find(std::string(user));
  if (it == users_.end() || it->second.days.empty()) return out;
  const auto& u = it->second;
  const auto n = static_cast<double>(u.days.size());
  for (std::size_t m = 0; m < kMetrics; ++m) {
    out[3 * m] = u.sum[m] / n;
    out[3 * m + 1] = median_sorted(u.sorted[m]);
    out[3 * m + 2] = u.sorted[m].back();
  }
  return out;
}

bool LoadTracker::used_mobile(std::string_view user) const {
  auto it = users_.find(std::string(user));
  return it != users_.end() && it->second.mobile;
}

// ---------------------------------------------------------------------------

std::array<double, 20> pair_history_features(std::span<const PastReply> history, std::string_view replier,
                                             std::string_view receiver) {
  std::array<double, 20> out;
  out.fill(kMissing);
  std::size_t k = 0;
  for (auto role : {replier, receiver}) {
    std::vector<double> times, lengths;
    for (const auto& h : history)
      if (h.replier == role) {
        times.push_back(h.reply_time_minutes);
        lengths.push_back(h.reply_length_words);
      }
    for (const auto* xs : {&times, &lengths}) {
      if (!xs->empty()) {
        out[k] = stats::mean(*xs);
        out[k + 1] = stats::median(*xs);
      }
      for (std::size_t back = 1; back <= 3; ++back)
        if (xs->size() >= back) out[k + 1 + back] = (*xs)[xs->size() - back];
      k += 5;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct EventSlot {
  const Dyad* dyad;
  const Thread* thread;
  const ReplyEvent* event;
};

bool slot_before(const EventSlot& a, const EventSlot& b) {
  if (a.event->reply_timestamp_utc != b.event->reply_timestamp_utc)
    return a.event->reply_timestamp_utc < b.event->reply_timestamp_utc;
  return a.event->reply_message_id < b.event->reply_message_id;
}

void put_demographics(std::vector<double>& v, std::size_t at, const UserProfile* p) {
  if (!p) return;
  v[at] = p->age_years;
  if (p->gender == Gender::F) v[at + 1] = 0;
  if (p->gender == Gender::M) v[at + 1] = 1;
}

}  // namespace

std::vector<FeatureRow> assemble_features(std::span<const EmailRecord> corpus, std::span<const Dyad> dyads,
                                          const ProfileMap& profiles,
                                          const std::unordered_set<std::string>& reply_ids) {
  const auto& catalog = FeatureCatalog::standard();
  const std::size_t demo_at = catalog.index_of("replier_age");
  const std::size_t step_at = catalog.index_of("thread_step");
  const std::size_t count_at = catalog.index_of("replier_received_per_day_mean");
  const std::size_t contact_at = catalog.index_of("replier_contacts_emailed_per_day_mean");
  const std::size_t length_at = catalog.index_of("replier_words_received_per_day_mean");
  const std::size_t tail_at = catalog.index_of("received_hour");

  // Rows: dyad order, then reply time.
  std::vector<EventSlot> slots;
  std::vector<std::size_t> dyad_begin;
  for (const auto& d : dyads) {
    dyad_begin.push_back(slots.size());
    const auto first = slots.size();
    for (const auto& t : d.threads)
      for (const auto& e : t.reply_events) slots.push_back({&d, &t, &e});
    std::sort(slots.begin() + static_cast<std::ptrdiff_t>(first), slots.end(), slot_before);
  }
  dyad_begin.push_back(slots.size());

  std::vector<FeatureRow> rows(slots.size());
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& [d, t, e] = slots[i];
    auto& r = rows[i];
    r.dyad = d->key();
    r.subject_root = t->subject_root;
    r.step = e->step;
    r.replier = e->replier;
    r.receiver = e->receiver;
    r.reply_message_id = e->reply_message_id;
    r.reply_timestamp_utc = e->reply_timestamp_utc;
    r.reply_time_minutes = e->reply_time_minutes;
    r.reply_length_words = e->reply_length_words;
    r.is_last = e->is_last;
    r.values.assign(catalog.size(), kMissing);

    put_demographics(r.values, demo_at, find_profile(profiles, e->replier));
    put_demographics(r.values, demo_at + 2, find_profile(profiles, e->receiver));
    r.values[step_at] = static_cast<double>(e->step);
    r.values[tail_at] = e->received_local_hour;
    r.values[tail_at + 1] = static_cast<double>(e->received_day_of_week);
    r.values[tail_at + 2] = e->n_attachments_received;
  }

  // Pair history from the dyad's strictly earlier replies.
  for (std::size_t di = 0; di + 1 < dyad_begin.size(); ++di) {
    std::vector<PastReply> past;
    std::vector<std::int64_t> past_at;
    for (auto i = dyad_begin[di]; i < dyad_begin[di + 1]; ++i) {
      const auto* e = slots[i].event;
      past.push_back({e->replier, e->reply_time_minutes, static_cast<double>(e->reply_length_words)});
      past_at.push_back(e->reply_timestamp_utc);
    }
    for (auto i = dyad_begin[di]; i < dyad_begin[di + 1]; ++i) {
      const auto* e = slots[i].event;
      const auto n = std::lower_bound(past_at.begin(), past_at.end(), e->reply_timestamp_utc) - past_at.begin();
      const auto h = pair_history_features(std::span(past).first(static_cast<std::size_t>(n)), e->replier, e->receiver);
      std::copy(h.begin(), h.end(), rows[i].values.begin());
    }
  }

  // Activity statistics from one sweep over the corpus in time order.
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (corpus[a].timestamp_utc != corpus[b].timestamp_utc) return corpus[a].timestamp_utc < corpus[b].timestamp_utc;
    return corpus[a].message_id < corpus[b].message_id;
  });
  std::vector<std::size_t> by_time(slots.size());
  std::iota(by_time.begin(), by_time.end(), std::size_t{0});
  std::sort(by_time.begin(), by_time.end(), [&](std::size_t a, std::size_t b) { return slot_before(slots[a], slots[b]); });

  LoadTracker tracker;
  std::size_t next = 0;
  for (auto i : by_time) {
    const auto* e = slots[i].event;
    while (next < order.size() && corpus[order[next]].timestamp_utc < e->reply_timestamp_utc) {
      const auto& rec = corpus[order[next++]];
      tracker.add(rec, reply_ids.count(rec.message_id) > 0);
    }
    auto& v = rows[i].values;
    for (std::size_t role = 0; role < 2; ++role) {
      const auto snap = tracker.snapshot(role == 0 ? e->replier : e->receiver);
      auto put = [&](std::size_t at, const std::array<std::size_t, 3>& metrics) {
        for (std::size_t m = 0; m < 3; ++m)
          for (std::size_t s = 0; s < 3; ++s) v[at + role * 9 + m * 3 + s] = snap[metrics[m] * 3 + s];
      };
      put(count_at, kCountMetrics);
      put(contact_at, kContactMetrics);
      put(length_at, kLengthMetrics);
    }
    v[tail_at + 3] = tracker.used_mobile(e->replier) ? 1.0 : 0.0;
  }
  return rows;
}

TrainTestSplit split_train_test(std::span<const FeatureRow> rows, double train_fraction) {
  if (!(train_fraction > 0 && train_fraction <= 1)) throw DomainError("train fraction must be in (0, 1]");
  TrainTestSplit split;
  std::size_t begin = 0;
  while (begin < rows.size()) {
    auto end = begin;
    while (end < rows.size() && rows[end].dyad == rows[begin].dyad) ++end;
    const auto n = end - begin;
    std::size_t n_train = n;
    if (n < 4)
      split.short_dyads.push_back(rows[begin].dyad);
    else
      n_train = std::min(n, static_cast<std::size_t>(std::ceil(train_fraction * static_cast<double>(n))));
    for (auto i = begin; i < end; ++i) (i - begin < n_train ? split.train : split.test).push_back(i);
    begin = end;
  }
  return split;
}

namespace {

const std::vector<std::string> kRowColumns = {"dyad",       "subject_root",       "step",
                                              "reply_message_id", "replier",     "receiver",
                                              "reply_timestamp_utc", "reply_time_minutes", "reply_length_words",
                                              "is_last"};

}  // namespace

std::size_t write_feature_table(std::ostream& out, std::span<const FeatureRow> rows, const FeatureCatalog& catalog) {
  auto columns = kRowColumns;
  for (const auto& e : catalog.entries()) columns.push_back(e.name);
  TsvWriter w(out, columns);
  for (const auto& r : rows) {
    if (r.values.size() != catalog.size()) throw DomainError("feature row does not match the catalog");
    w << r.dyad << r.subject_root << r.step << r.reply_message_id << r.replier << r.receiver << r.reply_timestamp_utc
      << r.reply_time_minutes << r.reply_length_words << r.is_last;
    for (double x : r.values) w << x;
    w.end_row();
  }
  return w.rows();
}

std::vector<FeatureRow> read_feature_table(std::istream& in, const FeatureCatalog& catalog) {
  std::string line;
  if (!std::getline(in, line)) throw InputError("feature table is empty");
  const auto header = split_tsv(line);
  const auto width = kRowColumns.size() + catalog.size();
  bool ok = header.size() == width;
  for (std::size_t i = 0; ok && i < width; ++i)
    ok = header[i] == (i < kRowColumns.size() ? kRowColumns[i] : catalog[i - kRowColumns.size()].name);
  if (!ok) throw InputError("feature table header does not match the feature catalog");

  std::vector<FeatureRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_tsv(line);
    if (cells.size() != width) throw RecordError(line_no, "wrong number of columns");
    try {
      FeatureRow r;
      r.dyad = cells[0];
      r.subject_root = cells[1];
      r.step = static_cast<std::size_t>(parse_number(cells[2]));
      r.reply_message_id = cells[3];
      r.replier = cells[4];
      r.receiver = cells[5];
      r.reply_timestamp_utc = static_cast<std::int64_t>(parse_number(cells[6]));
      r.reply_time_minutes = parse_number(cells[7]);
      r.reply_length_words = static_cast<std::uint32_t>(parse_number(cells[8]));
      r.is_last = cells[9] == "1";
      for (std::size_t i = kRowColumns.size(); i < width; ++i) r.values.push_back(parse_number(cells[i]));
      rows.push_back(std::move(r));
    } catch (const InputError& e) {
      throw RecordError(line_no, e.what());
    }
  }
  return rows;
}

}  // namespace mailconv

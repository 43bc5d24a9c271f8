#include "mailconv/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <unordered_map>

#include <fmt/format.h>

#include "mailconv/error.hpp"
#include "mailconv/table.hpp"

namespace mailconv {

ThreadRefs thread_refs(std::span<const Dyad> dyads) {
  ThreadRefs out;
  for (const auto& d : dyads)
    for (const auto& t : d.threads) out.push_back(&t);
  return out;
}

ThreadRefs thread_refs(std::span<const Thread> threads) {
  ThreadRefs out;
  out.reserve(threads.size());
  for (const auto& t : threads) out.push_back(&t);
  return out;
}

std::string_view to_string(Measure m) { return m == Measure::ReplyTime ? "reply_time" : "reply_length"; }

double measure_of(const ReplyEvent& e, Measure m) {
  return m == Measure::ReplyTime ? e.reply_time_minutes : static_cast<double>(e.reply_length_words);
}

// ---------------------------------------------------------------------------

std::size_t SummaryCurve::population() const {
  std::size_t n = 0;
  for (const auto& b : bins) n += b.count;
  return n;
}

const CurveBin* SummaryCurve::find(std::string_view label) const {
  for (const auto& b : bins)
    if (b.label == label) return &b;
  return nullptr;
}

void CurveBuilder::merge(const CurveBuilder& other) {
  for (const auto& [k, v] : other.samples_) {
    auto& dst = samples_[k];
    dst.insert(dst.end(), v.begin(), v.end());
  }
}

SummaryCurve CurveBuilder::build(std::string name, CurveStatistic statistic, const Describe& describe) const {
  SummaryCurve c;
  c.name = std::move(name);
  c.statistic = statistic;
  for (const auto& [key, values] : samples_) {
    const auto s = stats::summarize(values);
    CurveBin b;
    std::tie(b.label, b.x) = describe(key);
    b.count = s.n;
    b.value = statistic == CurveStatistic::Median ? s.median : s.mean;
    b.p25 = s.p25;
    b.p75 = s.p75;
    b.ci_half = s.ci_half;
    c.bins.push_back(std::move(b));
  }
  return c;
}

SummaryCurve CurveBuilder::build(std::string name, CurveStatistic statistic) const {
  return build(std::move(name), statistic,
               [](std::int64_t k) { return std::make_pair(std::to_string(k), static_cast<double>(k)); });
}

std::size_t write_curves(std::ostream& out, std::span<const SummaryCurve> curves) {
  TsvWriter w(out, {"curve", "bin", "x", "count", "statistic", "value", "p25", "p75", "ci_half"});
  for (const auto& c : curves)
    for (const auto& b : c.bins) {
      w << c.name << b.label << b.x << b.count << (c.statistic == CurveStatistic::Median ? "median" : "mean")
        << b.value << b.p25 << b.p75 << b.ci_half;
      w.end_row();
    }
  return w.rows();
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::int64_t kZeroBin = std::numeric_limits<std::int64_t>::min();

std::int64_t floor_key(double x) { return static_cast<std::int64_t>(std::floor(x)); }

/// Integer-width bins [k*w, (k+1)*w).
CurveBuilder::Describe width_bins(double w) {
  return [w](std::int64_t k) {
    const double lo = static_cast<double>(k) * w;
    return std::make_pair(fmt::format("[{},{})", lo, lo + w), lo + w / 2);
  };
}

}  // namespace

Distribution distribution(std::span<const double> values, const DistributionOptions& options) {
  if (values.empty()) throw DomainError("distribution of an empty sample");
  Distribution d;
  d.summary = stats::summarize(values);

  std::map<std::int64_t, std::size_t> counts;
  for (double x : values) {
    std::int64_t key;
    if (options.log_binning)
      key = x <= 0 ? kZeroBin : floor_key(std::log10(x) * options.bins_per_decade);
    else
      key = floor_key(x / options.linear_width);
    ++counts[key];
  }

  const auto n = static_cast<double>(values.size());
  std::size_t cumulative = 0;
  for (const auto& [key, count] : counts) {
    HistogramBin b;
    if (options.log_binning && key == kZeroBin) {
      b.lower = b.upper = 0;
    } else if (options.log_binning) {
      b.lower = std::pow(10.0, static_cast<double>(key) / options.bins_per_decade);
      b.upper = std::pow(10.0, static_cast<double>(key + 1) / options.bins_per_decade);
    } else {
      b.lower = static_cast<double>(key) * options.linear_width;
      b.upper = b.lower + options.linear_width;
    }
    cumulative += count;
    b.count = count;
    b.fraction = static_cast<double>(count) / n;
    b.density = b.upper > b.lower ? b.fraction / (b.upper - b.lower) : std::numeric_limits<double>::quiet_NaN();
    b.cdf = static_cast<double>(cumulative) / n;
    d.histogram.push_back(b);
  }
  return d;
}

std::vector<double> collect(const ThreadRefs& threads, Measure m) {
  std::vector<double> out;
  for (const auto* t : threads)
    for (const auto& e : t->reply_events) out.push_back(measure_of(e, m));
  return out;
}

std::size_t write_distribution(std::ostream& out, const Distribution& d) {
  TsvWriter w(out, {"lower", "upper", "count", "fraction", "density", "cdf", "n", "mean", "median", "sd"});
  for (const auto& b : d.histogram) {
    w << b.lower << b.upper << b.count << b.fraction << b.density << b.cdf << d.summary.n << d.summary.mean
      << d.summary.median << d.summary.sd;
    w.end_row();
  }
  return w.rows();
}

// ---------------------------------------------------------------------------

StepStats step_stats(const ThreadRefs& threads, std::size_t max_thread_length) {
  std::map<std::size_t, CurveBuilder> time_by_len, length_by_len;
  CurveBuilder time_vs_len, length_vs_len;
  for (const auto* t : threads) {
    const auto n = t->reply_events.size();
    if (n == 0) continue;
    for (const auto& e : t->reply_events) {
      time_vs_len.add(static_cast<std::int64_t>(n), e.reply_time_minutes);
      length_vs_len.add(static_cast<std::int64_t>(n), e.reply_length_words);
      if (n < max_thread_length) {
        time_by_len[n].add(static_cast<std::int64_t>(e.step), e.reply_time_minutes);
        length_by_len[n].add(static_cast<std::int64_t>(e.step), e.reply_length_words);
      }
    }
  }
  StepStats out;
  for (const auto& [len, b] : time_by_len)
    out.by_step.push_back(b.build(fmt::format("reply_time/length={}", len), CurveStatistic::Median));
  for (const auto& [len, b] : length_by_len)
    out.by_step.push_back(b.build(fmt::format("reply_length/length={}", len), CurveStatistic::Median));
  out.time_by_thread_length = time_vs_len.build("reply_time/by_thread_length", CurveStatistic::Median);
  out.length_by_thread_length = length_vs_len.build("reply_length/by_thread_length", CurveStatistic::Median);
  return out;
}

std::vector<SummaryCurve> time_length_correlation(const ThreadRefs& threads, double bin_width_words) {
  if (!(bin_width_words > 0)) throw DomainError("bin width must be positive");
  CurveBuilder by_reply, by_received;
  for (const auto* t : threads)
    for (const auto& e : t->reply_events) {
      by_reply.add(floor_key(e.reply_length_words / bin_width_words), e.reply_time_minutes);
      by_received.add(floor_key(e.received_length_words / bin_width_words), e.reply_time_minutes);
    }
  const auto describe = width_bins(bin_width_words);
  return {by_reply.build("reply_time/by_reply_length", CurveStatistic::Median, describe),
          by_received.build("reply_time/by_received_length", CurveStatistic::Median, describe)};
}

std::vector<SummaryCurve> circadian_stats(const ThreadRefs& threads) {
  CurveBuilder time_day, length_day, time_hour, length_hour;
  for (const auto* t : threads)
    for (const auto& e : t->reply_events) {
      const auto day = static_cast<std::int64_t>(e.received_day_of_week);
      time_day.add(day, e.reply_time_minutes);
      length_day.add(day, e.reply_length_words);
      time_hour.add(e.received_local_hour, e.reply_time_minutes);
      length_hour.add(e.received_local_hour, e.reply_length_words);
    }
  const CurveBuilder::Describe weekday = [](std::int64_t k) {
    return std::make_pair(std::string(to_string(static_cast<Weekday>(k))), static_cast<double>(k));
  };
  return {time_day.build("reply_time/day_of_week", CurveStatistic::Median, weekday),
          length_day.build("reply_length/day_of_week", CurveStatistic::Median, weekday),
          time_hour.build("reply_time/hour", CurveStatistic::Median),
          length_hour.build("reply_length/hour", CurveStatistic::Median)};
}

std::string_view to_string(GroupBy g) {
  switch (g) {
    case GroupBy::AgeGroup: return "age";
    case GroupBy::Gender: return "gender";
    case GroupBy::Device: return "device";
    case GroupBy::HasAttachment: return "attachment";
  }
  return "age";
}

GroupStats group_stats(const ThreadRefs& threads, const ProfileMap& profiles, GroupBy by, double length_bin_width) {
  if (!(length_bin_width > 0)) throw DomainError("bin width must be positive");
  auto label_of = [&](const ReplyEvent& e) -> std::string {
    switch (by) {
      case GroupBy::AgeGroup: {
        const auto* p = find_profile(profiles, e.replier);
        return p ? std::string(to_string(p->age_group())) : "unknown";
      }
      case GroupBy::Gender: {
        const auto* p = find_profile(profiles, e.replier);
        return std::string(to_string(p ? p->gender : Gender::Unknown));
      }
      case GroupBy::Device: return std::string(to_string(e.replier_device));
      case GroupBy::HasAttachment: return e.n_attachments_received > 0 ? "with_attachment" : "no_attachment";
    }
    return "unknown";
  };

  struct Acc {
    std::vector<double> times, lengths;
    CurveBuilder time_given_length, time_dist, length_dist;
  };
  std::map<std::string, Acc> groups;
  for (const auto* t : threads)
    for (const auto& e : t->reply_events) {
      auto& a = groups[label_of(e)];
      a.times.push_back(e.reply_time_minutes);
      a.lengths.push_back(e.reply_length_words);
      a.time_given_length.add(floor_key(e.reply_length_words / length_bin_width), e.reply_time_minutes);
      a.time_dist.add(floor_key(std::log10(e.reply_time_minutes) * 10), e.reply_time_minutes);
      a.length_dist.add(e.reply_length_words == 0 ? kZeroBin : floor_key(std::log10(e.reply_length_words) * 10),
                        e.reply_length_words);
    }

  const CurveBuilder::Describe log_bins = [](std::int64_t k) {
    if (k == kZeroBin) return std::make_pair(std::string("[0,1)"), 0.0);
    const double lo = std::pow(10.0, k / 10.0), hi = std::pow(10.0, (k + 1) / 10.0);
    return std::make_pair(fmt::format("[{:.4g},{:.4g})", lo, hi), std::sqrt(lo * hi));
  };

  GroupStats out;
  for (const auto& [label, a] : groups) {
    out.groups.push_back({label, a.times.size(), stats::median(a.times), stats::median(a.lengths)});
    out.time_given_length.push_back(a.time_given_length.build("time_given_length/" + label, CurveStatistic::Median,
                                                              width_bins(length_bin_width)));
    out.distributions.push_back(a.time_dist.build("reply_time/" + label, CurveStatistic::Median, log_bins));
    out.distributions.push_back(a.length_dist.build("reply_length/" + label, CurveStatistic::Median, log_bins));
  }
  return out;
}

std::size_t write_group_summaries(std::ostream& out, std::span<const GroupSummary> groups) {
  TsvWriter w(out, {"group", "events", "median_reply_time", "median_reply_length"});
  for (const auto& g : groups) {
    w << g.group << g.events << g.median_reply_time << g.median_reply_length;
    w.end_row();
  }
  return w.rows();
}

// ---------------------------------------------------------------------------

std::unordered_set<std::string> reply_message_ids(std::span<const Dyad> dyads) {
  std::unordered_set<std::string> ids;
  for (const auto& d : dyads)
    for (const auto& t : d.threads)
      for (const auto& e : t.reply_events) ids.insert(e.reply_message_id);
  return ids;
}

std::vector<DailyLoad> compute_daily_loads(std::span<const EmailRecord> records,
                                           const std::unordered_set<std::string>& reply_ids) {
  std::set<std::pair<std::string, std::string>> sent_to;  // (user, counterpart)
  for (const auto& r : records) sent_to.emplace(r.sender_id, r.recipient_id);

  std::map<std::pair<std::string, std::int64_t>, DailyLoad> rows;
  auto row = [&](const std::string& user, std::int64_t day) -> DailyLoad& {
    auto& l = rows[{user, day}];
    if (l.user_id.empty()) {
      l.user_id = user;
      l.day = day;
    }
    return l;
  };
  for (const auto& r : records) {
    const auto day = local_day(r.timestamp_utc, r.tz_offset_minutes);
    auto& s = row(r.sender_id, day);
    ++s.sent;
    if (reply_ids.count(r.message_id)) ++s.replied;
    auto& in = row(r.recipient_id, day);
    ++in.received;
    if (sent_to.count({r.recipient_id, r.sender_id})) ++in.received_from_contacts;
  }

  std::vector<DailyLoad> out;
  out.reserve(rows.size());
  for (auto& [k, l] : rows) out.push_back(std::move(l));
  return out;
}

std::size_t write_daily_loads(std::ostream& out, std::span<const DailyLoad> loads) {
  TsvWriter w(out, {"user", "day", "received", "received_from_contacts", "sent", "replied"});
  for (const auto& l : loads) {
    w << l.user_id << l.day << l.received << l.received_from_contacts << l.sent << l.replied;
    w.end_row();
  }
  return w.rows();
}

namespace {

/// Geometric bins over [1, top]: bin k covers [top^(k/n), top^((k+1)/n)).
struct LogBins {
  double top = 1;
  std::size_t n = 1;

  std::int64_t key(double x) const {
    if (top <= 1 || x <= 1) return 0;
    const auto k = static_cast<std::int64_t>(std::floor(static_cast<double>(n) * std::log(x) / std::log(top)));
    return std::clamp<std::int64_t>(k, 0, static_cast<std::int64_t>(n) - 1);
  }

  CurveBuilder::Describe describe() const {
    return [top = top, n = n](std::int64_t k) {
      const double lo = std::pow(top, static_cast<double>(k) / n);
      const double hi = std::pow(top, static_cast<double>(k + 1) / n);
      const bool last = k + 1 == static_cast<std::int64_t>(n);
      auto label = last ? fmt::format("[{:.4g},inf)", lo) : fmt::format("[{:.4g},{:.4g})", lo, hi);
      return std::make_pair(std::move(label), std::sqrt(lo * hi));
    };
  }
};

LogBins make_log_bins(std::vector<double> loads, const OverloadOptions& o) {
  LogBins b;
  b.n = std::max<std::size_t>(1, o.load_bins);
  if (!loads.empty()) b.top = std::max(1.0, stats::quantile(loads, o.top_quantile));
  return b;
}

}  // namespace

OverloadReport overload_curves(std::span<const DailyLoad> loads, const ThreadRefs& threads, const ProfileMap& profiles,
                               const OverloadOptions& options) {
  OverloadReport report;
  for (const auto& l : loads)
    if (l.sent > options.max_daily_sent) report.excluded_users.insert(l.user_id);

  // Activity tertiles on total sent volume.
  std::map<std::string, std::uint64_t> total_sent;
  for (const auto& l : loads)
    if (!report.excluded_users.count(l.user_id)) total_sent[l.user_id] += l.sent;
  std::vector<std::pair<std::uint64_t, std::string>> ranked;
  for (const auto& [u, s] : total_sent) ranked.emplace_back(s, u);
  std::sort(ranked.begin(), ranked.end());
  std::unordered_map<std::string, std::string> activity;
  const auto third = ranked.size() / 3;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (i < third)
      activity[ranked[i].second] = "low";
    else if (i >= ranked.size() - third)
      activity[ranked[i].second] = "high";
  }

  auto slices_of = [&](const std::string& user) {
    std::vector<std::string> s{"all"};
    if (auto it = activity.find(user); it != activity.end()) s.push_back("activity=" + it->second);
    const auto* p = find_profile(profiles, user);
    s.push_back(std::string("age=") + (p ? std::string(to_string(p->age_group())) : "unknown"));
    s.push_back(std::string("gender=") + std::string(to_string(p ? p->gender : Gender::Unknown)));
    return s;
  };

  std::vector<double> received_loads, contact_loads;
  for (const auto& l : loads) {
    if (report.excluded_users.count(l.user_id)) continue;
    if (l.received > 0) received_loads.push_back(l.received);
    if (l.received_from_contacts > 0) contact_loads.push_back(l.received_from_contacts);
  }
  const auto bins = make_log_bins(std::move(received_loads), options);
  const auto contact_bins = make_log_bins(std::move(contact_loads), options);

  std::map<std::string, CurveBuilder> sent, replied, fraction, fraction_contacts, reply_time, reply_length;
  std::map<std::pair<std::string, std::int64_t>, const DailyLoad*> by_user_day;
  for (const auto& l : loads) {
    if (report.excluded_users.count(l.user_id)) continue;
    by_user_day[{l.user_id, l.day}] = &l;
    const auto slices = slices_of(l.user_id);
    if (l.received > 0) {
      const auto k = bins.key(l.received);
      const double frac = std::min(1.0, static_cast<double>(l.replied) / l.received);
      for (const auto& s : slices) {
        sent[s].add(k, l.sent);
        replied[s].add(k, l.replied);
        fraction[s].add(k, frac);
      }
    }
    if (l.received_from_contacts > 0) {
      const auto k = contact_bins.key(l.received_from_contacts);
      const double frac = std::min(1.0, static_cast<double>(l.replied) / l.received_from_contacts);
      for (const auto& s : slices) fraction_contacts[s].add(k, frac);
    }
  }

  for (const auto* t : threads)
    for (const auto& e : t->reply_events) {
      auto it = by_user_day.find({e.replier, local_day(e.reply_timestamp_utc, e.reply_tz_offset_minutes)});
      if (it == by_user_day.end() || it->second->received == 0) continue;
      const auto k = bins.key(it->second->received);
      for (const auto& s : slices_of(e.replier)) {
        reply_time[s].add(k, e.reply_time_minutes);
        reply_length[s].add(k, e.reply_length_words);
      }
    }

  auto emit = [&](const char* metric, const std::map<std::string, CurveBuilder>& b, CurveStatistic stat,
                  const LogBins& lb) {
    for (const auto& [slice, builder] : b)
      report.curves.push_back(builder.build(fmt::format("{}/{}", metric, slice), stat, lb.describe()));
  };
  emit("sent", sent, CurveStatistic::Mean, bins);
  emit("replied", replied, CurveStatistic::Mean, bins);
  emit("fraction_replied", fraction, CurveStatistic::Mean, bins);
  emit("fraction_replied_contacts", fraction_contacts, CurveStatistic::Mean, contact_bins);
  emit("reply_time", reply_time, CurveStatistic::Median, bins);
  emit("reply_length", reply_length, CurveStatistic::Median, bins);
  return report;
}

// ---------------------------------------------------------------------------

std::size_t segment_of(std::size_t i, std::size_t n, std::size_t segments) {
  return segments * (i - 1) / n;
}

namespace {

/// Averages per-thread segment means across threads.
class SegmentAccumulator {
 public:
  explicit SegmentAccumulator(std::size_t segments) : per_thread_(segments), across_(), segments_(segments) {}

  void add(std::size_t segment, double value) {
    per_thread_[segment].first += value;
    per_thread_[segment].second += 1;
  }

  void end_thread() {
    for (std::size_t s = 0; s < segments_; ++s) {
      auto& [sum, n] = per_thread_[s];
      if (n > 0) across_.add(static_cast<std::int64_t>(s + 1), sum / n);
      sum = 0;
      n = 0;
    }
  }

  SummaryCurve build(std::string name) const { return across_.build(std::move(name), CurveStatistic::Mean); }

 private:
  std::vector<std::pair<double, std::size_t>> per_thread_;
  CurveBuilder across_;
  std::size_t segments_;
};

}  // namespace

SegmentCurve synchronization_curve(const ThreadRefs& threads, Measure m, const SegmentOptions& options) {
  std::map<std::string, std::vector<double>> per_user;
  for (const auto* t : threads)
    for (const auto& e : t->reply_events) per_user[e.replier].push_back(measure_of(e, m));
  std::unordered_map<std::string, double> medians;
  for (const auto& [u, v] : per_user) medians[u] = stats::median(v);

  SegmentCurve out;
  SegmentAccumulator acc(options.segments);
  for (const auto* t : threads) {
    const auto& ev = t->reply_events;
    if (ev.size() < std::max<std::size_t>(options.min_steps, 2)) continue;
    if (std::any_of(ev.begin(), ev.end(), [&](const ReplyEvent& e) { return !(medians.at(e.replier) > 0); })) {
      ++out.threads_skipped_zero_median;
      continue;
    }
    const auto diffs = ev.size() - 1;
    for (std::size_t j = 1; j <= diffs; ++j) {
      const double prev = measure_of(ev[j - 1], m) / medians.at(ev[j - 1].replier);
      const double cur = measure_of(ev[j], m) / medians.at(ev[j].replier);
      acc.add(segment_of(j, diffs, options.segments), std::abs(cur - prev));
    }
    acc.end_thread();
    ++out.threads_used;
  }
  out.curve = acc.build(fmt::format("synchronization/{}", to_string(m)));
  return out;
}

std::vector<SegmentCurve> marker_coordination(const ThreadRefs& threads, const SegmentOptions& options) {
  std::vector<SegmentAccumulator> acc(kMarkerCategories, SegmentAccumulator(options.segments));
  std::size_t used = 0;
  for (const auto* t : threads) {
    const auto& ev = t->reply_events;
    if (ev.size() < std::max<std::size_t>(options.min_steps, 1)) continue;
    for (const auto& e : ev) {
      const auto& reply = t->messages[e.reply_index];
      const auto& prev = t->messages[e.replied_to_index];
      if (reply.word_count == 0 || prev.word_count == 0) continue;
      const auto seg = segment_of(e.step, ev.size(), options.segments);
      for (std::size_t c = 0; c < kMarkerCategories; ++c) {
        const double a = static_cast<double>(reply.marker_counts[c]) / reply.word_count;
        const double b = static_cast<double>(prev.marker_counts[c]) / prev.word_count;
        acc[c].add(seg, std::abs(a - b));
      }
    }
    for (auto& a : acc) a.end_thread();
    ++used;
  }
  std::vector<SegmentCurve> out;
  for (std::size_t c = 0; c < kMarkerCategories; ++c) {
    SegmentCurve sc;
    sc.curve = acc[c].build(fmt::format("markers/{}", to_string(kAllMarkerCategories[c])));
    sc.threads_used = used;
    out.push_back(std::move(sc));
  }
  return out;
}

SegmentCurve content_similarity_curve(const ThreadRefs& threads, const MessageSimilarity& similarity,
                                      const SegmentOptions& options) {
  SegmentCurve out;
  SegmentAccumulator acc(options.segments);
  for (const auto* t : threads) {
    const auto& ev = t->reply_events;
    if (ev.size() < std::max<std::size_t>(options.min_steps, 1)) continue;
    for (const auto& e : ev)
      if (auto s = similarity(t->messages[e.replied_to_index], t->messages[e.reply_index]))
        acc.add(segment_of(e.step, ev.size(), options.segments), *s);
    acc.end_thread();
    ++out.threads_used;
  }
  out.curve = acc.build("content_similarity");
  return out;
}

}  // namespace mailconv

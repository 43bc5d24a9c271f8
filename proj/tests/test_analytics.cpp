#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "mailconv/analytics.hpp"
#include "mailconv/embedding.hpp"
#include "mailconv/error.hpp"
#include "mailconv/generator.hpp"
#include "mailconv/random.hpp"
#include "support.hpp"

using namespace mailconv;
using fixture::record;

namespace {

struct Reply {
  std::string replier;
  double minutes;
  std::uint32_t words = 10;
};

/// A thread holding only reply events, for the curve routines that read nothing else.
Thread event_thread(const std::vector<Reply>& replies, const std::string& other = "") {
  Thread t;
  for (std::size_t i = 0; i < replies.size(); ++i) {
    ReplyEvent e;
    e.step = i + 1;
    e.replier = replies[i].replier;
    e.receiver = other.empty() ? (i ? replies[i - 1].replier : "?") : other;
    e.reply_time_minutes = replies[i].minutes;
    e.reply_length_words = replies[i].words;
    e.is_last = i + 1 == replies.size();
    t.reply_events.push_back(e);
  }
  return t;
}

double naive_median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

const SummaryCurve& named(const std::vector<SummaryCurve>& curves, const std::string& name) {
  for (const auto& c : curves)
    if (c.name == name) return c;
  FAIL("no curve " << name);
  throw std::logic_error("unreachable");
}

std::vector<Dyad> generated_dyads(std::uint64_t seed, std::size_t n = 30) {
  GeneratorParams p;
  p.n_dyads = n;
  p.seed = seed;
  return build_dyads(generate_corpus(p).records);
}

}  // namespace

TEST_CASE("summary statistics") {
  const std::vector<double> xs{10, 47, 1000};
  CHECK(stats::median(xs) == 47);
  const auto d = distribution(xs);
  CHECK(d.summary.median == 47);
  CHECK(d.summary.n == 3);
  const auto one = distribution(std::vector<double>{5});
  CHECK(one.summary.mean == 5);
  CHECK(one.summary.median == 5);
  CHECK(one.summary.sd == 0);
  CHECK_THROWS_AS(distribution(std::vector<double>{}), DomainError);
  CHECK(stats::quantile(std::vector<double>{1, 2, 3, 4}, 0.25) == doctest::Approx(1.75));
}

TEST_CASE("distribution summary matches a naive pass on a log-normal sample") {
  Rng rng(11);
  std::vector<double> xs;
  for (int i = 0; i < 2001; ++i) xs.push_back(rng.lognormal(3.8, 1.7));
  const auto d = distribution(xs);
  double sum = 0;
  for (double x : xs) sum += x;
  const double mean = sum / xs.size();
  double ss = 0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (xs.size() - 1));
  CHECK(std::abs(d.summary.mean - mean) <= 1e-9 * mean);
  CHECK(std::abs(d.summary.sd - sd) <= 1e-9 * sd);
  CHECK(d.summary.median == doctest::Approx(naive_median(xs)).epsilon(1e-9));

  std::size_t total = 0;
  double mass = 0;
  for (const auto& b : d.histogram) {
    total += b.count;
    mass += b.fraction;
    CHECK(b.upper >= b.lower);
  }
  CHECK(total == xs.size());
  CHECK(mass == doctest::Approx(1.0));
  CHECK(d.histogram.back().cdf == doctest::Approx(1.0));
  for (const auto& b : d.histogram) {
    std::size_t below = 0;
    for (double x : xs) below += x < b.upper;
    CHECK(b.cdf * xs.size() == doctest::Approx(static_cast<double>(below)));
  }
}

TEST_CASE("per-step medians") {
  std::vector<Thread> threads;
  for (int i = 0; i < 3; ++i) threads.push_back(event_thread({{"a", 5}, {"b", 4}, {"a", 3}, {"b", 20}}));
  threads.push_back(event_thread({{"a", 7}}));
  const auto s = step_stats(thread_refs(threads));
  const auto& four = named(s.by_step, "reply_time/length=4");
  REQUIRE(four.bins.size() == 4);
  const double want[] = {5, 4, 3, 20};
  for (int k = 0; k < 4; ++k) {
    CHECK(four.bins[k].value == want[k]);
    CHECK(four.bins[k].count == 3);
  }
  const auto& one = named(s.by_step, "reply_time/length=1");
  REQUIRE(one.bins.size() == 1);
  CHECK(one.bins[0].value == 7);
}

TEST_CASE("step curves agree with a brute-force oracle") {
  const auto dyads = generated_dyads(4);
  const auto refs = thread_refs(dyads);
  const auto s = step_stats(refs, 50);
  std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> oracle;
  for (const auto& d : dyads)
    for (const auto& t : d.threads)
      for (const auto& e : t.reply_events)
        if (t.reply_events.size() < 50) oracle[{t.reply_events.size(), e.step}].push_back(e.reply_time_minutes);
  std::size_t checked = 0;
  for (const auto& [key, values] : oracle) {
    const auto& c = named(s.by_step, "reply_time/length=" + std::to_string(key.first));
    const auto* b = c.find(std::to_string(key.second));
    REQUIRE(b != nullptr);
    CHECK(b->count == values.size());
    CHECK(b->value == doctest::Approx(naive_median(values)).epsilon(1e-9));
    ++checked;
  }
  CHECK(checked > 10);
}

TEST_CASE("time and length correlation") {
  std::vector<Thread> flat{event_thread({{"a", 30, 5}, {"b", 30, 25}, {"a", 30, 95}})};
  const auto curves = time_length_correlation(thread_refs(flat));
  const auto& by_reply = named(curves, "reply_time/by_reply_length");
  REQUIRE(by_reply.bins.size() == 3);  // empty bins are omitted
  for (const auto& b : by_reply.bins) CHECK(b.value == 30);

  std::vector<Thread> linear;
  for (std::uint32_t w = 1; w <= 300; ++w) linear.push_back(event_thread({{"a", 2.0 * w, w}}));
  const auto lc = named(time_length_correlation(thread_refs(linear)), "reply_time/by_reply_length");
  for (std::size_t i = 1; i < lc.bins.size(); ++i) CHECK(lc.bins[i].value > lc.bins[i - 1].value);
  // Bin [10,20) holds lengths 10..19, so times 20..38 and median 29.
  CHECK(lc.find("[10,20)")->value == 29);
}

TEST_CASE("circadian curves") {
  const std::int64_t monday_9 = 1420448400;  // 2015-01-05 09:00 UTC
  std::vector<EmailRecord> records;
  for (int i = 0; i < 4; ++i) {
    records.push_back(record("q" + std::to_string(i), "A", "B", monday_9 + i * 7 * 86400, "t" + std::to_string(i)));
    records.push_back(record("r" + std::to_string(i), "B", "A", monday_9 + i * 7 * 86400 + 600, "Re: t" + std::to_string(i)));
  }
  const auto dyads = build_dyads(records);
  const auto curves = circadian_stats(thread_refs(dyads));
  const auto& day = named(curves, "reply_time/day_of_week");
  REQUIRE(day.bins.size() == 1);
  CHECK(day.bins[0].label == "mon");
  CHECK(day.bins[0].count == 4);
  const auto& hour = named(curves, "reply_time/hour");
  REQUIRE(hour.bins.size() == 1);
  CHECK(hour.bins[0].label == "9");
}

TEST_CASE("weekend replies slower in synthetic data keep their ordering") {
  const std::int64_t monday = 1420416000;  // 2015-01-05 00:00 UTC
  std::vector<EmailRecord> records;
  Rng rng(8);
  for (int i = 0; i < 140; ++i) {
    const std::int64_t day = i % 7;
    const std::int64_t t = monday + day * 86400 + 36000 + (i / 7) * 7 * 86400;
    const double minutes = (day >= 5 ? 120 : 30) * rng.uniform(0.8, 1.2);
    records.push_back(record("q" + std::to_string(i), "A", "B", t, "s" + std::to_string(i)));
    records.push_back(record("r" + std::to_string(i), "B", "A", t + static_cast<std::int64_t>(minutes * 60),
                             "Re: s" + std::to_string(i)));
  }
  const auto curves = circadian_stats(thread_refs(build_dyads(records)));
  const auto& day = named(curves, "reply_time/day_of_week");
  REQUIRE(day.bins.size() == 7);
  for (auto weekend : {"sat", "sun"})
    for (auto weekday : {"mon", "tue", "wed", "thu", "fri"}) CHECK(day.find(weekend)->value > day.find(weekday)->value);
}

TEST_CASE("group statistics") {
  ProfileMap profiles;
  profiles["teen"] = {"teen", 16, Gender::F};
  profiles["old"] = {"old", 60, Gender::M};
  std::vector<Thread> threads;
  for (int i = 0; i < 5; ++i) {
    threads.push_back(event_thread({{"teen", 13}}));
    threads.push_back(event_thread({{"old", 47}}));
  }
  const auto g = group_stats(thread_refs(threads), profiles, GroupBy::AgeGroup);
  REQUIRE(g.groups.size() == 2);
  std::map<std::string, double> medians;
  for (const auto& s : g.groups) medians[s.group] = s.median_reply_time;
  CHECK(medians.at(std::string(to_string(AgeGroup::Teen))) == 13);
  CHECK(medians.at(std::string(to_string(AgeGroup::Mature))) == 47);

  const auto unknown = group_stats(thread_refs(threads), ProfileMap{}, GroupBy::Gender);
  REQUIRE(unknown.groups.size() == 1);
  CHECK(unknown.groups[0].events == 10);
}

TEST_CASE("planted age ordering is reproduced") {
  ProfileMap profiles;
  const int ages[] = {15, 27, 44, 70};
  std::vector<Thread> threads;
  Rng rng(2);
  for (int g = 0; g < 4; ++g) {
    const auto user = "u" + std::to_string(g);
    profiles[user] = {user, ages[g], Gender::Unknown};
    for (int i = 0; i < 200; ++i) threads.push_back(event_thread({{user, (g + 1) * 20 * rng.uniform(0.5, 1.5)}}));
  }
  const auto g = group_stats(thread_refs(threads), profiles, GroupBy::AgeGroup);
  std::map<std::string, double> m;
  for (const auto& s : g.groups) m[s.group] = s.median_reply_time;
  CHECK(m.at("teen") < m.at("young_adult"));
  CHECK(m.at("young_adult") < m.at("adult"));
  CHECK(m.at("adult") < m.at("mature"));
}

TEST_CASE("age bands are exact at their edges") {
  CHECK(age_group_of(19) == AgeGroup::Teen);
  CHECK(age_group_of(20) == AgeGroup::YoungAdult);
  CHECK(age_group_of(35) == AgeGroup::YoungAdult);
  CHECK(age_group_of(36) == AgeGroup::Adult);
  CHECK(age_group_of(50) == AgeGroup::Adult);
  CHECK(age_group_of(51) == AgeGroup::Mature);
  CHECK(age_group_of(0) == AgeGroup::Teen);
}

TEST_CASE("daily loads count a day's traffic") {
  const std::int64_t day0 = 1420070400;
  std::vector<EmailRecord> records;
  for (int i = 0; i < 10; ++i)
    records.push_back(record("in" + std::to_string(i), "s" + std::to_string(i % 4), "U", day0 + 100 + i, "m" + std::to_string(i)));
  records.push_back(record("o1", "U", "s0", day0 + 500, "Re: m0"));
  records.push_back(record("o2", "U", "s1", day0 + 600, "Re: m1"));
  records.push_back(record("o3", "U", "s9", day0 + 700, "fresh"));
  const std::unordered_set<std::string> replies{"o1", "o2"};
  const auto loads = compute_daily_loads(records, replies);
  const auto it = std::find_if(loads.begin(), loads.end(), [](const DailyLoad& l) { return l.user_id == "U"; });
  REQUIRE(it != loads.end());
  CHECK(it->received == 10);
  CHECK(it->sent == 3);
  CHECK(it->replied == 2);
  // U has written to s0 and s1; their messages are i = 0,1,4,5,8,9.
  CHECK(it->received_from_contacts == 6);
  for (const auto& l : loads) {
    CHECK(l.replied <= l.sent);
    CHECK(l.received_from_contacts <= l.received);
  }
  CHECK(std::count_if(loads.begin(), loads.end(), [](const DailyLoad& l) { return l.user_id == "U"; }) == 1);
}

TEST_CASE("overload fractions") {
  std::vector<DailyLoad> loads;
  for (std::uint32_t r = 1; r <= 50; ++r) loads.push_back({"full", r, r, r, r, r});
  loads.push_back({"half", 1, 10, 10, 6, 5});
  loads.push_back({"flood", 1, 4, 4, 1500, 2});
  const auto report = overload_curves(loads, {}, ProfileMap{});
  CHECK(report.excluded_users == std::set<std::string>{"flood"});
  for (const auto& c : report.curves) {
    CHECK(c.name.find("flood") == std::string::npos);
    if (c.name.rfind("fraction_replied", 0) != 0) continue;
    for (const auto& b : c.bins) {
      CHECK(b.value >= 0);
      CHECK(b.value <= 1);
    }
  }
  const auto& frac = named(report.curves, "fraction_replied/all");
  std::size_t n = 0;
  for (const auto& b : frac.bins) n += b.count;
  CHECK(n == 51);
  // The "full" user replies to everything; only the "half" day (load 10) is below 1.
  for (const auto& b : frac.bins)
    if (b.count == 1) CHECK(b.value == 1.0);

  std::vector<DailyLoad> only_full(loads.begin(), loads.begin() + 50);
  const auto r2 = overload_curves(only_full, {}, ProfileMap{});
  for (const auto& b : named(r2.curves, "fraction_replied/all").bins) CHECK(b.value == 1.0);
}

TEST_CASE("curve bins equal a naive recomputation and merge in any order") {
  Rng rng(6);
  CurveBuilder all, left, right;
  std::map<std::int64_t, std::vector<double>> naive;
  for (int i = 0; i < 500; ++i) {
    const auto k = static_cast<std::int64_t>(rng.below(7));
    const double v = rng.lognormal(0, 1);
    all.add(k, v);
    (i % 3 ? left : right).add(k, v);
    naive[k].push_back(v);
  }
  CurveBuilder ab = left, ba = right;
  ab.merge(right);
  ba.merge(left);
  const auto c0 = all.build("c", CurveStatistic::Mean);
  const auto c1 = ab.build("c", CurveStatistic::Mean);
  const auto c2 = ba.build("c", CurveStatistic::Mean);
  REQUIRE(c0.bins.size() == naive.size());
  std::size_t i = 0;
  for (const auto& [k, v] : naive) {
    double sum = 0;
    for (double x : v) sum += x;
    const double mean = sum / v.size();
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    CHECK(std::abs(c0.bins[i].value - mean) <= 1e-9 * mean);
    CHECK(std::abs(c0.bins[i].ci_half - 1.96 * std::sqrt(ss / (v.size() - 1)) / std::sqrt(v.size())) <= 1e-9);
    CHECK(c0.bins[i].value == c1.bins[i].value);
    CHECK(c0.bins[i].value == c2.bins[i].value);
    CHECK(c0.bins[i].ci_half >= 0);
    ++i;
  }
  CHECK(c0.population() == 500);
}

TEST_CASE("segment assignment") {
  CHECK(segment_of(1, 10) == 0);
  CHECK(segment_of(10, 10) == 9);
  CHECK(segment_of(1, 25) == 0);
  CHECK(segment_of(25, 25) == 9);
  CHECK(segment_of(3, 25) == 0);
  CHECK(segment_of(4, 25) == 1);
}

TEST_CASE("synchronization at the personal median is zero") {
  std::vector<Thread> threads;
  for (int t = 0; t < 5; ++t) {
    std::vector<Reply> r;
    for (int i = 0; i < 12; ++i) r.push_back({i % 2 ? "b" : "a", i % 2 ? 40.0 : 10.0});
    threads.push_back(event_thread(r));
  }
  const auto s = synchronization_curve(thread_refs(threads), Measure::ReplyTime);
  CHECK(s.threads_used == 5);
  REQUIRE(s.curve.bins.size() == 10);
  for (const auto& b : s.curve.bins) CHECK(b.value == 0);
}

TEST_CASE("synchronization follows a hand-computed V and ignores endpoint labels") {
  // Normalized values alternate around 1 with a gap that shrinks then grows.
  const double gaps[] = {0.9, 0.7, 0.5, 0.3, 0.1, 0.1, 0.3, 0.5, 0.7, 0.9, 0.9};
  std::vector<Reply> r;
  for (int i = 0; i < 11; ++i) r.push_back({i % 2 ? "b" : "a", 100 * (1 + (i % 2 ? -0.5 : 0.5) * gaps[i])});
  // Pad the medians to exactly 100 for both users.
  std::vector<Thread> threads{event_thread(r), event_thread({{"a", 100}, {"b", 100}, {"a", 100}, {"b", 100}}, "x")};
  const auto s = synchronization_curve(thread_refs(threads), Measure::ReplyTime);
  CHECK(s.threads_used == 1);
  REQUIRE(s.curve.bins.size() == 10);

  std::map<std::string, std::vector<double>> per;
  for (const auto& x : r) per[x.replier].push_back(x.minutes);
  per["a"].insert(per["a"].end(), {100, 100});
  per["b"].insert(per["b"].end(), {100, 100});
  const double ma = naive_median(per["a"]), mb = naive_median(per["b"]);
  for (std::size_t j = 1; j < r.size(); ++j) {
    const double prev = r[j - 1].minutes / (r[j - 1].replier == "a" ? ma : mb);
    const double cur = r[j].minutes / (r[j].replier == "a" ? ma : mb);
    CHECK(s.curve.bins[j - 1].value == doctest::Approx(std::abs(cur - prev)).epsilon(1e-12));
  }
  CHECK(s.curve.bins[4].value < s.curve.bins[0].value);
  CHECK(s.curve.bins[4].value < s.curve.bins[9].value);

  // Swapping the two users changes nothing.
  auto swapped = r;
  for (auto& x : swapped) x.replier = x.replier == "a" ? "b" : "a";
  std::vector<Thread> threads2{event_thread(swapped), event_thread({{"b", 100}, {"a", 100}, {"b", 100}, {"a", 100}}, "x")};
  const auto s2 = synchronization_curve(thread_refs(threads2), Measure::ReplyTime);
  for (std::size_t k = 0; k < 10; ++k) CHECK(s2.curve.bins[k].value == s.curve.bins[k].value);
}

TEST_CASE("zero medians skip the thread") {
  std::vector<Reply> r;
  for (int i = 0; i < 10; ++i) r.push_back({i % 2 ? "b" : "a", 5, 0});
  std::vector<Thread> threads{event_thread(r)};
  const auto s = synchronization_curve(thread_refs(threads), Measure::ReplyLength);
  CHECK(s.threads_used == 0);
  CHECK(s.threads_skipped_zero_median == 1);
  CHECK(s.curve.bins.empty());
}

TEST_CASE("marker coordination") {
  auto thread_of = [](const std::string& a_body, const std::string& b_body) {
    std::vector<EmailRecord> records;
    for (int i = 0; i < 11; ++i)
      records.push_back(record(std::to_string(100 + i), i % 2 ? "B" : "A", i % 2 ? "A" : "B", 1000 + i * 60, i ? "Re: x" : "x",
                               i % 2 ? b_body : a_body));
    return build_dyads(records);
  };
  const auto same = thread_of("the cat and a dog", "the cat and a dog");
  for (const auto& c : marker_coordination(thread_refs(same))) {
    CHECK(c.threads_used == 1);
    for (const auto& b : c.curve.bins) CHECK(b.value == 0);
  }
  const auto opposite = thread_of("the the a an", "cat dog");
  const auto curves = marker_coordination(thread_refs(opposite));
  const auto& articles = curves[static_cast<std::size_t>(MarkerCategory::Articles)];
  REQUIRE(articles.curve.bins.size() == 10);
  for (const auto& b : articles.curve.bins) CHECK(b.value == 1.0);
}

TEST_CASE("content similarity of identical and disjoint bodies") {
  auto run = [](const std::string& a_body, const std::string& b_body) {
    std::vector<EmailRecord> records;
    for (int i = 0; i < 11; ++i)
      records.push_back(record(std::to_string(100 + i), i % 2 ? "B" : "A", i % 2 ? "A" : "B", 1000 + i * 60, i ? "Re: x" : "x",
                               i % 2 ? b_body : a_body));
    const auto dyads = build_dyads(records);
    std::vector<std::vector<std::string>> docs;
    for (const auto& r : records) docs.push_back(tokenize(r.body_stripped));
    const auto tf = tf_vectorize(docs);
    const MessageSimilarity sim = [&](const ThreadMessage& x, const ThreadMessage& y) -> std::optional<double> {
      const auto& u = tf.vectors[x.record_index];
      const auto& v = tf.vectors[y.record_index];
      if (u.empty() || v.empty()) return std::nullopt;
      return cosine(u, v);
    };
    return content_similarity_curve(thread_refs(dyads), sim);
  };
  for (const auto& b : run("lunch at noon", "lunch at noon").curve.bins) CHECK(b.value == doctest::Approx(1.0));
  for (const auto& b : run("lunch at noon", "budget review friday").curve.bins) CHECK(b.value == 0.0);
  CHECK(run("lunch", "").curve.bins.empty());
}

TEST_CASE("analytics on generated data keep their invariants") {
  const auto dyads = generated_dyads(12, 40);
  const auto refs = thread_refs(dyads);
  std::size_t events = 0;
  for (const auto* t : refs) events += t->reply_events.size();
  const auto s = step_stats(refs);
  CHECK(s.time_by_thread_length.population() == events);
  for (const auto& c : circadian_stats(refs)) CHECK(c.population() == events);
  for (auto by : {GroupBy::AgeGroup, GroupBy::Gender, GroupBy::Device, GroupBy::HasAttachment}) {
    const auto g = group_stats(refs, ProfileMap{}, by);
    std::size_t n = 0;
    for (const auto& x : g.groups) n += x.events;
    CHECK(n == events);
  }
}

#include "mailconv/generator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "mailconv/error.hpp"
#include "mailconv/random.hpp"
#include "mailconv/stats.hpp"

namespace mailconv {

void GeneratorParams::validate() const {
  if (n_dyads == 0) throw DomainError("n_dyads must be >= 1");
  if (min_threads_per_dyad == 0 || min_threads_per_dyad > max_threads_per_dyad)
    throw DomainError("thread count range is empty");
  if (mean_thread_length < 2) throw DomainError("mean thread length must be >= 2");
  if (max_messages_per_dyad < 2) throw DomainError("max messages per dyad must be >= 2");
  for (double p : {followup_probability, quote_probability, attachment_probability, mobile_user_fraction,
                   profile_fraction, label_noise, boundary_rate})
    if (!(p >= 0 && p <= 1)) throw DomainError("probabilities must lie in [0, 1]");
  if (followup_probability >= 1) throw DomainError("follow-up probability must be < 1");
  if (!(reply_time_median_minutes > 0) || !(reply_length_median_words > 0)) throw DomainError("medians must be positive");
  if (reply_time_log_sd < 0 || reply_length_log_sd < 0) throw DomainError("log-normal spreads must be >= 0");
  if (background_messages_per_dyad < 0 || !(span_days > 0) || !(mean_gap_hours > 0))
    throw DomainError("negative volume or empty time span");
}

namespace {

constexpr std::int64_t kImmediateMax = 15 * 60;
constexpr std::int64_t kFastMax = 164 * 60;
constexpr std::int64_t kSlowMax = 50 * 3600;

constexpr std::array<std::string_view, 24> kFunctionWords = {
    "the", "a",    "an",  "and", "but",  "or",   "so",   "if",   "i",    "you",  "we",   "it",
    "to",  "of",   "in",  "for", "with", "on",   "at",   "is",   "are",  "will", "can",  "some"};

constexpr std::array<std::string_view, 16> kSyllables = {"ba", "ko", "ri", "mu", "te", "lo", "na", "vi",
                                                        "su", "de", "ga", "pe", "zo", "fi", "ha", "ju"};

constexpr std::array<std::string_view, 12> kTopics = {"Budget", "Meeting", "Plans",   "Draft",  "Trip",    "Schedule",
                                                     "Invoice", "Notes",  "Project", "Dinner", "Proposal", "Update"};

constexpr std::array<std::int32_t, 8> kTimezones = {-480, -420, -300, -240, 0, 60, 120, 330};

std::string content_word(Rng& rng) {
  std::string w;
  const auto syllables = 2 + rng.below(2);
  for (std::uint64_t i = 0; i < syllables; ++i) w += kSyllables[rng.below(kSyllables.size())];
  return w;
}

std::string body_text(Rng& rng, std::uint32_t words) {
  std::string s;
  for (std::uint32_t i = 0; i < words; ++i) {
    if (i > 0) s += (i % 12 == 0) ? ".\n" : " ";
    if (rng.bernoulli(0.35))
      s += kFunctionWords[rng.below(kFunctionWords.size())];
    else
      s += content_word(rng);
  }
  if (words > 0) s += '.';
  return s;
}

struct User {
  std::string id;
  std::int32_t tz = 0;
  std::optional<Device> mobile;
};

struct Message {
  std::string id;
  const User* sender;
  const User* recipient;
  std::int64_t ts;
  std::string subject;
  std::uint32_t words;
  std::string text;
  bool is_reply;
};

std::int64_t log_uniform_seconds(Rng& rng, std::int64_t lo, std::int64_t hi) {
  const double x = std::exp(rng.uniform(std::log(static_cast<double>(lo)), std::log(static_cast<double>(hi))));
  return std::clamp<std::int64_t>(std::llround(x), lo, hi);
}

std::uint8_t class_of_seconds(std::int64_t s) { return s <= kImmediateMax ? 0 : (s <= kFastMax ? 1 : 2); }

std::uint8_t planted_class(double median_minutes) {
  if (median_minutes <= 40) return 2;
  if (median_minutes <= 400) return 0;
  return 1;
}

std::string reply_subject(Rng& rng, const std::string& root) {
  switch (rng.below(4)) {
    case 0: return "RE: " + root;
    case 1: return "Re[2]: " + root;
    case 2: return "re: Re: " + root;
    default: return "Re: " + root;
  }
}

class DyadWriter {
 public:
  DyadWriter(const GeneratorParams& p, std::size_t index, const User& a, const User& b)
      : p_(p), index_(index), a_(a), b_(b), rng_(derive_seed(p.seed, fmt::format("generator/dyad/{}", index))) {}

  void run(std::vector<Message>& out, std::vector<TrueThread>& truth) {
    std::int64_t t = p_.start_timestamp + static_cast<std::int64_t>(rng_.uniform(0, p_.span_days * 0.5 * 86400));
    const auto n_threads = p_.min_threads_per_dyad + rng_.below(p_.max_threads_per_dyad - p_.min_threads_per_dyad + 1);
    std::size_t budget = p_.max_messages_per_dyad;
    for (std::size_t k = 0; k < n_threads && budget >= 2; ++k) {
      auto length = 2 + rng_.geometric(1.0 / (p_.mean_thread_length - 1));
      length = std::min<std::uint64_t>(length, budget);
      budget -= length;
      t = thread(k, length, t, out, truth);
      t += 1 + static_cast<std::int64_t>(-std::log(1 - rng_.uniform()) * p_.mean_gap_hours * 3600);
    }
  }

 private:
  std::int64_t reply_seconds(const User& replier, std::int64_t min_seconds, TrueEvent& e) {
    std::int64_t s;
    auto& history = history_[replier.id];
    if (p_.boundary_replies && index_ == 0 && forced_ < 2) {
      s = forced_++ == 0 ? kImmediateMax : kFastMax;
    } else if (p_.planted_signal) {
      std::uint8_t c;
      if (history.empty()) {
        c = static_cast<std::uint8_t>(rng_.below(3));
      } else {
        e.history_median_minutes = stats::median(history);
        e.rule_applied = true;
        c = planted_class(e.history_median_minutes);
        if (rng_.bernoulli(p_.label_noise)) c = static_cast<std::uint8_t>((c + 1 + rng_.below(2)) % 3);
      }
      if (p_.boundary_replies && c < 2 && rng_.bernoulli(p_.boundary_rate))
        s = c == 0 ? kImmediateMax : kFastMax;
      else if (c == 0)
        s = log_uniform_seconds(rng_, 60, kImmediateMax);
      else if (c == 1)
        s = log_uniform_seconds(rng_, kImmediateMax + 1, kFastMax);
      else
        s = log_uniform_seconds(rng_, kFastMax + 1, kSlowMax);
    } else if (p_.boundary_replies && rng_.bernoulli(p_.boundary_rate)) {
      s = rng_.bernoulli(0.5) ? kImmediateMax : kFastMax;
    } else {
      const double minutes = rng_.lognormal(std::log(p_.reply_time_median_minutes), p_.reply_time_log_sd);
      s = std::clamp<std::int64_t>(std::llround(minutes * 60), 1, 60 * 86400);
    }
    // Room for the follow-ups of the answered run.
    s = std::max(s, min_seconds);
    e.time_class = class_of_seconds(s);
    history.push_back(static_cast<double>(s) / 60.0);
    return s;
  }

  std::uint32_t length_words() {
    const double w = rng_.lognormal(std::log(p_.reply_length_median_words), p_.reply_length_log_sd);
    return static_cast<std::uint32_t>(std::clamp<double>(std::round(w), 1, 2000));
  }

  std::int64_t thread(std::size_t k, std::uint64_t length, std::int64_t t0, std::vector<Message>& out,
                      std::vector<TrueThread>& truth) {
    // Sender runs.
    std::vector<std::pair<const User*, std::size_t>> runs;
    runs.push_back({rng_.bernoulli(0.5) ? &a_ : &b_, 1});
    for (std::uint64_t i = 1; i < length; ++i) {
      // The root is always answered; later messages may be follow-ups.
      if (i > 1 && rng_.bernoulli(p_.followup_probability))
        ++runs.back().second;
      else
        runs.push_back({runs.back().first == &a_ ? &b_ : &a_, 1});
    }

    TrueThread tt;
    tt.user_a = std::min(a_.id, b_.id);
    tt.user_b = std::max(a_.id, b_.id);
    tt.subject_root = fmt::format("{} {} {}", kTopics[rng_.below(kTopics.size())], content_word(rng_), k + 1);

    std::size_t seq = 0;
    auto make = [&](const User* from, std::int64_t ts) {
      Message m;
      m.id = fmt::format("d{:06}.t{:03}.m{:03}", index_, k, seq++);
      m.sender = from;
      m.recipient = from == &a_ ? &b_ : &a_;
      m.ts = ts;
      m.is_reply = seq > 1;
      m.subject = m.is_reply ? reply_subject(rng_, tt.subject_root) : tt.subject_root;
      m.words = length_words();
      m.text = body_text(rng_, m.words);
      tt.message_ids.push_back(m.id);
      out.push_back(std::move(m));
      return out.size() - 1;
    };

    std::int64_t run_start = t0;
    std::size_t first_of_run = make(runs[0].first, t0);
    std::int64_t last_ts = t0;
    for (std::size_t r = 0; r < runs.size(); ++r) {
      const auto followups = runs[r].second - 1;
      const bool last_run = r + 1 == runs.size();
      TrueEvent e;
      std::int64_t next_start = 0;
      if (!last_run) next_start = run_start + reply_seconds(*runs[r + 1].first, static_cast<std::int64_t>(followups) + 1, e);

      // Follow-ups: strictly inside the gap before the reply, or trailing.
      std::vector<std::int64_t> offsets;
      if (last_run) {
        std::int64_t at = run_start;
        for (std::size_t f = 0; f < followups; ++f) {
          at += 1 + std::llround(rng_.lognormal(std::log(300.0), 1.0));
          offsets.push_back(at);
        }
      } else {
        std::set<std::int64_t> chosen;
        const auto gap = next_start - run_start;
        while (chosen.size() < followups) chosen.insert(run_start + 1 + static_cast<std::int64_t>(rng_.below(gap - 1)));
        offsets.assign(chosen.begin(), chosen.end());
      }
      std::size_t last_of_run = first_of_run;
      for (auto ts : offsets) last_of_run = make(runs[r].first, ts);
      last_ts = offsets.empty() ? run_start : offsets.back();
      if (last_run) break;

      const auto reply = make(runs[r + 1].first, next_start);
      e.reply_message_id = out[reply].id;
      e.anchor_message_id = out[first_of_run].id;
      e.replied_to_message_id = out[last_of_run].id;
      e.replier = runs[r + 1].first->id;
      e.receiver = runs[r].first->id;
      e.reply_time_seconds = next_start - run_start;
      e.reply_length_words = out[reply].words;
      if (p_.quote_probability > 0 && rng_.bernoulli(p_.quote_probability)) {
        const auto& q = out[last_of_run];
        out[reply].text += fmt::format("\n\nOn {}, {} wrote:\n> ", q.ts, q.sender->id);
        for (char c : q.text.substr(0, 400)) {
          out[reply].text += c;
          if (c == '\n') out[reply].text += "> ";
        }
      }
      tt.events.push_back(std::move(e));
      run_start = next_start;
      first_of_run = reply;
      last_ts = next_start;
    }
    if (!tt.events.empty()) tt.events.back().is_last = true;
    truth.push_back(std::move(tt));
    return last_ts;
  }

  const GeneratorParams& p_;
  std::size_t index_;
  const User& a_;
  const User& b_;
  Rng rng_;
  std::map<std::string, std::vector<double>> history_;
  int forced_ = 0;
};

}  // namespace

GeneratedCorpus generate_corpus(const GeneratorParams& params, const IngestConfig& config) {
  params.validate();
  GeneratedCorpus corpus;

  // User pool: about four pairs per user.
  std::size_t n_users = std::max<std::size_t>(2, (params.n_dyads + 1) / 2 + 1);
  while (n_users * (n_users - 1) / 2 < params.n_dyads) ++n_users;
  std::vector<User> users(n_users);
  {
    Rng rng(derive_seed(params.seed, "generator/users"));
    for (std::size_t i = 0; i < n_users; ++i) {
      auto& u = users[i];
      u.id = fmt::format("u{:05}", i);
      u.tz = kTimezones[rng.below(kTimezones.size())];
      if (rng.bernoulli(params.mobile_user_fraction)) u.mobile = rng.bernoulli(0.7) ? Device::Phone : Device::Tablet;
      if (rng.bernoulli(params.profile_fraction)) {
        UserProfile p;
        p.user_id = u.id;
        p.age_years = 15 + static_cast<int>(rng.below(56));
        const double g = rng.uniform();
        p.gender = g < 0.48 ? Gender::F : (g < 0.96 ? Gender::M : Gender::Unknown);
        corpus.profiles.emplace(u.id, p);
      }
    }
  }

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  {
    Rng rng(derive_seed(params.seed, "generator/pairs"));
    const auto possible = n_users * (n_users - 1) / 2;
    if (possible <= 4 * params.n_dyads) {
      for (std::size_t i = 0; i < n_users; ++i)
        for (std::size_t j = i + 1; j < n_users; ++j) pairs.emplace_back(i, j);
      for (std::size_t i = 0; i < params.n_dyads; ++i) std::swap(pairs[i], pairs[i + rng.below(pairs.size() - i)]);
      pairs.resize(params.n_dyads);
    } else {
      std::set<std::pair<std::size_t, std::size_t>> seen;
      while (pairs.size() < params.n_dyads) {
        auto i = rng.below(n_users), j = rng.below(n_users);
        if (i == j) continue;
        if (i > j) std::swap(i, j);
        if (seen.insert({i, j}).second) pairs.emplace_back(i, j);
      }
    }
  }

  std::vector<Message> messages;
  for (std::size_t d = 0; d < params.n_dyads; ++d) {
    DyadWriter w(params, d, users[pairs[d].first], users[pairs[d].second]);
    w.run(messages, corpus.threads);
  }

  // One-way bulk mail.
  std::vector<User> bulk(std::max<std::size_t>(1, params.n_dyads / 50));
  for (std::size_t i = 0; i < bulk.size(); ++i) bulk[i].id = fmt::format("bulk{:03}", i);
  {
    Rng rng(derive_seed(params.seed, "generator/background"));
    const auto n = static_cast<std::size_t>(std::llround(params.background_messages_per_dyad * params.n_dyads));
    for (std::size_t i = 0; i < n; ++i) {
      Message m;
      m.id = fmt::format("b{:08}", i);
      m.sender = &bulk[rng.below(bulk.size())];
      m.recipient = &users[rng.below(users.size())];
      m.ts = params.start_timestamp + static_cast<std::int64_t>(rng.uniform(0, params.span_days * 86400));
      m.subject = fmt::format("Newsletter {}", i + 1);
      m.words = 40 + static_cast<std::uint32_t>(rng.below(80));
      m.text = body_text(rng, m.words);
      m.is_reply = false;
      TrueThread t;
      t.user_a = std::min(m.sender->id, m.recipient->id);
      t.user_b = std::max(m.sender->id, m.recipient->id);
      t.subject_root = m.subject;
      t.message_ids.push_back(m.id);
      corpus.threads.push_back(std::move(t));
      messages.push_back(std::move(m));
    }
  }

  // Per-message device, signature and attachments.
  Rng rng(derive_seed(params.seed, "generator/messages"));
  corpus.records.reserve(messages.size());
  for (auto& m : messages) {
    EmailRecord r;
    r.message_id = m.id;
    r.sender_id = m.sender->id;
    r.recipient_id = m.recipient->id;
    r.timestamp_utc = m.ts;
    r.tz_offset_minutes = m.sender->tz;
    r.subject_raw = m.subject;
    std::string body = std::move(m.text);
    if (m.sender->mobile && rng.bernoulli(0.5)) {
      const auto sig = *m.sender->mobile == Device::Phone ? "Sent from my iPhone" : "Sent from my iPad";
      const auto quote = body.find("\n\nOn ");
      body.insert(quote == std::string::npos ? body.size() : quote, std::string("\n\n") + sig);
    }
    r.body_raw = std::move(body);
    r.n_attachments = rng.bernoulli(params.attachment_probability) ? 1 + static_cast<std::uint32_t>(rng.below(3)) : 0;
    derive_fields(r, config);
    corpus.records.push_back(std::move(r));
  }
  std::sort(corpus.records.begin(), corpus.records.end(), [](const EmailRecord& a, const EmailRecord& b) {
    if (a.timestamp_utc != b.timestamp_utc) return a.timestamp_utc < b.timestamp_utc;
    return a.message_id < b.message_id;
  });
  return corpus;
}

// ---------------------------------------------------------------------------

void write_truth(std::ostream& out, const std::vector<TrueThread>& threads) {
  for (const auto& t : threads) {
    nlohmann::json events = nlohmann::json::array();
    for (const auto& e : t.events)
      events.push_back({{"reply_message_id", e.reply_message_id},
                        {"anchor_message_id", e.anchor_message_id},
                        {"replied_to_message_id", e.replied_to_message_id},
                        {"replier", e.replier},
                        {"receiver", e.receiver},
                        {"reply_time_seconds", e.reply_time_seconds},
                        {"reply_length_words", e.reply_length_words},
                        {"time_class", e.time_class},
                        {"rule_applied", e.rule_applied},
                        {"history_median_minutes", e.history_median_minutes},
                        {"is_last", e.is_last}});
    nlohmann::json j = {{"user_a", t.user_a},
                        {"user_b", t.user_b},
                        {"subject_root", t.subject_root},
                        {"messages", t.message_ids},
                        {"events", std::move(events)}};
    out << j.dump() << '\n';
  }
}

std::vector<TrueThread> read_truth(std::istream& in) {
  std::vector<TrueThread> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      TrueThread t;
      j.at("user_a").get_to(t.user_a);
      j.at("user_b").get_to(t.user_b);
      j.at("subject_root").get_to(t.subject_root);
      j.at("messages").get_to(t.message_ids);
      for (const auto& ej : j.at("events")) {
        TrueEvent e;
        ej.at("reply_message_id").get_to(e.reply_message_id);
        ej.at("anchor_message_id").get_to(e.anchor_message_id);
        ej.at("replied_to_message_id").get_to(e.replied_to_message_id);
        ej.at("replier").get_to(e.replier);
        ej.at("receiver").get_to(e.receiver);
        ej.at("reply_time_seconds").get_to(e.reply_time_seconds);
        ej.at("reply_length_words").get_to(e.reply_length_words);
        ej.at("time_class").get_to(e.time_class);
        ej.at("rule_applied").get_to(e.rule_applied);
        ej.at("history_median_minutes").get_to(e.history_median_minutes);
        ej.at("is_last").get_to(e.is_last);
        t.events.push_back(std::move(e));
      }
      out.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw RecordError(n, e.what());
    }
  }
  return out;
}

void write_generated(const std::filesystem::path& dir, const GeneratedCorpus& corpus) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw InputError("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("records.jsonl");
    for (const auto& r : corpus.records) f << to_record_line(r) << '\n';
  }
  {
    auto f = open("profiles.tsv");
    write_profiles(f, corpus.profiles);
  }
  {
    auto f = open("truth.jsonl");
    write_truth(f, corpus.threads);
  }
}

}  // namespace mailconv

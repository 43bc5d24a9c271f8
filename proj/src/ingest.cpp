#include "mailconv/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <sstream>

#include <boost/regex.hpp>
#include <json.hpp>

#include "embedded_defaults.hpp"
#include "mailconv/error.hpp"

namespace mailconv {

namespace {

bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '\'' ||
         c >= 0x80;
}

char fold(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::string_view rtrim(std::string_view s) {
  const auto e = s.find_last_not_of(" \t\r\n\f\v");
  return e == std::string_view::npos ? std::string_view{} : s.substr(0, e + 1);
}

// Calls fn(line_number, content) for every non-blank, non-comment line.
template <typename Fn>
void for_each_config_line(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    auto view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    fn(n, view);
  }
}

}  // namespace

std::string_view to_string(Device d) {
  switch (d) {
    case Device::Phone: return "phone";
    case Device::Tablet: return "tablet";
    case Device::Desktop: return "desktop";
  }
  return "desktop";
}

std::optional<Device> parse_device(std::string_view s) {
  if (s == "phone") return Device::Phone;
  if (s == "tablet") return Device::Tablet;
  if (s == "desktop") return Device::Desktop;
  return std::nullopt;
}

std::string_view to_string(MarkerCategory c) {
  switch (c) {
    case MarkerCategory::Articles: return "articles";
    case MarkerCategory::AuxiliaryVerbs: return "auxiliary_verbs";
    case MarkerCategory::Conjunctions: return "conjunctions";
    case MarkerCategory::PersonalPronouns: return "personal_pronouns";
    case MarkerCategory::Prepositions: return "prepositions";
    case MarkerCategory::Quantifiers: return "quantifiers";
  }
  return "articles";
}

std::optional<MarkerCategory> parse_marker_category(std::string_view s) {
  for (auto c : kAllMarkerCategories)
    if (to_string(c) == s) return c;
  return std::nullopt;
}

// ---------------------------------------------------------------------------

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !is_word_byte(static_cast<unsigned char>(text[i]))) ++i;
    if (i == text.size()) break;
    std::string word;
    while (i < text.size() && is_word_byte(static_cast<unsigned char>(text[i]))) word.push_back(fold(text[i++]));
    out.push_back(std::move(word));
  }
  return out;
}

std::size_t count_words(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    const bool w = is_word_byte(static_cast<unsigned char>(c));
    if (w && !in_word) ++n;
    in_word = w;
  }
  return n;
}

// ---------------------------------------------------------------------------

MarkerLexicon MarkerLexicon::defaults() {
  std::istringstream in(detail::kDefaultMarkers);
  return parse(in, "<builtin markers>");
}

MarkerLexicon MarkerLexicon::parse(std::istream& in, std::string_view source) {
  MarkerLexicon lex;
  for_each_config_line(in, [&](std::size_t n, std::string_view line) {
    const auto sp = line.find_first_of(" \t");
    if (sp == std::string_view::npos)
      throw InputError(std::string(source) + ":" + std::to_string(n) + ": expected '<category> <word>'");
    const auto cat = parse_marker_category(line.substr(0, sp));
    if (!cat)
      throw InputError(std::string(source) + ":" + std::to_string(n) + ": unknown marker category '" +
                       std::string(line.substr(0, sp)) + "'");
    try {
      lex.add(*cat, trim(line.substr(sp)));
    } catch (const InputError& e) {
      throw InputError(std::string(source) + ":" + std::to_string(n) + ": " + e.what());
    }
  });
  return lex;
}

MarkerLexicon MarkerLexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open lexicon file " + path.string());
  return parse(in, path.string());
}

void MarkerLexicon::add(MarkerCategory category, std::string_view word) {
  std::string w;
  for (char c : word) w.push_back(fold(c));
  if (w.empty() || tokenize(w) != std::vector<std::string>{w})
    throw InputError("marker '" + std::string(word) + "' is not a single word");
  auto [it, inserted] = index_.emplace(w, category);
  if (!inserted)
    throw InputError("duplicate marker word '" + w + "' (already in " + std::string(to_string(it->second)) + ")");
  words_[static_cast<std::size_t>(category)].insert(std::move(w));
}

std::optional<MarkerCategory> MarkerLexicon::category_of(std::string_view token) const {
  // Heterogeneous lookup on unordered_map needs C++20 library support GCC 11
  // lacks, so build the key.
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::set<std::string>& MarkerLexicon::words(MarkerCategory category) const {
  return words_[static_cast<std::size_t>(category)];
}

MarkerCounts count_markers(std::string_view body, const MarkerLexicon& lexicon) {
  MarkerCounts counts{};
  for (const auto& tok : tokenize(body))
    if (auto c = lexicon.category_of(tok)) ++counts[static_cast<std::size_t>(*c)];
  return counts;
}

// ---------------------------------------------------------------------------

struct TemplateSet::Impl {
  struct Entry {
    TemplateKind kind;
    std::string source;
    boost::regex re;
  };
  std::vector<Entry> entries;
};

TemplateSet::TemplateSet() : impl_(std::make_unique<Impl>()) {}
TemplateSet::~TemplateSet() = default;
TemplateSet::TemplateSet(const TemplateSet& o) : impl_(std::make_unique<Impl>(*o.impl_)) {}
TemplateSet& TemplateSet::operator=(const TemplateSet& o) {
  if (this != &o) impl_ = std::make_unique<Impl>(*o.impl_);
  return *this;
}
TemplateSet::TemplateSet(TemplateSet&&) noexcept = default;
TemplateSet& TemplateSet::operator=(TemplateSet&&) noexcept = default;

TemplateSet TemplateSet::defaults() {
  std::istringstream in(detail::kDefaultTemplates);
  return parse(in, "<builtin templates>");
}

TemplateSet TemplateSet::parse(std::istream& in, std::string_view source) {
  TemplateSet set;
  for_each_config_line(in, [&](std::size_t n, std::string_view line) {
    const auto sp = line.find_first_of(" \t");
    const auto where = std::string(source) + ":" + std::to_string(n) + ": ";
    if (sp == std::string_view::npos) throw InputError(where + "expected '<kind> <pattern>'");
    const auto kind = line.substr(0, sp);
    TemplateKind k;
    if (kind == "quote")
      k = TemplateKind::QuoteHeader;
    else if (kind == "phone")
      k = TemplateKind::PhoneSignature;
    else if (kind == "tablet")
      k = TemplateKind::TabletSignature;
    else
      throw InputError(where + "unknown template kind '" + std::string(kind) + "'");
    try {
      set.add(k, trim(line.substr(sp)));
    } catch (const InputError& e) {
      throw InputError(where + e.what());
    }
  });
  return set;
}

TemplateSet TemplateSet::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open template file " + path.string());
  return parse(in, path.string());
}

void TemplateSet::add(TemplateKind kind, std::string_view pattern) {
  try {
    impl_->entries.push_back(
        {kind, std::string(pattern), boost::regex(pattern.begin(), pattern.end(), boost::regex::perl | boost::regex::icase)});
  } catch (const boost::regex_error& e) {
    throw InputError("bad pattern '" + std::string(pattern) + "': " + e.what());
  }
}

std::size_t TemplateSet::size() const noexcept { return impl_->entries.size(); }

std::optional<TemplateSet::Match> TemplateSet::earliest(std::string_view text, bool quotes, bool signatures) const {
  std::optional<Match> best;
  for (const auto& e : impl_->entries) {
    const bool is_quote = e.kind == TemplateKind::QuoteHeader;
    if ((is_quote && !quotes) || (!is_quote && !signatures)) continue;
    boost::cmatch m;
    const char* b = text.data();
    const char* end = b + text.size();
    if (boost::regex_search(b, end, m, e.re)) {
      const auto off = static_cast<std::size_t>(m[0].first - b);
      if (!best || off < best->offset) best = Match{off, e.kind};
    }
  }
  return best;
}

std::string strip_quotes(std::string_view body, const TemplateSet& templates) {
  auto prefix = body;
  if (auto m = templates.earliest(body, true, true)) prefix = body.substr(0, m->offset);
  return std::string(rtrim(prefix));
}

std::string_view cut_quoted_text(std::string_view body, const TemplateSet& templates) {
  if (auto m = templates.earliest(body, true, false)) return body.substr(0, m->offset);
  return body;
}

Device detect_device(std::string_view body, const TemplateSet& templates) {
  auto m = templates.earliest(body, false, true);
  if (!m) return Device::Desktop;
  return m->kind == TemplateKind::PhoneSignature ? Device::Phone : Device::Tablet;
}

NormalizedSubject normalize_subject(std::string_view subject) {
  NormalizedSubject out;
  auto s = trim(subject);
  for (;;) {
    if (s.size() < 3 || fold(s[0]) != 'r' || fold(s[1]) != 'e') break;
    std::size_t i = 2;
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    if (i < s.size() && s[i] == '[') {
      std::size_t j = i + 1;
      while (j < s.size() && s[j] >= '0' && s[j] <= '9') ++j;
      if (j == i + 1 || j >= s.size() || s[j] != ']') break;
      i = j + 1;
      while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    }
    if (i >= s.size() || s[i] != ':') break;
    s = trim(s.substr(i + 1));
    out.is_reply = true;
  }
  out.root = std::string(s);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

const json& require(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) throw RecordError(line, std::string("missing field '") + key + "'");
  return *it;
}

std::string require_string(const json& obj, const char* key, std::size_t line) {
  const auto& v = require(obj, key, line);
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  throw RecordError(line, std::string("field '") + key + "' must be a string");
}

std::int64_t integer_field(const json& v, const char* key, std::size_t line) {
  if (v.is_number_integer()) return v.get<std::int64_t>();
  throw RecordError(line, std::string("field '") + key + "' must be an integer");
}

}  // namespace

void derive_fields(EmailRecord& r, const IngestConfig& config) {
  // Order matters: quote stripping, device detection, subject, tokens.
  r.body_stripped = strip_quotes(r.body_raw, config.templates);
  r.device = detect_device(cut_quoted_text(r.body_raw, config.templates), config.templates);
  auto subj = normalize_subject(r.subject_raw);
  r.subject_root = std::move(subj.root);
  r.is_reply_subject = subj.is_reply;
  r.word_count = static_cast<std::uint32_t>(count_words(r.body_stripped));
  r.marker_counts = count_markers(r.body_stripped, config.lexicon);
}

EmailRecord parse_record(std::string_view line, std::size_t line_number, const IngestConfig& config) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw RecordError(line_number, std::string("malformed record: ") + e.what());
  }
  if (!obj.is_object()) throw RecordError(line_number, "record is not a JSON object");

  EmailRecord r;
  r.message_id = require_string(obj, "message_id", line_number);
  r.sender_id = require_string(obj, "sender_id", line_number);
  r.recipient_id = require_string(obj, "recipient_id", line_number);
  r.timestamp_utc = integer_field(require(obj, "timestamp_utc", line_number), "timestamp_utc", line_number);
  r.subject_raw = require_string(obj, "subject", line_number);
  r.body_raw = require_string(obj, "body", line_number);
  if (auto it = obj.find("tz_offset_minutes"); it != obj.end() && !it->is_null()) {
    const auto tz = integer_field(*it, "tz_offset_minutes", line_number);
    if (tz < -24 * 60 || tz > 24 * 60) throw RecordError(line_number, "tz_offset_minutes out of range");
    r.tz_offset_minutes = static_cast<std::int32_t>(tz);
  }
  if (auto it = obj.find("n_attachments"); it != obj.end() && !it->is_null()) {
    const auto n = integer_field(*it, "n_attachments", line_number);
    if (n < 0) throw RecordError(line_number, "n_attachments is negative");
    r.n_attachments = static_cast<std::uint32_t>(n);
  }
  if (r.message_id.empty()) throw RecordError(line_number, "empty message_id");
  if (r.sender_id.empty() || r.recipient_id.empty()) throw RecordError(line_number, "empty user id");

  derive_fields(r, config);
  return r;
}

IngestResult read_records(std::istream& in, const IngestConfig& config) {
  IngestResult result;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      result.records.push_back(parse_record(line, n, config));
    } catch (const RecordError& e) {
      result.rejected.push_back({e.line(), e.what()});
    }
  }
  return result;
}

IngestResult read_records(const std::filesystem::path& path, const IngestConfig& config) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open records file " + path.string());
  return read_records(in, config);
}

namespace {

json raw_json(const EmailRecord& r) {
  return json{{"message_id", r.message_id},       {"sender_id", r.sender_id},
              {"recipient_id", r.recipient_id},   {"timestamp_utc", r.timestamp_utc},
              {"tz_offset_minutes", r.tz_offset_minutes}, {"subject", r.subject_raw},
              {"body", r.body_raw},               {"n_attachments", r.n_attachments}};
}

std::string dump(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

}  // namespace

std::string to_record_line(const EmailRecord& record) { return dump(raw_json(record)); }

std::string to_parsed_line(const EmailRecord& r) {
  auto j = raw_json(r);
  j["subject_root"] = r.subject_root;
  j["is_reply_subject"] = r.is_reply_subject;
  j["body_stripped"] = r.body_stripped;
  j["word_count"] = r.word_count;
  j["device"] = std::string(to_string(r.device));
  json markers = json::object();
  for (auto c : kAllMarkerCategories) markers[std::string(to_string(c))] = r.marker_counts[static_cast<std::size_t>(c)];
  j["marker_counts"] = std::move(markers);
  return dump(j);
}

}  // namespace mailconv

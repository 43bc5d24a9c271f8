#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mailconv {

enum class Device : std::uint8_t { Phone, Tablet, Desktop };

std::string_view to_string(Device d);
std::optional<Device> parse_device(std::string_view s);

enum class MarkerCategory : std::uint8_t {
  Articles,
  AuxiliaryVerbs,
  Conjunctions,
  PersonalPronouns,
  Prepositions,
  Quantifiers,
};

inline constexpr std::size_t kMarkerCategories = 6;
inline constexpr std::array<MarkerCategory, kMarkerCategories> kAllMarkerCategories = {
    MarkerCategory::Articles,         MarkerCategory::AuxiliaryVerbs,
    MarkerCategory::Conjunctions,     MarkerCategory::PersonalPronouns,
    MarkerCategory::Prepositions,     MarkerCategory::Quantifiers,
};

std::string_view to_string(MarkerCategory c);
std::optional<MarkerCategory> parse_marker_category(std::string_view s);

using MarkerCounts = std::array<std::uint32_t, kMarkerCategories>;

struct EmailRecord {
  std::string message_id;
  std::string sender_id;
  std::string recipient_id;
  std::int64_t timestamp_utc = 0;
  std::int32_t tz_offset_minutes = 0;
  std::string subject_raw;
  std::string subject_root;
  bool is_reply_subject = false;
  std::string body_raw;
  std::string body_stripped;
  std::uint32_t word_count = 0;
  std::uint32_t n_attachments = 0;
  Device device = Device::Desktop;
  MarkerCounts marker_counts{};
};

// ---------------------------------------------------------------------------
// Tokenizer: a word is a maximal run of ASCII letters, digits, apostrophes or
// non-ASCII bytes (so UTF-8 sequences stay inside words). ASCII is lowercased.

std::vector<std::string> tokenize(std::string_view text);
std::size_t count_words(std::string_view text);

// ---------------------------------------------------------------------------

/// Function-word lists for the six style-marker categories. A word may belong
/// to at most one category.
class MarkerLexicon {
 public:
  MarkerLexicon() = default;

  /// Built-in lists, identical to data/markers.txt.
  static MarkerLexicon defaults();

  /// Reads "<category> <word>" lines; blank lines and '#' comments skipped.
  /// Throws InputError on unknown categories or duplicate words.
  static MarkerLexicon parse(std::istream& in, std::string_view source = "<stream>");
  static MarkerLexicon load(const std::filesystem::path& path);

  void add(MarkerCategory category, std::string_view word);

  std::optional<MarkerCategory> category_of(std::string_view token) const;
  const std::set<std::string>& words(MarkerCategory category) const;
  std::size_t size() const noexcept { return index_.size(); }

 private:
  std::unordered_map<std::string, MarkerCategory> index_;
  std::array<std::set<std::string>, kMarkerCategories> words_;
};

MarkerCounts count_markers(std::string_view body, const MarkerLexicon& lexicon);

// ---------------------------------------------------------------------------

enum class TemplateKind : std::uint8_t { QuoteHeader, PhoneSignature, TabletSignature };

/// Case-insensitive regular patterns that mark where quoted text or a device
/// signature begins.
class TemplateSet {
 public:
  struct Match {
    std::size_t offset;
    TemplateKind kind;
  };

  TemplateSet();
  ~TemplateSet();
  TemplateSet(const TemplateSet&);
  TemplateSet& operator=(const TemplateSet&);
  TemplateSet(TemplateSet&&) noexcept;
  TemplateSet& operator=(TemplateSet&&) noexcept;

  /// Built-in patterns, identical to data/templates.txt.
  static TemplateSet defaults();

  /// Reads "<quote|phone|tablet> <pattern>" lines; '#' comments skipped.
  static TemplateSet parse(std::istream& in, std::string_view source = "<stream>");
  static TemplateSet load(const std::filesystem::path& path);

  /// Throws InputError if the pattern does not compile.
  void add(TemplateKind kind, std::string_view pattern);

  /// Earliest match among templates of the requested kinds. Ties on offset go
  /// to the template listed first.
  std::optional<Match> earliest(std::string_view text, bool quotes, bool signatures) const;

  std::size_t size() const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Everything before the first quote header or device signature, with
/// trailing whitespace removed.
std::string strip_quotes(std::string_view body, const TemplateSet& templates);

/// Everything before the first quote header only. Device detection runs on
/// this so that signatures inside quoted text are ignored.
std::string_view cut_quoted_text(std::string_view body, const TemplateSet& templates);

/// Phone or Tablet from the earliest matching signature, otherwise Desktop.
Device detect_device(std::string_view body, const TemplateSet& templates);

struct NormalizedSubject {
  std::string root;
  bool is_reply = false;
};

/// Repeatedly strips leading "Re:" tokens (any case, optional "[n]" counter).
NormalizedSubject normalize_subject(std::string_view subject);

// ---------------------------------------------------------------------------

struct IngestConfig {
  TemplateSet templates = TemplateSet::defaults();
  MarkerLexicon lexicon = MarkerLexicon::defaults();
};

/// Parses one JSON record line. Throws RecordError with the line number when
/// the line is malformed or a mandatory field is missing.
EmailRecord parse_record(std::string_view line, std::size_t line_number, const IngestConfig& config);

/// Fills the derived fields of a record whose raw fields are already set.
void derive_fields(EmailRecord& record, const IngestConfig& config);

struct Rejection {
  std::size_t line;
  std::string message;
};

struct IngestResult {
  std::vector<EmailRecord> records;
  std::vector<Rejection> rejected;
};

/// Reads newline-delimited records. Bad lines are collected in `rejected`;
/// blank lines are skipped.
IngestResult read_records(std::istream& in, const IngestConfig& config);
IngestResult read_records(const std::filesystem::path& path, const IngestConfig& config);

/// Raw-field JSON line (the input format).
std::string to_record_line(const EmailRecord& record);

/// Full JSON line including derived fields (output of the ingest command).
std::string to_parsed_line(const EmailRecord& record);

}  // namespace mailconv

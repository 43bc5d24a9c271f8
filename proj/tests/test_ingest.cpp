#include <doctest.h>

#include <algorithm>
#include <sstream>

#include <json.hpp>

#include "mailconv/error.hpp"
#include "mailconv/generator.hpp"
#include "mailconv/ingest.hpp"
#include "mailconv/random.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace mailconv;

namespace {

const TemplateSet& templates() { return fixture::config().templates; }

std::string line_with(const std::string& body) {
  const nlohmann::json j{{"message_id", "m1"},    {"sender_id", "a"},         {"recipient_id", "b"},
                         {"timestamp_utc", 100},  {"tz_offset_minutes", 60},  {"subject", "Re: Lunch"},
                         {"body", body},          {"n_attachments", 2}};
  return j.dump();
}

}  // namespace

TEST_CASE("phone signature is stripped and classified") {
  const auto r = parse_record(line_with("ok\nSent from my iPhone"), 1, fixture::config());
  CHECK(r.device == Device::Phone);
  CHECK(r.body_stripped == "ok");
  CHECK(r.word_count == 1);
  CHECK(r.subject_root == "Lunch");
  CHECK(r.is_reply_subject);
  CHECK(r.n_attachments == 2);
  CHECK(r.tz_offset_minutes == 60);
}

TEST_CASE("empty body has no words and no markers") {
  const auto r = parse_record(line_with(""), 1, fixture::config());
  CHECK(r.word_count == 0);
  for (auto c : r.marker_counts) CHECK(c == 0);
  CHECK(r.device == Device::Desktop);
}

TEST_CASE("bad lines are rejected with their line number") {
  std::istringstream in(
      "{\"message_id\":\"m1\",\"sender_id\":\"a\",\"recipient_id\":\"b\",\"subject\":\"x\",\"body\":\"y\"}\n"
      "\n"
      "not json\n" +
      line_with("fine") + "\n" +
      "{\"message_id\":\"m3\",\"sender_id\":\"a\",\"recipient_id\":\"b\",\"timestamp_utc\":\"soon\","
      "\"subject\":\"x\",\"body\":\"y\"}\n");
  const auto result = read_records(in, fixture::config());
  REQUIRE(result.records.size() == 1);
  REQUIRE(result.rejected.size() == 3);
  CHECK(result.rejected[0].line == 1);
  CHECK(result.rejected[0].message.find("timestamp_utc") != std::string::npos);
  CHECK(result.rejected[1].line == 3);
  CHECK(result.rejected[2].line == 5);
  CHECK_THROWS_AS(parse_record("[1,2]", 7, fixture::config()), RecordError);
}

TEST_CASE("strip_quotes cuts at the earliest template") {
  CHECK(strip_quotes("see you\nOn Thursday May 1, 2014 a@yahoo.com wrote:\n> hi", templates()) == "see you");
  CHECK(strip_quotes("plain text with no markers", templates()) == "plain text with no markers");
  CHECK(strip_quotes("yes\nSent from my iPad\nOn Monday x@y.com wrote:", templates()) == "yes");
  CHECK(strip_quotes("-----Original Message-----\nold", templates()).empty());
}

TEST_CASE("device detection") {
  CHECK(detect_device("thanks\nSent from my iPhone", templates()) == Device::Phone);
  CHECK(detect_device("thanks", templates()) == Device::Desktop);
  CHECK(detect_device("x\nSent from my iPad\nSent from my iPhone", templates()) == Device::Tablet);
  CHECK(detect_device("x\nSent from my iPhone\nSent from my iPad", templates()) == Device::Phone);
}

TEST_CASE("signatures inside quoted text are not counted") {
  const auto r = fixture::record("m", "a", "b", 1, "s", "sure\n\nOn Monday bob wrote:\n> hi\n> Sent from my iPhone");
  CHECK(r.device == Device::Desktop);
  CHECK(r.body_stripped == "sure");
  const auto own = fixture::record("m", "a", "b", 1, "s", "sure\nSent from my iPad\n\nOn Monday bob wrote:\n> hi");
  CHECK(own.device == Device::Tablet);
}

TEST_CASE("normalize_subject") {
  auto check = [](std::string_view in, std::string_view root, bool reply) {
    const auto s = normalize_subject(in);
    CHECK(s.root == root);
    CHECK(s.is_reply == reply);
  };
  check("Re: Lunch", "Lunch", true);
  check("Lunch", "Lunch", false);
  check("Re: Re: Lunch", "Lunch", true);
  check("  RE:re[3]:  Lunch  ", "Lunch", true);
  check("Regarding lunch", "Regarding lunch", false);
  check("Re:", "", true);
  check("", "", false);
}

TEST_CASE("normalize_subject agrees with the reference and is idempotent") {
  const std::vector<std::string> pieces{"Re:", "RE:", "re:", "Re[2]:", "rE [10]:", "Re :", " ", "Lunch", "Report",
                                        "Re", "[x]", ":", "Fwd:", "re[]:"};
  Rng rng(5);
  for (int n = 0; n < 5000; ++n) {
    std::string s;
    const auto len = rng.below(6);
    for (std::uint64_t i = 0; i < len; ++i) s += pieces[rng.below(pieces.size())];
    const auto got = normalize_subject(s);
    const auto want = oracle::subject_root(s);
    CHECK(got.root == want.first);
    CHECK(got.is_reply == want.second);
    const auto again = normalize_subject(got.root);
    CHECK(again.root == got.root);
    CHECK_FALSE(again.is_reply);
  }
}

TEST_CASE("tokenizer") {
  CHECK(tokenize("Don't STOP, 2 go!") == std::vector<std::string>{"don't", "stop", "2", "go"});
  CHECK(tokenize("café au lait") == std::vector<std::string>{"café", "au", "lait"});
  CHECK(count_words("  a\tb\n\nc ") == 3);
  CHECK(count_words("") == 0);
}

TEST_CASE("marker counts") {
  MarkerLexicon lex;
  for (auto w : {"the", "a", "an"}) lex.add(MarkerCategory::Articles, w);
  const auto counts = count_markers("the cat sat on the mat", lex);
  CHECK(counts[static_cast<std::size_t>(MarkerCategory::Articles)] == 2);
  std::string body;
  for (int i = 0; i < 100; ++i) body += "The ";
  const auto all = count_markers(body, lex);
  CHECK(all[static_cast<std::size_t>(MarkerCategory::Articles)] == 100);
  CHECK(count_words(body) == 100);
}

TEST_CASE("lexicon files reject duplicates and unknown categories") {
  std::istringstream dup("articles the\nquantifiers The\n");
  CHECK_THROWS_AS(MarkerLexicon::parse(dup), InputError);
  std::istringstream unknown("adverbs very\n");
  CHECK_THROWS_AS(MarkerLexicon::parse(unknown), InputError);
  std::istringstream phrase("articles the cat\n");
  CHECK_THROWS_AS(MarkerLexicon::parse(phrase), InputError);
  std::istringstream ok("# comment\n\narticles the\nquantifiers all\n");
  CHECK(MarkerLexicon::parse(ok).size() == 2);
  std::istringstream bad_pattern("quote (unclosed\n");
  CHECK_THROWS_AS(TemplateSet::parse(bad_pattern), InputError);
  std::istringstream bad_kind("footer x\n");
  CHECK_THROWS_AS(TemplateSet::parse(bad_kind), InputError);
}

TEST_CASE("shipped data files match the built-in defaults") {
  const std::filesystem::path dir = MAILCONV_DATA_DIR;
  const auto lex = MarkerLexicon::load(dir / "markers.txt");
  const auto def = MarkerLexicon::defaults();
  CHECK(lex.size() == def.size());
  for (auto c : kAllMarkerCategories) CHECK(lex.words(c) == def.words(c));
  for (auto c : kAllMarkerCategories) CHECK_FALSE(def.words(c).empty());

  const auto tpl = TemplateSet::load(dir / "templates.txt");
  CHECK(tpl.size() == templates().size());
  const std::vector<std::string> bodies{"a\nSent from my iPhone", "b\nOn Mon x wrote:\n> c", "> quoted", "plain",
                                        "Sent from my iPad", "x -- Original Message -- y"};
  for (const auto& b : bodies) {
    CHECK(strip_quotes(b, tpl) == strip_quotes(b, templates()));
    CHECK(detect_device(b, tpl) == detect_device(b, templates()));
  }
}

TEST_CASE("record invariants hold on a generated corpus") {
  GeneratorParams p;
  p.n_dyads = 20;
  p.seed = 9;
  const auto corpus = generate_corpus(p);
  REQUIRE(corpus.records.size() > 100);
  for (const auto& r : corpus.records) {
    CHECK(r.word_count == tokenize(r.body_stripped).size());
    CHECK(r.body_raw.compare(0, r.body_stripped.size(), r.body_stripped) == 0);
    CHECK(strip_quotes(r.body_stripped, templates()) == r.body_stripped);
    for (auto c : r.marker_counts) CHECK(c <= r.word_count);
    CHECK(normalize_subject(r.subject_root).root == r.subject_root);
    CHECK(r.device == detect_device(cut_quoted_text(r.body_raw, templates()), templates()));
  }
}

TEST_CASE("parsing does not depend on line order") {
  GeneratorParams p;
  p.n_dyads = 5;
  p.seed = 2;
  const auto corpus = generate_corpus(p);
  std::vector<std::string> lines;
  for (const auto& r : corpus.records) lines.push_back(to_record_line(r));
  auto parse_all = [](const std::vector<std::string>& ls) {
    std::string text;
    for (const auto& l : ls) text += l + "\n";
    std::istringstream in(text);
    std::vector<std::string> out;
    for (const auto& r : read_records(in, fixture::config()).records) out.push_back(to_parsed_line(r));
    std::sort(out.begin(), out.end());
    return out;
  };
  auto shuffled = lines;
  Rng rng(4);
  for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
  CHECK(parse_all(lines) == parse_all(shuffled));
}

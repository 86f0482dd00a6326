#include <doctest.h>

#include <random>
#include <sstream>

#include "leitsatz/entities.hpp"
#include "leitsatz/error.hpp"

using namespace leitsatz;
using namespace leitsatz::entities;

namespace {

EntitySpan span(std::string_view text, std::size_t start, std::size_t end, std::string kind) {
  return {start, end, std::move(kind), std::string(text.substr(start, end - start))};
}

std::string remove_all_tags(std::string text, const TagVocabulary& vocab) {
  for (const auto& kind : vocab.kinds()) {
    for (const auto& tok : {"<" + kind + "> ", " </" + kind + ">"})
      for (auto pos = text.find(tok); pos != std::string::npos; pos = text.find(tok)) text.erase(pos, tok.size());
  }
  return text;
}

}  // namespace

TEST_CASE("detect statute citations") {
  const auto a = detect_entities("Nach § 125 BGB ist der Vertrag nichtig.");
  REQUIRE(a.size() == 1);
  CHECK(a[0].kind == "GS");
  CHECK(a[0].surface == "§ 125 BGB");

  CHECK(detect_entities("Guten Morgen").empty());

  const auto chain = detect_entities("§ 307 Abs. 1 Satz 2 BGB");
  REQUIRE(chain.size() == 1);
  CHECK(chain[0].surface == "§ 307 Abs. 1 Satz 2 BGB");
  CHECK(chain[0].start == 0);

  const auto two = detect_entities("gemäß §§ 280, 281 BGB und Art. 3 GG");
  REQUIRE(two.size() == 2);
  CHECK(two[0].surface == "§§ 280, 281 BGB");
  CHECK(two[1].surface == "Art. 3 GG");
}

TEST_CASE("detect court decision citations") {
  const auto rs = detect_entities("Vgl. BGH, Urteil vom 12. Mai 2010 - VIII ZR 123/09, juris.");
  REQUIRE(rs.size() == 1);
  CHECK(rs[0].kind == "RS");
  CHECK(rs[0].surface.find("VIII ZR 123/09") != std::string::npos);
}

TEST_CASE("span validation") {
  const std::string text = "abcd";
  CHECK_THROWS_AS(validate_spans(text, {{0, 5, "GS", "abcd"}}), DataError);
  const std::string six = "abcdefgh";
  try {
    validate_spans(six, {span(six, 0, 3, "GS"), span(six, 2, 6, "GS")});
    FAIL("expected overlap");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(0,3,GS)") != std::string::npos);
    CHECK(msg.find("(2,6,GS)") != std::string::npos);
  }
  CHECK_THROWS_AS(validate_spans(six, {span(six, 0, 3, "NOPE")}), DataError);
  CHECK_THROWS_AS(validate_spans(six, {span(six, 2, 2, "GS")}), DataError);
  CHECK_NOTHROW(validate_spans(six, {}));
}

TEST_CASE("import spans converts code points to bytes") {
  const std::map<std::string, std::string> texts{{"d1", "Gemäß § 1 BGB gilt"}, {"d2", "abcd"}, {"d3", "xyz"}};
  std::istringstream in(
      "{\"id\":\"d1\",\"spans\":[{\"start\":6,\"end\":13,\"kind\":\"GS\"}]}\n"
      "{\"id\":\"d2\",\"spans\":[{\"start\":0,\"end\":5,\"kind\":\"GS\"}]}\n"
      "{\"id\":\"d3\",\"spans\":[]}\n");
  const auto imported = import_spans(in, texts);
  REQUIRE(imported.spans.count("d1") == 1);
  const auto& s = imported.spans.at("d1");
  REQUIRE(s.size() == 1);
  CHECK(s[0].surface == "§ 1 BGB");
  CHECK(texts.at("d1").substr(s[0].start, s[0].end - s[0].start) == "§ 1 BGB");
  REQUIRE(imported.errors.size() == 1);
  CHECK(imported.errors[0].id == "d2");
  CHECK(imported.spans.at("d3").empty());
  CHECK(enrich(texts.at("d3"), imported.spans.at("d3")) == "xyz");

  const auto line = spans_to_json("d1", texts.at("d1"), s);
  CHECK(line["spans"][0]["start"] == 6);
  CHECK(line["spans"][0]["end"] == 13);
}

TEST_CASE("enrich and strip_tags") {
  const std::string t = "§ 125 BGB";
  CHECK(enrich(t, {span(t, 0, t.size(), "GS")}) == "<GS> § 125 BGB </GS>");
  CHECK(enrich(t, {}) == t);

  const std::string two = "§ 1 BGBArt. 2 GG";
  const auto tagged = enrich(two, {span(two, 0, 8, "GS"), span(two, 8, two.size(), "GS")});
  CHECK(tagged == "<GS> § 1 BGB </GS><GS> Art. 2 GG </GS>");

  const auto stripped = strip_tags("<GS> § 125 BGB </GS>");
  CHECK(stripped.text == "§ 125 BGB");
  REQUIRE(stripped.spans.size() == 1);
  CHECK(stripped.spans[0] == span(t, 0, t.size(), "GS"));

  CHECK(strip_tags("kein Tag hier") == Stripped{"kein Tag hier", {}});
  CHECK_THROWS_AS(strip_tags("<GS> x </RS>"), TagError);
  CHECK_THROWS_AS(strip_tags("<GS> x"), TagError);
  CHECK_THROWS_AS(strip_tags("<GS> <RS> x </RS> </GS>"), TagError);
  CHECK_THROWS_AS(strip_tags("x </GS>"), TagError);
}

TEST_CASE("enrich/strip round trip on random placements") {
  const auto& vocab = TagVocabulary::defaults();
  std::mt19937_64 rng(2024);
  const std::vector<std::string> alphabet{"a", "b", " ", "§", "ü", "1", ".", "-", "ß", "x"};
  for (int round = 0; round < 300; ++round) {
    std::string text;
    const auto len = 1 + rng() % 30;
    for (std::size_t i = 0; i < len; ++i) text += alphabet[rng() % alphabet.size()];
    std::vector<std::size_t> cuts;
    for (std::size_t i = 0; i <= text.size(); ++i) {
      if (i == text.size() || (static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) cuts.push_back(i);
    }
    std::vector<EntitySpan> spans;
    std::size_t pos = 0;
    while (true) {
      std::vector<std::size_t> starts;
      for (auto c : cuts) if (c >= pos && c < text.size()) starts.push_back(c);
      if (starts.empty() || rng() % 4 == 0) break;
      const auto start = starts[rng() % starts.size()];
      std::vector<std::size_t> ends;
      for (auto c : cuts) if (c > start) ends.push_back(c);
      const auto end = ends[rng() % std::min<std::size_t>(ends.size(), 4)];
      const auto trimmed = std::string(text.substr(start, end - start));
      if (trimmed.front() == ' ' || trimmed.back() == ' ') {
        pos = end;
        continue;
      }
      spans.push_back(span(text, start, end, vocab.kinds()[rng() % vocab.kinds().size()]));
      pos = end;
    }
    const auto tagged = enrich(text, spans);
    const auto back = strip_tags(tagged);
    CHECK(back.text == text);
    CHECK(back.spans == spans);
    CHECK(remove_all_tags(tagged, vocab) == text);
    if (spans.empty()) CHECK(tagged == text);
  }
}

TEST_CASE("tag vocabulary is what the generator receives") {
  const auto& vocab = TagVocabulary::defaults();
  CHECK(vocab.contains("GS"));
  CHECK(vocab.contains("RS"));
  const auto tokens = vocab.special_tokens();
  CHECK(tokens.size() == 2 * vocab.kinds().size());
  CHECK(std::find(tokens.begin(), tokens.end(), "<GS>") != tokens.end());
  CHECK(std::find(tokens.begin(), tokens.end(), "</GS>") != tokens.end());
  for (const auto& e : detect_entities("Nach § 1 BGB und BGH, Urteil vom 1. Juli 2015 - V ZR 1/14.")) {
    CHECK(vocab.contains(e.kind));
  }
  TagVocabulary narrow({"GS"});
  CHECK_THROWS_AS(strip_tags("<RS> x </RS>", narrow), TagError);
  CHECK(remove_all_tags(enrich("§ 5 BGB", {span("§ 5 BGB", 0, 8, "GS")}), vocab) == "§ 5 BGB");
}

TEST_CASE("hallucination audit") {
  const auto ok = audit_hallucinations("Gemäß § 125 BGB nichtig.", "Der Vertrag ist nach § 125 BGB nichtig.");
  CHECK(ok.support_rate == 1.0);
  CHECK(ok.supported == 1);
  CHECK(ok.unsupported.empty());

  const auto none = audit_hallucinations("Keine Norm.", "Quelle");
  CHECK(none.support_rate == 1.0);
  CHECK(none.generated_entities.empty());
  CHECK(none.unsupported.empty());

  const auto bad = audit_hallucinations("Nach § 999 XYZ gilt das.", "Nach § 125 BGB gilt das.");
  CHECK(bad.unsupported == std::vector<std::string>{"§ 999 XYZ"});
  CHECK(bad.support_rate == 0.0);

  const auto spaced = audit_hallucinations("Nach § 125 BGB.", "Nach §  125\nBGB.");
  CHECK(spaced.support_rate == 1.0);

  const auto only_rs = audit_hallucinations("Nach § 999 XYZ gilt das.", "", {"RS"});
  CHECK(only_rs.generated_entities.empty());
}

TEST_CASE("support rate never drops when the source grows") {
  std::mt19937_64 rng(8);
  const std::vector<std::string> cites{"§ 1 BGB", "§ 2 BGB", "§ 3 ZPO", "Art. 5 GG", "§ 4 StGB"};
  for (int round = 0; round < 100; ++round) {
    std::string summary = "Es gilt";
    std::string source = "Quelle";
    for (int i = 0; i < 3; ++i) summary += " und " + cites[rng() % cites.size()];
    for (int i = 0; i < 2; ++i) source += " sowie " + cites[rng() % cites.size()];
    const auto before = audit_hallucinations(summary, source).support_rate;
    source += " ferner " + cites[rng() % cites.size()];
    CHECK(audit_hallucinations(summary, source).support_rate >= before);
  }
}

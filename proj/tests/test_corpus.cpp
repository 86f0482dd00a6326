#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "leitsatz/corpus.hpp"
#include "leitsatz/error.hpp"

using namespace leitsatz;
using namespace leitsatz::corpus;
namespace fs = std::filesystem;

namespace {

const fs::path kSample = LEITSATZ_SAMPLE_DIR;

Judgment make(const std::string& id, std::vector<Subsection> subs, std::string body = "") {
  Judgment j;
  j.id = id;
  j.date = "2020-01-01";
  j.court = "BGH";
  j.sections.push_back({"Tatbestand", "Sachverhalt.", {}});
  j.sections.push_back({"Entscheidungsgründe", std::move(body), std::move(subs)});
  j.guiding_principles = "Leitsatz.";
  return j;
}

CorpusStore store_of(std::size_t n) {
  std::vector<Judgment> js;
  for (std::size_t i = 0; i < n; ++i) js.push_back(make("J" + std::to_string(i), {}, "x"));
  return CorpusStore(std::move(js));
}

// Counts the way a tokenizer with a fixed table would.
class TableCounter final : public textproc::TokenCounter {
 public:
  std::size_t count(std::string_view text) const override { return std::stoul(std::string(text)); }
  std::size_t concat_slack() const override { return 0; }
  std::string name() const override { return "table"; }
};

}  // namespace

TEST_CASE("ingest empty and duplicate inputs") {
  std::istringstream empty("");
  CHECK(ingest_jsonl(empty).empty());

  std::ostringstream two;
  nlohmann::json j = make("a", {}, "x");
  two << j.dump() << "\n" << j.dump() << "\n";
  std::istringstream in(two.str());
  try {
    ingest_jsonl(in);
    FAIL("expected duplicate error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("\"a\"") != std::string::npos);
  }
}

TEST_CASE("malformed records report their line") {
  std::istringstream in("{\"id\":\"x\",\"sections\":[{\"heading\":\"H\",\"body\":\"b\"}]}\n{not json}\n{\"id\":\"\"}\n");
  try {
    ingest_jsonl(in, "f.jsonl");
    FAIL("expected IngestError");
  } catch (const IngestError& e) {
    REQUIRE(e.errors().size() == 2);
    CHECK(e.errors()[0].line == 2);
    CHECK(e.errors()[1].line == 3);
    CHECK(e.errors()[0].file == "f.jsonl");
  }
}

TEST_CASE("sample corpus ingests and round-trips through export") {
  const auto store = ingest(kSample / "corpus.jsonl", InputFormat::jsonl);
  CHECK(store.size() == 5);
  std::ostringstream exported;
  store.export_jsonl(exported);

  std::ifstream original(kSample / "corpus.jsonl");
  std::stringstream buffer;
  buffer << original.rdbuf();
  CHECK(exported.str() == buffer.str());

  std::istringstream again(exported.str());
  const auto second = ingest_jsonl(again);
  std::ostringstream exported2;
  second.export_jsonl(exported2);
  CHECK(exported2.str() == exported.str());
}

TEST_CASE("xml judgments match their jsonl counterparts") {
  const auto jsonl = ingest(kSample / "corpus.jsonl", InputFormat::jsonl);
  const auto xml = ingest(kSample / "xml", InputFormat::xml_dir);
  CHECK(xml.size() == 2);
  for (const auto& j : xml.judgments()) {
    const auto& ref = jsonl.at(j.id);
    CHECK(ref.guiding_principles == j.guiding_principles);
    CHECK(extract_reasons(ref) == extract_reasons(j));
  }
  std::istringstream bad("<judgment id=\"x\"><section heading=\"H\"><body>b</body></section>");
  CHECK_THROWS_AS(parse_judgment_xml(bad), DataError);
}

TEST_CASE("extract_reasons") {
  CHECK(extract_reasons(make("a", {{"I", "recap"}, {"II", "analysis"}})) == "analysis");
  CHECK(extract_reasons(make("a", {}, "x")) == "x");
  CHECK(extract_reasons(make("a", {{"I", "a"}, {"II", "b"}, {"III", "c"}})) == "b\n\nc");
  CHECK(extract_reasons(make("a", {{"I.", "a"}, {"II.", "b"}})) == "b");

  auto spaced = make("a", {{"I", "a"}, {"II", "b"}});
  spaced.sections[1].heading = "E n t s c h e i d u n g s g r ü n d e :";
  CHECK(extract_reasons(spaced) == "b");

  Judgment none = make("n", {});
  none.sections.pop_back();
  CHECK_THROWS_AS(extract_reasons(none), MissingReasonsError);

  CHECK(is_excluded_label(" I. "));
  CHECK(is_excluded_label("(I)"));
  CHECK_FALSE(is_excluded_label("II"));
  CHECK_FALSE(is_excluded_label("1"));
}

TEST_CASE("extract_reasons never returns subsection I text") {
  std::mt19937_64 rng(17);
  for (int round = 0; round < 200; ++round) {
    std::vector<Subsection> subs;
    const std::vector<std::string> labels{"I", "II", "III", "IV", "V"};
    const auto n = 1 + rng() % labels.size();
    for (std::size_t i = 0; i < n; ++i) {
      subs.push_back({labels[i] + (rng() % 2 ? "." : ""), "body" + std::to_string(i) + "-" + std::to_string(rng() % 1000)});
    }
    const auto reasons = extract_reasons(make("r", subs));
    CHECK(reasons.find(subs[0].body) == std::string::npos);
  }
}

TEST_CASE("batch extraction skips judgments without reasons") {
  Judgment none = make("none", {});
  none.sections.pop_back();
  CorpusStore store({make("a", {{"I", "x"}, {"II", "y"}}), none});
  const auto batch = extract_all_reasons(store);
  REQUIRE(batch.reasons.size() == 1);
  CHECK(batch.reasons[0].second == "y");
  REQUIRE(batch.skipped.size() == 1);
  CHECK(batch.skipped[0].id == "none");
  CHECK(skip_report_json(batch.skipped).dump().find("none") != std::string::npos);
}

TEST_CASE("split sizes and validation") {
  CHECK(split_sizes(10, {0.7, 0.15, 0.15}) == std::array<std::size_t, 3>{7, 2, 1});
  const auto parts = split_corpus(store_of(10), {0.7, 0.15, 0.15}, 42);
  CHECK(parts[0].judgment_ids.size() == 7);
  CHECK(parts[1].judgment_ids.size() == 2);
  CHECK(parts[2].judgment_ids.size() == 1);
  CHECK_THROWS_AS(split_corpus(store_of(1), {1.0, 0.0, 0.0}, 1), ConfigError);
  CHECK_THROWS_AS(split_corpus(store_of(3), {0.5, 0.2, 0.2}, 1), ConfigError);
  CHECK_THROWS_AS(split_corpus(CorpusStore{}, {0.8, 0.1, 0.1}, 1), ConfigError);

  const auto again = split_corpus(store_of(10), {0.7, 0.15, 0.15}, 42);
  for (int i = 0; i < 3; ++i) CHECK(again[i].judgment_ids == parts[i].judgment_ids);

  const auto round_trip = splits_from_json(splits_to_json(parts, 42));
  for (int i = 0; i < 3; ++i) CHECK(round_trip[i].judgment_ids == parts[i].judgment_ids);
}

TEST_CASE("splits partition the corpus for any seed") {
  std::mt19937_64 rng(99);
  for (int round = 0; round < 100; ++round) {
    const std::size_t n = 3 + rng() % 40;
    const auto store = store_of(n);
    const double a = 0.1 + 0.6 * static_cast<double>(rng() % 1000) / 1000.0;
    const double b = (1.0 - a) * (0.2 + 0.6 * static_cast<double>(rng() % 1000) / 1000.0);
    const auto parts = split_corpus(store, {a, b, 1.0 - a - b}, rng());
    std::set<std::string> seen;
    std::size_t total = 0;
    for (const auto& part : parts) {
      CHECK(std::is_sorted(part.judgment_ids.begin(), part.judgment_ids.end()));
      total += part.judgment_ids.size();
      seen.insert(part.judgment_ids.begin(), part.judgment_ids.end());
    }
    CHECK(total == n);
    CHECK(seen.size() == n);
  }
}

TEST_CASE("length statistics") {
  TableCounter counter;
  const auto s = length_stats({"2", "4", "6"}, counter);
  CHECK(s.min == 2);
  CHECK(s.mean == doctest::Approx(4));
  CHECK(s.max == 6);
  CHECK(s.std == doctest::Approx(2));
  const auto one = length_stats({"7"}, counter);
  CHECK(one.min == 7);
  CHECK(one.mean == 7);
  CHECK(one.max == 7);
  CHECK(one.std == 0);

  std::mt19937_64 rng(1);
  for (int round = 0; round < 50; ++round) {
    std::vector<std::string> texts(1 + rng() % 20);
    std::vector<double> values;
    for (auto& t : texts) {
      values.push_back(static_cast<double>(rng() % 500));
      t = std::to_string(static_cast<int>(values.back()));
    }
    double sum = 0;
    for (double v : values) sum += v;
    const double mean = sum / static_cast<double>(values.size());
    double ss = 0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
    const auto got = length_stats(texts, counter);
    CHECK(got.mean == doctest::Approx(mean).epsilon(1e-12));
    CHECK(got.std == doctest::Approx(sd).epsilon(1e-12));
    CHECK(got.min == *std::min_element(values.begin(), values.end()));
    CHECK(got.max == *std::max_element(values.begin(), values.end()));
  }
}

TEST_CASE("length table layout") {
  TableCounter counter;
  std::array<SplitAssignment, 3> splits{SplitAssignment{Split::train, {"a", "b"}},
                                        SplitAssignment{Split::valid, {"c"}},
                                        SplitAssignment{Split::test, {}}};
  const auto rows = length_table({{"a", "10"}, {"b", "20"}, {"c", "30"}}, splits, counter);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].label == "all");
  CHECK(rows[3].label == "test");
  CHECK_FALSE(rows[3].stats.has_value());
  std::ostringstream csv;
  write_length_table_csv(csv, rows);
  const auto text = csv.str();
  CHECK(text.rfind("set,min,mean,max,std\n", 0) == 0);
  CHECK(text.find("all,10,20") != std::string::npos);
  CHECK(text.find("\ntrain,") != std::string::npos);
  CHECK(text.find("\nvalid,") != std::string::npos);
  CHECK(text.find("\ntest,") != std::string::npos);
}

TEST_CASE("gold outlier filter") {
  TableCounter counter;
  const auto r = filter_gold_outliers({{"a", "r", "100"}, {"b", "r", "5000"}}, 1500, counter);
  REQUIRE(r.retained.size() == 1);
  CHECK(r.retained[0].id == "a");
  REQUIRE(r.report.excluded.size() == 1);
  CHECK(r.report.excluded[0] == std::pair<std::string, std::size_t>{"b", 5000});

  const auto all = filter_gold_outliers({{"a", "r", "100"}, {"b", "r", "5000"}}, 100000, counter);
  CHECK(all.retained.size() == 2);
  CHECK(all.report.excluded.empty());
  CHECK_THROWS_AS(filter_gold_outliers({}, 0, counter), ConfigError);
  CHECK(exclusion_report_json(r.report).dump().find("5000") != std::string::npos);
}

TEST_CASE("judgment validation") {
  Judgment j = make("x", {{"I", "a"}, {"I", "b"}});
  CHECK_THROWS_AS(validate(j), DataError);
  j = make("", {});
  CHECK_THROWS_AS(validate(j), DataError);
  CHECK_NOTHROW(validate(make("ok", {{"I", "a"}, {"II", "b"}})));
}

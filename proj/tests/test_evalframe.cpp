#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "leitsatz/error.hpp"
#include "leitsatz/evalframe.hpp"

using namespace leitsatz;
using namespace leitsatz::evalframe;

namespace {

Decisions bits(const std::string& pattern) {
  Decisions d{};
  for (std::size_t i = 0; i < kClassCount; ++i) d[i] = pattern[i] == '1';
  return d;
}

ClassVerdict verdict(std::string reviewer, std::string judgment, std::string approach, const std::string& pattern,
                     std::string reasoning = "") {
  ClassVerdict v;
  v.reviewer_id = std::move(reviewer);
  v.summary = {std::move(judgment), std::move(approach)};
  v.decisions = bits(pattern);
  if (v.decisions[6] && reasoning.empty()) reasoning = "besser begründet";
  v.reasoning = std::move(reasoning);
  v.timestamp = "2024-01-01T00:00:00Z";
  return v;
}

std::vector<SummaryRef> refs(std::size_t judgments, std::size_t approaches) {
  std::vector<SummaryRef> out;
  for (std::size_t j = 0; j < judgments; ++j) {
    for (std::size_t a = 0; a < approaches; ++a) out.push_back({"J" + std::to_string(j), "A" + std::to_string(a)});
  }
  return out;
}

std::vector<std::string> reviewers(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("R" + std::to_string(i));
  return out;
}

}  // namespace

TEST_CASE("evaluation classes") {
  const auto& classes = evaluation_classes();
  CHECK(classes.size() == 7);
  CHECK(classes[0].index == 1);
  CHECK(classes[6].index == 7);
  for (const auto& c : classes) {
    CHECK_FALSE(c.aspect.empty());
    CHECK_FALSE(c.description.empty());
  }
}

TEST_CASE("verdict validation and store") {
  CHECK_THROWS_AS(validate(verdict("A", "J", "x", "0000001", " ")), ValidationError);
  CHECK_THROWS_AS(validate(verdict("", "J", "x", "0000000")), ValidationError);
  CHECK_NOTHROW(validate(verdict("A", "J", "x", "0000000")));

  VerdictStore store;
  store.add(verdict("A", "J1", "lexrank", "1100000"));
  CHECK_THROWS_AS(store.add(verdict("A", "J1", "lexrank", "1000000")), DuplicateVerdictError);
  CHECK(store.snapshot()[0].decisions == bits("1100000"));
  store.supersede(verdict("A", "J1", "lexrank", "1000000"));
  CHECK(store.size() == 1);
  CHECK(store.history().size() == 1);
  CHECK(store.snapshot()[0].decisions == bits("1000000"));
  CHECK_THROWS_AS(store.supersede(verdict("B", "J1", "lexrank", "1000000")), DataError);
}

TEST_CASE("verdict store export and import are inverse") {
  VerdictStore store;
  store.add(verdict("B", "J2", "lexrank", "1111111", "Präziser als das Original"));
  store.add(verdict("A", "J1", "model_plain", "1010101", "ja"));
  auto c = verdict("A", "J1", "lexrank", "0000000");
  c.comment = "Zeile mit \"Anführungszeichen\"\nund Umbruch";
  store.add(c);
  std::ostringstream out;
  store.export_jsonl(out);
  std::istringstream in(out.str());
  const auto back = VerdictStore::import_jsonl(in);
  CHECK(back.snapshot() == store.snapshot());
  std::ostringstream again;
  back.export_jsonl(again);
  CHECK(again.str() == out.str());

  std::istringstream broken("{\"reviewer\":\"A\"}\n");
  CHECK_THROWS_AS(VerdictStore::import_jsonl(broken), DataError);
}

TEST_CASE("assignment fixtures") {
  const auto a = build_assignments(refs(100, 2), reviewers(5), 3, 42);
  std::map<std::string, std::size_t> load;
  for (const auto& x : a) {
    CHECK(x.reviewer_ids.size() == 3);
    for (const auto& r : x.reviewer_ids) ++load[r];
  }
  for (const auto& [r, n] : load) CHECK(n == 120);

  const auto one = build_assignments(refs(1, 1), reviewers(3), 3, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0].reviewer_ids == reviewers(3));

  CHECK_THROWS_AS(build_assignments(refs(1, 1), reviewers(2), 3, 1), ConfigError);
  CHECK_THROWS_AS(build_assignments(refs(1, 1), {"A", "A", "B"}, 3, 1), ConfigError);

  const auto again = build_assignments(refs(100, 2), reviewers(5), 3, 42);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(again[i].reviewer_ids == a[i].reviewer_ids);

  std::map<std::string, std::vector<std::string>> by_judgment;
  for (const auto& x : a) {
    auto [it, fresh] = by_judgment.emplace(x.summary.judgment_id, x.reviewer_ids);
    if (!fresh) CHECK(it->second == x.reviewer_ids);
  }
  CHECK(assignment_from_json(to_json(a[0])).reviewer_ids == a[0].reviewer_ids);
}

TEST_CASE("presentation order is a per-reviewer permutation") {
  const auto a = build_assignments(refs(20, 2), reviewers(5), 3, 3);
  std::set<std::vector<SummaryRef>> orders;
  for (const auto& r : reviewers(5)) {
    auto order = presentation_order(a, r);
    CHECK(order == presentation_order(a, r));
    orders.insert(order);
    auto sorted = order;
    std::sort(sorted.begin(), sorted.end());
    std::vector<SummaryRef> expected;
    for (const auto& x : a) {
      if (std::find(x.reviewer_ids.begin(), x.reviewer_ids.end(), r) != x.reviewer_ids.end()) expected.push_back(x.summary);
    }
    CHECK(sorted == expected);
    CHECK(order != expected);
  }
}

TEST_CASE("majority verdict") {
  const std::vector<ClassVerdict> ttf{verdict("A", "J", "x", "1000000"), verdict("B", "J", "x", "1000000"),
                                      verdict("C", "J", "x", "0000000")};
  CHECK(majority_verdict(ttf)[0]);
  const std::vector<ClassVerdict> ttt{verdict("A", "J", "x", "1000000"), verdict("B", "J", "x", "1000000"),
                                      verdict("C", "J", "x", "1000000")};
  CHECK(majority_verdict(ttt)[0]);
  const std::vector<ClassVerdict> tff{verdict("A", "J", "x", "1000000"), verdict("B", "J", "x", "0000000"),
                                      verdict("C", "J", "x", "0000000")};
  CHECK_FALSE(majority_verdict(tff)[0]);
  CHECK_THROWS_AS(majority_verdict(std::span(ttt).first(2)), ConfigError);
}

TEST_CASE("majority verdict is monotone") {
  std::mt19937_64 rng(12);
  for (int round = 0; round < 500; ++round) {
    std::vector<ClassVerdict> vs;
    for (const char* r : {"A", "B", "C"}) {
      std::string p;
      for (std::size_t c = 0; c < kClassCount - 1; ++c) p += (rng() % 2) ? '1' : '0';
      vs.push_back(verdict(r, "J", "x", p + "0"));
    }
    const auto before = majority_verdict(vs);
    auto& who = vs[rng() % 3];
    const auto cls = rng() % (kClassCount - 1);
    if (who.decisions[cls]) continue;
    who.decisions[cls] = true;
    const auto after = majority_verdict(vs);
    for (std::size_t c = 0; c < kClassCount; ++c) {
      if (before[c]) CHECK(after[c]);
    }
  }
}

TEST_CASE("fleiss kappa fixtures") {
  const auto perfect = fleiss_kappa({{3, 0}, {0, 3}, {3, 0}}, 2, 3);
  CHECK(perfect.kappa == 1.0);
  CHECK(fleiss_kappa({{3, 0}, {3, 0}}, 2, 3).kappa == 1.0);

  const auto hand = fleiss_kappa({{2, 0}, {1, 1}, {0, 2}, {2, 0}}, 2, 2);
  CHECK(std::abs(hand.observed - 0.75) < 1e-12);
  CHECK(std::abs(hand.expected - 0.53125) < 1e-12);
  CHECK(std::abs(hand.kappa - 7.0 / 15.0) < 1e-12);

  CHECK_THROWS_AS(fleiss_kappa({{2, 0}}, 2, 1), ConfigError);
  CHECK_THROWS_AS(fleiss_kappa({{2, 1}}, 2, 2), ConfigError);

  std::mt19937_64 rng(2024);
  std::vector<std::vector<std::size_t>> units(10000, std::vector<std::size_t>(2, 0));
  for (auto& u : units) {
    for (int r = 0; r < 3; ++r) ++u[rng() % 2];
  }
  CHECK(std::abs(fleiss_kappa(units, 2, 3).kappa) < 0.05);

  for (int round = 0; round < 50; ++round) {
    std::vector<std::vector<std::size_t>> us(5 + rng() % 20, std::vector<std::size_t>(2, 0));
    for (auto& u : us) {
      for (int r = 0; r < 3; ++r) ++u[rng() % 2];
    }
    auto swapped = us;
    for (auto& u : swapped) std::swap(u[0], u[1]);
    const auto a = fleiss_kappa(us, 2, 3).kappa;
    const auto b = fleiss_kappa(swapped, 2, 3).kappa;
    CHECK(std::abs(a - b) < 1e-12);
  }
}

TEST_CASE("pairwise kappa fixtures") {
  std::vector<ClassVerdict> same{verdict("A", "J1", "x", "1100110"), verdict("B", "J1", "x", "1100110"),
                                 verdict("A", "J2", "x", "0101010"), verdict("B", "J2", "x", "0101010")};
  CHECK(pairwise_kappa_matrix(same).at("A", "B") == 1.0);

  std::vector<ClassVerdict> apart{verdict("A", "J1", "x", "1100110"), verdict("B", "J2", "x", "1100110")};
  const auto none = pairwise_kappa_matrix(apart);
  CHECK_FALSE(none.at("A", "B").has_value());
  REQUIRE(none.absent.size() == 1);
  CHECK(none.absent[0] == std::pair<std::string, std::string>{"A", "B"});

  // A and B agree everywhere; C differs from both on a single decision.
  const std::vector<ClassVerdict> three{
      verdict("A", "J1", "x", "1111111"), verdict("B", "J1", "x", "1111111"), verdict("C", "J1", "x", "1111111"),
      verdict("A", "J2", "x", "0000000"), verdict("B", "J2", "x", "0000000"), verdict("C", "J2", "x", "1000000")};
  const auto m = pairwise_kappa_matrix(three);
  CHECK(*m.at("A", "B") == 1.0);
  CHECK(std::abs(*m.at("A", "C") - 167.0 / 195.0) < 1e-12);
  CHECK(std::abs(*m.at("C", "B") - 167.0 / 195.0) < 1e-12);
  CHECK(std::abs(*m.mean() - (1.0 + 2 * 167.0 / 195.0) / 3.0) < 1e-12);

  std::ostringstream csv;
  write_pairwise_csv(csv, m);
  CHECK(csv.str().rfind("reviewer,A,B,C\nA,1.0000,1.0000,0.8564\n", 0) == 0);
}

TEST_CASE("pairwise kappa is equivariant under relabeling") {
  std::mt19937_64 rng(31);
  const std::vector<std::string> names{"A", "B", "C", "D"};
  for (int round = 0; round < 20; ++round) {
    std::vector<ClassVerdict> vs;
    for (int j = 0; j < 6; ++j) {
      for (const auto& r : names) {
        std::string p;
        for (std::size_t c = 0; c < kClassCount - 1; ++c) p += (rng() % 3) ? '1' : '0';
        vs.push_back(verdict(r, "J" + std::to_string(j), "x", p + "0"));
      }
    }
    auto perm = names;
    std::shuffle(perm.begin(), perm.end(), rng);
    std::map<std::string, std::string> rename;
    for (std::size_t i = 0; i < names.size(); ++i) rename[names[i]] = "Z" + perm[i];
    auto relabeled = vs;
    for (auto& v : relabeled) v.reviewer_id = rename[v.reviewer_id];
    const auto a = pairwise_kappa_matrix(vs);
    const auto b = pairwise_kappa_matrix(relabeled);
    for (const auto& x : names) {
      for (const auto& y : names) {
        const auto ka = a.at(x, y);
        const auto kb = b.at(rename[x], rename[y]);
        REQUIRE(ka.has_value() == kb.has_value());
        if (ka) CHECK(std::abs(*ka - *kb) < 1e-12);
      }
    }
  }
}

TEST_CASE("per-class agreement") {
  std::vector<ClassVerdict> unanimous;
  for (int j = 0; j < 4; ++j) {
    for (const char* r : {"A", "B", "C"}) unanimous.push_back(verdict(r, "J" + std::to_string(j), "x", j % 2 ? "1111111" : "1010100"));
  }
  const auto u = per_class_kappa(unanimous);
  CHECK(u.summaries == 4);
  for (const auto& c : u.classes) {
    CHECK(c.fleiss.kappa == 1.0);
    CHECK(c.fulfilled + c.not_fulfilled == 12);
  }

  // Class 1 yes-counts per summary: 3, 2, 0, 3, 1.
  const std::vector<std::string> pattern{"111", "110", "000", "111", "100"};
  std::vector<ClassVerdict> five;
  for (std::size_t s = 0; s < pattern.size(); ++s) {
    for (std::size_t r = 0; r < 3; ++r) {
      five.push_back(verdict(std::string(1, static_cast<char>('A' + r)), "S" + std::to_string(s), "x",
                             std::string(1, pattern[s][r]) + "000000"));
    }
  }
  five.push_back(verdict("A", "S9", "x", "1000000"));
  const auto report = per_class_kappa(five);
  CHECK(report.summaries == 5);
  REQUIRE(report.excluded.size() == 1);
  CHECK(report.excluded[0].judgment_id == "S9");
  const auto& c1 = report.classes[0];
  CHECK(std::abs(c1.fleiss.observed - 11.0 / 15.0) < 1e-12);
  CHECK(std::abs(c1.fleiss.expected - 0.52) < 1e-12);
  CHECK(std::abs(c1.fleiss.kappa - 4.0 / 9.0) < 1e-12);
  CHECK(c1.fulfilled == 9);
  CHECK(c1.not_fulfilled == 6);

  std::ostringstream csv;
  write_per_class_csv(csv, report);
  CHECK(csv.str().rfind("class,fleiss_kappa,pairwise_mean_kappa,fulfilled,not_fulfilled\n1,0.4444,", 0) == 0);
}

TEST_CASE("fulfillment report") {
  std::vector<ClassVerdict> all;
  for (const char* r : {"A", "B", "C"}) all.push_back(verdict(r, "J1", "lexrank", "1111111"));
  const auto rows = fulfillment_report(all);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].approach == "lexrank");
  for (double f : rows[0].fraction) CHECK(f == 1.0);
  CHECK(rows[0].mean_classes == 7.0);

  std::ostringstream csv;
  write_fulfillment_csv(csv, rows);
  CHECK(csv.str().rfind("approach,1,2,3,4,5,6,7,mean_classes\nlexrank,", 0) == 0);
}

TEST_CASE("spearman and bands") {
  const std::vector<double> x{1, 2, 3, 4}, y{1, 3, 2, 4}, neg{-1, -2, -3, -4};
  CHECK(std::abs(*spearman(x, x) - 1.0) < 1e-12);
  CHECK(std::abs(*spearman(x, y) - 0.8) < 1e-12);
  CHECK(std::abs(*spearman(x, neg) + 1.0) < 1e-12);
  const std::vector<double> flat{2, 2, 2, 2};
  CHECK_FALSE(spearman(x, flat).has_value());
  CHECK_THROWS_AS(spearman(std::vector<double>{1, 2}, std::vector<double>{1, 2}), ConfigError);
  CHECK_THROWS_AS(spearman(x, std::vector<double>{1, 2, 3}), ConfigError);
  CHECK(average_ranks(std::vector<double>{10, 20, 20, 5}) == std::vector<double>{2, 3.5, 3.5, 1});

  CHECK(interpret_kappa(0.6568) == "substantial");
  CHECK(interpret_kappa(1.0) == "almost perfect");
  CHECK(interpret_kappa(0.1) == "slight");
  CHECK(interpret_rho(0.35) == "medium");
  CHECK(interpret_rho(-0.6) == "large");
  CHECK_THROWS_AS(interpret_kappa(1.5), ConfigError);

  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int round = 0; round < 100; ++round) {
    std::vector<double> a(3 + rng() % 20), b(a.size());
    for (auto& v : a) v = u(rng);
    for (auto& v : b) v = u(rng);
    std::vector<double> ta(a.size()), tb(b.size());
    std::transform(a.begin(), a.end(), ta.begin(), [](double v) { return std::exp(v); });
    std::transform(b.begin(), b.end(), tb.begin(), [](double v) { return v * v * v + 3 * v; });
    CHECK(std::abs(*spearman(a, b) - *spearman(ta, tb)) < 1e-12);
  }
}

TEST_CASE("metric-class correlations") {
  metrics::MetricReport report;
  std::vector<ClassVerdict> vs;
  const std::vector<double> recall{0.1, 0.5, 0.9, 0.3};
  const std::vector<std::string> majority{"0000000", "0001100", "0011100", "0000100"};
  for (std::size_t j = 0; j < recall.size(); ++j) {
    const auto id = "J" + std::to_string(j);
    report.per_summary.push_back(
        {id, summarize::Approach::lexrank, metrics::Metric::rouge1, metrics::PRF::from(0.5, recall[j])});
    for (const char* r : {"A", "B", "C"}) vs.push_back(verdict(r, id, "lexrank", majority[j]));
  }
  const auto rows = metric_class_correlations(report, vs);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].component == "recall");
  CHECK(rows[0].class_index == 4);
  CHECK(rows[0].n == 4);
  REQUIRE(rows[0].rho.has_value());
  CHECK(*rows[0].rho > 0.0);
  CHECK(rows[2].component == "precision");
  CHECK_FALSE(rows[2].rho.has_value());
  std::ostringstream csv;
  write_correlations_csv(csv, rows);
  CHECK(csv.str().find("undefined") != std::string::npos);
}

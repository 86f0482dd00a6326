#include <doctest.h>

#include <atomic>
#include <cmath>
#include <random>
#include <regex>

#include <json.hpp>

#include "leitsatz/error.hpp"
#include "leitsatz/summarize.hpp"
#include "oracles.hpp"
#include "stub_server.hpp"

using namespace leitsatz;
using namespace leitsatz::summarize;
using Strings = std::vector<std::string>;

namespace {

textproc::WordTokenCounter kWords;

std::vector<double> centrality_of(const Strings& sentences, double threshold = 0.1, double damping = 0.85) {
  return power_iteration(transition_matrix(similarity_matrix(sentences), threshold), damping).scores;
}

std::vector<oracle::Tokens> word_tokens(const Strings& sentences) {
  std::vector<oracle::Tokens> out;
  for (const auto& s : sentences) {
    oracle::Tokens t;
    for (const auto& w : textproc::words(s)) {
      if (textproc::is_word_token(w)) t.push_back(w);
    }
    out.push_back(t);
  }
  return out;
}

Strings random_document(std::mt19937_64& rng, std::size_t n) {
  const Strings vocab{"vertrag", "kauf", "miete", "schaden", "frist", "mangel", "klage", "senat"};
  Strings out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string s;
    const auto len = 1 + rng() % 5;
    for (std::size_t w = 0; w < len; ++w) s += (w ? " " : "") + vocab[rng() % vocab.size()];
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("approach names") {
  CHECK(to_string(Approach::model_enriched) == "model_enriched");
  CHECK(approach_from_string("lexrank") == Approach::lexrank);
  CHECK_THROWS_AS(approach_from_string("gpt"), ConfigError);
}

TEST_CASE("similarity matrix fixtures") {
  const auto same = similarity_matrix(Strings{"Der Vertrag gilt.", "Der Vertrag gilt."});
  CHECK(same(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
  const auto disjoint = similarity_matrix(Strings{"Kauf Vertrag.", "Miete Pacht."});
  CHECK(disjoint(0, 1) == 0.0);
  CHECK(disjoint(0, 0) == 1.0);

  // One shared term ("vertrag") between sentences 1 and 2.
  const auto m = similarity_matrix(Strings{"Kauf Vertrag", "Vertrag Miete", "Pacht Zins"});
  const double a = std::log(3.0), b = std::log(1.5);
  const double expected = (b * b) / (a * a + b * b);
  CHECK(std::abs(m(0, 1) - expected) < 1e-12);
  CHECK(std::abs(m(1, 0) - expected) < 1e-12);
  CHECK(m(0, 2) == 0.0);
  CHECK(m(1, 2) == 0.0);
}

TEST_CASE("similarity matches the oracle on random documents") {
  std::mt19937_64 rng(5);
  for (int round = 0; round < 50; ++round) {
    const auto doc = random_document(rng, 2 + rng() % 7);
    const auto got = similarity_matrix(doc);
    const auto want = oracle::similarity(word_tokens(doc));
    for (std::size_t i = 0; i < doc.size(); ++i) {
      for (std::size_t j = 0; j < doc.size(); ++j) {
        CHECK(std::abs(got(i, j) - want(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) < 1e-12);
        CHECK(got(i, j) == got(j, i));
      }
    }
  }
}

TEST_CASE("power iteration fixtures") {
  const auto uniform = centrality_of(Strings(4, "Der Vertrag gilt."));
  for (double s : uniform) CHECK(s == doctest::Approx(0.25).epsilon(1e-12));

  for (double d : {0.05, 0.3, 0.85, 0.99}) {
    const auto two = centrality_of(Strings{"Kauf Vertrag.", "Miete Pacht."}, 0.1, d);
    CHECK(two[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(two[1] == doctest::Approx(0.5).epsilon(1e-12));
  }

  const Strings four{"Kauf Vertrag Frist", "Vertrag Miete", "Vertrag Kauf Mangel", "Klage Senat"};
  const auto got = centrality_of(four);
  const auto want = oracle::lexrank(oracle::similarity(word_tokens(four)), 0.1, 0.85);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(got[i] - want[i]) < 1e-6);

  SquareMatrix bad(2, 0.5);
  CHECK_THROWS_AS(power_iteration(bad, 1.5), ConfigError);
  CHECK_THROWS_AS(power_iteration(bad, 0.0), ConfigError);
  SquareMatrix cycle(3);
  cycle(0, 1) = cycle(1, 2) = 1.0;
  cycle(2, 0) = cycle(2, 1) = 0.5;
  CHECK_THROWS_AS(power_iteration(cycle, 0.999, 1e-10, 3), ConvergenceError);
}

TEST_CASE("centrality is a distribution") {
  std::mt19937_64 rng(77);
  for (int round = 0; round < 100; ++round) {
    const auto scores = centrality_of(random_document(rng, 1 + rng() % 10));
    double sum = 0.0;
    for (double s : scores) {
      CHECK(s >= 0.0);
      sum += s;
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("select_top breaks ties by position") {
  CHECK(select_top({0.1, 0.4, 0.2, 0.3}, 2) == std::vector<std::size_t>{1, 3});
  CHECK(select_top({0.2, 0.2, 0.2}, 2) == std::vector<std::size_t>{0, 1});
  CHECK(select_top({0.5}, 2) == std::vector<std::size_t>{0});
}

TEST_CASE("lexrank summaries") {
  LexRankParams p;
  const auto whole = lexrank_summary("j", "Der Kläger klagt. Die Beklagte zahlt nicht.", p, kWords);
  CHECK(whole.text == "Der Kläger klagt. Die Beklagte zahlt nicht.");
  CHECK(whole.sentence_count == 2);
  CHECK(whole.approach == Approach::lexrank);

  const auto same = lexrank_summary("j", "Das gilt. Das gilt. Das gilt. Das gilt. Das gilt.", p, kWords);
  CHECK(same.text == "Das gilt. Das gilt.");

  const Strings four{"Kauf Vertrag Frist.", "Vertrag Miete.", "Vertrag Kauf Mangel.", "Klage Senat."};
  std::string text;
  for (const auto& s : four) text += (text.empty() ? "" : " ") + s;
  const auto r = lexrank(textproc::split_sentences(text), p);
  const auto want = oracle::top_k(oracle::lexrank(oracle::similarity(word_tokens(four)), 0.1, 0.85), 2);
  CHECK(r.selected == want);

  CHECK_THROWS_AS(lexrank_summary("j", "", p, kWords), DataError);
  LexRankParams zero;
  zero.k = 0;
  CHECK_THROWS_AS(lexrank_summary("j", "Text.", zero, kWords), ConfigError);
}

TEST_CASE("lexrank ignores extra whitespace and trailing blank lines") {
  std::mt19937_64 rng(4);
  LexRankParams p;
  for (int round = 0; round < 50; ++round) {
    const auto doc = random_document(rng, 1 + rng() % 8);
    std::string text, spaced;
    for (const auto& s : doc) {
      std::string sentence = s;
      sentence[0] = static_cast<char>(std::toupper(sentence[0]));
      text += (text.empty() ? "" : " ") + sentence + ".";
      spaced += (spaced.empty() ? "" : "   \n ") + std::regex_replace(sentence, std::regex(" "), "  ") + ".";
    }
    const auto a = lexrank_summary("j", text, p, kWords);
    const auto b = lexrank_summary("j", spaced + "\n\n  \n", p, kWords);
    CHECK(std::regex_replace(b.text, std::regex("  "), " ") == a.text);
    CHECK(a.sentence_count == std::min<std::size_t>(2, doc.size()));
  }
}

TEST_CASE("truncate to budget") {
  CHECK(truncate_to_budget("kurzer Text", 32768, 750, kWords) == "kurzer Text");
  std::string big;
  for (int i = 0; i < 40000; ++i) big += "wort ";
  const auto cut = truncate_to_budget(big, 32768, 750, kWords);
  CHECK(kWords.count(cut) <= 32768 - 750 - 64);
  CHECK(kWords.count(cut) == 32768 - 750 - 64);
  CHECK(big.rfind(cut, 0) == 0);
  CHECK_THROWS_AS(truncate_to_budget(big, 750, 750, kWords), ConfigError);
  CHECK_THROWS_AS(truncate_to_budget(big, 100, 800, kWords), ConfigError);
}

TEST_CASE("generation against a stub endpoint") {
  StubServer stub;
  std::string last_body;
  std::string reply_text = "LEITSATZ";
  std::atomic<int> calls{0};
  int fail_first = 0;
  stub.server().Post("/generate", [&](const httplib::Request& req, httplib::Response& res) {
    ++calls;
    last_body = req.body;
    if (fail_first > 0) {
      --fail_first;
      res.status = 503;
      return;
    }
    res.set_content(nlohmann::json{{"text", reply_text}}.dump(), "application/json");
  });
  stub.start();
  HttpGenerationClient client(Endpoint{stub.url(), "", "", 5.0}, "stub");
  GenerationParams params;
  RetryPolicy fast{3, std::chrono::milliseconds(1), 2.0};

  const std::string input = "Eingabetext";
  const auto r = generate_summary(client, "j1", input, Approach::model_plain, params, {}, kWords, fast);
  CHECK(r.text == "LEITSATZ");
  CHECK(r.approach == Approach::model_plain);
  CHECK_FALSE(r.empty);
  CHECK(input == "Eingabetext");

  const auto body = nlohmann::json::parse(last_body);
  CHECK(body["max_new_tokens"] == 750);
  CHECK(body["decoding"] == "greedy");
  CHECK(body["input"] == "Eingabetext");

  reply_text = "";
  const auto empty = generate_summary(client, "j2", input, Approach::model_plain, params, {}, kWords, fast);
  CHECK(empty.empty);
  CHECK(empty.text.empty());

  reply_text = "ok";
  fail_first = 2;
  calls = 0;
  const auto retried = generate_summary(client, "j3", input, Approach::model_enriched, params, {"<GS>", "</GS>"},
                                        kWords, fast);
  CHECK(calls == 3);
  CHECK(retried.text == "ok");
  CHECK(nlohmann::json::parse(last_body)["special_tokens"] == nlohmann::json{"<GS>", "</GS>"});

  fail_first = 5;
  CHECK_THROWS_AS(generate_summary(client, "j4", input, Approach::model_plain, params, {}, kWords, fast),
                  ServiceError);
  stub.stop();
}

TEST_CASE("summary record json round trip") {
  SummaryRecord r;
  r.judgment_id = "x";
  r.approach = Approach::model_enriched;
  r.text = "t";
  r.token_count = 1;
  r.sentence_count = 1;
  r.generation = GenerationParams{750, "greedy", "ep"};
  r.failure = "boom";
  nlohmann::json j = r;
  CHECK(summary_from_json(j) == r);
}

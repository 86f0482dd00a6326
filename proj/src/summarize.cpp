#include "leitsatz/summarize.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <thread>

#include "leitsatz/utf8.hpp"

namespace leitsatz::summarize {

using nlohmann::json;

std::string_view to_string(Approach approach) {
  switch (approach) {
    case Approach::lexrank: return "lexrank";
    case Approach::model_plain: return "model_plain";
    case Approach::model_enriched: return "model_enriched";
    case Approach::gold: return "gold";
  }
  return "?";
}

Approach approach_from_string(std::string_view name) {
  for (auto a : {Approach::lexrank, Approach::model_plain, Approach::model_enriched, Approach::gold}) {
    if (to_string(a) == name) return a;
  }
  throw ConfigError("unknown approach \"" + std::string(name) + "\"");
}

void to_json(json& j, const SummaryRecord& r) {
  j = json{{"judgment_id", r.judgment_id},
           {"approach", to_string(r.approach)},
           {"text", r.text},
           {"token_count", r.token_count},
           {"sentence_count", r.sentence_count},
           {"empty", r.empty}};
  if (r.generation) {
    j["generation_params"] = {{"max_new_tokens", r.generation->max_new_tokens},
                              {"decoding", r.generation->decoding},
                              {"endpoint", r.generation->endpoint_id}};
  }
  if (r.failure) j["failure"] = *r.failure;
}

SummaryRecord summary_from_json(const json& j) {
  try {
    SummaryRecord r;
    r.judgment_id = j.at("judgment_id").get<std::string>();
    r.approach = approach_from_string(j.at("approach").get<std::string>());
    r.text = j.at("text").get<std::string>();
    r.token_count = j.value("token_count", std::size_t{0});
    r.sentence_count = j.value("sentence_count", std::size_t{0});
    r.empty = j.value("empty", false);
    if (const auto g = j.find("generation_params"); g != j.end()) {
      r.generation = GenerationParams{g->at("max_new_tokens").get<std::size_t>(),
                                      g->at("decoding").get<std::string>(),
                                      g->value("endpoint", std::string{})};
    }
    if (const auto f = j.find("failure"); f != j.end()) r.failure = f->get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed summary record: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("malformed summary record: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

SquareMatrix similarity_matrix(const std::vector<std::string>& sentences) {
  const std::size_t n = sentences.size();
  std::vector<std::map<std::string, double>> tf(n);
  std::map<std::string, std::size_t> df;
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& t : textproc::words(sentences[i])) {
      if (textproc::is_word_token(t)) tf[i][std::move(t)] += 1.0;
    }
    for (const auto& [term, _] : tf[i]) ++df[term];
  }

  std::vector<std::map<std::string, double>> tfidf(n);
  std::vector<double> norm(n, 0.0);
  std::vector<double> tf_norm(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& [term, f] : tf[i]) {
      const double w = f * std::log(static_cast<double>(n) / static_cast<double>(df[term]));
      tfidf[i][term] = w;
      norm[i] += w * w;
      tf_norm[i] += f * f;
    }
    norm[i] = std::sqrt(norm[i]);
    tf_norm[i] = std::sqrt(tf_norm[i]);
  }

  auto dot = [](const std::map<std::string, double>& a, const std::map<std::string, double>& b) {
    double s = 0.0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
      if (ia->first < ib->first) {
        ++ia;
      } else if (ib->first < ia->first) {
        ++ib;
      } else {
        s += ia->second * ib->second;
        ++ia;
        ++ib;
      }
    }
    return s;
  };

  SquareMatrix sim(n);
  for (std::size_t i = 0; i < n; ++i) {
    sim(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      double v = 0.0;
      if (norm[i] > 0.0 && norm[j] > 0.0) {
        v = dot(tfidf[i], tfidf[j]) / (norm[i] * norm[j]);
      } else if (tf_norm[i] > 0.0 && tf_norm[j] > 0.0) {
        v = dot(tf[i], tf[j]) / (tf_norm[i] * tf_norm[j]);
      }
      v = std::clamp(v, 0.0, 1.0);
      sim(i, j) = v;
      sim(j, i) = v;
    }
  }
  return sim;
}

SquareMatrix similarity_matrix(const textproc::SentenceList& sentences) {
  std::vector<std::string> texts;
  texts.reserve(sentences.size());
  for (const auto& s : sentences) texts.push_back(s.text);
  return similarity_matrix(texts);
}

SquareMatrix transition_matrix(const SquareMatrix& similarity, double threshold) {
  const std::size_t n = similarity.size();
  SquareMatrix m(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t degree = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j && similarity(i, j) >= threshold) {
        m(i, j) = 1.0;
        ++degree;
      }
    }
    if (degree == 0) {
      for (std::size_t j = 0; j < n; ++j) m(i, j) = 1.0 / static_cast<double>(n);
    } else {
      for (std::size_t j = 0; j < n; ++j) m(i, j) /= static_cast<double>(degree);
    }
  }
  return m;
}

CentralityVector power_iteration(const SquareMatrix& transition, double damping, double tol,
                                 std::size_t max_iters) {
  const std::size_t n = transition.size();
  if (n == 0) throw ConfigError("power iteration needs a non-empty matrix");
  if (!(damping > 0.0 && damping < 1.0)) throw ConfigError("damping must lie in (0, 1)");
  if (!(tol > 0.0)) throw ConfigError("tolerance must be positive");

  const double teleport = (1.0 - damping) / static_cast<double>(n);
  std::vector<double> x(n, 1.0 / static_cast<double>(n));
  std::vector<double> next(n);
  double residual = 0.0;
  for (std::size_t iter = 1; iter <= max_iters; ++iter) {
    std::fill(next.begin(), next.end(), teleport);
    for (std::size_t i = 0; i < n; ++i) {
      const double xi = damping * x[i];
      for (std::size_t j = 0; j < n; ++j) next[j] += xi * transition(i, j);
    }
    // Renormalise against rounding drift.
    double sum = 0.0;
    for (double v : next) sum += v;
    residual = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      next[j] /= sum;
      residual = std::max(residual, std::abs(next[j] - x[j]));
    }
    x.swap(next);
    if (residual < tol) return {std::move(x), iter, residual};
  }
  throw ConvergenceError("power iteration did not converge after " + std::to_string(max_iters) +
                             " iterations (residual " + std::to_string(residual) + ")",
                         residual);
}

std::vector<std::size_t> select_top(const std::vector<double>& scores, std::size_t k) {
  constexpr double kTie = 1e-9;
  std::vector<bool> taken(scores.size(), false);
  std::vector<std::size_t> out;
  for (std::size_t round = 0; round < std::min(k, scores.size()); ++round) {
    std::size_t best = scores.size();
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (taken[i]) continue;
      if (best == scores.size() || scores[i] > scores[best] + kTie) best = i;
    }
    taken[best] = true;
    out.push_back(best);
  }
  std::sort(out.begin(), out.end());
  return out;
}

LexRankResult lexrank(const textproc::SentenceList& sentences, const LexRankParams& params) {
  if (params.k == 0) throw ConfigError("summary length k must be at least 1");
  if (sentences.empty()) throw DataError("cannot summarise a document without sentences");
  LexRankResult result;
  result.sentences = sentences;
  const auto transition = transition_matrix(similarity_matrix(sentences), params.threshold);
  result.centrality = power_iteration(transition, params.damping, params.tol, params.max_iters);
  result.selected = select_top(result.centrality.scores, params.k);
  return result;
}

SummaryRecord lexrank_summary(std::string judgment_id, std::string_view text,
                              const LexRankParams& params, const textproc::TokenCounter& counter,
                              const textproc::AbbreviationList& abbreviations) {
  if (params.k == 0) throw ConfigError("summary length k must be at least 1");
  const auto sentences = textproc::split_sentences(text, abbreviations);
  if (sentences.empty())
    throw DataError("judgment " + judgment_id + ": cannot summarise an empty document");
  const auto result = lexrank(sentences, params);

  SummaryRecord r;
  r.judgment_id = std::move(judgment_id);
  r.approach = Approach::lexrank;
  for (auto idx : result.selected) {
    if (!r.text.empty()) r.text += ' ';
    r.text += sentences[idx].text;
  }
  r.sentence_count = result.selected.size();
  r.token_count = textproc::count_tokens(r.text, counter);
  return r;
}

// ---------------------------------------------------------------------------

std::string truncate_to_budget(std::string_view text, std::size_t context_window,
                               std::size_t generation_budget, const textproc::TokenCounter& counter,
                               std::size_t prompt_overhead) {
  if (generation_budget >= context_window)
    throw ConfigError("generation budget must be smaller than the context window");
  if (generation_budget + prompt_overhead >= context_window)
    throw ConfigError("prompt overhead leaves no room for input in the context window");
  const std::size_t limit = context_window - generation_budget - prompt_overhead;
  if (textproc::count_tokens(text, counter) <= limit) return std::string(text);

  const auto stream = textproc::tokenize(text);
  auto prefix = [&](std::size_t m) {
    return m == 0 ? std::string_view{} : text.substr(0, stream.offsets[m - 1].second);
  };
  // Largest m with count(prefix(m)) <= limit.
  std::size_t lo = 0;
  std::size_t hi = stream.size();
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo + 1) / 2;
    if (textproc::count_tokens(prefix(mid), counter) <= limit) {
      lo = mid;
    } else {
      hi = mid - 1;
    }
  }
  return std::string(prefix(lo));
}

json GenerationRequest::to_json() const {
  return {{"input", input},
          {"max_new_tokens", max_new_tokens},
          {"decoding", decoding},
          {"special_tokens", special_tokens}};
}

std::string HttpGenerationClient::generate(const GenerationRequest& request) {
  const auto reply = post_json(endpoint_, "/generate", request.to_json());
  const auto text = reply.find("text");
  if (text == reply.end() || !text->is_string())
    throw ServiceError("generation endpoint reply lacks a \"text\" string", false);
  return text->get<std::string>();
}

SummaryRecord generate_summary(GenerationClient& client, std::string judgment_id,
                               const std::string& input_text, Approach approach,
                               const GenerationParams& params,
                               const std::vector<std::string>& special_tokens,
                               const textproc::TokenCounter& counter, const RetryPolicy& retry) {
  if (params.decoding != "greedy") throw ConfigError("only greedy decoding is supported");

  GenerationRequest request{input_text, params.max_new_tokens, params.decoding, special_tokens};
  SummaryRecord r;
  r.judgment_id = std::move(judgment_id);
  r.approach = approach;
  r.generation = params;
  if (r.generation->endpoint_id.empty()) r.generation->endpoint_id = client.id();

  auto delay = retry.initial_delay;
  for (int attempt = 1;; ++attempt) {
    try {
      r.text = client.generate(request);
      break;
    } catch (const ServiceError& e) {
      if (!e.retryable()) {
        r.failure = e.what();
        r.empty = true;
        return r;
      }
      if (attempt >= retry.attempts) throw;
      std::this_thread::sleep_for(delay);
      delay = std::chrono::milliseconds(
          static_cast<long long>(static_cast<double>(delay.count()) * retry.multiplier));
    }
  }
  r.empty = utf8::trim(r.text).empty();
  r.token_count = textproc::count_tokens(r.text, counter);
  r.sentence_count = textproc::split_sentences(r.text).size();
  return r;
}

}  // namespace leitsatz::summarize

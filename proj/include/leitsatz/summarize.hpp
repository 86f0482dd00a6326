#pragma once

#include <chrono>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "leitsatz/error.hpp"
#include "leitsatz/http.hpp"
#include "leitsatz/textproc.hpp"

namespace leitsatz::summarize {

enum class Approach { lexrank, model_plain, model_enriched, gold };

std::string_view to_string(Approach approach);
/// Throws ConfigError for unknown names.
Approach approach_from_string(std::string_view name);

struct GenerationParams {
  std::size_t max_new_tokens = 750;
  std::string decoding = "greedy";
  std::string endpoint_id;

  bool operator==(const GenerationParams&) const = default;
};

struct SummaryRecord {
  std::string judgment_id;
  Approach approach = Approach::lexrank;
  std::string text;
  std::size_t token_count = 0;
  std::size_t sentence_count = 0;
  std::optional<GenerationParams> generation;
  bool empty = false;                   // generator returned no text
  std::optional<std::string> failure;   // non-retryable generation error

  bool operator==(const SummaryRecord&) const = default;
};

void to_json(nlohmann::json& j, const SummaryRecord& record);
SummaryRecord summary_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// LexRank

/// Dense row-major square matrix.
class SquareMatrix {
 public:
  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t n, double fill = 0.0) : n_(n), data_(n * n, fill) {}

  std::size_t size() const { return n_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

/// Cosine similarity of per-sentence TF-IDF vectors over word tokens
/// (punctuation ignored), idf = ln(N / df) over the given sentences.
/// Diagonal is 1. When a sentence's TF-IDF vector vanishes because all of
/// its terms occur in every sentence, the pair falls back to raw term
/// frequency cosine, so identical sentences still score 1.
SquareMatrix similarity_matrix(const std::vector<std::string>& sentences);
SquareMatrix similarity_matrix(const textproc::SentenceList& sentences);

/// Binary adjacency of off-diagonal similarities >= threshold, rows
/// normalised to sum 1; a row without edges becomes uniform.
SquareMatrix transition_matrix(const SquareMatrix& similarity, double threshold);

struct CentralityVector {
  std::vector<double> scores;
  std::size_t iterations = 0;
  double residual = 0.0;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual) : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// Iterates x <- d * M^T x + (1 - d) / N from the uniform vector until the
/// L-infinity change drops below `tol`. Throws ConvergenceError after
/// `max_iters` iterations and ConfigError for bad arguments.
CentralityVector power_iteration(const SquareMatrix& transition, double damping,
                                 double tol = 1e-10, std::size_t max_iters = 200);

struct LexRankParams {
  std::size_t k = 2;
  double threshold = 0.1;
  double damping = 0.85;
  double tol = 1e-10;
  std::size_t max_iters = 200;
};

/// Indices of the k highest scores, returned in ascending (document) order.
/// Scores within 1e-9 of each other count as tied and the earlier index wins.
std::vector<std::size_t> select_top(const std::vector<double>& scores, std::size_t k);

struct LexRankResult {
  textproc::SentenceList sentences;
  CentralityVector centrality;
  std::vector<std::size_t> selected;  // document order
};

LexRankResult lexrank(const textproc::SentenceList& sentences, const LexRankParams& params = {});

/// Extractive summary of the top-k central sentences in document order,
/// joined by single spaces. Throws ConfigError for k == 0 and DataError for
/// a document without sentences.
SummaryRecord lexrank_summary(std::string judgment_id, std::string_view text,
                              const LexRankParams& params, const textproc::TokenCounter& counter,
                              const textproc::AbbreviationList& abbreviations =
                                  textproc::AbbreviationList::defaults());

// ---------------------------------------------------------------------------
// Generation

/// Longest prefix, cut at word-token boundaries, whose count is at most
/// context_window - generation_budget - prompt_overhead. Text already within
/// budget is returned unchanged.
std::string truncate_to_budget(std::string_view text, std::size_t context_window,
                               std::size_t generation_budget, const textproc::TokenCounter& counter,
                               std::size_t prompt_overhead = 64);

struct GenerationRequest {
  std::string input;
  std::size_t max_new_tokens = 750;
  std::string decoding = "greedy";
  std::vector<std::string> special_tokens;

  nlohmann::json to_json() const;
};

class GenerationClient {
 public:
  virtual ~GenerationClient() = default;
  /// Returns the generated text; throws ServiceError on failure.
  virtual std::string generate(const GenerationRequest& request) = 0;
  virtual std::string id() const = 0;
};

/// POST /generate {"input","max_new_tokens","decoding","special_tokens"} -> {"text"}.
class HttpGenerationClient final : public GenerationClient {
 public:
  HttpGenerationClient(Endpoint endpoint, std::string id)
      : endpoint_(std::move(endpoint)), id_(std::move(id)) {}

  std::string generate(const GenerationRequest& request) override;
  std::string id() const override { return id_; }

 private:
  Endpoint endpoint_;
  std::string id_;
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_delay{500};
  double multiplier = 2.0;
};

/// Calls the generator once per attempt; retryable ServiceErrors back off
/// exponentially and are rethrown after the last attempt. Non-retryable
/// errors are recorded in SummaryRecord::failure. Empty generations are kept
/// with `empty` set.
SummaryRecord generate_summary(GenerationClient& client, std::string judgment_id,
                               const std::string& input_text, Approach approach,
                               const GenerationParams& params,
                               const std::vector<std::string>& special_tokens,
                               const textproc::TokenCounter& counter,
                               const RetryPolicy& retry = {});

}  // namespace leitsatz::summarize

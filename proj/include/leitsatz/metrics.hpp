#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "leitsatz/http.hpp"
#include "leitsatz/stats.hpp"
#include "leitsatz/summarize.hpp"

namespace leitsatz::metrics {

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  /// f1 is the harmonic mean, 0 when precision + recall is 0.
  static PRF from(double precision, double recall);
};

/// Clipped n-gram overlap: sum over n-gram types of min(count in candidate,
/// count in reference). Empty denominators give 0 for that component.
PRF rouge_n(const std::vector<std::string>& candidate, const std::vector<std::string>& reference,
            std::size_t n);

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// Summary-level ROUGE-L: one LCS over the whole token sequences.
PRF rouge_l(const std::vector<std::string>& candidate, const std::vector<std::string>& reference);

using Embedding = std::vector<double>;
using EmbeddingSeq = std::vector<Embedding>;

struct BertScoreOptions {
  /// Optional per-token importance weights (e.g. idf); empty = uniform.
  std::span<const double> candidate_weights;
  std::span<const double> reference_weights;
  /// When set, scores are rescaled as (x - b) / (1 - b).
  std::optional<double> baseline;
};

/// Greedy matching: recall averages, over reference tokens, the best cosine
/// against any candidate token; precision is the mirror image. Vectors whose
/// norm deviates from 1 by more than 1e-6 are normalised first. Throws
/// DataError for empty inputs, zero vectors or mismatched dimensions.
PRF bertscore(const EmbeddingSeq& candidate, const EmbeddingSeq& reference,
              const BertScoreOptions& options = {});

// ---------------------------------------------------------------------------
// Embedding providers

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  /// One token-embedding sequence per text.
  virtual std::vector<EmbeddingSeq> embed(const std::vector<std::string>& texts) = 0;
};

/// POST /embed {"texts":[...]} -> {"embeddings":[[[f,...],...],...]}.
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(Endpoint endpoint) : endpoint_(std::move(endpoint)) {}
  std::vector<EmbeddingSeq> embed(const std::vector<std::string>& texts) override;

 private:
  Endpoint endpoint_;
};

/// Precomputed embeddings: JSONL lines {"hash": sha256-hex of the UTF-8
/// text, "embeddings": [[f,...],...]}.
class FileEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit FileEmbeddingProvider(const std::filesystem::path& path);
  std::vector<EmbeddingSeq> embed(const std::vector<std::string>& texts) override;
  std::size_t size() const { return table_.size(); }

 private:
  std::unordered_map<std::string, EmbeddingSeq> table_;
};

/// Offline stand-in: one pseudo-random unit vector per word token, seeded by
/// the token string. Equal tokens embed identically, so it behaves like a
/// soft unigram matcher. Meant for tests and dry runs, not for reporting.
class HashingEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HashingEmbeddingProvider(std::size_t dim = 64) : dim_(dim) {}
  std::vector<EmbeddingSeq> embed(const std::vector<std::string>& texts) override;

 private:
  std::size_t dim_;
};

// ---------------------------------------------------------------------------
// Corpus scoring

enum class Metric { rouge1, rouge2, rougeL, bertscore };

std::string_view to_string(Metric metric);
Metric metric_from_string(std::string_view name);

struct MetricsConfig {
  bool rouge1 = true;
  bool rouge2 = true;
  bool rougeL = true;
  bool bertscore = false;
  EmbeddingProvider* embeddings = nullptr;  // required when bertscore is on
  /// IDF weights from the gold texts, idf = ln((M + 1) / (df + 1)); needs a
  /// provider that emits one vector per word token.
  bool bertscore_idf = false;
  std::optional<double> bertscore_baseline;
  std::size_t workers = 0;

  std::vector<Metric> enabled() const;
};

struct ScoreRow {
  std::string judgment_id;
  summarize::Approach approach;
  Metric metric;
  PRF score;
};

struct CorpusRow {
  Metric metric;
  summarize::Approach approach;
  DescriptiveStats f1;
};

struct MetricReport {
  std::vector<ScoreRow> per_summary;      // by judgment id, approach, metric
  std::vector<CorpusRow> corpus;          // by metric, then approach
  std::vector<std::string> excluded_ids;  // judgments with an empty or missing gold
};

/// Scores every summary against its judgment's gold text. Empty candidates
/// score 0 on every metric. Throws DataError when nothing is scoreable.
MetricReport score_corpus(const std::vector<summarize::SummaryRecord>& summaries,
                          const std::map<std::string, std::string>& golds,
                          const MetricsConfig& config);

/// Corpus min/mean/max/std of F per (metric, approach), from per-summary rows.
std::vector<CorpusRow> aggregate(const std::vector<ScoreRow>& rows);

/// "metric,approach,min,mean,max,std"
void write_corpus_csv(std::ostream& out, const MetricReport& report);
/// "judgment_id,approach,metric,precision,recall,f1"
void write_per_summary_csv(std::ostream& out, const MetricReport& report);
nlohmann::json to_json(const MetricReport& report);
MetricReport report_from_json(const nlohmann::json& j);

}  // namespace leitsatz::metrics

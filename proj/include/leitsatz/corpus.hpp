#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "leitsatz/error.hpp"
#include "leitsatz/stats.hpp"
#include "leitsatz/textproc.hpp"

namespace leitsatz::corpus {

struct Subsection {
  std::string label;
  std::string body;

  bool operator==(const Subsection&) const = default;
};

struct Section {
  std::string heading;
  std::string body;
  std::vector<Subsection> subsections;

  bool operator==(const Section&) const = default;
};

/// One court decision.
struct Judgment {
  std::string id;
  std::string date;   // ISO-8601
  std::string court;
  std::vector<Section> sections;
  std::string guiding_principles;  // gold summary, may be empty

  bool operator==(const Judgment&) const = default;
};

void to_json(nlohmann::json& j, const Judgment& judgment);
/// Throws DataError naming the offending field.
Judgment judgment_from_json(const nlohmann::json& j);

/// Checks the Judgment invariants (non-empty id, at least one section,
/// non-empty headings, unique subsection labels per section).
void validate(const Judgment& judgment);

/// Ingestion problem tied to a file and line.
struct RecordError {
  std::string file;
  std::size_t line = 0;  // 1-based, 0 for whole-file errors
  std::string message;
};

/// Judgments in ingestion order with an id index. Read-only after
/// construction, so it may be shared across threads.
class CorpusStore {
 public:
  CorpusStore() = default;
  /// Throws DataError listing every duplicated id.
  explicit CorpusStore(std::vector<Judgment> judgments);

  const std::vector<Judgment>& judgments() const { return judgments_; }
  std::size_t size() const { return judgments_.size(); }
  bool empty() const { return judgments_.empty(); }
  const Judgment* find(std::string_view id) const;
  const Judgment& at(std::string_view id) const;

  /// Canonical JSONL: one judgment per line, keys sorted.
  void export_jsonl(std::ostream& out) const;
  void export_jsonl(const std::filesystem::path& path) const;

 private:
  std::vector<Judgment> judgments_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class InputFormat { jsonl, xml_dir };

/// Thrown when records are malformed; carries every per-record error.
class IngestError : public DataError {
 public:
  IngestError(const std::string& what, std::vector<RecordError> errors)
      : DataError(what), errors_(std::move(errors)) {}
  const std::vector<RecordError>& errors() const { return errors_; }

 private:
  std::vector<RecordError> errors_;
};

/// Reads a JSONL file or a directory of *.xml judgment files. Malformed
/// records raise IngestError with positions; duplicate ids raise DataError
/// naming the offenders.
CorpusStore ingest(const std::filesystem::path& path, InputFormat format);
CorpusStore ingest_jsonl(std::istream& in, const std::string& source_name = "<stream>");
Judgment parse_judgment_xml(std::istream& in, const std::string& source_name = "<stream>");

// ---------------------------------------------------------------------------
// Reasons extraction

/// Which section holds the reasons for the decision. The heading is compared
/// case-insensitively with all whitespace removed, so spaced-out headings
/// ("E n t s c h e i d u n g s g r ü n d e") and trailing colons match.
struct ReasonsConfig {
  std::string heading = "Entscheidungsgründe";
  std::string excluded_label = "I";
};

class MissingReasonsError : public DataError {
 public:
  using DataError::DataError;
};

/// Bodies of every subsection of the reasons section except subsection "I",
/// joined with a blank line; the whole body when there are no subsections.
/// Throws MissingReasonsError when no section matches.
std::string extract_reasons(const Judgment& judgment, const ReasonsConfig& config = {});

/// Whether a subsection label denotes the excluded subsection (label equals
/// `excluded` after trimming surrounding punctuation and whitespace).
bool is_excluded_label(std::string_view label, std::string_view excluded = "I");

struct SkipEntry {
  std::string id;
  std::string reason;
};

struct ReasonsBatch {
  std::vector<std::pair<std::string, std::string>> reasons;  // (id, text) in store order
  std::vector<SkipEntry> skipped;
};

/// Batch mode: judgments without a reasons section are skipped and reported.
ReasonsBatch extract_all_reasons(const CorpusStore& store, const ReasonsConfig& config = {});

nlohmann::json skip_report_json(const std::vector<SkipEntry>& skipped);

// ---------------------------------------------------------------------------
// Splits

enum class Split { train, valid, test };

std::string_view to_string(Split split);

struct SplitAssignment {
  Split split;
  std::vector<std::string> judgment_ids;  // sorted
};

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

/// Part sizes: floor of N * ratio, remainder handed out by largest
/// fractional part, ties to the earlier part (train, valid, test).
std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatios& ratios);

/// Seeded random partition. Ratios must be positive and sum to 1 (1e-9).
/// Ids are sorted before shuffling, so the result depends only on the id set
/// and the seed. Throws ConfigError on bad ratios or an empty store.
std::array<SplitAssignment, 3> split_corpus(const CorpusStore& store, const SplitRatios& ratios,
                                            std::uint64_t seed);

nlohmann::json splits_to_json(const std::array<SplitAssignment, 3>& splits, std::uint64_t seed);
std::array<SplitAssignment, 3> splits_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Length statistics

DescriptiveStats length_stats(const std::vector<std::string>& texts,
                              const textproc::TokenCounter& counter);

/// One row per split of the corpus-length table: all, train, valid, test.
struct LengthTableRow {
  std::string label;
  std::optional<DescriptiveStats> stats;  // empty when the split has no text
};

std::vector<LengthTableRow> length_table(
    const std::vector<std::pair<std::string, std::string>>& texts_by_id,
    const std::array<SplitAssignment, 3>& splits, const textproc::TokenCounter& counter);

/// CSV with header "set,min,mean,max,std".
void write_length_table_csv(std::ostream& out, const std::vector<LengthTableRow>& rows);

// ---------------------------------------------------------------------------
// Gold outliers

struct TrainingPair {
  std::string id;
  std::string reasons;
  std::string gold;
};

struct ExclusionReport {
  std::size_t max_gold_tokens = 0;
  std::size_t retained = 0;
  std::vector<std::pair<std::string, std::size_t>> excluded;  // (id, gold token count)
};

struct FilterResult {
  std::vector<TrainingPair> retained;
  ExclusionReport report;
};

/// Drops pairs whose gold exceeds `max_gold_tokens`. Throws ConfigError when
/// the threshold is zero.
FilterResult filter_gold_outliers(std::vector<TrainingPair> pairs, std::size_t max_gold_tokens,
                                  const textproc::TokenCounter& counter);

nlohmann::json exclusion_report_json(const ExclusionReport& report);

}  // namespace leitsatz::corpus

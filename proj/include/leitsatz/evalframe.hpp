#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "leitsatz/error.hpp"
#include "leitsatz/metrics.hpp"

namespace leitsatz::evalframe {

inline constexpr std::size_t kClassCount = 7;

struct EvalClass {
  int index;
  std::string_view aspect;
  std::string_view description;
};

/// The seven binary evaluation classes, in order.
const std::array<EvalClass, kClassCount>& evaluation_classes();

/// A summary under review: which judgment and which approach produced it.
struct SummaryRef {
  std::string judgment_id;
  std::string approach;

  auto operator<=>(const SummaryRef&) const = default;
  bool operator==(const SummaryRef&) const = default;
};

using Decisions = std::array<bool, kClassCount>;

/// One reviewer's decisions for one summary. Class 7 (superiority) requires
/// a written reasoning.
struct ClassVerdict {
  std::string reviewer_id;
  SummaryRef summary;
  Decisions decisions{};
  std::string reasoning;
  std::optional<std::string> comment;
  std::string timestamp;

  bool operator==(const ClassVerdict&) const = default;
};

class ValidationError : public DataError {
 public:
  using DataError::DataError;
};

class DuplicateVerdictError : public DataError {
 public:
  using DataError::DataError;
};

/// Throws ValidationError when class 7 is set without reasoning or ids are empty.
void validate(const ClassVerdict& verdict);

nlohmann::json to_json(const ClassVerdict& verdict);
ClassVerdict verdict_from_json(const nlohmann::json& j);

/// Verdicts keyed by (reviewer, summary). Submitted verdicts are immutable;
/// a correction supersedes the current verdict and the old one moves to the
/// audit history. Concurrent readers, serialised writers.
class VerdictStore {
 public:
  VerdictStore() = default;
  VerdictStore(const VerdictStore& other);
  VerdictStore& operator=(const VerdictStore& other);

  /// Throws ValidationError or DuplicateVerdictError.
  void add(ClassVerdict verdict);
  /// Throws DataError when there is nothing to supersede.
  void supersede(ClassVerdict verdict);

  bool contains(std::string_view reviewer, const SummaryRef& summary) const;
  std::size_t size() const;

  /// Current verdicts ordered by (reviewer, judgment, approach).
  std::vector<ClassVerdict> snapshot() const;
  std::vector<ClassVerdict> history() const;

  void export_jsonl(std::ostream& out) const;
  /// Reads verdict JSONL; throws DataError with line numbers.
  static VerdictStore import_jsonl(std::istream& in);

 private:
  using Key = std::pair<std::string, SummaryRef>;
  mutable std::shared_mutex mutex_;
  std::map<Key, ClassVerdict> current_;
  std::vector<ClassVerdict> history_;
};

// ---------------------------------------------------------------------------
// Assignment

struct Assignment {
  SummaryRef summary;
  std::vector<std::string> reviewer_ids;  // sorted
  std::uint64_t presentation_order_seed = 0;
};

/// Gives every summary `per_item` distinct reviewers. All summaries of one
/// judgment share the same reviewers, and per-judgment loads differ by at
/// most one between reviewers (so summary loads are balanced to within one
/// when every judgment has the same number of summaries). Deterministic for
/// a seed. Throws ConfigError when there are fewer reviewers than per_item.
std::vector<Assignment> build_assignments(const std::vector<SummaryRef>& summaries,
                                          const std::vector<std::string>& reviewers,
                                          std::size_t per_item, std::uint64_t seed);

nlohmann::json to_json(const Assignment& assignment);
Assignment assignment_from_json(const nlohmann::json& j);

/// The reviewer's assigned summaries in their seeded presentation order.
std::vector<SummaryRef> presentation_order(const std::vector<Assignment>& assignments,
                                           const std::string& reviewer);

// ---------------------------------------------------------------------------
// Aggregation and agreement

/// Per class: fulfilled when a strict majority (2 of 3) of the verdicts say
/// so. Throws ConfigError when the verdict count differs from per_item.
Decisions majority_verdict(std::span<const ClassVerdict> verdicts, std::size_t per_item = 3);

struct FleissResult {
  double kappa = 0.0;
  double observed = 0.0;  // mean per-unit agreement
  double expected = 0.0;  // chance agreement
  std::size_t units = 0;
};

/// Fleiss' kappa over units given as per-category rating counts. Every unit
/// must carry exactly `raters` ratings (>= 2). When chance agreement is 1 the
/// kappa is defined as 1 (observed agreement is then 1 as well).
FleissResult fleiss_kappa(const std::vector<std::vector<std::size_t>>& units,
                          std::size_t categories, std::size_t raters);

/// Reviewer-by-reviewer agreement. The unit is one (summary, class) binary
/// decision rated by both reviewers, scored with Fleiss' kappa for two
/// raters (Scott's pi). Pairs without shared units have no entry.
struct PairwiseKappa {
  std::vector<std::string> reviewers;
  std::vector<std::vector<std::optional<double>>> matrix;  // diagonal 1
  std::vector<std::vector<std::size_t>> shared_units;
  std::vector<std::pair<std::string, std::string>> absent;

  std::optional<double> at(std::string_view a, std::string_view b) const;
  /// Mean of the defined off-diagonal entries (each pair once).
  std::optional<double> mean() const;
};

/// `only_class` (1..7) restricts the units to one class.
PairwiseKappa pairwise_kappa_matrix(const std::vector<ClassVerdict>& verdicts,
                                    std::optional<int> only_class = std::nullopt);

struct ClassAgreement {
  int class_index = 0;
  FleissResult fleiss;                  // summaries as units, per_item raters
  std::optional<double> pairwise_mean;  // mean of pairwise kappas on this class
  std::size_t fulfilled = 0;            // individual decisions
  std::size_t not_fulfilled = 0;
};

struct PerClassReport {
  std::size_t per_item = 3;
  std::size_t summaries = 0;                 // complete summaries used
  std::vector<SummaryRef> excluded;          // incomplete verdict sets
  std::vector<ClassAgreement> classes;
};

PerClassReport per_class_kappa(const std::vector<ClassVerdict>& verdicts, std::size_t per_item = 3);

struct FulfillmentRow {
  std::string approach;
  std::size_t judgments = 0;
  std::array<double, kClassCount> fraction{};
  double mean_classes = 0.0;
};

/// Per approach: share of summaries whose majority verdict fulfils each
/// class, and the mean number of majority-fulfilled classes. Summaries with
/// an incomplete verdict set are skipped.
std::vector<FulfillmentRow> fulfillment_report(const std::vector<ClassVerdict>& verdicts,
                                               std::size_t per_item = 3);

// ---------------------------------------------------------------------------
// Correlation

/// Average ranks (1-based); ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

/// Spearman's rho as the Pearson correlation of average ranks. Throws
/// ConfigError for length mismatch or fewer than 3 values; empty when either
/// side is constant.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

/// Landis-Koch band of a kappa in [-1, 1].
std::string interpret_kappa(double kappa);
/// Cohen band of |rho| for rho in [-1, 1].
std::string interpret_rho(double rho);

struct CorrelationRow {
  std::string metric;
  std::string component;  // "recall" or "precision"
  int class_index = 0;
  std::size_t n = 0;
  std::optional<double> rho;
  std::string strength;  // empty when rho is undefined
};

/// Recall against classes 4 and 5 and precision against class 3, for every
/// metric in the report, over summaries with a complete verdict set.
std::vector<CorrelationRow> metric_class_correlations(const metrics::MetricReport& report,
                                                      const std::vector<ClassVerdict>& verdicts,
                                                      std::size_t per_item = 3);

// ---------------------------------------------------------------------------
// Report writers

void write_pairwise_csv(std::ostream& out, const PairwiseKappa& pairwise);
void write_per_class_csv(std::ostream& out, const PerClassReport& report);
void write_fulfillment_csv(std::ostream& out, const std::vector<FulfillmentRow>& rows);
void write_correlations_csv(std::ostream& out, const std::vector<CorrelationRow>& rows);

}  // namespace leitsatz::evalframe

#include "leitsatz/evalframe.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "leitsatz/random.hpp"
#include "leitsatz/utf8.hpp"

namespace leitsatz::evalframe {

using nlohmann::json;

const std::array<EvalClass, kClassCount>& evaluation_classes() {
  static const std::array<EvalClass, kClassCount> classes{{
      {1, "Intelligibility", "The text can be understood"},
      {2, "Language", "Grammar, spelling and style are sound"},
      {3, "Pertinence", "Nothing beyond what the gold needs"},
      {4, "Completeness", "Every legal aspect of the gold is covered"},
      {5, "Main Focus", "At least three quarters of the aspects are covered"},
      {6, "Correctness", "The legal statements contain no error"},
      {7, "Superiority", "Better than the gold (reasoning required)"},
  }};
  return classes;
}

void validate(const ClassVerdict& v) {
  if (v.reviewer_id.empty()) throw ValidationError("verdict lacks a reviewer id");
  if (v.summary.judgment_id.empty()) throw ValidationError("verdict lacks a judgment id");
  if (v.decisions[6] && utf8::trim(v.reasoning).empty())
    throw ValidationError("class 7 (superiority) requires a written reasoning");
}

json to_json(const ClassVerdict& v) {
  json j{{"reviewer", v.reviewer_id},
         {"judgment_id", v.summary.judgment_id},
         {"approach", v.summary.approach},
         {"decisions", v.decisions},
         {"reasoning", v.reasoning},
         {"comment", nullptr},
         {"ts", v.timestamp}};
  if (v.comment) j["comment"] = *v.comment;
  return j;
}

ClassVerdict verdict_from_json(const json& j) {
  ClassVerdict v;
  try {
    v.reviewer_id = j.at("reviewer").get<std::string>();
    v.summary.judgment_id = j.at("judgment_id").get<std::string>();
    v.summary.approach = j.at("approach").get<std::string>();
    const auto& d = j.at("decisions");
    if (!d.is_array() || d.size() != kClassCount)
      throw DataError("\"decisions\" must hold exactly 7 booleans");
    for (std::size_t i = 0; i < kClassCount; ++i) v.decisions[i] = d[i].get<bool>();
    v.reasoning = j.value("reasoning", std::string{});
    if (const auto c = j.find("comment"); c != j.end() && !c->is_null()) v.comment = c->get<std::string>();
    v.timestamp = j.value("ts", std::string{});
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed verdict: ") + e.what());
  }
  return v;
}

// ---------------------------------------------------------------------------

VerdictStore::VerdictStore(const VerdictStore& other) {
  std::shared_lock lock(other.mutex_);
  current_ = other.current_;
  history_ = other.history_;
}

VerdictStore& VerdictStore::operator=(const VerdictStore& other) {
  if (this == &other) return *this;
  std::unique_lock lock(mutex_, std::defer_lock);
  std::shared_lock other_lock(other.mutex_, std::defer_lock);
  std::lock(lock, other_lock);
  current_ = other.current_;
  history_ = other.history_;
  return *this;
}

void VerdictStore::add(ClassVerdict verdict) {
  validate(verdict);
  std::unique_lock lock(mutex_);
  Key key{verdict.reviewer_id, verdict.summary};
  if (current_.count(key))
    throw DuplicateVerdictError("reviewer " + verdict.reviewer_id + " already rated " +
                                verdict.summary.judgment_id + "/" + verdict.summary.approach);
  current_.emplace(std::move(key), std::move(verdict));
}

void VerdictStore::supersede(ClassVerdict verdict) {
  validate(verdict);
  std::unique_lock lock(mutex_);
  const auto it = current_.find(Key{verdict.reviewer_id, verdict.summary});
  if (it == current_.end()) throw DataError("no verdict to supersede");
  history_.push_back(std::move(it->second));
  it->second = std::move(verdict);
}

bool VerdictStore::contains(std::string_view reviewer, const SummaryRef& summary) const {
  std::shared_lock lock(mutex_);
  return current_.count(Key{std::string(reviewer), summary}) > 0;
}

std::size_t VerdictStore::size() const {
  std::shared_lock lock(mutex_);
  return current_.size();
}

std::vector<ClassVerdict> VerdictStore::snapshot() const {
  std::shared_lock lock(mutex_);
  std::vector<ClassVerdict> out;
  out.reserve(current_.size());
  for (const auto& [_, v] : current_) out.push_back(v);
  return out;
}

std::vector<ClassVerdict> VerdictStore::history() const {
  std::shared_lock lock(mutex_);
  return history_;
}

void VerdictStore::export_jsonl(std::ostream& out) const {
  for (const auto& v : snapshot()) out << to_json(v).dump() << '\n';
}

VerdictStore VerdictStore::import_jsonl(std::istream& in) {
  VerdictStore store;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (utf8::trim(line).empty()) continue;
    try {
      store.add(verdict_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw DataError("verdict line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("verdict line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return store;
}

// ---------------------------------------------------------------------------

std::vector<Assignment> build_assignments(const std::vector<SummaryRef>& summaries,
                                          const std::vector<std::string>& reviewers,
                                          std::size_t per_item, std::uint64_t seed) {
  if (per_item == 0) throw ConfigError("per_item must be at least 1");
  if (reviewers.size() < per_item)
    throw ConfigError("need at least " + std::to_string(per_item) + " reviewers, got " +
                      std::to_string(reviewers.size()));
  std::vector<std::string> pool(reviewers);
  std::sort(pool.begin(), pool.end());
  if (std::adjacent_find(pool.begin(), pool.end()) != pool.end())
    throw ConfigError("reviewer ids must be unique");

  std::map<std::string, std::vector<SummaryRef>> groups;
  for (const auto& s : summaries) groups[s.judgment_id].push_back(s);
  std::vector<std::string> order;
  for (const auto& [id, _] : groups) order.push_back(id);

  std::mt19937_64 rng(seed);
  seeded_shuffle(order, rng);

  std::vector<std::size_t> load(pool.size(), 0);
  std::vector<Assignment> out;
  out.reserve(summaries.size());
  for (const auto& judgment : order) {
    std::vector<std::pair<std::uint64_t, std::size_t>> tie_keys;
    for (std::size_t r = 0; r < pool.size(); ++r) tie_keys.emplace_back(rng(), r);
    std::sort(tie_keys.begin(), tie_keys.end(), [&](const auto& a, const auto& b) {
      if (load[a.second] != load[b.second]) return load[a.second] < load[b.second];
      return a < b;
    });
    std::vector<std::string> chosen;
    for (std::size_t k = 0; k < per_item; ++k) {
      ++load[tie_keys[k].second];
      chosen.push_back(pool[tie_keys[k].second]);
    }
    std::sort(chosen.begin(), chosen.end());
    for (const auto& s : groups[judgment]) out.push_back({s, chosen, seed});
  }
  std::sort(out.begin(), out.end(), [](const Assignment& a, const Assignment& b) { return a.summary < b.summary; });
  return out;
}

json to_json(const Assignment& a) {
  return {{"judgment_id", a.summary.judgment_id},
          {"approach", a.summary.approach},
          {"reviewers", a.reviewer_ids},
          {"seed", a.presentation_order_seed}};
}

Assignment assignment_from_json(const json& j) {
  try {
    return {{j.at("judgment_id").get<std::string>(), j.at("approach").get<std::string>()},
            j.at("reviewers").get<std::vector<std::string>>(),
            j.at("seed").get<std::uint64_t>()};
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed assignment: ") + e.what());
  }
}

std::vector<SummaryRef> presentation_order(const std::vector<Assignment>& assignments,
                                           const std::string& reviewer) {
  std::vector<SummaryRef> items;
  std::uint64_t seed = 0;
  for (const auto& a : assignments) {
    if (std::find(a.reviewer_ids.begin(), a.reviewer_ids.end(), reviewer) != a.reviewer_ids.end()) {
      items.push_back(a.summary);
      seed = a.presentation_order_seed;
    }
  }
  std::sort(items.begin(), items.end());
  std::mt19937_64 rng(mix_seed(seed, reviewer));
  seeded_shuffle(items, rng);
  return items;
}

// ---------------------------------------------------------------------------

Decisions majority_verdict(std::span<const ClassVerdict> verdicts, std::size_t per_item) {
  if (verdicts.size() != per_item)
    throw ConfigError("majority needs exactly " + std::to_string(per_item) + " verdicts, got " +
                      std::to_string(verdicts.size()));
  Decisions out{};
  for (std::size_t c = 0; c < kClassCount; ++c) {
    std::size_t yes = 0;
    for (const auto& v : verdicts) yes += v.decisions[c] ? 1 : 0;
    out[c] = 2 * yes > per_item;
  }
  return out;
}

FleissResult fleiss_kappa(const std::vector<std::vector<std::size_t>>& units, std::size_t categories,
                          std::size_t raters) {
  if (raters < 2) throw ConfigError("Fleiss' kappa needs at least two raters per unit");
  if (categories < 1) throw ConfigError("Fleiss' kappa needs at least one category");
  if (units.empty()) throw ConfigError("Fleiss' kappa needs at least one unit");

  const double n = static_cast<double>(raters);
  std::vector<double> totals(categories, 0.0);
  double observed_sum = 0.0;
  for (std::size_t i = 0; i < units.size(); ++i) {
    const auto& u = units[i];
    if (u.size() != categories)
      throw ConfigError("unit " + std::to_string(i) + " has " + std::to_string(u.size()) +
                        " categories, expected " + std::to_string(categories));
    std::size_t count = 0;
    double sq = 0.0;
    for (std::size_t j = 0; j < categories; ++j) {
      count += u[j];
      sq += static_cast<double>(u[j]) * static_cast<double>(u[j]);
      totals[j] += static_cast<double>(u[j]);
    }
    if (count != raters)
      throw ConfigError("unit " + std::to_string(i) + " has " + std::to_string(count) +
                        " ratings, expected " + std::to_string(raters));
    observed_sum += (sq - n) / (n * (n - 1.0));
  }
  FleissResult r;
  r.units = units.size();
  r.observed = observed_sum / static_cast<double>(units.size());
  const double all = static_cast<double>(units.size()) * n;
  for (double t : totals) r.expected += (t / all) * (t / all);
  if (1.0 - r.expected < 1e-15) {
    r.kappa = 1.0;
  } else {
    r.kappa = (r.observed - r.expected) / (1.0 - r.expected);
  }
  return r;
}

namespace {

using VerdictIndex = std::map<SummaryRef, std::map<std::string, const ClassVerdict*>>;

VerdictIndex index_by_summary(const std::vector<ClassVerdict>& verdicts) {
  VerdictIndex idx;
  for (const auto& v : verdicts) idx[v.summary][v.reviewer_id] = &v;
  return idx;
}

// Summaries with exactly per_item verdicts, and the rest.
std::pair<std::vector<std::vector<const ClassVerdict*>>, std::vector<SummaryRef>> complete_sets(
    const VerdictIndex& idx, std::size_t per_item) {
  std::vector<std::vector<const ClassVerdict*>> complete;
  std::vector<SummaryRef> excluded;
  for (const auto& [ref, by_reviewer] : idx) {
    if (by_reviewer.size() != per_item) {
      excluded.push_back(ref);
      continue;
    }
    std::vector<const ClassVerdict*> set;
    for (const auto& [_, v] : by_reviewer) set.push_back(v);
    complete.push_back(std::move(set));
  }
  return {std::move(complete), std::move(excluded)};
}

}  // namespace

std::optional<double> PairwiseKappa::at(std::string_view a, std::string_view b) const {
  const auto ia = std::find(reviewers.begin(), reviewers.end(), a);
  const auto ib = std::find(reviewers.begin(), reviewers.end(), b);
  if (ia == reviewers.end() || ib == reviewers.end()) return std::nullopt;
  return matrix[static_cast<std::size_t>(ia - reviewers.begin())][static_cast<std::size_t>(ib - reviewers.begin())];
}

std::optional<double> PairwiseKappa::mean() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < reviewers.size(); ++i) {
    for (std::size_t j = i + 1; j < reviewers.size(); ++j) {
      if (matrix[i][j]) {
        sum += *matrix[i][j];
        ++n;
      }
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

PairwiseKappa pairwise_kappa_matrix(const std::vector<ClassVerdict>& verdicts, std::optional<int> only_class) {
  if (only_class && (*only_class < 1 || *only_class > static_cast<int>(kClassCount)))
    throw ConfigError("class index must lie in 1..7");
  std::set<std::string> names;
  for (const auto& v : verdicts) names.insert(v.reviewer_id);
  PairwiseKappa out;
  out.reviewers.assign(names.begin(), names.end());
  const std::size_t r = out.reviewers.size();
  out.matrix.assign(r, std::vector<std::optional<double>>(r));
  out.shared_units.assign(r, std::vector<std::size_t>(r, 0));

  const auto idx = index_by_summary(verdicts);
  for (std::size_t a = 0; a < r; ++a) {
    out.matrix[a][a] = 1.0;
    for (std::size_t b = a + 1; b < r; ++b) {
      std::vector<std::vector<std::size_t>> units;
      for (const auto& [_, by_reviewer] : idx) {
        const auto va = by_reviewer.find(out.reviewers[a]);
        const auto vb = by_reviewer.find(out.reviewers[b]);
        if (va == by_reviewer.end() || vb == by_reviewer.end()) continue;
        for (std::size_t c = 0; c < kClassCount; ++c) {
          if (only_class && static_cast<int>(c) + 1 != *only_class) continue;
          const std::size_t yes = (va->second->decisions[c] ? 1 : 0) + (vb->second->decisions[c] ? 1 : 0);
          units.push_back({yes, 2 - yes});
        }
      }
      out.shared_units[a][b] = out.shared_units[b][a] = units.size();
      if (units.empty()) {
        out.absent.emplace_back(out.reviewers[a], out.reviewers[b]);
        continue;
      }
      const double k = fleiss_kappa(units, 2, 2).kappa;
      out.matrix[a][b] = out.matrix[b][a] = k;
    }
  }
  return out;
}

PerClassReport per_class_kappa(const std::vector<ClassVerdict>& verdicts, std::size_t per_item) {
  if (per_item < 2) throw ConfigError("per-class agreement needs at least two raters per summary");
  PerClassReport report;
  report.per_item = per_item;
  const auto [complete, excluded] = complete_sets(index_by_summary(verdicts), per_item);
  report.excluded = excluded;
  report.summaries = complete.size();

  std::vector<ClassVerdict> complete_verdicts;
  for (const auto& set : complete) {
    for (const auto* v : set) complete_verdicts.push_back(*v);
  }

  for (std::size_t c = 0; c < kClassCount; ++c) {
    ClassAgreement agreement;
    agreement.class_index = static_cast<int>(c) + 1;
    std::vector<std::vector<std::size_t>> units;
    for (const auto& set : complete) {
      std::size_t yes = 0;
      for (const auto* v : set) yes += v->decisions[c] ? 1 : 0;
      agreement.fulfilled += yes;
      agreement.not_fulfilled += per_item - yes;
      units.push_back({yes, per_item - yes});
    }
    if (!units.empty()) {
      agreement.fleiss = fleiss_kappa(units, 2, per_item);
      agreement.pairwise_mean = pairwise_kappa_matrix(complete_verdicts, agreement.class_index).mean();
    }
    report.classes.push_back(agreement);
  }
  return report;
}

std::vector<FulfillmentRow> fulfillment_report(const std::vector<ClassVerdict>& verdicts, std::size_t per_item) {
  const auto [complete, _] = complete_sets(index_by_summary(verdicts), per_item);
  std::map<std::string, FulfillmentRow> rows;
  std::map<std::string, std::array<std::size_t, kClassCount>> counts;
  std::map<std::string, std::size_t> fulfilled_total;
  for (const auto& set : complete) {
    std::vector<ClassVerdict> vs;
    for (const auto* v : set) vs.push_back(*v);
    const auto majority = majority_verdict(vs, per_item);
    const auto& approach = set.front()->summary.approach;
    auto& row = rows[approach];
    row.approach = approach;
    ++row.judgments;
    auto& cnt = counts[approach];
    for (std::size_t c = 0; c < kClassCount; ++c) {
      if (majority[c]) {
        ++cnt[c];
        ++fulfilled_total[approach];
      }
    }
  }
  std::vector<FulfillmentRow> out;
  for (auto& [approach, row] : rows) {
    const double n = static_cast<double>(row.judgments);
    for (std::size_t c = 0; c < kClassCount; ++c) row.fraction[c] = static_cast<double>(counts[approach][c]) / n;
    row.mean_classes = static_cast<double>(fulfilled_total[approach]) / n;
    out.push_back(row);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ConfigError("spearman needs equally long inputs");
  if (x.size() < 3) throw ConfigError("spearman needs at least 3 pairs");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(rx.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::string interpret_kappa(double kappa) {
  if (!(kappa >= -1.0 && kappa <= 1.0)) throw ConfigError("kappa must lie in [-1, 1]");
  if (kappa <= 0.0) return "poor";
  if (kappa <= 0.20) return "slight";
  if (kappa <= 0.40) return "fair";
  if (kappa <= 0.60) return "moderate";
  if (kappa <= 0.80) return "substantial";
  return "almost perfect";
}

std::string interpret_rho(double rho) {
  if (!(rho >= -1.0 && rho <= 1.0)) throw ConfigError("rho must lie in [-1, 1]");
  const double a = std::abs(rho);
  if (a < 0.10) return "negligible";
  if (a < 0.30) return "low";
  if (a < 0.50) return "medium";
  return "large";
}

std::vector<CorrelationRow> metric_class_correlations(const metrics::MetricReport& report,
                                                      const std::vector<ClassVerdict>& verdicts,
                                                      std::size_t per_item) {
  const auto idx = index_by_summary(verdicts);
  std::map<SummaryRef, Decisions> majority;
  for (const auto& [ref, by_reviewer] : idx) {
    if (by_reviewer.size() != per_item) continue;
    std::vector<ClassVerdict> vs;
    for (const auto& [_, v] : by_reviewer) vs.push_back(*v);
    majority[ref] = majority_verdict(vs, per_item);
  }

  struct Pairing {
    const char* component;
    int class_index;
  };
  static constexpr Pairing kPairings[] = {{"recall", 4}, {"recall", 5}, {"precision", 3}};

  std::vector<metrics::Metric> metric_order;
  for (const auto& r : report.per_summary) {
    if (std::find(metric_order.begin(), metric_order.end(), r.metric) == metric_order.end())
      metric_order.push_back(r.metric);
  }
  std::sort(metric_order.begin(), metric_order.end());

  std::vector<CorrelationRow> out;
  for (auto m : metric_order) {
    for (const auto& p : kPairings) {
      std::vector<double> xs;
      std::vector<double> ys;
      for (const auto& r : report.per_summary) {
        if (r.metric != m) continue;
        const auto it = majority.find({r.judgment_id, std::string(summarize::to_string(r.approach))});
        if (it == majority.end()) continue;
        xs.push_back(std::string_view(p.component) == "recall" ? r.score.recall : r.score.precision);
        ys.push_back(it->second[static_cast<std::size_t>(p.class_index - 1)] ? 1.0 : 0.0);
      }
      CorrelationRow row{std::string(metrics::to_string(m)), p.component, p.class_index, xs.size(), std::nullopt, ""};
      if (xs.size() >= 3) row.rho = spearman(xs, ys);
      if (row.rho) row.strength = interpret_rho(*row.rho);
      out.push_back(std::move(row));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::string fixed4(double v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << v;
  return os.str();
}

std::string optional4(const std::optional<double>& v) { return v ? fixed4(*v) : ""; }

}  // namespace

void write_pairwise_csv(std::ostream& out, const PairwiseKappa& p) {
  out << "reviewer";
  for (const auto& r : p.reviewers) out << ',' << r;
  out << '\n';
  for (std::size_t i = 0; i < p.reviewers.size(); ++i) {
    out << p.reviewers[i];
    for (std::size_t j = 0; j < p.reviewers.size(); ++j) out << ',' << optional4(p.matrix[i][j]);
    out << '\n';
  }
}

void write_per_class_csv(std::ostream& out, const PerClassReport& report) {
  out << "class,fleiss_kappa,pairwise_mean_kappa,fulfilled,not_fulfilled\n";
  for (const auto& c : report.classes) {
    out << c.class_index << ',' << (c.fleiss.units ? fixed4(c.fleiss.kappa) : "") << ','
        << optional4(c.pairwise_mean) << ',' << c.fulfilled << ',' << c.not_fulfilled << '\n';
  }
}

void write_fulfillment_csv(std::ostream& out, const std::vector<FulfillmentRow>& rows) {
  out << "approach";
  for (const auto& c : evaluation_classes()) out << ',' << c.index;
  out << ",mean_classes\n";
  for (const auto& r : rows) {
    out << r.approach;
    for (double f : r.fraction) out << ',' << fixed4(f);
    out << ',' << fixed4(r.mean_classes) << '\n';
  }
}

void write_correlations_csv(std::ostream& out, const std::vector<CorrelationRow>& rows) {
  out << "metric,component,class,n,rho,strength\n";
  for (const auto& r : rows) {
    out << r.metric << ',' << r.component << ',' << r.class_index << ',' << r.n << ','
        << optional4(r.rho) << ',' << (r.rho ? r.strength : "undefined") << '\n';
  }
}

}  // namespace leitsatz::evalframe

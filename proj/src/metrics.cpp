#include "leitsatz/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "leitsatz/error.hpp"
#include "leitsatz/hash.hpp"
#include "leitsatz/parallel.hpp"
#include "leitsatz/random.hpp"
#include "leitsatz/textproc.hpp"
#include "leitsatz/utf8.hpp"

namespace leitsatz::metrics {

using nlohmann::json;
using summarize::Approach;

PRF PRF::from(double precision, double recall) {
  const double denom = precision + recall;
  return {precision, recall, denom > 0.0 ? 2.0 * precision * recall / denom : 0.0};
}

PRF rouge_n(const std::vector<std::string>& candidate, const std::vector<std::string>& reference,
            std::size_t n) {
  const auto cand = textproc::ngrams(candidate, n);
  const auto ref = textproc::ngrams(reference, n);
  std::size_t overlap = 0;
  for (const auto& [gram, count] : cand) {
    if (const auto it = ref.find(gram); it != ref.end()) overlap += std::min(count, it->second);
  }
  const std::size_t cand_total = candidate.size() >= n ? candidate.size() - n + 1 : 0;
  const std::size_t ref_total = reference.size() >= n ? reference.size() - n + 1 : 0;
  const double p = cand_total ? static_cast<double>(overlap) / static_cast<double>(cand_total) : 0.0;
  const double r = ref_total ? static_cast<double>(overlap) / static_cast<double>(ref_total) : 0.0;
  return PRF::from(p, r);
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    prev.swap(cur);
  }
  return prev[b.size()];
}

PRF rouge_l(const std::vector<std::string>& candidate, const std::vector<std::string>& reference) {
  const auto l = static_cast<double>(lcs_length(candidate, reference));
  const double p = candidate.empty() ? 0.0 : l / static_cast<double>(candidate.size());
  const double r = reference.empty() ? 0.0 : l / static_cast<double>(reference.size());
  return PRF::from(p, r);
}

// ---------------------------------------------------------------------------

namespace {

EmbeddingSeq normalized(const EmbeddingSeq& seq, std::size_t dim, const char* side) {
  EmbeddingSeq out;
  out.reserve(seq.size());
  for (const auto& v : seq) {
    if (v.size() != dim) throw DataError(std::string(side) + " embeddings have inconsistent dimensions");
    double sq = 0.0;
    for (double x : v) sq += x * x;
    const double norm = std::sqrt(sq);
    if (norm == 0.0) throw DataError(std::string(side) + " embedding is a zero vector");
    if (std::abs(norm - 1.0) <= 1e-6) {
      out.push_back(v);
    } else {
      Embedding u(v);
      for (double& x : u) x /= norm;
      out.push_back(std::move(u));
    }
  }
  return out;
}

double weighted_mean(const std::vector<double>& values, std::span<const double> weights) {
  const bool all_zero = std::all_of(weights.begin(), weights.end(), [](double w) { return w == 0.0; });
  if (weights.empty() || all_zero) {
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
  }
  if (weights.size() != values.size()) throw DataError("bertscore weights do not match token count");
  double s = 0.0;
  double w = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    s += weights[i] * values[i];
    w += weights[i];
  }
  return s / w;
}

}  // namespace

PRF bertscore(const EmbeddingSeq& candidate, const EmbeddingSeq& reference,
              const BertScoreOptions& options) {
  if (candidate.empty() || reference.empty()) throw DataError("bertscore needs non-empty token lists");
  const std::size_t dim = candidate.front().size();
  if (dim == 0) throw DataError("bertscore embeddings have dimension 0");
  const auto cand = normalized(candidate, dim, "candidate");
  const auto ref = normalized(reference, dim, "reference");

  std::vector<double> best_for_cand(cand.size(), -1.0);
  std::vector<double> best_for_ref(ref.size(), -1.0);
  for (std::size_t i = 0; i < cand.size(); ++i) {
    for (std::size_t j = 0; j < ref.size(); ++j) {
      double sim = 0.0;
      for (std::size_t d = 0; d < dim; ++d) sim += cand[i][d] * ref[j][d];
      best_for_cand[i] = std::max(best_for_cand[i], sim);
      best_for_ref[j] = std::max(best_for_ref[j], sim);
    }
  }
  double p = weighted_mean(best_for_cand, options.candidate_weights);
  double r = weighted_mean(best_for_ref, options.reference_weights);
  auto f = PRF::from(p, r);
  if (options.baseline) {
    const double b = *options.baseline;
    auto rescale = [b](double x) { return (x - b) / (1.0 - b); };
    f = {rescale(f.precision), rescale(f.recall), rescale(f.f1)};
  }
  return f;
}

// ---------------------------------------------------------------------------

std::vector<EmbeddingSeq> HttpEmbeddingProvider::embed(const std::vector<std::string>& texts) {
  const auto reply = post_json(endpoint_, "/embed", {{"texts", texts}});
  try {
    auto out = reply.at("embeddings").get<std::vector<EmbeddingSeq>>();
    if (out.size() != texts.size())
      throw ServiceError("embedding service returned " + std::to_string(out.size()) +
                             " sequences for " + std::to_string(texts.size()) + " texts",
                         false);
    return out;
  } catch (const json::exception& e) {
    throw ServiceError(std::string("malformed embedding reply: ") + e.what(), false);
  }
}

FileEmbeddingProvider::FileEmbeddingProvider(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embedding file " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (utf8::trim(line).empty()) continue;
    try {
      const auto j = json::parse(line);
      table_[j.at("hash").get<std::string>()] = j.at("embeddings").get<EmbeddingSeq>();
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

std::vector<EmbeddingSeq> FileEmbeddingProvider::embed(const std::vector<std::string>& texts) {
  std::vector<EmbeddingSeq> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    const auto hash = sha256_hex(t);
    const auto it = table_.find(hash);
    if (it == table_.end()) throw DataError("no precomputed embeddings for text hash " + hash);
    out.push_back(it->second);
  }
  return out;
}

std::vector<EmbeddingSeq> HashingEmbeddingProvider::embed(const std::vector<std::string>& texts) {
  std::vector<EmbeddingSeq> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    EmbeddingSeq seq;
    for (const auto& tok : textproc::words(t)) {
      if (!textproc::is_word_token(tok)) continue;
      std::mt19937_64 rng(fnv1a(tok));
      Embedding v(dim_);
      double sq = 0.0;
      for (auto& x : v) {
        // Uniform in [-1, 1); built from raw engine output so it is platform independent.
        x = static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0;
        sq += x * x;
      }
      const double norm = std::sqrt(sq);
      for (auto& x : v) x /= norm;
      seq.push_back(std::move(v));
    }
    out.push_back(std::move(seq));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::rouge1: return "ROUGE-1";
    case Metric::rouge2: return "ROUGE-2";
    case Metric::rougeL: return "ROUGE-L";
    case Metric::bertscore: return "BERTScore";
  }
  return "?";
}

Metric metric_from_string(std::string_view name) {
  for (auto m : {Metric::rouge1, Metric::rouge2, Metric::rougeL, Metric::bertscore}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown metric '" + std::string(name) + "'");
}

std::vector<Metric> MetricsConfig::enabled() const {
  std::vector<Metric> out;
  if (rouge1) out.push_back(Metric::rouge1);
  if (rouge2) out.push_back(Metric::rouge2);
  if (rougeL) out.push_back(Metric::rougeL);
  if (bertscore) out.push_back(Metric::bertscore);
  return out;
}

std::vector<CorpusRow> aggregate(const std::vector<ScoreRow>& rows) {
  std::map<std::pair<Metric, Approach>, std::vector<double>> groups;
  for (const auto& r : rows) groups[{r.metric, r.approach}].push_back(r.score.f1);
  std::vector<CorpusRow> out;
  for (const auto& [key, values] : groups) out.push_back({key.first, key.second, describe(values)});
  return out;
}

MetricReport score_corpus(const std::vector<summarize::SummaryRecord>& summaries,
                          const std::map<std::string, std::string>& golds,
                          const MetricsConfig& config) {
  const auto metrics = config.enabled();
  if (metrics.empty()) throw ConfigError("no metric enabled");
  if (config.bertscore && !config.embeddings)
    throw ConfigError("BERTScore requires an embedding provider");

  MetricReport report;
  std::set<std::string> excluded;
  std::vector<const summarize::SummaryRecord*> scoreable;
  for (const auto& s : summaries) {
    const auto it = golds.find(s.judgment_id);
    if (it == golds.end() || utf8::trim(it->second).empty()) {
      excluded.insert(s.judgment_id);
      continue;
    }
    scoreable.push_back(&s);
  }
  report.excluded_ids.assign(excluded.begin(), excluded.end());
  if (scoreable.empty()) throw DataError("no summary has a non-empty gold text to score against");
  std::stable_sort(scoreable.begin(), scoreable.end(), [](const auto* a, const auto* b) {
    if (a->judgment_id != b->judgment_id) return a->judgment_id < b->judgment_id;
    return a->approach < b->approach;
  });

  // Embeddings are fetched up front, one batch for candidates and golds.
  std::vector<EmbeddingSeq> cand_emb;
  std::map<std::string, EmbeddingSeq> gold_emb;
  std::map<std::string, double> idf;
  if (config.bertscore) {
    std::vector<std::string> cand_texts;
    for (const auto* s : scoreable) cand_texts.push_back(s->text);
    std::vector<std::string> gold_ids;
    std::vector<std::string> gold_texts;
    for (const auto* s : scoreable) {
      if (gold_emb.count(s->judgment_id)) continue;
      gold_emb[s->judgment_id];
      gold_ids.push_back(s->judgment_id);
      gold_texts.push_back(golds.at(s->judgment_id));
    }
    std::vector<std::string> nonempty;
    for (const auto& t : cand_texts) {
      if (!utf8::trim(t).empty()) nonempty.push_back(t);
    }
    auto got = config.embeddings->embed(nonempty);
    cand_emb.resize(cand_texts.size());
    for (std::size_t i = 0, k = 0; i < cand_texts.size(); ++i) {
      if (!utf8::trim(cand_texts[i]).empty()) cand_emb[i] = std::move(got.at(k++));
    }
    auto gold_got = config.embeddings->embed(gold_texts);
    for (std::size_t i = 0; i < gold_ids.size(); ++i) gold_emb[gold_ids[i]] = std::move(gold_got.at(i));

    if (config.bertscore_idf) {
      std::map<std::string, std::size_t> df;
      for (const auto& t : gold_texts) {
        std::set<std::string> seen;
        for (auto& w : textproc::words(t)) {
          if (textproc::is_word_token(w)) seen.insert(std::move(w));
        }
        for (const auto& w : seen) ++df[w];
      }
      const double m = static_cast<double>(gold_texts.size());
      for (const auto& [w, d] : df) idf[w] = std::log((m + 1.0) / (static_cast<double>(d) + 1.0));
    }
  }

  auto idf_weights = [&](const std::string& text) {
    std::vector<double> w;
    for (const auto& tok : textproc::words(text)) {
      if (!textproc::is_word_token(tok)) continue;
      const auto it = idf.find(tok);
      w.push_back(it == idf.end() ? std::log(static_cast<double>(gold_emb.size()) + 1.0) : it->second);
    }
    return w;
  };

  std::vector<std::vector<ScoreRow>> slots(scoreable.size());
  parallel_for(
      scoreable.size(),
      [&](std::size_t i) {
        const auto& s = *scoreable[i];
        const auto& gold = golds.at(s.judgment_id);
        const auto cand_tokens = textproc::words(s.text);
        const auto ref_tokens = textproc::words(gold);
        for (auto m : metrics) {
          PRF score;
          switch (m) {
            case Metric::rouge1: score = rouge_n(cand_tokens, ref_tokens, 1); break;
            case Metric::rouge2: score = rouge_n(cand_tokens, ref_tokens, 2); break;
            case Metric::rougeL: score = rouge_l(cand_tokens, ref_tokens); break;
            case Metric::bertscore: {
              if (cand_emb[i].empty()) break;
              BertScoreOptions opts;
              opts.baseline = config.bertscore_baseline;
              std::vector<double> cw;
              std::vector<double> rw;
              if (config.bertscore_idf) {
                cw = idf_weights(s.text);
                rw = idf_weights(gold);
                opts.candidate_weights = cw;
                opts.reference_weights = rw;
              }
              score = bertscore(cand_emb[i], gold_emb.at(s.judgment_id), opts);
              break;
            }
          }
          slots[i].push_back({s.judgment_id, s.approach, m, score});
        }
      },
      config.workers);

  for (auto& rows : slots) {
    for (auto& r : rows) report.per_summary.push_back(std::move(r));
  }
  report.corpus = aggregate(report.per_summary);
  return report;
}

namespace {

std::string fixed4(double v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << v;
  return os.str();
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void write_corpus_csv(std::ostream& out, const MetricReport& report) {
  out << "metric,approach,min,mean,max,std\n";
  for (const auto& r : report.corpus) {
    out << to_string(r.metric) << ',' << summarize::to_string(r.approach) << ',' << fixed4(r.f1.min)
        << ',' << fixed4(r.f1.mean) << ',' << fixed4(r.f1.max) << ',' << fixed4(r.f1.std) << '\n';
  }
}

void write_per_summary_csv(std::ostream& out, const MetricReport& report) {
  out << "judgment_id,approach,metric,precision,recall,f1\n";
  for (const auto& r : report.per_summary) {
    out << csv_field(r.judgment_id) << ',' << summarize::to_string(r.approach) << ','
        << to_string(r.metric) << ',' << fixed4(r.score.precision) << ',' << fixed4(r.score.recall)
        << ',' << fixed4(r.score.f1) << '\n';
  }
}

json to_json(const MetricReport& report) {
  json per = json::array();
  for (const auto& r : report.per_summary) {
    per.push_back({{"judgment_id", r.judgment_id},
                   {"approach", summarize::to_string(r.approach)},
                   {"metric", to_string(r.metric)},
                   {"precision", r.score.precision},
                   {"recall", r.score.recall},
                   {"f1", r.score.f1}});
  }
  json corpus = json::array();
  for (const auto& r : report.corpus) {
    corpus.push_back({{"metric", to_string(r.metric)},
                      {"approach", summarize::to_string(r.approach)},
                      {"min", r.f1.min},
                      {"mean", r.f1.mean},
                      {"max", r.f1.max},
                      {"std", r.f1.std},
                      {"count", r.f1.count}});
  }
  return {{"per_summary", per}, {"corpus", corpus}, {"excluded_ids", report.excluded_ids}};
}

MetricReport report_from_json(const json& j) {
  MetricReport report;
  try {
    for (const auto& r : j.at("per_summary")) {
      report.per_summary.push_back({r.at("judgment_id").get<std::string>(),
                                    summarize::approach_from_string(r.at("approach").get<std::string>()),
                                    metric_from_string(r.at("metric").get<std::string>()),
                                    {r.at("precision").get<double>(), r.at("recall").get<double>(),
                                     r.at("f1").get<double>()}});
    }
    report.excluded_ids = j.value("excluded_ids", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed metric report: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("malformed metric report: ") + e.what());
  }
  report.corpus = aggregate(report.per_summary);
  return report;
}

}  // namespace leitsatz::metrics

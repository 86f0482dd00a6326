#include "leitsatz/cli.hpp"

#include <algorithm>
#include <chrono>
#include <csignal>
#include <ctime>
#include <fstream>
#include <iostream>
#include <memory>
#include <regex>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "leitsatz/config.hpp"
#include "leitsatz/corpus.hpp"
#include "leitsatz/entities.hpp"
#include "leitsatz/evalframe.hpp"
#include "leitsatz/hash.hpp"
#include "leitsatz/metrics.hpp"
#include "leitsatz/parallel.hpp"
#include "leitsatz/service.hpp"
#include "leitsatz/summarize.hpp"
#include "leitsatz/textproc.hpp"
#include "leitsatz/utf8.hpp"

#ifndef LEITSATZ_VERSION
#define LEITSATZ_VERSION "0.0.0"
#endif

namespace leitsatz::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string version() { return LEITSATZ_VERSION; }

int exit_code_for(const std::exception& error) {
  if (dynamic_cast<const ConfigError*>(&error)) return kExitConfig;
  if (dynamic_cast<const DataError*>(&error)) return kExitData;
  if (dynamic_cast<const ServiceError*>(&error)) return kExitService;
  if (dynamic_cast<const std::filesystem::filesystem_error*>(&error)) return kExitData;
  return 1;
}

namespace {

// ---------------------------------------------------------------------------
// Artifact helpers

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_artifact(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  service::atomic_write(path, content);
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing artifact " + path.string());
  std::vector<json> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (utf8::trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// One manifest per output directory. Each step records the hashes of what it
// read and wrote, so a rerun with unchanged inputs can be skipped.
class Manifest {
 public:
  explicit Manifest(fs::path dir) : path_(std::move(dir) / "manifest.json") {
    if (fs::exists(path_)) data_ = read_json(path_);
    if (!data_.is_object()) data_ = json::object();
    data_["version"] = version();
    if (!data_.contains("steps")) data_["steps"] = json::object();
  }

  static json hashes(const std::vector<fs::path>& files) {
    json out = json::object();
    for (const auto& f : files) out[f.filename().string()] = fs::exists(f) ? sha256_file(f) : "";
    return out;
  }

  bool up_to_date(const std::string& step, const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs,
                  const json& params) const {
    const auto& steps = data_["steps"];
    if (!steps.contains(step)) return false;
    const auto& entry = steps[step];
    return entry.value("params", json()) == params && entry.value("inputs", json()) == hashes(inputs) &&
           entry.value("outputs", json()) == hashes(outputs);
  }

  void record(const std::string& step, const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs,
              const json& params) {
    data_["steps"][step] = {{"params", params},
                            {"inputs", hashes(inputs)},
                            {"outputs", hashes(outputs)},
                            {"finished", utc_now()}};
    write_artifact(path_, data_.dump(2) + "\n");
  }

 private:
  fs::path path_;
  json data_;
};

struct Context {
  config::PipelineConfig cfg;
  bool force = false;
  std::ostream& out;
  std::ostream& err;

  fs::path artifact(const std::string& name) const { return cfg.output / name; }
};

template <typename Fn>
void step(Context& ctx, const std::string& name, const std::vector<fs::path>& inputs,
          const std::vector<fs::path>& outputs, const json& params, Fn&& body) {
  Manifest manifest(ctx.cfg.output);
  if (!ctx.force && manifest.up_to_date(name, inputs, outputs, params)) {
    ctx.out << name << ": up to date\n";
    return;
  }
  for (const auto& in : inputs) {
    if (!fs::exists(in)) throw DataError(name + ": missing input " + in.string());
  }
  body();
  manifest.record(name, inputs, outputs, params);
  ctx.out << name << ": wrote";
  for (const auto& o : outputs) ctx.out << ' ' << o.filename().string();
  ctx.out << '\n';
}

// ---------------------------------------------------------------------------
// Loading pipeline artifacts

std::unique_ptr<textproc::TokenCounter> make_counter(const config::PipelineConfig& cfg) {
  if (cfg.tokenizer.kind == "service")
    return std::make_unique<textproc::ServiceTokenCounter>(cfg.tokenizer.endpoint, cfg.tokenizer.slack);
  return std::make_unique<textproc::WordTokenCounter>();
}

entities::TagVocabulary make_vocabulary(const config::PipelineConfig& cfg) {
  return cfg.tag_kinds.empty() ? entities::TagVocabulary::defaults() : entities::TagVocabulary(cfg.tag_kinds);
}

textproc::AbbreviationList make_abbreviations(const config::PipelineConfig& cfg) {
  return cfg.abbreviations ? textproc::AbbreviationList::load(*cfg.abbreviations)
                           : textproc::AbbreviationList::defaults();
}

corpus::CorpusStore load_store(const Context& ctx) {
  std::ifstream in(ctx.artifact("corpus.jsonl"));
  if (!in) throw DataError("missing artifact corpus.jsonl; run `leitsatz ingest` first");
  return corpus::ingest_jsonl(in, "corpus.jsonl");
}

// (id, text) pairs from a {"id","text"} JSONL artifact, in file order.
std::vector<std::pair<std::string, std::string>> load_texts(const fs::path& path) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& j : read_jsonl(path)) {
    try {
      out.emplace_back(j.at("id").get<std::string>(), j.at("text").get<std::string>());
    } catch (const json::exception& e) {
      throw DataError(path.string() + ": " + e.what());
    }
  }
  return out;
}

std::string texts_jsonl(const std::vector<std::pair<std::string, std::string>>& texts) {
  std::string out;
  for (const auto& [id, text] : texts) out += json{{"id", id}, {"text", text}}.dump() + "\n";
  return out;
}

std::map<std::string, std::string> golds_of(const corpus::CorpusStore& store) {
  std::map<std::string, std::string> out;
  for (const auto& j : store.judgments()) out[j.id] = j.guiding_principles;
  return out;
}

const std::vector<summarize::Approach> kGenerated = {summarize::Approach::lexrank, summarize::Approach::model_plain,
                                                     summarize::Approach::model_enriched};

fs::path summaries_path(const Context& ctx, summarize::Approach a) {
  return ctx.artifact("summaries_" + std::string(summarize::to_string(a)) + ".jsonl");
}

std::vector<fs::path> present_summary_files(const Context& ctx) {
  std::vector<fs::path> out;
  for (auto a : kGenerated) {
    if (fs::exists(summaries_path(ctx, a))) out.push_back(summaries_path(ctx, a));
  }
  return out;
}

std::vector<summarize::SummaryRecord> load_summaries(const std::vector<fs::path>& files) {
  std::vector<summarize::SummaryRecord> out;
  for (const auto& f : files) {
    for (const auto& j : read_jsonl(f)) out.push_back(summarize::summary_from_json(j));
  }
  return out;
}

std::string summaries_jsonl(const std::vector<summarize::SummaryRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    json j;
    summarize::to_json(j, r);
    out += j.dump() + "\n";
  }
  return out;
}

// Generated text from the enriched model may carry (possibly unbalanced)
// entity tags; scoring and review use the plain text.
std::string remove_tags(const std::string& text, const entities::TagVocabulary& vocab) {
  try {
    return entities::strip_tags(text, vocab).text;
  } catch (const entities::TagError&) {
    std::string alternatives;
    for (const auto& k : vocab.kinds()) alternatives += (alternatives.empty() ? "" : "|") + k;
    const std::regex tag("\\s?</?(?:" + alternatives + ")>\\s?");
    return std::string(utf8::collapse_whitespace(std::regex_replace(text, tag, " ")));
  }
}

// ---------------------------------------------------------------------------
// Subcommands

void cmd_ingest(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto corpus_out = ctx.artifact("corpus.jsonl");
  const auto reasons_out = ctx.artifact("reasons.jsonl");
  const auto skipped_out = ctx.artifact("reasons_skipped.json");
  std::vector<fs::path> inputs;
  if (cfg.corpus_format == corpus::InputFormat::jsonl) {
    inputs.push_back(cfg.corpus);
  } else {
    for (const auto& e : fs::directory_iterator(cfg.corpus)) {
      if (e.path().extension() == ".xml") inputs.push_back(e.path());
    }
    std::sort(inputs.begin(), inputs.end());
  }
  const json params{{"format", cfg.corpus_format == corpus::InputFormat::jsonl ? "jsonl" : "xml_dir"},
                    {"heading", cfg.reasons.heading},
                    {"excluded_label", cfg.reasons.excluded_label}};
  step(ctx, "ingest", inputs, {corpus_out, reasons_out, skipped_out}, params, [&] {
    const auto store = corpus::ingest(cfg.corpus, cfg.corpus_format);
    std::ostringstream os;
    store.export_jsonl(os);
    write_artifact(corpus_out, os.str());
    const auto batch = corpus::extract_all_reasons(store, cfg.reasons);
    write_artifact(reasons_out, texts_jsonl(batch.reasons));
    write_artifact(skipped_out, corpus::skip_report_json(batch.skipped).dump(2) + "\n");
    ctx.out << "ingest: " << store.size() << " judgments, " << batch.reasons.size() << " with reasons, "
            << batch.skipped.size() << " skipped\n";
  });
}

void cmd_split(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto splits_out = ctx.artifact("splits.json");
  const auto exclusions_out = ctx.artifact("gold_exclusions.json");
  const json params{{"train", cfg.split.train}, {"valid", cfg.split.valid}, {"test", cfg.split.test},
                    {"seed", cfg.split_seed}, {"max_gold_tokens", cfg.max_gold_tokens}};
  std::vector<fs::path> outputs{splits_out};
  if (cfg.max_gold_tokens > 0) outputs.push_back(exclusions_out);
  step(ctx, "split", {ctx.artifact("corpus.jsonl"), ctx.artifact("reasons.jsonl")}, outputs, params, [&] {
    const auto store = load_store(ctx);
    const auto splits = corpus::split_corpus(store, cfg.split, cfg.split_seed);
    write_artifact(splits_out, corpus::splits_to_json(splits, cfg.split_seed).dump(2) + "\n");
    if (cfg.max_gold_tokens > 0) {
      const auto reasons = load_texts(ctx.artifact("reasons.jsonl"));
      std::set<std::string> train(splits[0].judgment_ids.begin(), splits[0].judgment_ids.end());
      std::vector<corpus::TrainingPair> pairs;
      for (const auto& [id, text] : reasons) {
        if (train.count(id)) pairs.push_back({id, text, store.at(id).guiding_principles});
      }
      const auto counter = make_counter(cfg);
      const auto filtered = corpus::filter_gold_outliers(std::move(pairs), cfg.max_gold_tokens, *counter);
      write_artifact(exclusions_out, corpus::exclusion_report_json(filtered.report).dump(2) + "\n");
    }
  });
}

void cmd_stats(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto reasons_csv = ctx.artifact("lengths_reasons.csv");
  const auto gold_csv = ctx.artifact("lengths_gold.csv");
  const auto counter = make_counter(cfg);
  const json params{{"tokenizer", counter->name()}};
  step(ctx, "stats", {ctx.artifact("corpus.jsonl"), ctx.artifact("reasons.jsonl"), ctx.artifact("splits.json")},
       {reasons_csv, gold_csv}, params, [&] {
         const auto store = load_store(ctx);
         const auto splits = corpus::splits_from_json(read_json(ctx.artifact("splits.json")));
         const auto reasons = load_texts(ctx.artifact("reasons.jsonl"));
         std::vector<std::pair<std::string, std::string>> golds;
         for (const auto& [id, _] : reasons) golds.emplace_back(id, store.at(id).guiding_principles);
         std::ostringstream a;
         corpus::write_length_table_csv(a, corpus::length_table(reasons, splits, *counter));
         write_artifact(reasons_csv, a.str());
         std::ostringstream b;
         corpus::write_length_table_csv(b, corpus::length_table(golds, splits, *counter));
         write_artifact(gold_csv, b.str());
       });
}

void cmd_enrich(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto spans_out = ctx.artifact("spans.jsonl");
  const auto enriched_out = ctx.artifact("enriched.jsonl");
  const auto vocab_out = ctx.artifact("tag_vocabulary.json");
  const auto vocab = make_vocabulary(cfg);
  std::vector<fs::path> inputs{ctx.artifact("reasons.jsonl")};
  if (cfg.spans) inputs.push_back(*cfg.spans);
  const json params{{"source", cfg.spans ? "file" : "detector"}, {"kinds", vocab.kinds()}};
  step(ctx, "enrich", inputs, {spans_out, enriched_out, vocab_out}, params, [&] {
    const auto reasons = load_texts(ctx.artifact("reasons.jsonl"));
    std::map<std::string, std::vector<entities::EntitySpan>> spans;
    if (cfg.spans) {
      std::map<std::string, std::string> by_id(reasons.begin(), reasons.end());
      auto imported = entities::import_spans(*cfg.spans, by_id, vocab);
      for (const auto& e : imported.errors) ctx.err << "enrich: " << e.id << ": " << e.message << '\n';
      spans = std::move(imported.spans);
    } else {
      for (const auto& [id, text] : reasons) spans[id] = entities::detect_entities(text);
    }
    std::string spans_text;
    std::vector<std::pair<std::string, std::string>> enriched;
    std::size_t total = 0;
    for (const auto& [id, text] : reasons) {
      const auto& s = spans[id];
      total += s.size();
      spans_text += entities::spans_to_json(id, text, s).dump() + "\n";
      enriched.emplace_back(id, entities::enrich(text, s, vocab));
    }
    write_artifact(spans_out, spans_text);
    write_artifact(enriched_out, texts_jsonl(enriched));
    write_artifact(vocab_out, json{{"kinds", vocab.kinds()}, {"special_tokens", vocab.special_tokens()}}.dump(2) + "\n");
    ctx.out << "enrich: " << total << " entities in " << reasons.size() << " documents\n";
  });
}

std::vector<std::pair<std::string, std::string>> subset(const Context& ctx,
                                                        std::vector<std::pair<std::string, std::string>> texts) {
  if (ctx.cfg.summarize_subset == "all") return texts;
  const auto splits = corpus::splits_from_json(read_json(ctx.artifact("splits.json")));
  std::set<std::string> keep;
  for (const auto& s : splits) {
    if (corpus::to_string(s.split) == ctx.cfg.summarize_subset) keep.insert(s.judgment_ids.begin(), s.judgment_ids.end());
  }
  std::erase_if(texts, [&](const auto& t) { return !keep.count(t.first); });
  return texts;
}

void cmd_summarize(Context& ctx, const std::string& approach_name) {
  const auto& cfg = ctx.cfg;
  const auto approach = summarize::approach_from_string(approach_name);
  if (approach == summarize::Approach::gold) throw ConfigError("--approach: gold summaries are not generated");
  const auto output = summaries_path(ctx, approach);
  const auto counter = make_counter(cfg);
  const bool enriched = approach == summarize::Approach::model_enriched;
  const auto source = ctx.artifact(enriched ? "enriched.jsonl" : "reasons.jsonl");
  std::vector<fs::path> inputs{source};
  if (cfg.summarize_subset != "all") inputs.push_back(ctx.artifact("splits.json"));

  json params{{"approach", approach_name}, {"subset", cfg.summarize_subset}, {"tokenizer", counter->name()}};
  if (approach == summarize::Approach::lexrank) {
    params["lexrank"] = {{"k", cfg.lexrank.k}, {"threshold", cfg.lexrank.threshold},
                         {"damping", cfg.lexrank.damping}, {"tol", cfg.lexrank.tol}};
  } else {
    const auto profile = cfg.generation.find(approach_name);
    if (profile == cfg.generation.end())
      throw ConfigError("config field 'generation." + approach_name + ".url': is required for this approach");
    params["generation"] = {{"url", profile->second.endpoint.base_url},
                            {"context_window", cfg.context_window},
                            {"max_new_tokens", cfg.max_new_tokens},
                            {"prompt_overhead", profile->second.prompt_overhead}};
  }

  step(ctx, "summarize_" + approach_name, inputs, {output}, params, [&] {
    const auto texts = subset(ctx, load_texts(source));
    std::vector<summarize::SummaryRecord> records(texts.size());
    if (approach == summarize::Approach::lexrank) {
      const auto abbreviations = make_abbreviations(cfg);
      parallel_for(
          texts.size(),
          [&](std::size_t i) {
            records[i] = summarize::lexrank_summary(texts[i].first, texts[i].second, cfg.lexrank, *counter, abbreviations);
          },
          cfg.workers);
    } else {
      const auto& profile = cfg.generation.at(approach_name);
      summarize::HttpGenerationClient client(profile.endpoint, approach_name + "@" + profile.endpoint.base_url);
      const auto vocab = make_vocabulary(cfg);
      const auto special = enriched ? vocab.special_tokens() : std::vector<std::string>{};
      summarize::GenerationParams gp;
      gp.max_new_tokens = cfg.max_new_tokens;
      parallel_for(
          texts.size(),
          [&](std::size_t i) {
            const auto input = summarize::truncate_to_budget(texts[i].second, cfg.context_window, cfg.max_new_tokens,
                                                             *counter, profile.prompt_overhead);
            auto r = summarize::generate_summary(client, texts[i].first, input, approach, gp, special, *counter);
            if (enriched && !r.failure) {
              r.text = remove_tags(r.text, vocab);
              r.empty = utf8::trim(r.text).empty();
              r.token_count = textproc::count_tokens(r.text, *counter);
              r.sentence_count = textproc::split_sentences(r.text).size();
            }
            records[i] = std::move(r);
          },
          std::max<std::size_t>(1, cfg.generation_concurrency));
    }
    write_artifact(output, summaries_jsonl(records));
    std::size_t failed = 0;
    std::size_t empty = 0;
    for (const auto& r : records) {
      failed += r.failure ? 1 : 0;
      empty += r.empty ? 1 : 0;
    }
    ctx.out << "summarize: " << records.size() << " " << approach_name << " summaries";
    if (failed || empty) ctx.out << " (" << failed << " failed, " << empty << " empty)";
    ctx.out << '\n';
  });
}

std::unique_ptr<metrics::EmbeddingProvider> make_embeddings(const config::PipelineConfig& cfg) {
  if (cfg.embeddings.kind == "file") return std::make_unique<metrics::FileEmbeddingProvider>(cfg.embeddings.file);
  if (cfg.embeddings.kind == "service") return std::make_unique<metrics::HttpEmbeddingProvider>(cfg.embeddings.endpoint);
  return std::make_unique<metrics::HashingEmbeddingProvider>(cfg.embeddings.dim);
}

void cmd_score(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto files = present_summary_files(ctx);
  if (files.empty()) throw DataError("score: no summaries found; run `leitsatz summarize` first");
  auto inputs = files;
  inputs.push_back(ctx.artifact("corpus.jsonl"));
  if (cfg.bertscore && cfg.embeddings.kind == "file") inputs.push_back(cfg.embeddings.file);
  const auto json_out = ctx.artifact("scores.json");
  const auto corpus_csv = ctx.artifact("scores_corpus.csv");
  const auto per_csv = ctx.artifact("scores_per_summary.csv");
  const json params{{"rouge1", cfg.rouge1},         {"rouge2", cfg.rouge2},
                    {"rougeL", cfg.rougeL},         {"bertscore", cfg.bertscore},
                    {"bertscore_idf", cfg.bertscore_idf}, {"embeddings", cfg.embeddings.kind},
                    {"dim", cfg.embeddings.dim},    {"baseline", cfg.bertscore_baseline.value_or(0.0)}};
  step(ctx, "score", inputs, {json_out, corpus_csv, per_csv}, params, [&] {
    const auto store = load_store(ctx);
    const auto summaries = load_summaries(files);
    std::unique_ptr<metrics::EmbeddingProvider> embeddings;
    metrics::MetricsConfig mc;
    mc.rouge1 = cfg.rouge1;
    mc.rouge2 = cfg.rouge2;
    mc.rougeL = cfg.rougeL;
    mc.bertscore = cfg.bertscore;
    mc.bertscore_idf = cfg.bertscore_idf;
    mc.bertscore_baseline = cfg.bertscore_baseline;
    mc.workers = cfg.workers;
    if (cfg.bertscore) {
      embeddings = make_embeddings(cfg);
      mc.embeddings = embeddings.get();
    }
    const auto report = metrics::score_corpus(summaries, golds_of(store), mc);
    write_artifact(json_out, metrics::to_json(report).dump(2) + "\n");
    std::ostringstream a;
    metrics::write_corpus_csv(a, report);
    write_artifact(corpus_csv, a.str());
    std::ostringstream b;
    metrics::write_per_summary_csv(b, report);
    write_artifact(per_csv, b.str());
    if (!report.excluded_ids.empty())
      ctx.err << "score: " << report.excluded_ids.size() << " judgments without gold excluded\n";
  });
}

void cmd_assign(Context& ctx) {
  const auto& cfg = ctx.cfg;
  if (cfg.reviewers.empty()) throw ConfigError("config field 'assignment.reviewers': is required for assign");
  const auto files = present_summary_files(ctx);
  if (files.empty()) throw DataError("assign: no summaries found; run `leitsatz summarize` first");
  const auto output = ctx.artifact("assignments.json");
  const json params{{"per_item", cfg.per_item}, {"seed", cfg.assignment_seed}, {"reviewers", cfg.reviewers}};
  step(ctx, "assign", files, {output}, params, [&] {
    std::vector<evalframe::SummaryRef> refs;
    for (const auto& r : load_summaries(files)) {
      if (!r.failure) refs.push_back({r.judgment_id, std::string(summarize::to_string(r.approach))});
    }
    const auto assignments = evalframe::build_assignments(refs, cfg.reviewers, cfg.per_item, cfg.assignment_seed);
    json list = json::array();
    std::map<std::string, std::size_t> loads;
    for (const auto& r : cfg.reviewers) loads[r] = 0;
    for (const auto& a : assignments) {
      list.push_back(evalframe::to_json(a));
      for (const auto& r : a.reviewer_ids) ++loads[r];
    }
    write_artifact(output, json{{"per_item", cfg.per_item},
                                {"seed", cfg.assignment_seed},
                                {"reviewers", cfg.reviewers},
                                {"loads", loads},
                                {"assignments", list}}
                               .dump(2) + "\n");
    ctx.out << "assign: " << assignments.size() << " summaries to " << cfg.reviewers.size() << " reviewers\n";
  });
}

std::vector<evalframe::Assignment> load_assignments(const Context& ctx) {
  const auto j = read_json(ctx.artifact("assignments.json"));
  std::vector<evalframe::Assignment> out;
  for (const auto& a : j.at("assignments")) out.push_back(evalframe::assignment_from_json(a));
  return out;
}

service::HttpFrontend* g_frontend = nullptr;

void cmd_serve(Context& ctx) {
  const auto& cfg = ctx.cfg;
  service::ReviewData data;
  data.assignments = load_assignments(ctx);
  for (const auto& r : load_summaries(present_summary_files(ctx)))
    data.candidates[{r.judgment_id, std::string(summarize::to_string(r.approach))}] = r.text;
  data.golds = golds_of(load_store(ctx));
  if (cfg.service.show_excerpt) {
    for (auto& [id, text] : load_texts(ctx.artifact("reasons.jsonl"))) data.excerpts[id] = std::move(text);
  }
  service::ServiceOptions options;
  options.reviewer_tokens = cfg.service.reviewer_tokens;
  options.admin_token = cfg.service.admin_token;
  options.store_path = cfg.service.store;
  options.show_excerpt = cfg.service.show_excerpt;
  options.item_seed = cfg.assignment_seed;
  std::set<std::string> assigned;
  for (const auto& a : data.assignments) assigned.insert(a.reviewer_ids.begin(), a.reviewer_ids.end());
  for (const auto& r : assigned) {
    if (!options.reviewer_tokens.count(r))
      throw ConfigError("config field 'tokens." + r + "': reviewer has assignments but no token");
  }
  if (options.admin_token.empty()) throw ConfigError("config field 'service.admin_token': is required for serve");
  fs::create_directories(options.store_path.parent_path());

  service::ReviewService svc(std::move(data), std::move(options));
  service::HttpFrontend frontend(svc);
  const int port = frontend.bind(cfg.service.host, cfg.service.port);
  ctx.out << "serve: listening on http://" << cfg.service.host << ":" << port << " (" << svc.store().size()
          << " verdicts loaded)" << std::endl;
  g_frontend = &frontend;
  std::signal(SIGINT, [](int) {
    if (g_frontend) g_frontend->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_frontend) g_frontend->stop();
  });
  frontend.run();
  g_frontend = nullptr;
}

std::string fixed4(double v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << v;
  return os.str();
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

void cmd_report(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto verdicts_path = cfg.verdicts.value_or(cfg.service.store);
  const auto summary_files = present_summary_files(ctx);
  std::vector<fs::path> inputs{verdicts_path};
  const bool have_scores = fs::exists(ctx.artifact("scores.json"));
  if (have_scores) inputs.push_back(ctx.artifact("scores.json"));
  const bool have_sources = fs::exists(ctx.artifact("reasons.jsonl"));
  if (have_sources) {
    inputs.push_back(ctx.artifact("reasons.jsonl"));
    for (const auto& f : summary_files) inputs.push_back(f);
  }
  const auto pairwise_csv = ctx.artifact("agreement_pairwise.csv");
  const auto per_class_csv = ctx.artifact("agreement_per_class.csv");
  const auto fulfillment_csv = ctx.artifact("fulfillment.csv");
  const auto correlations_csv = ctx.artifact("correlations.csv");
  const auto hallucinations_csv = ctx.artifact("hallucinations.csv");
  const auto report_json = ctx.artifact("report.json");
  std::vector<fs::path> outputs{pairwise_csv, per_class_csv, fulfillment_csv, report_json};
  if (have_scores) outputs.push_back(correlations_csv);
  if (have_sources) outputs.push_back(hallucinations_csv);

  step(ctx, "report", inputs, outputs, json{{"per_item", cfg.per_item}}, [&] {
    std::ifstream in(verdicts_path);
    const auto verdicts = evalframe::VerdictStore::import_jsonl(in).snapshot();
    if (verdicts.empty()) throw DataError("report: no verdicts in " + verdicts_path.string());
    json summary;

    const auto pairwise = evalframe::pairwise_kappa_matrix(verdicts);
    std::ostringstream a;
    evalframe::write_pairwise_csv(a, pairwise);
    write_artifact(pairwise_csv, a.str());

    const auto per_class = evalframe::per_class_kappa(verdicts, cfg.per_item);
    std::ostringstream b;
    evalframe::write_per_class_csv(b, per_class);
    write_artifact(per_class_csv, b.str());

    // Multi-rater kappa over every (summary, class) decision.
    std::vector<std::vector<std::size_t>> units;
    std::map<evalframe::SummaryRef, std::vector<const evalframe::ClassVerdict*>> by_summary;
    for (const auto& v : verdicts) by_summary[v.summary].push_back(&v);
    for (const auto& [_, vs] : by_summary) {
      if (vs.size() != cfg.per_item) continue;
      for (std::size_t c = 0; c < evalframe::kClassCount; ++c) {
        std::size_t yes = 0;
        for (const auto* v : vs) yes += v->decisions[c] ? 1 : 0;
        units.push_back({yes, cfg.per_item - yes});
      }
    }
    json overall{{"pairwise_mean", optional_json(pairwise.mean())}};
    if (pairwise.mean()) overall["pairwise_mean_band"] = evalframe::interpret_kappa(*pairwise.mean());
    if (!units.empty() && cfg.per_item >= 2) {
      const auto k = evalframe::fleiss_kappa(units, 2, cfg.per_item);
      overall["fleiss"] = k.kappa;
      overall["fleiss_band"] = evalframe::interpret_kappa(k.kappa);
    }
    summary["overall_agreement"] = overall;

    json classes = json::array();
    for (const auto& c : per_class.classes) {
      json row{{"class", c.class_index},
               {"fulfilled", c.fulfilled},
               {"not_fulfilled", c.not_fulfilled},
               {"pairwise_mean", optional_json(c.pairwise_mean)}};
      if (c.fleiss.units) {
        row["fleiss"] = c.fleiss.kappa;
        row["band"] = evalframe::interpret_kappa(c.fleiss.kappa);
      }
      classes.push_back(row);
    }
    summary["per_class"] = classes;
    json excluded = json::array();
    for (const auto& e : per_class.excluded) excluded.push_back(e.judgment_id + "/" + e.approach);
    summary["incomplete_summaries"] = excluded;

    const auto fulfillment = evalframe::fulfillment_report(verdicts, cfg.per_item);
    std::ostringstream c;
    evalframe::write_fulfillment_csv(c, fulfillment);
    write_artifact(fulfillment_csv, c.str());
    json ful = json::array();
    for (const auto& r : fulfillment) {
      ful.push_back({{"approach", r.approach}, {"judgments", r.judgments}, {"fraction", r.fraction},
                     {"mean_classes", r.mean_classes}});
    }
    summary["fulfillment"] = ful;

    if (have_scores) {
      const auto scores = metrics::report_from_json(read_json(ctx.artifact("scores.json")));
      const auto rows = evalframe::metric_class_correlations(scores, verdicts, cfg.per_item);
      std::ostringstream d;
      evalframe::write_correlations_csv(d, rows);
      write_artifact(correlations_csv, d.str());
    }

    if (have_sources) {
      std::map<std::string, std::string> sources;
      for (auto& [id, text] : load_texts(ctx.artifact("reasons.jsonl"))) sources[id] = std::move(text);
      struct Tally {
        std::size_t summaries = 0, entities = 0, supported = 0;
      };
      std::map<std::string, Tally> tally;
      json unsupported = json::array();
      for (const auto& r : load_summaries(summary_files)) {
        const auto src = sources.find(r.judgment_id);
        if (src == sources.end() || r.failure) continue;
        const auto audit = entities::audit_hallucinations(r.text, src->second);
        auto& t = tally[std::string(summarize::to_string(r.approach))];
        ++t.summaries;
        t.entities += audit.generated_entities.size();
        t.supported += audit.supported;
        for (const auto& u : audit.unsupported)
          unsupported.push_back({{"judgment_id", r.judgment_id}, {"approach", summarize::to_string(r.approach)},
                                 {"entity", u}});
      }
      std::ostringstream e;
      e << "approach,summaries,entities,supported,support_rate\n";
      for (const auto& [approach, t] : tally) {
        e << approach << ',' << t.summaries << ',' << t.entities << ',' << t.supported << ','
          << (t.entities ? fixed4(static_cast<double>(t.supported) / static_cast<double>(t.entities)) : "1.0000")
          << '\n';
      }
      write_artifact(hallucinations_csv, e.str());
      summary["unsupported_entities"] = unsupported;
    }
    write_artifact(report_json, summary.dump(2) + "\n");
    ctx.out << "report: " << verdicts.size() << " verdicts from " << pairwise.reviewers.size() << " reviewers\n";
  });
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"leitsatz: summarisation and evaluation pipeline for court decisions"};
  app.set_version_flag("--version", version());
  std::string config_path;
  std::vector<std::string> overrides;
  bool force = false;
  app.add_option("-c,--config", config_path, "Pipeline config file")->required();
  app.add_option("--set", overrides, "Override a config key, e.g. --set lexrank.k=3");
  app.add_flag("-f,--force", force, "Rerun even when the outputs are up to date");
  app.require_subcommand(1);

  auto* ingest = app.add_subcommand("ingest", "Read the corpus and extract the reasons sections");
  auto* split = app.add_subcommand("split", "Seeded train/valid/test split");
  auto* stats = app.add_subcommand("stats", "Token length table per split");
  auto* enrich = app.add_subcommand("enrich", "Tag legal entities in the reasons");
  auto* summarize_cmd = app.add_subcommand("summarize", "Produce summaries for one approach");
  std::string approach;
  summarize_cmd->add_option("--approach", approach, "lexrank, model_plain or model_enriched")
      ->required()
      ->check(CLI::IsMember({"lexrank", "model_plain", "model_enriched"}));
  auto* score = app.add_subcommand("score", "ROUGE and BERTScore against the guiding principles");
  auto* assign = app.add_subcommand("assign", "Distribute summaries over reviewers");
  auto* serve = app.add_subcommand("serve", "Run the blinded review service");
  auto* report = app.add_subcommand("report", "Agreement, fulfilment, correlation and entity reports");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfig;
  }

  try {
    std::map<std::string, std::string> flag_values;
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + o + "'");
      flag_values[config::env_name(o.substr(0, eq))] = o.substr(eq + 1);
    }
    const auto env = config::process_env();
    const config::EnvLookup lookup = [&](const std::string& name) -> std::optional<std::string> {
      if (const auto it = flag_values.find(name); it != flag_values.end()) return it->second;
      return env(name);
    };
    Context ctx{config::load_config(config_path, lookup), force, out, err};
    config::validate(ctx.cfg);
    fs::create_directories(ctx.cfg.output);

    if (ingest->parsed()) cmd_ingest(ctx);
    if (split->parsed()) cmd_split(ctx);
    if (stats->parsed()) cmd_stats(ctx);
    if (enrich->parsed()) cmd_enrich(ctx);
    if (summarize_cmd->parsed()) cmd_summarize(ctx, approach);
    if (score->parsed()) cmd_score(ctx);
    if (assign->parsed()) cmd_assign(ctx);
    if (serve->parsed()) cmd_serve(ctx);
    if (report->parsed()) cmd_report(ctx);
    return kExitOk;
  } catch (const corpus::IngestError& e) {
    err << "error: " << e.what() << '\n';
    for (const auto& r : e.errors()) err << "  " << r.file << ':' << r.line << ": " << r.message << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

}  // namespace leitsatz::cli

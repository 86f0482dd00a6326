#include "leitsatz/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "leitsatz/error.hpp"
#include "leitsatz/utf8.hpp"

namespace leitsatz::config {

namespace fs = std::filesystem;

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  };
}

std::string env_name(const std::string& key) {
  std::string out = "LEITSATZ_";
  for (char c : key) {
    out += std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::toupper(static_cast<unsigned char>(c))) : '_';
  }
  return out;
}

namespace {

std::string unquote(std::string v) {
  v = std::string(utf8::trim(v));
  if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') || (v.front() == '\'' && v.back() == '\'')))
    v = v.substr(1, v.size() - 2);
  return v;
}

class Reader {
 public:
  Reader(std::map<std::string, std::string> file, const EnvLookup& env) : file_(std::move(file)), env_(env) {}

  std::optional<std::string> raw(const std::string& key) {
    used_.insert(key);
    if (auto v = env_(env_name(key))) return unquote(*v);
    if (auto it = file_.find(key); it != file_.end()) return it->second;
    return std::nullopt;
  }

  std::string str(const std::string& key, const std::string& fallback) { return raw(key).value_or(fallback); }

  bool boolean(const std::string& key, bool fallback) {
    const auto v = raw(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "yes" || *v == "on" || *v == "1") return true;
    if (*v == "false" || *v == "no" || *v == "off" || *v == "0") return false;
    throw bad(key, "a boolean", *v);
  }

  template <typename Int>
  Int integer(const std::string& key, Int fallback) {
    const auto v = raw(key);
    if (!v) return fallback;
    Int out{};
    const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc{} || ptr != v->data() + v->size()) throw bad(key, "a non-negative integer", *v);
    return out;
  }

  double real(const std::string& key, double fallback) {
    const auto v = raw(key);
    if (!v) return fallback;
    try {
      std::size_t used = 0;
      const double out = std::stod(*v, &used);
      if (used != v->size()) throw std::invalid_argument("trailing");
      return out;
    } catch (const std::exception&) {
      throw bad(key, "a number", *v);
    }
  }

  std::vector<std::string> list(const std::string& key) {
    std::vector<std::string> out;
    const auto v = raw(key);
    if (!v) return out;
    std::size_t start = 0;
    while (start <= v->size()) {
      const auto comma = v->find(',', start);
      const auto item = utf8::trim(std::string_view(*v).substr(start, comma - start));
      if (!item.empty()) out.emplace_back(item);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return out;
  }

  // Names below `section.` in the file, e.g. reviewer ids under "tokens".
  std::vector<std::string> names_in(const std::string& section) const {
    std::vector<std::string> out;
    const auto prefix = section + ".";
    for (const auto& [k, _] : file_) {
      if (k.rfind(prefix, 0) == 0 && k.find('.', prefix.size()) == std::string::npos) out.push_back(k.substr(prefix.size()));
    }
    return out;
  }

  std::set<std::string> sections_with_prefix(const std::string& prefix) const {
    std::set<std::string> out;
    for (const auto& [k, _] : file_) {
      if (k.rfind(prefix, 0) != 0) continue;
      const auto dot = k.rfind('.');
      if (dot > prefix.size()) out.insert(k.substr(prefix.size(), dot - prefix.size()));
    }
    return out;
  }

  void reject_unknown() const {
    for (const auto& [k, _] : file_) {
      if (!used_.count(k)) throw ConfigError("config field '" + k + "': unknown key");
    }
  }

  static ConfigError bad(const std::string& key, const std::string& expected, const std::string& got) {
    return ConfigError("config field '" + key + "': expected " + expected + ", got '" + got + "'");
  }

 private:
  std::map<std::string, std::string> file_;
  std::set<std::string> used_;
  const EnvLookup& env_;
};

fs::path resolve(const fs::path& base, const std::string& value) {
  const fs::path p(value);
  return p.is_absolute() ? p : (base / p).lexically_normal();
}

Endpoint read_endpoint(Reader& r, const std::string& section) {
  Endpoint e;
  e.base_url = r.str(section + ".url", "");
  e.auth_header = r.str(section + ".auth_header", "");
  e.auth_env = r.str(section + ".auth_env", "");
  e.timeout_seconds = r.real(section + ".timeout", 60.0);
  return e;
}

}  // namespace

PipelineConfig parse_config(std::istream& in, const fs::path& base_dir, const EnvLookup& env) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  std::map<std::string, std::string> flat;
  for (const auto& [section, children] : tree) {
    if (children.empty()) throw ConfigError("config key '" + section + "' must sit inside a [section]");
    for (const auto& [key, value] : children) flat[section + "." + key] = unquote(value.data());
  }
  Reader r(std::move(flat), env);
  PipelineConfig c;

  if (auto v = r.raw("paths.corpus")) c.corpus = resolve(base_dir, *v);
  const auto format = r.str("paths.corpus_format", "jsonl");
  if (format == "jsonl") {
    c.corpus_format = corpus::InputFormat::jsonl;
  } else if (format == "xml_dir") {
    c.corpus_format = corpus::InputFormat::xml_dir;
  } else {
    throw Reader::bad("paths.corpus_format", "'jsonl' or 'xml_dir'", format);
  }
  if (auto v = r.raw("paths.spans")) c.spans = resolve(base_dir, *v);
  if (auto v = r.raw("paths.abbreviations")) c.abbreviations = resolve(base_dir, *v);
  if (auto v = r.raw("paths.verdicts")) c.verdicts = resolve(base_dir, *v);
  c.output = resolve(base_dir, r.str("paths.output", "out"));

  c.reasons.heading = r.str("reasons.heading", c.reasons.heading);
  c.reasons.excluded_label = r.str("reasons.excluded_label", c.reasons.excluded_label);

  c.split.train = r.real("split.train", c.split.train);
  c.split.valid = r.real("split.valid", c.split.valid);
  c.split.test = r.real("split.test", c.split.test);
  c.split_seed = r.integer<std::uint64_t>("split.seed", c.split_seed);
  c.max_gold_tokens = r.integer<std::size_t>("split.max_gold_tokens", 0);

  c.tokenizer.kind = r.str("tokenizer.kind", "words");
  c.tokenizer.endpoint = read_endpoint(r, "tokenizer");
  c.tokenizer.slack = r.integer<std::size_t>("tokenizer.slack", 1);

  c.tag_kinds = r.list("entities.kinds");

  c.summarize_subset = r.str("summarize.subset", "all");
  c.lexrank.k = r.integer<std::size_t>("lexrank.k", c.lexrank.k);
  c.lexrank.threshold = r.real("lexrank.threshold", c.lexrank.threshold);
  c.lexrank.damping = r.real("lexrank.damping", c.lexrank.damping);
  c.lexrank.tol = r.real("lexrank.tol", c.lexrank.tol);
  c.lexrank.max_iters = r.integer<std::size_t>("lexrank.max_iters", c.lexrank.max_iters);

  c.context_window = r.integer<std::size_t>("generation.context_window", c.context_window);
  c.max_new_tokens = r.integer<std::size_t>("generation.max_new_tokens", c.max_new_tokens);
  c.generation_concurrency = r.integer<std::size_t>("generation.concurrency", c.generation_concurrency);
  for (const auto& approach : r.sections_with_prefix("generation.")) {
    const auto section = "generation." + approach;
    GenerationProfile g;
    g.approach = approach;
    g.endpoint = read_endpoint(r, section);
    g.prompt_overhead = r.integer<std::size_t>(section + ".prompt_overhead", 64);
    c.generation[approach] = std::move(g);
  }

  c.rouge1 = r.boolean("metrics.rouge1", true);
  c.rouge2 = r.boolean("metrics.rouge2", true);
  c.rougeL = r.boolean("metrics.rougeL", true);
  c.bertscore = r.boolean("metrics.bertscore", false);
  c.bertscore_idf = r.boolean("metrics.bertscore_idf", false);
  if (r.raw("metrics.bertscore_baseline")) c.bertscore_baseline = r.real("metrics.bertscore_baseline", 0.0);
  c.workers = r.integer<std::size_t>("metrics.workers", 0);
  c.embeddings.kind = r.str("embeddings.kind", "hashing");
  c.embeddings.dim = r.integer<std::size_t>("embeddings.dim", 64);
  if (auto v = r.raw("embeddings.file")) c.embeddings.file = resolve(base_dir, *v);
  c.embeddings.endpoint = read_endpoint(r, "embeddings");

  c.per_item = r.integer<std::size_t>("assignment.per_item", 3);
  c.assignment_seed = r.integer<std::uint64_t>("assignment.seed", 1);
  c.reviewers = r.list("assignment.reviewers");

  c.service.host = r.str("service.host", c.service.host);
  c.service.port = r.integer<int>("service.port", c.service.port);
  c.service.store = resolve(base_dir, r.str("service.store", (c.output / "verdicts.jsonl").string()));
  c.service.show_excerpt = r.boolean("service.show_excerpt", true);
  c.service.admin_token = r.str("service.admin_token", "");
  auto token_names = r.names_in("tokens");
  for (const auto& reviewer : c.reviewers) token_names.push_back(reviewer);
  for (const auto& reviewer : token_names) {
    if (auto t = r.raw("tokens." + reviewer)) c.service.reviewer_tokens[reviewer] = *t;
  }

  r.reject_unknown();
  return c;
}

PipelineConfig load_config(const fs::path& path, const EnvLookup& env) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  auto c = parse_config(in, fs::absolute(path).parent_path(), env);
  c.source = path;
  return c;
}

void validate(const PipelineConfig& c) {
  auto fail = [](const std::string& field, const std::string& message) {
    throw ConfigError("config field '" + field + "': " + message);
  };
  if (c.corpus.empty()) fail("paths.corpus", "is required");
  if (!fs::exists(c.corpus)) fail("paths.corpus", "does not exist: " + c.corpus.string());
  if (c.spans && !fs::exists(*c.spans)) fail("paths.spans", "does not exist: " + c.spans->string());
  if (c.abbreviations && !fs::exists(*c.abbreviations))
    fail("paths.abbreviations", "does not exist: " + c.abbreviations->string());
  for (double r : {c.split.train, c.split.valid, c.split.test}) {
    if (!(r > 0.0)) fail("split", "ratios must be positive");
  }
  if (std::abs(c.split.train + c.split.valid + c.split.test - 1.0) > 1e-9) fail("split", "ratios must sum to 1");
  if (c.tokenizer.kind != "words" && c.tokenizer.kind != "service")
    fail("tokenizer.kind", "expected 'words' or 'service', got '" + c.tokenizer.kind + "'");
  if (c.tokenizer.kind == "service" && c.tokenizer.endpoint.base_url.empty()) fail("tokenizer.url", "is required for the service tokenizer");
  if (c.summarize_subset != "all" && c.summarize_subset != "train" && c.summarize_subset != "valid" &&
      c.summarize_subset != "test")
    fail("summarize.subset", "expected all, train, valid or test");
  if (c.lexrank.k == 0) fail("lexrank.k", "must be at least 1");
  if (c.lexrank.threshold < 0.0 || c.lexrank.threshold > 1.0) fail("lexrank.threshold", "must lie in [0, 1]");
  if (!(c.lexrank.damping > 0.0 && c.lexrank.damping < 1.0)) fail("lexrank.damping", "must lie in (0, 1)");
  if (c.max_new_tokens >= c.context_window)
    fail("generation.max_new_tokens", "must be smaller than generation.context_window");
  for (const auto& [approach, g] : c.generation) {
    if (approach != "model_plain" && approach != "model_enriched")
      fail("generation." + approach, "unknown approach; expected model_plain or model_enriched");
    if (g.endpoint.base_url.empty()) fail("generation." + approach + ".url", "is required");
    if (c.max_new_tokens + g.prompt_overhead >= c.context_window)
      fail("generation." + approach + ".prompt_overhead", "leaves no room for input in the context window");
  }
  if (c.embeddings.kind != "hashing" && c.embeddings.kind != "file" && c.embeddings.kind != "service")
    fail("embeddings.kind", "expected hashing, file or service");
  if (c.embeddings.kind == "file" && !fs::exists(c.embeddings.file)) fail("embeddings.file", "does not exist");
  if (c.embeddings.kind == "service" && c.embeddings.endpoint.base_url.empty()) fail("embeddings.url", "is required");
  if (c.embeddings.dim == 0) fail("embeddings.dim", "must be at least 1");
  if (c.per_item == 0) fail("assignment.per_item", "must be at least 1");
  if (!c.reviewers.empty() && c.reviewers.size() < c.per_item)
    fail("assignment.reviewers", "fewer reviewers than assignment.per_item");
  if (c.service.port <= 0 || c.service.port > 65535) fail("service.port", "must lie in 1..65535");
}

nlohmann::json to_json(const PipelineConfig& c) {
  nlohmann::json generation = nlohmann::json::object();
  for (const auto& [approach, g] : c.generation) {
    generation[approach] = {{"url", g.endpoint.base_url}, {"prompt_overhead", g.prompt_overhead}};
  }
  return {
      {"corpus", c.corpus.string()},
      {"corpus_format", c.corpus_format == corpus::InputFormat::jsonl ? "jsonl" : "xml_dir"},
      {"spans", c.spans ? c.spans->string() : ""},
      {"output", c.output.string()},
      {"reasons", {{"heading", c.reasons.heading}, {"excluded_label", c.reasons.excluded_label}}},
      {"split", {{"train", c.split.train}, {"valid", c.split.valid}, {"test", c.split.test},
                 {"seed", c.split_seed}, {"max_gold_tokens", c.max_gold_tokens}}},
      {"tokenizer", {{"kind", c.tokenizer.kind}, {"url", c.tokenizer.endpoint.base_url}, {"slack", c.tokenizer.slack}}},
      {"lexrank", {{"k", c.lexrank.k}, {"threshold", c.lexrank.threshold}, {"damping", c.lexrank.damping},
                   {"tol", c.lexrank.tol}, {"max_iters", c.lexrank.max_iters}}},
      {"generation", {{"context_window", c.context_window}, {"max_new_tokens", c.max_new_tokens},
                      {"profiles", generation}}},
      {"metrics", {{"rouge1", c.rouge1}, {"rouge2", c.rouge2}, {"rougeL", c.rougeL}, {"bertscore", c.bertscore},
                   {"bertscore_idf", c.bertscore_idf}, {"embeddings", c.embeddings.kind}, {"dim", c.embeddings.dim}}},
      {"assignment", {{"per_item", c.per_item}, {"seed", c.assignment_seed}, {"reviewers", c.reviewers}}},
  };
}

}  // namespace leitsatz::config

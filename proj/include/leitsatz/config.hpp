#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "leitsatz/corpus.hpp"
#include "leitsatz/http.hpp"
#include "leitsatz/summarize.hpp"

namespace leitsatz::config {

// Looks up an environment variable; empty when unset.
using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

/// Environment variable that overrides `key`, e.g. lexrank.k -> LEITSATZ_LEXRANK_K.
std::string env_name(const std::string& key);

struct TokenizerProfile {
  std::string kind = "words";  // "words" or "service"
  Endpoint endpoint;
  std::size_t slack = 1;
};

struct GenerationProfile {
  std::string approach;  // model_plain or model_enriched
  Endpoint endpoint;
  std::size_t prompt_overhead = 64;
};

struct EmbeddingProfile {
  std::string kind = "hashing";  // hashing, file or service
  std::size_t dim = 64;
  std::filesystem::path file;
  Endpoint endpoint;
};

struct ServiceSettings {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path store;  // verdict JSONL, defaults to <output>/verdicts.jsonl
  bool show_excerpt = true;
  std::string admin_token;
  std::map<std::string, std::string> reviewer_tokens;  // reviewer -> token
};

struct PipelineConfig {
  std::filesystem::path source;  // the file this was read from

  std::filesystem::path corpus;
  corpus::InputFormat corpus_format = corpus::InputFormat::jsonl;
  std::optional<std::filesystem::path> spans;
  std::optional<std::filesystem::path> abbreviations;
  std::optional<std::filesystem::path> verdicts;
  std::filesystem::path output = "out";

  corpus::ReasonsConfig reasons;
  corpus::SplitRatios split;
  std::uint64_t split_seed = 1;
  std::string summarize_subset = "all";  // all, train, valid or test
  std::size_t max_gold_tokens = 0;       // 0 disables the outlier filter

  TokenizerProfile tokenizer;
  std::vector<std::string> tag_kinds;
  std::map<std::string, GenerationProfile> generation;  // by approach name

  summarize::LexRankParams lexrank;
  std::size_t context_window = 32768;
  std::size_t max_new_tokens = 750;
  std::size_t generation_concurrency = 4;

  bool rouge1 = true;
  bool rouge2 = true;
  bool rougeL = true;
  bool bertscore = false;
  bool bertscore_idf = false;
  std::optional<double> bertscore_baseline;
  EmbeddingProfile embeddings;
  std::size_t workers = 0;

  std::size_t per_item = 3;
  std::uint64_t assignment_seed = 1;
  std::vector<std::string> reviewers;

  ServiceSettings service;
};

/// Parses the key-value config. `base_dir` anchors relative paths. Every
/// key `section.name` may be overridden by the environment variable
/// LEITSATZ_SECTION_NAME (dots and dashes become underscores). Unknown keys
/// and malformed values raise ConfigError naming the field.
PipelineConfig parse_config(std::istream& in, const std::filesystem::path& base_dir,
                            const EnvLookup& env = process_env());
PipelineConfig load_config(const std::filesystem::path& path, const EnvLookup& env = process_env());

/// Cross-field checks: ratios, budgets, reviewer count, referenced files.
void validate(const PipelineConfig& config);

/// Effective settings for the run manifest. Secrets are omitted.
nlohmann::json to_json(const PipelineConfig& config);

}  // namespace leitsatz::config

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "leitsatz/http.hpp"

namespace leitsatz::textproc {

/// Lowercased tokens with their byte ranges in the source text.
struct TokenStream {
  std::vector<std::string> tokens;
  std::vector<std::pair<std::size_t, std::size_t>> offsets;  // [start, end)

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
};

/// Splits text into lowercased word, number and punctuation tokens.
///
/// Punctuation becomes a token of its own except where it belongs to a
/// protected token: "§" and "§§" are kept as section signs, numerals keep
/// inner '.', ',' and '/' between digits ("1.000", "2,5", docket "123/09"),
/// and hyphens between alphanumerics stay inside compounds. Tokenizing the
/// space-joined output yields the same tokens again.
TokenStream tokenize(std::string_view text);

/// Convenience: tokens only.
std::vector<std::string> words(std::string_view text);

/// True for tokens made only of letters/digits (no punctuation token).
bool is_word_token(std::string_view token);

struct Sentence {
  std::string text;
  std::size_t start = 0;  // byte offsets into the source
  std::size_t end = 0;
};

using SentenceList = std::vector<Sentence>;

/// Abbreviations that do not end a sentence. Entries may span several words
/// ("u. a."); matching is case-insensitive and anchored at a word boundary.
class AbbreviationList {
 public:
  AbbreviationList() = default;
  explicit AbbreviationList(std::vector<std::string> entries);

  /// Built-in list of common German legal abbreviations.
  static const AbbreviationList& defaults();

  /// One entry per line, UTF-8; blank lines and lines starting with '#' skipped.
  static AbbreviationList load(const std::filesystem::path& path);

  /// Whether `text` ends (at its last byte) with a listed abbreviation that
  /// starts at a word boundary.
  bool ends_with_abbreviation(std::string_view text) const;

  const std::vector<std::string>& entries() const { return entries_; }

 private:
  std::vector<std::string> entries_;
  std::vector<std::string> lowered_;
};

/// Splits at '.', '!' or '?' (plus trailing quotes/brackets) that are
/// followed by whitespace and an uppercase letter, "§", a digit or an
/// opening quote/bracket, and at blank lines. No split after listed
/// abbreviations, after bare numerals or Roman numerals (ordinals, outline
/// markers) or inside parentheses. Sentences are whitespace-trimmed and
/// together cover all non-whitespace text.
SentenceList split_sentences(std::string_view text,
                             const AbbreviationList& abbreviations = AbbreviationList::defaults());

using NGram = std::vector<std::string>;
using NGramCounts = std::map<NGram, std::size_t>;

/// Multiset of the len-n+1 consecutive n-grams. Throws ConfigError for n == 0.
NGramCounts ngrams(const std::vector<std::string>& tokens, std::size_t n);

/// Pluggable token counting. Budgets are measured in the generator's tokens,
/// which only an external tokenizer knows; the word counter is the fallback.
class TokenCounter {
 public:
  virtual ~TokenCounter() = default;

  virtual std::size_t count(std::string_view text) const = 0;
  virtual std::vector<std::size_t> count_batch(const std::vector<std::string>& texts) const;

  /// Upper bound on count(a + b) - count(a) - count(b).
  virtual std::size_t concat_slack() const = 0;
  virtual std::string name() const = 0;
};

/// Counts tokenize() tokens. count(a+b) <= count(a) + count(b) + 1 (a
/// numeral or compound may merge across the seam only by shrinking).
class WordTokenCounter final : public TokenCounter {
 public:
  std::size_t count(std::string_view text) const override;
  std::size_t concat_slack() const override { return 1; }
  std::string name() const override { return "word"; }
};

/// Client for a tokenizer service: POST /count {"texts":[...]} -> {"counts":[...]}.
/// Transport failures surface as ServiceError.
class ServiceTokenCounter final : public TokenCounter {
 public:
  explicit ServiceTokenCounter(Endpoint endpoint, std::size_t slack = 1)
      : endpoint_(std::move(endpoint)), slack_(slack) {}

  std::size_t count(std::string_view text) const override;
  std::vector<std::size_t> count_batch(const std::vector<std::string>& texts) const override;
  std::size_t concat_slack() const override { return slack_; }
  std::string name() const override { return "service:" + endpoint_.base_url; }

 private:
  Endpoint endpoint_;
  std::size_t slack_;
};

std::size_t count_tokens(std::string_view text, const TokenCounter& counter);

}  // namespace leitsatz::textproc

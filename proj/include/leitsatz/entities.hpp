#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "leitsatz/error.hpp"

namespace leitsatz::entities {

/// A typed byte range [start, end) of a text.
struct EntitySpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string kind;     // tag name, e.g. "GS"
  std::string surface;  // text[start, end)

  bool operator==(const EntitySpan&) const = default;
};

/// Tag names the enricher may emit. Defaults: GS (law), RS (court decision),
/// LIT (legal literature), VO (regulation), EUN (EU norm), PER, ORG, LD.
class TagVocabulary {
 public:
  TagVocabulary();
  explicit TagVocabulary(std::vector<std::string> kinds);

  static const TagVocabulary& defaults();

  bool contains(std::string_view kind) const;
  const std::vector<std::string>& kinds() const { return kinds_; }

  /// "<KIND>" and "</KIND>" for every kind, the list handed to the generator
  /// as special tokens.
  std::vector<std::string> special_tokens() const;
  nlohmann::json to_json() const;

 private:
  std::vector<std::string> kinds_;
};

/// Built-in detector for statute citations (GS: "§ 307 Abs. 1 Satz 2 BGB")
/// and court-decision citations (RS: "BGH, Urteil vom 12. Mai 2010 - VIII ZR
/// 123/09"). Overlaps are resolved leftmost-longest.
std::vector<EntitySpan> detect_entities(std::string_view text);

/// Throws DataError when spans are out of range, empty, mis-ordered,
/// overlapping, carry a wrong surface or an unknown kind.
void validate_spans(std::string_view text, const std::vector<EntitySpan>& spans,
                    const TagVocabulary& vocabulary = TagVocabulary::defaults());

struct SpanValidationError {
  std::string id;
  std::string message;
};

struct ImportedSpans {
  std::map<std::string, std::vector<EntitySpan>> spans;  // by document id
  std::vector<SpanValidationError> errors;
};

/// Reads span JSONL ({"id", "spans":[{"start","end","kind"}]}) and validates
/// each document against `texts`. Offsets in the file count Unicode code
/// points; the returned spans use byte offsets. Documents that fail
/// validation are reported in `errors` and left out of `spans`.
ImportedSpans import_spans(std::istream& in, const std::map<std::string, std::string>& texts,
                           const TagVocabulary& vocabulary = TagVocabulary::defaults());
ImportedSpans import_spans(const std::filesystem::path& path,
                           const std::map<std::string, std::string>& texts,
                           const TagVocabulary& vocabulary = TagVocabulary::defaults());

/// Span JSONL line for one document (code point offsets).
nlohmann::json spans_to_json(const std::string& id, std::string_view text,
                             const std::vector<EntitySpan>& spans);

/// Wraps every span as "<KIND> surface </KIND>". Text outside the spans is
/// copied unchanged.
std::string enrich(std::string_view text, const std::vector<EntitySpan>& spans,
                   const TagVocabulary& vocabulary = TagVocabulary::defaults());

struct Stripped {
  std::string text;
  std::vector<EntitySpan> spans;

  bool operator==(const Stripped&) const = default;
};

class TagError : public DataError {
 public:
  TagError(const std::string& what, std::size_t position) : DataError(what), position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

/// Inverse of enrich. Throws TagError (with byte position) on unknown,
/// nested, mismatched or unbalanced tags.
Stripped strip_tags(std::string_view tagged,
                    const TagVocabulary& vocabulary = TagVocabulary::defaults());

struct EntityAudit {
  std::vector<EntitySpan> generated_entities;
  std::size_t supported = 0;
  std::vector<std::string> unsupported;
  double support_rate = 1.0;
};

/// An entity of the summary counts as supported when its surface, with
/// whitespace runs collapsed, occurs in the equally collapsed source.
/// `kinds` restricts which detected kinds are audited (empty = all).
EntityAudit audit_hallucinations(std::string_view summary, std::string_view source,
                                 const std::set<std::string>& kinds = {});

}  // namespace leitsatz::entities

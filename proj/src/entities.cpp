#include "leitsatz/entities.hpp"

#include <algorithm>
#include <fstream>
#include <regex>

#include "leitsatz/utf8.hpp"

namespace leitsatz::entities {

using nlohmann::json;

TagVocabulary::TagVocabulary() : TagVocabulary({"GS", "RS", "LIT", "VO", "EUN", "PER", "ORG", "LD"}) {}

TagVocabulary::TagVocabulary(std::vector<std::string> kinds) : kinds_(std::move(kinds)) {
  for (const auto& k : kinds_) {
    if (k.empty() || !std::all_of(k.begin(), k.end(), [](char c) {
          return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z');
        }))
      throw ConfigError("tag kinds must be non-empty ASCII letters: \"" + k + "\"");
  }
}

const TagVocabulary& TagVocabulary::defaults() {
  static const TagVocabulary vocabulary;
  return vocabulary;
}

bool TagVocabulary::contains(std::string_view kind) const {
  return std::find(kinds_.begin(), kinds_.end(), kind) != kinds_.end();
}

std::vector<std::string> TagVocabulary::special_tokens() const {
  std::vector<std::string> out;
  for (const auto& k : kinds_) {
    out.push_back("<" + k + ">");
    out.push_back("</" + k + ">");
  }
  return out;
}

json TagVocabulary::to_json() const { return special_tokens(); }

// ---------------------------------------------------------------------------
// Detection

namespace {

// Patterns operate on UTF-8 bytes; multi-byte characters appear only as
// literal sequences outside bracket expressions.
#define WS "(?:\\s|\xC2\xA0)"
#define NUM "\\d+[a-z]?"

const std::regex& statute_pattern() {
  static const std::regex re(
      "(?:\xC2\xA7(?:\xC2\xA7)?|Art\\.|Artikel)" WS "*" NUM
      "(?:" WS "*(?:,|und|bis|-|\xE2\x80\x93)" WS "*" NUM ")*"
      "(?:" WS "+(?:Abs\\.|Absatz|Satz|S\\.|Nr\\.|Halbsatz|Hs\\.|Alt\\.|Var\\.|lit\\.|Buchst\\.)" WS "*" NUM
      "(?:" WS "*(?:,|und)" WS "*" NUM ")*)*"
      WS "+[A-Z][A-Za-z]*[A-Z][A-Za-z]*(?:-[A-Za-z]+)?\\b",
      std::regex::ECMAScript | std::regex::optimize);
  return re;
}

const std::regex& decision_pattern() {
#define LOWER "(?:[a-z]|\xC3\xA4|\xC3\xB6|\xC3\xBC|\xC3\x9F)"
#define COURT                                                                             \
  "(?:BGH|BVerfG|BVerwG|BAG|BFH|BSG|EuGH|EGMR|RG|KG|(?:OLG|LG|AG|LAG|OVG|VG|FG|LSG)(?:" WS \
  "+[A-Z]" LOWER "+(?:" WS "+am" WS "+[A-Z]" LOWER "+)?)?)"
#define TYPE \
  "(?:Urteil|Beschluss|Beschlu\xC3\x9F|Vers\xC3\xA4umnisurteil|Teilurteil|Vorlagebeschluss|Urt\\.|Beschl\\.)"
#define MONTH \
  "(?:Januar|Februar|M\xC3\xA4rz|April|Mai|Juni|Juli|August|September|Oktober|November|Dezember)"
#define DATE "vom" WS "+\\d{1,2}\\." WS "*(?:\\d{1,2}\\." WS "*\\d{2,4}|" MONTH WS "+\\d{4})"
#define DOCKET "(?:[IVX]+[a-z]?|\\d+)" WS "+[A-Z][A-Za-z]{0,4}" WS "+\\d+/\\d{2,4}"
#define SEP WS "*(?:,|-|\xE2\x80\x93|\xE2\x80\x94)?" WS "*"
  static const std::regex re(
      "\\b" COURT ",?" WS "+" TYPE "(?:" WS "+" DATE "(?:" SEP DOCKET ")?|" SEP DOCKET ")",
      std::regex::ECMAScript | std::regex::optimize);
  return re;
#undef LOWER
#undef COURT
#undef TYPE
#undef MONTH
#undef DATE
#undef DOCKET
#undef SEP
}

#undef WS
#undef NUM

void collect(std::string_view text, const std::regex& re, const char* kind,
             std::vector<EntitySpan>& out) {
  using It = std::regex_iterator<std::string_view::const_iterator>;
  for (It it(text.begin(), text.end(), re), end; it != end; ++it) {
    const auto start = static_cast<std::size_t>(it->position());
    const auto len = static_cast<std::size_t>(it->length());
    out.push_back({start, start + len, kind, std::string(text.substr(start, len))});
  }
}

}  // namespace

std::vector<EntitySpan> detect_entities(std::string_view text) {
  std::vector<EntitySpan> candidates;
  collect(text, statute_pattern(), "GS", candidates);
  collect(text, decision_pattern(), "RS", candidates);
  std::sort(candidates.begin(), candidates.end(), [](const EntitySpan& a, const EntitySpan& b) {
    if (a.start != b.start) return a.start < b.start;
    return a.end > b.end;
  });
  std::vector<EntitySpan> out;
  std::size_t covered = 0;
  for (auto& c : candidates) {
    if (!out.empty() && c.start < covered) continue;
    covered = c.end;
    out.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Validation and import

namespace {

std::string describe_span(std::size_t start, std::size_t end, const std::string& kind) {
  return "(" + std::to_string(start) + "," + std::to_string(end) + "," + kind + ")";
}

// Checks ordering, range and overlap on already sorted spans; `limit` is the
// text length in the unit the offsets use.
void check_layout(const std::vector<EntitySpan>& sorted, std::size_t limit,
                  const TagVocabulary& vocabulary) {
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto& s = sorted[i];
    if (!vocabulary.contains(s.kind)) throw DataError("unknown entity kind \"" + s.kind + "\"");
    if (s.start >= s.end)
      throw DataError("empty or inverted span " + describe_span(s.start, s.end, s.kind));
    if (s.end > limit)
      throw DataError("span " + describe_span(s.start, s.end, s.kind) +
                      " exceeds text length " + std::to_string(limit));
    if (i > 0 && s.start < sorted[i - 1].end)
      throw DataError("overlapping spans " +
                      describe_span(sorted[i - 1].start, sorted[i - 1].end, sorted[i - 1].kind) +
                      " and " + describe_span(s.start, s.end, s.kind));
  }
}

std::vector<EntitySpan> sorted_copy(std::vector<EntitySpan> spans) {
  std::stable_sort(spans.begin(), spans.end(),
                   [](const EntitySpan& a, const EntitySpan& b) { return a.start < b.start; });
  return spans;
}

}  // namespace

void validate_spans(std::string_view text, const std::vector<EntitySpan>& spans,
                    const TagVocabulary& vocabulary) {
  const auto sorted = sorted_copy(spans);
  check_layout(sorted, text.size(), vocabulary);
  for (const auto& s : sorted) {
    if (!s.surface.empty() && text.substr(s.start, s.end - s.start) != s.surface)
      throw DataError("span " + describe_span(s.start, s.end, s.kind) +
                      " surface does not match the text");
  }
}

ImportedSpans import_spans(std::istream& in, const std::map<std::string, std::string>& texts,
                           const TagVocabulary& vocabulary) {
  ImportedSpans out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (utf8::trim(line).empty()) continue;
    std::string id;
    try {
      const auto j = json::parse(line);
      id = j.at("id").get<std::string>();
      const auto text_it = texts.find(id);
      if (text_it == texts.end()) throw DataError("no document text for id \"" + id + "\"");
      const std::string& text = text_it->second;

      std::vector<EntitySpan> spans;
      for (const auto& s : j.at("spans")) {
        spans.push_back({s.at("start").get<std::size_t>(), s.at("end").get<std::size_t>(),
                         s.at("kind").get<std::string>(), ""});
      }
      spans = sorted_copy(std::move(spans));
      check_layout(spans, utf8::length(text), vocabulary);
      for (auto& s : spans) {
        s.start = utf8::byte_offset(text, s.start);
        s.end = utf8::byte_offset(text, s.end);
        s.surface = text.substr(s.start, s.end - s.start);
      }
      if (out.spans.count(id)) throw DataError("duplicate span record for id \"" + id + "\"");
      out.spans.emplace(id, std::move(spans));
    } catch (const json::exception& e) {
      out.errors.push_back({id, "line " + std::to_string(line_no) + ": " + e.what()});
    } catch (const DataError& e) {
      out.errors.push_back({id, "line " + std::to_string(line_no) + ": " + e.what()});
    }
  }
  return out;
}

ImportedSpans import_spans(const std::filesystem::path& path,
                           const std::map<std::string, std::string>& texts,
                           const TagVocabulary& vocabulary) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open span file " + path.string());
  return import_spans(in, texts, vocabulary);
}

json spans_to_json(const std::string& id, std::string_view text, const std::vector<EntitySpan>& spans) {
  json list = json::array();
  for (const auto& s : spans) {
    list.push_back({{"start", utf8::codepoint_offset(text, s.start)},
                    {"end", utf8::codepoint_offset(text, s.end)},
                    {"kind", s.kind}});
  }
  return {{"id", id}, {"spans", list}};
}

// ---------------------------------------------------------------------------
// Tagging

std::string enrich(std::string_view text, const std::vector<EntitySpan>& spans,
                   const TagVocabulary& vocabulary) {
  validate_spans(text, spans, vocabulary);
  const auto sorted = sorted_copy(spans);
  std::string out(text);
  // Right to left, so earlier offsets stay valid while inserting.
  for (auto it = sorted.rbegin(); it != sorted.rend(); ++it) {
    out.insert(it->end, " </" + it->kind + ">");
    out.insert(it->start, "<" + it->kind + "> ");
  }
  return out;
}

Stripped strip_tags(std::string_view tagged, const TagVocabulary& vocabulary) {
  Stripped out;
  out.text.reserve(tagged.size());
  bool open = false;
  std::string open_kind;
  std::size_t open_pos = 0;
  std::size_t span_start = 0;

  std::size_t i = 0;
  while (i < tagged.size()) {
    if (tagged[i] == '<') {
      std::size_t j = i + 1;
      const bool closing = j < tagged.size() && tagged[j] == '/';
      if (closing) ++j;
      const std::size_t name_start = j;
      while (j < tagged.size() && ((tagged[j] >= 'A' && tagged[j] <= 'Z') ||
                                   (tagged[j] >= 'a' && tagged[j] <= 'z')))
        ++j;
      if (j > name_start && j < tagged.size() && tagged[j] == '>') {
        const std::string name(tagged.substr(name_start, j - name_start));
        if (!vocabulary.contains(name)) throw TagError("unknown tag <" + std::string(closing ? "/" : "") + name + ">", i);
        if (!closing) {
          if (open)
            throw TagError("tag <" + name + "> opened inside <" + open_kind + "> (opened at " +
                               std::to_string(open_pos) + ")",
                           i);
          open = true;
          open_kind = name;
          open_pos = i;
          i = j + 1;
          if (i < tagged.size() && tagged[i] == ' ') ++i;
          span_start = out.text.size();
        } else {
          if (!open) throw TagError("closing tag </" + name + "> without opening tag", i);
          if (name != open_kind)
            throw TagError("closing tag </" + name + "> does not match <" + open_kind + ">", i);
          if (out.text.size() > span_start && out.text.back() == ' ') out.text.pop_back();
          if (out.text.size() == span_start) throw TagError("empty entity <" + name + ">", i);
          out.spans.push_back({span_start, out.text.size(), name, out.text.substr(span_start)});
          open = false;
          i = j + 1;
        }
        continue;
      }
    }
    out.text.push_back(tagged[i]);
    ++i;
  }
  if (open) throw TagError("unclosed tag <" + open_kind + ">", open_pos);
  return out;
}

// ---------------------------------------------------------------------------

EntityAudit audit_hallucinations(std::string_view summary, std::string_view source,
                                 const std::set<std::string>& kinds) {
  EntityAudit audit;
  const std::string normalized_source = utf8::collapse_whitespace(source);
  for (auto& e : detect_entities(summary)) {
    if (!kinds.empty() && !kinds.count(e.kind)) continue;
    const auto needle = utf8::collapse_whitespace(e.surface);
    if (normalized_source.find(needle) != std::string::npos) {
      ++audit.supported;
    } else {
      audit.unsupported.push_back(e.surface);
    }
    audit.generated_entities.push_back(std::move(e));
  }
  const auto total = audit.generated_entities.size();
  audit.support_rate = total == 0 ? 1.0 : static_cast<double>(audit.supported) / static_cast<double>(total);
  return audit;
}

}  // namespace leitsatz::entities

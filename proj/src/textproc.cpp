#include "leitsatz/textproc.hpp"

#include <algorithm>
#include <fstream>

#include "leitsatz/error.hpp"
#include "leitsatz/utf8.hpp"

namespace leitsatz::textproc {

namespace {

constexpr char32_t kSectionSign = 0xA7;

bool is_numeral_joiner(char32_t cp) { return cp == '.' || cp == ',' || cp == '/'; }

bool next_is(std::string_view text, std::size_t pos, bool (*pred)(char32_t)) {
  return pos < text.size() && pred(utf8::decode(text, pos).value);
}

bool digit_pred(char32_t cp) { return utf8::is_digit(cp); }
bool alnum_pred(char32_t cp) { return utf8::is_alnum(cp); }

}  // namespace

TokenStream tokenize(std::string_view text) {
  TokenStream out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = utf8::decode(text, i);
    if (utf8::is_space(c.value)) {
      i += c.length;
      continue;
    }
    const std::size_t start = i;
    if (c.value == kSectionSign) {
      i += c.length;
      if (i < text.size() && utf8::decode(text, i).value == kSectionSign) i += c.length;
    } else if (utf8::is_alnum(c.value)) {
      char32_t prev = c.value;
      i += c.length;
      while (i < text.size()) {
        const auto d = utf8::decode(text, i);
        if (utf8::is_alnum(d.value)) {
          prev = d.value;
          i += d.length;
        } else if (is_numeral_joiner(d.value) && utf8::is_digit(prev) &&
                   next_is(text, i + 1, digit_pred)) {
          prev = d.value;
          i += 1;
        } else if (d.value == '-' && utf8::is_alnum(prev) && next_is(text, i + 1, alnum_pred)) {
          prev = d.value;
          i += 1;
        } else {
          break;
        }
      }
    } else {
      i += c.length;
    }
    out.tokens.push_back(utf8::to_lower(text.substr(start, i - start)));
    out.offsets.emplace_back(start, i);
  }
  return out;
}

std::vector<std::string> words(std::string_view text) { return tokenize(text).tokens; }

bool is_word_token(std::string_view token) {
  if (token.empty()) return false;
  for (std::size_t i = 0; i < token.size();) {
    const auto c = utf8::decode(token, i);
    if (!utf8::is_alnum(c.value) && !(i > 0 && is_numeral_joiner(c.value)) &&
        !(i > 0 && c.value == '-'))
      return false;
    i += c.length;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Abbreviations

AbbreviationList::AbbreviationList(std::vector<std::string> entries) : entries_(std::move(entries)) {
  lowered_.reserve(entries_.size());
  for (const auto& e : entries_) lowered_.push_back(utf8::to_lower(e));
}

const AbbreviationList& AbbreviationList::defaults() {
  static const AbbreviationList list({
      "Abs.", "Nr.", "vgl.", "S.", "ff.", "f.", "Rn.", "Rdnr.", "u. a.", "u.a.", "z. B.",
      "z.B.", "Art.", "BGHZ", "Alt.", "Aufl.", "bzw.", "ca.", "d. h.", "d.h.", "Dr.",
      "etc.", "gem.", "ggf.", "i. S. d.", "i.S.d.", "i. V. m.", "i.V.m.", "insb.", "Kap.",
      "lit.", "m. w. N.", "m.w.N.", "o. ä.", "o.ä.", "Prof.", "s.", "sog.", "u. U.", "u.U.",
      "Urt.", "Beschl.", "v.", "vorl.", "Az.", "Bd.", "Buchst.", "Hs.", "Var.", "Einf.",
      "Anm.", "Ziff.", "zit.", "a. a. O.", "a.a.O.", "a. F.", "n. F.", "e. V.", "Rz.",
  });
  return list;
}

AbbreviationList AbbreviationList::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open abbreviation list " + path.string());
  std::vector<std::string> entries;
  std::string line;
  while (std::getline(in, line)) {
    const auto trimmed = utf8::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    entries.emplace_back(trimmed);
  }
  return AbbreviationList(std::move(entries));
}

bool AbbreviationList::ends_with_abbreviation(std::string_view text) const {
  for (const auto& entry : lowered_) {
    if (entry.size() > text.size()) continue;
    const std::size_t start = text.size() - entry.size();
    if (utf8::to_lower(text.substr(start)) != entry) continue;
    if (start == 0) return true;
    std::size_t prev = start - 1;
    while (prev > 0 && (static_cast<unsigned char>(text[prev]) & 0xC0) == 0x80) --prev;
    if (!utf8::is_alnum(utf8::decode(text, prev).value)) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Sentences

namespace {

bool is_terminator(char32_t cp) { return cp == '.' || cp == '!' || cp == '?'; }

bool is_closing_quote(char32_t cp) {
  return cp == '"' || cp == '\'' || cp == 0xBB || cp == 0xAB || cp == 0x201C || cp == 0x201D ||
         cp == 0x2018 || cp == 0x2019;
}

bool opens_sentence(char32_t cp) {
  return utf8::is_upper(cp) || cp == kSectionSign || utf8::is_digit(cp) || cp == '"' ||
         cp == 0x201E || cp == 0xBB || cp == 0xAB || cp == '(' || cp == '[';
}

bool is_numeral_word(std::string_view word) {
  if (word.empty()) return false;
  const bool digits = std::all_of(word.begin(), word.end(), [](char c) { return c >= '0' && c <= '9'; });
  if (digits) return true;
  return word.size() <= 5 && std::all_of(word.begin(), word.end(), [](char c) {
           return c == 'I' || c == 'V' || c == 'X' || c == 'L' || c == 'C';
         });
}

// The word directly before byte `dot` (exclusive), delimited by whitespace or '('.
std::string_view word_before(std::string_view text, std::size_t dot) {
  std::size_t begin = dot;
  while (begin > 0) {
    const char c = text[begin - 1];
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '(' || c == '[') break;
    --begin;
  }
  return text.substr(begin, dot - begin);
}

}  // namespace

SentenceList split_sentences(std::string_view text, const AbbreviationList& abbreviations) {
  SentenceList out;
  std::size_t seg_start = 0;

  auto emit = [&](std::size_t end) {
    const auto piece = text.substr(seg_start, end - seg_start);
    const auto trimmed = utf8::trim(piece);
    if (!trimmed.empty()) {
      const auto start = static_cast<std::size_t>(trimmed.data() - text.data());
      out.push_back({std::string(trimmed), start, start + trimmed.size()});
    }
    seg_start = end;
  };

  int depth = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = utf8::decode(text, i);

    if (c.value == '\n') {
      // Blank line: paragraph boundary.
      std::size_t j = i + 1;
      bool blank = false;
      while (j < text.size()) {
        const auto d = utf8::decode(text, j);
        if (d.value == '\n') {
          blank = true;
          break;
        }
        if (!utf8::is_space(d.value)) break;
        j += d.length;
      }
      if (blank) {
        emit(i);
        depth = 0;
      }
    } else if (c.value == '(' || c.value == '[') {
      ++depth;
    } else if ((c.value == ')' || c.value == ']') && depth > 0) {
      --depth;
    } else if (is_terminator(c.value) && depth == 0) {
      std::size_t j = i + c.length;
      while (j < text.size()) {
        const auto d = utf8::decode(text, j);
        if (!is_terminator(d.value) && !is_closing_quote(d.value)) break;
        j += d.length;
      }
      std::size_t k = j;
      while (k < text.size()) {
        const auto d = utf8::decode(text, k);
        if (!utf8::is_space(d.value)) break;
        k += d.length;
      }
      bool split = k > j && k < text.size() && opens_sentence(utf8::decode(text, k).value);
      if (split && c.value == '.') {
        if (abbreviations.ends_with_abbreviation(text.substr(0, i + 1)) ||
            is_numeral_word(word_before(text, i)))
          split = false;
      }
      if (split) {
        emit(j);
        i = j;
        continue;
      }
      i = j;
      continue;
    }
    i += c.length;
  }
  emit(text.size());
  return out;
}

// ---------------------------------------------------------------------------

NGramCounts ngrams(const std::vector<std::string>& tokens, std::size_t n) {
  if (n == 0) throw ConfigError("n-gram order must be at least 1");
  NGramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[NGram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                   tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

std::vector<std::size_t> TokenCounter::count_batch(const std::vector<std::string>& texts) const {
  std::vector<std::size_t> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(count(t));
  return out;
}

std::size_t WordTokenCounter::count(std::string_view text) const { return tokenize(text).size(); }

std::size_t ServiceTokenCounter::count(std::string_view text) const {
  return count_batch({std::string(text)}).front();
}

std::vector<std::size_t> ServiceTokenCounter::count_batch(const std::vector<std::string>& texts) const {
  std::vector<std::size_t> out(texts.size(), 0);
  nlohmann::json request_texts = nlohmann::json::array();
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (texts[i].empty()) continue;
    request_texts.push_back(texts[i]);
    slots.push_back(i);
  }
  if (slots.empty()) return out;
  const auto reply = post_json(endpoint_, "/count", {{"texts", request_texts}});
  const auto counts = reply.find("counts");
  if (counts == reply.end() || !counts->is_array() || counts->size() != slots.size())
    throw ServiceError("tokenizer service reply lacks a matching \"counts\" array", false);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& v = (*counts)[i];
    if (!v.is_number_integer() || v.get<long long>() < 0)
      throw ServiceError("tokenizer service returned a non-count value", false);
    out[slots[i]] = v.get<std::size_t>();
  }
  return out;
}

std::size_t count_tokens(std::string_view text, const TokenCounter& counter) {
  if (text.empty()) return 0;
  return counter.count(text);
}

}  // namespace leitsatz::textproc

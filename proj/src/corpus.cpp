#include "leitsatz/corpus.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "leitsatz/error.hpp"
#include "leitsatz/random.hpp"
#include "leitsatz/utf8.hpp"

namespace leitsatz::corpus {

using nlohmann::json;

void to_json(json& j, const Judgment& judgment) {
  json sections = json::array();
  for (const auto& s : judgment.sections) {
    json subs = json::array();
    for (const auto& sub : s.subsections) subs.push_back({{"label", sub.label}, {"body", sub.body}});
    sections.push_back({{"heading", s.heading}, {"body", s.body}, {"subsections", subs}});
  }
  j = json{{"id", judgment.id},
           {"date", judgment.date},
           {"court", judgment.court},
           {"sections", sections},
           {"guiding_principles", judgment.guiding_principles}};
}

namespace {

std::string string_field(const json& j, const char* key, bool required) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    if (required) throw DataError(std::string("missing field \"") + key + "\"");
    return {};
  }
  if (!it->is_string()) throw DataError(std::string("field \"") + key + "\" must be a string");
  return it->get<std::string>();
}

}  // namespace

Judgment judgment_from_json(const json& j) {
  if (!j.is_object()) throw DataError("record is not a JSON object");
  Judgment out;
  out.id = string_field(j, "id", true);
  out.date = string_field(j, "date", false);
  out.court = string_field(j, "court", false);
  out.guiding_principles = string_field(j, "guiding_principles", false);
  const auto sections = j.find("sections");
  if (sections == j.end() || !sections->is_array())
    throw DataError("missing array field \"sections\"");
  for (const auto& s : *sections) {
    if (!s.is_object()) throw DataError("section is not an object");
    Section section;
    section.heading = string_field(s, "heading", true);
    section.body = string_field(s, "body", false);
    if (const auto subs = s.find("subsections"); subs != s.end() && !subs->is_null()) {
      if (!subs->is_array()) throw DataError("field \"subsections\" must be an array");
      for (const auto& sub : *subs) {
        if (!sub.is_object()) throw DataError("subsection is not an object");
        section.subsections.push_back({string_field(sub, "label", true), string_field(sub, "body", false)});
      }
    }
    out.sections.push_back(std::move(section));
  }
  validate(out);
  return out;
}

void validate(const Judgment& judgment) {
  if (judgment.id.empty()) throw DataError("judgment id is empty");
  if (judgment.sections.empty()) throw DataError("judgment " + judgment.id + " has no sections");
  for (const auto& s : judgment.sections) {
    if (utf8::trim(s.heading).empty())
      throw DataError("judgment " + judgment.id + " has a section with an empty heading");
    std::set<std::string> labels;
    for (const auto& sub : s.subsections) {
      if (!labels.insert(sub.label).second)
        throw DataError("judgment " + judgment.id + ", section \"" + s.heading +
                        "\": duplicate subsection label \"" + sub.label + "\"");
    }
  }
}

// ---------------------------------------------------------------------------

CorpusStore::CorpusStore(std::vector<Judgment> judgments) : judgments_(std::move(judgments)) {
  std::set<std::string> duplicates;
  for (std::size_t i = 0; i < judgments_.size(); ++i) {
    if (!index_.emplace(judgments_[i].id, i).second) duplicates.insert(judgments_[i].id);
  }
  if (!duplicates.empty()) {
    std::string msg = "duplicate judgment ids:";
    for (const auto& id : duplicates) msg += " \"" + id + "\"";
    throw DataError(msg);
  }
}

const Judgment* CorpusStore::find(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &judgments_[it->second];
}

const Judgment& CorpusStore::at(std::string_view id) const {
  if (const auto* j = find(id)) return *j;
  throw DataError("unknown judgment id \"" + std::string(id) + "\"");
}

void CorpusStore::export_jsonl(std::ostream& out) const {
  for (const auto& j : judgments_) out << json(j).dump() << '\n';
}

void CorpusStore::export_jsonl(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  export_jsonl(out);
}

CorpusStore ingest_jsonl(std::istream& in, const std::string& source_name) {
  std::vector<Judgment> judgments;
  std::vector<RecordError> errors;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (utf8::trim(line).empty()) continue;
    try {
      judgments.push_back(judgment_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      errors.push_back({source_name, line_no, std::string("invalid JSON: ") + e.what()});
    } catch (const DataError& e) {
      errors.push_back({source_name, line_no, e.what()});
    }
  }
  if (!errors.empty()) {
    std::string msg = std::to_string(errors.size()) + " malformed record(s); first: " +
                      errors.front().file + ":" + std::to_string(errors.front().line) + ": " +
                      errors.front().message;
    throw IngestError(msg, std::move(errors));
  }
  return CorpusStore(std::move(judgments));
}

Judgment parse_judgment_xml(std::istream& in, const std::string& source_name) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    throw IngestError("malformed XML", {{source_name, e.line(), e.message()}});
  }
  const auto root = tree.get_child_optional("judgment");
  if (!root) throw IngestError("missing <judgment> root", {{source_name, 0, "missing <judgment> root"}});

  Judgment j;
  j.id = root->get<std::string>("<xmlattr>.id", "");
  j.date = root->get<std::string>("<xmlattr>.date", "");
  j.court = root->get<std::string>("<xmlattr>.court", "");
  for (const auto& [name, node] : *root) {
    if (name == "guiding_principles") {
      j.guiding_principles = node.data();
    } else if (name == "section") {
      Section s;
      s.heading = node.get<std::string>("<xmlattr>.heading", "");
      for (const auto& [child_name, child] : node) {
        if (child_name == "body") {
          s.body = child.data();
        } else if (child_name == "subsection") {
          s.subsections.push_back({child.get<std::string>("<xmlattr>.label", ""), child.data()});
        }
      }
      j.sections.push_back(std::move(s));
    }
  }
  try {
    validate(j);
  } catch (const DataError& e) {
    throw IngestError(e.what(), {{source_name, 0, e.what()}});
  }
  return j;
}

CorpusStore ingest(const std::filesystem::path& path, InputFormat format) {
  namespace fs = std::filesystem;
  if (!fs::exists(path)) throw DataError("input does not exist: " + path.string());
  if (format == InputFormat::jsonl) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return ingest_jsonl(in, path.string());
  }
  if (!fs::is_directory(path)) throw DataError("not a directory: " + path.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(path)) {
    if (entry.is_regular_file() && entry.path().extension() == ".xml") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Judgment> judgments;
  std::vector<RecordError> errors;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    try {
      judgments.push_back(parse_judgment_xml(in, f.string()));
    } catch (const IngestError& e) {
      errors.insert(errors.end(), e.errors().begin(), e.errors().end());
    }
  }
  if (!errors.empty()) {
    std::string msg = std::to_string(errors.size()) + " malformed file(s); first: " +
                      errors.front().file + ": " + errors.front().message;
    throw IngestError(msg, std::move(errors));
  }
  return CorpusStore(std::move(judgments));
}

// ---------------------------------------------------------------------------

bool is_excluded_label(std::string_view label, std::string_view excluded) {
  std::size_t begin = 0;
  std::size_t end = label.size();
  auto junk = [](char c) {
    return c == '.' || c == ')' || c == '(' || c == ':' || c == ' ' || c == '\t' ||
           c == '\n' || c == '\r' || c == '-' || c == ',';
  };
  while (begin < end && junk(label[begin])) ++begin;
  while (end > begin && junk(label[end - 1])) --end;
  return label.substr(begin, end - begin) == excluded;
}

namespace {

bool heading_matches(std::string_view heading, std::string_view wanted) {
  auto norm = [](std::string_view s) {
    auto out = utf8::to_lower(utf8::strip_whitespace(s));
    while (!out.empty() && (out.back() == ':' || out.back() == '.')) out.pop_back();
    return out;
  };
  return norm(heading) == norm(wanted);
}

}  // namespace

std::string extract_reasons(const Judgment& judgment, const ReasonsConfig& config) {
  const auto section = std::find_if(judgment.sections.begin(), judgment.sections.end(),
                                    [&](const Section& s) { return heading_matches(s.heading, config.heading); });
  if (section == judgment.sections.end())
    throw MissingReasonsError("judgment " + judgment.id + ": reasons section missing");
  if (section->subsections.empty()) return section->body;
  std::string out;
  for (const auto& sub : section->subsections) {
    if (is_excluded_label(sub.label, config.excluded_label)) continue;
    if (!out.empty()) out += "\n\n";
    out += sub.body;
  }
  return out;
}

ReasonsBatch extract_all_reasons(const CorpusStore& store, const ReasonsConfig& config) {
  ReasonsBatch batch;
  for (const auto& j : store.judgments()) {
    try {
      batch.reasons.emplace_back(j.id, extract_reasons(j, config));
    } catch (const MissingReasonsError& e) {
      batch.skipped.push_back({j.id, e.what()});
    }
  }
  return batch;
}

json skip_report_json(const std::vector<SkipEntry>& skipped) {
  json entries = json::array();
  for (const auto& s : skipped) entries.push_back({{"id", s.id}, {"reason", s.reason}});
  return {{"skipped_count", skipped.size()}, {"skipped", entries}};
}

// ---------------------------------------------------------------------------

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatios& ratios) {
  const std::array<double, 3> r{ratios.train, ratios.valid, ratios.test};
  for (double x : r) {
    if (!(x > 0.0)) throw ConfigError("split ratios must be positive");
  }
  if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");

  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = static_cast<double>(n) * r[i];
    // Guard against 7.000000000001-style products landing just below an integer.
    const double fl = std::floor(exact + 1e-9);
    sizes[i] = static_cast<std::size_t>(fl);
    frac[i] = std::max(0.0, exact - fl);
    assigned += sizes[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[order[k % 3]];
  return sizes;
}

std::array<SplitAssignment, 3> split_corpus(const CorpusStore& store, const SplitRatios& ratios,
                                            std::uint64_t seed) {
  if (store.empty()) throw ConfigError("cannot split an empty corpus");
  const auto sizes = split_sizes(store.size(), ratios);

  std::vector<std::string> ids;
  ids.reserve(store.size());
  for (const auto& j : store.judgments()) ids.push_back(j.id);
  std::sort(ids.begin(), ids.end());
  std::mt19937_64 rng(seed);
  seeded_shuffle(ids, rng);

  std::array<SplitAssignment, 3> out{{{Split::train, {}}, {Split::valid, {}}, {Split::test, {}}}};
  std::size_t pos = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    out[s].judgment_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(pos),
                               ids.begin() + static_cast<std::ptrdiff_t>(pos + sizes[s]));
    std::sort(out[s].judgment_ids.begin(), out[s].judgment_ids.end());
    pos += sizes[s];
  }
  return out;
}

json splits_to_json(const std::array<SplitAssignment, 3>& splits, std::uint64_t seed) {
  json j = {{"seed", seed}};
  for (const auto& s : splits) j[std::string(to_string(s.split))] = s.judgment_ids;
  return j;
}

std::array<SplitAssignment, 3> splits_from_json(const json& j) {
  std::array<SplitAssignment, 3> out{{{Split::train, {}}, {Split::valid, {}}, {Split::test, {}}}};
  try {
    for (auto& s : out) s.judgment_ids = j.at(std::string(to_string(s.split))).get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed split file: ") + e.what());
  }
  return out;
}

// ---------------------------------------------------------------------------

DescriptiveStats length_stats(const std::vector<std::string>& texts,
                              const textproc::TokenCounter& counter) {
  if (texts.empty()) throw ConfigError("length statistics need at least one text");
  const auto counts = counter.count_batch(texts);
  std::vector<double> values(counts.begin(), counts.end());
  return describe(values);
}

std::vector<LengthTableRow> length_table(
    const std::vector<std::pair<std::string, std::string>>& texts_by_id,
    const std::array<SplitAssignment, 3>& splits, const textproc::TokenCounter& counter) {
  std::vector<std::string> all;
  std::map<std::string, std::size_t> position;
  for (const auto& [id, text] : texts_by_id) {
    position.emplace(id, all.size());
    all.push_back(text);
  }
  std::vector<double> counts;
  {
    const auto c = counter.count_batch(all);
    counts.assign(c.begin(), c.end());
  }
  std::vector<LengthTableRow> rows;
  rows.push_back({"all", counts.empty() ? std::nullopt : std::optional(describe(counts))});
  for (const auto& s : splits) {
    std::vector<double> part;
    for (const auto& id : s.judgment_ids) {
      if (const auto it = position.find(id); it != position.end()) part.push_back(counts[it->second]);
    }
    rows.push_back({std::string(to_string(s.split)),
                    part.empty() ? std::nullopt : std::optional(describe(part))});
  }
  return rows;
}

namespace {

std::string fmt_number(double v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << v;
  return os.str();
}

}  // namespace

void write_length_table_csv(std::ostream& out, const std::vector<LengthTableRow>& rows) {
  out << "set,min,mean,max,std\n";
  for (const auto& row : rows) {
    out << row.label;
    if (row.stats) {
      out << ',' << static_cast<long long>(row.stats->min) << ',' << fmt_number(row.stats->mean) << ','
          << static_cast<long long>(row.stats->max) << ',' << fmt_number(row.stats->std);
    } else {
      out << ",,,,";
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------

FilterResult filter_gold_outliers(std::vector<TrainingPair> pairs, std::size_t max_gold_tokens,
                                  const textproc::TokenCounter& counter) {
  if (max_gold_tokens == 0) throw ConfigError("max_gold_tokens must be positive");
  FilterResult result;
  result.report.max_gold_tokens = max_gold_tokens;
  for (auto& p : pairs) {
    const auto n = textproc::count_tokens(p.gold, counter);
    if (n > max_gold_tokens) {
      result.report.excluded.emplace_back(p.id, n);
    } else {
      result.retained.push_back(std::move(p));
    }
  }
  result.report.retained = result.retained.size();
  return result;
}

json exclusion_report_json(const ExclusionReport& report) {
  json excluded = json::array();
  for (const auto& [id, n] : report.excluded) excluded.push_back({{"id", id}, {"gold_tokens", n}});
  return {{"max_gold_tokens", report.max_gold_tokens},
          {"retained", report.retained},
          {"excluded_count", report.excluded.size()},
          {"excluded", excluded}};
}

}  // namespace leitsatz::corpus

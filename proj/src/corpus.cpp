#include "corpus.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "json.hpp"
#include "text.hpp"

namespace unionlm::corpus {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

const char* dataset_name(Dataset d) {
  switch (d) {
    case Dataset::comve:
      return "comve";
    case Dataset::cose:
      return "cose";
    case Dataset::openbook:
      return "openbook";
    case Dataset::omcs:
      return "omcs";
  }
  return "?";
}

Dataset dataset_from_name(std::string_view name) {
  if (name == "comve") return Dataset::comve;
  if (name == "cose") return Dataset::cose;
  if (name == "openbook") return Dataset::openbook;
  if (name == "omcs") return Dataset::omcs;
  throw InvalidArgError("unknown dataset: " + std::string(name));
}

const std::array<LabelSlice, 3>& label_slices() {
  static const std::array<LabelSlice, 3> slices = {{
      {Dataset::comve, 0, 3},
      {Dataset::openbook, 3, 4},
      {Dataset::cose, 7, 5},
  }};
  return slices;
}

const LabelSlice& slice_for(Dataset d) {
  for (const auto& s : label_slices()) {
    if (s.dataset == d) return s;
  }
  throw InvalidArgError(std::string("dataset has no label slice: ") + dataset_name(d));
}

KeywordTable default_keywords() {
  return {
      {Dataset::comve, "<comve>"},
      {Dataset::cose, "<cose>"},
      {Dataset::openbook, "<openbook>"},
      {Dataset::omcs, "<omcs>"},
  };
}

namespace {

// Minimal RFC-4180 CSV reader: quoted fields, doubled quotes, embedded
// commas/newlines, CR/LF tolerant. Reports 1-based line numbers.
struct CsvRow {
  std::vector<std::string> fields;
  size_t line;  // line the row started on
};

std::vector<CsvRow> parse_csv(const std::string& content, const std::string& path) {
  std::vector<CsvRow> rows;
  std::vector<std::string> fields;
  std::string field;
  size_t line = 1;
  size_t row_start_line = 1;
  bool in_quotes = false;
  bool row_has_data = false;

  auto end_field = [&]() {
    fields.push_back(field);
    field.clear();
  };
  auto end_row = [&]() {
    end_field();
    rows.push_back({fields, row_start_line});
    fields.clear();
    row_has_data = false;
  };

  for (size_t i = 0; i < content.size(); ++i) {
    char c = content[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        row_has_data = true;
        break;
      case ',':
        end_field();
        row_has_data = true;
        break;
      case '\r':
        break;
      case '\n':
        if (row_has_data || !field.empty() || !fields.empty()) {
          end_row();
        }
        ++line;
        row_start_line = line;
        break;
      default:
        field.push_back(c);
        row_has_data = true;
        break;
    }
  }
  if (in_quotes) {
    throw ParseError(strformat("%s:%zu: unterminated quoted field", path.c_str(), row_start_line));
  }
  if (row_has_data || !field.empty() || !fields.empty()) {
    end_row();
  }
  return rows;
}

// Header lookup honoring the caller's column remapping.
class HeaderIndex {
 public:
  HeaderIndex(const CsvRow& header, const ColumnMap& column_map, const std::string& path)
      : path_(path) {
    for (size_t i = 0; i < header.fields.size(); ++i) {
      by_name_[text::trim(header.fields[i])] = i;
    }
    column_map_ = column_map;
  }

  size_t require(const std::string& logical, size_t line) const {
    std::string actual = logical;
    auto remap = column_map_.find(logical);
    if (remap != column_map_.end()) actual = remap->second;
    auto it = by_name_.find(actual);
    if (it == by_name_.end()) {
      throw ParseError(
          strformat("%s:%zu: missing column '%s'", path_.c_str(), line, actual.c_str()));
    }
    return it->second;
  }

  std::optional<size_t> find(const std::string& logical) const {
    std::string actual = logical;
    auto remap = column_map_.find(logical);
    if (remap != column_map_.end()) actual = remap->second;
    auto it = by_name_.find(actual);
    if (it == by_name_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::map<std::string, size_t> by_name_;
  ColumnMap column_map_;
  std::string path_;
};

std::string cell(const CsvRow& row, size_t idx, const std::string& path) {
  if (idx >= row.fields.size()) {
    throw ParseError(strformat("%s:%zu: row has %zu fields, need column %zu", path.c_str(),
                               row.line, row.fields.size(), idx + 1));
  }
  return text::trim(row.fields[idx]);
}

int gold_label_to_index(const std::string& raw, size_t n_choices, const std::string& where) {
  std::string s = text::trim(raw);
  if (s.size() == 1) {
    char c = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    if (c >= 'A' && c <= 'E') {
      int idx = c - 'A';
      if (static_cast<size_t>(idx) < n_choices) return idx;
      throw ParseError(where + ": gold label '" + s + "' exceeds choice count");
    }
    if (c >= '0' && c <= '9') {
      int idx = c - '0';
      if (static_cast<size_t>(idx) < n_choices) return idx;
      throw ParseError(where + ": gold label '" + s + "' exceeds choice count");
    }
  }
  throw ParseError(where + ": cannot parse gold label '" + s + "'");
}

size_t expected_choice_count(Dataset kind) {
  switch (kind) {
    case Dataset::comve:
      return 3;
    case Dataset::openbook:
      return 4;
    case Dataset::cose:
      return 5;
    case Dataset::omcs:
      break;
  }
  throw InvalidArgError("omcs has no choice format");
}

void check_choice_arity(const ChoiceRecord& rec, Dataset kind, const std::string& where) {
  size_t want = expected_choice_count(kind);
  if (rec.choices.size() != want) {
    throw ParseError(strformat("%s: expected %zu choices for %s, got %zu", where.c_str(), want,
                               dataset_name(kind), rec.choices.size()));
  }
  for (const auto& c : rec.choices) {
    if (c.empty()) throw ParseError(where + ": empty choice text");
  }
  if (rec.gold_index < 0 || static_cast<size_t>(rec.gold_index) >= rec.choices.size()) {
    throw ParseError(where + ": gold index out of range");
  }
}

}  // namespace

std::vector<ExplanationRecord> load_comve_c(const std::string& path, const ColumnMap& column_map) {
  std::string content = read_text_file(path);
  auto rows = parse_csv(content, path);
  std::vector<ExplanationRecord> out;
  if (rows.empty()) return out;

  HeaderIndex header(rows[0], column_map, path);
  size_t c_stmt = header.require("FalseSent", rows[0].line);
  std::array<size_t, 3> c_reason = {header.require("Reason1", rows[0].line),
                                    header.require("Reason2", rows[0].line),
                                    header.require("Reason3", rows[0].line)};
  auto c_id = header.find("id");

  for (size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    ExplanationRecord rec;
    rec.id = c_id ? cell(row, *c_id, path) : strformat("comve-c-%zu", r);
    rec.false_statement = cell(row, c_stmt, path);
    if (rec.false_statement.empty()) {
      throw ParseError(strformat("%s:%zu: empty FalseSent", path.c_str(), row.line));
    }
    for (size_t j = 0; j < 3; ++j) {
      std::string reason = cell(row, c_reason[j], path);
      if (reason.empty()) {
        throw ParseError(
            strformat("%s:%zu: empty Reason%zu (need exactly 3 references)", path.c_str(),
                      row.line, j + 1));
      }
      rec.references.push_back(reason);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<ChoiceRecord> load_comve_b(const std::string& path, const ColumnMap& column_map) {
  std::string content = read_text_file(path);
  auto rows = parse_csv(content, path);
  std::vector<ChoiceRecord> out;
  if (rows.empty()) return out;

  HeaderIndex header(rows[0], column_map, path);
  size_t c_stmt = header.require("FalseSent", rows[0].line);
  std::array<size_t, 3> c_opt = {header.require("OptionA", rows[0].line),
                                 header.require("OptionB", rows[0].line),
                                 header.require("OptionC", rows[0].line)};
  size_t c_gold = header.require("GoldLabel", rows[0].line);
  auto c_id = header.find("id");

  for (size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    ChoiceRecord rec;
    rec.id = c_id ? cell(row, *c_id, path) : strformat("comve-b-%zu", r);
    rec.prompt = cell(row, c_stmt, path);
    if (rec.prompt.empty()) {
      throw ParseError(strformat("%s:%zu: empty FalseSent", path.c_str(), row.line));
    }
    for (size_t j = 0; j < 3; ++j) {
      rec.choices.push_back(cell(row, c_opt[j], path));
    }
    std::string where = strformat("%s:%zu", path.c_str(), row.line);
    rec.gold_index = gold_label_to_index(cell(row, c_gold, path), rec.choices.size(), where);
    check_choice_arity(rec, Dataset::comve, where);
    out.push_back(std::move(rec));
  }
  return out;
}

namespace {

json parse_jsonl_line(const std::string& line, const std::string& path, size_t lineno) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw ParseError(strformat("%s:%zu: invalid JSON object", path.c_str(), lineno));
  }
  return j;
}

std::string require_string(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_string()) {
    throw ParseError(where + ": missing string field '" + key + "'");
  }
  return text::trim(j[key].get<std::string>());
}

ChoiceRecord choice_from_json(Dataset kind, const json& j, const std::string& where, size_t row) {
  ChoiceRecord rec;
  rec.id = j.contains("id") && j["id"].is_string()
               ? j["id"].get<std::string>()
               : strformat("%s-%zu", dataset_name(kind), row);
  rec.prompt = require_string(j, "question", where);
  if (!j.contains("choices") || !j["choices"].is_array()) {
    throw ParseError(where + ": missing array field 'choices'");
  }
  for (const auto& c : j["choices"]) {
    if (!c.is_string()) throw ParseError(where + ": non-string choice");
    rec.choices.push_back(text::trim(c.get<std::string>()));
  }
  std::string answer = require_string(j, "answer", where);
  // Either a letter (A..E) or the verbatim answer text.
  bool matched = false;
  if (answer.size() == 1) {
    char c = static_cast<char>(std::toupper(static_cast<unsigned char>(answer[0])));
    if (c >= 'A' && c <= 'E' && static_cast<size_t>(c - 'A') < rec.choices.size()) {
      rec.gold_index = c - 'A';
      matched = true;
    }
  }
  if (!matched) {
    for (size_t i = 0; i < rec.choices.size(); ++i) {
      if (text::to_lower(rec.choices[i]) == text::to_lower(answer)) {
        rec.gold_index = static_cast<int>(i);
        matched = true;
        break;
      }
    }
  }
  if (!matched) {
    throw ParseError(where + ": answer '" + answer + "' not found among choices");
  }
  check_choice_arity(rec, kind, where);
  return rec;
}

}  // namespace

std::vector<ChoiceRecord> load_choice_jsonl(Dataset kind, const std::string& path) {
  std::vector<ChoiceRecord> out;
  for (auto& qa : load_qa_jsonl(kind, path)) {
    out.push_back(std::move(qa.choice));
  }
  return out;
}

std::vector<QaRecord> load_qa_jsonl(Dataset kind, const std::string& path) {
  if (kind != Dataset::cose && kind != Dataset::openbook) {
    throw InvalidArgError(std::string("no JSONL QA format for ") + dataset_name(kind));
  }
  std::string content = read_text_file(path);
  std::istringstream in(content);
  std::string line;
  std::vector<QaRecord> out;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    std::string where = strformat("%s:%zu", path.c_str(), lineno);
    json j = parse_jsonl_line(line, path, lineno);
    QaRecord rec;
    rec.choice = choice_from_json(kind, j, where, out.size() + 1);
    const char* target_key = kind == Dataset::cose ? "explanation" : "fact";
    rec.target = require_string(j, target_key, where);
    if (rec.target.empty()) {
      throw ParseError(where + ": empty '" + target_key + "'");
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<FactStatement> load_omcs(const std::string& path) {
  std::string content = read_text_file(path);
  std::istringstream in(content);
  std::string line;
  std::vector<FactStatement> out;
  while (std::getline(in, line)) {
    std::string fact = text::trim(line);
    if (!fact.empty()) {
      out.push_back({fact});
    }
  }
  return out;
}

IngestResult ingest_dataset(Dataset kind, const std::string& path, const ColumnMap& column_map,
                            bool task_c) {
  IngestResult r;
  switch (kind) {
    case Dataset::comve:
      if (task_c) {
        r.explanations = load_comve_c(path, column_map);
      } else {
        r.choices = load_comve_b(path, column_map);
      }
      break;
    case Dataset::cose:
    case Dataset::openbook:
      r.qa = load_qa_jsonl(kind, path);
      break;
    case Dataset::omcs:
      r.facts = load_omcs(path);
      break;
  }
  return r;
}

std::vector<std::pair<std::string, std::string>> flatten_explanations(
    const std::vector<ExplanationRecord>& records) {
  std::vector<std::pair<std::string, std::string>> out;
  out.reserve(records.size() * 3);
  for (const auto& rec : records) {
    if (rec.references.size() != 3) {
      throw InvalidArgError("record " + rec.id + ": expected exactly 3 references");
    }
    for (const auto& ref : rec.references) {
      out.emplace_back(rec.false_statement, ref);
    }
  }
  return out;
}

std::vector<BinaryExample> binarize_choices(const std::vector<ChoiceRecord>& records) {
  std::vector<BinaryExample> out;
  for (const auto& rec : records) {
    if (rec.gold_index < 0 || static_cast<size_t>(rec.gold_index) >= rec.choices.size()) {
      throw InvalidArgError("record " + rec.id + ": gold index out of range");
    }
    for (size_t k = 0; k < rec.choices.size(); ++k) {
      out.push_back({rec.prompt, rec.choices[k], static_cast<int>(k) == rec.gold_index});
    }
  }
  return out;
}

PairResult pair_tasks(const std::vector<ExplanationRecord>& gen,
                      const std::vector<ChoiceRecord>& cls) {
  auto list_duplicates = [](const std::vector<std::string>& keys) {
    std::set<std::string> seen;
    std::set<std::string> dups;
    for (const auto& k : keys) {
      if (!seen.insert(k).second) dups.insert(k);
    }
    return dups;
  };

  std::vector<std::string> gen_keys;
  gen_keys.reserve(gen.size());
  for (const auto& r : gen) gen_keys.push_back(text::normalize_statement(r.false_statement));
  std::vector<std::string> cls_keys;
  cls_keys.reserve(cls.size());
  for (const auto& r : cls) cls_keys.push_back(text::normalize_statement(r.prompt));

  auto gen_dups = list_duplicates(gen_keys);
  auto cls_dups = list_duplicates(cls_keys);
  if (!gen_dups.empty() || !cls_dups.empty()) {
    std::string msg = "duplicate false statements:";
    for (const auto& d : gen_dups) msg += " [C] '" + d + "'";
    for (const auto& d : cls_dups) msg += " [B] '" + d + "'";
    throw InvalidArgError(msg);
  }

  std::map<std::string, size_t> cls_by_key;
  for (size_t i = 0; i < cls.size(); ++i) cls_by_key[cls_keys[i]] = i;

  PairResult result;
  std::vector<bool> cls_used(cls.size(), false);
  for (size_t i = 0; i < gen.size(); ++i) {
    auto it = cls_by_key.find(gen_keys[i]);
    if (it == cls_by_key.end()) {
      result.unmatched_gen.push_back(gen[i]);
    } else {
      result.pairs.push_back({gen[i], cls[it->second]});
      cls_used[it->second] = true;
    }
  }
  for (size_t i = 0; i < cls.size(); ++i) {
    if (!cls_used[i]) result.unmatched_cls.push_back(cls[i]);
  }
  return result;
}

std::vector<UnifiedExample> unify(const std::vector<ExplanationRecord>& comve_c,
                                  const std::vector<ChoiceRecord>& comve_b,
                                  const std::vector<QaRecord>& cose,
                                  const std::vector<QaRecord>& openbook,
                                  const std::vector<FactStatement>& omcs,
                                  const KeywordTable& keywords) {
  std::set<std::string> seen_keywords;
  for (const auto& [ds, kw] : keywords) {
    if (kw.empty()) throw InvalidArgError(std::string("empty keyword for ") + dataset_name(ds));
    if (!seen_keywords.insert(kw).second) {
      throw InvalidArgError("keyword collision: '" + kw + "'");
    }
  }
  auto keyword_of = [&](Dataset d) {
    auto it = keywords.find(d);
    if (it == keywords.end()) {
      throw InvalidArgError(std::string("no keyword assigned to ") + dataset_name(d));
    }
    return it->second;
  };
  auto merged_label = [](Dataset d, int gold_index) {
    const LabelSlice& s = slice_for(d);
    int label = s.offset + gold_index;
    if (gold_index < 0 || gold_index >= s.width) {
      throw InvalidArgError(strformat("gold index %d outside %s slice of width %d", gold_index,
                                      dataset_name(d), s.width));
    }
    return label;
  };

  std::vector<UnifiedExample> out;
  for (const auto& rec : comve_c) {
    UnifiedExample ex;
    ex.dataset = Dataset::comve;
    ex.keyword = keyword_of(Dataset::comve);
    ex.source = rec.false_statement;
    ex.targets = rec.references;
    out.push_back(std::move(ex));
  }
  for (const auto& rec : comve_b) {
    UnifiedExample ex;
    ex.dataset = Dataset::comve;
    ex.keyword = keyword_of(Dataset::comve);
    ex.source = rec.prompt;
    ex.choices = rec.choices;
    ex.gold = merged_label(Dataset::comve, rec.gold_index);
    out.push_back(std::move(ex));
  }
  for (const auto& rec : cose) {
    UnifiedExample ex;
    ex.dataset = Dataset::cose;
    ex.keyword = keyword_of(Dataset::cose);
    ex.source = rec.choice.prompt;
    ex.targets = {rec.target};
    ex.choices = rec.choice.choices;
    ex.gold = merged_label(Dataset::cose, rec.choice.gold_index);
    out.push_back(std::move(ex));
  }
  for (const auto& rec : openbook) {
    UnifiedExample ex;
    ex.dataset = Dataset::openbook;
    ex.keyword = keyword_of(Dataset::openbook);
    ex.source = rec.choice.prompt;
    ex.targets = {rec.target};
    ex.choices = rec.choice.choices;
    ex.gold = merged_label(Dataset::openbook, rec.choice.gold_index);
    out.push_back(std::move(ex));
  }
  for (const auto& fact : omcs) {
    UnifiedExample ex;
    ex.dataset = Dataset::omcs;
    ex.keyword = keyword_of(Dataset::omcs);
    ex.source.clear();
    ex.targets = {fact.text};
    out.push_back(std::move(ex));
  }
  return out;
}

std::string to_jsonl(const std::vector<UnifiedExample>& examples) {
  std::string out;
  for (const auto& ex : examples) {
    ordered_json j;
    j["dataset"] = dataset_name(ex.dataset);
    j["keyword"] = ex.keyword;
    j["source"] = ex.source;
    if (!ex.targets.empty()) j["targets"] = ex.targets;
    if (!ex.choices.empty()) j["choices"] = ex.choices;
    if (ex.gold) j["gold"] = *ex.gold;
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

std::vector<UnifiedExample> from_jsonl(const std::string& content) {
  std::vector<UnifiedExample> out;
  std::istringstream in(content);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    json j = parse_jsonl_line(line, "<unified>", lineno);
    UnifiedExample ex;
    ex.dataset = dataset_from_name(j.at("dataset").get<std::string>());
    ex.keyword = j.at("keyword").get<std::string>();
    ex.source = j.at("source").get<std::string>();
    if (j.contains("targets")) ex.targets = j["targets"].get<std::vector<std::string>>();
    if (j.contains("choices")) ex.choices = j["choices"].get<std::vector<std::string>>();
    if (j.contains("gold")) {
      int g = j["gold"].get<int>();
      if (g < 0 || g >= kNumClasses) {
        throw ParseError(strformat("<unified>:%zu: gold %d outside [0,%d]", lineno, g,
                                   kNumClasses - 1));
      }
      const LabelSlice& s = slice_for(ex.dataset);
      if (g < s.offset || g >= s.offset + s.width) {
        throw ParseError(strformat("<unified>:%zu: gold %d outside %s slice", lineno, g,
                                   dataset_name(ex.dataset)));
      }
      ex.gold = g;
    }
    out.push_back(std::move(ex));
  }
  return out;
}

void write_unified(const std::string& path, const std::vector<UnifiedExample>& examples) {
  write_text_file(path, to_jsonl(examples));
}

std::vector<UnifiedExample> read_unified(const std::string& path) {
  return from_jsonl(read_text_file(path));
}

}  // namespace unionlm::corpus

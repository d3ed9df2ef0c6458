#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "util.hpp"

namespace unionlm::corpus {

enum class Dataset { comve, cose, openbook, omcs };

const char* dataset_name(Dataset d);
Dataset dataset_from_name(std::string_view name);

// Merged 12-way label space: ComVE 0-2, OpenBook 3-6, CoS-E 7-11.
struct LabelSlice {
  Dataset dataset;
  int offset;
  int width;
};

constexpr int kNumClasses = 12;
const std::array<LabelSlice, 3>& label_slices();
const LabelSlice& slice_for(Dataset d);  // throws for omcs

// Dataset -> reserved keyword token. Defaults to the tokenizer's reserved
// keyword surfaces; replaceable as long as the four tokens stay distinct.
using KeywordTable = std::map<Dataset, std::string>;
KeywordTable default_keywords();

// One Task C row: false statement with its three reference explanations.
struct ExplanationRecord {
  std::string id;
  std::string false_statement;
  std::vector<std::string> references;  // exactly 3
};

// One multiple-choice row (ComVE-B: 3 options, OpenBook: 4, CoS-E: 5).
struct ChoiceRecord {
  std::string id;
  std::string prompt;
  std::vector<std::string> choices;
  int gold_index = -1;
};

struct BinaryExample {
  std::string prompt;
  std::string candidate;
  bool label_b = false;
};

struct FactStatement {
  std::string text;
};

struct UnifiedExample {
  Dataset dataset = Dataset::comve;
  std::string keyword;
  std::string source;
  std::vector<std::string> targets;  // generation targets; may be empty
  std::vector<std::string> choices;  // classification choices; may be empty
  std::optional<int> gold;           // merged label in [0, 11]

  bool operator==(const UnifiedExample&) const = default;
};

// Loaders. column_map remaps logical column names ("FalseSent", "Reason1", ...)
// to whatever the file actually uses.
using ColumnMap = std::map<std::string, std::string>;

std::vector<ExplanationRecord> load_comve_c(const std::string& path, const ColumnMap& column_map = {});
std::vector<ChoiceRecord> load_comve_b(const std::string& path, const ColumnMap& column_map = {});
std::vector<ChoiceRecord> load_choice_jsonl(Dataset kind, const std::string& path);
std::vector<FactStatement> load_omcs(const std::string& path);

// CoS-E / OpenBook rows carry both a classification form and a generation
// target (the explanation / supporting fact).
struct QaRecord {
  ChoiceRecord choice;
  std::string target;
};
std::vector<QaRecord> load_qa_jsonl(Dataset kind, const std::string& path);

struct IngestResult {
  std::vector<ExplanationRecord> explanations;
  std::vector<ChoiceRecord> choices;
  std::vector<FactStatement> facts;
  std::vector<QaRecord> qa;
};

// Dispatch by kind; exactly one member of the result is populated
// (comve path ending in the Task C layout yields explanations, etc.).
IngestResult ingest_dataset(Dataset kind, const std::string& path, const ColumnMap& column_map = {},
                            bool task_c = true);

// (X, Y1, Y2, Y3) -> three (X, Yj) pairs, record-major.
std::vector<std::pair<std::string, std::string>> flatten_explanations(
    const std::vector<ExplanationRecord>& records);

// Multi-choice -> binary rows, one positive per source record.
std::vector<BinaryExample> binarize_choices(const std::vector<ChoiceRecord>& records);

struct TaskPair {
  ExplanationRecord gen;
  ChoiceRecord cls;
};
struct PairResult {
  std::vector<TaskPair> pairs;
  std::vector<ExplanationRecord> unmatched_gen;
  std::vector<ChoiceRecord> unmatched_cls;
};

// Joins Task C and Task B rows on the normalized false statement.
PairResult pair_tasks(const std::vector<ExplanationRecord>& gen, const std::vector<ChoiceRecord>& cls);

// Merge everything into the keyword-tagged unified stream. Order is fixed:
// ComVE C, ComVE B, CoS-E, OpenBook, OMCS, each in input order.
std::vector<UnifiedExample> unify(const std::vector<ExplanationRecord>& comve_c,
                                  const std::vector<ChoiceRecord>& comve_b,
                                  const std::vector<QaRecord>& cose,
                                  const std::vector<QaRecord>& openbook,
                                  const std::vector<FactStatement>& omcs,
                                  const KeywordTable& keywords = default_keywords());

// Unified interchange format: JSON-lines with fields
// {dataset, keyword, source, targets?, choices?, gold?}, UTF-8, LF.
std::string to_jsonl(const std::vector<UnifiedExample>& examples);
std::vector<UnifiedExample> from_jsonl(const std::string& content);
void write_unified(const std::string& path, const std::vector<UnifiedExample>& examples);
std::vector<UnifiedExample> read_unified(const std::string& path);

}  // namespace unionlm::corpus

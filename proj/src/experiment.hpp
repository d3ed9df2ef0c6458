#pragma once

#include <set>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "decode.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "trainer.hpp"
#include "vocab.hpp"

namespace unionlm::exp {

struct DataPaths {
  std::string comve_c, comve_b, cose, openbook, omcs;
  corpus::ColumnMap comve_c_columns, comve_b_columns;
};

struct VocabSettings {
  int max_size = 2000;
  int min_count = 1;
};

struct MetricsSettings {
  int kn_order = 3;
  int kn_min_count = 1;
  // "omcs_kn": n-gram model over the fact corpus; "model": the pretrained
  // network's language-model head
  std::string ppl_gen_source = "omcs_kn";
  metrics::EaConfig ea;
};

// Everything a run needs, serialized as one JSON object. Unknown keys are
// rejected so typos fail loudly. The model's vocab_size, seed and class
// count are derived, not configured.
struct ExperimentConfig {
  uint64_t seed = 42;
  std::string out_dir = "runs/exp";
  std::string system = "UNION";  // row label in reports
  DataPaths data;
  corpus::KeywordTable keywords = corpus::default_keywords();
  VocabSettings vocab;
  model::ModelConfig model;
  train::TrainConfig train;
  decode::DecodeConfig decode;
  MetricsSettings metrics;
  std::set<corpus::Dataset> ablation;

  static ExperimentConfig from_json(const std::string& content);
  static ExperimentConfig from_file(const std::string& path);
  std::string to_json() const;

  // "train.lr=0.01", "decode.strategy=nucleus", "ablation=[\"cose\"]";
  // values parse as JSON, falling back to a bare string
  void apply_override(const std::string& assignment);
  void validate() const;
};

// Artifact names inside out_dir.
std::string unified_path(const ExperimentConfig& cfg);
std::string vocab_path(const ExperimentConfig& cfg);
std::string counts_path(const ExperimentConfig& cfg);
std::string pretrained_ckpt_path(const ExperimentConfig& cfg);
std::string model_ckpt_path(const ExperimentConfig& cfg);
std::string generations_path(const ExperimentConfig& cfg);
std::string references_path(const ExperimentConfig& cfg);
std::string metrics_json_path(const ExperimentConfig& cfg);

// Ingests every configured dataset, pairs the two ComVE tasks, writes the
// unified stream, the vocabulary and a counts summary. Deterministic:
// rerunning yields byte-identical artifacts.
void prepare(const ExperimentConfig& cfg, const train::LogFn& log = {});

// Statement-level evaluation split: a ComVE statement goes to the held-out
// side when the hash of its normalized form lands in bucket 0 of 10; both
// its generation and classification rows are withheld from training.
struct EvalItem {
  std::string id;
  std::string source;
  std::vector<std::string> references;
};
struct SplitResult {
  std::vector<corpus::UnifiedExample> train_stream;
  std::vector<EvalItem> eval_items;
};
SplitResult split_eval(const std::vector<corpus::UnifiedExample>& unified);

void pretrain(const ExperimentConfig& cfg, const train::LogFn& log = {});
void train_model(const ExperimentConfig& cfg, const train::LogFn& log = {});
void generate_eval(const ExperimentConfig& cfg, const train::LogFn& log = {});
metrics::MetricsRow evaluate(const ExperimentConfig& cfg, const train::LogFn& log = {});

// prepare -> pretrain (unless the fact corpus is excluded) -> train ->
// generate -> evaluate; a failed stage stops the run and keeps the artifacts
// written so far.
void run(const ExperimentConfig& cfg, const train::LogFn& log = {});

struct AblationCondition {
  std::string slug;   // subdirectory name
  std::string label;  // report row name
  std::set<corpus::Dataset> ablation;
  bool classification_enabled = true;
};
const std::vector<AblationCondition>& ablation_conditions();

// Runs all six conditions off one shared prepared dataset and seed; a
// condition that fails is recorded in its row and the rest continue.
metrics::MetricsReport ablate(const ExperimentConfig& cfg, const train::LogFn& log = {});

// Re-renders the combined report from the per-condition metrics files.
metrics::MetricsReport report(const ExperimentConfig& cfg);

}  // namespace unionlm::exp

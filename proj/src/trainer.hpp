#pragma once

#include <functional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "model.hpp"
#include "vocab.hpp"

namespace unionlm::train {

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 8;
  int max_steps = 1000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // <= 0 disables clipping
  int eval_interval = 100;
  double w_lm = 1.0;
  double w_cls = 1.0;
  bool classification_enabled = true;
  int pretrain_steps = 200;

  void validate() const;
};

using LogFn = std::function<void(const std::string&)>;

// Adam with global-norm clipping over one flat parameter vector. The
// optimizer state lives here, not in the checkpoint.
class Trainer {
 public:
  Trainer(model::ModelState& state, const TrainConfig& cfg, uint64_t dropout_seed);

  // One update on a mixed batch; returns the pre-update losses.
  model::LossBreakdown step(std::span<const model::GenExample> gen_batch,
                            std::span<const model::ClsExample> cls_batch);

  long long steps_done() const { return step_; }

 private:
  model::ModelState& state_;
  TrainConfig cfg_;
  std::vector<double> grads_, m_, v_;
  long long step_ = 0;
  Rng dropout_rng_;
};

struct TrainLogEntry {
  long long step = 0;
  double lm = 0.0;
  double cls = 0.0;
  double total = 0.0;
};

struct TrainResult {
  std::vector<TrainLogEntry> log;  // one entry per eval_interval plus the final step
  model::LossBreakdown last;
};

// Language-model-only pass over the fact corpus; classification parameters
// receive zero gradient and are untouched bit for bit.
TrainResult pretrain_omcs(model::ModelState& state,
                          const std::vector<corpus::UnifiedExample>& stream,
                          const tok::Vocab& vocab, const TrainConfig& cfg, uint64_t seed,
                          const LogFn& log = {});

// Multi-task training over the unified stream: round-robin over comve, cose,
// openbook (minus ablation), ComVE generation rows paired with the
// classification row that shares the false statement. OMCS rows are ignored
// here; removing comve is rejected since it is the target task.
TrainResult train_union(model::ModelState& state,
                        const std::vector<corpus::UnifiedExample>& stream,
                        const tok::Vocab& vocab, const TrainConfig& cfg,
                        const std::set<corpus::Dataset>& ablation, uint64_t seed,
                        const LogFn& log = {});

}  // namespace unionlm::train

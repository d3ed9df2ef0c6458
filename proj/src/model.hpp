#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "util.hpp"
#include "vocab.hpp"

namespace unionlm::model {

struct ModelConfig {
  int n_layers = 2;
  int d_model = 64;
  int n_heads = 4;
  int d_ff = 256;
  int vocab_size = 0;
  int max_seq_len = 128;
  int n_classes = 12;  // fixed merged label space
  double dropout = 0.0;
  uint64_t seed = 0;

  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& content);
};

struct TensorView {
  size_t off = 0;
  int rows = 0;
  int cols = 0;
  size_t count() const { return static_cast<size_t>(rows) * static_cast<size_t>(cols); }
};

// Flat parameter layout. Checkpoints serialize parameters in exactly this
// order: tok_emb, pos_emb, per layer (ln1 g/b, wq/bq, wk/bk, wv/bv, wo/bo,
// ln2 g/b, w1/b1, w2/b2), lnf g/b, cls w/b. Weight matrices are row-major
// [out x in]; the LM head is weight-tied to tok_emb.
struct ParamLayout {
  struct Layer {
    TensorView ln1_g, ln1_b;
    TensorView wq, bq, wk, bk, wv, bv, wo, bo;
    TensorView ln2_g, ln2_b;
    TensorView w1, b1, w2, b2;
  };
  TensorView tok_emb, pos_emb;
  std::vector<Layer> layers;
  TensorView lnf_g, lnf_b;
  TensorView cls_w, cls_b;
  size_t total = 0;

  static ParamLayout build(const ModelConfig& config);
  std::vector<std::pair<std::string, TensorView>> groups() const;
};

size_t param_count(const ModelConfig& config);

struct ModelState {
  ModelConfig config;
  ParamLayout layout;
  std::vector<double> params;
  std::string vocab_hash;  // empty = not bound to a vocabulary yet

  double* p(const TensorView& v) { return params.data() + v.off; }
  const double* p(const TensorView& v) const { return params.data() + v.off; }

  // Checksum over the 32-bit float encoding, i.e. what a checkpoint stores;
  // save -> load preserves it exactly.
  std::string param_checksum() const;
  std::string cls_head_checksum() const;
};

// Scaled normal init, fully determined by config.seed.
ModelState init_model(const ModelConfig& config);

// Per-position next-token logits, row-major [T x vocab_size].
std::vector<double> forward_lm(const ModelState& state, const std::vector<int>& ids);

// Next-token logits at the final position only; what a decode step needs.
std::vector<double> forward_last_logits(const ModelState& state, const std::vector<int>& ids);

// Mean next-token cross-entropy over positions whose loss_mask is true
// (position t is scored by logits row t-1). Throws on an all-false mask.
double lm_loss(const std::vector<double>& logits, const std::vector<int>& ids,
               const std::vector<bool>& loss_mask, int vocab_size);

// 12-way distribution with out-of-slice probabilities exactly zero and the
// keyword's slice renormalized; read out at the final position.
std::vector<double> classification_distribution(const ModelState& state,
                                                const std::vector<int>& ids, int keyword_id);

struct SliceBounds {
  int offset = 0;
  int width = 0;
};
SliceBounds slice_for_keyword(int keyword_id);  // throws for KW_OMCS

struct GenExample {
  std::vector<int> ids;
  std::vector<bool> loss_mask;
};
struct ClsExample {
  std::vector<int> ids;
  int keyword_id = tok::kKwComve;
  int label = 0;  // merged label in [0, 11]
};

struct LossBreakdown {
  double lm = 0.0;
  double cls = 0.0;
  double total = 0.0;
  long long lm_tokens = 0;
};

// Loss of one mixed batch: lm = token-mean over every masked position in
// gen_batch, cls = example-mean over cls_batch, total = w_lm*lm + w_cls*cls.
// With grads non-null, d(total)/d(params) is accumulated into *grads (layout
// order, must be zeroed by the caller). dropout_rng enables dropout; null
// runs the deterministic eval path.
LossBreakdown compute_losses(const ModelState& state, std::span<const GenExample> gen_batch,
                             std::span<const ClsExample> cls_batch, double w_lm, double w_cls,
                             std::vector<double>* grads = nullptr, Rng* dropout_rng = nullptr);

// Checkpoint file: magic, version, config JSON, vocab hash, parameters as
// little-endian float32 in layout order, FNV checksum.
void save_checkpoint(const ModelState& state, const std::string& path);
ModelState load_checkpoint(const std::string& path);
ModelState load_checkpoint(const std::string& path, const std::string& expect_vocab_hash);

}  // namespace unionlm::model

#include "trainer.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "text.hpp"

namespace unionlm::train {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw InvalidArgError("train config: lr must be > 0");
  if (batch_size < 1) throw InvalidArgError("train config: batch_size must be >= 1");
  if (max_steps < 1) throw InvalidArgError("train config: max_steps must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw InvalidArgError("train config: betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw InvalidArgError("train config: eps must be > 0");
  if (eval_interval < 1) throw InvalidArgError("train config: eval_interval must be >= 1");
  if (w_lm < 0.0 || w_cls < 0.0) throw InvalidArgError("train config: loss weights must be >= 0");
  if (pretrain_steps < 0) throw InvalidArgError("train config: pretrain_steps must be >= 0");
}

Trainer::Trainer(model::ModelState& state, const TrainConfig& cfg, uint64_t dropout_seed)
    : state_(state),
      cfg_(cfg),
      grads_(state.layout.total, 0.0),
      m_(state.layout.total, 0.0),
      v_(state.layout.total, 0.0),
      dropout_rng_(dropout_seed) {
  cfg.validate();
}

model::LossBreakdown Trainer::step(std::span<const model::GenExample> gen_batch,
                                   std::span<const model::ClsExample> cls_batch) {
  std::fill(grads_.begin(), grads_.end(), 0.0);
  Rng* drop = state_.config.dropout > 0.0 ? &dropout_rng_ : nullptr;
  model::LossBreakdown losses;
  try {
    losses = model::compute_losses(state_, gen_batch, cls_batch, cfg_.w_lm, cfg_.w_cls, &grads_,
                                   drop);
  } catch (const StateError& e) {
    throw StateError(strformat("step %lld: %s", step_ + 1, e.what()));
  }

  double sq = 0.0;
  for (double g : grads_) sq += g * g;
  double norm = std::sqrt(sq);
  double scale = 1.0;
  if (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;

  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (size_t i = 0; i < grads_.size(); ++i) {
    double g = grads_[i] * scale;
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
    double mhat = m_[i] / bc1;
    double vhat = v_[i] / bc2;
    state_.params[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
  }
  return losses;
}

namespace {

// one schedulable training row; either side may be absent
struct PoolItem {
  std::optional<model::GenExample> gen;
  std::optional<model::ClsExample> cls;
};

model::GenExample render_gen(const tok::Vocab& vocab, const std::string& keyword,
                             const std::string& source, const std::string& target,
                             int max_seq_len) {
  tok::TokenSequence seq = tok::render_generation_sequence(vocab, keyword, source, target,
                                                           max_seq_len);
  return {std::move(seq.ids), std::move(seq.loss_mask)};
}

model::ClsExample render_cls(const tok::Vocab& vocab, const corpus::UnifiedExample& ex,
                             int max_seq_len) {
  tok::TokenSequence seq = tok::render_classification_sequence(vocab, ex.keyword, ex.source,
                                                               ex.choices, max_seq_len);
  if (!ex.gold.has_value())
    throw InvalidArgError("train: classification row without a gold label");
  return {std::move(seq.ids), vocab.keyword_id(ex.keyword), *ex.gold};
}

// cyclic sampler over a pool, reshuffling on every wrap
class PoolCursor {
 public:
  PoolCursor(size_t n, Rng& rng) : order_(n), rng_(rng) {
    for (size_t i = 0; i < n; ++i) order_[i] = i;
    rng_.shuffle(order_);
  }
  size_t next() {
    if (pos_ == order_.size()) {
      rng_.shuffle(order_);
      pos_ = 0;
    }
    return order_[pos_++];
  }

 private:
  std::vector<size_t> order_;
  Rng& rng_;
  size_t pos_ = 0;
};

void emit_log(const LogFn& log, const char* phase, long long step, int max_steps,
              const model::LossBreakdown& losses, std::vector<TrainLogEntry>& entries) {
  entries.push_back({step, losses.lm, losses.cls, losses.total});
  if (log)
    log(strformat("[%s] step %lld/%d lm=%.4f cls=%.4f total=%.4f", phase, step, max_steps,
                  losses.lm, losses.cls, losses.total));
}

}  // namespace

TrainResult pretrain_omcs(model::ModelState& state,
                          const std::vector<corpus::UnifiedExample>& stream,
                          const tok::Vocab& vocab, const TrainConfig& cfg, uint64_t seed,
                          const LogFn& log) {
  cfg.validate();
  const int max_seq = state.config.max_seq_len;
  std::vector<model::GenExample> pool;
  for (const corpus::UnifiedExample& ex : stream) {
    if (ex.dataset != corpus::Dataset::omcs) continue;
    if (ex.targets.empty()) throw InvalidArgError("pretrain: fact row without text");
    pool.push_back(render_gen(vocab, ex.keyword, ex.source, ex.targets[0], max_seq));
  }
  if (pool.empty()) throw InvalidArgError("pretrain: the stream contains no fact-corpus rows");

  Rng order_rng(seed);
  PoolCursor cursor(pool.size(), order_rng);
  Trainer trainer(state, cfg, seed ^ 0x9e3779b97f4a7c15ull);

  TrainResult result;
  std::vector<model::GenExample> batch;
  for (int s = 1; s <= cfg.max_steps; ++s) {
    batch.clear();
    for (int b = 0; b < cfg.batch_size; ++b) batch.push_back(pool[cursor.next()]);
    result.last = trainer.step(batch, {});
    if (s % cfg.eval_interval == 0 || s == cfg.max_steps)
      emit_log(log, "pretrain", s, cfg.max_steps, result.last, result.log);
  }
  return result;
}

TrainResult train_union(model::ModelState& state,
                        const std::vector<corpus::UnifiedExample>& stream,
                        const tok::Vocab& vocab, const TrainConfig& cfg,
                        const std::set<corpus::Dataset>& ablation, uint64_t seed,
                        const LogFn& log) {
  cfg.validate();
  if (ablation.count(corpus::Dataset::comve))
    throw InvalidArgError("train: comve is the target task and cannot be ablated");

  const int max_seq = state.config.max_seq_len;

  // ComVE classification rows indexed by normalized false statement, so each
  // generation row trains alongside the choices for the same statement.
  std::vector<const corpus::UnifiedExample*> comve_gen;
  std::map<std::string, const corpus::UnifiedExample*> comve_cls;
  std::vector<PoolItem> pools[3];  // comve, cose, openbook
  for (const corpus::UnifiedExample& ex : stream) {
    switch (ex.dataset) {
      case corpus::Dataset::comve:
        if (!ex.targets.empty())
          comve_gen.push_back(&ex);
        else if (!ex.choices.empty())
          comve_cls.emplace(text::normalize_statement(ex.source), &ex);
        break;
      case corpus::Dataset::cose:
      case corpus::Dataset::openbook: {
        if (ablation.count(ex.dataset)) break;
        if (ex.targets.empty() || ex.choices.empty())
          throw InvalidArgError(strformat("train: %s row missing its target or choices",
                                          corpus::dataset_name(ex.dataset)));
        PoolItem item;
        item.gen = render_gen(vocab, ex.keyword, ex.source, ex.targets[0], max_seq);
        item.cls = render_cls(vocab, ex, max_seq);
        pools[ex.dataset == corpus::Dataset::cose ? 1 : 2].push_back(std::move(item));
        break;
      }
      case corpus::Dataset::omcs:
        break;  // pretraining data only
    }
  }
  for (const corpus::UnifiedExample* ex : comve_gen) {
    auto partner = comve_cls.find(text::normalize_statement(ex->source));
    std::optional<model::ClsExample> cls;
    if (partner != comve_cls.end()) cls = render_cls(vocab, *partner->second, max_seq);
    for (const std::string& target : ex->targets) {
      PoolItem item;
      item.gen = render_gen(vocab, ex->keyword, ex->source, target, max_seq);
      item.cls = cls;
      pools[0].push_back(std::move(item));
    }
  }
  // classification rows with no matching generation row still train the head
  {
    std::set<std::string> matched;
    for (const corpus::UnifiedExample* ex : comve_gen)
      matched.insert(text::normalize_statement(ex->source));
    for (const auto& [stmt, ex] : comve_cls) {
      if (matched.count(stmt)) continue;
      PoolItem item;
      item.cls = render_cls(vocab, *ex, max_seq);
      pools[0].push_back(std::move(item));
    }
  }

  std::vector<int> order;
  const corpus::Dataset kOrder[3] = {corpus::Dataset::comve, corpus::Dataset::cose,
                                     corpus::Dataset::openbook};
  for (int i = 0; i < 3; ++i) {
    if (ablation.count(kOrder[i])) continue;
    if (pools[i].empty())
      throw InvalidArgError(strformat("train: no usable rows for %s",
                                      corpus::dataset_name(kOrder[i])));
    order.push_back(i);
  }

  Rng order_rng(seed);
  std::vector<std::optional<PoolCursor>> cursors(3);
  for (int i : order) cursors[i].emplace(pools[i].size(), order_rng);
  Trainer trainer(state, cfg, seed ^ 0x9e3779b97f4a7c15ull);

  const bool use_cls = cfg.classification_enabled && cfg.w_cls > 0.0;
  TrainResult result;
  std::vector<model::GenExample> gen_batch;
  std::vector<model::ClsExample> cls_batch;
  for (int s = 1; s <= cfg.max_steps; ++s) {
    int pool_idx = order[(s - 1) % order.size()];
    std::vector<PoolItem>& pool = pools[pool_idx];
    gen_batch.clear();
    cls_batch.clear();
    for (int b = 0; b < cfg.batch_size; ++b) {
      const PoolItem& item = pool[cursors[pool_idx]->next()];
      if (item.gen) gen_batch.push_back(*item.gen);
      if (use_cls && item.cls) cls_batch.push_back(*item.cls);
    }
    if (gen_batch.empty() && cls_batch.empty()) continue;
    result.last = trainer.step(gen_batch, cls_batch);
    if (s % cfg.eval_interval == 0 || s == cfg.max_steps)
      emit_log(log, "train", s, cfg.max_steps, result.last, result.log);
  }
  return result;
}

}  // namespace unionlm::train

#include "decode.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace unionlm::decode {

void DecodeConfig::validate() const {
  if (k < 1) throw InvalidArgError("decode config: k must be >= 1");
  if (!(p > 0.0 && p <= 1.0)) throw InvalidArgError("decode config: p must lie in (0, 1]");
  if (!(temperature > 0.0)) throw InvalidArgError("decode config: temperature must be > 0");
  if (max_new_tokens < 1) throw InvalidArgError("decode config: max_new_tokens must be >= 1");
}

DecodeConfig::Strategy DecodeConfig::strategy_from_name(std::string_view name) {
  if (name == "greedy") return Strategy::greedy;
  if (name == "top_k" || name == "top-k") return Strategy::top_k;
  if (name == "nucleus" || name == "top_p" || name == "top-p") return Strategy::nucleus;
  throw InvalidArgError(strformat("decode config: unknown strategy \"%.*s\" "
                                  "(expected greedy, top_k or nucleus)",
                                  static_cast<int>(name.size()), name.data()));
}

const char* DecodeConfig::strategy_name(Strategy s) {
  switch (s) {
    case Strategy::greedy: return "greedy";
    case Strategy::top_k: return "top_k";
    case Strategy::nucleus: return "nucleus";
  }
  return "?";
}

namespace {

// tokens never emitted while decoding; EOS stays legal (it terminates) and
// UNK stays legal (the detokenizer drops it)
bool banned_during_decode(int id) {
  return id == tok::kPad || id == tok::kBos || id == tok::kSep ||
         (id >= tok::kKwComve && id <= tok::kKwOmcs);
}

int pick_sampled(const std::vector<double>& logits, const DecodeConfig& cfg, Rng& rng) {
  const int v = static_cast<int>(logits.size());
  std::vector<double> probs(v, 0.0);
  double maxz = -HUGE_VAL;
  for (int i = 0; i < v; ++i)
    if (!banned_during_decode(i)) maxz = std::max(maxz, logits[i] / cfg.temperature);
  double sum = 0.0;
  for (int i = 0; i < v; ++i) {
    if (banned_during_decode(i)) continue;
    probs[i] = std::exp(logits[i] / cfg.temperature - maxz);
    sum += probs[i];
  }
  for (double& q : probs) q /= sum;

  // candidate order: probability desc, id asc; prefix of this order is kept
  std::vector<int> by_prob;
  by_prob.reserve(v);
  for (int i = 0; i < v; ++i)
    if (!banned_during_decode(i)) by_prob.push_back(i);
  std::stable_sort(by_prob.begin(), by_prob.end(),
                   [&probs](int a, int b) { return probs[a] > probs[b]; });

  size_t keep = by_prob.size();
  if (cfg.strategy == DecodeConfig::Strategy::top_k) {
    keep = std::min<size_t>(static_cast<size_t>(cfg.k), by_prob.size());
  } else if (cfg.strategy == DecodeConfig::Strategy::nucleus) {
    double cum = 0.0;
    for (size_t i = 0; i < by_prob.size(); ++i) {
      cum += probs[by_prob[i]];
      if (cum >= cfg.p) {
        keep = i + 1;
        break;
      }
    }
  }

  std::vector<int> kept(by_prob.begin(), by_prob.begin() + keep);
  std::sort(kept.begin(), kept.end());
  double total = 0.0;
  for (int id : kept) total += probs[id];
  double r = rng.uniform() * total;
  double cum = 0.0;
  for (int id : kept) {
    cum += probs[id];
    if (r < cum) return id;
  }
  return kept.back();
}

int pick_greedy(const std::vector<double>& logits) {
  int best = -1;
  double best_z = -HUGE_VAL;
  for (int i = 0; i < static_cast<int>(logits.size()); ++i) {
    if (banned_during_decode(i)) continue;
    if (logits[i] > best_z) {
      best_z = logits[i];
      best = i;
    }
  }
  return best;
}

}  // namespace

std::vector<int> generate_ids(const model::ModelState& state, const tok::Vocab& vocab,
                              const std::string& keyword, const std::string& source,
                              const DecodeConfig& cfg) {
  cfg.validate();
  if (!state.vocab_hash.empty() && state.vocab_hash != vocab.hash())
    throw StateError(strformat("decode: model is bound to vocab %s, given vocab hashes to %s",
                               state.vocab_hash.c_str(), vocab.hash().c_str()));
  if (vocab.size() != state.config.vocab_size)
    throw StateError(strformat("decode: vocab has %d tokens, model expects %d", vocab.size(),
                               state.config.vocab_size));

  const int max_seq = state.config.max_seq_len;
  if (max_seq < 4)
    throw InvalidArgError("decode: context limit leaves no room for a prompt and a token");

  std::vector<int> ids;
  ids.push_back(tok::kBos);
  ids.push_back(vocab.keyword_id(keyword));
  std::vector<int> src = vocab.encode(source);
  // prompt may fill at most max_seq-1 slots; drop oldest source tokens first
  size_t room = static_cast<size_t>(max_seq - 1) - 3;
  if (src.size() > room) src.erase(src.begin(), src.end() - static_cast<ptrdiff_t>(room));
  ids.insert(ids.end(), src.begin(), src.end());
  ids.push_back(tok::kSep);

  Rng rng(cfg.seed);
  std::vector<int> generated;
  while (static_cast<int>(generated.size()) < cfg.max_new_tokens &&
         static_cast<int>(ids.size()) < max_seq) {
    std::vector<double> logits = model::forward_last_logits(state, ids);
    int id = cfg.strategy == DecodeConfig::Strategy::greedy ? pick_greedy(logits)
                                                            : pick_sampled(logits, cfg, rng);
    ids.push_back(id);
    generated.push_back(id);
    if (id == tok::kEos) break;
  }
  return generated;
}

std::string generate(const model::ModelState& state, const tok::Vocab& vocab,
                     const std::string& keyword, const std::string& source,
                     const DecodeConfig& cfg) {
  return vocab.decode(generate_ids(state, vocab, keyword, source, cfg));
}

std::vector<std::string> batch_generate(const model::ModelState& state, const tok::Vocab& vocab,
                                        const std::string& keyword,
                                        const std::vector<std::string>& sources,
                                        const DecodeConfig& cfg) {
  std::vector<std::string> out;
  out.reserve(sources.size());
  for (size_t i = 0; i < sources.size(); ++i) {
    DecodeConfig item_cfg = cfg;
    item_cfg.seed = cfg.seed ^ static_cast<uint64_t>(i);
    try {
      out.push_back(generate(state, vocab, keyword, sources[i], item_cfg));
    } catch (const Error& e) {
      throw Error(strformat("item %zu: %s", i, e.what()));
    }
  }
  return out;
}

}  // namespace unionlm::decode

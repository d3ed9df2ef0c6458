#include "ngram.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "text.hpp"
#include "util.hpp"

namespace unionlm::metrics {

namespace {

constexpr int kBosId = 0;
constexpr int kEosId = 1;
constexpr int kUnkId = 2;
constexpr int kFirstWordId = 3;

std::string pack_key(const int* ids, int k) {
  return std::string(reinterpret_cast<const char*>(ids), static_cast<size_t>(k) * sizeof(int));
}

long long lookup(const std::unordered_map<std::string, long long>& table, const std::string& key) {
  auto it = table.find(key);
  return it == table.end() ? 0 : it->second;
}

// D = n1/(n1+2*n2); degenerate or zero values fall back to 0.5 so unseen
// events keep positive mass
double discount_from_counts(const std::unordered_map<std::string, long long>& counts, int level,
                            std::vector<std::string>& warnings) {
  long long n1 = 0, n2 = 0;
  for (const auto& [key, c] : counts) {
    if (c == 1) ++n1;
    else if (c == 2) ++n2;
  }
  if (n1 == 0) {
    warnings.push_back(strformat(
        "order-%d counts have no singletons; discount fell back to 0.5", level));
    return 0.5;
  }
  return static_cast<double>(n1) / static_cast<double>(n1 + 2 * n2);
}

}  // namespace

NGramLM NGramLM::fit(const std::vector<std::string>& corpus, int order, int min_count) {
  if (order < 1) throw InvalidArgError("ngram: order must be >= 1");
  if (min_count < 1) throw InvalidArgError("ngram: min_count must be >= 1");
  if (corpus.empty()) throw InvalidArgError("ngram: empty training corpus");

  NGramLM lm;
  lm.order_ = order;

  // token frequencies decide the word vocabulary; rare words collapse to <unk>
  std::vector<std::vector<std::string>> sentences;
  sentences.reserve(corpus.size());
  std::unordered_map<std::string, long long> freq;
  for (const std::string& text : corpus) {
    sentences.push_back(text::word_tokenize(text));
    for (const std::string& w : sentences.back()) ++freq[w];
  }
  int next_id = kFirstWordId;
  for (const auto& sent : sentences)
    for (const std::string& w : sent)
      if (freq[w] >= min_count && !lm.word_ids_.count(w)) lm.word_ids_[w] = next_id++;
  lm.event_vocab_ = lm.word_ids_.size() + 2;  // + <unk> + </s>

  // raw k-gram counts for k = 2..max(order, 2); each sentence is padded with
  // k-1 start markers and one end marker
  const int top_k = std::max(order, 2);
  std::vector<Table> raw(static_cast<size_t>(top_k) + 1);
  for (const auto& sent : sentences) {
    std::vector<int> ids;
    ids.reserve(sent.size() + 1);
    for (const std::string& w : sent) {
      auto it = lm.word_ids_.find(w);
      ids.push_back(it == lm.word_ids_.end() ? kUnkId : it->second);
    }
    ids.push_back(kEosId);
    for (int k = 2; k <= top_k; ++k) {
      std::vector<int> padded(static_cast<size_t>(k) - 1, kBosId);
      padded.insert(padded.end(), ids.begin(), ids.end());
      for (size_t e = static_cast<size_t>(k) - 1; e < padded.size(); ++e)
        ++raw[k][pack_key(padded.data() + e - (k - 1), k)];
    }
  }
  // continuation counts: cont[k][u] = distinct left extensions of the k-gram u
  const int max_cont = order >= 2 ? order - 1 : 1;
  lm.cont_.resize(static_cast<size_t>(max_cont) + 1);
  for (int k = 1; k <= max_cont; ++k)
    for (const auto& [key, c] : raw[k + 1])
      ++lm.cont_[k][key.substr(sizeof(int))];
  if (order >= 2) lm.raw_top_ = std::move(raw[order]);

  lm.cont_ctx_total_.resize(lm.cont_.size());
  lm.cont_ctx_types_.resize(lm.cont_.size());
  for (int k = 2; k <= max_cont; ++k)
    for (const auto& [key, c] : lm.cont_[k]) {
      std::string ctx = key.substr(0, key.size() - sizeof(int));
      lm.cont_ctx_total_[k][ctx] += c;
      ++lm.cont_ctx_types_[k][ctx];
    }
  for (const auto& [key, c] : lm.cont_[1]) {
    lm.uni_total_ += static_cast<double>(c);
    lm.uni_types_ += 1.0;
  }
  if (order >= 2)
    for (const auto& [key, c] : lm.raw_top_) {
      std::string ctx = key.substr(0, key.size() - sizeof(int));
      lm.top_ctx_total_[ctx] += c;
      ++lm.top_ctx_types_[ctx];
    }

  lm.discounts_.assign(static_cast<size_t>(order) + 1, 0.0);
  for (int k = 1; k <= max_cont; ++k)
    lm.discounts_[k] = discount_from_counts(lm.cont_[k], k, lm.warnings_);
  if (order >= 2)
    lm.discounts_[order] = discount_from_counts(lm.raw_top_, order, lm.warnings_);
  return lm;
}

int NGramLM::word_event_id(const std::string& word) const {
  if (word == kEosMark) return kEosId;
  auto it = word_ids_.find(word);
  return it == word_ids_.end() ? kUnkId : it->second;
}

double NGramLM::prob_at(int level, const std::vector<int>& context, int word) const {
  if (level == 1) {
    double floor_p = 1.0 / static_cast<double>(event_vocab_);
    if (uni_total_ == 0.0) return floor_p;
    double d = discounts_[1];
    double cc = static_cast<double>(lookup(cont_[1], pack_key(&word, 1)));
    double lambda = d * uni_types_ / uni_total_;
    return std::max(cc - d, 0.0) / uni_total_ + lambda * floor_p;
  }

  // context holds order-1 ids; this level reads its last level-1
  const int* ctx = context.data() + (context.size() - (level - 1));
  std::string ctx_key = pack_key(ctx, level - 1);
  std::vector<int> gram(ctx, ctx + (level - 1));
  gram.push_back(word);
  std::string gram_key = pack_key(gram.data(), level);

  double d = discounts_[level];
  if (level == order_) {
    double total = static_cast<double>(lookup(top_ctx_total_, ctx_key));
    if (total == 0.0) return prob_at(level - 1, context, word);
    double c = static_cast<double>(lookup(raw_top_, gram_key));
    double types = static_cast<double>(lookup(top_ctx_types_, ctx_key));
    return std::max(c - d, 0.0) / total +
           d * types / total * prob_at(level - 1, context, word);
  }
  double total = static_cast<double>(lookup(cont_ctx_total_[level], ctx_key));
  if (total == 0.0) return prob_at(level - 1, context, word);
  double cc = static_cast<double>(lookup(cont_[level], gram_key));
  double types = static_cast<double>(lookup(cont_ctx_types_[level], ctx_key));
  return std::max(cc - d, 0.0) / total + d * types / total * prob_at(level - 1, context, word);
}

double NGramLM::cond_prob(const std::vector<std::string>& context, const std::string& word) const {
  std::vector<int> ctx(static_cast<size_t>(std::max(order_ - 1, 0)), kBosId);
  size_t take = std::min(context.size(), ctx.size());
  for (size_t i = 0; i < take; ++i) {
    const std::string& w = context[context.size() - take + i];
    ctx[ctx.size() - take + i] = w == kBosMark ? kBosId : word_event_id(w);
  }
  return prob_at(order_, ctx, word_event_id(word));
}

double NGramLM::sequence_log_prob(const std::string& text) const {
  std::vector<std::string> words = text::word_tokenize(text);
  std::vector<int> ids;
  ids.reserve(words.size() + 1);
  for (const std::string& w : words) ids.push_back(word_event_id(w));
  ids.push_back(kEosId);

  std::vector<int> ctx(static_cast<size_t>(std::max(order_ - 1, 0)), kBosId);
  double lp = 0.0;
  for (int id : ids) {
    lp += std::log(prob_at(order_, ctx, id));
    if (!ctx.empty()) {
      ctx.erase(ctx.begin());
      ctx.push_back(id);
    }
  }
  return lp;
}

double NGramLM::perplexity(const std::vector<std::string>& texts) const {
  if (texts.empty()) throw InvalidArgError("ngram: perplexity of an empty text set");
  double lp = 0.0;
  long long events = 0;
  for (const std::string& t : texts) {
    lp += sequence_log_prob(t);
    events += static_cast<long long>(text::word_tokenize(t).size()) + 1;
  }
  return std::exp(-lp / static_cast<double>(events));
}

}  // namespace unionlm::metrics

#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace unionlm::metrics {

// Interpolated Kneser-Ney language model over word tokens. The top level
// discounts raw counts; every lower level uses continuation counts (distinct
// left contexts); the unigram interpolates with the uniform distribution over
// the event vocabulary. Each level's discount is n1/(n1+2*n2) from that
// level's count-of-counts, replaced by 0.5 (with a warning) when the formula
// degenerates to 0, which would assign zero mass to unseen events.
//
// Events are word types with corpus frequency >= min_count, plus <unk> and
// the sentence-end marker; every event has positive probability in every
// context and each context's probabilities sum to one.
class NGramLM {
 public:
  static NGramLM fit(const std::vector<std::string>& corpus, int order, int min_count = 1);

  // P(word | context). Contexts shorter than order-1 are left-padded with the
  // sentence-start marker; longer ones keep their last order-1 tokens. The
  // word "</s>" names the sentence-end event; unknown words score as <unk>.
  double cond_prob(const std::vector<std::string>& context, const std::string& word) const;

  // natural-log probability of the text: its tokens plus one </s> event
  double sequence_log_prob(const std::string& text) const;

  // exp of the mean negative log likelihood over all events in all texts
  double perplexity(const std::vector<std::string>& texts) const;

  int order() const { return order_; }
  size_t event_vocab_size() const { return event_vocab_; }
  const std::vector<double>& discounts() const { return discounts_; }  // index 1..order
  const std::vector<std::string>& warnings() const { return warnings_; }

  static constexpr const char* kBosMark = "<s>";
  static constexpr const char* kEosMark = "</s>";

 private:
  NGramLM() = default;

  using Count = long long;
  using Table = std::unordered_map<std::string, Count>;

  double prob_at(int level, const std::vector<int>& context, int word) const;
  int word_event_id(const std::string& word) const;

  int order_ = 0;
  size_t event_vocab_ = 0;
  std::unordered_map<std::string, int> word_ids_;
  std::vector<double> discounts_;
  std::vector<std::string> warnings_;

  Table raw_top_;                     // order-gram counts (order >= 2)
  Table top_ctx_total_, top_ctx_types_;
  std::vector<Table> cont_;           // [k] continuation counts, k = 1..order-1 (or 1)
  std::vector<Table> cont_ctx_total_, cont_ctx_types_;  // [k], k >= 2
  double uni_total_ = 0.0;
  double uni_types_ = 0.0;
};

}  // namespace unionlm::metrics

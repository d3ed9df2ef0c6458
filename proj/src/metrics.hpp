#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ngram.hpp"
#include "util.hpp"

namespace unionlm::metrics {

// Corpus-level BLEU, orders 1-4 with uniform weights, clipped counts against
// up to 3 references, brevity penalty against the closest reference length
// (ties resolve to the shorter), no smoothing: any order with matches but a
// zero match count yields 0. Case-insensitive, punctuation kept as tokens.
double bleu(const std::vector<std::string>& candidates,
            const std::vector<std::vector<std::string>>& reference_sets);

// Occurrences of generated tokens absent from the source's token set, after
// lowercasing and punctuation stripping.
int uni(const std::string& source, const std::string& generation);

// Token count of the generation under the same canonicalization.
int gen_length(const std::string& generation);

struct EaConfig {
  int hash_bits = 16;  // feature table of 2^hash_bits buckets
  int epochs = 10;
  double lr = 0.1;
  uint64_t seed = 0;

  void validate() const;
};

// Logistic acceptability classifier over hashed unigram+bigram counts of
// "source <sep> candidate"; stands in for the human accept/reject judgment.
class EaClassifier {
 public:
  static EaClassifier fit(const std::vector<std::pair<std::string, std::string>>& accepted,
                          const std::vector<std::pair<std::string, std::string>>& rejected,
                          const EaConfig& cfg);

  double probability(const std::string& source, const std::string& candidate) const;
  bool approves(const std::string& source, const std::string& candidate) const {
    return probability(source, candidate) >= 0.5;
  }

 private:
  EaClassifier() = default;
  int bits_ = 16;
  std::vector<double> w_;
  double b_ = 0.0;
};

// Fraction of pairs the classifier approves.
double ea_score(const EaClassifier& ea,
                const std::vector<std::pair<std::string, std::string>>& pairs);

// Perplexity backend; the generated-text column can score against either the
// fact-corpus n-gram model or a neural LM head.
struct PplScorer {
  virtual ~PplScorer() = default;
  virtual double score(const std::vector<std::string>& texts) const = 0;
};

class NGramScorer final : public PplScorer {
 public:
  explicit NGramScorer(NGramLM lm) : lm_(std::move(lm)) {}
  double score(const std::vector<std::string>& texts) const override {
    return lm_.perplexity(texts);
  }
  const NGramLM& lm() const { return lm_; }

 private:
  NGramLM lm_;
};

struct MetricsRow {
  std::string system;
  double bleu = 0.0;
  double ppl_gen = 0.0;
  double ppl_trg = 0.0;
  double ea = 0.0;
  MeanStd uni;
  MeanStd length;
  std::string error;  // non-empty marks a failed condition; metric cells are blank

  std::string to_json() const;
  static MetricsRow from_json(const std::string& content);
};

MetricsRow evaluate_all(const std::string& system, const std::vector<std::string>& generations,
                        const std::vector<std::string>& sources,
                        const std::vector<std::vector<std::string>>& reference_sets,
                        const PplScorer& gen_scorer, const PplScorer& trg_scorer,
                        const EaClassifier& ea);

// Fixed-format report; rendering the same rows twice is byte-identical.
struct MetricsReport {
  std::vector<MetricsRow> rows;

  std::string to_csv() const;
  std::string to_table() const;
};

}  // namespace unionlm::metrics

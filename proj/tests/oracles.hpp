#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "model.hpp"

// Reference implementations the tests check the library against. Everything
// here is computed straight from the metric definitions with the dumbest data
// structures that work; none of it shares code with src/ beyond the word
// tokenizer.
namespace oracle {

// Corpus BLEU, orders 1-4: clipped n-gram matches over map<vector<string>>
// counts, brevity penalty against the closest (ties shorter) reference length,
// orders the corpus cannot form excluded, zero matches anywhere else -> 0.
double bleu(const std::vector<std::string>& candidates,
            const std::vector<std::vector<std::string>>& reference_sets);

// Interpolated Kneser-Ney evaluated by direct recursion. Count tables are
// plain maps keyed by token vectors; context totals are recomputed by scanning
// the whole table on every query.
class KneserNey {
 public:
  KneserNey(const std::vector<std::string>& corpus, int order, int min_count = 1);

  // P(word | context); context may be shorter or longer than order-1
  double cond_prob(const std::vector<std::string>& context, const std::string& word) const;

  double sequence_log_prob(const std::string& text) const;
  double perplexity(const std::vector<std::string>& texts) const;

  // every event with probability mass: kept words, then "<unk>", then "</s>"
  const std::vector<std::string>& events() const { return events_; }
  double discount(int level) const { return discounts_.at(level); }

  // all distinct length-(order-1) context windows seen in the padded corpus
  std::vector<std::vector<std::string>> observed_contexts() const;

 private:
  using Gram = std::vector<std::string>;
  using Table = std::map<Gram, long long>;

  double prob(int level, const Gram& context, const std::string& word) const;
  std::string map_word(const std::string& w) const;

  int order_ = 0;
  std::map<std::string, bool> kept_;
  std::vector<std::string> events_;
  std::vector<Gram> sentences_;          // mapped tokens, "</s>"-terminated
  std::map<int, Table> raw_;             // k -> k-gram counts, k = 2..max(order,2)
  std::map<int, Table> cont_;            // k -> continuation counts, k <= order-1 (or 1)
  std::map<int, double> discounts_;
};

// Central finite differences of compute_losses' total against its analytic
// gradient, parameter by parameter on a copy of the state.
struct FdResult {
  double max_rel_err = 0.0;
  size_t checked = 0;
  size_t worst_index = 0;
  std::string worst_group;
};

// sample == 0 checks every parameter; otherwise `sample` indices drawn
// without replacement using sample_seed.
FdResult finite_difference_check(const unionlm::model::ModelState& state,
                                 std::span<const unionlm::model::GenExample> gen_batch,
                                 std::span<const unionlm::model::ClsExample> cls_batch,
                                 double w_lm, double w_cls, double step = 1e-5,
                                 size_t sample = 0, uint64_t sample_seed = 0);

// Scratch directory under the system temp root; removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::string& path() const { return path_; }
  std::string file(const std::string& name) const { return path_ + "/" + name; }

 private:
  std::string path_;
};

}  // namespace oracle

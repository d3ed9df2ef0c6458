#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "model.hpp"
#include "vocab.hpp"

namespace unionlm::decode {

struct DecodeConfig {
  enum class Strategy { greedy, top_k, nucleus };

  Strategy strategy = Strategy::greedy;
  int k = 40;              // top_k only
  double p = 0.9;          // nucleus only, in (0, 1]
  double temperature = 1.0;
  int max_new_tokens = 32;
  uint64_t seed = 0;

  void validate() const;
  static Strategy strategy_from_name(std::string_view name);
  static const char* strategy_name(Strategy s);
};

// Decodes from the prompt [BOS, keyword] ++ enc(source) ++ [SEP]. Stops at
// EOS, max_new_tokens, or the model's context limit; overlong sources are
// truncated from the left. Greedy resolves ties toward the lowest token id;
// the sampling strategies consume exactly one uniform draw per emitted token,
// so nucleus p=1, top_k k=vocab and plain temperature sampling coincide
// trajectory for trajectory under one seed.
std::vector<int> generate_ids(const model::ModelState& state, const tok::Vocab& vocab,
                              const std::string& keyword, const std::string& source,
                              const DecodeConfig& cfg);

std::string generate(const model::ModelState& state, const tok::Vocab& vocab,
                     const std::string& keyword, const std::string& source,
                     const DecodeConfig& cfg);

// Item i decodes with seed cfg.seed ^ i; one failing item reports its index.
std::vector<std::string> batch_generate(const model::ModelState& state, const tok::Vocab& vocab,
                                        const std::string& keyword,
                                        const std::vector<std::string>& sources,
                                        const DecodeConfig& cfg);

}  // namespace unionlm::decode

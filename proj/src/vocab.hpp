#pragma once

#include <array>
#include <string>
#include <unordered_map>
#include <vector>

#include "corpus.hpp"
#include "util.hpp"

namespace unionlm::tok {

// Reserved tokens, lowest ids, fixed order. The keyword tokens double as the
// contextual keyword surfaces in corpus::default_keywords().
constexpr int kPad = 0;
constexpr int kBos = 1;
constexpr int kEos = 2;
constexpr int kSep = 3;
constexpr int kUnk = 4;
constexpr int kKwComve = 5;
constexpr int kKwCose = 6;
constexpr int kKwOpenbook = 7;
constexpr int kKwOmcs = 8;
constexpr int kNumSpecials = 9;

const std::array<const char*, kNumSpecials>& special_surfaces();

class Vocab {
 public:
  // tokens must start with the 9 special surfaces in order.
  explicit Vocab(std::vector<std::string> tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  // id of a surface form, kUnk if absent
  int id_of(const std::string& surface) const;

  // keyword helpers; keyword tokens are identified by surface form
  bool is_dataset_keyword(int id) const { return id >= kKwComve && id <= kKwOmcs; }
  int keyword_id(const std::string& keyword) const;  // throws if not a dataset keyword
  corpus::Dataset keyword_dataset(int keyword_id) const;
  int keyword_for(corpus::Dataset d) const;

  std::vector<int> encode(const std::string& txt) const;
  std::string decode(const std::vector<int>& ids) const;

  // FNV-1a over the token inventory; binds checkpoints to a vocabulary.
  std::string hash() const;

  std::string to_json() const;
  static Vocab from_json(const std::string& content);
  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Most frequent corpus tokens after the specials; ties lexicographic,
// counts below min_count dropped, truncated to max_size entries total.
// keywords supplies the surfaces for the four dataset-keyword slots.
Vocab build_vocab(const std::vector<std::string>& corpus_texts, int max_size, int min_count,
                  const corpus::KeywordTable& keywords = corpus::default_keywords());

struct TokenSequence {
  std::vector<int> ids;
  std::vector<bool> loss_mask;  // true = position is an LM prediction target
};

// [BOS, keyword] ++ enc(source) ++ [SEP] ++ enc(target) ++ [EOS], loss on
// target and EOS. Overlong sequences drop source tokens from the left.
TokenSequence render_generation_sequence(const Vocab& vocab, const std::string& keyword,
                                         const std::string& source, const std::string& target,
                                         int max_seq_len = 128);

// [BOS, keyword] ++ enc(source) ++ (per choice: [SEP] ++ enc(choice)) ++ [EOS],
// loss mask all false; feeds the classification head only.
TokenSequence render_classification_sequence(const Vocab& vocab, const std::string& keyword,
                                             const std::string& source,
                                             const std::vector<std::string>& choices,
                                             int max_seq_len = 128);

}  // namespace unionlm::tok

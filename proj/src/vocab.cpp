#include "vocab.hpp"

#include <algorithm>
#include <map>

#include "json.hpp"
#include "text.hpp"

namespace unionlm::tok {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

const std::array<const char*, kNumSpecials>& special_surfaces() {
  static const std::array<const char*, kNumSpecials> s = {
      "<pad>", "<bos>", "<eos>", "<sep>", "<unk>",
      "<comve>", "<cose>", "<openbook>", "<omcs>"};
  return s;
}

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < kNumSpecials) {
    throw InvalidArgError("vocab must contain the reserved specials");
  }
  // slots 0-4 are structural and fixed; 5-8 are the dataset keywords, whose
  // surfaces may be customized but must stay non-empty (and distinct, which
  // the duplicate check below enforces)
  for (int i = 0; i < kKwComve; ++i) {
    if (tokens_[i] != special_surfaces()[i]) {
      throw InvalidArgError(strformat("vocab slot %d must be '%s', got '%s'", i,
                                      special_surfaces()[i], tokens_[i].c_str()));
    }
  }
  for (int i = kKwComve; i < kNumSpecials; ++i) {
    if (tokens_[i].empty()) {
      throw InvalidArgError(strformat("vocab slot %d (a dataset keyword) is empty", i));
    }
  }
  for (size_t i = 0; i < tokens_.size(); ++i) {
    auto [it, inserted] = index_.emplace(tokens_[i], static_cast<int>(i));
    if (!inserted) {
      throw InvalidArgError("duplicate surface form in vocab: '" + tokens_[i] + "'");
    }
  }
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) {
    throw InvalidArgError(strformat("token id %d out of range [0,%d)", id, size()));
  }
  return tokens_[static_cast<size_t>(id)];
}

int Vocab::id_of(const std::string& surface) const {
  auto it = index_.find(surface);
  return it == index_.end() ? kUnk : it->second;
}

int Vocab::keyword_id(const std::string& keyword) const {
  auto it = index_.find(keyword);
  if (it == index_.end() || !is_dataset_keyword(it->second)) {
    throw InvalidArgError("not a dataset keyword: '" + keyword + "'");
  }
  return it->second;
}

corpus::Dataset Vocab::keyword_dataset(int keyword_id) const {
  switch (keyword_id) {
    case kKwComve:
      return corpus::Dataset::comve;
    case kKwCose:
      return corpus::Dataset::cose;
    case kKwOpenbook:
      return corpus::Dataset::openbook;
    case kKwOmcs:
      return corpus::Dataset::omcs;
    default:
      throw InvalidArgError(strformat("id %d is not a dataset keyword", keyword_id));
  }
}

int Vocab::keyword_for(corpus::Dataset d) const {
  switch (d) {
    case corpus::Dataset::comve:
      return kKwComve;
    case corpus::Dataset::cose:
      return kKwCose;
    case corpus::Dataset::openbook:
      return kKwOpenbook;
    case corpus::Dataset::omcs:
      return kKwOmcs;
  }
  throw InvalidArgError("bad dataset");
}

std::vector<int> Vocab::encode(const std::string& txt) const {
  std::vector<int> ids;
  for (const auto& t : text::word_tokenize(txt)) {
    ids.push_back(id_of(t));
  }
  return ids;
}

std::string Vocab::decode(const std::vector<int>& ids) const {
  std::vector<std::string> words;
  for (int id : ids) {
    if (id < 0 || id >= size()) {
      throw InvalidArgError(strformat("token id %d out of range [0,%d)", id, size()));
    }
    if (id == kEos) break;
    if (id < kNumSpecials) continue;
    words.push_back(tokens_[static_cast<size_t>(id)]);
  }
  return text::canonical_join(words);
}

std::string Vocab::hash() const {
  uint64_t h = 14695981039346656037ull;
  for (const auto& t : tokens_) {
    h = fnv1a64(t.data(), t.size(), h);
    h = fnv1a64("\n", 1, h);
  }
  return hex64(h);
}

std::string Vocab::to_json() const {
  ordered_json j;
  j["version"] = 1;
  j["specials"] = std::vector<std::string>(tokens_.begin(), tokens_.begin() + kNumSpecials);
  j["tokens"] = tokens_;
  return j.dump(2) + "\n";
}

Vocab Vocab::from_json(const std::string& content) {
  json j = json::parse(content, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw ParseError("vocab file: invalid JSON");
  }
  if (!j.contains("version") || j["version"].get<int>() != 1) {
    throw ParseError("vocab file: unsupported version");
  }
  return Vocab(j.at("tokens").get<std::vector<std::string>>());
}

void Vocab::save(const std::string& path) const { write_text_file(path, to_json()); }

Vocab Vocab::load(const std::string& path) { return from_json(read_text_file(path)); }

Vocab build_vocab(const std::vector<std::string>& corpus_texts, int max_size, int min_count,
                  const corpus::KeywordTable& keywords) {
  if (max_size <= kNumSpecials) {
    throw InvalidArgError(strformat("max_size must exceed %d specials", kNumSpecials));
  }
  std::map<std::string, long long> counts;
  for (const auto& txt : corpus_texts) {
    for (auto& t : text::word_tokenize(txt)) {
      ++counts[t];
    }
  }
  std::vector<std::pair<std::string, long long>> entries(counts.begin(), counts.end());
  std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  std::vector<std::string> tokens(special_surfaces().begin(), special_surfaces().end());
  tokens[kKwComve] = keywords.at(corpus::Dataset::comve);
  tokens[kKwCose] = keywords.at(corpus::Dataset::cose);
  tokens[kKwOpenbook] = keywords.at(corpus::Dataset::openbook);
  tokens[kKwOmcs] = keywords.at(corpus::Dataset::omcs);
  for (const auto& [tokn, count] : entries) {
    if (static_cast<int>(tokens.size()) >= max_size) break;
    if (count < min_count) continue;
    if (std::find(tokens.begin(), tokens.begin() + kNumSpecials, tokn) !=
        tokens.begin() + kNumSpecials)
      continue;  // a corpus token may coincide with a customized keyword
    tokens.push_back(tokn);
  }
  return Vocab(std::move(tokens));
}

namespace {

int checked_keyword(const Vocab& vocab, const std::string& keyword) {
  return vocab.keyword_id(keyword);
}

// Keeps the sequence within max_seq_len by dropping source tokens from the
// left; targets and choices are never truncated.
void truncate_source(std::vector<int>& source_ids, size_t fixed_len, int max_seq_len) {
  size_t total = fixed_len + source_ids.size();
  if (total <= static_cast<size_t>(max_seq_len)) return;
  size_t drop = total - static_cast<size_t>(max_seq_len);
  if (drop >= source_ids.size()) {
    if (fixed_len > static_cast<size_t>(max_seq_len)) {
      throw InvalidArgError(
          strformat("sequence of length %zu cannot fit max_seq_len %d even with the source "
                    "removed",
                    fixed_len, max_seq_len));
    }
    source_ids.clear();
    return;
  }
  source_ids.erase(source_ids.begin(), source_ids.begin() + static_cast<ptrdiff_t>(drop));
}

}  // namespace

TokenSequence render_generation_sequence(const Vocab& vocab, const std::string& keyword,
                                         const std::string& source, const std::string& target,
                                         int max_seq_len) {
  int kw = checked_keyword(vocab, keyword);
  std::vector<int> src = vocab.encode(source);
  std::vector<int> trg = vocab.encode(target);
  // BOS + keyword + SEP + target + EOS stay; source absorbs any truncation.
  truncate_source(src, 4 + trg.size(), max_seq_len);

  TokenSequence seq;
  seq.ids.push_back(kBos);
  seq.ids.push_back(kw);
  seq.ids.insert(seq.ids.end(), src.begin(), src.end());
  seq.ids.push_back(kSep);
  size_t target_start = seq.ids.size();
  seq.ids.insert(seq.ids.end(), trg.begin(), trg.end());
  seq.ids.push_back(kEos);

  seq.loss_mask.assign(seq.ids.size(), false);
  for (size_t i = target_start; i < seq.ids.size(); ++i) seq.loss_mask[i] = true;
  return seq;
}

TokenSequence render_classification_sequence(const Vocab& vocab, const std::string& keyword,
                                             const std::string& source,
                                             const std::vector<std::string>& choices,
                                             int max_seq_len) {
  int kw = checked_keyword(vocab, keyword);
  if (choices.size() < 3 || choices.size() > 5) {
    throw InvalidArgError(strformat("expected 3 to 5 choices, got %zu", choices.size()));
  }
  std::vector<std::vector<int>> choice_ids;
  size_t fixed = 3;  // BOS + keyword + EOS
  for (const auto& c : choices) {
    if (text::trim(c).empty()) {
      throw InvalidArgError("empty choice text");
    }
    choice_ids.push_back(vocab.encode(c));
    fixed += 1 + choice_ids.back().size();  // SEP + choice
  }
  std::vector<int> src = vocab.encode(source);
  truncate_source(src, fixed, max_seq_len);

  TokenSequence seq;
  seq.ids.push_back(kBos);
  seq.ids.push_back(kw);
  seq.ids.insert(seq.ids.end(), src.begin(), src.end());
  for (const auto& ids : choice_ids) {
    seq.ids.push_back(kSep);
    seq.ids.insert(seq.ids.end(), ids.begin(), ids.end());
  }
  seq.ids.push_back(kEos);
  seq.loss_mask.assign(seq.ids.size(), false);
  return seq;
}

}  // namespace unionlm::tok

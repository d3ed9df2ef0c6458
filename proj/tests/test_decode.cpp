#include "decode.hpp"

#include <algorithm>

#include "doctest.h"
#include "oracles.hpp"
#include "util.hpp"

using namespace unionlm;

namespace {

const tok::Vocab& toy_vocab() {
  static const tok::Vocab vocab = tok::build_vocab({"a b c d e f g h"}, 64, 1);
  return vocab;
}

model::ModelState toy_state(uint64_t seed = 42, int max_seq = 32) {
  model::ModelConfig cfg;
  cfg.n_layers = 1;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.d_ff = 16;
  cfg.vocab_size = toy_vocab().size();
  cfg.max_seq_len = max_seq;
  cfg.seed = seed;
  return model::init_model(cfg);
}

bool is_banned(int id) {
  return id == tok::kPad || id == tok::kBos || id == tok::kSep ||
         (id >= tok::kKwComve && id <= tok::kKwOmcs);
}

}  // namespace

TEST_CASE("decode config validation and strategy names") {
  decode::DecodeConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  auto broken = cfg;
  broken.k = 0;
  CHECK_THROWS_AS(broken.validate(), InvalidArgError);
  broken = cfg;
  broken.p = 0.0;
  CHECK_THROWS_AS(broken.validate(), InvalidArgError);
  broken.p = 1.1;
  CHECK_THROWS_AS(broken.validate(), InvalidArgError);
  broken = cfg;
  broken.temperature = 0.0;
  CHECK_THROWS_AS(broken.validate(), InvalidArgError);
  broken = cfg;
  broken.max_new_tokens = 0;
  CHECK_THROWS_AS(broken.validate(), InvalidArgError);

  using S = decode::DecodeConfig::Strategy;
  CHECK(decode::DecodeConfig::strategy_from_name("greedy") == S::greedy);
  CHECK(decode::DecodeConfig::strategy_from_name("top_k") == S::top_k);
  CHECK(decode::DecodeConfig::strategy_from_name("top-k") == S::top_k);
  CHECK(decode::DecodeConfig::strategy_from_name("nucleus") == S::nucleus);
  CHECK(decode::DecodeConfig::strategy_from_name("top_p") == S::nucleus);
  CHECK(decode::DecodeConfig::strategy_from_name("top-p") == S::nucleus);
  CHECK_THROWS_AS(decode::DecodeConfig::strategy_from_name("beam"), InvalidArgError);
  for (S s : {S::greedy, S::top_k, S::nucleus}) {
    CHECK(decode::DecodeConfig::strategy_from_name(decode::DecodeConfig::strategy_name(s)) == s);
  }
}

TEST_CASE("greedy decoding is deterministic and ignores the seed") {
  auto state = toy_state();
  decode::DecodeConfig cfg;
  auto a = decode::generate_ids(state, toy_vocab(), "<comve>", "a b c", cfg);
  cfg.seed = 999;
  auto b = decode::generate_ids(state, toy_vocab(), "<comve>", "a b c", cfg);
  CHECK(a == b);
  REQUIRE_FALSE(a.empty());
}

TEST_CASE("greedy ties resolve to the lowest legal token id") {
  // all-zero parameters make every logit identical; the lowest non-banned id
  // is EOS, so the decode emits exactly one EOS token
  auto state = toy_state();
  std::fill(state.params.begin(), state.params.end(), 0.0);
  decode::DecodeConfig cfg;
  auto ids = decode::generate_ids(state, toy_vocab(), "<comve>", "", cfg);
  REQUIRE(ids.size() == 1);
  CHECK(ids[0] == tok::kEos);
}

TEST_CASE("structural tokens are never emitted") {
  auto state = toy_state(7);
  decode::DecodeConfig cfg;
  cfg.strategy = decode::DecodeConfig::Strategy::top_k;
  cfg.k = toy_vocab().size();
  cfg.temperature = 5.0;  // flat distribution reaches every candidate
  cfg.max_new_tokens = 12;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    cfg.seed = seed;
    auto ids = decode::generate_ids(state, toy_vocab(), "<cose>", "a b", cfg);
    for (size_t i = 0; i < ids.size(); ++i) {
      CHECK_FALSE(is_banned(ids[i]));
      if (ids[i] == tok::kEos) CHECK(i == ids.size() - 1);
    }
    CHECK(ids.size() <= 12);
  }
}

TEST_CASE("generation stops at the context limit") {
  auto state = toy_state(3, /*max_seq=*/8);
  decode::DecodeConfig cfg;
  cfg.max_new_tokens = 100;
  // prompt [BOS kw a b SEP] fills 5 of 8 slots, leaving room for 3 tokens
  auto ids = decode::generate_ids(state, toy_vocab(), "<comve>", "a b", cfg);
  CHECK(ids.size() <= 3);
}

TEST_CASE("overlong sources are trimmed from the left instead of failing") {
  auto state = toy_state(3, /*max_seq=*/12);
  decode::DecodeConfig cfg;
  auto ids = decode::generate_ids(state, toy_vocab(), "<comve>",
                                  "a b c d e f g h a b c d e f g h", cfg);
  CHECK_FALSE(ids.empty());
}

TEST_CASE("nucleus p=1 and top_k k=vocab sample identical trajectories") {
  auto state = toy_state(11);
  decode::DecodeConfig nuc;
  nuc.strategy = decode::DecodeConfig::Strategy::nucleus;
  nuc.p = 1.0;
  nuc.temperature = 1.5;
  nuc.max_new_tokens = 16;
  decode::DecodeConfig topk = nuc;
  topk.strategy = decode::DecodeConfig::Strategy::top_k;
  topk.k = toy_vocab().size();

  bool any_multi_token = false;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    nuc.seed = topk.seed = seed;
    auto a = decode::generate_ids(state, toy_vocab(), "<openbook>", "c d e", nuc);
    auto b = decode::generate_ids(state, toy_vocab(), "<openbook>", "c d e", topk);
    CHECK(a == b);
    any_multi_token = any_multi_token || a.size() > 1;
  }
  CHECK(any_multi_token);
}

TEST_CASE("sampling is deterministic per seed and varies across seeds") {
  auto state = toy_state(13);
  decode::DecodeConfig cfg;
  cfg.strategy = decode::DecodeConfig::Strategy::nucleus;
  cfg.p = 0.95;
  cfg.temperature = 3.0;
  cfg.max_new_tokens = 10;

  cfg.seed = 5;
  auto a = decode::generate_ids(state, toy_vocab(), "<comve>", "a", cfg);
  auto b = decode::generate_ids(state, toy_vocab(), "<comve>", "a", cfg);
  CHECK(a == b);

  bool differs = false;
  for (uint64_t seed = 6; seed < 14 && !differs; ++seed) {
    cfg.seed = seed;
    differs = decode::generate_ids(state, toy_vocab(), "<comve>", "a", cfg) != a;
  }
  CHECK(differs);
}

TEST_CASE("generate renders ids through the detokenizer") {
  auto state = toy_state();
  decode::DecodeConfig cfg;
  std::string text = decode::generate(state, toy_vocab(), "<comve>", "a b c", cfg);
  auto ids = decode::generate_ids(state, toy_vocab(), "<comve>", "a b c", cfg);
  CHECK(text == toy_vocab().decode(ids));
}

TEST_CASE("batch items decode with per-item seeds") {
  auto state = toy_state(19);
  decode::DecodeConfig cfg;
  cfg.strategy = decode::DecodeConfig::Strategy::top_k;
  cfg.k = 8;
  cfg.temperature = 2.0;
  cfg.seed = 100;
  std::vector<std::string> sources = {"a b", "c d", "e f"};
  auto batch = decode::batch_generate(state, toy_vocab(), "<comve>", sources, cfg);
  REQUIRE(batch.size() == 3);
  for (size_t i = 0; i < sources.size(); ++i) {
    decode::DecodeConfig item = cfg;
    item.seed = cfg.seed ^ static_cast<uint64_t>(i);
    CHECK(batch[i] == decode::generate(state, toy_vocab(), "<comve>", sources[i], item));
  }
}

TEST_CASE("batch errors carry the failing item index") {
  auto state = toy_state();
  state.vocab_hash = "0000000000000000";  // will not match the real vocab
  decode::DecodeConfig cfg;
  try {
    decode::batch_generate(state, toy_vocab(), "<comve>", {"a"}, cfg);
    FAIL("expected Error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("item 0:") != std::string::npos);
  }
}

TEST_CASE("decode validates the model-vocab binding") {
  auto state = toy_state();
  decode::DecodeConfig cfg;

  auto bound = state;
  bound.vocab_hash = "ffffffffffffffff";
  CHECK_THROWS_AS(decode::generate_ids(bound, toy_vocab(), "<comve>", "a", cfg), StateError);
  bound.vocab_hash = toy_vocab().hash();
  CHECK_NOTHROW(decode::generate_ids(bound, toy_vocab(), "<comve>", "a", cfg));

  auto other_vocab = tok::build_vocab({"a b"}, 64, 1);
  CHECK_THROWS_AS(decode::generate_ids(state, other_vocab, "<comve>", "a", cfg), StateError);

  CHECK_THROWS_AS(decode::generate_ids(state, toy_vocab(), "a", "b", cfg), InvalidArgError);

  auto cramped = toy_state(1, /*max_seq=*/3);
  CHECK_THROWS_AS(decode::generate_ids(cramped, toy_vocab(), "<comve>", "a", cfg),
                  InvalidArgError);
}

#include "ngram.hpp"

#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "util.hpp"

using namespace unionlm;

namespace {

// Shared toy corpora; small enough that the oracle's per-query table scans
// stay instant.
const std::vector<std::vector<std::string>> kToyCorpora = {
    {"a a b"},
    {"the cat sat on the mat .", "the dog sat on the log .", "a cat and a dog ."},
    {"a b a b a b", "b a b a", "a a b b"},
    {"one fish two fish red fish blue fish", "red fish blue fish"},
    {"p q r", "p q", "r r s"},
};

void check_against_oracle(const std::vector<std::string>& corpus, int order, int min_count) {
  auto lm = metrics::NGramLM::fit(corpus, order, min_count);
  oracle::KneserNey ref(corpus, order, min_count);

  CHECK(lm.event_vocab_size() == ref.events().size());
  for (int level = 1; level <= order; ++level) {
    CHECK(lm.discounts()[level] == doctest::Approx(ref.discount(level)).epsilon(1e-12));
  }

  auto contexts = ref.observed_contexts();
  contexts.push_back({});                     // shorter than order-1: BOS padding
  contexts.push_back({"zzzz"});               // unknown word in context
  contexts.push_back({"zzzz", "yyyy", "xxxx", "wwww"});  // longer than order-1
  contexts.push_back({"<s>"});                // explicit start marker

  std::vector<std::string> words = ref.events();
  words.push_back("qqqq");  // unknown word scores as <unk>

  for (const auto& ctx : contexts) {
    double total = 0.0;
    for (const auto& ev : ref.events()) {
      double p = lm.cond_prob(ctx, ev);
      double q = ref.cond_prob(ctx, ev);
      CHECK(p > 0.0);
      CHECK(std::abs(p - q) < 1e-10);
      total += p;
    }
    CHECK(std::abs(total - 1.0) < 1e-9);
    for (const auto& w : words) {
      CHECK(std::abs(lm.cond_prob(ctx, w) - ref.cond_prob(ctx, w)) < 1e-10);
    }
  }

  for (const auto& text : corpus) {
    CHECK(lm.sequence_log_prob(text) ==
          doctest::Approx(ref.sequence_log_prob(text)).epsilon(1e-10));
  }
  CHECK(lm.perplexity(corpus) == doctest::Approx(ref.perplexity(corpus)).epsilon(1e-10));
}

}  // namespace

TEST_CASE("kneser-ney matches the direct recursive evaluation on toy corpora") {
  for (const auto& corpus : kToyCorpora) {
    for (int order = 1; order <= 4; ++order) {
      CAPTURE(order);
      check_against_oracle(corpus, order, 1);
    }
  }
  // rare-word collapse: 's' occurs once and maps to <unk>
  check_against_oracle(kToyCorpora[4], 3, 2);
  check_against_oracle(kToyCorpora[1], 2, 2);
}

TEST_CASE("order-1 probabilities on 'a a b' match hand computation") {
  auto lm = metrics::NGramLM::fit({"a a b"}, 1);
  // events: a, b, <unk>, </s>; continuation counts 2/1/0/1 over 4 bigrams,
  // discount 2/(2+2) = 0.5, uniform floor 1/4
  CHECK(lm.event_vocab_size() == 4);
  CHECK(lm.discounts()[1] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(lm.cond_prob({}, "a") == doctest::Approx(0.46875).epsilon(1e-15));
  CHECK(lm.cond_prob({}, "b") == doctest::Approx(0.21875).epsilon(1e-15));
  CHECK(lm.cond_prob({}, "</s>") == doctest::Approx(0.21875).epsilon(1e-15));
  CHECK(lm.cond_prob({}, "zzz") == doctest::Approx(0.09375).epsilon(1e-15));
  // order 1 ignores the context entirely
  CHECK(lm.cond_prob({"b"}, "a") == lm.cond_prob({}, "a"));
}

TEST_CASE("single-event corpus degenerates to the uniform distribution") {
  for (int order : {1, 2, 3}) {
    CAPTURE(order);
    auto lm = metrics::NGramLM::fit({"a"}, order);
    // V = {a, <unk>, </s>}; every count equals 1 so the discount formula gives
    // D = 1 and all mass flows to the uniform floor
    REQUIRE(lm.event_vocab_size() == 3);
    for (const auto& ev : {"a", "zzz", "</s>"}) {
      CHECK(lm.cond_prob({}, ev) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
      CHECK(lm.cond_prob({"a"}, ev) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
    CHECK(lm.perplexity({"a"}) == doctest::Approx(3.0).epsilon(1e-9));
  }
}

TEST_CASE("discount falls back to 0.5 with a warning when no singletons exist") {
  auto lm = metrics::NGramLM::fit({"a a", "a a"}, 2);
  // every bigram occurs twice, so the top level has n1 = 0
  CHECK(lm.discounts()[2] == 0.5);
  REQUIRE(lm.warnings().size() == 1);
  CHECK(lm.warnings()[0] == "order-2 counts have no singletons; discount fell back to 0.5");
  // the continuation level still has a singleton and keeps its formula value
  CHECK(lm.discounts()[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  auto clean = metrics::NGramLM::fit({"a a b"}, 1);
  CHECK(clean.warnings().empty());
}

TEST_CASE("words below min_count score exactly like unknown words") {
  auto lm = metrics::NGramLM::fit({"p q r", "p q", "r r s"}, 2, 2);
  CHECK(lm.event_vocab_size() == 3 + 2);  // p q r + <unk> + </s>
  CHECK(lm.cond_prob({"p"}, "s") == lm.cond_prob({"p"}, "never-seen"));
  CHECK(lm.cond_prob({"s"}, "p") == lm.cond_prob({"never-seen"}, "p"));
}

TEST_CASE("context handling: padding, truncation and the start marker") {
  auto lm = metrics::NGramLM::fit(kToyCorpora[1], 3);
  // longer contexts keep their last order-1 tokens
  CHECK(lm.cond_prob({"x", "the", "cat"}, "sat") == lm.cond_prob({"the", "cat"}, "sat"));
  // shorter contexts are left-padded with the start marker
  CHECK(lm.cond_prob({"<s>", "the"}, "cat") == lm.cond_prob({"the"}, "cat"));
  CHECK(lm.cond_prob({"<s>"}, "the") == lm.cond_prob({}, "the"));
}

TEST_CASE("sequence log prob accumulates one end event per text") {
  auto lm = metrics::NGramLM::fit(kToyCorpora[1], 2);
  double lp = lm.cond_prob({}, "the") + std::log(1.0);
  lp = std::log(lm.cond_prob({}, "the")) + std::log(lm.cond_prob({"the"}, "cat")) +
       std::log(lm.cond_prob({"the", "cat"}, "</s>"));
  CHECK(lm.sequence_log_prob("the cat") == doctest::Approx(lp).epsilon(1e-12));
  CHECK(lm.sequence_log_prob("") == doctest::Approx(std::log(lm.cond_prob({}, "</s>"))));
}

TEST_CASE("fit and perplexity reject degenerate arguments") {
  CHECK_THROWS_AS(metrics::NGramLM::fit({"a"}, 0), InvalidArgError);
  CHECK_THROWS_AS(metrics::NGramLM::fit({"a"}, 2, 0), InvalidArgError);
  CHECK_THROWS_AS(metrics::NGramLM::fit({}, 2), InvalidArgError);
  auto lm = metrics::NGramLM::fit({"a"}, 1);
  CHECK_THROWS_AS(lm.perplexity({}), InvalidArgError);
}

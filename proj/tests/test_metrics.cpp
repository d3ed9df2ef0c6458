#include "metrics.hpp"

#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "util.hpp"

using namespace unionlm;

TEST_CASE("bleu scores an exact-match corpus as 1") {
  std::vector<std::string> cands = {"the cat sat on the mat .", "a stitch in time saves nine"};
  std::vector<std::vector<std::string>> refs = {{cands[0]}, {"completely different", cands[1]}};
  CHECK(std::abs(metrics::bleu(cands, refs) - 1.0) < 1e-12);
}

TEST_CASE("bleu applies the brevity penalty for a one-token shortfall") {
  // all precisions are 1, candidate 4 tokens vs reference 5: exp(1 - 5/4)
  double got = metrics::bleu({"a b c d"}, {{"a b c d e"}});
  CHECK(std::abs(got - std::exp(-0.25)) < 1e-9);
}

TEST_CASE("bleu clips candidate n-grams at the reference maximum") {
  // "small" appears twice in the candidate but once in the reference, so the
  // unigram match is 5/6 rather than 6/6; orders give 5/6 * 4/5 * 2/4 * 1/3
  double got = metrics::bleu({"it is a small small world"}, {{"it is a small world"}});
  CHECK(std::abs(got - std::pow(1.0 / 9.0, 0.25)) < 1e-12);
}

TEST_CASE("bleu picks the closest reference length, ties to the shorter") {
  // lengths 2 and 4 are equally close to 3; the shorter wins, so no penalty
  CHECK(std::abs(metrics::bleu({"a b c"}, {{"a b", "a b c d"}}) - 1.0) < 1e-12);
  // an unambiguously closer longer reference does penalize
  double got = metrics::bleu({"a b"}, {{"a b c d", "a b c d e f"}});
  CHECK(std::abs(got - std::exp(1.0 - 4.0 / 2.0) * 1.0) < 1e-9);
}

TEST_CASE("bleu drops orders the corpus cannot form") {
  // single-token items have no 2-grams anywhere; only the unigram order counts
  CHECK(std::abs(metrics::bleu({"a"}, {{"a"}}) - 1.0) < 1e-12);
  double got = metrics::bleu({"a", "b"}, {{"a"}, {"c"}});
  CHECK(std::abs(got - 0.5) < 1e-12);
}

TEST_CASE("bleu is zero on zero overlap and on empty candidates") {
  CHECK(metrics::bleu({"x y z w"}, {{"a b c d"}}) == 0.0);
  CHECK(metrics::bleu({""}, {{"a b"}}) == 0.0);
}

TEST_CASE("bleu tokenization is case-insensitive and keeps punctuation") {
  CHECK(std::abs(metrics::bleu({"The Cat ."}, {{"the cat ."}}) - 1.0) < 1e-12);
  CHECK(metrics::bleu({"the cat"}, {{"the cat ."}}) < 1.0);
}

TEST_CASE("bleu rejects malformed inputs") {
  CHECK_THROWS_AS(metrics::bleu({}, {}), InvalidArgError);
  CHECK_THROWS_AS(metrics::bleu({"a"}, {}), InvalidArgError);
  CHECK_THROWS_AS(metrics::bleu({"a"}, {{}}), InvalidArgError);
  CHECK_THROWS_AS(metrics::bleu({"a"}, {{"r", "r", "r", "r"}}), InvalidArgError);
}

TEST_CASE("bleu agrees with the brute-force reference on random corpora") {
  Rng rng(20240817);
  const std::vector<std::string> words = {"a", "b", "c", "d", "e", "f", "g", "."};
  auto random_text = [&](size_t min_len, size_t max_len) {
    size_t n = min_len + rng.below(max_len - min_len + 1);
    std::string out;
    for (size_t i = 0; i < n; ++i) {
      if (i) out.push_back(' ');
      out += words[rng.below(words.size())];
    }
    return out;
  };
  for (int trial = 0; trial < 30; ++trial) {
    size_t items = 1 + rng.below(6);
    std::vector<std::string> cands;
    std::vector<std::vector<std::string>> refs;
    for (size_t i = 0; i < items; ++i) {
      cands.push_back(random_text(0, 8));
      std::vector<std::string> rs;
      size_t n_refs = 1 + rng.below(3);
      for (size_t r = 0; r < n_refs; ++r) rs.push_back(random_text(1, 8));
      refs.push_back(rs);
    }
    CAPTURE(trial);
    CHECK(std::abs(metrics::bleu(cands, refs) - oracle::bleu(cands, refs)) < 1e-9);
  }
}

TEST_CASE("uni counts generated tokens absent from the source") {
  const std::string src = "Sugar is used to make coffee sour.";
  CHECK(metrics::uni(src, "Sugar is not used to make coffee sour.") == 1);
  CHECK(metrics::uni(src, "Sugar is used to make coffee sweet.") == 1);
  CHECK(metrics::uni(src, src) == 0);
  CHECK(metrics::uni(src, "coffee sugar") == 0);  // subset, case-folded
  CHECK(metrics::uni("a", "b b") == 2);           // every occurrence counts
  CHECK(metrics::uni("a b", "a , b !") == 0);     // punctuation is not a token
  CHECK(metrics::uni("", "x y") == 2);
}

TEST_CASE("gen_length counts canonical tokens") {
  CHECK(metrics::gen_length("a , b !") == 2);
  CHECK(metrics::gen_length("") == 0);
  CHECK(metrics::gen_length("The cat sat.") == 3);
}

TEST_CASE("uni never exceeds gen_length") {
  Rng rng(7);
  const std::vector<std::string> words = {"u", "v", "w", "x", "y", "z"};
  auto random_text = [&](size_t max_len) {
    size_t n = rng.below(max_len + 1);
    std::string out;
    for (size_t i = 0; i < n; ++i) {
      if (i) out.push_back(' ');
      out += words[rng.below(words.size())];
    }
    return out;
  };
  for (int i = 0; i < 500; ++i) {
    std::string src = random_text(6);
    std::string gen = random_text(6);
    CHECK(metrics::uni(src, gen) <= metrics::gen_length(gen));
    CHECK(metrics::uni(src, gen) >= 0);
  }
}

namespace {

// Linearly separable acceptability data: accepted candidates carry a marker
// token, rejected ones carry a different marker.
void make_ea_data(std::vector<std::pair<std::string, std::string>>& accepted,
                  std::vector<std::pair<std::string, std::string>>& rejected, size_t n,
                  uint64_t seed) {
  Rng rng(seed);
  const std::vector<std::string> filler = {"alpha", "beta", "gamma", "delta", "epsilon", "zeta"};
  auto sentence = [&](const std::string& marker) {
    std::string out;
    size_t len = 2 + rng.below(4);
    for (size_t i = 0; i < len; ++i) {
      if (i) out.push_back(' ');
      out += filler[rng.below(filler.size())];
    }
    return out + " " + marker;
  };
  for (size_t i = 0; i < n; ++i) {
    accepted.emplace_back(sentence("plain"), sentence("veritas"));
    rejected.emplace_back(sentence("plain"), sentence("falsum"));
  }
}

}  // namespace

TEST_CASE("ea classifier separates marker-token data") {
  std::vector<std::pair<std::string, std::string>> acc, rej;
  make_ea_data(acc, rej, 40, 11);
  metrics::EaConfig cfg;
  cfg.hash_bits = 12;
  cfg.seed = 3;
  auto ea = metrics::EaClassifier::fit(acc, rej, cfg);

  std::vector<std::pair<std::string, std::string>> held_acc, held_rej;
  make_ea_data(held_acc, held_rej, 20, 99);
  int correct = 0;
  for (const auto& [s, c] : held_acc) correct += ea.approves(s, c) ? 1 : 0;
  for (const auto& [s, c] : held_rej) correct += ea.approves(s, c) ? 0 : 1;
  CHECK(correct >= 38);  // 0.95 of 40

  double p = ea.probability(held_acc[0].first, held_acc[0].second);
  CHECK(p > 0.0);
  CHECK(p < 1.0);
}

TEST_CASE("ea_score is the approval fraction and ignores pair order") {
  std::vector<std::pair<std::string, std::string>> acc, rej;
  make_ea_data(acc, rej, 30, 5);
  metrics::EaConfig cfg;
  cfg.hash_bits = 12;
  auto ea = metrics::EaClassifier::fit(acc, rej, cfg);

  std::vector<std::pair<std::string, std::string>> mixed;
  mixed.insert(mixed.end(), acc.begin(), acc.begin() + 10);
  mixed.insert(mixed.end(), rej.begin(), rej.begin() + 10);
  double forward = metrics::ea_score(ea, mixed);
  std::vector<std::pair<std::string, std::string>> reversed(mixed.rbegin(), mixed.rend());
  CHECK(metrics::ea_score(ea, reversed) == forward);
  Rng rng(17);
  rng.shuffle(mixed);
  CHECK(metrics::ea_score(ea, mixed) == forward);
}

TEST_CASE("ea training is deterministic for a fixed seed") {
  std::vector<std::pair<std::string, std::string>> acc, rej;
  make_ea_data(acc, rej, 20, 21);
  metrics::EaConfig cfg;
  cfg.hash_bits = 10;
  cfg.seed = 42;
  auto a = metrics::EaClassifier::fit(acc, rej, cfg);
  auto b = metrics::EaClassifier::fit(acc, rej, cfg);
  for (size_t i = 0; i < 5; ++i) {
    CHECK(a.probability(acc[i].first, acc[i].second) ==
          b.probability(acc[i].first, acc[i].second));
  }
}

TEST_CASE("ea rejects degenerate configs and empty inputs") {
  metrics::EaConfig cfg;
  cfg.hash_bits = 2;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgError);
  cfg.hash_bits = 16;
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgError);
  cfg.epochs = 1;
  cfg.lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgError);

  metrics::EaConfig ok;
  CHECK_THROWS_AS(metrics::EaClassifier::fit({}, {{"s", "c"}}, ok), InvalidArgError);
  CHECK_THROWS_AS(metrics::EaClassifier::fit({{"s", "c"}}, {}, ok), InvalidArgError);

  std::vector<std::pair<std::string, std::string>> acc, rej;
  make_ea_data(acc, rej, 5, 1);
  auto ea = metrics::EaClassifier::fit(acc, rej, ok);
  CHECK_THROWS_AS(metrics::ea_score(ea, {}), InvalidArgError);
}

TEST_CASE("metrics row json round-trips") {
  metrics::MetricsRow row;
  row.system = "union";
  row.bleu = 0.1234;
  row.ppl_gen = 12.5;
  row.ppl_trg = 30.25;
  row.ea = 0.75;
  row.uni = {1.5, 0.25};
  row.length = {9.0, 2.0};
  auto back = metrics::MetricsRow::from_json(row.to_json());
  CHECK(back.system == row.system);
  CHECK(back.bleu == row.bleu);
  CHECK(back.ppl_gen == row.ppl_gen);
  CHECK(back.ppl_trg == row.ppl_trg);
  CHECK(back.ea == row.ea);
  CHECK(back.uni.mean == row.uni.mean);
  CHECK(back.uni.stddev == row.uni.stddev);
  CHECK(back.length.mean == row.length.mean);
  CHECK(back.length.stddev == row.length.stddev);
  CHECK(back.error.empty());

  CHECK_THROWS_AS(metrics::MetricsRow::from_json("nope"), ParseError);
  CHECK_THROWS_AS(metrics::MetricsRow::from_json("{\"system\": \"x\"}"), ParseError);
}

TEST_CASE("csv report renders fixed precision and escapes the error column") {
  metrics::MetricsRow ok;
  ok.system = "baseline";
  ok.bleu = 0.5;
  ok.ppl_gen = 10.0;
  ok.ppl_trg = 20.0;
  ok.ea = 1.0;
  ok.uni = {1.0, 0.5};
  ok.length = {8.0, 1.25};
  metrics::MetricsRow bad;
  bad.system = "union, tweaked";
  bad.error = "exploded: \"boom\"";
  metrics::MetricsReport report{{ok, bad}};

  std::string want =
      "system,bleu,ppl_gen,ppl_trg,ea,uni_mean,uni_std,length_mean,length_std,error\n"
      "baseline,0.5000,10.0000,20.0000,1.0000,1.0000,0.5000,8.0000,1.2500,\n"
      "\"union, tweaked\",,,,,,,,,\"exploded: \"\"boom\"\"\"\n";
  CHECK(report.to_csv() == want);
  CHECK(report.to_csv() == report.to_csv());
}

TEST_CASE("text table aligns columns and marks failed rows") {
  metrics::MetricsRow ok;
  ok.system = "union";
  ok.bleu = 0.25;
  ok.ppl_gen = 5.0;
  ok.ppl_trg = 6.0;
  ok.ea = 0.5;
  ok.uni = {2.0, 1.0};
  ok.length = {10.0, 3.0};
  metrics::MetricsRow bad;
  bad.system = "broken";
  bad.error = "no data";
  metrics::MetricsReport report{{ok, bad}};

  std::string table = report.to_table();
  CHECK(table.find("System") != std::string::npos);
  CHECK(table.find("0.2500") != std::string::npos);
  CHECK(table.find("2.00 +/- 1.00") != std::string::npos);
  CHECK(table.find("failed: no data") != std::string::npos);
  CHECK(table == report.to_table());
  // every data line is as wide as the rule line or wider (failure note aside)
  size_t rule_pos = table.find('\n') + 1;
  size_t rule_len = table.find('\n', rule_pos) - rule_pos;
  CHECK(table.substr(rule_pos, rule_len) == std::string(rule_len, '-'));
}

TEST_CASE("evaluate_all assembles all columns from one pass") {
  std::vector<std::string> gens = {"the cat sat", "a dog ran"};
  std::vector<std::string> srcs = {"the cat sat on the mat", "a dog ran home"};
  std::vector<std::vector<std::string>> refs = {{"the cat sat"}, {"a dog ran far"}};

  auto lm = metrics::NGramLM::fit({"the cat sat on the mat", "a dog ran home"}, 2);
  metrics::NGramScorer scorer(lm);

  std::vector<std::pair<std::string, std::string>> acc, rej;
  make_ea_data(acc, rej, 10, 2);
  auto ea = metrics::EaClassifier::fit(acc, rej, metrics::EaConfig{});

  auto row = metrics::evaluate_all("demo", gens, srcs, refs, scorer, scorer, ea);
  CHECK(row.system == "demo");
  CHECK(row.bleu == metrics::bleu(gens, refs));
  CHECK(row.ppl_gen == scorer.score(gens));
  CHECK(row.ppl_trg == scorer.score(gens));
  CHECK(row.ea >= 0.0);
  CHECK(row.ea <= 1.0);
  CHECK(row.uni.mean == 0.0);  // both generations are subsets of their sources
  CHECK(row.length.mean == doctest::Approx(3.0));
  CHECK(row.error.empty());

  CHECK_THROWS_AS(metrics::evaluate_all("x", {}, {}, {}, scorer, scorer, ea), InvalidArgError);
  CHECK_THROWS_AS(metrics::evaluate_all("x", gens, srcs, {refs[0]}, scorer, scorer, ea),
                  InvalidArgError);
}

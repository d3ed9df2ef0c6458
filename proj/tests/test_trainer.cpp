#include "trainer.hpp"

#include <cmath>
#include <numeric>

#include "doctest.h"
#include "oracles.hpp"
#include "util.hpp"

using namespace unionlm;

namespace {

const std::string kData = UNIONLM_TEST_DATA;

const std::vector<corpus::UnifiedExample>& fixture_stream() {
  static const std::vector<corpus::UnifiedExample> stream = [] {
    auto gen = corpus::load_comve_c(kData + "/comve_c.csv");
    auto cls = corpus::load_comve_b(kData + "/comve_b.csv");
    auto cose = corpus::load_qa_jsonl(corpus::Dataset::cose, kData + "/cose.jsonl");
    auto openbook = corpus::load_qa_jsonl(corpus::Dataset::openbook, kData + "/openbook.jsonl");
    auto omcs = corpus::load_omcs(kData + "/omcs.txt");
    return corpus::unify(gen, cls, cose, openbook, omcs);
  }();
  return stream;
}

const tok::Vocab& fixture_vocab() {
  static const tok::Vocab vocab = [] {
    std::vector<std::string> texts;
    for (const auto& ex : fixture_stream()) {
      texts.push_back(ex.source);
      for (const auto& t : ex.targets) texts.push_back(t);
      for (const auto& c : ex.choices) texts.push_back(c);
    }
    return tok::build_vocab(texts, 512, 1);
  }();
  return vocab;
}

model::ModelConfig small_config() {
  model::ModelConfig cfg;
  cfg.n_layers = 1;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.d_ff = 32;
  cfg.vocab_size = fixture_vocab().size();
  cfg.max_seq_len = 64;
  cfg.seed = 7;
  return cfg;
}

train::TrainConfig quick_train(int steps) {
  train::TrainConfig cfg;
  cfg.lr = 3e-3;
  cfg.batch_size = 4;
  cfg.max_steps = steps;
  cfg.eval_interval = 1;
  cfg.pretrain_steps = 0;
  return cfg;
}

double mean_total(const std::vector<train::TrainLogEntry>& log, size_t from, size_t n) {
  double s = 0.0;
  for (size_t i = from; i < from + n; ++i) s += log[i].total;
  return s / static_cast<double>(n);
}

}  // namespace

TEST_CASE("train config validation rejects each bad field") {
  train::TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  auto broken = cfg;
  broken.lr = 0.0;
  CHECK_THROWS_AS(broken.validate(), InvalidArgError);
  broken = cfg;
  broken.batch_size = 0;
  CHECK_THROWS_AS(broken.validate(), InvalidArgError);
  broken = cfg;
  broken.max_steps = 0;
  CHECK_THROWS_AS(broken.validate(), InvalidArgError);
  broken = cfg;
  broken.beta1 = 1.0;
  CHECK_THROWS_AS(broken.validate(), InvalidArgError);
  broken = cfg;
  broken.beta2 = -0.1;
  CHECK_THROWS_AS(broken.validate(), InvalidArgError);
  broken = cfg;
  broken.eps = 0.0;
  CHECK_THROWS_AS(broken.validate(), InvalidArgError);
  broken = cfg;
  broken.eval_interval = 0;
  CHECK_THROWS_AS(broken.validate(), InvalidArgError);
  broken = cfg;
  broken.w_lm = -1.0;
  CHECK_THROWS_AS(broken.validate(), InvalidArgError);
  broken = cfg;
  broken.pretrain_steps = -1;
  CHECK_THROWS_AS(broken.validate(), InvalidArgError);
}

TEST_CASE("repeated optimizer steps reduce the loss on a fixed batch") {
  auto state = model::init_model(small_config());
  const auto& vocab = fixture_vocab();
  auto seq = tok::render_generation_sequence(vocab, "<omcs>", "",
                                             "people sleep in a bed at night .", 64);
  std::vector<model::GenExample> batch = {{seq.ids, seq.loss_mask}};
  train::Trainer trainer(state, quick_train(40), 0);
  double first = trainer.step(batch, {}).total;
  double last = first;
  for (int s = 1; s < 40; ++s) last = trainer.step(batch, {}).total;
  CHECK(trainer.steps_done() == 40);
  CHECK(last < first * 0.5);
}

TEST_CASE("optimizer updates are deterministic and seed-sensitive") {
  auto run = [](uint64_t seed) {
    auto state = model::init_model(small_config());
    auto cfg = quick_train(25);
    train::train_union(state, fixture_stream(), fixture_vocab(), cfg, {}, seed);
    return state.param_checksum();
  };
  CHECK(run(3) == run(3));
  CHECK(run(3) != run(4));
}

TEST_CASE("clip_norm zero disables clipping") {
  // gradient norms in this setup never approach 1e18, so an enormous limit
  // and a disabled one must walk identical trajectories
  auto run = [](double clip) {
    auto state = model::init_model(small_config());
    auto cfg = quick_train(10);
    cfg.clip_norm = clip;
    train::train_union(state, fixture_stream(), fixture_vocab(), cfg, {}, 1);
    return state.param_checksum();
  };
  CHECK(run(0.0) == run(1e18));
  CHECK(run(0.0) != run(1e-3));  // a binding limit changes the trajectory
}

TEST_CASE("a non-finite loss surfaces as a step-tagged state error") {
  auto state = model::init_model(small_config());
  state.params[0] = std::nan("");
  train::Trainer trainer(state, quick_train(5), 0);
  const auto& vocab = fixture_vocab();
  auto seq = tok::render_generation_sequence(vocab, "<omcs>", "", "a door can be opened .", 64);
  std::vector<model::GenExample> batch = {{seq.ids, seq.loss_mask}};
  try {
    trainer.step(batch, {});
    FAIL("expected StateError");
  } catch (const StateError& e) {
    CHECK(std::string(e.what()).find("step 1:") != std::string::npos);
  }
}

TEST_CASE("pretraining fits the fact corpus and never touches the classifier head") {
  auto state = model::init_model(small_config());
  std::string head_before = state.cls_head_checksum();
  std::string all_before = state.param_checksum();

  auto cfg = quick_train(60);
  std::vector<std::string> lines;
  auto result = train::pretrain_omcs(state, fixture_stream(), fixture_vocab(), cfg, 5,
                                     [&](const std::string& s) { lines.push_back(s); });

  CHECK(state.param_checksum() != all_before);
  CHECK(state.cls_head_checksum() == head_before);  // bit-for-bit untouched
  REQUIRE(result.log.size() == 60);
  CHECK(mean_total(result.log, 55, 5) < mean_total(result.log, 0, 5));
  CHECK(result.last.cls == 0.0);

  REQUIRE(lines.size() == 60);
  CHECK(lines[0].rfind("[pretrain] step 1/60", 0) == 0);
}

TEST_CASE("pretraining requires fact rows in the stream") {
  auto state = model::init_model(small_config());
  std::vector<corpus::UnifiedExample> no_facts;
  for (const auto& ex : fixture_stream())
    if (ex.dataset != corpus::Dataset::omcs) no_facts.push_back(ex);
  CHECK_THROWS_AS(train::pretrain_omcs(state, no_facts, fixture_vocab(), quick_train(5), 0),
                  InvalidArgError);
}

TEST_CASE("log entries appear at the eval interval plus the final step") {
  auto state = model::init_model(small_config());
  auto cfg = quick_train(25);
  cfg.eval_interval = 10;
  auto result = train::train_union(state, fixture_stream(), fixture_vocab(), cfg, {}, 2);
  REQUIRE(result.log.size() == 3);
  CHECK(result.log[0].step == 10);
  CHECK(result.log[1].step == 20);
  CHECK(result.log[2].step == 25);
  CHECK(result.log[2].total == result.last.total);
}

TEST_CASE("multi-task training reduces the mixed loss") {
  auto state = model::init_model(small_config());
  auto cfg = quick_train(90);
  auto result = train::train_union(state, fixture_stream(), fixture_vocab(), cfg, {}, 9);
  REQUIRE(result.log.size() == 90);
  CHECK(mean_total(result.log, 84, 6) < mean_total(result.log, 0, 6));
}

TEST_CASE("the target task cannot be ablated") {
  auto state = model::init_model(small_config());
  try {
    train::train_union(state, fixture_stream(), fixture_vocab(), quick_train(5),
                       {corpus::Dataset::comve}, 0);
    FAIL("expected InvalidArgError");
  } catch (const InvalidArgError& e) {
    CHECK(std::string(e.what()).find("cannot be ablated") != std::string::npos);
  }
}

TEST_CASE("ablating the auxiliary datasets leaves a comve-only schedule") {
  auto state = model::init_model(small_config());
  auto cfg = quick_train(12);
  std::vector<std::string> lines;
  auto result =
      train::train_union(state, fixture_stream(), fixture_vocab(), cfg,
                         {corpus::Dataset::cose, corpus::Dataset::openbook}, 4,
                         [&](const std::string& s) { lines.push_back(s); });
  CHECK(result.log.size() == 12);
  CHECK(lines[0].rfind("[train] ", 0) == 0);
}

TEST_CASE("an empty auxiliary pool is an error rather than a silent skip") {
  auto state = model::init_model(small_config());
  std::vector<corpus::UnifiedExample> comve_only;
  for (const auto& ex : fixture_stream())
    if (ex.dataset == corpus::Dataset::comve) comve_only.push_back(ex);
  try {
    train::train_union(state, comve_only, fixture_vocab(), quick_train(5), {}, 0);
    FAIL("expected InvalidArgError");
  } catch (const InvalidArgError& e) {
    CHECK(std::string(e.what()).find("no usable rows for cose") != std::string::npos);
  }
}

TEST_CASE("disabling classification freezes the classifier head") {
  auto run = [](bool enabled, double w_cls) {
    auto state = model::init_model(small_config());
    auto cfg = quick_train(15);
    cfg.classification_enabled = enabled;
    cfg.w_cls = w_cls;
    train::train_union(state, fixture_stream(), fixture_vocab(), cfg, {}, 6);
    return state;
  };
  auto baseline = model::init_model(small_config());
  std::string head0 = baseline.cls_head_checksum();

  auto off = run(false, 1.0);
  CHECK(off.cls_head_checksum() == head0);
  auto zero_weight = run(true, 0.0);
  CHECK(zero_weight.cls_head_checksum() == head0);
  auto on = run(true, 1.0);
  CHECK(on.cls_head_checksum() != head0);
}

#include "experiment.hpp"

#include <algorithm>
#include <filesystem>
#include <memory>
#include <set>

#include "json.hpp"
#include "text.hpp"

namespace unionlm::exp {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  if (!j.is_object()) throw ParseError(strformat("config: %s must be an object", where));
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* a : allowed)
      if (it.key() == a) {
        known = true;
        break;
      }
    if (!known)
      throw ParseError(strformat("config: unknown key \"%s\" in %s", it.key().c_str(), where));
  }
}

corpus::ColumnMap column_map_from(const json& j, const char* where) {
  corpus::ColumnMap map;
  if (!j.is_object()) throw ParseError(strformat("config: %s must map column names", where));
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it.value().is_string())
      throw ParseError(strformat("config: %s.%s must be a string", where, it.key().c_str()));
    map[it.key()] = it.value().get<std::string>();
  }
  return map;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const std::string& content) {
  json j;
  try {
    j = json::parse(content);
  } catch (const json::exception& e) {
    throw ParseError(strformat("config: %s", e.what()));
  }
  check_keys(j, {"seed", "out_dir", "system", "data", "keywords", "vocab", "model", "train",
                 "decode", "metrics", "ablation"},
             "the top level");

  ExperimentConfig cfg;
  try {
    cfg.seed = j.value("seed", cfg.seed);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    cfg.system = j.value("system", cfg.system);

    if (j.contains("data")) {
      const json& d = j["data"];
      check_keys(d, {"comve_c", "comve_b", "cose", "openbook", "omcs", "comve_c_columns",
                     "comve_b_columns"},
                 "data");
      cfg.data.comve_c = d.value("comve_c", "");
      cfg.data.comve_b = d.value("comve_b", "");
      cfg.data.cose = d.value("cose", "");
      cfg.data.openbook = d.value("openbook", "");
      cfg.data.omcs = d.value("omcs", "");
      if (d.contains("comve_c_columns"))
        cfg.data.comve_c_columns = column_map_from(d["comve_c_columns"], "data.comve_c_columns");
      if (d.contains("comve_b_columns"))
        cfg.data.comve_b_columns = column_map_from(d["comve_b_columns"], "data.comve_b_columns");
    }

    if (j.contains("keywords")) {
      const json& k = j["keywords"];
      check_keys(k, {"comve", "cose", "openbook", "omcs"}, "keywords");
      for (auto it = k.begin(); it != k.end(); ++it)
        cfg.keywords[corpus::dataset_from_name(it.key())] = it.value().get<std::string>();
    }

    if (j.contains("vocab")) {
      const json& v = j["vocab"];
      check_keys(v, {"max_size", "min_count"}, "vocab");
      cfg.vocab.max_size = v.value("max_size", cfg.vocab.max_size);
      cfg.vocab.min_count = v.value("min_count", cfg.vocab.min_count);
    }

    if (j.contains("model")) {
      const json& m = j["model"];
      check_keys(m, {"n_layers", "d_model", "n_heads", "d_ff", "max_seq_len", "dropout"},
                 "model");
      cfg.model.n_layers = m.value("n_layers", cfg.model.n_layers);
      cfg.model.d_model = m.value("d_model", cfg.model.d_model);
      cfg.model.n_heads = m.value("n_heads", cfg.model.n_heads);
      cfg.model.d_ff = m.value("d_ff", cfg.model.d_ff);
      cfg.model.max_seq_len = m.value("max_seq_len", cfg.model.max_seq_len);
      cfg.model.dropout = m.value("dropout", cfg.model.dropout);
    }

    if (j.contains("train")) {
      const json& t = j["train"];
      check_keys(t, {"lr", "batch_size", "max_steps", "beta1", "beta2", "eps", "clip_norm",
                     "eval_interval", "w_lm", "w_cls", "classification_enabled",
                     "pretrain_steps"},
                 "train");
      cfg.train.lr = t.value("lr", cfg.train.lr);
      cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
      cfg.train.max_steps = t.value("max_steps", cfg.train.max_steps);
      cfg.train.beta1 = t.value("beta1", cfg.train.beta1);
      cfg.train.beta2 = t.value("beta2", cfg.train.beta2);
      cfg.train.eps = t.value("eps", cfg.train.eps);
      cfg.train.clip_norm = t.value("clip_norm", cfg.train.clip_norm);
      cfg.train.eval_interval = t.value("eval_interval", cfg.train.eval_interval);
      cfg.train.w_lm = t.value("w_lm", cfg.train.w_lm);
      cfg.train.w_cls = t.value("w_cls", cfg.train.w_cls);
      cfg.train.classification_enabled =
          t.value("classification_enabled", cfg.train.classification_enabled);
      cfg.train.pretrain_steps = t.value("pretrain_steps", cfg.train.pretrain_steps);
    }

    if (j.contains("decode")) {
      const json& d = j["decode"];
      check_keys(d, {"strategy", "k", "p", "temperature", "max_new_tokens"}, "decode");
      if (d.contains("strategy"))
        cfg.decode.strategy =
            decode::DecodeConfig::strategy_from_name(d["strategy"].get<std::string>());
      cfg.decode.k = d.value("k", cfg.decode.k);
      cfg.decode.p = d.value("p", cfg.decode.p);
      cfg.decode.temperature = d.value("temperature", cfg.decode.temperature);
      cfg.decode.max_new_tokens = d.value("max_new_tokens", cfg.decode.max_new_tokens);
    }

    if (j.contains("metrics")) {
      const json& m = j["metrics"];
      check_keys(m, {"kn_order", "kn_min_count", "ppl_gen_source", "ea"}, "metrics");
      cfg.metrics.kn_order = m.value("kn_order", cfg.metrics.kn_order);
      cfg.metrics.kn_min_count = m.value("kn_min_count", cfg.metrics.kn_min_count);
      cfg.metrics.ppl_gen_source = m.value("ppl_gen_source", cfg.metrics.ppl_gen_source);
      if (m.contains("ea")) {
        const json& e = m["ea"];
        check_keys(e, {"hash_bits", "epochs", "lr"}, "metrics.ea");
        cfg.metrics.ea.hash_bits = e.value("hash_bits", cfg.metrics.ea.hash_bits);
        cfg.metrics.ea.epochs = e.value("epochs", cfg.metrics.ea.epochs);
        cfg.metrics.ea.lr = e.value("lr", cfg.metrics.ea.lr);
      }
    }

    if (j.contains("ablation")) {
      if (!j["ablation"].is_array())
        throw ParseError("config: ablation must be an array of dataset names");
      for (const json& name : j["ablation"])
        cfg.ablation.insert(corpus::dataset_from_name(name.get<std::string>()));
    }
  } catch (const json::exception& e) {
    throw ParseError(strformat("config: %s", e.what()));
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  try {
    return from_json(read_text_file(path));
  } catch (const ParseError& e) {
    throw ParseError(strformat("%s: %s", path.c_str(), e.what()));
  }
}

std::string ExperimentConfig::to_json() const {
  ordered_json j;
  j["seed"] = seed;
  j["out_dir"] = out_dir;
  j["system"] = system;
  ordered_json d;
  d["comve_c"] = data.comve_c;
  d["comve_b"] = data.comve_b;
  d["cose"] = data.cose;
  d["openbook"] = data.openbook;
  d["omcs"] = data.omcs;
  if (!data.comve_c_columns.empty()) d["comve_c_columns"] = data.comve_c_columns;
  if (!data.comve_b_columns.empty()) d["comve_b_columns"] = data.comve_b_columns;
  j["data"] = d;
  ordered_json k;
  for (const auto& [ds, kw] : keywords) k[corpus::dataset_name(ds)] = kw;
  j["keywords"] = k;
  j["vocab"] = {{"max_size", vocab.max_size}, {"min_count", vocab.min_count}};
  j["model"] = {{"n_layers", model.n_layers}, {"d_model", model.d_model},
                {"n_heads", model.n_heads}, {"d_ff", model.d_ff},
                {"max_seq_len", model.max_seq_len}, {"dropout", model.dropout}};
  j["train"] = {{"lr", train.lr},
                {"batch_size", train.batch_size},
                {"max_steps", train.max_steps},
                {"beta1", train.beta1},
                {"beta2", train.beta2},
                {"eps", train.eps},
                {"clip_norm", train.clip_norm},
                {"eval_interval", train.eval_interval},
                {"w_lm", train.w_lm},
                {"w_cls", train.w_cls},
                {"classification_enabled", train.classification_enabled},
                {"pretrain_steps", train.pretrain_steps}};
  j["decode"] = {{"strategy", decode::DecodeConfig::strategy_name(decode.strategy)},
                 {"k", decode.k},
                 {"p", decode.p},
                 {"temperature", decode.temperature},
                 {"max_new_tokens", decode.max_new_tokens}};
  j["metrics"] = {{"kn_order", metrics.kn_order},
                  {"kn_min_count", metrics.kn_min_count},
                  {"ppl_gen_source", metrics.ppl_gen_source},
                  {"ea",
                   {{"hash_bits", metrics.ea.hash_bits},
                    {"epochs", metrics.ea.epochs},
                    {"lr", metrics.ea.lr}}}};
  std::vector<std::string> abl;
  for (corpus::Dataset ds : ablation) abl.push_back(corpus::dataset_name(ds));
  j["ablation"] = abl;
  return j.dump(2) + "\n";
}

void ExperimentConfig::apply_override(const std::string& assignment) {
  size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw InvalidArgError(strformat("override \"%s\" is not of the form key=value",
                                    assignment.c_str()));
  std::string key = assignment.substr(0, eq);
  std::string raw = assignment.substr(eq + 1);

  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;  // bare strings need no quoting

  std::string pointer = "/";
  for (char c : key) pointer.push_back(c == '.' ? '/' : c);
  json j = json::parse(to_json());
  try {
    j[json::json_pointer(pointer)] = value;
  } catch (const json::exception& e) {
    throw InvalidArgError(strformat("override \"%s\": %s", assignment.c_str(), e.what()));
  }
  *this = from_json(j.dump());
}

void ExperimentConfig::validate() const {
  if (out_dir.empty()) throw InvalidArgError("config: out_dir must not be empty");
  if (system.empty()) throw InvalidArgError("config: system label must not be empty");
  if (keywords.size() != 4) throw InvalidArgError("config: all four dataset keywords required");
  std::set<std::string> surfaces;
  for (const auto& [ds, kw] : keywords) {
    if (kw.empty())
      throw InvalidArgError(strformat("config: empty keyword for %s", corpus::dataset_name(ds)));
    if (!surfaces.insert(kw).second)
      throw InvalidArgError(strformat("config: keyword \"%s\" used for two datasets",
                                      kw.c_str()));
  }
  if (vocab.max_size <= tok::kNumSpecials)
    throw InvalidArgError("config: vocab.max_size must exceed the reserved tokens");
  if (vocab.min_count < 1) throw InvalidArgError("config: vocab.min_count must be >= 1");
  train.validate();
  decode.validate();
  metrics.ea.validate();
  if (metrics.kn_order < 1) throw InvalidArgError("config: metrics.kn_order must be >= 1");
  if (metrics.kn_min_count < 1)
    throw InvalidArgError("config: metrics.kn_min_count must be >= 1");
  if (metrics.ppl_gen_source != "omcs_kn" && metrics.ppl_gen_source != "model")
    throw InvalidArgError(strformat(
        "config: metrics.ppl_gen_source must be \"omcs_kn\" or \"model\", got \"%s\"",
        metrics.ppl_gen_source.c_str()));
}

std::string unified_path(const ExperimentConfig& cfg) { return cfg.out_dir + "/unified.jsonl"; }
std::string vocab_path(const ExperimentConfig& cfg) { return cfg.out_dir + "/vocab.json"; }
std::string counts_path(const ExperimentConfig& cfg) { return cfg.out_dir + "/counts.json"; }
std::string pretrained_ckpt_path(const ExperimentConfig& cfg) {
  return cfg.out_dir + "/pretrained.ckpt";
}
std::string model_ckpt_path(const ExperimentConfig& cfg) { return cfg.out_dir + "/model.ckpt"; }
std::string generations_path(const ExperimentConfig& cfg) {
  return cfg.out_dir + "/generations.jsonl";
}
std::string references_path(const ExperimentConfig& cfg) {
  return cfg.out_dir + "/references.jsonl";
}
std::string metrics_json_path(const ExperimentConfig& cfg) {
  return cfg.out_dir + "/metrics.json";
}

namespace {

void say(const train::LogFn& log, const std::string& msg) {
  if (log) log(msg);
}

void ensure_out_dir(const ExperimentConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec)
    throw IoError(strformat("cannot create %s: %s", cfg.out_dir.c_str(),
                            ec.message().c_str()));
}

std::string require_path(const std::string& path, const char* what) {
  if (path.empty())
    throw InvalidArgError(strformat("config: data.%s is required (dataset not excluded)", what));
  return path;
}

// classification-vs-generation pairing and both LM/EA corpora want the same
// view of the comve training rows
struct ComveTrainView {
  std::vector<std::string> texts;  // statements, references, choices
  std::vector<std::pair<std::string, std::string>> ea_accept, ea_reject;
};

ComveTrainView comve_train_view(const std::vector<corpus::UnifiedExample>& train_stream) {
  ComveTrainView view;
  const int offset = corpus::slice_for(corpus::Dataset::comve).offset;
  for (const corpus::UnifiedExample& ex : train_stream) {
    if (ex.dataset != corpus::Dataset::comve) continue;
    view.texts.push_back(ex.source);
    if (!ex.targets.empty()) {
      for (const std::string& t : ex.targets) {
        view.texts.push_back(t);
        view.ea_accept.emplace_back(ex.source, t);
      }
    } else if (!ex.choices.empty()) {
      int gold = ex.gold.value_or(-1) - offset;
      for (int c = 0; c < static_cast<int>(ex.choices.size()); ++c) {
        view.texts.push_back(ex.choices[c]);
        if (c == gold)
          view.ea_accept.emplace_back(ex.source, ex.choices[c]);
        else
          view.ea_reject.emplace_back(ex.source, ex.choices[c]);
      }
    }
  }
  return view;
}

std::vector<std::string> fact_texts(const std::vector<corpus::UnifiedExample>& unified) {
  std::vector<std::string> out;
  for (const corpus::UnifiedExample& ex : unified)
    if (ex.dataset == corpus::Dataset::omcs && !ex.targets.empty())
      out.push_back(ex.targets[0]);
  return out;
}

// perplexity under the network's LM head, facts rendered the same way the
// pretraining stage rendered them
class ModelPplScorer final : public metrics::PplScorer {
 public:
  ModelPplScorer(model::ModelState state, const tok::Vocab& vocab, std::string keyword)
      : state_(std::move(state)), vocab_(vocab), keyword_(std::move(keyword)) {}

  double score(const std::vector<std::string>& texts) const override {
    if (texts.empty()) throw InvalidArgError("model ppl: no texts");
    double nll = 0.0;
    long long events = 0;
    for (const std::string& t : texts) {
      tok::TokenSequence seq = tok::render_generation_sequence(vocab_, keyword_, "", t,
                                                               state_.config.max_seq_len);
      std::vector<double> logits = model::forward_lm(state_, seq.ids);
      long long n = std::count(seq.loss_mask.begin(), seq.loss_mask.end(), true);
      nll += model::lm_loss(logits, seq.ids, seq.loss_mask, state_.config.vocab_size) *
             static_cast<double>(n);
      events += n;
    }
    return std::exp(nll / static_cast<double>(events));
  }

 private:
  model::ModelState state_;
  const tok::Vocab& vocab_;
  std::string keyword_;
};

model::ModelConfig resolved_model_config(const ExperimentConfig& cfg, const tok::Vocab& vocab) {
  model::ModelConfig mc = cfg.model;
  mc.vocab_size = vocab.size();
  mc.n_classes = corpus::kNumClasses;
  mc.seed = cfg.seed;
  mc.validate();
  return mc;
}

}  // namespace

void prepare(const ExperimentConfig& cfg, const train::LogFn& log) {
  cfg.validate();
  if (cfg.ablation.count(corpus::Dataset::comve))
    throw InvalidArgError("prepare: comve is the target task and cannot be excluded");
  ensure_out_dir(cfg);

  std::vector<corpus::ExplanationRecord> comve_c =
      corpus::load_comve_c(require_path(cfg.data.comve_c, "comve_c"), cfg.data.comve_c_columns);
  std::vector<corpus::ChoiceRecord> comve_b =
      corpus::load_comve_b(require_path(cfg.data.comve_b, "comve_b"), cfg.data.comve_b_columns);
  corpus::PairResult pairs = corpus::pair_tasks(comve_c, comve_b);
  say(log, strformat("[prepare] comve: %zu explanation rows, %zu choice rows, %zu paired, "
                     "%zu/%zu unmatched",
                     comve_c.size(), comve_b.size(), pairs.pairs.size(),
                     pairs.unmatched_gen.size(), pairs.unmatched_cls.size()));

  std::vector<corpus::QaRecord> cose, openbook;
  std::vector<corpus::FactStatement> omcs;
  if (!cfg.ablation.count(corpus::Dataset::cose))
    cose = corpus::load_qa_jsonl(corpus::Dataset::cose, require_path(cfg.data.cose, "cose"));
  if (!cfg.ablation.count(corpus::Dataset::openbook))
    openbook = corpus::load_qa_jsonl(corpus::Dataset::openbook,
                                     require_path(cfg.data.openbook, "openbook"));
  if (!cfg.ablation.count(corpus::Dataset::omcs))
    omcs = corpus::load_omcs(require_path(cfg.data.omcs, "omcs"));

  std::vector<corpus::UnifiedExample> unified =
      corpus::unify(comve_c, comve_b, cose, openbook, omcs, cfg.keywords);
  corpus::write_unified(unified_path(cfg), unified);

  std::vector<std::string> vocab_corpus;
  for (const corpus::UnifiedExample& ex : unified) {
    if (!ex.source.empty()) vocab_corpus.push_back(ex.source);
    for (const std::string& t : ex.targets) vocab_corpus.push_back(t);
    for (const std::string& c : ex.choices) vocab_corpus.push_back(c);
  }
  tok::Vocab vocab = tok::build_vocab(vocab_corpus, cfg.vocab.max_size, cfg.vocab.min_count,
                                      cfg.keywords);
  vocab.save(vocab_path(cfg));

  ordered_json counts;
  counts["comve_c_records"] = comve_c.size();
  counts["comve_b_records"] = comve_b.size();
  counts["comve_pairs"] = pairs.pairs.size();
  counts["comve_unmatched_gen"] = pairs.unmatched_gen.size();
  counts["comve_unmatched_cls"] = pairs.unmatched_cls.size();
  counts["generation_pairs"] = comve_c.size() * 3;
  counts["cose_records"] = cose.size();
  counts["openbook_records"] = openbook.size();
  counts["omcs_facts"] = omcs.size();
  counts["unified_examples"] = unified.size();
  counts["vocab_size"] = vocab.size();
  counts["vocab_hash"] = vocab.hash();
  write_text_file(counts_path(cfg), counts.dump(2) + "\n");
  say(log, strformat("[prepare] %zu unified examples, vocab of %d tokens -> %s",
                     unified.size(), vocab.size(), cfg.out_dir.c_str()));
}

SplitResult split_eval(const std::vector<corpus::UnifiedExample>& unified) {
  auto held_out = [](const std::string& source) {
    return fnv1a64(text::normalize_statement(source)) % 10 == 0;
  };
  SplitResult split;
  size_t next_id = 0;
  for (const corpus::UnifiedExample& ex : unified) {
    if (ex.dataset == corpus::Dataset::comve && held_out(ex.source)) {
      if (!ex.targets.empty())
        split.eval_items.push_back(
            {strformat("eval-%zu", next_id++), ex.source, ex.targets});
      continue;  // both row kinds for a held-out statement leave training
    }
    split.train_stream.push_back(ex);
  }
  return split;
}

void pretrain(const ExperimentConfig& cfg, const train::LogFn& log) {
  cfg.validate();
  if (cfg.ablation.count(corpus::Dataset::omcs))
    throw InvalidArgError("pretrain: the fact corpus is excluded by the ablation");
  if (cfg.train.pretrain_steps < 1)
    throw InvalidArgError("pretrain: train.pretrain_steps must be >= 1");

  std::vector<corpus::UnifiedExample> unified = corpus::read_unified(unified_path(cfg));
  tok::Vocab vocab = tok::Vocab::load(vocab_path(cfg));

  model::ModelState state = model::init_model(resolved_model_config(cfg, vocab));
  state.vocab_hash = vocab.hash();

  train::TrainConfig tcfg = cfg.train;
  tcfg.max_steps = cfg.train.pretrain_steps;
  train::pretrain_omcs(state, unified, vocab, tcfg, cfg.seed, log);
  model::save_checkpoint(state, pretrained_ckpt_path(cfg));
  say(log, strformat("[pretrain] saved %s (params %s)", pretrained_ckpt_path(cfg).c_str(),
                     state.param_checksum().c_str()));
}

void train_model(const ExperimentConfig& cfg, const train::LogFn& log) {
  cfg.validate();
  std::vector<corpus::UnifiedExample> unified = corpus::read_unified(unified_path(cfg));
  tok::Vocab vocab = tok::Vocab::load(vocab_path(cfg));
  SplitResult split = split_eval(unified);

  model::ModelState state;
  std::string warm_start = pretrained_ckpt_path(cfg);
  if (!cfg.ablation.count(corpus::Dataset::omcs) && fs::exists(warm_start)) {
    state = model::load_checkpoint(warm_start, vocab.hash());
    say(log, strformat("[train] warm start from %s", warm_start.c_str()));
  } else {
    state = model::init_model(resolved_model_config(cfg, vocab));
    state.vocab_hash = vocab.hash();
    say(log, "[train] no pretrained checkpoint in play; training from scratch");
  }

  train::train_union(state, split.train_stream, vocab, cfg.train, cfg.ablation, cfg.seed, log);
  model::save_checkpoint(state, model_ckpt_path(cfg));
  say(log, strformat("[train] saved %s (params %s)", model_ckpt_path(cfg).c_str(),
                     state.param_checksum().c_str()));
}

void generate_eval(const ExperimentConfig& cfg, const train::LogFn& log) {
  cfg.validate();
  std::vector<corpus::UnifiedExample> unified = corpus::read_unified(unified_path(cfg));
  tok::Vocab vocab = tok::Vocab::load(vocab_path(cfg));
  model::ModelState state = model::load_checkpoint(model_ckpt_path(cfg), vocab.hash());

  SplitResult split = split_eval(unified);
  if (split.eval_items.empty())
    throw StateError("generate: the held-out split is empty; no statements hash to it");

  std::vector<std::string> sources;
  sources.reserve(split.eval_items.size());
  for (const EvalItem& item : split.eval_items) sources.push_back(item.source);

  decode::DecodeConfig dcfg = cfg.decode;
  dcfg.seed = cfg.seed;
  std::vector<std::string> generations = decode::batch_generate(
      state, vocab, cfg.keywords.at(corpus::Dataset::comve), sources, dcfg);

  std::string gen_lines, ref_lines;
  for (size_t i = 0; i < split.eval_items.size(); ++i) {
    const EvalItem& item = split.eval_items[i];
    ordered_json g;
    g["id"] = item.id;
    g["source"] = item.source;
    g["generation"] = generations[i];
    gen_lines += g.dump() + "\n";
    ordered_json r;
    r["id"] = item.id;
    r["source"] = item.source;
    r["references"] = item.references;
    ref_lines += r.dump() + "\n";
  }
  write_text_file(generations_path(cfg), gen_lines);
  write_text_file(references_path(cfg), ref_lines);
  say(log, strformat("[generate] decoded %zu held-out statements -> %s",
                     split.eval_items.size(), generations_path(cfg).c_str()));
}

metrics::MetricsRow evaluate(const ExperimentConfig& cfg, const train::LogFn& log) {
  cfg.validate();
  std::vector<corpus::UnifiedExample> unified = corpus::read_unified(unified_path(cfg));
  SplitResult split = split_eval(unified);

  std::vector<std::string> generations, sources;
  std::vector<std::vector<std::string>> reference_sets;
  {
    std::string gen_blob = read_text_file(generations_path(cfg));
    std::string ref_blob = read_text_file(references_path(cfg));
    std::vector<std::string> gen_ids, ref_ids;
    auto each_line = [](const std::string& blob, auto&& fn) {
      size_t start = 0;
      size_t line_no = 0;
      while (start < blob.size()) {
        size_t end = blob.find('\n', start);
        if (end == std::string::npos) end = blob.size();
        if (end > start) fn(blob.substr(start, end - start), ++line_no);
        start = end + 1;
      }
    };
    each_line(gen_blob, [&](const std::string& line, size_t n) {
      json j = json::parse(line, nullptr, false);
      if (j.is_discarded())
        throw ParseError(strformat("generations line %zu: invalid JSON", n));
      gen_ids.push_back(j.at("id").get<std::string>());
      sources.push_back(j.at("source").get<std::string>());
      generations.push_back(j.at("generation").get<std::string>());
    });
    each_line(ref_blob, [&](const std::string& line, size_t n) {
      json j = json::parse(line, nullptr, false);
      if (j.is_discarded())
        throw ParseError(strformat("references line %zu: invalid JSON", n));
      ref_ids.push_back(j.at("id").get<std::string>());
      reference_sets.push_back(j.at("references").get<std::vector<std::string>>());
    });
    if (gen_ids != ref_ids)
      throw StateError("evaluate: generations and references disagree on ids");
  }
  if (generations.empty()) throw StateError("evaluate: no generations to score");

  ComveTrainView view = comve_train_view(split.train_stream);
  if (view.texts.empty()) throw StateError("evaluate: no comve training text for the target LM");
  metrics::NGramScorer trg_scorer(
      metrics::NGramLM::fit(view.texts, cfg.metrics.kn_order, cfg.metrics.kn_min_count));
  for (const std::string& w : trg_scorer.lm().warnings())
    say(log, "[evaluate] target lm: " + w);

  tok::Vocab vocab = tok::Vocab::load(vocab_path(cfg));
  std::unique_ptr<metrics::PplScorer> gen_scorer;
  if (cfg.metrics.ppl_gen_source == "model") {
    gen_scorer = std::make_unique<ModelPplScorer>(
        model::load_checkpoint(pretrained_ckpt_path(cfg), vocab.hash()), vocab,
        cfg.keywords.at(corpus::Dataset::omcs));
  } else {
    std::vector<std::string> facts = fact_texts(unified);
    if (facts.empty())
      throw StateError(
          "evaluate: no fact corpus in the prepared data; prepare with omcs or set "
          "metrics.ppl_gen_source=model");
    gen_scorer = std::make_unique<metrics::NGramScorer>(
        metrics::NGramLM::fit(facts, cfg.metrics.kn_order, cfg.metrics.kn_min_count));
  }

  metrics::EaConfig ea_cfg = cfg.metrics.ea;
  ea_cfg.seed = cfg.seed;
  metrics::EaClassifier ea = metrics::EaClassifier::fit(view.ea_accept, view.ea_reject, ea_cfg);

  metrics::MetricsRow row = metrics::evaluate_all(cfg.system, generations, sources,
                                                  reference_sets, *gen_scorer, trg_scorer, ea);
  write_text_file(metrics_json_path(cfg), row.to_json());
  metrics::MetricsReport single{{row}};
  write_text_file(cfg.out_dir + "/metrics.csv", single.to_csv());
  write_text_file(cfg.out_dir + "/metrics.txt", single.to_table());
  say(log, strformat("[evaluate] %s: bleu=%.4f ppl_gen=%.2f ppl_trg=%.2f ea=%.4f",
                     row.system.c_str(), row.bleu, row.ppl_gen, row.ppl_trg, row.ea));
  return row;
}

void run(const ExperimentConfig& cfg, const train::LogFn& log) {
  cfg.validate();
  ensure_out_dir(cfg);
  write_text_file(cfg.out_dir + "/config.json", cfg.to_json());
  prepare(cfg, log);
  if (!cfg.ablation.count(corpus::Dataset::omcs) && cfg.train.pretrain_steps > 0)
    pretrain(cfg, log);
  else
    say(log, "[run] skipping pretraining");
  train_model(cfg, log);
  generate_eval(cfg, log);
  evaluate(cfg, log);
}

const std::vector<AblationCondition>& ablation_conditions() {
  using corpus::Dataset;
  static const std::vector<AblationCondition> conditions = {
      {"baseline", "Baseline", {Dataset::cose, Dataset::openbook, Dataset::omcs}, false},
      {"baseline_mtl", "Baseline + MTL", {Dataset::cose, Dataset::openbook, Dataset::omcs},
       true},
      {"union_wo_cose", "UNION w/o CoSE", {Dataset::cose}, true},
      {"union_wo_openbook", "UNION w/o OpenBook", {Dataset::openbook}, true},
      {"union_wo_omcs", "UNION w/o OMCS", {Dataset::omcs}, true},
      {"union", "UNION", {}, true},
  };
  return conditions;
}

metrics::MetricsReport ablate(const ExperimentConfig& cfg, const train::LogFn& log) {
  cfg.validate();
  ensure_out_dir(cfg);
  write_text_file(cfg.out_dir + "/config.json", cfg.to_json());

  // one shared prepared dataset: every condition sees the same rows, vocab
  // and held-out split; ablation only filters what training consumes
  ExperimentConfig shared = cfg;
  shared.ablation.clear();
  prepare(shared, log);

  metrics::MetricsReport combined;
  for (const AblationCondition& cond : ablation_conditions()) {
    ExperimentConfig sub = cfg;
    sub.out_dir = cfg.out_dir + "/" + cond.slug;
    sub.system = cond.label;
    sub.ablation = cond.ablation;
    sub.train.classification_enabled = cond.classification_enabled;
    say(log, strformat("[ablate] condition %s", cond.label.c_str()));

    metrics::MetricsRow row;
    row.system = cond.label;
    try {
      ensure_out_dir(sub);
      fs::copy_file(unified_path(shared), unified_path(sub),
                    fs::copy_options::overwrite_existing);
      fs::copy_file(vocab_path(shared), vocab_path(sub), fs::copy_options::overwrite_existing);
      write_text_file(sub.out_dir + "/config.json", sub.to_json());
      if (!sub.ablation.count(corpus::Dataset::omcs) && sub.train.pretrain_steps > 0)
        pretrain(sub, log);
      train_model(sub, log);
      generate_eval(sub, log);
      row = evaluate(sub, log);
    } catch (const std::exception& e) {
      row.error = e.what();
      say(log, strformat("[ablate] condition %s failed: %s", cond.label.c_str(), e.what()));
    }
    combined.rows.push_back(std::move(row));
  }

  write_text_file(cfg.out_dir + "/report.csv", combined.to_csv());
  write_text_file(cfg.out_dir + "/report.txt", combined.to_table());
  say(log, strformat("[ablate] report -> %s/report.txt", cfg.out_dir.c_str()));
  return combined;
}

metrics::MetricsReport report(const ExperimentConfig& cfg) {
  cfg.validate();
  metrics::MetricsReport combined;
  for (const AblationCondition& cond : ablation_conditions()) {
    std::string path = cfg.out_dir + "/" + cond.slug + "/metrics.json";
    metrics::MetricsRow row;
    row.system = cond.label;
    if (fs::exists(path)) {
      row = metrics::MetricsRow::from_json(read_text_file(path));
      row.system = cond.label;
    } else {
      row.error = strformat("missing %s", path.c_str());
    }
    combined.rows.push_back(std::move(row));
  }
  write_text_file(cfg.out_dir + "/report.csv", combined.to_csv());
  write_text_file(cfg.out_dir + "/report.txt", combined.to_table());
  return combined;
}

}  // namespace unionlm::exp

#include "unionlm/unionlm.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "decode.hpp"
#include "experiment.hpp"
#include "model.hpp"
#include "vocab.hpp"

struct ulm_experiment {
  unionlm::exp::ExperimentConfig config;
  ulm_log_fn log_fn = nullptr;
  void* log_user = nullptr;

  unionlm::train::LogFn logger() const {
    if (!log_fn) return {};
    ulm_log_fn fn = log_fn;
    void* user = log_user;
    return [fn, user](const std::string& line) { fn(line.c_str(), user); };
  }
};

struct ulm_model {
  unionlm::model::ModelState state;
  unionlm::tok::Vocab vocab;
};

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <class Fn>
ulm_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return ULM_OK;
  } catch (const unionlm::IoError& e) {
    g_last_error = e.what();
    return ULM_ERR_IO;
  } catch (const unionlm::ParseError& e) {
    g_last_error = e.what();
    return ULM_ERR_PARSE;
  } catch (const unionlm::InvalidArgError& e) {
    g_last_error = e.what();
    return ULM_ERR_INVALID_ARG;
  } catch (const unionlm::StateError& e) {
    g_last_error = e.what();
    return ULM_ERR_STATE;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ULM_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return ULM_ERR_INTERNAL;
  }
}

ulm_status require(bool ok, const char* message) {
  if (ok) return ULM_OK;
  g_last_error = message;
  return ULM_ERR_INVALID_ARG;
}

// the "exclude" pseudo-key appends instead of replacing the ablation list
void apply_one_override(unionlm::exp::ExperimentConfig& cfg, const std::string& assignment) {
  if (assignment.rfind("exclude=", 0) == 0) {
    cfg.ablation.insert(unionlm::corpus::dataset_from_name(assignment.substr(8)));
    cfg.validate();
    return;
  }
  cfg.apply_override(assignment);
}

unionlm::decode::DecodeConfig decode_config_from_json(const char* decode_json) {
  unionlm::decode::DecodeConfig cfg;
  if (!decode_json || !*decode_json) return cfg;
  nlohmann::json j = nlohmann::json::parse(decode_json, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw unionlm::ParseError("decode settings must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    if (key == "strategy")
      cfg.strategy = unionlm::decode::DecodeConfig::strategy_from_name(it->get<std::string>());
    else if (key == "k")
      cfg.k = it->get<int>();
    else if (key == "p")
      cfg.p = it->get<double>();
    else if (key == "temperature")
      cfg.temperature = it->get<double>();
    else if (key == "max_new_tokens")
      cfg.max_new_tokens = it->get<int>();
    else if (key == "seed")
      cfg.seed = it->get<uint64_t>();
    else
      throw unionlm::ParseError("unknown decode setting \"" + key + "\"");
  }
  cfg.validate();
  return cfg;
}

}  // namespace

extern "C" {

const char* ulm_version(void) { return "1.0.0"; }

const char* ulm_last_error(void) { return g_last_error.c_str(); }

void ulm_string_free(char* s) { std::free(s); }

ulm_status ulm_experiment_open(const char* config_path, const char* const* overrides,
                               size_t n_overrides, ulm_experiment** out) {
  if (ulm_status s = require(out != nullptr, "out handle is null"); s != ULM_OK) return s;
  if (ulm_status s = require(n_overrides == 0 || overrides != nullptr,
                             "overrides array is null");
      s != ULM_OK)
    return s;
  *out = nullptr;
  return guarded([&] {
    auto handle = std::make_unique<ulm_experiment>();
    if (config_path && *config_path)
      handle->config = unionlm::exp::ExperimentConfig::from_file(config_path);
    for (size_t i = 0; i < n_overrides; ++i) {
      if (!overrides[i]) throw unionlm::InvalidArgError("override string is null");
      apply_one_override(handle->config, overrides[i]);
    }
    handle->config.validate();
    *out = handle.release();
  });
}

void ulm_experiment_close(ulm_experiment* experiment) { delete experiment; }

ulm_status ulm_experiment_config_json(ulm_experiment* experiment, char** out_json) {
  if (ulm_status s = require(experiment && out_json, "null argument"); s != ULM_OK) return s;
  return guarded([&] { *out_json = dup_string(experiment->config.to_json()); });
}

void ulm_experiment_set_logger(ulm_experiment* experiment, ulm_log_fn fn, void* user_data) {
  if (!experiment) return;
  experiment->log_fn = fn;
  experiment->log_user = user_data;
}

ulm_status ulm_prepare(ulm_experiment* experiment) {
  if (ulm_status s = require(experiment != nullptr, "null experiment"); s != ULM_OK) return s;
  return guarded([&] { unionlm::exp::prepare(experiment->config, experiment->logger()); });
}

ulm_status ulm_pretrain(ulm_experiment* experiment) {
  if (ulm_status s = require(experiment != nullptr, "null experiment"); s != ULM_OK) return s;
  return guarded([&] { unionlm::exp::pretrain(experiment->config, experiment->logger()); });
}

ulm_status ulm_train(ulm_experiment* experiment) {
  if (ulm_status s = require(experiment != nullptr, "null experiment"); s != ULM_OK) return s;
  return guarded([&] { unionlm::exp::train_model(experiment->config, experiment->logger()); });
}

ulm_status ulm_generate(ulm_experiment* experiment) {
  if (ulm_status s = require(experiment != nullptr, "null experiment"); s != ULM_OK) return s;
  return guarded([&] { unionlm::exp::generate_eval(experiment->config, experiment->logger()); });
}

ulm_status ulm_evaluate(ulm_experiment* experiment) {
  if (ulm_status s = require(experiment != nullptr, "null experiment"); s != ULM_OK) return s;
  return guarded([&] { unionlm::exp::evaluate(experiment->config, experiment->logger()); });
}

ulm_status ulm_run(ulm_experiment* experiment) {
  if (ulm_status s = require(experiment != nullptr, "null experiment"); s != ULM_OK) return s;
  return guarded([&] { unionlm::exp::run(experiment->config, experiment->logger()); });
}

ulm_status ulm_ablate(ulm_experiment* experiment) {
  if (ulm_status s = require(experiment != nullptr, "null experiment"); s != ULM_OK) return s;
  return guarded([&] { unionlm::exp::ablate(experiment->config, experiment->logger()); });
}

ulm_status ulm_report(ulm_experiment* experiment, char** out_table) {
  if (ulm_status s = require(experiment && out_table, "null argument"); s != ULM_OK) return s;
  return guarded([&] {
    unionlm::metrics::MetricsReport rep = unionlm::exp::report(experiment->config);
    *out_table = dup_string(rep.to_table());
  });
}

ulm_status ulm_model_open(const char* checkpoint_path, const char* vocab_path, ulm_model** out) {
  if (ulm_status s = require(checkpoint_path && vocab_path && out, "null argument"); s != ULM_OK)
    return s;
  *out = nullptr;
  return guarded([&] {
    unionlm::tok::Vocab vocab = unionlm::tok::Vocab::load(vocab_path);
    unionlm::model::ModelState state =
        unionlm::model::load_checkpoint(checkpoint_path, vocab.hash());
    *out = new ulm_model{std::move(state), std::move(vocab)};
  });
}

void ulm_model_close(ulm_model* model) { delete model; }

ulm_status ulm_model_generate(ulm_model* model, const char* keyword, const char* source,
                              const char* decode_json, char** out_text) {
  if (ulm_status s = require(model && keyword && source && out_text, "null argument");
      s != ULM_OK)
    return s;
  return guarded([&] {
    unionlm::decode::DecodeConfig cfg = decode_config_from_json(decode_json);
    *out_text = dup_string(unionlm::decode::generate(model->state, model->vocab, keyword,
                                                     source, cfg));
  });
}

ulm_status ulm_model_classify(ulm_model* model, const char* keyword, const char* source,
                              const char* const* choices, size_t n_choices, double* out_probs) {
  if (ulm_status s = require(model && keyword && source && choices && out_probs,
                             "null argument");
      s != ULM_OK)
    return s;
  return guarded([&] {
    std::vector<std::string> choice_vec;
    choice_vec.reserve(n_choices);
    for (size_t i = 0; i < n_choices; ++i) {
      if (!choices[i]) throw unionlm::InvalidArgError("choice string is null");
      choice_vec.emplace_back(choices[i]);
    }
    unionlm::tok::TokenSequence seq = unionlm::tok::render_classification_sequence(
        model->vocab, keyword, source, choice_vec, model->state.config.max_seq_len);
    std::vector<double> probs = unionlm::model::classification_distribution(
        model->state, seq.ids, model->vocab.keyword_id(keyword));
    std::memcpy(out_probs, probs.data(), probs.size() * sizeof(double));
  });
}

}  // extern "C"

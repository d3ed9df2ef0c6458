#ifndef UNIONLM_H
#define UNIONLM_H

/* C interface to the multi-task commonsense-explanation trainer. All entry
 * points return ulm_status; on failure ulm_last_error() describes what went
 * wrong. Handles are opaque and single-threaded; strings returned through
 * out-parameters are heap-allocated and released with ulm_string_free. */

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ulm_status {
  ULM_OK = 0,
  ULM_ERR_IO = 1,
  ULM_ERR_PARSE = 2,
  ULM_ERR_INVALID_ARG = 3,
  ULM_ERR_STATE = 4,
  ULM_ERR_INTERNAL = 5
} ulm_status;

const char* ulm_version(void);

/* Message of the most recent failure on this thread; "" after a success. */
const char* ulm_last_error(void);

void ulm_string_free(char* s);

/* ------------------------------------------------------------------ */
/* Experiment pipeline                                                */

typedef struct ulm_experiment ulm_experiment;

/* config_path may be NULL for all-default settings. overrides are
 * "key=value" assignments applied in order, dotted keys addressing nested
 * settings ("train.lr=0.01", "decode.strategy=nucleus"); the key "exclude"
 * appends one dataset to the ablation list. */
ulm_status ulm_experiment_open(const char* config_path, const char* const* overrides,
                               size_t n_overrides, ulm_experiment** out);
void ulm_experiment_close(ulm_experiment* experiment);

/* Resolved configuration as a JSON document. */
ulm_status ulm_experiment_config_json(ulm_experiment* experiment, char** out_json);

/* Progress lines ("[train] step 100/1000 ...") go to fn; NULL silences. */
typedef void (*ulm_log_fn)(const char* line, void* user_data);
void ulm_experiment_set_logger(ulm_experiment* experiment, ulm_log_fn fn, void* user_data);

ulm_status ulm_prepare(ulm_experiment* experiment);
ulm_status ulm_pretrain(ulm_experiment* experiment);
ulm_status ulm_train(ulm_experiment* experiment);
ulm_status ulm_generate(ulm_experiment* experiment);
ulm_status ulm_evaluate(ulm_experiment* experiment);

/* prepare -> pretrain -> train -> generate -> evaluate; stops at the first
 * failing stage, leaving earlier artifacts in place. */
ulm_status ulm_run(ulm_experiment* experiment);

/* Runs the six ablation conditions off one shared prepared dataset. */
ulm_status ulm_ablate(ulm_experiment* experiment);

/* Re-renders the combined report from per-condition metrics files and
 * returns the text table. */
ulm_status ulm_report(ulm_experiment* experiment, char** out_table);

/* ------------------------------------------------------------------ */
/* Direct model access                                                */

typedef struct ulm_model ulm_model;

ulm_status ulm_model_open(const char* checkpoint_path, const char* vocab_path, ulm_model** out);
void ulm_model_close(ulm_model* model);

/* decode_json is a JSON object with any of strategy, k, p, temperature,
 * max_new_tokens, seed; NULL decodes greedily with the defaults. */
ulm_status ulm_model_generate(ulm_model* model, const char* keyword, const char* source,
                              const char* decode_json, char** out_text);

/* 12-way class distribution for a source/choices classification input;
 * out_probs must hold 12 doubles. n_choices must lie in [3, 5]. */
ulm_status ulm_model_classify(ulm_model* model, const char* keyword, const char* source,
                              const char* const* choices, size_t n_choices, double* out_probs);

#ifdef __cplusplus
}
#endif

#endif /* UNIONLM_H */

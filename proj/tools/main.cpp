// Command-line front end; talks to the library exclusively through the C API.
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include <unionlm/unionlm.h>

namespace {

void log_to_stderr(const char* line, void*) { std::fprintf(stderr, "%s\n", line); }

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::string seed;
  std::vector<std::string> excludes;
  std::vector<std::string> sets;
  bool quiet = false;

  std::vector<std::string> overrides() const {
    std::vector<std::string> out = sets;
    if (!seed.empty()) out.push_back("seed=" + seed);
    if (!out_dir.empty()) out.push_back("out_dir=" + out_dir);
    for (const std::string& name : excludes) out.push_back("exclude=" + name);
    return out;
  }
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "experiment configuration JSON file");
  cmd->add_option("--out", flags.out_dir, "output directory (overrides the config)");
  cmd->add_option("--seed", flags.seed, "experiment seed (overrides the config)");
  cmd->add_option("--exclude", flags.excludes,
                  "exclude a dataset from training (cose, openbook, omcs); repeatable");
  cmd->add_option("--set", flags.sets,
                  "override one setting, e.g. --set train.lr=0.01; repeatable");
  cmd->add_flag("--quiet", flags.quiet, "suppress progress output");
}

int fail(ulm_status status) {
  std::fprintf(stderr, "error: %s\n", ulm_last_error());
  return static_cast<int>(status);
}

int run_stage(const CommonFlags& flags, ulm_status (*stage)(ulm_experiment*),
              bool print_report) {
  std::vector<std::string> overrides = flags.overrides();
  std::vector<const char*> override_ptrs;
  override_ptrs.reserve(overrides.size());
  for (const std::string& s : overrides) override_ptrs.push_back(s.c_str());

  ulm_experiment* experiment = nullptr;
  ulm_status status = ulm_experiment_open(
      flags.config_path.empty() ? nullptr : flags.config_path.c_str(),
      override_ptrs.empty() ? nullptr : override_ptrs.data(), override_ptrs.size(),
      &experiment);
  if (status != ULM_OK) return fail(status);
  if (!flags.quiet) ulm_experiment_set_logger(experiment, log_to_stderr, nullptr);

  if (print_report) {
    char* table = nullptr;
    status = ulm_report(experiment, &table);
    if (status == ULM_OK) {
      std::fputs(table, stdout);
      ulm_string_free(table);
    }
  } else {
    status = stage(experiment);
  }
  ulm_experiment_close(experiment);
  return status == ULM_OK ? 0 : fail(status);
}

int run_sample(const std::string& checkpoint, const std::string& vocab,
               const std::string& keyword, const std::string& source,
               const std::string& decode_json) {
  ulm_model* model = nullptr;
  ulm_status status = ulm_model_open(checkpoint.c_str(), vocab.c_str(), &model);
  if (status != ULM_OK) return fail(status);
  char* text = nullptr;
  status = ulm_model_generate(model, keyword.c_str(), source.c_str(),
                              decode_json.empty() ? nullptr : decode_json.c_str(), &text);
  if (status == ULM_OK) {
    std::printf("%s\n", text);
    ulm_string_free(text);
  }
  ulm_model_close(model);
  return status == ULM_OK ? 0 : fail(status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-task commonsense explanation pipeline"};
  app.require_subcommand(1);

  struct Stage {
    const char* name;
    const char* help;
    ulm_status (*fn)(ulm_experiment*);
  };
  const Stage stages[] = {
      {"prepare", "ingest the datasets into the unified stream and vocabulary", ulm_prepare},
      {"pretrain", "language-model pretraining on the fact corpus", ulm_pretrain},
      {"train", "multi-task training on the unified stream", ulm_train},
      {"generate", "decode explanations for the held-out statements", ulm_generate},
      {"evaluate", "score the generations and write the metrics files", ulm_evaluate},
      {"run", "all stages in order", ulm_run},
      {"ablate", "run the six ablation conditions and the combined report", ulm_ablate},
  };

  CommonFlags stage_flags[8];
  const Stage* chosen = nullptr;
  CommonFlags* chosen_flags = nullptr;
  bool want_report = false;

  int idx = 0;
  for (const Stage& stage : stages) {
    CLI::App* cmd = app.add_subcommand(stage.name, stage.help);
    CommonFlags& flags = stage_flags[idx++];
    add_common_flags(cmd, flags);
    cmd->callback([&chosen, &chosen_flags, &stage, &flags] {
      chosen = &stage;
      chosen_flags = &flags;
    });
  }

  CLI::App* report_cmd =
      app.add_subcommand("report", "re-render the combined ablation report");
  CommonFlags& report_flags = stage_flags[idx];
  add_common_flags(report_cmd, report_flags);
  report_cmd->callback([&chosen_flags, &report_flags, &want_report] {
    chosen_flags = &report_flags;
    want_report = true;
  });

  std::string checkpoint, vocab_file, keyword = "<comve>", source, decode_json;
  CLI::App* sample_cmd = app.add_subcommand("sample", "decode one source with a checkpoint");
  sample_cmd->add_option("--checkpoint", checkpoint, "model checkpoint file")->required();
  sample_cmd->add_option("--vocab", vocab_file, "vocabulary JSON file")->required();
  sample_cmd->add_option("--keyword", keyword, "dataset keyword token (default <comve>)");
  sample_cmd->add_option("--source", source, "source text to condition on")->required();
  sample_cmd->add_option("--decode", decode_json,
                         "decode settings JSON, e.g. {\"strategy\":\"nucleus\",\"p\":0.9}");
  bool want_sample = false;
  sample_cmd->callback([&want_sample] { want_sample = true; });

  CLI11_PARSE(app, argc, argv);

  if (want_sample) return run_sample(checkpoint, vocab_file, keyword, source, decode_json);
  if (want_report) return run_stage(*chosen_flags, nullptr, true);
  return run_stage(*chosen_flags, chosen->fn, false);
}

// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "fairgen/pipeline.hpp"

namespace {

int env_thread_cap() {
  const char* env = std::getenv("FAIRGEN_THREADS");
  if (!env || !*env) return 0;
  try {
    std::size_t used = 0;
    const int v = std::stoi(env, &used);
    if (used != std::string(env).size() || v < 1)
      throw std::invalid_argument(env);
    return v;
  } catch (const std::exception&) {
    throw fairgen::ConfigError(std::string("FAIRGEN_THREADS must be a "
                                           "positive integer, got '") +
                               env + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fairgen: fairness-aware explanation generation pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_override;
  std::uint64_t seed_override = 0;
  const std::pair<const char*, const char*> commands[] = {
      {"corpus", "synthesize a biased review corpus and write dataset files"},
      {"pretrain", "train the selected baseline, write checkpoint + loss log"},
      {"finetune", "counterfactual-fairness fine-tuning of a checkpoint"},
      {"eval", "fairness + generation report for a checkpoint"},
      {"sweep", "fine-tune per lambda and emit the trade-off table"},
  };
  for (const auto& [name, desc] : commands) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", config_path, "run configuration file")
        ->required();
    sub->add_option("--seed", seed_override, "override the config seed");
    sub->add_option("--out", out_override, "override the output directory");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const CLI::App* sub = app.get_subcommands().front();
  try {
    fairgen::RunConfig cfg = fairgen::parse_run_config(config_path);
    if (sub->count("--seed")) cfg.seed = seed_override;
    if (sub->count("--out")) cfg.out_dir = out_override;
    if (const int cap = env_thread_cap())
      cfg.threads = std::max(1, std::min(cfg.threads, cap));

    const std::string cmd = sub->get_name();
    if (cmd == "corpus") fairgen::run_corpus(cfg, std::cout);
    else if (cmd == "pretrain") fairgen::run_pretrain(cfg, std::cout);
    else if (cmd == "finetune") fairgen::run_finetune(cfg, std::cout);
    else if (cmd == "eval") fairgen::run_eval(cfg, std::cout);
    else if (cmd == "sweep") fairgen::run_sweep(cfg, std::cout);
    return 0;
  } catch (const fairgen::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const fairgen::ArtifactError& e) {
    std::cerr << "artifact error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

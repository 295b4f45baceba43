// SPDX-License-Identifier: Apache-2.0
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "fairgen/io.hpp"

using namespace fairgen;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd =
      std::string(FAIRGEN_BIN) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

fs::path make_workspace(const std::string& tag) {
  const fs::path root = fs::temp_directory_path() / ("fairgen_cli_" + tag);
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string text =
      "data_dir = " + (root / "data").string() + "\n"
      "out_dir = " + (root / "out").string() + "\n"
      "arch = recurrent\n"
      "baseline = attr\n"
      "groups = m:0.5:8:1.5,f:0.5:5:1\n"
      "n_users = 8\n"
      "n_items = 6\n"
      "n_records = 48\n"
      "vocab_size = 200\n"
      "max_len = 16\n"
      "rnn_emb_dim = 8\n"
      "rnn_hidden_dim = 8\n"
      "attr_emb_dim = 4\n"
      "rating_hidden_dim = 4\n"
      "max_epochs = 1\n"
      "patience = 1\n"
      "batch_size = 8\n"
      "ft_epochs = 1\n"
      "n_samples = 1\n"
      "top_k = 3\n"
      "seed = 5\n";
  atomic_write(root / "run.cfg", text);
  return root;
}

}  // namespace

TEST_CASE("command line drives the full corpus/pretrain/eval path") {
  const fs::path root = make_workspace("happy");
  const std::string cfg = (root / "run.cfg").string();

  CHECK(run_cli("corpus --config " + cfg) == 0);
  CHECK(fs::exists(root / "data" / "dataset.jsonl"));
  CHECK(fs::exists(root / "data" / "lexicon.txt"));

  CHECK(run_cli("pretrain --config " + cfg) == 0);
  CHECK(fs::exists(root / "out" / "pretrain.ckpt"));

  CHECK(run_cli("eval --config " + cfg) == 0);
  CHECK(fs::exists(root / "out" / "report.csv"));
  CHECK(fs::exists(root / "out" / "report.json"));

  // --out redirects the artifact workspace
  const fs::path alt = root / "alt";
  CHECK(run_cli("pretrain --config " + cfg + " --out " + alt.string()) == 0);
  CHECK(fs::exists(alt / "pretrain.ckpt"));

  fs::remove_all(root);
}

TEST_CASE("command line reports the documented exit codes") {
  const fs::path root = make_workspace("codes");
  const std::string cfg = (root / "run.cfg").string();

  CHECK(run_cli("") == 2);                      // missing subcommand
  CHECK(run_cli("launch --config " + cfg) == 2);  // unknown subcommand
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("eval --help") == 0);
  CHECK(run_cli("eval") == 2);  // --config is required

  // config file that does not exist: missing artifact
  CHECK(run_cli("eval --config " + (root / "nope.cfg").string()) == 4);

  // config file with an unknown key: config error
  atomic_write(root / "bad.cfg", "no_such_key = 1\n");
  CHECK(run_cli("eval --config " + (root / "bad.cfg").string()) == 2);

  // missing checkpoint behind a valid config: missing artifact
  CHECK(run_cli("corpus --config " + cfg) == 0);
  CHECK(run_cli("eval --config " + cfg) == 4);

  CHECK(run_cli("corpus --config " + cfg + " stray") == 2);  // extra arg

  // malformed thread cap in the environment: config error
  const std::string env_cmd = std::string("FAIRGEN_THREADS=abc ") +
                              FAIRGEN_BIN + " corpus --config " + cfg +
                              " > /dev/null 2>&1";
  const int status = std::system(env_cmd.c_str());
  REQUIRE(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 2);

  fs::remove_all(root);
}

TEST_CASE("seed override changes synthesized data deterministically") {
  const fs::path root = make_workspace("seed");
  const std::string cfg = (root / "run.cfg").string();

  CHECK(run_cli("corpus --config " + cfg) == 0);
  const std::string base = read_file(root / "data" / "dataset.jsonl");

  CHECK(run_cli("corpus --config " + cfg + " --seed 99") == 0);
  const std::string reseeded = read_file(root / "data" / "dataset.jsonl");
  CHECK(reseeded != base);

  CHECK(run_cli("corpus --config " + cfg + " --seed 99") == 0);
  CHECK(read_file(root / "data" / "dataset.jsonl") == reseeded);

  CHECK(run_cli("corpus --config " + cfg) == 0);
  CHECK(read_file(root / "data" / "dataset.jsonl") == base);

  fs::remove_all(root);
}

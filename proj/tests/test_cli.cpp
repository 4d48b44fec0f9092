#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gestalt/commands.hpp"
#include "gestalt/config.hpp"
#include "gestalt/errors.hpp"
#include "gestalt/io_util.hpp"

using namespace gestalt;
using namespace gestalt::cli;
namespace fs = std::filesystem;

namespace {

const fs::path kData = fs::path(GESTALT_DATA_DIR);

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// A config that keeps every stage tiny.
std::string small_config(const fs::path& out_dir) {
  std::ostringstream cfg;
  cfg << "[paths]\n"
      << "lexicon = " << (kData / "lexicon.tsv").string() << "\n"
      << "events = " << (kData / "events.cfg").string() << "\n"
      << "items = " << (kData / "test_items.tsv").string() << "\n"
      << "out_dir = " << out_dir.string() << "\n"
      << "[corpus]\n"
      << "n = 80\n"
      << "[train]\n"
      << "max_epochs = 2\n"
      << "patience = 2\n"
      << "batch_size = 16\n"
      << "gestalt_width = 12\n"
      << "hidden_width = 10\n"
      << "[sampler]\n"
      << "ensemble_size = 8\n"
      << "max_steps = 4\n"
      << "design_size = 64\n"
      << "[experiment]\n"
      << "runs = 2\n"
      << "[run]\n"
      << "master_seed = 11\n"
      << "jobs = 1\n";
  return cfg.str();
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const fs::path path = dir / "run.cfg";
  std::ofstream out(path);
  out << text;
  return path;
}

int invoke(const std::vector<std::string>& args, std::string* text = nullptr) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (text != nullptr) *text = out.str() + err.str();
  return code;
}

}  // namespace

TEST_CASE("config files parse into typed fields") {
  const fs::path dir = temp_dir("gestalt_cli_cfg");
  const fs::path path = write_config(dir, small_config(dir));
  const RunConfig cfg = load_run_config(path);
  CHECK(cfg.corpus_n == 80);
  CHECK(cfg.train.max_epochs == 2);
  CHECK(cfg.train.gestalt_width == 12);
  CHECK(cfg.sampler.ensemble_size == 8);
  CHECK(cfg.design_size == 64);
  CHECK(cfg.runs == 2);
  CHECK(cfg.master_seed == 11);
  CHECK(cfg.resolved_corpus() == dir / "corpus.txt");
}

TEST_CASE("unknown keys and malformed values are config errors") {
  const fs::path dir = temp_dir("gestalt_cli_badcfg");
  CHECK_THROWS_AS(
      load_run_config(write_config(dir, "[corpus]\nbogus_key = 1\n")),
      ConfigError);
  CHECK_THROWS_AS(
      load_run_config(write_config(dir, "[corpus]\nn = twelve\n")),
      ConfigError);
  CHECK_THROWS_AS(load_run_config(write_config(dir, "n = 1\n")), ConfigError);
  CHECK_THROWS_AS(load_run_config(dir / "missing.cfg"), ConfigError);
}

TEST_CASE("config hash tracks content") {
  RunConfig a;
  RunConfig b;
  CHECK(a.hash() == b.hash());
  b.corpus_n += 1;
  CHECK(a.hash() != b.hash());
}

TEST_CASE("gen-corpus writes the requested corpus deterministically") {
  const fs::path dir = temp_dir("gestalt_cli_gen");
  const fs::path cfg = write_config(dir, small_config(dir));
  std::string text;
  CHECK(invoke({"gen-corpus", "--config", cfg.string(), "--n", "1"}, &text) == 0);
  CHECK(text.find("wrote 1 sentences") != std::string::npos);
  CHECK(fs::exists(dir / "corpus.txt"));
  CHECK(fs::exists(dir / "corpus.txt.manifest.json"));
  const std::string first = read_text_file(dir / "corpus.txt");

  CHECK(invoke({"gen-corpus", "--config", cfg.string(), "--n", "1"}) == 0);
  CHECK(read_text_file(dir / "corpus.txt") == first);
}

TEST_CASE("missing inputs exit 2 without partial artifacts") {
  const fs::path dir = temp_dir("gestalt_cli_missing");
  std::string cfg_text = small_config(dir);
  const std::string from = (kData / "lexicon.tsv").string();
  cfg_text.replace(cfg_text.find(from), from.size(),
                   (dir / "nope.tsv").string());
  const fs::path cfg = write_config(dir, cfg_text);
  std::string text;
  CHECK(invoke({"gen-corpus", "--config", cfg.string()}, &text) == 2);
  CHECK_FALSE(fs::exists(dir / "corpus.txt"));
  CHECK(text.find("config error") != std::string::npos);
}

TEST_CASE("corrupted corpus files exit 4 from train") {
  const fs::path dir = temp_dir("gestalt_cli_corrupt");
  const fs::path cfg = write_config(dir, small_config(dir));
  write_text_file(dir / "corpus.txt",
                  "#gestalt-corpus\tv1\tseed=0x1\tn=1\n{broken\n");
  std::string text;
  CHECK(invoke({"train", "--config", cfg.string()}, &text) == 4);
  CHECK(text.find("i/o error") != std::string::npos);
}

TEST_CASE("train produces an idempotent checkpoint and log") {
  const fs::path dir = temp_dir("gestalt_cli_train");
  const fs::path cfg = write_config(dir, small_config(dir));
  REQUIRE(invoke({"gen-corpus", "--config", cfg.string()}) == 0);
  REQUIRE(invoke({"train", "--config", cfg.string()}) == 0);
  const auto ckpt_hash = hash_file(dir / "checkpoint.bin");
  const std::string log = read_text_file(dir / "train_log.csv");
  CHECK(log.rfind("epoch,train_loss,test_loss,train_acc,test_acc\n", 0) == 0);

  REQUIRE(invoke({"train", "--config", cfg.string()}) == 0);
  CHECK(hash_file(dir / "checkpoint.bin") == ckpt_hash);
  CHECK(read_text_file(dir / "train_log.csv") == log);
}

TEST_CASE("fit-bayes writes the head archive and convergence summary") {
  const fs::path dir = temp_dir("gestalt_cli_fit");
  const fs::path cfg = write_config(dir, small_config(dir));
  REQUIRE(invoke({"gen-corpus", "--config", cfg.string()}) == 0);
  REQUIRE(invoke({"train", "--config", cfg.string()}) == 0);
  std::string text;
  REQUIRE(invoke({"fit-bayes", "--config", cfg.string()}, &text) == 0);
  CHECK(text.find("fitted 176 units") != std::string::npos);
  CHECK(fs::exists(dir / "head" / "manifest.json"));
  CHECK(fs::exists(dir / "head" / "convergence.csv"));
  CHECK(fs::exists(dir / "head" / "units" / "unit_175.ens"));

  // --prior-scale lands in the archive manifest.
  REQUIRE(invoke({"fit-bayes", "--config", cfg.string(), "--prior-scale", "5"}) ==
          0);
  const std::string manifest = read_text_file(dir / "head" / "manifest.json");
  CHECK(manifest.find("\"prior_scale\": 5.0") != std::string::npos);
}

TEST_CASE("seed precedence: flag over environment over config") {
  const fs::path dir = temp_dir("gestalt_cli_seed");
  const fs::path cfg = write_config(dir, small_config(dir));

  ::setenv(kSeedEnvVar, "777", 1);
  REQUIRE(invoke({"gen-corpus", "--config", cfg.string(), "--n", "3"}) == 0);
  const std::string env_manifest =
      read_text_file(dir / "corpus.txt.manifest.json");
  CHECK(env_manifest.find(hex64(777)) != std::string::npos);

  REQUIRE(invoke({"gen-corpus", "--config", cfg.string(), "--n", "3", "--seed",
               "888"}) == 0);
  const std::string flag_manifest =
      read_text_file(dir / "corpus.txt.manifest.json");
  CHECK(flag_manifest.find(hex64(888)) != std::string::npos);
  ::unsetenv(kSeedEnvVar);

  REQUIRE(invoke({"gen-corpus", "--config", cfg.string(), "--n", "3"}) == 0);
  const std::string cfg_manifest =
      read_text_file(dir / "corpus.txt.manifest.json");
  CHECK(cfg_manifest.find(hex64(11)) != std::string::npos);
}

TEST_CASE("bad flags and missing subcommands exit 2") {
  CHECK(invoke({"--no-such-flag"}) == 2);
  CHECK(invoke({}) == 2);
  std::string help;
  CHECK(invoke({"--help"}, &help) == 0);
  CHECK(help.find("gen-corpus") != std::string::npos);
}

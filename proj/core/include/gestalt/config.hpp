#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gestalt/head.hpp"
#include "gestalt/network.hpp"

namespace gestalt::cli {

inline constexpr const char* kToolVersion = "gestalt 0.1.0";
inline constexpr const char* kSeedEnvVar = "GESTALT_SEED";

// Resolved run configuration. Sources in increasing precedence: built-in
// defaults, the config file, the GESTALT_SEED environment variable (master
// seed only), explicit command-line flags.
struct RunConfig {
  std::filesystem::path lexicon_path = "data/lexicon.tsv";
  std::filesystem::path events_path = "data/events.cfg";
  std::filesystem::path items_path = "data/test_items.tsv";
  std::filesystem::path out_dir = "out";
  std::filesystem::path corpus_path;  // defaults to out_dir/corpus.txt

  std::uint64_t corpus_n = 10000;
  net::TrainConfig train;
  head::HeadOptions sampler;
  int design_size = 4096;

  int runs = 10;
  std::vector<double> prior_scales = {0.01, 1.0, 5.0};

  std::uint64_t master_seed = 42;
  int jobs = 0;  // 0 = hardware concurrency

  std::filesystem::path resolved_corpus() const {
    return corpus_path.empty() ? out_dir / "corpus.txt" : corpus_path;
  }
  int effective_jobs() const;

  // FNV over the canonical key=value serialization.
  std::uint64_t hash() const;
  std::string canonical() const;
};

// Flat INI-style file with [sections]; unknown keys are config errors.
RunConfig load_run_config(const std::filesystem::path& path);
// Applies defaults only (no file).
RunConfig default_run_config();

}  // namespace gestalt::cli

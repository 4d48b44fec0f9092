#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gestalt/commands.hpp"
#include "gestalt/errors.hpp"

namespace gestalt::cli {

namespace {

struct FlagValues {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::string corpus;
  std::uint64_t n = 0;
  int runs = 0;
  double prior_scale = 0.0;
  double dropout_rate = 0.0;
  int steps = 0;
  int ensemble_size = 0;
  int jobs = -1;
  bool sweep = false;
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Sentence-comprehension workbench: corpus generation, SG "
               "network training, last-layer Bayesian inference and the "
               "reversal-anomaly experiments"};
  app.fallthrough(true);

  FlagValues flags;
  auto* opt_config = app.add_option("--config", flags.config_path,
                                    "run configuration file");
  auto* opt_seed =
      app.add_option("--seed", flags.seed, "master seed override");
  auto* opt_out = app.add_option("--out-dir", flags.out_dir,
                                 "artifact output directory");
  auto* opt_corpus =
      app.add_option("--corpus", flags.corpus, "corpus file path");
  auto* opt_n = app.add_option("--n", flags.n, "corpus size");
  auto* opt_runs = app.add_option("--runs", flags.runs, "model runs");
  auto* opt_scale = app.add_option("--prior-scale", flags.prior_scale,
                                   "prior covariance scale");
  auto* opt_rho = app.add_option("--dropout-rate", flags.dropout_rate,
                                 "ensemble dropout rate");
  auto* opt_steps =
      app.add_option("--steps", flags.steps, "sampler max steps");
  auto* opt_j =
      app.add_option("--ensemble-size", flags.ensemble_size, "particles J");
  auto* opt_jobs = app.add_option("--jobs", flags.jobs, "worker threads");
  auto* opt_sweep = app.add_flag("--sweep", flags.sweep,
                                 "run the prior-covariance sweep scales");

  CLI::App* c_gen = app.add_subcommand("gen-corpus", "generate the corpus");
  CLI::App* c_train = app.add_subcommand("train", "train the SG network");
  CLI::App* c_fit = app.add_subcommand("fit-bayes",
                                       "fit the Bayesian output head");
  CLI::App* c_eval = app.add_subcommand("eval", "run the full experiment");
  CLI::App* c_sweep = app.add_subcommand("sweep-prior",
                                         "prior-covariance sweep");
  CLI::App* c_report = app.add_subcommand("report",
                                          "rebuild tables and figures");
  app.require_subcommand(0, 1);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  try {
    RunConfig config = opt_config->count() > 0
                           ? load_run_config(flags.config_path)
                           : default_run_config();
    if (const char* env = std::getenv(kSeedEnvVar); env != nullptr) {
      try {
        config.master_seed = std::stoull(env, nullptr, 0);
      } catch (const std::exception&) {
        throw ConfigError(std::string(kSeedEnvVar) + " is not a number: '" +
                          env + "'");
      }
    }
    if (opt_seed->count() > 0) config.master_seed = flags.seed;
    if (opt_out->count() > 0) config.out_dir = flags.out_dir;
    if (opt_corpus->count() > 0) config.corpus_path = flags.corpus;
    if (opt_n->count() > 0) config.corpus_n = flags.n;
    if (opt_runs->count() > 0) config.runs = flags.runs;
    if (opt_scale->count() > 0) config.sampler.prior_scale = flags.prior_scale;
    if (opt_rho->count() > 0) config.sampler.dropout_rate = flags.dropout_rate;
    if (opt_steps->count() > 0) config.sampler.max_steps = flags.steps;
    if (opt_j->count() > 0) config.sampler.ensemble_size = flags.ensemble_size;
    if (opt_jobs->count() > 0) config.jobs = flags.jobs;

    if (c_gen->parsed()) {
      cmd_gen_corpus(config, out);
    } else if (c_train->parsed()) {
      cmd_train(config, out);
    } else if (c_fit->parsed()) {
      cmd_fit_bayes(config, out);
    } else if (c_eval->parsed()) {
      cmd_eval(config, flags.sweep || opt_sweep->count() > 0, out);
    } else if (c_sweep->parsed()) {
      cmd_sweep_prior(config, out);
    } else if (c_report->parsed()) {
      cmd_report(config, out);
    } else {
      err << "no subcommand given; see --help\n";
      return 2;
    }
    return 0;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const StatError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const ParseError& e) {
    err << "i/o error: " << e.what() << "\n";
    return 4;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace gestalt::cli

#pragma once

#include <iosfwd>

#include "gestalt/config.hpp"

namespace gestalt::cli {

// Pipeline commands behind the CLI subcommands. They throw the errors.hpp
// exception types; run_cli maps those to exit codes (config 2, numeric 3,
// I/O 4).
void cmd_gen_corpus(const RunConfig& config, std::ostream& out);
void cmd_train(const RunConfig& config, std::ostream& out);
void cmd_fit_bayes(const RunConfig& config, std::ostream& out);
void cmd_eval(const RunConfig& config, bool sweep, std::ostream& out);
void cmd_sweep_prior(const RunConfig& config, std::ostream& out);
void cmd_report(const RunConfig& config, std::ostream& out);

// Full argv-level entry point (subcommand dispatch, flag overrides, exit
// code mapping). Used by the gestalt binary and by tests.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace gestalt::cli

#include "gestalt/commands.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gestalt/corpus.hpp"
#include "gestalt/errors.hpp"
#include "gestalt/experiments.hpp"
#include "gestalt/head.hpp"
#include "gestalt/io_util.hpp"
#include "gestalt/network.hpp"
#include "gestalt/parallel.hpp"

namespace gestalt::cli {

namespace fs = std::filesystem;

namespace {

void require_exists(const fs::path& path, const std::string& what) {
  if (!fs::exists(path))
    throw ConfigError(what + " does not exist: " + path.string());
}

std::string scale_tag(double scale) {
  std::string s = format_double(scale);
  s.erase(std::remove(s.begin(), s.end(), '.'), s.end());
  return s;
}

nlohmann::ordered_json manifest_base(const RunConfig& config,
                                     const std::string& command) {
  nlohmann::ordered_json m;
  m["tool"] = kToolVersion;
  m["command"] = command;
  m["master_seed"] = hex64(config.master_seed);
  m["config_hash"] = hex64(config.hash());
  return m;
}

void add_file_hash(nlohmann::ordered_json& obj, const std::string& key,
                   const fs::path& path) {
  obj[key] = hex64(hash_file(path));
}

void write_manifest(const fs::path& path, const nlohmann::ordered_json& m) {
  write_text_file(path, m.dump(2) + "\n");
}

struct Inputs {
  corpus::Lexicon lexicon;
  corpus::EventTables tables;
};

Inputs load_inputs(const RunConfig& config, bool need_tables) {
  require_exists(config.lexicon_path, "lexicon file");
  corpus::Lexicon lexicon = corpus::load_lexicon(config.lexicon_path);
  corpus::EventTables tables;
  if (need_tables) {
    require_exists(config.events_path, "event tables file");
    tables = corpus::load_event_tables(config.events_path, lexicon);
  }
  return Inputs{std::move(lexicon), std::move(tables)};
}

net::TrainConfig train_config_for_run(const RunConfig& config, int run) {
  net::TrainConfig tc = config.train;
  tc.seed = derive_seed(config.master_seed, "run", static_cast<std::uint64_t>(run));
  return tc;
}

// Per-run training + head fitting + evaluation for one prior scale list.
struct RunOutput {
  bool ok = false;
  std::string error;
  int best_epoch = 0;
  double val_acc = 0.0;
  std::map<double, std::vector<expt::ActivationRecord>> records;
  std::map<double, long> head_steps;
};

RunOutput execute_run(const RunConfig& config, const Inputs& inputs,
                      const std::vector<corpus::Sentence>& sentences,
                      const std::vector<expt::TestItem>& items,
                      const std::vector<double>& scales, int run,
                      const fs::path& run_dir) {
  RunOutput out;
  try {
    fs::create_directories(run_dir);
    const net::TrainConfig tc = train_config_for_run(config, run);
    const net::TrainResult trained =
        net::train_mle(sentences, inputs.lexicon, tc);
    net::save_checkpoint(run_dir / "checkpoint.bin", trained.params, tc.seed,
                         config.hash());
    net::write_training_log(run_dir / "train_log.csv", trained.log);
    out.best_epoch = trained.best_epoch;
    out.val_acc = trained.best_val_acc;

    const net::FeatureMap fmap = net::extract_feature_map(trained.params);
    const head::DesignBundle bundle = head::build_design(
        sentences, inputs.lexicon, fmap, config.design_size,
        derive_seed(config.master_seed, "design", static_cast<std::uint64_t>(run)));
    const Eigen::MatrixXd theta = trained.params.output_layer_rows();
    const std::uint64_t ckpt_hash = hash_file(run_dir / "checkpoint.bin");

    for (double scale : scales) {
      head::HeadOptions opt = config.sampler;
      opt.prior_scale = scale;
      head::PosteriorHead posterior = head::fit_head(
          bundle, opt, theta,
          derive_seed(config.master_seed, "head", static_cast<std::uint64_t>(run)),
          /*jobs=*/1, ckpt_hash);
      const fs::path head_dir = run_dir / ("head_scale_" + scale_tag(scale));
      head::save_head(head_dir, posterior);
      if (posterior.any_failed()) {
        for (const head::UnitFit& f : posterior.fits)
          if (f.failed) throw NumericError("head fit failed: " + f.error);
      }
      out.head_steps[scale] = posterior.total_steps();
      out.records[scale] = expt::evaluate_model(trained.params, posterior,
                                                items, inputs.lexicon, run);
    }
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
  }
  return out;
}

void print_table(std::ostream& os, const std::string& name,
                 const expt::AnalysisTable& table) {
  os << name << " (df=" << table.df << ")\n";
  for (const expt::AnalysisRow& row : table.rows) {
    os << "  " << row.word_class << " / "
       << corpus::role_to_string(row.probe) << ": ";
    auto show = [&os](const char* label, const expt::CellResult& cell) {
      os << label << "=";
      if (cell.ok())
        os << "t " << format_double(cell.result->t) << " p "
           << format_double(cell.result->p_two_sided);
      else
        os << "degenerate";
    };
    show("adam", row.zero_mle);
    os << "  ";
    show("sampler", row.zero_bayes);
    os << "  ";
    show("paired", row.paired);
    os << "\n";
  }
}

}  // namespace

void cmd_gen_corpus(const RunConfig& config, std::ostream& out) {
  const Inputs inputs = load_inputs(config, true);
  const fs::path corpus_path = config.resolved_corpus();
  if (corpus_path.has_parent_path())
    fs::create_directories(corpus_path.parent_path());

  const std::uint64_t corpus_seed = derive_seed(config.master_seed, "corpus", 0);
  const corpus::GenerateStats stats = corpus::generate_corpus(
      corpus_seed, config.corpus_n, inputs.tables, inputs.lexicon, corpus_path);

  out << "wrote " << config.corpus_n << " sentences to "
      << corpus_path.string() << "\n";
  out << "length histogram:";
  for (std::size_t len = 3; len <= 5; ++len)
    out << " " << len << ":" << stats.length_histogram[len];
  out << "\n";

  nlohmann::ordered_json m = manifest_base(config, "gen-corpus");
  m["corpus_seed"] = hex64(corpus_seed);
  m["n"] = config.corpus_n;
  nlohmann::ordered_json in_files;
  add_file_hash(in_files, "lexicon", config.lexicon_path);
  add_file_hash(in_files, "events", config.events_path);
  m["inputs"] = std::move(in_files);
  nlohmann::ordered_json out_files;
  add_file_hash(out_files, "corpus", corpus_path);
  m["outputs"] = std::move(out_files);
  write_manifest(corpus_path.string() + ".manifest.json", m);
}

void cmd_train(const RunConfig& config, std::ostream& out) {
  const Inputs inputs = load_inputs(config, false);
  const fs::path corpus_path = config.resolved_corpus();
  require_exists(corpus_path, "corpus file");
  const std::vector<corpus::Sentence> sentences =
      corpus::load_corpus(corpus_path, inputs.lexicon);

  fs::create_directories(config.out_dir);
  const net::TrainConfig tc = train_config_for_run(config, 0);
  const net::TrainResult trained = net::train_mle(sentences, inputs.lexicon, tc);
  const fs::path ckpt = config.out_dir / "checkpoint.bin";
  net::save_checkpoint(ckpt, trained.params, tc.seed, config.hash());
  net::write_training_log(config.out_dir / "train_log.csv", trained.log);

  out << "trained " << trained.log.size() << " epochs (best epoch "
      << trained.best_epoch << ")\n";
  out << "held-out loss " << format_double(trained.best_val_loss)
      << ", held-out accuracy " << format_double(trained.best_val_acc) << "\n";
  if (trained.clamp_events > 0)
    out << "clamped " << trained.clamp_events << " saturated outputs\n";

  nlohmann::ordered_json m = manifest_base(config, "train");
  m["train_seed"] = hex64(tc.seed);
  m["epochs"] = trained.log.size();
  m["best_epoch"] = trained.best_epoch;
  m["val_loss"] = trained.best_val_loss;
  m["val_acc"] = trained.best_val_acc;
  nlohmann::ordered_json in_files;
  add_file_hash(in_files, "lexicon", config.lexicon_path);
  add_file_hash(in_files, "corpus", corpus_path);
  m["inputs"] = std::move(in_files);
  nlohmann::ordered_json out_files;
  add_file_hash(out_files, "checkpoint", ckpt);
  add_file_hash(out_files, "train_log", config.out_dir / "train_log.csv");
  m["outputs"] = std::move(out_files);
  write_manifest(config.out_dir / "train.manifest.json", m);
}

void cmd_fit_bayes(const RunConfig& config, std::ostream& out) {
  const Inputs inputs = load_inputs(config, false);
  const fs::path corpus_path = config.resolved_corpus();
  require_exists(corpus_path, "corpus file");
  const fs::path ckpt = config.out_dir / "checkpoint.bin";
  require_exists(ckpt, "checkpoint file");

  const std::vector<corpus::Sentence> sentences =
      corpus::load_corpus(corpus_path, inputs.lexicon);
  const net::NetworkParams params = net::load_checkpoint(ckpt);
  const net::FeatureMap fmap = net::extract_feature_map(params);

  const head::DesignBundle bundle =
      head::build_design(sentences, inputs.lexicon, fmap, config.design_size,
                         derive_seed(config.master_seed, "design", 0));
  head::PosteriorHead posterior = head::fit_head(
      bundle, config.sampler, params.output_layer_rows(),
      derive_seed(config.master_seed, "head", 0), config.effective_jobs(),
      hash_file(ckpt));

  const fs::path head_dir = config.out_dir / "head";
  head::save_head(head_dir, posterior);

  std::vector<int> steps;
  int degenerate = 0;
  for (const head::UnitFit& f : posterior.fits) {
    steps.push_back(f.steps);
    if (f.degenerate_targets) ++degenerate;
  }
  std::sort(steps.begin(), steps.end());
  out << "fitted " << posterior.units() << " units (J="
      << posterior.ensemble_size() << ", prior scale "
      << format_double(config.sampler.prior_scale) << ")\n";
  out << "sampler steps: median " << steps[steps.size() / 2] << ", max "
      << steps.back() << ", total " << posterior.total_steps() << "\n";
  if (degenerate > 0)
    out << degenerate << " units had degenerate (constant) targets\n";

  nlohmann::ordered_json m = manifest_base(config, "fit-bayes");
  m["design_seed"] = hex64(derive_seed(config.master_seed, "design", 0));
  m["head_seed"] = hex64(derive_seed(config.master_seed, "head", 0));
  m["design_hash"] = hex64(bundle.hash());
  m["prior_scale"] = config.sampler.prior_scale;
  m["total_steps"] = posterior.total_steps();
  nlohmann::ordered_json in_files;
  add_file_hash(in_files, "checkpoint", ckpt);
  add_file_hash(in_files, "corpus", corpus_path);
  m["inputs"] = std::move(in_files);
  nlohmann::ordered_json out_files;
  add_file_hash(out_files, "head_manifest", head_dir / "manifest.json");
  add_file_hash(out_files, "convergence", head_dir / "convergence.csv");
  m["outputs"] = std::move(out_files);
  write_manifest(config.out_dir / "fit_bayes.manifest.json", m);

  if (posterior.any_failed()) {
    for (const head::UnitFit& f : posterior.fits)
      if (f.failed)
        throw NumericError("head fit failed (partial results persisted): " +
                           f.error);
  }
}

void cmd_eval(const RunConfig& config, bool sweep, std::ostream& out) {
  const Inputs inputs = load_inputs(config, true);
  require_exists(config.items_path, "items fixture");
  const fs::path corpus_path = config.resolved_corpus();
  require_exists(corpus_path, "corpus file");

  if (config.runs < 2) throw ConfigError("eval requires at least 2 runs");
  const std::vector<corpus::Sentence> sentences =
      corpus::load_corpus(corpus_path, inputs.lexicon);
  const std::vector<expt::TestItem> items =
      expt::build_items(config.items_path, inputs.lexicon, inputs.tables);

  std::vector<double> scales;
  if (sweep) {
    scales = config.prior_scales;
    if (std::find(scales.begin(), scales.end(), config.sampler.prior_scale) ==
        scales.end())
      scales.push_back(config.sampler.prior_scale);
    std::sort(scales.begin(), scales.end());
  } else {
    scales = {config.sampler.prior_scale};
  }
  const double main_scale = config.sampler.prior_scale;

  fs::create_directories(config.out_dir);
  std::vector<RunOutput> results(static_cast<std::size_t>(config.runs));
  parallel_for(static_cast<std::size_t>(config.runs), config.effective_jobs(),
               [&](std::size_t r) {
                 const fs::path run_dir =
                     config.out_dir / "runs" /
                     ("run_" + std::to_string(r));
                 results[r] = execute_run(config, inputs, sentences, items,
                                          scales, static_cast<int>(r), run_dir);
               });

  int completed = 0;
  for (int r = 0; r < config.runs; ++r) {
    const RunOutput& res = results[static_cast<std::size_t>(r)];
    if (res.ok) {
      ++completed;
      out << "run " << r << ": best epoch " << res.best_epoch
          << ", held-out accuracy " << format_double(res.val_acc) << "\n";
    } else {
      out << "run " << r << " FAILED: " << res.error << "\n";
    }
  }
  if (completed < 2)
    throw NumericError("eval: analysis needs at least 2 completed runs");

  std::map<double, std::vector<expt::ActivationRecord>> records_by_scale;
  std::map<double, long> steps_by_scale;
  for (const RunOutput& res : results) {
    if (!res.ok) continue;
    for (const auto& [scale, records] : res.records) {
      auto& dst = records_by_scale[scale];
      dst.insert(dst.end(), records.begin(), records.end());
      steps_by_scale[scale] += res.head_steps.at(scale);
    }
  }
  for (const auto& [scale, records] : records_by_scale)
    expt::write_records(
        config.out_dir / ("records_scale_" + scale_tag(scale) + ".csv"),
        records);

  const auto& main_records = records_by_scale.at(main_scale);
  const expt::AnalysisTable model_table = expt::model_analysis(main_records);
  const expt::AnalysisTable item_table = expt::item_analysis(main_records);
  expt::write_analysis_tables(config.out_dir, "model", model_table);
  expt::write_analysis_tables(config.out_dir, "item", item_table);
  print_table(out, "model analysis", model_table);
  print_table(out, "item analysis", item_table);

  if (scales.size() > 1) {
    const expt::SweepTable sweep_table = expt::prior_sweep(records_by_scale);
    expt::write_sweep_table(config.out_dir / "prior_sweep.csv", sweep_table);
    out << "sampler steps by prior scale:";
    for (const auto& [scale, steps] : steps_by_scale)
      out << " " << format_double(scale) << ":" << steps;
    out << "\n";
  }

  const fs::path fig_dir = config.out_dir / "figures";
  fs::create_directories(fig_dir);
  expt::write_figures(fig_dir, items, main_records);

  nlohmann::ordered_json m = manifest_base(config, sweep ? "eval --sweep"
                                                         : "eval");
  m["runs"] = config.runs;
  m["completed_runs"] = completed;
  nlohmann::ordered_json scales_json = nlohmann::ordered_json::array();
  for (double s : scales) scales_json.push_back(s);
  m["prior_scales"] = std::move(scales_json);
  nlohmann::ordered_json steps_json;
  for (const auto& [scale, steps] : steps_by_scale)
    steps_json[format_double(scale)] = steps;
  m["head_steps"] = std::move(steps_json);
  nlohmann::ordered_json run_seeds = nlohmann::ordered_json::array();
  for (int r = 0; r < config.runs; ++r)
    run_seeds.push_back(hex64(
        derive_seed(config.master_seed, "run", static_cast<std::uint64_t>(r))));
  m["run_seeds"] = std::move(run_seeds);
  nlohmann::ordered_json in_files;
  add_file_hash(in_files, "lexicon", config.lexicon_path);
  add_file_hash(in_files, "events", config.events_path);
  add_file_hash(in_files, "items", config.items_path);
  add_file_hash(in_files, "corpus", corpus_path);
  m["inputs"] = std::move(in_files);
  nlohmann::ordered_json out_files;
  for (const auto& [scale, records] : records_by_scale)
    add_file_hash(out_files, "records_scale_" + scale_tag(scale),
                  config.out_dir /
                      ("records_scale_" + scale_tag(scale) + ".csv"));
  add_file_hash(out_files, "model_paired", config.out_dir / "model_paired.csv");
  add_file_hash(out_files, "item_paired", config.out_dir / "item_paired.csv");
  m["outputs"] = std::move(out_files);
  write_manifest(config.out_dir / "manifest.json", m);
}

void cmd_sweep_prior(const RunConfig& config, std::ostream& out) {
  cmd_eval(config, /*sweep=*/true, out);
}

void cmd_report(const RunConfig& config, std::ostream& out) {
  const Inputs inputs = load_inputs(config, true);
  require_exists(config.items_path, "items fixture");
  const std::vector<expt::TestItem> items =
      expt::build_items(config.items_path, inputs.lexicon, inputs.tables);

  std::map<double, std::vector<expt::ActivationRecord>> records_by_scale;
  const double main_scale = config.sampler.prior_scale;
  std::vector<double> scales = config.prior_scales;
  if (std::find(scales.begin(), scales.end(), main_scale) == scales.end())
    scales.push_back(main_scale);
  for (double scale : scales) {
    const fs::path path =
        config.out_dir / ("records_scale_" + scale_tag(scale) + ".csv");
    if (fs::exists(path))
      records_by_scale[scale] = expt::load_records(path);
  }
  if (records_by_scale.empty())
    throw ConfigError("report: no records_scale_*.csv under " +
                      config.out_dir.string());
  if (records_by_scale.count(main_scale) == 0)
    throw ConfigError("report: no records for the main prior scale");

  const auto& main_records = records_by_scale.at(main_scale);
  const expt::AnalysisTable model_table = expt::model_analysis(main_records);
  const expt::AnalysisTable item_table = expt::item_analysis(main_records);
  expt::write_analysis_tables(config.out_dir, "model", model_table);
  expt::write_analysis_tables(config.out_dir, "item", item_table);
  print_table(out, "model analysis", model_table);
  print_table(out, "item analysis", item_table);
  if (records_by_scale.size() > 1)
    expt::write_sweep_table(config.out_dir / "prior_sweep.csv",
                            expt::prior_sweep(records_by_scale));

  const fs::path fig_dir = config.out_dir / "figures";
  fs::create_directories(fig_dir);
  expt::write_figures(fig_dir, items, main_records);
  out << "rebuilt tables and figures from persisted records\n";
}

}  // namespace gestalt::cli

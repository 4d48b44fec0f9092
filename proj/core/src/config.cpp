#include "gestalt/config.hpp"

#include <fstream>
#include <sstream>
#include <thread>

#include "gestalt/errors.hpp"
#include "gestalt/io_util.hpp"
#include "gestalt/prng.hpp"

namespace gestalt::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("bad numeric value for " + key + ": '" + v + "'");
  }
}

long to_long(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long x = std::stol(v, &used, 0);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("bad integer value for " + key + ": '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const std::uint64_t x = std::stoull(v, &used, 0);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("bad unsigned value for " + key + ": '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("bad boolean value for " + key + ": '" + v + "'");
}

std::vector<double> to_double_list(const std::string& key,
                                   const std::string& v) {
  std::vector<double> out;
  std::istringstream in(v);
  std::string part;
  while (std::getline(in, part, ',')) {
    part = trim(part);
    if (!part.empty()) out.push_back(to_double(key, part));
  }
  if (out.empty()) throw ConfigError("empty list for " + key);
  return out;
}

void apply(RunConfig& cfg, const std::string& section, const std::string& key,
           const std::string& value) {
  const std::string full = section + "." + key;
  if (section == "paths") {
    if (key == "lexicon") cfg.lexicon_path = value;
    else if (key == "events") cfg.events_path = value;
    else if (key == "items") cfg.items_path = value;
    else if (key == "out_dir") cfg.out_dir = value;
    else if (key == "corpus") cfg.corpus_path = value;
    else throw ConfigError("unknown config key: " + full);
    return;
  }
  if (section == "corpus") {
    if (key == "n") cfg.corpus_n = to_u64(full, value);
    else throw ConfigError("unknown config key: " + full);
    return;
  }
  if (section == "train") {
    if (key == "learning_rate") cfg.train.learning_rate = to_double(full, value);
    else if (key == "weight_decay") cfg.train.weight_decay = to_double(full, value);
    else if (key == "max_epochs") cfg.train.max_epochs = static_cast<int>(to_long(full, value));
    else if (key == "patience") cfg.train.patience = static_cast<int>(to_long(full, value));
    else if (key == "validation_fraction") cfg.train.validation_fraction = to_double(full, value);
    else if (key == "batch_size") cfg.train.batch_size = static_cast<int>(to_long(full, value));
    else if (key == "gestalt_width") cfg.train.gestalt_width = static_cast<int>(to_long(full, value));
    else if (key == "hidden_width") cfg.train.hidden_width = static_cast<int>(to_long(full, value));
    else if (key == "clamp_floor") cfg.train.clamp_floor = to_double(full, value);
    else throw ConfigError("unknown config key: " + full);
    return;
  }
  if (section == "sampler") {
    if (key == "ensemble_size") cfg.sampler.ensemble_size = static_cast<int>(to_long(full, value));
    else if (key == "dropout_rate") cfg.sampler.dropout_rate = to_double(full, value);
    else if (key == "step_size") cfg.sampler.step_size = to_double(full, value);
    else if (key == "stop_epsilon") cfg.sampler.stop_epsilon = to_double(full, value);
    else if (key == "max_steps") cfg.sampler.max_steps = static_cast<int>(to_long(full, value));
    else if (key == "prior_scale") cfg.sampler.prior_scale = to_double(full, value);
    else if (key == "mask_per_stage") cfg.sampler.mask_per_stage = to_bool(full, value);
    else if (key == "spectral_stop") cfg.sampler.spectral_stop = to_bool(full, value);
    else if (key == "design_size") cfg.design_size = static_cast<int>(to_long(full, value));
    else throw ConfigError("unknown config key: " + full);
    return;
  }
  if (section == "experiment") {
    if (key == "runs") cfg.runs = static_cast<int>(to_long(full, value));
    else if (key == "prior_scales") cfg.prior_scales = to_double_list(full, value);
    else throw ConfigError("unknown config key: " + full);
    return;
  }
  if (section == "run") {
    if (key == "master_seed") cfg.master_seed = to_u64(full, value);
    else if (key == "jobs") cfg.jobs = static_cast<int>(to_long(full, value));
    else throw ConfigError("unknown config key: " + full);
    return;
  }
  throw ConfigError("unknown config section: [" + section + "]");
}

}  // namespace

int RunConfig::effective_jobs() const {
  if (jobs > 0) return jobs;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

std::string RunConfig::canonical() const {
  std::ostringstream out;
  out << "corpus.n=" << corpus_n << '\n'
      << "experiment.prior_scales=";
  for (std::size_t i = 0; i < prior_scales.size(); ++i)
    out << (i ? "," : "") << format_double(prior_scales[i]);
  out << '\n'
      << "experiment.runs=" << runs << '\n'
      << "paths.corpus=" << resolved_corpus().string() << '\n'
      << "paths.events=" << events_path.string() << '\n'
      << "paths.items=" << items_path.string() << '\n'
      << "paths.lexicon=" << lexicon_path.string() << '\n'
      << "paths.out_dir=" << out_dir.string() << '\n'
      << "run.master_seed=" << master_seed << '\n'
      << "sampler.design_size=" << design_size << '\n'
      << "sampler.dropout_rate=" << format_double(sampler.dropout_rate) << '\n'
      << "sampler.ensemble_size=" << sampler.ensemble_size << '\n'
      << "sampler.mask_per_stage=" << (sampler.mask_per_stage ? 1 : 0) << '\n'
      << "sampler.max_steps=" << sampler.max_steps << '\n'
      << "sampler.prior_scale=" << format_double(sampler.prior_scale) << '\n'
      << "sampler.spectral_stop=" << (sampler.spectral_stop ? 1 : 0) << '\n'
      << "sampler.step_size=" << format_double(sampler.step_size) << '\n'
      << "sampler.stop_epsilon=" << format_double(sampler.stop_epsilon) << '\n'
      << "train.batch_size=" << train.batch_size << '\n'
      << "train.clamp_floor=" << format_double(train.clamp_floor) << '\n'
      << "train.gestalt_width=" << train.gestalt_width << '\n'
      << "train.hidden_width=" << train.hidden_width << '\n'
      << "train.learning_rate=" << format_double(train.learning_rate) << '\n'
      << "train.max_epochs=" << train.max_epochs << '\n'
      << "train.patience=" << train.patience << '\n'
      << "train.validation_fraction="
      << format_double(train.validation_fraction) << '\n'
      << "train.weight_decay=" << format_double(train.weight_decay) << '\n';
  return out.str();
}

std::uint64_t RunConfig::hash() const { return fnv1a64(canonical()); }

RunConfig default_run_config() { return RunConfig{}; }

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  RunConfig cfg;
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (!line.ends_with("]"))
        throw ConfigError(where + ": unclosed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(where + ": expected 'key = value'");
    if (section.empty())
      throw ConfigError(where + ": key outside any section");
    apply(cfg, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

}  // namespace gestalt::cli

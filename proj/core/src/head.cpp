#include "gestalt/head.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gestalt/errors.hpp"
#include "gestalt/io_util.hpp"
#include "gestalt/parallel.hpp"

namespace gestalt::head {

namespace {

double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

std::string unit_file_name(int unit) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "unit_%03d.ens", unit);
  return buf;
}

sampler::SamplerConfig unit_config(const HeadOptions& opt,
                                   const Eigen::VectorXd& prior_mean,
                                   std::uint64_t seed) {
  sampler::SamplerConfig cfg;
  cfg.ensemble_size = opt.ensemble_size;
  cfg.dropout_rate = opt.dropout_rate;
  cfg.step_size = opt.step_size;
  cfg.stop_epsilon = opt.stop_epsilon;
  cfg.max_steps = opt.max_steps;
  cfg.prior_mean = prior_mean;
  cfg.prior_variance =
      Eigen::VectorXd::Constant(prior_mean.size(), opt.prior_scale);
  cfg.seed = seed;
  cfg.mask_per_stage = opt.mask_per_stage;
  cfg.spectral_stop = opt.spectral_stop;
  return cfg;
}

}  // namespace

std::uint64_t DesignBundle::hash() const {
  std::uint64_t h = fnv1a64(psi.data(), sizeof(double) *
                                            static_cast<std::size_t>(psi.size()));
  h = fnv1a64(targets.data(),
              sizeof(double) * static_cast<std::size_t>(targets.size()), h);
  return h;
}

DesignBundle build_design(const std::vector<corpus::Sentence>& sentences,
                          const corpus::Lexicon& lexicon,
                          const net::FeatureMap& feature_map, int subsample,
                          std::uint64_t seed) {
  if (sentences.empty()) throw ConfigError("build_design: empty corpus");
  if (subsample < 1) throw ConfigError("build_design: subsample must be >= 1");

  // Candidate pools per probe role, in deterministic sentence order.
  struct Pair {
    int sentence;
    int prefix_len;
    int query;  // index into role_queries of that sentence
  };
  std::vector<std::vector<Pair>> pools(std::size(corpus::kAllRoles));
  std::vector<std::vector<corpus::RoleQuery>> queries(sentences.size());
  for (std::size_t si = 0; si < sentences.size(); ++si) {
    queries[si] = corpus::role_queries(sentences[si].frame, lexicon);
    const int len = static_cast<int>(sentences[si].constituents.size());
    for (int l = 1; l <= len; ++l)
      for (std::size_t q = 0; q < queries[si].size(); ++q) {
        const auto role_idx = static_cast<std::size_t>(queries[si][q].role);
        pools[role_idx].push_back(
            Pair{static_cast<int>(si), l, static_cast<int>(q)});
      }
  }

  std::size_t available = 0;
  for (const auto& pool : pools) available += pool.size();
  if (static_cast<std::size_t>(subsample) > available)
    throw ConfigError("build_design: subsample exceeds available pairs");

  // Role quotas N/5 +- 1; short pools are drained and the deficit is
  // backfilled from later roles in order.
  const int n_roles = static_cast<int>(pools.size());
  std::vector<int> quota(static_cast<std::size_t>(n_roles));
  for (int r = 0; r < n_roles; ++r)
    quota[static_cast<std::size_t>(r)] =
        subsample / n_roles + (r < subsample % n_roles ? 1 : 0);
  int deficit = 0;
  for (int r = 0; r < n_roles; ++r) {
    const int pool_size = static_cast<int>(pools[static_cast<std::size_t>(r)].size());
    if (quota[static_cast<std::size_t>(r)] > pool_size) {
      deficit += quota[static_cast<std::size_t>(r)] - pool_size;
      quota[static_cast<std::size_t>(r)] = pool_size;
    }
  }
  for (int r = 0; r < n_roles && deficit > 0; ++r) {
    const int pool_size = static_cast<int>(pools[static_cast<std::size_t>(r)].size());
    const int extra =
        std::min(deficit, pool_size - quota[static_cast<std::size_t>(r)]);
    quota[static_cast<std::size_t>(r)] += extra;
    deficit -= extra;
  }

  // Partial Fisher-Yates per role.
  std::vector<Pair> selected;
  std::vector<corpus::Role> roles;
  selected.reserve(static_cast<std::size_t>(subsample));
  for (int r = 0; r < n_roles; ++r) {
    auto& pool = pools[static_cast<std::size_t>(r)];
    Rng rng(derive_seed(seed, "design-role", static_cast<std::uint64_t>(r)));
    const int take = quota[static_cast<std::size_t>(r)];
    for (int i = 0; i < take; ++i) {
      const std::size_t j =
          static_cast<std::size_t>(i) +
          rng.uniform_index(pool.size() - static_cast<std::size_t>(i));
      std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
      selected.push_back(pool[static_cast<std::size_t>(i)]);
      roles.push_back(corpus::kAllRoles[static_cast<std::size_t>(r)]);
    }
  }

  // One update-network pass per distinct sentence.
  const int dim = feature_map.dim();
  const int n_features = lexicon.features().size();
  DesignBundle bundle;
  bundle.seed = seed;
  bundle.psi.resize(dim, static_cast<Eigen::Index>(selected.size()));
  bundle.targets =
      Eigen::MatrixXd::Zero(n_features, static_cast<Eigen::Index>(selected.size()));
  bundle.probe_roles = std::move(roles);

  std::map<int, std::vector<std::size_t>> by_sentence;
  for (std::size_t c = 0; c < selected.size(); ++c)
    by_sentence[selected[c].sentence].push_back(c);
  for (const auto& [si, cols] : by_sentence) {
    const corpus::Sentence& s = sentences[static_cast<std::size_t>(si)];
    Eigen::MatrixXd steps(lexicon.token_count(),
                          static_cast<Eigen::Index>(s.constituents.size()));
    for (std::size_t t = 0; t < s.constituents.size(); ++t)
      steps.col(static_cast<Eigen::Index>(t)) =
          corpus::encode_constituent(s.constituents[t], lexicon);
    const Eigen::MatrixXd gestalts =
        net::run_update(feature_map.params(), steps);
    for (std::size_t c : cols) {
      const Pair& pair = selected[c];
      const corpus::RoleQuery& q =
          queries[static_cast<std::size_t>(si)][static_cast<std::size_t>(pair.query)];
      bundle.psi.col(static_cast<Eigen::Index>(c)) = feature_map.psi_from_gestalt(
          gestalts.col(pair.prefix_len - 1), q.probe);
      bundle.targets.col(static_cast<Eigen::Index>(c)) = q.target;
    }
  }
  return bundle;
}

int PosteriorHead::dim() const {
  return ensembles.empty() ? 0 : static_cast<int>(ensembles.front().rows());
}

int PosteriorHead::ensemble_size() const {
  return ensembles.empty() ? 0 : static_cast<int>(ensembles.front().cols());
}

long PosteriorHead::total_steps() const {
  long total = 0;
  for (const UnitFit& f : fits) total += f.steps;
  return total;
}

bool PosteriorHead::any_failed() const {
  for (const UnitFit& f : fits)
    if (f.failed) return true;
  return false;
}

PosteriorHead fit_head(const DesignBundle& bundle, const HeadOptions& options,
                       const Eigen::MatrixXd& theta_mle,
                       std::uint64_t master_seed, int jobs,
                       std::uint64_t checkpoint_hash) {
  const int n_units = bundle.units();
  if (theta_mle.rows() != n_units || theta_mle.cols() != bundle.dim())
    throw ConfigError("fit_head: theta_MLE shape does not match the bundle");

  PosteriorHead head;
  head.options = options;
  head.master_seed = master_seed;
  head.checkpoint_hash = checkpoint_hash;
  head.ensembles.resize(static_cast<std::size_t>(n_units));
  head.fits.resize(static_cast<std::size_t>(n_units));

  parallel_for(static_cast<std::size_t>(n_units), jobs, [&](std::size_t k) {
    UnitFit& fit = head.fits[k];
    const Eigen::VectorXd t_k = bundle.targets.row(static_cast<Eigen::Index>(k));
    const double sum = t_k.sum();
    fit.degenerate_targets =
        sum == 0.0 || sum == static_cast<double>(t_k.size());
    try {
      sampler::Design design{bundle.psi, t_k};
      const sampler::SamplerConfig cfg = unit_config(
          options, theta_mle.row(static_cast<Eigen::Index>(k)).transpose(),
          derive_seed(master_seed, "unit", k));
      sampler::SamplerResult result = sampler::run_sampler(design, cfg);
      fit.steps = result.steps;
      fit.final_metric = result.final_metric;
      head.ensembles[k] = std::move(result.ensemble.particles);
    } catch (const std::exception& e) {
      fit.failed = true;
      fit.error = "unit " + std::to_string(k) + ": " + e.what();
    }
  });
  return head;
}

double predict(const PosteriorHead& head, const Eigen::VectorXd& psi,
               int unit) {
  const Eigen::MatrixXd& ens = head.ensembles.at(static_cast<std::size_t>(unit));
  const Eigen::VectorXd logits = ens.transpose() * psi;
  double mean = 0.0;
  for (Eigen::Index j = 0; j < logits.size(); ++j) mean += sigmoid(logits(j));
  return mean / static_cast<double>(logits.size());
}

double predict_sd(const PosteriorHead& head, const Eigen::VectorXd& psi,
                  int unit) {
  const Eigen::MatrixXd& ens = head.ensembles.at(static_cast<std::size_t>(unit));
  const Eigen::VectorXd logits = ens.transpose() * psi;
  const Eigen::Index J = logits.size();
  if (J < 2) return 0.0;
  double mean = 0.0;
  for (Eigen::Index j = 0; j < J; ++j) mean += sigmoid(logits(j));
  mean /= static_cast<double>(J);
  double ss = 0.0;
  for (Eigen::Index j = 0; j < J; ++j) {
    const double d = sigmoid(logits(j)) - mean;
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(J - 1));
}

double predict_mle(const Eigen::MatrixXd& theta_mle, const Eigen::VectorXd& psi,
                   int unit) {
  return sigmoid(theta_mle.row(unit).dot(psi));
}

void save_head(const std::filesystem::path& dir, const PosteriorHead& head) {
  std::filesystem::create_directories(dir / "units");

  nlohmann::ordered_json manifest;
  manifest["format"] = "gestalt-head-v1";
  manifest["units"] = head.units();
  manifest["dim"] = head.dim();
  manifest["ensemble_size"] = head.options.ensemble_size;
  manifest["master_seed"] = hex64(head.master_seed);
  manifest["checkpoint_hash"] = hex64(head.checkpoint_hash);
  nlohmann::ordered_json cfg;
  cfg["dropout_rate"] = head.options.dropout_rate;
  cfg["step_size"] = head.options.step_size;
  cfg["stop_epsilon"] = head.options.stop_epsilon;
  cfg["max_steps"] = head.options.max_steps;
  cfg["prior_scale"] = head.options.prior_scale;
  cfg["mask_per_stage"] = head.options.mask_per_stage;
  cfg["spectral_stop"] = head.options.spectral_stop;
  manifest["sampler"] = std::move(cfg);
  manifest["total_steps"] = head.total_steps();
  nlohmann::ordered_json units = nlohmann::ordered_json::array();
  for (int k = 0; k < head.units(); ++k) {
    const UnitFit& f = head.fits[static_cast<std::size_t>(k)];
    nlohmann::ordered_json u;
    u["unit"] = k;
    u["steps"] = f.steps;
    u["final_metric"] = f.final_metric;
    u["degenerate_targets"] = f.degenerate_targets;
    u["failed"] = f.failed;
    if (f.failed) u["error"] = f.error;
    units.push_back(std::move(u));
  }
  manifest["unit_fits"] = std::move(units);
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");

  std::ostringstream csv;
  csv << "unit,steps,final_metric,degenerate\n";
  for (int k = 0; k < head.units(); ++k) {
    const UnitFit& f = head.fits[static_cast<std::size_t>(k)];
    csv << k << ',' << f.steps << ',' << format_double(f.final_metric) << ','
        << (f.degenerate_targets ? 1 : 0) << '\n';
  }
  write_text_file(dir / "convergence.csv", csv.str());

  for (int k = 0; k < head.units(); ++k) {
    const UnitFit& f = head.fits[static_cast<std::size_t>(k)];
    if (f.failed) continue;
    sampler::SamplerResult result;
    result.ensemble.particles = head.ensembles[static_cast<std::size_t>(k)];
    result.ensemble.step = f.steps;
    result.steps = f.steps;
    result.final_metric = f.final_metric;
    const sampler::SamplerConfig cfg = unit_config(
        head.options,
        Eigen::VectorXd::Zero(head.ensembles[static_cast<std::size_t>(k)].rows()),
        derive_seed(head.master_seed, "unit", static_cast<std::uint64_t>(k)));
    sampler::save_ensemble(dir / "units" / unit_file_name(k), result, cfg);
  }
}

PosteriorHead load_head(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(dir.string() + ": bad head manifest: " + e.what());
  }
  if (manifest.value("format", "") != "gestalt-head-v1")
    throw ParseError(dir.string() + ": not a head archive");

  PosteriorHead head;
  const int n_units = manifest.at("units").get<int>();
  head.master_seed = std::stoull(
      manifest.at("master_seed").get<std::string>(), nullptr, 16);
  head.checkpoint_hash = std::stoull(
      manifest.at("checkpoint_hash").get<std::string>(), nullptr, 16);
  const auto& cfg = manifest.at("sampler");
  head.options.ensemble_size = manifest.at("ensemble_size").get<int>();
  head.options.dropout_rate = cfg.at("dropout_rate").get<double>();
  head.options.step_size = cfg.at("step_size").get<double>();
  head.options.stop_epsilon = cfg.at("stop_epsilon").get<double>();
  head.options.max_steps = cfg.at("max_steps").get<int>();
  head.options.prior_scale = cfg.at("prior_scale").get<double>();
  head.options.mask_per_stage = cfg.at("mask_per_stage").get<bool>();
  head.options.spectral_stop = cfg.at("spectral_stop").get<bool>();

  head.ensembles.resize(static_cast<std::size_t>(n_units));
  head.fits.resize(static_cast<std::size_t>(n_units));
  for (const auto& u : manifest.at("unit_fits")) {
    const int k = u.at("unit").get<int>();
    UnitFit& f = head.fits.at(static_cast<std::size_t>(k));
    f.steps = u.at("steps").get<int>();
    f.final_metric = u.at("final_metric").get<double>();
    f.degenerate_targets = u.at("degenerate_targets").get<bool>();
    f.failed = u.at("failed").get<bool>();
    if (f.failed) {
      f.error = u.value("error", "");
      continue;
    }
    sampler::SamplerResult result =
        sampler::load_ensemble(dir / "units" / unit_file_name(k));
    head.ensembles[static_cast<std::size_t>(k)] =
        std::move(result.ensemble.particles);
  }
  return head;
}

}  // namespace gestalt::head

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gestalt/corpus.hpp"
#include "gestalt/network.hpp"
#include "gestalt/sampler.hpp"

namespace gestalt::head {

// Shared design for all K output units: psi columns come from the frozen
// feature map over a role-stratified subsample of training pairs, and each
// unit k owns the binary target row t_k.
struct DesignBundle {
  Eigen::MatrixXd psi;                    // (d+1) x N, bias row all ones
  Eigen::MatrixXd targets;                // K x N
  std::vector<corpus::Role> probe_roles;  // per column
  std::uint64_t seed = 0;

  int dim() const { return static_cast<int>(psi.rows()); }
  int size() const { return static_cast<int>(psi.cols()); }
  int units() const { return static_cast<int>(targets.rows()); }
  std::uint64_t hash() const;
};

// Stratified subsample over the five probe roles (quota N/5 +- 1 per
// role, backfilled in role order when a pool is short). Deterministic
// given the seed.
DesignBundle build_design(const std::vector<corpus::Sentence>& sentences,
                          const corpus::Lexicon& lexicon,
                          const net::FeatureMap& feature_map, int subsample,
                          std::uint64_t seed);

struct HeadOptions {
  int ensemble_size = 128;
  double dropout_rate = 0.3;
  double step_size = 0.5;
  double stop_epsilon = 0.02;
  int max_steps = 60;
  double prior_scale = 1.0;  // P_prior = prior_scale * I
  bool mask_per_stage = true;
  bool spectral_stop = false;
};

struct UnitFit {
  int steps = 0;
  double final_metric = 0.0;
  bool degenerate_targets = false;  // all-0 or all-1 in the subsample
  bool failed = false;
  std::string error;
};

struct PosteriorHead {
  std::vector<Eigen::MatrixXd> ensembles;  // K of (d+1) x J
  std::vector<UnitFit> fits;
  HeadOptions options;
  std::uint64_t master_seed = 0;
  std::uint64_t checkpoint_hash = 0;

  int units() const { return static_cast<int>(ensembles.size()); }
  int dim() const;
  int ensemble_size() const;
  long total_steps() const;
  bool any_failed() const;
};

// One independent binary logistic regression per output unit, all sharing
// the bundle's psi. Prior mean is the MLE output row, prior covariance
// prior_scale * I; per-unit seeds derive from (master_seed, unit index) so
// the fit is reproducible for any worker count.
PosteriorHead fit_head(const DesignBundle& bundle, const HeadOptions& options,
                       const Eigen::MatrixXd& theta_mle,
                       std::uint64_t master_seed, int jobs = 1,
                       std::uint64_t checkpoint_hash = 0);

// Ensemble predictive probability (mean of sigma(<theta_j, psi>)).
double predict(const PosteriorHead& head, const Eigen::VectorXd& psi, int unit);
// Particle spread of the predictive for the same unit.
double predict_sd(const PosteriorHead& head, const Eigen::VectorXd& psi,
                  int unit);
// Deterministic baseline sigma(<theta_MLE,k, psi>).
double predict_mle(const Eigen::MatrixXd& theta_mle, const Eigen::VectorXd& psi,
                   int unit);

// Archive: manifest.json + convergence.csv + one ensemble file per unit.
void save_head(const std::filesystem::path& dir, const PosteriorHead& head);
PosteriorHead load_head(const std::filesystem::path& dir);

}  // namespace gestalt::head

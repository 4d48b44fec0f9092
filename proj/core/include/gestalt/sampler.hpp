#pragma once

#include <filesystem>
#include <type_traits>
#include <vector>

#include <Eigen/Core>

#include "gestalt/prng.hpp"

namespace gestalt::sampler {

// J particles in parameter space, one column per particle.
struct Ensemble {
  Eigen::MatrixXd particles;  // D x J
  int step = 0;
};

struct Moments {
  Eigen::VectorXd mean;        // empirical mean over particles
  Eigen::MatrixXd deviations;  // D x J, columns sum to zero
  Eigen::MatrixXd covariance;  // deviations * deviations^T / (J-1)
};

Moments moments(const Eigen::MatrixXd& particles);

// Mean of g over the particle ensemble (the empirical-measure expectation).
template <typename G>
auto ensemble_expectation(const Eigen::MatrixXd& particles, G&& g) {
  using Result = std::invoke_result_t<G, Eigen::VectorXd>;
  const Eigen::Index J = particles.cols();
  Result sum = g(Eigen::VectorXd(particles.col(0)));
  for (Eigen::Index j = 1; j < J; ++j)
    sum += g(Eigen::VectorXd(particles.col(j)));
  return Result(sum / static_cast<double>(J));
}

// Binary logistic design: columns of psi are feature vectors, targets in
// {0,1}. N = 0 (no data) is allowed and leaves the homotopy step inert.
struct Design {
  Eigen::MatrixXd psi;      // D x N
  Eigen::VectorXd targets;  // N

  int dim() const { return static_cast<int>(psi.rows()); }
  int size() const { return static_cast<int>(psi.cols()); }
};

// y(theta): per-point class probabilities sigma(<theta, psi_n>).
Eigen::VectorXd class_probabilities(const Design& design,
                                    const Eigen::VectorXd& theta);

// Deviations after entrywise dropout, plus the scale 1/((1-rho)(J-1))
// that turns them into the dropout covariance.
struct DropoutState {
  Eigen::MatrixXd masked_deviations;  // D x J
  Eigen::MatrixXd mask;               // 0/1, same shape
  double scale = 0.0;

  Eigen::MatrixXd covariance() const {
    return (masked_deviations * masked_deviations.transpose()) * scale;
  }
};

// Fresh i.i.d. mask with keep probability 1-rho. rho = 0 skips all draws
// and reproduces the plain covariance exactly.
DropoutState dropout_deviations(const Moments& m, double rho, Rng& rng);
// Deterministic-mask variant (tests, and mask reuse across half-steps).
DropoutState apply_dropout_mask(const Eigen::MatrixXd& deviations,
                                const Eigen::MatrixXd& mask, double rho);

enum class SolvePath { kAuto, kDense, kLowRank };

// Homotopy (data) half-step with the tamed inner solve:
//   theta_j -= dtau/2 * Phat Psi (M Psi^T(theta_j - m) + 2(mu[y] - t))
//   M = (dtau Psi^T Phat Psi + mu[R]^{-1})^{-1}.
// The N x N system is solved densely for small N and through its rank-J
// factorization otherwise; both paths are algebraically identical.
void homotopy_half_step(Eigen::MatrixXd& particles, const Design& design,
                        const Eigen::VectorXd& mean, const DropoutState& drop,
                        double dtau, SolvePath path = SolvePath::kAuto);

// Prior + entropy half-step:
//   theta_j -= dtau/2 * Phat (dtau Phat + P_prior)^{-1}
//              (theta_j + m - 2 m_prior) - dtau/2 (theta_j - m).
// One D x D solve per step, shared by all particles.
void prior_half_step(Eigen::MatrixXd& particles, const Eigen::VectorXd& mean,
                     const DropoutState& drop,
                     const Eigen::VectorXd& prior_mean,
                     const Eigen::VectorXd& prior_variance, double dtau);

// Exact right-hand side of the continuous IPS ODE (no taming, no
// dropout); used to validate the split scheme's consistency.
Eigen::MatrixXd ips_rhs(const Eigen::MatrixXd& particles, const Design& design,
                        const Eigen::VectorXd& prior_mean,
                        const Eigen::VectorXd& prior_variance);

// Relative covariance change between steps. Frobenius by default; the
// spectral variant estimates the 2-norm by power iteration. A zero
// denominator counts as converged (returns 0).
double stopping_metric(const Eigen::MatrixXd& prev, const Eigen::MatrixXd& next,
                       bool spectral = false);

struct SamplerConfig {
  int ensemble_size = 128;
  double dropout_rate = 0.3;
  double step_size = 0.5;
  double stop_epsilon = 1e-3;
  int max_steps = 200;
  Eigen::VectorXd prior_mean;      // D
  Eigen::VectorXd prior_variance;  // D, diagonal of P_prior, entries > 0
  std::uint64_t seed = 0;
  bool mask_per_stage = true;   // redraw the dropout mask at s+1/2
  bool spectral_stop = false;   // stopping metric norm choice

  void validate(int dim) const;
};

struct StepLog {
  int step = 0;
  double metric = 0.0;
  double mean_norm = 0.0;
  double trace_cov = 0.0;  // trace of the dropout covariance used at s
};

struct SamplerResult {
  Ensemble ensemble;
  int steps = 0;
  double final_metric = 0.0;
  std::vector<StepLog> log;
};

// Algorithm: init theta_j ~ N(m_prior, P_prior) i.i.d., then alternate the
// homotopy and prior half-steps until the relative covariance change drops
// below stop_epsilon or max_steps is reached. The stopping metric is
// evaluated on the plain (unmasked) covariance so that mask resampling
// noise cannot keep a converged ensemble from stopping; with rho = 0 this
// is identical to the dropout covariance.
SamplerResult run_sampler(const Design& design, const SamplerConfig& config);

void save_ensemble(const std::filesystem::path& path,
                   const SamplerResult& result, const SamplerConfig& config);
SamplerResult load_ensemble(const std::filesystem::path& path,
                            SamplerConfig* config_out = nullptr);

void write_convergence_log(const std::filesystem::path& path,
                           const std::vector<StepLog>& log);

}  // namespace gestalt::sampler

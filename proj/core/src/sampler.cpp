#include "gestalt/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include <Eigen/Cholesky>

#include "gestalt/errors.hpp"
#include "gestalt/io_util.hpp"

namespace gestalt::sampler {

namespace {

constexpr std::uint32_t kEnsembleMagic = 0x53474531;  // "1EGS" LE
constexpr std::uint32_t kEnsembleVersion = 1;
// Floor on the averaged r_nn = y(1-y); keeps the tamed solve finite when
// an ensemble saturates a data point to y = 0 or 1 in double precision.
constexpr double kRFloor = 1e-12;

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& a) {
  return (1.0 / (1.0 + (-a.array()).exp())).matrix();
}

struct DataStats {
  Eigen::MatrixXd probs;      // N x J
  Eigen::VectorXd mu_y;       // N
  Eigen::VectorXd r_bar;      // N, diagonal of mu[R]
};

DataStats data_stats(const Design& design, const Eigen::MatrixXd& particles) {
  DataStats s;
  s.probs = sigmoid(design.psi.transpose() * particles);
  s.mu_y = s.probs.rowwise().mean();
  s.r_bar = (s.probs.array() * (1.0 - s.probs.array()))
                .rowwise()
                .mean()
                .cwiseMax(kRFloor)
                .matrix();
  return s;
}

double condition_estimate(const Eigen::MatrixXd& a) {
  const Eigen::VectorXd d = a.diagonal().cwiseAbs();
  const double lo = d.minCoeff();
  return lo > 0.0 ? d.maxCoeff() / lo : std::numeric_limits<double>::infinity();
}

double spectral_norm(const Eigen::MatrixXd& a) {
  // Power iteration on a symmetric matrix; deterministic start vector.
  const Eigen::Index n = a.rows();
  Eigen::VectorXd v = Eigen::VectorXd::Ones(n) / std::sqrt(double(n));
  double lambda = 0.0;
  for (int it = 0; it < 100; ++it) {
    Eigen::VectorXd w = a * v;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    const double next = std::fabs(v.dot(a * v));
    if (std::fabs(next - lambda) <= 1e-12 * std::max(1.0, next)) return next;
    lambda = next;
  }
  return lambda;
}

}  // namespace

Moments moments(const Eigen::MatrixXd& particles) {
  const Eigen::Index J = particles.cols();
  if (J < 2) throw NumericError("moments: need at least 2 particles");
  Moments m;
  m.mean = particles.rowwise().mean();
  m.deviations = particles.colwise() - m.mean;
  // Same multiply-by-reciprocal form as DropoutState::covariance so the
  // rho = 0 dropout covariance reproduces this matrix bit for bit.
  m.covariance = (m.deviations * m.deviations.transpose()) *
                 (1.0 / static_cast<double>(J - 1));
  return m;
}

Eigen::VectorXd class_probabilities(const Design& design,
                                    const Eigen::VectorXd& theta) {
  return sigmoid(design.psi.transpose() * theta);
}

DropoutState dropout_deviations(const Moments& m, double rho, Rng& rng) {
  const Eigen::Index D = m.deviations.rows();
  const Eigen::Index J = m.deviations.cols();
  if (rho < 0.0 || rho >= 1.0)
    throw NumericError("dropout rate must be in [0,1)");
  DropoutState out;
  if (rho == 0.0) {
    out.mask = Eigen::MatrixXd::Ones(D, J);
    out.masked_deviations = m.deviations;
    out.scale = 1.0 / static_cast<double>(J - 1);
    return out;
  }
  out.mask.resize(D, J);
  for (Eigen::Index j = 0; j < J; ++j)
    for (Eigen::Index i = 0; i < D; ++i)
      out.mask(i, j) = rng.bernoulli(rho) ? 0.0 : 1.0;
  return apply_dropout_mask(m.deviations, out.mask, rho);
}

DropoutState apply_dropout_mask(const Eigen::MatrixXd& deviations,
                                const Eigen::MatrixXd& mask, double rho) {
  if (mask.rows() != deviations.rows() || mask.cols() != deviations.cols())
    throw NumericError("dropout mask shape mismatch");
  DropoutState out;
  out.mask = mask;
  out.masked_deviations = deviations.cwiseProduct(mask);
  out.scale =
      1.0 / ((1.0 - rho) * static_cast<double>(deviations.cols() - 1));
  return out;
}

void homotopy_half_step(Eigen::MatrixXd& particles, const Design& design,
                        const Eigen::VectorXd& mean, const DropoutState& drop,
                        double dtau, SolvePath path) {
  const Eigen::Index N = design.psi.cols();
  const Eigen::Index J = particles.cols();
  if (dtau == 0.0 || N == 0) return;
  if (design.psi.rows() != particles.rows())
    throw NumericError("homotopy_half_step: design dimension mismatch");

  const DataStats stats = data_stats(design, particles);
  // S = Psi^T Theta_hat carries the low-rank factor of Psi^T Phat Psi.
  const Eigen::MatrixXd s_hat = design.psi.transpose() * drop.masked_deviations;
  const Eigen::MatrixXd q =
      design.psi.transpose() * (particles.colwise() - mean);
  const Eigen::VectorXd resid2 = 2.0 * (stats.mu_y - design.targets);

  if (path == SolvePath::kAuto)
    path = N <= 2 * J ? SolvePath::kDense : SolvePath::kLowRank;

  Eigen::MatrixXd w(N, J);  // w = M q, M = (dtau Psi^T Phat Psi + Rbar^-1)^-1
  if (path == SolvePath::kDense) {
    Eigen::MatrixXd a = (dtau * drop.scale) * (s_hat * s_hat.transpose());
    a.diagonal() += stats.r_bar.cwiseInverse();
    const Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) {
      std::ostringstream msg;
      msg << "homotopy_half_step: singular tamed system (diagonal condition"
          << " estimate " << condition_estimate(a) << ")";
      throw NumericError(msg.str());
    }
    w = llt.solve(q);
  } else {
    // Woodbury with U = sqrt(dtau*scale) S: M = Rbar - Rbar U C^-1 U^T Rbar,
    // C = I + U^T Rbar U. Only a J x J factorization is needed.
    const Eigen::MatrixXd u = std::sqrt(dtau * drop.scale) * s_hat;
    const Eigen::MatrixXd ru = stats.r_bar.asDiagonal() * u;
    Eigen::MatrixXd c = u.transpose() * ru;
    c.diagonal().array() += 1.0;
    const Eigen::LLT<Eigen::MatrixXd> llt(c);
    if (llt.info() != Eigen::Success) {
      std::ostringstream msg;
      msg << "homotopy_half_step: singular low-rank system (diagonal"
          << " condition estimate " << condition_estimate(c) << ")";
      throw NumericError(msg.str());
    }
    const Eigen::MatrixXd rq = stats.r_bar.asDiagonal() * q;
    w = rq - ru * llt.solve(u.transpose() * rq);
  }
  w.colwise() += resid2;

  // particles -= dtau/2 * Phat Psi w, with Phat in factored form.
  const Eigen::MatrixXd psi_w = design.psi * w;                      // D x J
  const Eigen::MatrixXd inner = drop.masked_deviations.transpose() * psi_w;
  particles.noalias() -=
      (0.5 * dtau * drop.scale) * (drop.masked_deviations * inner);
}

void prior_half_step(Eigen::MatrixXd& particles, const Eigen::VectorXd& mean,
                     const DropoutState& drop,
                     const Eigen::VectorXd& prior_mean,
                     const Eigen::VectorXd& prior_variance, double dtau) {
  if (dtau == 0.0) return;
  if ((prior_variance.array() <= 0.0).any())
    throw NumericError("prior_half_step: prior variance must be positive");
  const Eigen::MatrixXd p_hat = drop.covariance();
  Eigen::MatrixXd a = dtau * p_hat;
  a.diagonal() += prior_variance;
  const Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "prior_half_step: solve failed (diagonal condition estimate "
        << condition_estimate(a) << ")";
    throw NumericError(msg.str());
  }
  const Eigen::VectorXd shift = mean - 2.0 * prior_mean;
  const Eigen::MatrixXd centered = particles.colwise() + shift;  // D x J
  const Eigen::MatrixXd solved = llt.solve(centered);
  const Eigen::MatrixXd entropy = particles.colwise() - mean;
  particles.noalias() -= (0.5 * dtau) * (p_hat * solved);
  particles += (0.5 * dtau) * entropy;
}

Eigen::MatrixXd ips_rhs(const Eigen::MatrixXd& particles, const Design& design,
                        const Eigen::VectorXd& prior_mean,
                        const Eigen::VectorXd& prior_variance) {
  const Moments m = moments(particles);
  Eigen::MatrixXd rhs =
      0.5 * (particles.colwise() - m.mean);  // entropy term

  // Prior term: -1/2 P Pprior^-1 (theta_j + m - 2 m_prior).
  const Eigen::VectorXd shift = m.mean - 2.0 * prior_mean;
  const Eigen::MatrixXd centered = particles.colwise() + shift;
  const Eigen::MatrixXd scaled =
      prior_variance.cwiseInverse().asDiagonal() * centered;
  rhs.noalias() -= 0.5 * (m.covariance * scaled);

  if (design.psi.cols() > 0) {
    const DataStats stats = data_stats(design, particles);
    const Eigen::MatrixXd q = design.psi.transpose() * m.deviations;
    Eigen::MatrixXd inner = stats.r_bar.asDiagonal() * q;
    inner.colwise() += 2.0 * (stats.mu_y - design.targets);
    rhs.noalias() -= 0.5 * (m.covariance * (design.psi * inner));
  }
  return rhs;
}

double stopping_metric(const Eigen::MatrixXd& prev, const Eigen::MatrixXd& next,
                       bool spectral) {
  const double denom = spectral ? spectral_norm(prev) : prev.norm();
  if (denom == 0.0) return 0.0;
  const Eigen::MatrixXd diff = next - prev;
  const double num = spectral ? spectral_norm(diff) : diff.norm();
  return num / denom;
}

void SamplerConfig::validate(int dim) const {
  if (ensemble_size < 2) throw ConfigError("ensemble size must be >= 2");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw ConfigError("dropout rate must be in [0,1)");
  if (step_size <= 0.0) throw ConfigError("step size must be > 0");
  if (stop_epsilon <= 0.0) throw ConfigError("stop epsilon must be > 0");
  if (max_steps < 1) throw ConfigError("max steps must be >= 1");
  if (prior_mean.size() != dim || prior_variance.size() != dim)
    throw ConfigError("prior moments must match the parameter dimension");
  if ((prior_variance.array() <= 0.0).any())
    throw ConfigError("prior variance entries must be positive");
}

SamplerResult run_sampler(const Design& design, const SamplerConfig& config) {
  const int dim = design.dim();
  config.validate(dim);
  if (design.targets.size() != design.psi.cols())
    throw ConfigError("design targets do not match psi columns");

  Rng rng(config.seed);
  const int J = config.ensemble_size;
  Eigen::MatrixXd particles(dim, J);
  const Eigen::VectorXd sd = config.prior_variance.cwiseSqrt();
  for (int j = 0; j < J; ++j)
    for (int i = 0; i < dim; ++i)
      particles(i, j) = config.prior_mean(i) + sd(i) * rng.normal();

  SamplerResult result;
  result.log.reserve(static_cast<std::size_t>(config.max_steps));

  Moments mom = moments(particles);
  for (int s = 0; s < config.max_steps; ++s) {
    const DropoutState drop_s =
        dropout_deviations(mom, config.dropout_rate, rng);
    const Eigen::MatrixXd cov_prev = mom.covariance;
    const double trace_cov =
        drop_s.scale * drop_s.masked_deviations.squaredNorm();

    homotopy_half_step(particles, design, mom.mean, drop_s, config.step_size);

    const Moments mom_half = moments(particles);
    const DropoutState drop_half =
        config.mask_per_stage
            ? dropout_deviations(mom_half, config.dropout_rate, rng)
            : apply_dropout_mask(mom_half.deviations, drop_s.mask,
                                 config.dropout_rate);
    prior_half_step(particles, mom_half.mean, drop_half, config.prior_mean,
                    config.prior_variance, config.step_size);

    if (!particles.allFinite())
      throw NumericError("run_sampler: non-finite particle at step " +
                         std::to_string(s + 1));

    mom = moments(particles);
    const double metric =
        stopping_metric(cov_prev, mom.covariance, config.spectral_stop);
    result.steps = s + 1;
    result.final_metric = metric;
    result.log.push_back(
        StepLog{s + 1, metric, mom.mean.norm(), trace_cov});
    if (metric < config.stop_epsilon) break;
  }

  result.ensemble.particles = std::move(particles);
  result.ensemble.step = result.steps;
  return result;
}

void save_ensemble(const std::filesystem::path& path,
                   const SamplerResult& result, const SamplerConfig& config) {
  BinWriter w(path);
  w.u32(kEnsembleMagic);
  w.u32(kEnsembleVersion);
  w.u32(static_cast<std::uint32_t>(result.ensemble.particles.rows()));
  w.u32(static_cast<std::uint32_t>(result.ensemble.particles.cols()));
  w.u32(static_cast<std::uint32_t>(result.steps));
  w.f64(result.final_metric);
  w.u32(static_cast<std::uint32_t>(config.ensemble_size));
  w.f64(config.dropout_rate);
  w.f64(config.step_size);
  w.f64(config.stop_epsilon);
  w.u32(static_cast<std::uint32_t>(config.max_steps));
  w.u64(config.seed);
  w.u32(config.mask_per_stage ? 1 : 0);
  w.u32(config.spectral_stop ? 1 : 0);
  w.vector(config.prior_mean);
  w.vector(config.prior_variance);
  w.matrix(result.ensemble.particles);
  w.close();
}

SamplerResult load_ensemble(const std::filesystem::path& path,
                            SamplerConfig* config_out) {
  BinReader r(path);
  if (r.u32() != kEnsembleMagic)
    throw ParseError(path.string() + ": not an ensemble file");
  if (r.u32() != kEnsembleVersion)
    throw ParseError(path.string() + ": unsupported ensemble version");
  const auto dim = static_cast<Eigen::Index>(r.u32());
  const auto J = static_cast<Eigen::Index>(r.u32());
  SamplerResult result;
  result.steps = static_cast<int>(r.u32());
  result.final_metric = r.f64();
  SamplerConfig cfg;
  cfg.ensemble_size = static_cast<int>(r.u32());
  cfg.dropout_rate = r.f64();
  cfg.step_size = r.f64();
  cfg.stop_epsilon = r.f64();
  cfg.max_steps = static_cast<int>(r.u32());
  cfg.seed = r.u64();
  cfg.mask_per_stage = r.u32() != 0;
  cfg.spectral_stop = r.u32() != 0;
  cfg.prior_mean = r.vector(dim);
  cfg.prior_variance = r.vector(dim);
  result.ensemble.particles = r.matrix(dim, J);
  result.ensemble.step = result.steps;
  if (config_out != nullptr) *config_out = std::move(cfg);
  return result;
}

void write_convergence_log(const std::filesystem::path& path,
                           const std::vector<StepLog>& log) {
  std::ostringstream out;
  out << "step,stopping_metric,mean_norm,trace_cov\n";
  for (const StepLog& e : log)
    out << e.step << ',' << format_double(e.metric) << ','
        << format_double(e.mean_norm) << ',' << format_double(e.trace_cov)
        << '\n';
  write_text_file(path, out.str());
}

}  // namespace gestalt::sampler

// Independent reference implementations used only by tests. These stay
// deliberately naive (loops, quadrature) so they cannot share a bug with
// the library code they check.
#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace oracle {

// Adaptive Simpson on [a,b].
inline double adaptive_simpson(const std::function<double(double)>& f,
                               double a, double b, double tol = 1e-12,
                               int depth = 60) {
  struct Impl {
    const std::function<double(double)>& f;
    double run(double a, double b, double fa, double fb, double fm,
               double whole, double tol, int depth) const {
      const double m = 0.5 * (a + b);
      const double lm = 0.5 * (a + m);
      const double rm = 0.5 * (m + b);
      const double flm = f(lm);
      const double frm = f(rm);
      const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
      const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
      const double delta = left + right - whole;
      if (depth <= 0 || std::fabs(delta) <= 15.0 * tol)
        return left + right + delta / 15.0;
      return run(a, m, fa, fm, flm, left, 0.5 * tol, depth - 1) +
             run(m, b, fm, fb, frm, right, 0.5 * tol, depth - 1);
    }
  };
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return Impl{f}.run(a, b, fa, fb, fm, whole, tol, depth);
}

inline double student_t_pdf(double x, double nu) {
  const double c = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
                   0.5 * std::log(nu * M_PI);
  return std::exp(c - 0.5 * (nu + 1.0) * std::log1p(x * x / nu));
}

// Two-sided tail by integrating the density over [0, |t|].
inline double t_two_sided(double t, int df) {
  const double at = std::fabs(t);
  if (at == 0.0) return 1.0;
  const double nu = static_cast<double>(df);
  const double inner = adaptive_simpson(
      [nu](double x) { return student_t_pdf(x, nu); }, 0.0, at, 1e-13);
  return std::max(0.0, 1.0 - 2.0 * inner);
}

inline double naive_mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double naive_sd(std::span<const double> v) {
  const double m = naive_mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

inline double naive_cross_entropy(const Eigen::MatrixXd& y,
                                  const Eigen::MatrixXd& t,
                                  double floor = 1e-12) {
  double loss = 0.0;
  for (Eigen::Index j = 0; j < y.cols(); ++j)
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      double p = y(i, j);
      if (p < floor) p = floor;
      if (p > 1.0 - floor) p = 1.0 - floor;
      loss -= t(i, j) * std::log(p) + (1.0 - t(i, j)) * std::log(1.0 - p);
    }
  return loss;
}

struct GaussianSummary {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

// Dense grid quadrature over the 2-D Bayesian logistic posterior
//   pi(theta) ~ exp(-l(theta)) N(theta; m0, diag(v0)).
inline GaussianSummary logistic_posterior_2d(const Eigen::MatrixXd& psi,
                                             const Eigen::VectorXd& targets,
                                             const Eigen::Vector2d& m0,
                                             const Eigen::Vector2d& v0,
                                             int grid = 401,
                                             double half_width = 8.0) {
  if (psi.rows() != 2) throw std::invalid_argument("need 2-D design");
  const Eigen::Vector2d sd = v0.cwiseSqrt();
  const Eigen::Vector2d lo = m0 - half_width * sd;
  const Eigen::Vector2d hi = m0 + half_width * sd;
  const double dx = (hi(0) - lo(0)) / (grid - 1);
  const double dy = (hi(1) - lo(1)) / (grid - 1);

  auto log_post = [&](double a, double b) {
    double lp = -0.5 * ((a - m0(0)) * (a - m0(0)) / v0(0) +
                        (b - m0(1)) * (b - m0(1)) / v0(1));
    for (Eigen::Index n = 0; n < psi.cols(); ++n) {
      const double z = a * psi(0, n) + b * psi(1, n);
      // log sigma(z) = -log(1+exp(-z)); log(1-sigma(z)) = -z - log(1+exp(-z))
      const double log_sig = z >= 0.0 ? -std::log1p(std::exp(-z))
                                      : z - std::log1p(std::exp(z));
      lp += targets(n) > 0.5 ? log_sig : log_sig - z;
    }
    return lp;
  };

  // Stabilize with the max log-density.
  double max_lp = -1e300;
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j)
      max_lp = std::max(max_lp, log_post(lo(0) + i * dx, lo(1) + j * dy));

  double z = 0.0;
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d second = Eigen::Matrix2d::Zero();
  for (int i = 0; i < grid; ++i) {
    const double a = lo(0) + i * dx;
    for (int j = 0; j < grid; ++j) {
      const double b = lo(1) + j * dy;
      const double w = std::exp(log_post(a, b) - max_lp);
      z += w;
      mean(0) += w * a;
      mean(1) += w * b;
      second(0, 0) += w * a * a;
      second(0, 1) += w * a * b;
      second(1, 1) += w * b * b;
    }
  }
  mean /= z;
  second /= z;
  second(1, 0) = second(0, 1);
  GaussianSummary out;
  out.mean = mean;
  Eigen::Matrix2d cov = second - mean * mean.transpose();
  out.covariance = cov;
  return out;
}

// Ensemble predictive under the same grid posterior.
inline double logistic_predictive_2d(const Eigen::MatrixXd& psi,
                                     const Eigen::VectorXd& targets,
                                     const Eigen::Vector2d& m0,
                                     const Eigen::Vector2d& v0,
                                     const Eigen::Vector2d& query,
                                     int grid = 401, double half_width = 8.0) {
  const Eigen::Vector2d sd = v0.cwiseSqrt();
  const Eigen::Vector2d lo = m0 - half_width * sd;
  const Eigen::Vector2d hi = m0 + half_width * sd;
  const double dx = (hi(0) - lo(0)) / (grid - 1);
  const double dy = (hi(1) - lo(1)) / (grid - 1);
  auto log_post = [&](double a, double b) {
    double lp = -0.5 * ((a - m0(0)) * (a - m0(0)) / v0(0) +
                        (b - m0(1)) * (b - m0(1)) / v0(1));
    for (Eigen::Index n = 0; n < psi.cols(); ++n) {
      const double z = a * psi(0, n) + b * psi(1, n);
      const double log_sig = z >= 0.0 ? -std::log1p(std::exp(-z))
                                      : z - std::log1p(std::exp(z));
      lp += targets(n) > 0.5 ? log_sig : log_sig - z;
    }
    return lp;
  };
  double max_lp = -1e300;
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j)
      max_lp = std::max(max_lp, log_post(lo(0) + i * dx, lo(1) + j * dy));
  double z = 0.0;
  double acc = 0.0;
  for (int i = 0; i < grid; ++i) {
    const double a = lo(0) + i * dx;
    for (int j = 0; j < grid; ++j) {
      const double b = lo(1) + j * dy;
      const double w = std::exp(log_post(a, b) - max_lp);
      const double logit = a * query(0) + b * query(1);
      z += w;
      acc += w / (1.0 + std::exp(-logit));
    }
  }
  return acc / z;
}

}  // namespace oracle

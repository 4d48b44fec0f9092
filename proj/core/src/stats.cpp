#include "gestalt/stats.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "gestalt/errors.hpp"

namespace gestalt::stats {

namespace {

// Continued fraction for the incomplete beta function (modified Lentz).
double beta_cf(double a, double b, double x) {
  constexpr double kEps = 1e-12;
  constexpr int kMaxIter = 300;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw NumericError("incomplete beta continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (x < 0.0 || x > 1.0)
    throw NumericError("incomplete_beta: x outside [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                       a * std::log(x) + b * std::log(1.0 - x);
  const double bt = std::exp(ln_bt);
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * beta_cf(a, b, x) / a;
  return 1.0 - bt * beta_cf(b, a, 1.0 - x) / b;
}

double t_cdf_complement(double t, int df) {
  if (df < 1) throw StatError("t_cdf_complement: df must be >= 1");
  if (t == 0.0) return 1.0;
  const double nu = static_cast<double>(df);
  const double x = nu / (nu + t * t);
  double p = incomplete_beta(0.5 * nu, 0.5, x);
  if (p < 0.0) p = 0.0;
  if (p > 1.0) p = 1.0;
  return p;
}

Summary describe(std::span<const double> values) {
  if (values.empty()) throw StatError("describe: empty sample");
  Summary s;
  s.n = values.size();
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n >= 2) {
    double ss = 0.0;
    for (double v : values) {
      const double d = v - s.mean;
      ss += d * d;
    }
    s.sd = std::sqrt(ss / static_cast<double>(s.n - 1));
    s.stderr_ = s.sd / std::sqrt(static_cast<double>(s.n));
    s.sd_defined = true;
  }
  return s;
}

TestResult one_sample_t(std::span<const double> values, double null_mean) {
  if (values.size() < 2) throw StatError("one_sample_t: need n >= 2");
  const Summary s = describe(values);
  if (s.sd == 0.0)
    throw StatError("one_sample_t: zero sample variance");
  TestResult r;
  r.t = (s.mean - null_mean) / s.stderr_;
  r.df = static_cast<int>(s.n) - 1;
  r.p_two_sided = t_cdf_complement(r.t, r.df);
  return r;
}

TestResult paired_t(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw StatError("paired_t: size mismatch");
  if (a.size() < 2) throw StatError("paired_t: need n >= 2");
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
  return one_sample_t(diff, 0.0);
}

}  // namespace gestalt::stats

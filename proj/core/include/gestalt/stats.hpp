#pragma once

#include <span>
#include <string>

namespace gestalt::stats {

struct Summary {
  double mean = 0.0;
  double sd = 0.0;       // unbiased, divisor n-1; valid only if sd_defined
  double stderr_ = 0.0;  // sd / sqrt(n)
  std::size_t n = 0;
  bool sd_defined = false;
};

struct TestResult {
  double t = 0.0;
  int df = 0;
  double p_two_sided = 1.0;
};

Summary describe(std::span<const double> values);

// Two-sided Student-t tail probability, p = I_{df/(df+t^2)}(df/2, 1/2),
// evaluated through the regularized incomplete beta function.
double t_cdf_complement(double t, int df);

// t = (mean - null_mean) / (sd / sqrt(n)), df = n-1. Throws StatError on
// n < 2 or zero sample variance so degenerate cells surface explicitly.
TestResult one_sample_t(std::span<const double> values, double null_mean = 0.0);

// one_sample_t applied to elementwise differences a - b.
TestResult paired_t(std::span<const double> a, std::span<const double> b);

// Regularized incomplete beta I_x(a,b) by continued fraction (modified
// Lentz), convergence tolerance 1e-12, 300 iteration cap.
double incomplete_beta(double a, double b, double x);

}  // namespace gestalt::stats

#pragma once

#include <span>
#include <vector>

namespace hypermeta {

double mean(std::span<const double> xs);
// Unbiased sample variance; 0 for fewer than two values.
double sample_variance(std::span<const double> xs);
// Standard error of the mean; 0 for fewer than two values.
double standard_error(std::span<const double> xs);

struct TTestResult {
  double t = 0.0;
  double dof = 0.0;
  double p = 1.0;  // two-tailed
};

// Pooled-variance two-sample Student t-test.
TTestResult two_sample_ttest(std::span<const double> a, std::span<const double> b);

}  // namespace hypermeta

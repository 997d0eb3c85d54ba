#include "hypermeta/stats.hpp"

#include <cmath>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

namespace hypermeta {

double mean(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("mean of an empty sample");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_variance(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

double standard_error(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  return std::sqrt(sample_variance(xs) / static_cast<double>(xs.size()));
}

TTestResult two_sample_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("t-test needs at least two values per sample");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  TTestResult r;
  r.dof = na + nb - 2.0;
  const double pooled = ((na - 1.0) * sample_variance(a) + (nb - 1.0) * sample_variance(b)) / r.dof;
  const double diff = mean(a) - mean(b);
  const double se = std::sqrt(pooled * (1.0 / na + 1.0 / nb));
  if (se == 0.0) {
    r.t = diff == 0.0 ? 0.0 : std::copysign(INFINITY, diff);
    r.p = diff == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.t = diff / se;
  const boost::math::students_t dist(r.dof);
  r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t)));
  return r;
}

}  // namespace hypermeta

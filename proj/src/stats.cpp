#include "mailconv/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mailconv/error.hpp"

namespace mailconv::stats {

namespace {

std::vector<double> sorted(std::span<const double> xs) {
  std::vector<double> v(xs.begin(), xs.end());
  std::sort(v.begin(), v.end());
  return v;
}

double quantile_sorted(const std::vector<double>& v, double q) {
  if (v.empty()) throw DomainError("quantile of empty sample");
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double mean_sorted(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_sorted(const std::vector<double>& v, double m) {
  if (v.size() < 2) return 0.0;
  double ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

double mean(std::span<const double> xs) {
  if (xs.empty()) throw DomainError("mean of empty sample");
  return mean_sorted(sorted(xs));
}

double median(std::span<const double> xs) { return quantile_sorted(sorted(xs), 0.5); }

double quantile(std::span<const double> xs, double q) { return quantile_sorted(sorted(xs), q); }

double sample_sd(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  auto v = sorted(xs);
  return sd_sorted(v, mean_sorted(v));
}

double ci95_half_width(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  return 1.96 * sample_sd(xs) / std::sqrt(static_cast<double>(xs.size()));
}

Summary summarize(std::span<const double> xs) {
  if (xs.empty()) throw DomainError("summary of empty sample");
  auto v = sorted(xs);
  Summary s;
  s.n = v.size();
  s.mean = mean_sorted(v);
  s.median = quantile_sorted(v, 0.5);
  s.sd = sd_sorted(v, s.mean);
  s.p25 = quantile_sorted(v, 0.25);
  s.p75 = quantile_sorted(v, 0.75);
  s.ci_half = v.size() < 2 ? 0.0 : 1.96 * s.sd / std::sqrt(static_cast<double>(v.size()));
  return s;
}

}  // namespace mailconv::stats

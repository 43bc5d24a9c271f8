#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mailconv::stats {

// All functions are order-independent: inputs are sorted before summation so
// partial aggregates merged in any order give bit-identical results.

double mean(std::span<const double> xs);
double median(std::span<const double> xs);

/// Linear-interpolation quantile (Hyndman-Fan type 7), q in [0, 1].
double quantile(std::span<const double> xs, double q);

/// Sample standard deviation (n - 1 denominator); 0 when n < 2.
double sample_sd(std::span<const double> xs);

/// Half-width of the normal-approximation 95% interval of the mean.
double ci95_half_width(std::span<const double> xs);

struct Summary {
  std::size_t n = 0;
  double mean = 0;
  double median = 0;
  double sd = 0;
  double p25 = 0;
  double p75 = 0;
  double ci_half = 0;
};

/// Throws DomainError on empty input.
Summary summarize(std::span<const double> xs);

}  // namespace mailconv::stats

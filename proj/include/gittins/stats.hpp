#pragma once

#include <cmath>
#include <vector>

namespace gittins {

/// Point estimate with a 95% Student-t confidence half-width.
struct Estimate {
    double mean = 0.0;
    double ci = 0.0;
};

double t_quantile_975(int dof);

/// Batch means of per-batch values.
Estimate batch_mean(const std::vector<double>& values);

/// sum(num) / sum(den) with the usual ratio-estimator variance over batches.
Estimate ratio_estimate(const std::vector<double>& num, const std::vector<double>& den);

/// Half-width for a difference of two independent estimates.
inline double combined_ci(double a, double b) { return std::sqrt(a * a + b * b); }

}  // namespace gittins

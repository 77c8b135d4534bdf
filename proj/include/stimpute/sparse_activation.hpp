#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace stimpute {

// Result of projecting a score vector onto the probability simplex.
struct SparseDistribution {
  std::vector<double> p;            // sums to 1, entries >= 0
  std::vector<std::size_t> support; // indices with p > 0
  double tau = 0.0;                 // truncation threshold
};

// Euclidean projection of scores onto the simplex: sort descending, find the
// largest k with 1 + k*a_(k) > sum_{j<=k} a_(j), then p_i = max(a_i - tau, 0)
// with tau = (sum_{j<=k} a_(j) - 1) / k. Entries at or below the mask
// sentinel are excluded from the support before projecting.
SparseDistribution sparsemax(std::span<const double> scores);

// Sparsegen-lin with coefficient lambda < 1, computed as
// sparsemax(scores / (1 - lambda)). lambda = 0 is exactly sparsemax.
SparseDistribution sparsegen_lin(std::span<const double> scores, double lambda);

// Vector-Jacobian product of sparsegen_lin at a forward result: on the
// support, upstream minus the support mean, scaled by 1/(1-lambda); zero off
// the support.
std::vector<double> sparsemax_backward(const SparseDistribution& dist,
                                       std::span<const double> upstream,
                                       double lambda = 0.0);

// Test oracle: minimizes ||p - a||^2 - lambda*||p||^2 over the simplex by
// enumerating all candidate supports and solving each one's stationarity
// condition in closed form. Refuses n > 8.
std::vector<double> brute_force_simplex_projection(std::span<const double> scores,
                                                   double lambda);

} // namespace stimpute

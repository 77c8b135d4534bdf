#include "stimpute/sparse_activation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "stimpute/errors.hpp"
#include "stimpute/tensor.hpp"

namespace stimpute {

namespace {

// Indices that take part in the projection: everything above the mask
// sentinel. NaN anywhere is a contract violation.
std::vector<std::size_t> active_indices(std::span<const double> scores) {
  std::vector<std::size_t> active;
  active.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i]))
      throw ContractError("sparsemax: NaN score at index " + std::to_string(i));
    if (scores[i] > kMaskedScore / 2) active.push_back(i);
  }
  return active;
}

} // namespace

SparseDistribution sparsemax(std::span<const double> scores) {
  if (scores.empty()) throw ContractError("sparsemax: empty score vector");
  const auto active = active_indices(scores);
  if (active.empty())
    throw ContractError("sparsemax: all entries masked (degenerate row)");

  std::vector<double> z;
  z.reserve(active.size());
  for (std::size_t i : active) z.push_back(scores[i]);
  std::stable_sort(z.begin(), z.end(), std::greater<double>());

  double cumsum = 0.0;
  double tau = 0.0;
  std::size_t k = 0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    cumsum += z[j];
    const double kk = static_cast<double>(j + 1);
    if (1.0 + kk * z[j] > cumsum) {
      k = j + 1;
      tau = (cumsum - 1.0) / kk;
    } else {
      cumsum -= z[j]; // entries past k never enter the support
      break;
    }
  }

  SparseDistribution dist;
  dist.tau = tau;
  dist.p.assign(scores.size(), 0.0);
  for (std::size_t i : active) {
    const double v = scores[i] - tau;
    if (v > 0.0) {
      dist.p[i] = v;
      dist.support.push_back(i);
    }
  }
  (void)k;
  return dist;
}

SparseDistribution sparsegen_lin(std::span<const double> scores, double lambda) {
  if (lambda >= 1.0)
    throw ContractError("sparsegen_lin: lambda must be < 1, got " +
                        std::to_string(lambda));
  if (lambda == 0.0) return sparsemax(scores);
  std::vector<double> scaled(scores.size());
  const double inv = 1.0 / (1.0 - lambda);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    // keep masked entries at the sentinel rather than scaling them
    scaled[i] = scores[i] > kMaskedScore / 2 ? scores[i] * inv : scores[i];
  }
  return sparsemax(scaled);
}

std::vector<double> sparsemax_backward(const SparseDistribution& dist,
                                       std::span<const double> upstream,
                                       double lambda) {
  if (dist.support.empty())
    throw ContractError("sparsemax_backward: empty support");
  if (upstream.size() != dist.p.size())
    throw ContractError("sparsemax_backward: upstream size mismatch");

  double mean = 0.0;
  for (std::size_t i : dist.support) mean += upstream[i];
  mean /= static_cast<double>(dist.support.size());

  const double inv = 1.0 / (1.0 - lambda);
  std::vector<double> grad(dist.p.size(), 0.0);
  for (std::size_t i : dist.support) grad[i] = (upstream[i] - mean) * inv;
  return grad;
}

std::vector<double> brute_force_simplex_projection(std::span<const double> scores,
                                                   double lambda) {
  const std::size_t n = scores.size();
  if (n == 0 || n > 8)
    throw ContractError("brute_force_simplex_projection: oracle limited to 1 <= n <= 8");
  if (lambda >= 1.0)
    throw ContractError("brute_force_simplex_projection: lambda must be < 1");

  double best_obj = std::numeric_limits<double>::infinity();
  std::vector<double> best_p(n, 0.0);

  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    // stationarity on support S: p_i = (a_i + nu) / (1 - lambda),
    // nu chosen so the support sums to 1
    std::vector<std::size_t> support;
    double sum_a = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) {
        support.push_back(i);
        sum_a += scores[i];
      }
    }
    const double nu = ((1.0 - lambda) - sum_a) / static_cast<double>(support.size());

    std::vector<double> p(n, 0.0);
    bool feasible = true;
    for (std::size_t i : support) {
      p[i] = (scores[i] + nu) / (1.0 - lambda);
      if (p[i] <= 0.0) {
        feasible = false;
        break;
      }
    }
    if (!feasible) continue;

    double obj = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = p[i] - scores[i];
      obj += d * d - lambda * p[i] * p[i];
    }
    if (obj < best_obj) {
      best_obj = obj;
      best_p = std::move(p);
    }
  }
  return best_p;
}

} // namespace stimpute

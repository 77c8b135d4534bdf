#include "stimpute/missingness.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <random>

#include "stimpute/errors.hpp"

namespace stimpute {

MissingnessPattern pattern_from_name(const std::string& name) {
  if (name == "mcar") return MissingnessPattern::kMcar;
  if (name == "fixed-block") return MissingnessPattern::kFixedBlock;
  if (name == "variable-block") return MissingnessPattern::kVariableBlock;
  throw DataError("unknown missingness pattern '" + name + "'");
}

std::string pattern_name(MissingnessPattern pattern) {
  switch (pattern) {
    case MissingnessPattern::kMcar: return "mcar";
    case MissingnessPattern::kFixedBlock: return "fixed-block";
    case MissingnessPattern::kVariableBlock: return "variable-block";
  }
  return "mcar";
}

namespace {

std::size_t observed_count(const Series& s) {
  std::size_t count = 0;
  for (double v : s.natural_missing.values())
    if (v == 0.0) ++count;
  return count;
}

// Builds the corrupted copy once the holdout mask is decided.
Corruption finish(const Series& s, Tensor holdout) {
  const std::size_t n = s.values.rows(), f = s.values.cols();
  Corruption result;
  result.corrupted.values = Tensor(n, f, 0.0);
  result.corrupted.natural_missing = Tensor(n, f, 0.0);
  result.corrupted.label = s.label;

  std::size_t held = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < f; ++j) {
      const bool nat = s.natural_missing(i, j) != 0.0;
      const bool out = holdout(i, j) != 0.0;
      if (out) ++held;
      if (nat || out) {
        result.corrupted.natural_missing.at(i, j) = 1.0;
      } else {
        result.corrupted.values.at(i, j) = s.values(i, j);
      }
    }
  }
  refresh_observed_mask(result.corrupted);
  const std::size_t obs = observed_count(s);
  result.achieved_rate = obs == 0 ? 0.0 : static_cast<double>(held) / obs;
  result.holdout_mask = std::move(holdout);
  return result;
}

std::size_t rounded_fraction(std::size_t n, double fraction) {
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

Corruption apply_blocks(const Series& s, double rate, std::uint64_t seed,
                        bool variable) {
  if (rate <= 0.0 || rate >= 1.0)
    throw ContractError("block missingness: rate must be in (0, 1)");
  const std::size_t n = s.values.rows(), f = s.values.cols();
  if (n < 10)
    throw ContractError("block missingness: series length must be >= 10");

  const std::size_t fixed_len = std::max<std::size_t>(1, rounded_fraction(n, 0.10));
  const std::size_t lo = std::max<std::size_t>(1, rounded_fraction(n, 0.05));
  const std::size_t hi = std::max(lo, rounded_fraction(n, 0.15));
  const std::size_t target = std::max<std::size_t>(1, rounded_fraction(n, rate));

  std::mt19937_64 rng(seed);
  std::vector<bool> held(n, false);
  std::size_t held_steps = 0;
  std::size_t attempts = 0;
  const std::size_t max_attempts = 10 * n;

  while (held_steps < target && attempts < max_attempts) {
    ++attempts;
    std::size_t len = fixed_len;
    if (variable) {
      std::uniform_int_distribution<std::size_t> len_dist(lo, hi);
      len = len_dist(rng);
    }
    len = std::min(len, target - held_steps); // truncate the final block
    if (len > n) len = n;
    std::uniform_int_distribution<std::size_t> start_dist(0, n - len);
    const std::size_t start = start_dist(rng);

    bool overlap = false;
    for (std::size_t t = start; t < start + len; ++t)
      if (held[t]) overlap = true;
    if (overlap) continue;

    for (std::size_t t = start; t < start + len; ++t) held[t] = true;
    held_steps += len;
  }
  if (held_steps < target)
    std::cerr << "block missingness: placement saturated at "
              << static_cast<double>(held_steps) / static_cast<double>(n)
              << " of target " << rate << "\n";

  // whole timesteps drop across all channels; only observed entries count
  Tensor holdout(n, f, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    if (!held[t]) continue;
    for (std::size_t j = 0; j < f; ++j)
      if (s.natural_missing(t, j) == 0.0) holdout.at(t, j) = 1.0;
  }
  return finish(s, std::move(holdout));
}

} // namespace

Corruption apply_mcar(const Series& s, double rate, std::uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0)
    throw ContractError("apply_mcar: rate must be in [0, 1)");
  const std::size_t n = s.values.rows(), f = s.values.cols();
  if (observed_count(s) < 2)
    throw ContractError("apply_mcar: series needs >= 2 observed entries");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Tensor holdout(n, f, 0.0);
  std::size_t surviving = 0;
  std::size_t last_i = 0, last_j = 0;
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < f; ++j) {
      if (s.natural_missing(i, j) != 0.0) continue;
      if (rate > 0.0 && unif(rng) < rate) {
        holdout.at(i, j) = 1.0;
        last_i = i;
        last_j = j;
        any = true;
      } else {
        ++surviving;
      }
    }
  }
  if (surviving == 0 && any) {
    std::cerr << "apply_mcar: holdout would remove every observed entry; "
                 "keeping one\n";
    holdout.at(last_i, last_j) = 0.0;
  }
  return finish(s, std::move(holdout));
}

Corruption apply_fixed_blocks(const Series& s, double rate, std::uint64_t seed) {
  return apply_blocks(s, rate, seed, /*variable=*/false);
}

Corruption apply_variable_blocks(const Series& s, double rate, std::uint64_t seed) {
  return apply_blocks(s, rate, seed, /*variable=*/true);
}

Corruption apply_missingness(const Series& s, const MissingnessSpec& spec) {
  switch (spec.pattern) {
    case MissingnessPattern::kMcar:
      return apply_mcar(s, spec.rate, spec.seed);
    case MissingnessPattern::kFixedBlock:
      return apply_fixed_blocks(s, spec.rate, spec.seed);
    case MissingnessPattern::kVariableBlock:
      return apply_variable_blocks(s, spec.rate, spec.seed);
  }
  throw ContractError("apply_missingness: unreachable");
}

} // namespace stimpute

#pragma once

#include <cstdint>
#include <string>

#include "stimpute/batch.hpp"

namespace stimpute {

enum class MissingnessPattern { kMcar, kFixedBlock, kVariableBlock };

struct MissingnessSpec {
  MissingnessPattern pattern = MissingnessPattern::kMcar;
  double rate = 0.5; // target held-out fraction, in (0, 1)
  std::uint64_t seed = 0;
};

MissingnessPattern pattern_from_name(const std::string& name);
std::string pattern_name(MissingnessPattern pattern);

// Result of holding out values from an observed series for evaluation. The
// corrupted copy has the held-out entries flagged as missing and zeroed; the
// holdout mask records where the original series keeps the ground truth.
struct Corruption {
  Series corrupted;
  Tensor holdout_mask;  // [n x f], 1 at held-out entries
  double achieved_rate = 0.0; // held-out entries / originally observed entries
};

// Each originally-observed entry is independently held out with the given
// probability, per channel. Caps the mask so at least one entry survives.
Corruption apply_mcar(const Series& s, double rate, std::uint64_t seed);

// Non-overlapping contiguous blocks of round(0.10 * n) timesteps, dropped
// across all channels, placed at uniform random starts until the target
// fraction of timesteps is held out; the final block is truncated to hit the
// target. Saturation stops early with the achieved rate reported.
Corruption apply_fixed_blocks(const Series& s, double rate, std::uint64_t seed);

// Same placement, but each block's length is drawn uniformly from
// [round(0.05 * n), round(0.15 * n)].
Corruption apply_variable_blocks(const Series& s, double rate, std::uint64_t seed);

Corruption apply_missingness(const Series& s, const MissingnessSpec& spec);

} // namespace stimpute

#pragma once

#include <optional>
#include <vector>

#include "stimpute/tensor.hpp"

namespace stimpute {

// One time series with its missingness bookkeeping. All masks are 0/1
// tensors of the same [n x f] shape as the values:
//   natural_missing — entries absent in the original data
//   mim_mask        — observed entries artificially removed for training
//   observed_mask   — entries that are neither missing nor artificially
//                     removed; the three masks partition every entry
struct Series {
  Tensor values;          // ground truth, 0 at naturally missing positions
  Tensor natural_missing;
  Tensor mim_mask;
  Tensor observed_mask;
  std::optional<double> label; // class index or regression target

  std::size_t length() const { return values.rows(); }
  std::size_t features() const { return values.cols(); }
};

struct TimeSeriesBatch {
  std::vector<Series> series;
};

// Rebuilds observed_mask as NOT(natural_missing) AND NOT(mim_mask) and
// checks that mim_mask never overlaps natural_missing.
void refresh_observed_mask(Series& s);

} // namespace stimpute

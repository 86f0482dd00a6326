#pragma once

#include <cstddef>
#include <span>

namespace leitsatz {

/// min/mean/max/std summary of a sample. `std` uses the n-1 denominator and
/// is 0 for a single observation.
struct DescriptiveStats {
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
  double std = 0.0;
  std::size_t count = 0;
};

/// Throws ConfigError on an empty sample.
DescriptiveStats describe(std::span<const double> values);

}  // namespace leitsatz

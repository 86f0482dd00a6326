#include "leitsatz/stats.hpp"

#include <algorithm>
#include <cmath>

#include "leitsatz/error.hpp"

namespace leitsatz {

DescriptiveStats describe(std::span<const double> values) {
  if (values.empty()) throw ConfigError("cannot describe an empty sample");
  DescriptiveStats s;
  s.count = values.size();
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(s.count);
  if (s.count > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.count - 1));
  }
  // Keep min <= mean <= max under rounding.
  s.mean = std::clamp(s.mean, s.min, s.max);
  return s;
}

}  // namespace leitsatz

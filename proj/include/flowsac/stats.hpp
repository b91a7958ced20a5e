#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace flowsac {

struct MeanStderr {
  double mean = 0.0;
  double std_err = 0.0;
};

// Sample mean and standard error (sample std / sqrt(n)); needs n >= 2.
inline MeanStderr mean_stderr(const std::vector<double>& xs) {
  const std::size_t n = xs.size();
  if (n < 2)
    throw std::invalid_argument("mean_stderr: need at least two samples");
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double var = ss / static_cast<double>(n - 1);
  return {mean, std::sqrt(var / static_cast<double>(n))};
}

}  // namespace flowsac

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "drldo/errors.hpp"

namespace drldo {

/// Pearson product-moment correlation of two series, i.e. the off-diagonal
/// entry of their 2x2 correlation matrix R with R_ij = C_ij / sqrt(C_ii C_jj).
inline double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw ParameterError("pearson: length mismatch");
  if (a.size() < 2)
    throw ParameterError("pearson: need at least two elements");
  const auto n = static_cast<double>(a.size());
  double mean_a = 0.0, mean_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    mean_a += a[i];
    mean_b += b[i];
  }
  mean_a /= n;
  mean_b /= n;
  double c_ab = 0.0, c_aa = 0.0, c_bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - mean_a;
    const double db = b[i] - mean_b;
    c_ab += da * db;
    c_aa += da * da;
    c_bb += db * db;
  }
  if (c_aa == 0.0 || c_bb == 0.0)
    throw NumericError("pearson: zero-variance input");
  return c_ab / std::sqrt(c_aa * c_bb);
}

/// Trailing moving average with a partial window at the start: entry i is the
/// mean of the last min(i+1, window) values. Output length equals input
/// length, so series stay aligned with their episode index.
inline std::vector<double> moving_average(std::span<const double> series,
                                          std::size_t window) {
  if (window == 0) throw ParameterError("moving_average: window must be > 0");
  std::vector<double> out(series.size());
  double running = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    running += series[i];
    if (i >= window) running -= series[i - window];
    const auto span_len = static_cast<double>(std::min(i + 1, window));
    out[i] = running / span_len;
  }
  return out;
}

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
};

/// Fixed-width histogram over [lo, hi]. Values outside the range are clamped
/// into the edge bins so total mass is conserved; values equal to hi land in
/// the top bin.
inline std::vector<HistogramBin> histogram(std::span<const double> values,
                                           std::size_t bins, double lo,
                                           double hi) {
  if (bins == 0) throw ParameterError("histogram: bins must be > 0");
  if (!(lo < hi)) throw ParameterError("histogram: lo must be < hi");
  std::vector<HistogramBin> out(bins);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t i = 0; i < bins; ++i) {
    out[i].lo = lo + width * static_cast<double>(i);
    out[i].hi = lo + width * static_cast<double>(i + 1);
  }
  out.back().hi = hi;
  for (double v : values) {
    auto idx = static_cast<long>(std::floor((v - lo) / width));
    if (idx < 0) idx = 0;
    if (idx >= static_cast<long>(bins)) idx = static_cast<long>(bins) - 1;
    ++out[static_cast<std::size_t>(idx)].count;
  }
  return out;
}

}  // namespace drldo

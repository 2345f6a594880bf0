#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace semcoh {

/// Pairwise (cascade) summation with a fixed split order, so the result does
/// not depend on how callers schedule work.
inline double pairwise_sum(std::span<const double> values) {
  constexpr std::size_t kBlock = 8;
  if (values.size() <= kBlock) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

/// Natural-log entropy of a histogram of counts summing to `total`.
template <typename Counts>
double entropy_from_counts(const Counts& counts, double total) {
  std::vector<double> terms;
  for (const auto& c : counts) {
    const double count = static_cast<double>(c);
    if (count <= 0.0) continue;
    const double p = count / total;
    terms.push_back(-p * std::log(p));
  }
  return pairwise_sum(terms);
}

/// ln(k!) for k = 0..n.
inline std::vector<double> log_factorials(std::size_t n) {
  std::vector<double> table(n + 1);
  for (std::size_t k = 0; k <= n; ++k) table[k] = std::lgamma(static_cast<double>(k) + 1.0);
  return table;
}

}  // namespace semcoh

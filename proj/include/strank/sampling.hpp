#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "strank/rng.hpp"

namespace strank {

// Gamma(shape, scale) via Marsaglia-Tsang squeeze; shape < 1 handled by the
// Gamma(shape+1) boost with U^(1/shape).
inline double gamma_sample(double shape, double scale, RngStream& rng) {
  if (shape <= 0.0 || scale <= 0.0)
    throw std::domain_error("gamma_sample: shape and scale must be > 0");
  if (shape < 1.0) {
    const double u = 1.0 - rng.next_double();  // (0,1]
    return gamma_sample(shape + 1.0, scale, rng) *
           std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = 1.0 - rng.next_double();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v * scale;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v)))
      return d * v * scale;
  }
}

// Poisson count via exponential inter-arrival sums in log space.
// O(lambda) draws; fine for the count scales used here.
inline long long poisson_sample(double lambda, RngStream& rng) {
  if (lambda < 0.0 || !std::isfinite(lambda))
    throw std::domain_error("poisson_sample: lambda must be finite and >= 0");
  if (lambda == 0.0) return 0;
  long long k = 0;
  double sum = 0.0;
  for (;;) {
    sum += -std::log(1.0 - rng.next_double());
    if (sum > lambda) return k;
    ++k;
  }
}

// Negative binomial with expectation `mean` and variance mean + mean^2/r,
// drawn as the gamma-Poisson mixture: lambda ~ Gamma(r, mean/r), then
// count ~ Poisson(lambda).
inline long long nb_sample(double mean, double dispersion, RngStream& rng) {
  if (mean < 0.0) throw std::domain_error("nb_sample: mean must be >= 0");
  if (dispersion <= 0.0)
    throw std::domain_error("nb_sample: dispersion must be > 0");
  if (mean == 0.0) return 0;
  const double lambda = gamma_sample(dispersion, mean / dispersion, rng);
  return poisson_sample(lambda, rng);
}

// Binomial(n, p) as a Bernoulli sum. Counts in this project are small, so
// the O(n) cost is irrelevant.
inline long long binomial_sample(long long n, double p, RngStream& rng) {
  if (n < 0) throw std::domain_error("binomial_sample: n must be >= 0");
  if (p < 0.0 || p > 1.0 || !std::isfinite(p))
    throw std::domain_error("binomial_sample: p must be in [0,1]");
  if (p == 0.0) return 0;
  if (p == 1.0) return n;
  long long k = 0;
  for (long long i = 0; i < n; ++i)
    if (rng.next_double() < p) ++k;
  return k;
}

namespace detail {

inline std::vector<std::vector<std::size_t>> tissue_blocks(
    const std::vector<int>& tissue_ids) {
  int max_id = -1;
  for (int t : tissue_ids) max_id = std::max(max_id, t);
  std::vector<std::vector<std::size_t>> blocks(
      static_cast<std::size_t>(max_id + 1));
  for (std::size_t i = 0; i < tissue_ids.size(); ++i) {
    if (tissue_ids[i] < 0)
      throw std::invalid_argument("tissue ids must be non-negative");
    blocks[static_cast<std::size_t>(tissue_ids[i])].push_back(i);
  }
  return blocks;
}

inline void fisher_yates(std::vector<std::size_t>& v, RngStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace detail

// Uniformly random permutation that only permutes indices within each tissue
// block. Fixed points are allowed (derangement not enforced).
inline std::vector<std::size_t> grouped_permutation(
    const std::vector<int>& tissue_ids, RngStream& rng) {
  auto blocks = detail::tissue_blocks(tissue_ids);
  std::vector<std::size_t> pi(tissue_ids.size());
  for (std::size_t t = 0; t < blocks.size(); ++t) {
    auto& block = blocks[t];
    if (block.empty()) continue;
    if (block.size() < 2)
      throw std::invalid_argument(
          "grouped_permutation: tissue " + std::to_string(t) +
          " has a single sample; pairing needs a partner");
    std::vector<std::size_t> image = block;
    detail::fisher_yates(image, rng);
    for (std::size_t i = 0; i < block.size(); ++i) pi[block[i]] = image[i];
  }
  return pi;
}

// Variant used for pair construction: fixed points are rejected per block so
// a sample never pairs with itself. Each affected block is reshuffled whole,
// keeping the result uniform over its fixed-point-free permutations.
inline std::vector<std::size_t> grouped_permutation_no_fixed(
    const std::vector<int>& tissue_ids, RngStream& rng, int max_retries = 100) {
  auto blocks = detail::tissue_blocks(tissue_ids);
  std::vector<std::size_t> pi(tissue_ids.size());
  for (std::size_t t = 0; t < blocks.size(); ++t) {
    auto& block = blocks[t];
    if (block.empty()) continue;
    if (block.size() < 2)
      throw std::invalid_argument(
          "grouped_permutation_no_fixed: tissue " + std::to_string(t) +
          " has a single sample; pairing needs a partner");
    std::vector<std::size_t> image = block;
    bool ok = false;
    for (int attempt = 0; attempt < max_retries && !ok; ++attempt) {
      detail::fisher_yates(image, rng);
      ok = true;
      for (std::size_t i = 0; i < block.size(); ++i)
        if (image[i] == block[i]) { ok = false; break; }
    }
    if (!ok)
      throw std::runtime_error(
          "grouped_permutation_no_fixed: could not derange tissue " +
          std::to_string(t));
    for (std::size_t i = 0; i < block.size(); ++i) pi[block[i]] = image[i];
  }
  return pi;
}

}  // namespace strank

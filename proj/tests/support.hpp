#pragma once

// Helpers shared by the test binaries. The reference computations here avoid
// the library's strided loops on purpose: they decode every flat index by
// repeated division and sum straight from the definition.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "rmot/io.hpp"
#include "rmot/oracle.hpp"
#include "rmot/solver.hpp"
#include "rmot/tensor.hpp"

namespace rmot::testing {

struct Instance {
  DenseTensor cost;
  std::vector<Histogram> marginals;
};

inline Instance random_instance(std::vector<std::size_t> dims, std::uint64_t seed,
                                double scale = 1.0) {
  Shape shape(std::move(dims));
  return {random_uniform_cost(shape, seed, scale), random_histograms(shape, seed + 1)};
}

inline std::vector<std::size_t> decode(const Shape& shape, std::size_t flat) {
  std::vector<std::size_t> idx(shape.order());
  for (std::size_t h = shape.order(); h-- > 0;) {
    idx[h] = flat % shape.dim(h);
    flat /= shape.dim(h);
  }
  return idx;
}

inline std::vector<double> naive_marginal(const DenseTensor& t, std::size_t axis) {
  std::vector<double> out(t.shape().dim(axis), 0.0);
  for (std::size_t f = 0; f < t.size(); ++f) out[decode(t.shape(), f)[axis]] += t[f];
  return out;
}

/// exp(-C/eta + sum_k v_k) * prod_k a_k evaluated entry by entry.
inline DenseTensor naive_plan(const DenseTensor& cost, double eta,
                              const Potentials& v,
                              const std::vector<Histogram>& a) {
  DenseTensor out(cost.shape());
  for (std::size_t f = 0; f < cost.size(); ++f) {
    const auto idx = decode(cost.shape(), f);
    double expo = -cost[f] / eta;
    double mass = 1.0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      expo += v.vectors[k][idx[k]];
      mass *= a[k][idx[k]];
    }
    out[f] = std::exp(expo) * mass;
  }
  return out;
}

inline double l1(const DenseTensor& x, const DenseTensor& y) {
  double s = 0.0;
  for (std::size_t f = 0; f < x.size(); ++f) s += std::abs(x[f] - y[f]);
  return s;
}

inline double l1(const std::vector<double>& x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) s += std::abs(x[j] - y[j]);
  return s;
}

/// Direct definition: sum p log(p/q) - p + q, with 0 log 0 = 0.
inline double naive_kl(const DenseTensor& p, const DenseTensor& q) {
  double s = 0.0;
  for (std::size_t f = 0; f < p.size(); ++f) {
    if (p[f] > 0.0) s += p[f] * std::log(p[f] / q[f]);
    s += q[f] - p[f];
  }
  return s;
}

/// Solves p log(p/q) - p + q = d for q > p by bisection.
inline double marginal_with_kl(double p, double d) {
  double lo = p, hi = p + 1.0;
  while (p * std::log(p / hi) - p + hi < d) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (p * std::log(p / mid) - p + mid < d ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline SolverConfig config(double eta, std::vector<std::size_t> tau, double eps,
                           Variant variant = Variant::kGreedyBatch,
                           std::optional<std::uint64_t> max_iter = 1'000'000) {
  SolverConfig c;
  c.eta = eta;
  c.tau = std::move(tau);
  c.epsilon = eps;
  c.variant = variant;
  c.max_iter = max_iter;
  return c;
}

}  // namespace rmot::testing

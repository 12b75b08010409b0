#include "rmot/tensor.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace rmot {

Shape::Shape(std::vector<std::size_t> dims, std::size_t element_limit)
    : dims_(std::move(dims)) {
  if (dims_.size() < 2) {
    throw InvalidArgument("shape needs at least two axes, got " +
                          std::to_string(dims_.size()));
  }
  size_ = 1;
  for (std::size_t k = 0; k < dims_.size(); ++k) {
    if (dims_[k] == 0) {
      throw InvalidArgument("shape axis " + std::to_string(k) + " is empty");
    }
    if (size_ > element_limit / dims_[k]) {
      throw InvalidArgument("shape exceeds the dense element limit of " +
                            std::to_string(element_limit));
    }
    size_ *= dims_[k];
  }
  if (size_ > element_limit) {
    throw InvalidArgument("shape exceeds the dense element limit of " +
                          std::to_string(element_limit));
  }
  strides_.assign(dims_.size(), 1);
  for (std::size_t k = dims_.size() - 1; k-- > 0;) {
    strides_[k] = strides_[k + 1] * dims_[k + 1];
  }
}

std::size_t Shape::flat_index(std::span<const std::size_t> index) const {
  if (index.size() != dims_.size()) {
    throw InvalidArgument("multi-index has wrong order");
  }
  std::size_t flat = 0;
  for (std::size_t k = 0; k < dims_.size(); ++k) {
    if (index[k] >= dims_[k]) throw InvalidArgument("multi-index out of range");
    flat += index[k] * strides_[k];
  }
  return flat;
}

DenseTensor::DenseTensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_.size(), fill) {}

DenseTensor::DenseTensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_.size()) {
    throw InvalidArgument("tensor data has " + std::to_string(data_.size()) +
                          " entries, shape needs " +
                          std::to_string(shape_.size()));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw InvalidArgument("tensor entry " + std::to_string(i) +
                            " is not finite");
    }
  }
}

double DenseTensor::sum() const {
  double total = 0.0;
  for (double x : data_) total += x;
  return total;
}

double DenseTensor::max_abs() const {
  double best = 0.0;
  for (double x : data_) best = std::max(best, std::abs(x));
  return best;
}

Histogram::Histogram(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw ValidationError("histogram is empty");
  double total = 0.0;
  for (std::size_t j = 0; j < values_.size(); ++j) {
    if (!(values_[j] > 0.0) || !std::isfinite(values_[j])) {
      throw ValidationError("histogram entry " + std::to_string(j) +
                            " is not strictly positive");
    }
    total += values_[j];
  }
  if (std::abs(total - 1.0) > kSumTolerance) {
    throw ValidationError("histogram sums to " + std::to_string(total) +
                          ", expected 1");
  }
}

Histogram Histogram::uniform(std::size_t n) {
  if (n == 0) throw ValidationError("histogram is empty");
  return Histogram(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

Potentials Potentials::zeros(const Shape& shape) {
  Potentials p;
  p.vectors.reserve(shape.order());
  for (std::size_t n : shape.dims()) p.vectors.emplace_back(n, 0.0);
  return p;
}

std::vector<double> marginal(const DenseTensor& tensor, std::size_t axis) {
  const Shape& shape = tensor.shape();
  if (axis >= shape.order()) {
    throw InvalidArgument("axis " + std::to_string(axis) +
                          " out of range for order " +
                          std::to_string(shape.order()));
  }
  const std::size_t n = shape.dim(axis);
  const std::size_t inner = shape.stride(axis);
  const std::size_t outer = shape.size() / (n * inner);
  std::vector<double> out(n, 0.0);
  const auto data = tensor.values();
  for (std::size_t o = 0; o < outer; ++o) {
    const std::size_t base = o * n * inner;
    for (std::size_t j = 0; j < n; ++j) {
      const double* row = data.data() + base + j * inner;
      double acc = 0.0;
      for (std::size_t i = 0; i < inner; ++i) acc += row[i];
      out[j] += acc;
    }
  }
  return out;
}

Shape shape_of(std::span<const Histogram> histograms,
               std::size_t element_limit) {
  std::vector<std::size_t> dims;
  dims.reserve(histograms.size());
  for (const auto& h : histograms) dims.push_back(h.size());
  return Shape(std::move(dims), element_limit);
}

DenseTensor product_measure(std::span<const Histogram> histograms) {
  DenseTensor out(shape_of(histograms));
  for_each_index(out.shape(), [&](std::size_t flat, auto index) {
    double p = 1.0;
    for (std::size_t k = 0; k < index.size(); ++k) p *= histograms[k][index[k]];
    out[flat] = p;
  });
  return out;
}

namespace {

void check_consistent(const Shape& shape, const Potentials& potentials,
                      std::span<const Histogram> marginals) {
  if (marginals.size() != shape.order() ||
      potentials.order() != shape.order()) {
    throw InvalidArgument("marginal/potential count does not match tensor order");
  }
  for (std::size_t k = 0; k < shape.order(); ++k) {
    if (marginals[k].size() != shape.dim(k) ||
        potentials.vectors[k].size() != shape.dim(k)) {
      throw InvalidArgument("axis " + std::to_string(k) +
                            " extent disagrees with marginals or potentials");
    }
  }
}

}  // namespace

DenseTensor materialize_plan(const DenseTensor& cost, double eta,
                             const Potentials& potentials,
                             std::span<const Histogram> marginals) {
  if (!(eta > 0.0)) throw InvalidArgument("eta must be positive");
  check_consistent(cost.shape(), potentials, marginals);
  DenseTensor plan(cost.shape());
  for_each_index(cost.shape(), [&](std::size_t flat, auto index) {
    double exponent = -cost[flat] / eta;
    double weight = 1.0;
    for (std::size_t k = 0; k < index.size(); ++k) {
      exponent += potentials.vectors[k][index[k]];
      weight *= marginals[k][index[k]];
    }
    plan[flat] = std::exp(exponent) * weight;
  });
  return plan;
}

double rmot_objective(const DenseTensor& cost, double eta,
                      const DenseTensor& plan) {
  if (!(cost.shape() == plan.shape())) {
    throw InvalidArgument("cost and plan shapes differ");
  }
  double transport = 0.0;
  double entropy = 0.0;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const double p = plan[i];
    if (p < 0.0) {
      throw InvalidArgument("plan entry " + std::to_string(i) + " is negative");
    }
    transport += cost[i] * p;
    if (p > 0.0) entropy += p * (std::log(p) - 1.0);
  }
  return transport + eta * entropy;
}

double inner_product(const DenseTensor& lhs, const DenseTensor& rhs) {
  if (!(lhs.shape() == rhs.shape())) throw InvalidArgument("shapes differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < lhs.size(); ++i) acc += lhs[i] * rhs[i];
  return acc;
}

}  // namespace rmot

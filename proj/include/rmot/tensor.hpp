#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rmot/error.hpp"

namespace rmot {

/// Dense storage is refused above this many entries unless the caller opts in.
inline constexpr std::size_t kDefaultElementLimit = 100'000'000;

/// Extents (n_1, ..., n_m) of an order-m tensor, m >= 2, row-major strides.
class Shape {
 public:
  Shape() = default;
  explicit Shape(std::vector<std::size_t> dims,
                 std::size_t element_limit = kDefaultElementLimit);

  std::size_t order() const { return dims_.size(); }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::span<const std::size_t> dims() const { return dims_; }
  /// Number of entries, the product of all extents.
  std::size_t size() const { return size_; }
  /// Distance in the flat array between consecutive indices along `axis`.
  std::size_t stride(std::size_t axis) const { return strides_.at(axis); }
  std::size_t flat_index(std::span<const std::size_t> index) const;

  bool operator==(const Shape& other) const { return dims_ == other.dims_; }

 private:
  std::vector<std::size_t> dims_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 0;
};

class DenseTensor {
 public:
  DenseTensor() = default;
  explicit DenseTensor(Shape shape, double fill = 0.0);
  /// Takes `data` in row-major order; its length must match the shape and
  /// every entry must be finite.
  DenseTensor(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  double operator[](std::size_t flat) const { return data_[flat]; }
  double& operator[](std::size_t flat) { return data_[flat]; }
  double at(std::span<const std::size_t> index) const {
    return data_[shape_.flat_index(index)];
  }

  std::span<const double> values() const { return data_; }
  std::span<double> values() { return data_; }

  double sum() const;
  /// Largest absolute entry, i.e. the sup-norm used by all rate formulas.
  double max_abs() const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Strictly positive probability vector.
class Histogram {
 public:
  static constexpr double kSumTolerance = 1e-12;

  Histogram() = default;
  explicit Histogram(std::vector<double> values);
  static Histogram uniform(std::size_t n);

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t j) const { return values_[j]; }
  std::span<const double> values() const { return values_; }

 private:
  std::vector<double> values_;
};

/// Dual vectors v_1..v_m; the plan they describe is
/// exp(-C/eta + sum_k v_k[j_k]) * prod_k a_k[j_k].
struct Potentials {
  std::vector<std::vector<double>> vectors;

  static Potentials zeros(const Shape& shape);
  std::size_t order() const { return vectors.size(); }
  bool operator==(const Potentials&) const = default;
};

/// Calls f(flat, index) for every entry in row-major order. `index` is a
/// view into a scratch buffer that is only valid during the call.
template <typename F>
void for_each_index(const Shape& shape, F&& f) {
  const std::size_t m = shape.order();
  std::vector<std::size_t> index(m, 0);
  for (std::size_t flat = 0; flat < shape.size(); ++flat) {
    f(flat, std::span<const std::size_t>(index));
    for (std::size_t h = m; h-- > 0;) {
      if (++index[h] < shape.dim(h)) break;
      index[h] = 0;
    }
  }
}

/// Visits the (axis = position) slice, i.e. every multi-index whose
/// coordinate along `axis` equals `position`, in row-major order.
template <typename F>
void for_each_in_slice(const Shape& shape, std::size_t axis,
                       std::size_t position, F&& f) {
  const std::size_t m = shape.order();
  std::vector<std::size_t> index(m, 0);
  index[axis] = position;
  std::size_t flat = position * shape.stride(axis);
  const std::size_t count = shape.size() / shape.dim(axis);
  for (std::size_t visited = 0; visited < count; ++visited) {
    f(flat, std::span<const std::size_t>(index));
    for (std::size_t h = m; h-- > 0;) {
      if (h == axis) continue;
      if (++index[h] < shape.dim(h)) {
        flat += shape.stride(h);
        break;
      }
      flat -= (shape.dim(h) - 1) * shape.stride(h);
      index[h] = 0;
    }
  }
}

/// k-th push-forward: sums the tensor over every axis except `axis`.
std::vector<double> marginal(const DenseTensor& tensor, std::size_t axis);

/// Outer product a_1 x ... x a_m.
DenseTensor product_measure(std::span<const Histogram> histograms);

DenseTensor materialize_plan(const DenseTensor& cost, double eta,
                             const Potentials& potentials,
                             std::span<const Histogram> marginals);

/// <C, pi> + eta * sum_j pi_j (log pi_j - 1), with 0 log 0 = 0.
double rmot_objective(const DenseTensor& cost, double eta,
                      const DenseTensor& plan);

double inner_product(const DenseTensor& lhs, const DenseTensor& rhs);

/// Shape implied by a list of histograms.
Shape shape_of(std::span<const Histogram> histograms,
               std::size_t element_limit = kDefaultElementLimit);

}  // namespace rmot

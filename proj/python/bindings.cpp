#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "rmot/bregman.hpp"
#include "rmot/diagnostics.hpp"
#include "rmot/error.hpp"
#include "rmot/oracle.hpp"
#include "rmot/solver.hpp"
#include "rmot/tensor.hpp"

namespace py = pybind11;
using namespace rmot;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

DenseTensor to_tensor(const Array& a) {
  if (a.ndim() < 1) throw InvalidArgument("expected an array with at least one axis");
  std::vector<std::size_t> dims(a.shape(), a.shape() + a.ndim());
  std::vector<double> data(a.data(), a.data() + a.size());
  return DenseTensor(Shape(std::move(dims)), std::move(data));
}

Array to_array(const DenseTensor& t) {
  const auto dims = t.shape().dims();
  std::vector<py::ssize_t> shape(dims.begin(), dims.end());
  Array out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

Array to_array(std::span<const double> v) {
  Array out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

std::vector<Histogram> to_histograms(const std::vector<Array>& marginals) {
  std::vector<Histogram> out;
  for (const auto& a : marginals) {
    if (a.ndim() != 1) throw InvalidArgument("marginals must be one-dimensional");
    out.emplace_back(std::vector<double>(a.data(), a.data() + a.size()));
  }
  return out;
}

py::list potentials_list(const Potentials& p) {
  py::list out;
  for (const auto& v : p.vectors) out.append(to_array(v));
  return out;
}

py::object maybe(double x) { return std::isnan(x) ? py::none() : py::cast(x); }

py::dict trace_dict(const ConvergenceTrace& trace) {
  std::vector<std::uint64_t> t;
  std::vector<std::int64_t> axis;
  std::vector<std::size_t> batch_size;
  std::vector<double> d_t, block, objective, kl;
  for (const auto& row : trace.rows) {
    t.push_back(row.t);
    axis.push_back(row.axis ? static_cast<std::int64_t>(*row.axis) : -1);
    batch_size.push_back(row.batch_size);
    d_t.push_back(row.stopping_metric);
    block.push_back(row.block_distance);
    objective.push_back(row.objective);
    kl.push_back(row.kl_to_opt.value_or(std::nan("")));
  }
  py::dict out;
  out["t"] = py::array(py::cast(t));
  out["k_t"] = py::array(py::cast(axis));
  out["batch_size"] = py::array(py::cast(batch_size));
  out["d_t"] = to_array(d_t);
  out["block_distance"] = to_array(block);
  out["objective"] = to_array(objective);
  out["kl_to_opt"] = to_array(kl);
  return out;
}

RateForm rate_form(const std::string& s) {
  if (s == "general") return RateForm::kGeneral;
  if (s == "bimarginal") return RateForm::kBimarginal;
  if (s == "greedy-full") return RateForm::kGreedyFull;
  if (s == "cyclic") return RateForm::kCyclic;
  throw InvalidArgument("unknown rate form '" + s + "'");
}

BoundForm bound_form(const std::string& s) {
  if (s == "general") return BoundForm::kGeneral;
  if (s == "bimarginal") return BoundForm::kBimarginal;
  if (s == "greedy-full") return BoundForm::kGreedyFull;
  throw InvalidArgument("unknown bound form '" + s + "'");
}

}  // namespace

PYBIND11_MODULE(_rmot, m) {
  m.doc() = "Greedy batch Bregman projections for entropic multimarginal transport";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<NumericalBreakdown>(m, "NumericalBreakdown", PyExc_ArithmeticError);
  py::register_exception<ConvergenceFailure>(m, "ConvergenceFailure", PyExc_RuntimeError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("marginal", [](const Array& a, std::size_t axis) {
    return to_array(marginal(to_tensor(a), axis));
  }, py::arg("tensor"), py::arg("axis"));

  m.def("product_measure", [](const std::vector<Array>& marginals) {
    return to_array(product_measure(to_histograms(marginals)));
  }, py::arg("marginals"));

  m.def("kl_divergence", [](const Array& p, const Array& q) {
    return kl_divergence(to_tensor(p), to_tensor(q));
  }, py::arg("p"), py::arg("q"));

  m.def("reference_solution",
        [](const Array& cost, const std::vector<Array>& marginals, double eta, double tol) {
          const auto c = to_tensor(cost);
          const auto a = to_histograms(marginals);
          DenseTensor plan;
          {
            py::gil_scoped_release release;
            plan = reference_solution(c, a, eta, tol);
          }
          return to_array(plan);
        },
        py::arg("cost"), py::arg("marginals"), py::arg("eta"), py::arg("tol") = kReferenceTolerance);

  m.def("kkt_residual",
        [](const Array& cost, const std::vector<Array>& marginals, double eta, const Array& plan) {
          const auto r = kkt_residual(to_tensor(cost), to_histograms(marginals), eta, to_tensor(plan));
          py::dict out;
          out["feasibility"] = r.feasibility_residual;
          out["range"] = r.range_residual;
          out["potentials"] = potentials_list(r.potentials);
          return out;
        },
        py::arg("cost"), py::arg("marginals"), py::arg("eta"), py::arg("plan"));

  m.def("solve",
        [](const Array& cost, const std::vector<Array>& marginals, double eta,
           std::vector<std::size_t> tau, double epsilon, const std::string& variant,
           const std::string& stopping, std::optional<std::uint64_t> max_iter,
           std::size_t refresh_every, std::optional<Array> reference, bool timing) {
          const auto c = to_tensor(cost);
          const auto a = to_histograms(marginals);
          SolverConfig cfg;
          cfg.eta = eta;
          cfg.tau = std::move(tau);
          cfg.epsilon = epsilon;
          cfg.variant = parse_variant(variant);
          cfg.stopping = parse_stopping_mode(stopping);
          cfg.max_iter = max_iter;
          cfg.refresh_every = refresh_every;
          std::optional<DenseTensor> ref;
          if (reference) ref = to_tensor(*reference);
          SolveOptions opts;
          opts.reference_plan = ref ? &*ref : nullptr;
          opts.record_timing = timing;
          Solution sol;
          {
            py::gil_scoped_release release;
            sol = solve(c, a, cfg, opts);
          }
          py::dict out;
          out["plan"] = to_array(sol.plan);
          out["potentials"] = potentials_list(sol.potentials);
          out["status"] = std::string(to_string(sol.status));
          out["iterations"] = sol.iterations;
          out["final_metric"] = maybe(sol.final_metric);
          out["trace"] = trace_dict(sol.trace);
          return out;
        },
        py::arg("cost"), py::arg("marginals"), py::arg("eta"),
        py::arg("tau") = std::vector<std::size_t>{1}, py::arg("epsilon") = 1e-9,
        py::arg("variant") = "greedy-batch", py::arg("stopping") = "max",
        py::arg("max_iter") = py::none(), py::arg("refresh_every") = 0,
        py::arg("reference") = py::none(), py::arg("timing") = true);

  m.def("theoretical_rate",
        [](const std::string& form, std::size_t order, double c, std::size_t b_tau,
           std::optional<double> m1) { return theoretical_rate(rate_form(form), order, c, b_tau, m1); },
        py::arg("form"), py::arg("m"), py::arg("c"), py::arg("b_tau"), py::arg("m1") = py::none());

  m.def("iteration_bound",
        [](const std::string& form, std::size_t order, double c, double epsilon, double eta,
           std::size_t max_ceil, std::optional<double> m2) {
          return iteration_bound(bound_form(form), order, c, epsilon, eta, max_ceil, m2);
        },
        py::arg("form"), py::arg("m"), py::arg("c"), py::arg("epsilon"), py::arg("eta"),
        py::arg("max_ceil") = 1, py::arg("m2") = py::none());
}

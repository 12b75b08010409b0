#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rmot/diagnostics.hpp"
#include "rmot/solver.hpp"
#include "rmot/tensor.hpp"
#include "rmot/trace.hpp"

namespace rmot {

/// Where the cost tensor of a problem file comes from.
struct CostSource {
  enum class Kind { kInline, kRandomUniform, kSymmetricToy };
  Kind kind = Kind::kInline;
  std::uint64_t seed = 0;
  double scale = 1.0;
};

/// Problem file contents after validation. The file is JSON:
///   { "name": ..., "description": ...,
///     "shape": [n_1, ..., n_m],
///     "marginals": [[...], ...] | "uniform",
///     "cost": [row-major entries] |
///             {"generator": "random-uniform", "seed": s, "scale": x} |
///             {"generator": "symmetric-toy"} }
struct Problem {
  std::string name;
  std::string description;
  CostSource source;
  DenseTensor cost;
  std::vector<Histogram> marginals;

  const Shape& shape() const { return cost.shape(); }
};

/// Inputs within this distance of unit mass are renormalized on load.
inline constexpr double kRenormalizeTolerance = 1e-9;

Problem parse_problem(std::string_view text);
Problem load_problem(const std::filesystem::path& path);
std::string dump_problem(const Problem& problem);
void save_problem(const Problem& problem, const std::filesystem::path& path);

/// Uniform costs in [0, scale) from a seeded mt19937_64 stream.
DenseTensor random_uniform_cost(const Shape& shape, std::uint64_t seed,
                                double scale = 1.0);
/// Strictly positive histograms with entries drawn in [0.5, 1.5) and
/// normalized, for test and benchmark instances.
std::vector<Histogram> random_histograms(const Shape& shape, std::uint64_t seed);
/// C = [[0, 1], [1, 0]] with uniform marginals.
Problem symmetric_toy_problem();
Problem generated_problem(std::string_view generator, const Shape& shape,
                          std::uint64_t seed, double scale);

/// printf %.17g, enough for a bit-exact reload; NaN becomes an empty field.
std::string format_double(double value);

inline constexpr std::string_view kTraceHeader =
    "t,k_t,batch_size,block_distance,d_t,objective,kl_to_opt,wall_time_ns";

void write_trace(std::ostream& out, const ConvergenceTrace& trace);
ConvergenceTrace read_trace(std::istream& in);
ConvergenceTrace load_trace(const std::filesystem::path& path);

/// Summary of one solver run; everything needed to rerun or re-plot it.
struct RunRecord {
  std::string problem_name;
  std::vector<std::size_t> shape;
  double eta = 1.0;
  std::vector<std::size_t> tau;
  double epsilon = 0.0;
  Variant variant = Variant::kGreedyBatch;
  StoppingMode stopping = StoppingMode::kMax;
  std::uint64_t max_iter = 0;
  std::size_t refresh_every = 0;
  std::size_t b_tau = 0;

  SolveStatus status = SolveStatus::kMaxIter;
  std::uint64_t iterations = 0;
  double final_metric = 0.0;
  double normalized_cycles = 0.0;
  Potentials potentials;
  std::string trace_path;
  std::optional<RateVerdict> verdict;

  bool operator==(const RunRecord&) const = default;
};

RunRecord make_record(const Problem& problem, const SolverConfig& config,
                      std::uint64_t max_iter, const Solution& solution);

std::string dump_record(const RunRecord& record);
RunRecord parse_record(std::string_view text);
RunRecord load_record(const std::filesystem::path& path);

struct OutputPaths {
  std::optional<std::filesystem::path> record;
  std::optional<std::filesystem::path> trace;
};

/// Writes the trace (delimiter-separated) and the record (JSON). Failures
/// are reported as IoError naming the path.
void write_outputs(RunRecord record, const ConvergenceTrace& trace,
                   const OutputPaths& paths);

}  // namespace rmot

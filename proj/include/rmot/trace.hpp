#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

namespace rmot {

/// State of the iterate pi^t and the block the solver chose at t. The last
/// row of a finished run has no block: it records the terminal iterate.
struct TraceRow {
  std::uint64_t t = 0;
  std::optional<std::size_t> axis;
  std::size_t batch_size = 0;
  /// Indices of L_t. Empty for traces read back from disk.
  std::vector<std::size_t> batch;
  double block_distance = std::numeric_limits<double>::quiet_NaN();
  double stopping_metric = 0.0;
  double objective = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> kl_to_opt;
  std::int64_t wall_time_ns = 0;
};

struct ConvergenceTrace {
  std::vector<TraceRow> rows;

  bool empty() const { return rows.empty(); }
  std::size_t size() const { return rows.size(); }
};

}  // namespace rmot

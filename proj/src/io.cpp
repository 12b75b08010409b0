#include "rmot/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace rmot {
namespace {

using json = nlohmann::json;

std::string cat(std::initializer_list<std::string_view> parts) {
  std::string s;
  for (auto p : parts) s += p;
  return s;
}

template <typename T>
T get_field(const json& j, const char* key) {
  if (!j.contains(key)) throw ValidationError(cat({"missing field '", key, "'"}));
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(cat({"field '", key, "': ", e.what()}));
  }
}

std::vector<double> to_doubles(const json& arr, const std::string& field) {
  if (!arr.is_array()) throw ValidationError(field + " must be an array");
  std::vector<double> out;
  out.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number()) {
      throw ValidationError(field + " entry " + std::to_string(i) +
                            " is not a number");
    }
    out.push_back(arr[i].get<double>());
  }
  return out;
}

Histogram checked_histogram(std::vector<double> values, std::size_t k,
                            std::size_t expected) {
  const std::string field = "marginal " + std::to_string(k);
  if (values.size() != expected) {
    throw ValidationError(field + " has " + std::to_string(values.size()) +
                          " entries, shape says " + std::to_string(expected));
  }
  double total = 0.0;
  for (std::size_t j = 0; j < values.size(); ++j) {
    if (!std::isfinite(values[j]) || values[j] <= 0.0) {
      throw ValidationError(field + " entry " + std::to_string(j) +
                            " is not strictly positive (" +
                            format_double(values[j]) + ")");
    }
    total += values[j];
  }
  if (std::abs(total - 1.0) > kRenormalizeTolerance) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", total);
    throw ValidationError(field + " sums to " + buf +
                          ", not 1 within 1e-9");
  }
  // Only touch values the histogram would refuse, so that a saved file
  // reloads to the same bits.
  if (std::abs(total - 1.0) > Histogram::kSumTolerance) {
    for (double& v : values) v /= total;
  }
  return Histogram(std::move(values));
}

Shape checked_shape(const std::vector<std::size_t>& dims) {
  try {
    return Shape(dims);
  } catch (const std::exception& e) {
    throw ValidationError(cat({"shape: ", e.what()}));
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("cannot read " + path.string());
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("cannot write " + path.string());
}

json parse_json(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ValidationError(cat({"parse error: ", e.what()}));
  }
}

double unit_draw(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// JSON has no NaN; absent values are written as null.
json number_or_null(double v) {
  return std::isfinite(v) ? json(v) : json(nullptr);
}

double number_from(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN()
                     : j.get<double>();
}

}  // namespace

Problem parse_problem(std::string_view text) {
  const json doc = parse_json(text);
  if (!doc.is_object()) throw ValidationError("problem must be a JSON object");

  Problem p;
  if (doc.contains("name")) p.name = get_field<std::string>(doc, "name");
  if (doc.contains("description")) {
    p.description = get_field<std::string>(doc, "description");
  }
  if (!doc.contains("cost")) throw ValidationError("missing field 'cost'");
  const json& cost = doc.at("cost");

  std::string generator;
  if (cost.is_object()) {
    generator = get_field<std::string>(cost, "generator");
  } else if (!cost.is_array()) {
    throw ValidationError("field 'cost' must be an array or a generator");
  }

  std::vector<std::size_t> dims;
  if (doc.contains("shape")) {
    dims = get_field<std::vector<std::size_t>>(doc, "shape");
  } else if (generator == "symmetric-toy") {
    dims = {2, 2};
  } else {
    throw ValidationError("missing field 'shape'");
  }
  const Shape shape = checked_shape(dims);

  if (generator.empty()) {
    std::vector<double> data = to_doubles(cost, "cost");
    if (data.size() != shape.size()) {
      throw ValidationError("cost has " + std::to_string(data.size()) +
                            " entries, shape needs " +
                            std::to_string(shape.size()));
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!std::isfinite(data[i]) || data[i] < 0.0) {
        throw ValidationError("cost entry " + std::to_string(i) +
                              " is negative or not finite");
      }
    }
    p.cost = DenseTensor(shape, std::move(data));
  } else if (generator == "random-uniform") {
    p.source.kind = CostSource::Kind::kRandomUniform;
    p.source.seed = cost.contains("seed") ? get_field<std::uint64_t>(cost, "seed") : 0;
    p.source.scale = cost.contains("scale") ? get_field<double>(cost, "scale") : 1.0;
    if (!std::isfinite(p.source.scale) || p.source.scale < 0.0) {
      throw ValidationError("cost scale must be finite and nonnegative");
    }
    p.cost = random_uniform_cost(shape, p.source.seed, p.source.scale);
  } else if (generator == "symmetric-toy") {
    if (!(shape == Shape({2, 2}))) {
      throw ValidationError("symmetric-toy generator needs shape [2, 2]");
    }
    p.source.kind = CostSource::Kind::kSymmetricToy;
    p.cost = symmetric_toy_problem().cost;
  } else {
    throw ValidationError("unknown cost generator '" + generator + "'");
  }

  const std::size_t m = shape.order();
  const json marg = doc.contains("marginals") ? doc.at("marginals") : json("uniform");
  if (marg.is_string()) {
    if (marg.get<std::string>() != "uniform") {
      throw ValidationError("field 'marginals' must be arrays or \"uniform\"");
    }
    for (std::size_t k = 0; k < m; ++k) {
      p.marginals.push_back(Histogram::uniform(shape.dim(k)));
    }
  } else if (marg.is_array()) {
    if (marg.size() != m) {
      throw ValidationError("expected " + std::to_string(m) + " marginals, got " +
                            std::to_string(marg.size()));
    }
    for (std::size_t k = 0; k < m; ++k) {
      p.marginals.push_back(checked_histogram(
          to_doubles(marg[k], "marginal " + std::to_string(k)), k, shape.dim(k)));
    }
  } else {
    throw ValidationError("field 'marginals' must be arrays or \"uniform\"");
  }
  return p;
}

Problem load_problem(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return parse_problem(text);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string dump_problem(const Problem& problem) {
  json doc;
  doc["name"] = problem.name;
  doc["description"] = problem.description;
  const auto dims = problem.shape().dims();
  doc["shape"] = std::vector<std::size_t>(dims.begin(), dims.end());
  json marg = json::array();
  for (const auto& h : problem.marginals) {
    marg.push_back(std::vector<double>(h.values().begin(), h.values().end()));
  }
  doc["marginals"] = marg;
  switch (problem.source.kind) {
    case CostSource::Kind::kInline: {
      const auto v = problem.cost.values();
      doc["cost"] = std::vector<double>(v.begin(), v.end());
      break;
    }
    case CostSource::Kind::kRandomUniform:
      doc["cost"] = {{"generator", "random-uniform"},
                     {"seed", problem.source.seed},
                     {"scale", problem.source.scale}};
      break;
    case CostSource::Kind::kSymmetricToy:
      doc["cost"] = {{"generator", "symmetric-toy"}};
      break;
  }
  return doc.dump(2) + "\n";
}

void save_problem(const Problem& problem, const std::filesystem::path& path) {
  write_file(path, dump_problem(problem));
}

DenseTensor random_uniform_cost(const Shape& shape, std::uint64_t seed,
                                double scale) {
  std::mt19937_64 rng(seed);
  std::vector<double> data(shape.size());
  for (double& x : data) x = scale * unit_draw(rng);
  return DenseTensor(shape, std::move(data));
}

std::vector<Histogram> random_histograms(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<Histogram> out;
  for (std::size_t k = 0; k < shape.order(); ++k) {
    std::vector<double> v(shape.dim(k));
    double total = 0.0;
    for (double& x : v) {
      x = 0.5 + unit_draw(rng);
      total += x;
    }
    for (double& x : v) x /= total;
    out.emplace_back(std::move(v));
  }
  return out;
}

Problem symmetric_toy_problem() {
  Problem p;
  p.name = "symmetric-toy";
  p.description = "C = [[0, 1], [1, 0]], uniform marginals";
  p.source.kind = CostSource::Kind::kSymmetricToy;
  p.cost = DenseTensor(Shape({2, 2}), std::vector<double>{0.0, 1.0, 1.0, 0.0});
  p.marginals = {Histogram::uniform(2), Histogram::uniform(2)};
  return p;
}

Problem generated_problem(std::string_view generator, const Shape& shape,
                          std::uint64_t seed, double scale) {
  if (generator == "symmetric-toy") return symmetric_toy_problem();
  if (generator != "random-uniform") {
    throw ValidationError(cat({"unknown generator '", generator, "'"}));
  }
  Problem p;
  p.name = "random-uniform";
  p.source = {CostSource::Kind::kRandomUniform, seed, scale};
  p.cost = random_uniform_cost(shape, seed, scale);
  for (std::size_t k = 0; k < shape.order(); ++k) {
    p.marginals.push_back(Histogram::uniform(shape.dim(k)));
  }
  return p;
}

std::string format_double(double value) {
  if (std::isnan(value)) return {};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void write_trace(std::ostream& out, const ConvergenceTrace& trace) {
  out << kTraceHeader << '\n';
  for (const auto& row : trace.rows) {
    out << row.t << ',';
    if (row.axis) out << *row.axis;
    out << ',' << row.batch_size << ',' << format_double(row.block_distance)
        << ',' << format_double(row.stopping_metric) << ','
        << format_double(row.objective) << ','
        << (row.kl_to_opt ? format_double(*row.kl_to_opt) : std::string())
        << ',' << row.wall_time_ns << '\n';
  }
}

namespace {

template <typename T>
T parse_integer(std::string_view s, std::size_t line) {
  T value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ValidationError("trace line " + std::to_string(line) +
                          ": bad integer '" + std::string(s) + "'");
  }
  return value;
}

double parse_real(std::string_view s, std::size_t line) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::string owned(s);
  char* end = nullptr;
  const double v = std::strtod(owned.c_str(), &end);
  if (end != owned.c_str() + owned.size()) {
    throw ValidationError("trace line " + std::to_string(line) +
                          ": bad number '" + owned + "'");
  }
  return v;
}

}  // namespace

ConvergenceTrace read_trace(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader) {
    throw ValidationError("trace header mismatch");
  }
  ConvergenceTrace trace;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view rest(line);
    for (;;) {
      const auto pos = rest.find(',');
      f.push_back(rest.substr(0, pos));
      if (pos == std::string_view::npos) break;
      rest.remove_prefix(pos + 1);
    }
    if (f.size() != 8) {
      throw ValidationError("trace line " + std::to_string(lineno) +
                            ": expected 8 fields");
    }
    TraceRow row;
    row.t = parse_integer<std::uint64_t>(f[0], lineno);
    if (!f[1].empty()) row.axis = parse_integer<std::size_t>(f[1], lineno);
    row.batch_size = parse_integer<std::size_t>(f[2], lineno);
    row.block_distance = parse_real(f[3], lineno);
    row.stopping_metric = parse_real(f[4], lineno);
    row.objective = parse_real(f[5], lineno);
    if (!f[6].empty()) row.kl_to_opt = parse_real(f[6], lineno);
    row.wall_time_ns = parse_integer<std::int64_t>(f[7], lineno);
    trace.rows.push_back(std::move(row));
  }
  return trace;
}

ConvergenceTrace load_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return read_trace(in);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

RunRecord make_record(const Problem& problem, const SolverConfig& config,
                      std::uint64_t max_iter, const Solution& solution) {
  RunRecord r;
  r.problem_name = problem.name;
  const auto dims = problem.shape().dims();
  r.shape.assign(dims.begin(), dims.end());
  r.eta = config.eta;
  r.tau = effective_batch_sizes(config, problem.shape());
  r.epsilon = config.epsilon;
  r.variant = config.variant;
  r.stopping = config.stopping;
  r.max_iter = max_iter;
  r.refresh_every = config.refresh_every;
  r.b_tau = batch_count(r.tau, problem.shape());
  r.status = solution.status;
  r.iterations = solution.iterations;
  r.final_metric = solution.final_metric;
  r.normalized_cycles = normalized_cycles(solution.iterations, r.b_tau);
  r.potentials = solution.potentials;
  return r;
}

namespace {

json verdict_json(const RateVerdict& v) {
  json j;
  j["variant"] = v.variant;
  j["theoretical_factor"] = v.theoretical_factor;
  j["ratio_stride"] = v.ratio_stride;
  j["observed_max_ratio"] = v.observed_max_ratio;
  j["ratios_checked"] = v.ratios_checked;
  j["iteration_bound"] = v.iteration_bound ? json(*v.iteration_bound) : json(nullptr);
  j["observed_iterations"] =
      v.observed_iterations ? json(*v.observed_iterations) : json(nullptr);
  j["normalized_cycles"] = v.normalized_cycles;
  j["normalized_iterations"] = v.normalized_iterations;
  j["rate_applicable"] = v.rate_applicable;
  j["pass_rate"] = v.pass_rate;
  j["bound_applicable"] = v.bound_applicable;
  j["pass_bound"] = v.pass_bound;
  j["monotone"] = v.monotone;
  j["passed"] = v.passed();
  return j;
}

RateVerdict verdict_from(const json& j) {
  RateVerdict v;
  v.variant = j.at("variant").get<std::string>();
  v.theoretical_factor = j.at("theoretical_factor").get<double>();
  v.ratio_stride = j.at("ratio_stride").get<std::size_t>();
  v.observed_max_ratio = j.at("observed_max_ratio").get<double>();
  v.ratios_checked = j.at("ratios_checked").get<std::size_t>();
  if (!j.at("iteration_bound").is_null()) {
    v.iteration_bound = j.at("iteration_bound").get<double>();
  }
  if (!j.at("observed_iterations").is_null()) {
    v.observed_iterations = j.at("observed_iterations").get<std::uint64_t>();
  }
  v.normalized_cycles = j.at("normalized_cycles").get<double>();
  v.normalized_iterations = j.at("normalized_iterations").get<double>();
  v.rate_applicable = j.at("rate_applicable").get<bool>();
  v.pass_rate = j.at("pass_rate").get<bool>();
  v.bound_applicable = j.at("bound_applicable").get<bool>();
  v.pass_bound = j.at("pass_bound").get<bool>();
  v.monotone = j.at("monotone").get<bool>();
  return v;
}

SolveStatus parse_status(const std::string& s) {
  if (s == to_string(SolveStatus::kConverged)) return SolveStatus::kConverged;
  if (s == to_string(SolveStatus::kMaxIter)) return SolveStatus::kMaxIter;
  throw ValidationError("unknown status '" + s + "'");
}

}  // namespace

std::string dump_record(const RunRecord& r) {
  json doc;
  doc["problem"] = {{"name", r.problem_name}, {"shape", r.shape}};
  doc["config"] = {{"eta", r.eta},
                   {"tau", r.tau},
                   {"epsilon", r.epsilon},
                   {"variant", std::string(to_string(r.variant))},
                   {"stopping", std::string(to_string(r.stopping))},
                   {"max_iter", r.max_iter},
                   {"refresh_every", r.refresh_every}};
  doc["b_tau"] = r.b_tau;
  doc["status"] = std::string(to_string(r.status));
  doc["iterations"] = r.iterations;
  doc["final_metric"] = number_or_null(r.final_metric);
  doc["normalized_cycles"] = r.normalized_cycles;
  doc["potentials"] = r.potentials.vectors;
  doc["trace_path"] = r.trace_path;
  if (r.verdict) doc["verdict"] = verdict_json(*r.verdict);
  // nlohmann prints doubles with the shortest round-trip representation,
  // which reloads to the same bits.
  return doc.dump(2) + "\n";
}

RunRecord parse_record(std::string_view text) {
  const json doc = parse_json(text);
  RunRecord r;
  try {
    const json& prob = doc.at("problem");
    r.problem_name = prob.at("name").get<std::string>();
    r.shape = prob.at("shape").get<std::vector<std::size_t>>();
    const json& cfg = doc.at("config");
    r.eta = cfg.at("eta").get<double>();
    r.tau = cfg.at("tau").get<std::vector<std::size_t>>();
    r.epsilon = cfg.at("epsilon").get<double>();
    r.variant = parse_variant(cfg.at("variant").get<std::string>());
    r.stopping = parse_stopping_mode(cfg.at("stopping").get<std::string>());
    r.max_iter = cfg.at("max_iter").get<std::uint64_t>();
    r.refresh_every = cfg.at("refresh_every").get<std::size_t>();
    r.b_tau = doc.at("b_tau").get<std::size_t>();
    r.status = parse_status(doc.at("status").get<std::string>());
    r.iterations = doc.at("iterations").get<std::uint64_t>();
    r.final_metric = number_from(doc.at("final_metric"));
    r.normalized_cycles = doc.at("normalized_cycles").get<double>();
    r.potentials.vectors =
        doc.at("potentials").get<std::vector<std::vector<double>>>();
    r.trace_path = doc.at("trace_path").get<std::string>();
    if (doc.contains("verdict")) r.verdict = verdict_from(doc.at("verdict"));
  } catch (const json::exception& e) {
    throw ValidationError(cat({"run record: ", e.what()}));
  } catch (const InvalidArgument& e) {
    throw ValidationError(cat({"run record: ", e.what()}));
  }
  return r;
}

RunRecord load_record(const std::filesystem::path& path) {
  return parse_record(read_file(path));
}

void write_outputs(RunRecord record, const ConvergenceTrace& trace,
                   const OutputPaths& paths) {
  if (paths.trace) {
    std::ostringstream ss;
    write_trace(ss, trace);
    write_file(*paths.trace, ss.str());
    record.trace_path = paths.trace->string();
  }
  if (paths.record) write_file(*paths.record, dump_record(record));
}

}  // namespace rmot

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dan/attention.hpp"
#include "dan/data.hpp"
#include "dan/metrics.hpp"
#include "dan/model.hpp"

namespace dan {

// ---------------------------------------------------------------------------
// Complexity benchmark

struct BenchRecord {
  AttentionScheme scheme = AttentionScheme::dense;
  std::size_t n = 0, c = 0, k = 0;
  std::uint64_t measured_macs = 0;    // everything the forward pass counted
  std::uint64_t projection_macs = 0;  // 4·N·C·d per attention stage
  std::uint64_t attention_macs = 0;   // measured − projection
  double wall_seconds = 0;
  double predicted = 0;  // flops_estimate
};

struct BenchFit {
  AttentionScheme scheme = AttentionScheme::dense;
  double exponent = 0;  // slope of log(attention_macs) over log(N)
  std::size_t points = 0;
};

struct BenchReport {
  std::vector<BenchRecord> records;
  std::vector<BenchFit> fits;
  std::vector<std::string> skipped;  // scheme/size pairs above the dense cap
};

inline constexpr std::size_t kDenseBenchCap = 16384;

// Runs every scheme at every size, counting multiply-adds.
BenchReport bench_attention_scaling(const std::vector<std::size_t>& sizes, std::size_t channels, std::size_t k,
                                    const std::vector<AttentionScheme>& schemes = {AttentionScheme::dense,
                                                                                   AttentionScheme::interlaced,
                                                                                   AttentionScheme::dal},
                                    std::size_t dense_cap = kDenseBenchCap);

// Least-squares slope of log(y) against log(x).
double fit_log_slope(const std::vector<double>& x, const std::vector<double>& y);

// Factors (P, Q) of the single-level interlaced scheme: P is the largest
// divisor not above √N.
std::pair<std::size_t, std::size_t> interlaced_factors(std::size_t n);

void write_bench_csv(std::ostream& out, const BenchReport& report);

// ---------------------------------------------------------------------------
// Gradient checking

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;  // elements compared
  double rel_error = 0;     // ‖analytic − numeric‖₂ / max(‖numeric‖₂, 1e-12)
};

// Compares tape gradients of `loss` against central differences for every
// parameter in `store`. At most `max_elements` evenly spaced elements of
// each parameter are perturbed (0 = all).
std::vector<GradCheckEntry> check_gradients(
    ParameterStore<double>& store, const std::function<Var<double>(Binding<double>&)>& loss, double eps = 1e-6,
    std::size_t max_elements = 0);

// Same for one input tensor.
GradCheckEntry check_input_gradient(const TensorT<double>& x,
                                    const std::function<Var<double>(Tape<double>&, const Var<double>&)>& loss,
                                    double eps = 1e-6, std::size_t max_elements = 0);

// ---------------------------------------------------------------------------
// Property verification

struct CheckResult {
  std::string name;
  bool pass = false;
  double measured = 0;
  double tolerance = 0;
  std::string detail;
};

struct VerifyOptions {
  std::string filter;  // substring of check names; empty = all
  SoftmaxAxis softmax_axis = SoftmaxAxis::columns;
  std::uint64_t seed = 1;
};

std::vector<std::string> verify_check_names();

// Runs the selected checks and writes one JSON object per check to `jsonl`
// if given.
std::vector<CheckResult> verify_properties(const VerifyOptions& opts, std::ostream* jsonl = nullptr);

// ---------------------------------------------------------------------------
// Evaluation

struct EvalRow {
  std::string name;
  std::string status;  // "ok" or an error message
  MetricReport model{};
  MetricReport baseline{};  // average of the two input frames
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::optional<MetricReport> mean_model, mean_baseline;  // over rows with status ok
};

ImageU8 average_frames(const ImageU8& a, const ImageU8& b);

ImageU8 interpolate_frames(ParameterStore<float>& params, const ImageU8& prev, const ImageU8& next);

// Scores every triplet of the manifest under `root`; a triplet that fails to
// load or run becomes an error row.
EvalReport eval_dataset(ParameterStore<float>& params, const std::filesystem::path& root);
EvalReport eval_triplets(ParameterStore<float>& params, const Dataset& data);

void write_eval_csv(std::ostream& out, const EvalReport& report);

}  // namespace dan

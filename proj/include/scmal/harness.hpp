#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "scmal/belief.hpp"
#include "scmal/metrics.hpp"
#include "scmal/scm.hpp"
#include "scmal/strategy.hpp"

namespace scmal {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class CandidateFamily { single, upstream };

struct ScmBlock {
    int nodes = 0;
    std::vector<std::pair<int, int>> edges;
    std::vector<std::string> functions;
    std::vector<double> noise_variance;
};

struct CandidateBlock {
    CandidateFamily family = CandidateFamily::single;
    Box range;
    int values_per_node = 50;
    bool include_null = true;
};

struct RunBlock {
    int trials = 10;
    int steps = 30;
    std::uint64_t seed = 0;
    std::string output = "results";
    bool record_timing = false;
};

struct ExperimentConfig {
    int version = 1;
    ScmBlock scm;
    double kernel_bandwidth = 1.0;
    double kernel_amplitude = 1.0;
    CandidateBlock candidates;
    RiskSpec risk;
    std::vector<PolicyConfig> policies;
    CostModel costs;
    MetricSettings metrics;
    int metric_stride = 1;
    RunBlock run;

    ScmSpec truth() const;
    std::vector<Kernel<double>> kernels() const;
};

/// Parses a versioned JSON config. Unknown keys, missing blocks, and values
/// violating module preconditions raise ConfigError.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// Checks every module precondition (graph, expressions, candidate family,
/// risk spec, policies) and returns the candidate count.
std::size_t validate_config(const ExperimentConfig& cfg);

/// Evenly spaced clamp values per node, node-major and value-ascending. The
/// upstream family clamps a chain node and every node above it to the same
/// value. The null intervention, when enabled, comes last.
CandidateSet build_candidates(const ExperimentConfig& cfg);

struct TraceRow {
    int trial = 0;
    int step = 0;
    std::string policy;
    std::string intervention;
    std::string nodes;
    std::string values;
    double expected_total_risk = 0.0;
    double true_total_risk = 0.0;
    double kl_max = 0.0;
    double kl_median = 0.0;
    double mmd_max = 0.0;
    double mmd_median = 0.0;
    std::size_t candidates_evaluated = 0;
    double elapsed_ms = 0.0;
    std::string status = "ok";
};

struct SummaryRow {
    std::string policy;
    int step = 0;
    int trials = 0;
    double expected_total_risk = 0.0;
    double true_total_risk = 0.0;
    double kl_max = 0.0;
    double kl_median = 0.0;
    double mmd_max = 0.0;
    double mmd_median = 0.0;
};

/// Runs every configured policy for every trial. Each trial starts from an
/// empty dataset; a step selects, draws once from the true SCM, refits, and
/// evaluates. Metrics (other than the two risks) are computed at steps that
/// are multiples of the stride and at the final step; other steps hold NaN.
std::vector<TraceRow> run_experiment(const ExperimentConfig& cfg, std::ostream* progress = nullptr);

/// Per-(policy, step) means across trials. Throws std::invalid_argument if
/// trials of one policy cover different steps.
std::vector<SummaryRow> summarize(const std::vector<TraceRow>& traces);

extern const char* const trace_header;
extern const char* const summary_header;

std::string format_double(double v);
void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& rows);
void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows);
std::vector<TraceRow> read_trace_csv(std::istream& is);

}  // namespace scmal

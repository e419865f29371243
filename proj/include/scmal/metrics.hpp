#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "scmal/belief.hpp"
#include "scmal/random.hpp"
#include "scmal/scm.hpp"
#include "scmal/strategy.hpp"

namespace scmal {

/// Plug-in estimate of the SCM: structural functions replaced by posterior
/// means, noise variances taken from the belief (the known true ones).
class PlugInModel {
public:
    explicit PlugInModel(const BeliefState& belief) : belief_(&belief) {}
    const Graph& graph() const { return belief_->graph(); }
    Conditional conditional(int node, const Eigen::MatrixXd& parent_values) const;

private:
    const BeliefState* belief_;
};

/// Weighted integrated squared error between the true functions and the
/// posterior means, on the same quadrature grids as the expected risk.
double true_total_risk(const ScmSpec& truth, const BeliefState& belief, const RiskSpec& spec);

struct McEstimate {
    double value = 0.0;
    double std_error = 0.0;
};

/// Monte-Carlo KL[truth^do(i) || estimate^do(i)] from `samples` draws of the
/// truth. Clamped coordinates are excluded from both log-densities.
template <StructuralModel A, StructuralModel B>
McEstimate kl_interventional(const A& truth, const B& estimate, const Intervention& i, int samples, Rng& rng)
{
    if (!(truth.graph() == estimate.graph())) throw std::invalid_argument("models must share a graph");
    if (samples < 1) throw std::invalid_argument("need at least one sample");
    const Eigen::MatrixXd x = sample_batch(truth, i, samples, rng);
    const Eigen::ArrayXd diff = log_density_batch(truth, i, x) - log_density_batch(estimate, i, x);
    McEstimate out{diff.mean(), 0.0};
    if (samples > 1) out.std_error = std::sqrt((diff - out.value).square().sum() / (samples - 1) / samples);
    return out;
}

/// Biased (V-statistic) estimate of squared MMD with the RBF kernel
/// exp(-|x - y|^2 / (2 bandwidth^2)) between the rows of x and y.
double mmd_squared_v(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double bandwidth);

/// Square root of the V-statistic MMD^2 between `samples` draws of each model.
template <StructuralModel A, StructuralModel B>
double mmd_interventional(const A& truth, const B& estimate, const Intervention& i, int samples, double bandwidth,
                          Rng& rng)
{
    if (samples < 2) throw std::invalid_argument("MMD needs at least two samples");
    const Eigen::MatrixXd x = sample_batch(truth, i, samples, rng);
    const Eigen::MatrixXd y = sample_batch(estimate, i, samples, rng);
    return std::sqrt(std::max(0.0, mmd_squared_v(x, y, bandwidth)));
}

struct MetricSettings {
    int kl_samples = 2000;
    int mmd_samples = 500;
    double mmd_bandwidth = 1.0;
};

struct MetricReport {
    double true_total_risk = 0.0;
    double kl_max = 0.0;
    double kl_median = 0.0;
    double mmd_max = 0.0;
    double mmd_median = 0.0;
    std::vector<double> kl;         // raw per-candidate Monte-Carlo estimates
    std::vector<double> kl_error;
    std::vector<double> mmd;
};

/// Largest and lower-median element.
double max_of(std::vector<double> v);
double lower_median(std::vector<double> v);

MetricReport evaluate(const ScmSpec& truth, const BeliefState& belief, const CandidateSet& cands, const RiskSpec& spec,
                      const MetricSettings& settings, Rng& rng);

}  // namespace scmal

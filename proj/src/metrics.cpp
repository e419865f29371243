#include "scmal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace scmal {

Conditional PlugInModel::conditional(int node, const Eigen::MatrixXd& parent_values) const
{
    return {belief_->node(node).mean(parent_values).array(),
            Eigen::ArrayXd::Constant(parent_values.rows(), belief_->noise_var(node))};
}

double true_total_risk(const ScmSpec& truth, const BeliefState& belief, const RiskSpec& spec)
{
    if (!(truth.graph() == belief.graph())) throw std::invalid_argument("truth and belief must share a graph");
    spec.check(belief.size());
    double total = 0.0;
    for (int n = 0; n < belief.size(); ++n) {
        const QuadratureGrid grid = node_grid(spec, belief.graph(), n);
        const Eigen::ArrayXd err = truth.evaluate(n, grid.points) - belief.node(n).mean(grid.points).array();
        total += spec.weights[static_cast<std::size_t>(n)] * err.square().mean();
    }
    return total;
}

namespace {

// Row-blocked so the working set stays in cache; the summation order depends
// only on the shapes, so equal inputs give bit-equal results.
double kernel_mean(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double bandwidth)
{
    constexpr Eigen::Index block = 64;
    const double gamma = -0.5 / (bandwidth * bandwidth);
    const Eigen::MatrixXd bt = b.transpose();
    const Eigen::RowVectorXd b_norms = b.rowwise().squaredNorm().transpose();
    Eigen::MatrixXd sq(std::min(block, a.rows()), b.rows());
    double total = 0.0;
    for (Eigen::Index r = 0; r < a.rows(); r += block) {
        const Eigen::Index h = std::min(block, a.rows() - r);
        const auto rows = a.middleRows(r, h);
        auto s = sq.topRows(h);
        s.noalias() = -2.0 * rows * bt;
        s.colwise() += rows.rowwise().squaredNorm();
        s.rowwise() += b_norms;
        total += (s.array().max(0.0) * gamma).exp().sum();
    }
    return total / static_cast<double>(a.rows() * b.rows());
}

}  // namespace

double mmd_squared_v(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double bandwidth)
{
    if (x.cols() != y.cols()) throw std::invalid_argument("sample sets differ in dimension");
    if (x.rows() == 0 || y.rows() == 0) throw std::invalid_argument("sample sets must be nonempty");
    if (!(bandwidth > 0.0)) throw std::invalid_argument("bandwidth must be positive");
    return kernel_mean(x, x, bandwidth) + kernel_mean(y, y, bandwidth) - 2.0 * kernel_mean(x, y, bandwidth);
}

double max_of(std::vector<double> v)
{
    if (v.empty()) throw std::invalid_argument("empty aggregate");
    return *std::max_element(v.begin(), v.end());
}

double lower_median(std::vector<double> v)
{
    if (v.empty()) throw std::invalid_argument("empty aggregate");
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>((v.size() - 1) / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
}

MetricReport evaluate(const ScmSpec& truth, const BeliefState& belief, const CandidateSet& cands, const RiskSpec& spec,
                      const MetricSettings& settings, Rng& rng)
{
    MetricReport report;
    report.true_total_risk = true_total_risk(truth, belief, spec);
    if (cands.empty()) throw std::invalid_argument("candidate set is empty");
    const PlugInModel estimate(belief);
    const std::uint64_t base = rng();
    for (std::size_t c = 0; c < cands.size(); ++c) {
        Rng kl_stream = substream(base, {c, 0});
        Rng mmd_stream = substream(base, {c, 1});
        const McEstimate kl = kl_interventional(truth, estimate, cands[c], settings.kl_samples, kl_stream);
        report.kl.push_back(kl.value);
        report.kl_error.push_back(kl.std_error);
        report.mmd.push_back(
            mmd_interventional(truth, estimate, cands[c], settings.mmd_samples, settings.mmd_bandwidth, mmd_stream));
    }
    std::vector<double> kl_clamped(report.kl.size());
    std::transform(report.kl.begin(), report.kl.end(), kl_clamped.begin(), [](double v) { return std::max(0.0, v); });
    report.kl_max = max_of(kl_clamped);
    report.kl_median = lower_median(kl_clamped);
    report.mmd_max = max_of(report.mmd);
    report.mmd_median = lower_median(report.mmd);
    return report;
}

}  // namespace scmal

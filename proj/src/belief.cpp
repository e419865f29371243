#include "scmal/belief.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace scmal {

RiskSpec RiskSpec::uniform(int n_nodes, Box box, double weight)
{
    RiskSpec spec;
    spec.domains.assign(static_cast<std::size_t>(n_nodes), box);
    spec.weights.assign(static_cast<std::size_t>(n_nodes), weight);
    return spec;
}

void RiskSpec::check(int n_nodes) const
{
    if (static_cast<int>(domains.size()) != n_nodes || static_cast<int>(weights.size()) != n_nodes)
        throw std::invalid_argument("risk spec needs one domain and one weight per node");
    for (const Box& b : domains)
        if (!(b.lo < b.hi) || !std::isfinite(b.lo) || !std::isfinite(b.hi))
            throw std::invalid_argument("importance domain needs finite lo < hi");
    for (double w : weights)
        if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("risk weights must be finite and nonnegative");
    if (grid_1d < 1 || grid_nd < 1) throw std::invalid_argument("quadrature resolution must be positive");
}

QuadratureGrid make_grid(Box box, Eigen::Index dim, int resolution)
{
    QuadratureGrid grid;
    const double step = (box.hi - box.lo) / resolution;
    grid.axis = Eigen::VectorXd::NullaryExpr(resolution, [&](Eigen::Index g) { return box.lo + (static_cast<double>(g) + 0.5) * step; });
    Eigen::Index count = 1;
    for (Eigen::Index d = 0; d < dim; ++d) count *= resolution;
    grid.points.resize(count, dim);
    for (Eigen::Index r = 0; r < count; ++r) {
        Eigen::Index rest = r;
        for (Eigen::Index d = dim - 1; d >= 0; --d) {
            grid.points(r, d) = grid.axis[rest % resolution];
            rest /= resolution;
        }
    }
    grid.weight = 1.0 / static_cast<double>(count);
    return grid;
}

QuadratureGrid node_grid(const RiskSpec& spec, const Graph& graph, int node)
{
    const auto dim = static_cast<Eigen::Index>(graph.parents(node).size());
    return make_grid(spec.domains.at(static_cast<std::size_t>(node)), dim, spec.resolution(dim));
}

NodeBelief::NodeBelief(const Kernel<double>& kernel, RegressionData<double> data) : kernel_(kernel)
{
    data.check();
    if (data.dim() == 0) {
        const auto [mean, var] = constant_posterior<double>(
            kernel.amplitude, data.noise_var, std::span<const double>(data.outputs.data(), static_cast<std::size_t>(data.size())));
        const_mean_ = mean;
        const_var_ = var;
        data_ = std::move(data);
    } else {
        gp_.emplace(kernel, std::move(data));
    }
}

std::pair<double, double> NodeBelief::mean_var(const Eigen::Ref<const Eigen::VectorXd>& x) const
{
    if (parentless()) {
        if (x.size() != 0) throw std::invalid_argument("parentless node takes no input");
        return {const_mean_, const_var_};
    }
    return gp_->mean_var(x);
}

Eigen::VectorXd NodeBelief::mean(const Eigen::Ref<const Eigen::MatrixXd>& q) const
{
    if (parentless()) return Eigen::VectorXd::Constant(q.rows(), const_mean_);
    return gp_->mean(q);
}

Eigen::VectorXd NodeBelief::variance(const Eigen::Ref<const Eigen::MatrixXd>& q) const
{
    if (parentless()) return Eigen::VectorXd::Constant(q.rows(), const_var_);
    return gp_->variance(q);
}

RegressionData<double> extract_node_data(const Dataset& dataset, int node, const Graph& graph, double noise_var)
{
    const std::vector<int>& pa = graph.parents(node);
    std::vector<const Draw*> kept;
    for (const Draw& d : dataset)
        if (!d.intervention.clamps_node(node)) kept.push_back(&d);
    Eigen::MatrixXd inputs(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(pa.size()));
    Eigen::VectorXd outputs(static_cast<Eigen::Index>(kept.size()));
    for (std::size_t s = 0; s < kept.size(); ++s) {
        const auto row = static_cast<Eigen::Index>(s);
        for (std::size_t k = 0; k < pa.size(); ++k) inputs(row, static_cast<Eigen::Index>(k)) = kept[s]->x[pa[k]];
        outputs[row] = kept[s]->x[node];
    }
    return RegressionData<double>(std::move(inputs), std::move(outputs), noise_var);
}

void BeliefState::check_draw(const Graph& graph, const Draw& draw)
{
    if (draw.x.size() != graph.size()) throw std::invalid_argument("draw dimension does not match graph");
    if (!draw.x.allFinite()) throw std::invalid_argument("draw contains non-finite values");
    draw.intervention.check(graph);
    for (const Clamp& c : draw.intervention.clamps())
        if (draw.x[c.node] != c.value) throw std::invalid_argument("draw disagrees with its intervention clamp");
}

BeliefState::BeliefState(Graph graph, std::vector<Kernel<double>> kernels, Eigen::VectorXd noise_vars, Dataset data)
    : graph_(std::move(graph)), kernels_(std::move(kernels)), noise_vars_(std::move(noise_vars)), data_(std::move(data))
{
    const int n = graph_.size();
    if (static_cast<int>(kernels_.size()) != n || noise_vars_.size() != n)
        throw std::invalid_argument("belief needs one kernel and one noise variance per node");
    for (int k = 0; k < n; ++k)
        if (!(noise_vars_[k] > 0.0)) throw std::invalid_argument("belief noise variances must be positive");
    for (const Draw& d : data_) check_draw(graph_, d);
    nodes_.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) nodes_.emplace_back(kernel(k), extract_node_data(data_, k, graph_, noise_vars_[k]));
}

BeliefState BeliefState::with_draw(Draw draw) const
{
    check_draw(graph_, draw);
    BeliefState next = *this;
    const Intervention i = draw.intervention;
    next.data_.push_back(std::move(draw));
    for (int k = 0; k < size(); ++k)
        if (!i.clamps_node(k))
            next.nodes_[static_cast<std::size_t>(k)] = NodeBelief(kernel(k), extract_node_data(next.data_, k, graph_, noise_vars_[k]));
    return next;
}

Conditional PredictiveModel::conditional(int node, const Eigen::MatrixXd& parent_values) const
{
    const NodeBelief& nb = belief_->node(node);
    return {nb.mean(parent_values).array(), nb.variance(parent_values).array() + belief_->noise_var(node)};
}

Eigen::MatrixXd sample_predictive_batch(const BeliefState& belief, const Intervention& i, Eigen::Index count, Rng& rng)
{
    return sample_batch(PredictiveModel(belief), i, count, rng);
}

Eigen::VectorXd sample_predictive(const BeliefState& belief, const Intervention& i, Rng& rng)
{
    return sample_predictive_batch(belief, i, 1, rng).row(0).transpose();
}

double node_risk(const BeliefState& belief, int node, const RiskSpec& spec)
{
    const NodeBelief& nb = belief.node(node);
    if (nb.parentless()) return nb.variance(Eigen::MatrixXd(1, 0))[0];
    const QuadratureGrid grid = node_grid(spec, belief.graph(), node);
    return nb.variance(grid.points).mean();
}

double expected_total_risk(const BeliefState& belief, const RiskSpec& spec)
{
    spec.check(belief.size());
    double total = 0.0;
    for (int n = 0; n < belief.size(); ++n) total += spec.weights[static_cast<std::size_t>(n)] * node_risk(belief, n, spec);
    return total;
}

double expected_risk_of_estimate(const BeliefState& belief, std::span<const FunctionEstimate> fhat, const RiskSpec& spec)
{
    spec.check(belief.size());
    if (static_cast<int>(fhat.size()) != belief.size()) throw std::invalid_argument("one estimate per node required");
    double total = 0.0;
    for (int n = 0; n < belief.size(); ++n) {
        const QuadratureGrid grid = node_grid(spec, belief.graph(), n);
        const NodeBelief& nb = belief.node(n);
        const Eigen::VectorXd mu = nb.mean(grid.points);
        const Eigen::VectorXd var = nb.variance(grid.points);
        Eigen::ArrayXd integrand(grid.points.rows());
        for (Eigen::Index r = 0; r < grid.points.rows(); ++r) {
            const double d = fhat[static_cast<std::size_t>(n)](grid.points.row(r).transpose()) - mu[r];
            integrand[r] = d * d + var[r];
        }
        total += spec.weights[static_cast<std::size_t>(n)] * integrand.mean();
    }
    return total;
}

NodeRiskGain::NodeRiskGain(const BeliefState& belief, int node, const RiskSpec& spec)
{
    const NodeBelief& nb = belief.node(node);
    current_ = node_risk(belief, node, spec);
    noise_ = belief.noise_var(node);
    kernel_ = nb.kernel();
    if (nb.parentless()) {
        parentless_ = true;
        const double m = static_cast<double>(nb.data().size()) + 1.0;
        after_constant_ = 1.0 / (1.0 / nb.prior_var() + m / noise_);
        return;
    }
    const NodePosterior<double>& gp = nb.gp();
    jitter_ = gp.jitter();
    inputs_ = gp.data().inputs;
    const Eigen::Index n = inputs_.rows();
    const Eigen::Index dim = inputs_.cols();
    const int resolution = spec.resolution(dim);
    axis_ = make_grid(spec.domains.at(static_cast<std::size_t>(node)), 1, resolution).axis;
    lower_ = n ? Eigen::MatrixXd(gp.factor().matrixL()) : Eigen::MatrixXd(0, 0);

    const double amp2 = kernel_.amplitude * kernel_.amplitude;
    Eigen::MatrixXd moment = Eigen::MatrixXd::Constant(n, n, amp2);
    weighted_factors_.reserve(static_cast<std::size_t>(dim));
    for (Eigen::Index d = 0; d < dim; ++d) {
        Eigen::MatrixXd e(n, resolution);
        for (Eigen::Index s = 0; s < n; ++s)
            for (Eigen::Index g = 0; g < resolution; ++g) e(s, g) = kernel_.factor(inputs_(s, d), axis_[g]) / resolution;
        moment.array() *= (resolution * (e * e.transpose())).array();
        weighted_factors_.push_back(std::move(e));
    }
    if (n) {
        const auto l = lower_.triangularView<Eigen::Lower>();
        const Eigen::MatrixXd half = l.solve(moment);
        whitened_moment_ = l.solve(half.transpose());
    } else {
        whitened_moment_.resize(0, 0);
    }
}

double NodeRiskGain::after_input(const Eigen::Ref<const Eigen::VectorXd>& x_pa) const
{
    if (parentless_) return after_constant_;
    const Eigen::Index dim = inputs_.cols();
    if (x_pa.size() != dim) throw std::invalid_argument("input dimension does not match node parents");
    const Eigen::Index n = inputs_.rows();
    const auto resolution = static_cast<double>(axis_.size());
    const double amp2 = kernel_.amplitude * kernel_.amplitude;

    // Integrals over the grid of k(z, x)^2 and of k(X_s, z) k(z, x).
    double self = amp2;
    Eigen::VectorXd cross = Eigen::VectorXd::Constant(n, amp2);
    for (Eigen::Index d = 0; d < dim; ++d) {
        const double xd = x_pa[d];
        const Eigen::VectorXd f = axis_.unaryExpr([&](double a) { return kernel_.factor(a, xd); });
        self *= f.squaredNorm() / resolution;
        if (n) cross.array() *= (weighted_factors_[static_cast<std::size_t>(d)] * f).array();
    }

    double c2 = self;
    double schur = kernel_.amplitude + noise_ + jitter_;
    if (n) {
        Eigen::VectorXd kx(n);
        for (Eigen::Index s = 0; s < n; ++s) kx[s] = kernel_(inputs_.row(s).transpose(), x_pa);
        const auto l = lower_.triangularView<Eigen::Lower>();
        l.solveInPlace(kx);
        l.solveInPlace(cross);
        c2 += kx.dot(whitened_moment_ * kx) - 2.0 * kx.dot(cross);
        schur -= kx.squaredNorm();
    }
    return std::max(0.0, current_ - std::max(0.0, c2) / schur);
}

RiskEvaluator::RiskEvaluator(const BeliefState& belief, const RiskSpec& spec) : graph_(belief.graph()), weights_(spec.weights)
{
    spec.check(belief.size());
    gains_.reserve(static_cast<std::size_t>(belief.size()));
    for (int n = 0; n < belief.size(); ++n) {
        gains_.emplace_back(belief, n, spec);
        current_ += weights_[static_cast<std::size_t>(n)] * gains_.back().current();
    }
}

double RiskEvaluator::after_datum(const Intervention& i, const Eigen::Ref<const Eigen::VectorXd>& x) const
{
    if (x.size() != graph_.size()) throw std::invalid_argument("draw dimension does not match graph");
    double total = 0.0;
    Eigen::VectorXd pa;
    for (int n = 0; n < graph_.size(); ++n) {
        const NodeRiskGain& g = gains_[static_cast<std::size_t>(n)];
        double r = g.current();
        if (!i.clamps_node(n)) {
            const std::vector<int>& parents = graph_.parents(n);
            pa.resize(static_cast<Eigen::Index>(parents.size()));
            for (std::size_t k = 0; k < parents.size(); ++k) pa[static_cast<Eigen::Index>(k)] = x[parents[k]];
            r = g.after_input(pa);
        }
        total += weights_[static_cast<std::size_t>(n)] * r;
    }
    return total;
}

}  // namespace scmal

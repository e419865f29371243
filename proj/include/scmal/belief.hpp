#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "scmal/gp.hpp"
#include "scmal/random.hpp"
#include "scmal/scm.hpp"

namespace scmal {

struct Box {
    double lo = -6.0;
    double hi = 6.0;
};

/// Importance measures and weights of the total risk. Each node's measure is
/// uniform on box^|pa(n)|, integrated by the midpoint rule with grid_1d points
/// for one parent and grid_nd points per axis for two or more.
struct RiskSpec {
    std::vector<Box> domains;
    std::vector<double> weights;
    int grid_1d = 200;
    int grid_nd = 60;

    static RiskSpec uniform(int n_nodes, Box box = {}, double weight = 1.0);

    int resolution(Eigen::Index dim) const { return dim <= 1 ? grid_1d : grid_nd; }
    void check(int n_nodes) const;
};

/// Tensor midpoint grid on box^dim with equal weights summing to one.
struct QuadratureGrid {
    Eigen::VectorXd axis;
    Eigen::MatrixXd points;  // axis.size()^dim rows; last coordinate varies fastest
    double weight = 1.0;

    Eigen::Index dim() const { return points.cols(); }
};

QuadratureGrid make_grid(Box box, Eigen::Index dim, int resolution);
QuadratureGrid node_grid(const RiskSpec& spec, const Graph& graph, int node);

/// Belief over one structural function. Parentless nodes hold the conjugate
/// posterior of an unknown constant with prior variance equal to the kernel
/// amplitude; other nodes hold an exact GP posterior.
class NodeBelief {
public:
    NodeBelief(const Kernel<double>& kernel, RegressionData<double> data);

    bool parentless() const { return !gp_.has_value(); }
    const Kernel<double>& kernel() const { return kernel_; }
    const RegressionData<double>& data() const { return parentless() ? data_ : gp_->data(); }
    const NodePosterior<double>& gp() const { return *gp_; }
    double prior_var() const { return kernel_.amplitude; }

    std::pair<double, double> mean_var(const Eigen::Ref<const Eigen::VectorXd>& x) const;
    Eigen::VectorXd mean(const Eigen::Ref<const Eigen::MatrixXd>& q) const;
    Eigen::VectorXd variance(const Eigen::Ref<const Eigen::MatrixXd>& q) const;

private:
    Kernel<double> kernel_;
    RegressionData<double> data_;  // parentless nodes only
    std::optional<NodePosterior<double>> gp_;
    double const_mean_ = 0.0;
    double const_var_ = 0.0;
};

/// Regression pairs (x_pa(n), x_n) from every draw whose intervention leaves
/// node n unclamped, in dataset order.
RegressionData<double> extract_node_data(const Dataset& dataset, int node, const Graph& graph, double noise_var);

/// Immutable snapshot of the beliefs over all structural functions given a
/// dataset. Adding a draw returns a new snapshot.
class BeliefState {
public:
    BeliefState(Graph graph, std::vector<Kernel<double>> kernels, Eigen::VectorXd noise_vars, Dataset data = {});

    BeliefState with_draw(Draw draw) const;

    int size() const { return graph_.size(); }
    const Graph& graph() const { return graph_; }
    const Dataset& dataset() const { return data_; }
    const NodeBelief& node(int n) const { return nodes_.at(static_cast<std::size_t>(n)); }
    const Kernel<double>& kernel(int n) const { return kernels_.at(static_cast<std::size_t>(n)); }
    const std::vector<Kernel<double>>& kernels() const { return kernels_; }
    double noise_var(int n) const { return noise_vars_[n]; }
    const Eigen::VectorXd& noise_vars() const { return noise_vars_; }

private:
    static void check_draw(const Graph& graph, const Draw& draw);

    Graph graph_;
    std::vector<Kernel<double>> kernels_;
    Eigen::VectorXd noise_vars_;
    Dataset data_;
    std::vector<NodeBelief> nodes_;
};

/// The belief's predictive interventional distribution: each node is
/// N(mu(x_pa), k(x_pa, x_pa) + noise) given its parents, independently per draw.
class PredictiveModel {
public:
    explicit PredictiveModel(const BeliefState& belief) : belief_(&belief) {}
    const Graph& graph() const { return belief_->graph(); }
    Conditional conditional(int node, const Eigen::MatrixXd& parent_values) const;

private:
    const BeliefState* belief_;
};

Eigen::VectorXd sample_predictive(const BeliefState& belief, const Intervention& i, Rng& rng);
Eigen::MatrixXd sample_predictive_batch(const BeliefState& belief, const Intervention& i, Eigen::Index count, Rng& rng);

using FunctionEstimate = std::function<double(const Eigen::VectorXd&)>;

/// Integrated posterior variance of node n under its importance measure.
double node_risk(const BeliefState& belief, int node, const RiskSpec& spec);

/// Weighted sum of node_risk: the expected total risk at the posterior mean.
double expected_total_risk(const BeliefState& belief, const RiskSpec& spec);

/// Posterior expectation of the total risk of an arbitrary estimate: the
/// integral of (fhat - mu)^2 + posterior variance, weighted per node.
double expected_risk_of_estimate(const BeliefState& belief, std::span<const FunctionEstimate> fhat, const RiskSpec& spec);

/// Node risk after one more datum at a given parent configuration, computed
/// from the current posterior by the rank-one variance update. The quadrature
/// terms factor over the tensor grid, so a query costs O(n * G * dim).
class NodeRiskGain {
public:
    NodeRiskGain(const BeliefState& belief, int node, const RiskSpec& spec);

    double current() const { return current_; }
    double after_input(const Eigen::Ref<const Eigen::VectorXd>& x_pa) const;

private:
    bool parentless_ = false;
    double current_ = 0.0;
    double after_constant_ = 0.0;  // parentless only

    Kernel<double> kernel_;
    double noise_ = 0.0;
    double jitter_ = 0.0;
    Eigen::MatrixXd inputs_;
    Eigen::MatrixXd lower_;
    Eigen::VectorXd axis_;
    std::vector<Eigen::MatrixXd> weighted_factors_;  // per dim: e(X_sd, a_g) / G
    Eigen::MatrixXd whitened_moment_;                 // L^-1 Q L^-T
};

/// Expected total risk after adding a single draw, without refitting.
class RiskEvaluator {
public:
    RiskEvaluator(const BeliefState& belief, const RiskSpec& spec);

    double current() const { return current_; }
    double node_current(int n) const { return gains_.at(static_cast<std::size_t>(n)).current(); }
    double node_after(int n, const Eigen::Ref<const Eigen::VectorXd>& x_pa) const
    {
        return gains_.at(static_cast<std::size_t>(n)).after_input(x_pa);
    }

    double after_datum(const Intervention& i, const Eigen::Ref<const Eigen::VectorXd>& x) const;

private:
    Graph graph_;
    std::vector<double> weights_;
    std::vector<NodeRiskGain> gains_;
    double current_ = 0.0;
};

}  // namespace scmal

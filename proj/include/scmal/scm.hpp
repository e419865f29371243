#pragma once

#include <concepts>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "scmal/expression.hpp"
#include "scmal/random.hpp"

namespace scmal {

class GraphError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

using ParentLists = std::vector<std::vector<int>>;

/// Topological order of the DAG described by per-node parent lists. Ties are
/// broken by ascending node id. Throws GraphError if a cycle exists.
std::vector<int> topo_order(const ParentLists& parents);

/// Known causal DAG. Parent order is significant: it fixes the coordinate order
/// of the corresponding structural function's inputs.
class Graph {
public:
    Graph() = default;
    Graph(int n_nodes, ParentLists parents);

    static Graph from_edges(int n_nodes, std::span<const std::pair<int, int>> edges);
    static Graph chain(int n_nodes);
    static Graph empty(int n_nodes);

    int size() const { return static_cast<int>(parents_.size()); }
    const std::vector<int>& parents(int node) const { return parents_.at(static_cast<std::size_t>(node)); }
    const ParentLists& parent_lists() const { return parents_; }
    const std::vector<int>& order() const { return order_; }
    bool is_root(int node) const { return parents(node).empty(); }

    /// Nodes along the chain from its root when the graph is a single directed
    /// path covering every node, otherwise nullopt.
    std::optional<std::vector<int>> chain_order() const;

    friend bool operator==(const Graph& a, const Graph& b) { return a.parents_ == b.parents_; }

private:
    ParentLists parents_;
    std::vector<int> order_;
};

struct Clamp {
    int node;
    double value;
    friend bool operator==(const Clamp&, const Clamp&) = default;
};

/// A do-intervention: a set of clamped nodes. The default value is the null
/// intervention (pure observation).
class Intervention {
public:
    Intervention() = default;
    explicit Intervention(std::vector<Clamp> clamps);

    static Intervention none() { return {}; }
    static Intervention single(int node, double value) { return Intervention({{node, value}}); }

    bool empty() const { return clamps_.empty(); }
    std::span<const Clamp> clamps() const { return clamps_; }
    std::optional<double> clamp_of(int node) const;
    bool clamps_node(int node) const { return clamp_of(node).has_value(); }

    /// Throws std::invalid_argument if a clamped node id is outside the graph.
    void check(const Graph& graph) const;

    /// "none" or e.g. "do(X0=1;X1=-2.5)".
    std::string to_string() const;
    std::string nodes_string() const;
    std::string values_string() const;

    friend bool operator==(const Intervention&, const Intervention&) = default;

private:
    std::vector<Clamp> clamps_;  // sorted by node id
};

struct Draw {
    Intervention intervention;
    Eigen::VectorXd x;
};

using Dataset = std::vector<Draw>;

/// Per-sample Gaussian conditional of a node given its parents.
struct Conditional {
    Eigen::ArrayXd mean;
    Eigen::ArrayXd variance;
};

/// Anything with a DAG and a Gaussian conditional per node: the ground-truth
/// SCM, the plug-in estimate, and the predictive belief all fit.
template <class M>
concept StructuralModel = requires(const M& m, int node, const Eigen::MatrixXd& parent_values) {
    { m.graph() } -> std::convertible_to<const Graph&>;
    { m.conditional(node, parent_values) } -> std::same_as<Conditional>;
};

/// Ground-truth SCM with additive Gaussian noise.
class ScmSpec {
public:
    ScmSpec(Graph graph, std::vector<Expression> functions, Eigen::VectorXd noise_vars);

    const Graph& graph() const { return graph_; }
    const Expression& function(int node) const { return functions_.at(static_cast<std::size_t>(node)); }
    const Eigen::VectorXd& noise_vars() const { return noise_vars_; }
    int size() const { return graph_.size(); }

    /// Structural function value at each row of `parent_values`.
    Eigen::ArrayXd evaluate(int node, const Eigen::Ref<const Eigen::MatrixXd>& parent_values) const;

    Conditional conditional(int node, const Eigen::MatrixXd& parent_values) const;

private:
    Graph graph_;
    std::vector<Expression> functions_;
    Eigen::VectorXd noise_vars_;
};

/// Columns `parents` of `x`, one row per sample.
Eigen::MatrixXd gather_parents(const Eigen::Ref<const Eigen::MatrixXd>& x, const std::vector<int>& parents);

/// Ancestral sampling of `count` draws (rows) under intervention `i`. Normal
/// variates are consumed node by node in topological order.
template <StructuralModel M>
Eigen::MatrixXd sample_batch(const M& model, const Intervention& i, Eigen::Index count, Rng& rng)
{
    const Graph& g = model.graph();
    i.check(g);
    Eigen::MatrixXd x(count, g.size());
    for (int n : g.order()) {
        if (auto v = i.clamp_of(n)) {
            x.col(n).setConstant(*v);
            continue;
        }
        const Conditional c = model.conditional(n, gather_parents(x, g.parents(n)));
        x.col(n) = c.mean.matrix() + (c.variance.sqrt() * standard_normals(count, rng).array()).matrix();
    }
    return x;
}

/// Log-density of each row of `x` under do(i), summed over the non-clamped
/// nodes only. Clamped coordinates must equal their clamp values exactly.
template <StructuralModel M>
Eigen::ArrayXd log_density_batch(const M& model, const Intervention& i, const Eigen::MatrixXd& x)
{
    const Graph& g = model.graph();
    i.check(g);
    if (x.cols() != g.size()) throw std::invalid_argument("draw dimension does not match graph");
    Eigen::ArrayXd total = Eigen::ArrayXd::Zero(x.rows());
    constexpr double log_2pi = 1.8378770664093454835606594728112;
    for (int n = 0; n < g.size(); ++n) {
        if (auto v = i.clamp_of(n)) {
            if ((x.col(n).array() != *v).any()) throw std::invalid_argument("clamped coordinate does not match intervention");
            continue;
        }
        const Conditional c = model.conditional(n, gather_parents(x, g.parents(n)));
        if ((c.variance <= 0.0).any()) throw std::domain_error("log-density needs positive conditional variance");
        const Eigen::ArrayXd r = x.col(n).array() - c.mean;
        total -= 0.5 * (log_2pi + c.variance.log() + r.square() / c.variance);
    }
    return total;
}

Draw sample_scm(const ScmSpec& scm, const Intervention& i, Rng& rng);

double log_density(const ScmSpec& scm, const Intervention& i, const Eigen::VectorXd& x);

}  // namespace scmal

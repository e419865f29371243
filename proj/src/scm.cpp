#include "scmal/scm.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>
#include <sstream>

namespace scmal {

std::vector<int> topo_order(const ParentLists& parents)
{
    const int n = static_cast<int>(parents.size());
    std::vector<int> pending(static_cast<std::size_t>(n), 0);
    std::vector<std::vector<int>> children(static_cast<std::size_t>(n));
    for (int c = 0; c < n; ++c) {
        for (int p : parents[static_cast<std::size_t>(c)]) {
            if (p < 0 || p >= n) throw GraphError("parent id " + std::to_string(p) + " out of range");
            children[static_cast<std::size_t>(p)].push_back(c);
            ++pending[static_cast<std::size_t>(c)];
        }
    }
    std::priority_queue<int, std::vector<int>, std::greater<>> ready;
    for (int v = 0; v < n; ++v)
        if (pending[static_cast<std::size_t>(v)] == 0) ready.push(v);
    std::vector<int> order;
    order.reserve(static_cast<std::size_t>(n));
    while (!ready.empty()) {
        const int v = ready.top();
        ready.pop();
        order.push_back(v);
        for (int c : children[static_cast<std::size_t>(v)])
            if (--pending[static_cast<std::size_t>(c)] == 0) ready.push(c);
    }
    if (static_cast<int>(order.size()) != n) throw GraphError("graph contains a cycle");
    return order;
}

Graph::Graph(int n_nodes, ParentLists parents) : parents_(std::move(parents))
{
    if (n_nodes <= 0) throw GraphError("graph needs at least one node");
    if (static_cast<int>(parents_.size()) != n_nodes) throw GraphError("parent list count does not match node count");
    for (int c = 0; c < n_nodes; ++c) {
        const auto& pa = parents_[static_cast<std::size_t>(c)];
        for (std::size_t k = 0; k < pa.size(); ++k) {
            if (pa[k] < 0 || pa[k] >= n_nodes) throw GraphError("parent id out of range for node " + std::to_string(c));
            if (pa[k] == c) throw GraphError("self loop on node " + std::to_string(c));
            if (std::find(pa.begin(), pa.begin() + static_cast<std::ptrdiff_t>(k), pa[k]) != pa.begin() + static_cast<std::ptrdiff_t>(k))
                throw GraphError("duplicate parent for node " + std::to_string(c));
        }
    }
    order_ = topo_order(parents_);
}

Graph Graph::from_edges(int n_nodes, std::span<const std::pair<int, int>> edges)
{
    if (n_nodes <= 0) throw GraphError("graph needs at least one node");
    ParentLists parents(static_cast<std::size_t>(n_nodes));
    for (auto [from, to] : edges) {
        if (to < 0 || to >= n_nodes) throw GraphError("edge target out of range");
        parents[static_cast<std::size_t>(to)].push_back(from);
    }
    return Graph(n_nodes, std::move(parents));
}

Graph Graph::chain(int n_nodes)
{
    ParentLists parents(static_cast<std::size_t>(std::max(n_nodes, 0)));
    for (int n = 1; n < n_nodes; ++n) parents[static_cast<std::size_t>(n)] = {n - 1};
    return Graph(n_nodes, std::move(parents));
}

Graph Graph::empty(int n_nodes) { return Graph(n_nodes, ParentLists(static_cast<std::size_t>(std::max(n_nodes, 0)))); }

std::optional<std::vector<int>> Graph::chain_order() const
{
    const std::vector<int>& o = order_;
    if (o.empty()) return std::nullopt;
    if (!parents(o.front()).empty()) return std::nullopt;
    for (std::size_t k = 1; k < o.size(); ++k) {
        const auto& pa = parents(o[k]);
        if (pa.size() != 1 || pa.front() != o[k - 1]) return std::nullopt;
    }
    return o;
}

Intervention::Intervention(std::vector<Clamp> clamps) : clamps_(std::move(clamps))
{
    std::sort(clamps_.begin(), clamps_.end(), [](const Clamp& a, const Clamp& b) { return a.node < b.node; });
    for (std::size_t k = 0; k < clamps_.size(); ++k) {
        if (clamps_[k].node < 0) throw std::invalid_argument("negative node id in intervention");
        if (!std::isfinite(clamps_[k].value)) throw std::invalid_argument("non-finite clamp value");
        if (k > 0 && clamps_[k].node == clamps_[k - 1].node) throw std::invalid_argument("node clamped twice");
    }
}

std::optional<double> Intervention::clamp_of(int node) const
{
    for (const Clamp& c : clamps_)
        if (c.node == node) return c.value;
    return std::nullopt;
}

void Intervention::check(const Graph& graph) const
{
    for (const Clamp& c : clamps_)
        if (c.node >= graph.size()) throw std::invalid_argument("intervention clamps unknown node " + std::to_string(c.node));
}

namespace {

std::string format_value(double v)
{
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

std::string Intervention::to_string() const
{
    if (clamps_.empty()) return "none";
    std::string s = "do(";
    for (std::size_t k = 0; k < clamps_.size(); ++k) {
        if (k) s += ';';
        s += "X" + std::to_string(clamps_[k].node) + "=" + format_value(clamps_[k].value);
    }
    return s + ")";
}

std::string Intervention::nodes_string() const
{
    std::string s;
    for (std::size_t k = 0; k < clamps_.size(); ++k) s += (k ? ";" : "") + std::to_string(clamps_[k].node);
    return s;
}

std::string Intervention::values_string() const
{
    std::string s;
    for (std::size_t k = 0; k < clamps_.size(); ++k) s += (k ? ";" : "") + format_value(clamps_[k].value);
    return s;
}

ScmSpec::ScmSpec(Graph graph, std::vector<Expression> functions, Eigen::VectorXd noise_vars)
    : graph_(std::move(graph)), functions_(std::move(functions)), noise_vars_(std::move(noise_vars))
{
    const int n = graph_.size();
    if (static_cast<int>(functions_.size()) != n) throw std::invalid_argument("one structural function per node required");
    if (noise_vars_.size() != n) throw std::invalid_argument("one noise variance per node required");
    for (int k = 0; k < n; ++k) {
        const int arity = static_cast<int>(graph_.parents(k).size());
        if (functions_[static_cast<std::size_t>(k)].max_parent_index() >= arity)
            throw std::invalid_argument("function of node " + std::to_string(k) + " references a missing parent");
        if (!(noise_vars_[k] >= 0.0) || !std::isfinite(noise_vars_[k]))
            throw std::invalid_argument("noise variance of node " + std::to_string(k) + " must be finite and nonnegative");
    }
}

Eigen::ArrayXd ScmSpec::evaluate(int node, const Eigen::Ref<const Eigen::MatrixXd>& parent_values) const
{
    return function(node).evaluate(parent_values);
}

Conditional ScmSpec::conditional(int node, const Eigen::MatrixXd& parent_values) const
{
    return {evaluate(node, parent_values), Eigen::ArrayXd::Constant(parent_values.rows(), noise_vars_[node])};
}

Eigen::MatrixXd gather_parents(const Eigen::Ref<const Eigen::MatrixXd>& x, const std::vector<int>& parents)
{
    Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(parents.size()));
    for (std::size_t k = 0; k < parents.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = x.col(parents[k]);
    return out;
}

Draw sample_scm(const ScmSpec& scm, const Intervention& i, Rng& rng)
{
    Eigen::MatrixXd x = sample_batch(scm, i, 1, rng);
    return {i, x.row(0).transpose()};
}

double log_density(const ScmSpec& scm, const Intervention& i, const Eigen::VectorXd& x)
{
    return log_density_batch(scm, i, x.transpose())[0];
}

}  // namespace scmal

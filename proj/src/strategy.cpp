#include "scmal/strategy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace scmal {

void CandidateSet::check(const Graph& graph) const
{
    for (std::size_t a = 0; a < items.size(); ++a) {
        items[a].check(graph);
        for (std::size_t b = 0; b < a; ++b)
            if (items[a] == items[b]) throw std::invalid_argument("duplicate candidate " + items[a].to_string());
    }
}

double CostModel::cost(const Intervention& i) const
{
    std::vector<int> nodes;
    for (const Clamp& c : i.clamps()) nodes.push_back(c.node);
    const auto it = by_nodes.find(nodes);
    const double c = it == by_nodes.end() ? default_cost : it->second;
    if (!(c > 0.0)) throw std::invalid_argument("intervention costs must be positive");
    return c;
}

CostModel CostModel::scaled(double factor) const
{
    CostModel out = *this;
    out.default_cost *= factor;
    for (auto& [nodes, c] : out.by_nodes) c *= factor;
    return out;
}

double value_of(double current_risk, double post_risk, double cost)
{
    if (!(cost > 0.0)) throw std::invalid_argument("cost must be positive");
    return (current_risk - post_risk) / cost;
}

double risk_after_datum(const BeliefState& belief, const Intervention& i, const Eigen::VectorXd& x, const RiskSpec& spec)
{
    return expected_total_risk(belief.with_draw(Draw{i, x}), spec);
}

RiskEstimate estimate_post_risk_sampling(const RiskEvaluator& evaluator, const BeliefState& belief,
                                         const Intervention& i, int samples, Rng& rng)
{
    if (samples < 1) throw std::invalid_argument("need at least one sample");
    if (i.clamps().size() == static_cast<std::size_t>(belief.size())) return {evaluator.current(), 0.0};
    const Eigen::MatrixXd draws = sample_predictive_batch(belief, i, samples, rng);
    Eigen::ArrayXd risks(samples);
    for (int t = 0; t < samples; ++t) risks[t] = evaluator.after_datum(i, draws.row(t).transpose());
    RiskEstimate out;
    out.mean = risks.mean();
    if (samples > 1) {
        const double var = (risks - out.mean).square().sum() / (samples - 1);
        out.std_error = std::sqrt(var / samples);
    }
    return out;
}

RiskEstimate estimate_post_risk_sampling(const BeliefState& belief, const Intervention& i, int samples,
                                         const RiskSpec& spec, Rng& rng)
{
    return estimate_post_risk_sampling(RiskEvaluator(belief, spec), belief, i, samples, rng);
}

Eigen::Index DpTables::nearest(int position, double value) const
{
    const Eigen::VectorXd& g = grids.at(static_cast<std::size_t>(position));
    if (g.size() == 1) return 0;
    const double step = (g[g.size() - 1] - g[0]) / static_cast<double>(g.size() - 1);
    const double r = std::round((value - g[0]) / step);
    return static_cast<Eigen::Index>(std::clamp(r, 0.0, static_cast<double>(g.size() - 1)));
}

namespace {

// Normalized Gaussian weights of `grid` under N(mean, var).
Eigen::RowVectorXd discrete_gaussian(const Eigen::VectorXd& grid, double mean, double var)
{
    Eigen::RowVectorXd logp = (-(grid.array() - mean).square() / (2.0 * var)).matrix().transpose();
    Eigen::RowVectorXd p = (logp.array() - logp.maxCoeff()).exp().matrix();
    return p / p.sum();
}

}  // namespace

DpTables build_dp_tables(const BeliefState& belief, const DpGridSpec& grid, const RiskSpec& spec)
{
    spec.check(belief.size());
    if (grid.points < 2) throw std::invalid_argument("dp grid needs at least two points");
    const auto chain = belief.graph().chain_order();
    if (!chain) throw GraphError("dynamic programming requires a chain graph");

    DpTables t;
    t.chain = *chain;
    const int n = t.size();
    for (int k = 0; k < n; ++k) {
        // Values of position k feed node k+1, so cover that node's domain.
        const int ref = t.chain[static_cast<std::size_t>(std::min(k + 1, n - 1))];
        const Box box = spec.domains.at(static_cast<std::size_t>(ref));
        const double ext = grid.margin * belief.kernel(ref).bandwidth;
        t.grids.push_back(Eigen::VectorXd::LinSpaced(grid.points, box.lo - ext, box.hi + ext));
    }

    const RiskEvaluator evaluator(belief, spec);
    const int root = t.chain.front();
    const auto [root_mean, root_var] = belief.node(root).mean_var(Eigen::VectorXd(0));
    t.root_probs = discrete_gaussian(t.grids.front(), root_mean, root_var + belief.noise_var(root)).transpose();
    t.root_after = spec.weights[static_cast<std::size_t>(root)] * evaluator.node_after(root, Eigen::VectorXd(0));

    t.transitions.resize(static_cast<std::size_t>(n));
    t.gains.resize(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        const int node = t.chain[static_cast<std::size_t>(k)];
        const double w = spec.weights[static_cast<std::size_t>(node)];
        t.current.push_back(w * evaluator.node_current(node));
        if (k == 0) continue;
        const Eigen::VectorXd& from = t.grids[static_cast<std::size_t>(k - 1)];
        const Eigen::VectorXd& to = t.grids[static_cast<std::size_t>(k)];
        Eigen::MatrixXd p(from.size(), to.size());
        Eigen::VectorXd u(from.size());
        Eigen::VectorXd x(1);
        for (Eigen::Index i = 0; i < from.size(); ++i) {
            x[0] = from[i];
            const auto [mean, var] = belief.node(node).mean_var(x);
            p.row(i) = discrete_gaussian(to, mean, var + belief.noise_var(node));
            u[i] = w * evaluator.node_after(node, x);
        }
        t.transitions[static_cast<std::size_t>(k)] = std::move(p);
        t.gains[static_cast<std::size_t>(k)] = std::move(u);
    }
    return t;
}

namespace {

// Expected sum of gains for positions first+1 .. last given position `first`,
// as a vector over grids[first].
Eigen::VectorXd expected_gains(const DpTables& t, int first, int last)
{
    Eigen::VectorXd v = Eigen::VectorXd::Zero(t.grids[static_cast<std::size_t>(last)].size());
    for (int k = last - 1; k >= first; --k) {
        const auto next = static_cast<std::size_t>(k + 1);
        v = t.gains[next] + t.transitions[next] * v;
    }
    return v;
}

}  // namespace

Eigen::MatrixXd dp_upstream_post_risks(const DpTables& t)
{
    const int n = t.size();
    Eigen::MatrixXd out(n, t.grids.front().size());
    std::vector<Eigen::VectorXd> downstream(static_cast<std::size_t>(n));
    downstream.back() = Eigen::VectorXd::Zero(t.grids.back().size());
    for (int k = n - 2; k >= 0; --k) {
        const auto next = static_cast<std::size_t>(k + 1);
        downstream[static_cast<std::size_t>(k)] = t.gains[next] + t.transitions[next] * downstream[next];
    }
    double clamped = 0.0;
    for (int k = 0; k < n; ++k) {
        clamped += t.current[static_cast<std::size_t>(k)];
        out.row(k) = (downstream[static_cast<std::size_t>(k)].array() + clamped).matrix().transpose();
    }
    return out;
}

Eigen::MatrixXd dp_single_post_risks(const DpTables& t)
{
    const int n = t.size();
    Eigen::MatrixXd out(n, t.grids.front().size());
    for (int k = 0; k < n; ++k) {
        const Eigen::VectorXd downstream = expected_gains(t, k, n - 1);
        const double current = t.current[static_cast<std::size_t>(k)];
        if (k == 0) {
            out.row(k) = (downstream.array() + current).matrix().transpose();
            continue;
        }
        // Positions before k are still observed: the root gets one more
        // observation and each node up to k-1 one more input.
        const double upstream = t.root_probs.dot(expected_gains(t, 0, k - 1));
        out.row(k) = (downstream.array() + (t.root_after + upstream + current)).matrix().transpose();
    }
    return out;
}

double dp_null_post_risk(const DpTables& t)
{
    return t.root_after + t.root_probs.dot(expected_gains(t, 0, t.size() - 1));
}

PolicyKind parse_policy(std::string_view name)
{
    if (name == "observe") return PolicyKind::observe;
    if (name == "random") return PolicyKind::random;
    if (name == "sampling") return PolicyKind::sampling;
    if (name == "dp_upstream") return PolicyKind::dp_upstream;
    if (name == "dp_single") return PolicyKind::dp_single;
    throw std::invalid_argument("unknown policy '" + std::string(name) + "'");
}

std::string_view policy_name(PolicyKind kind)
{
    switch (kind) {
    case PolicyKind::observe: return "observe";
    case PolicyKind::random: return "random";
    case PolicyKind::sampling: return "sampling";
    case PolicyKind::dp_upstream: return "dp_upstream";
    case PolicyKind::dp_single: return "dp_single";
    }
    return "unknown";
}

namespace {

// Post-risk of a candidate read off the DP tables; the candidate must be the
// null intervention or match the family of `kind`.
double dp_lookup(const DpTables& t, const Eigen::MatrixXd& rows, PolicyKind kind, const Intervention& i)
{
    if (i.empty()) return dp_null_post_risk(t);
    const auto clamps = i.clamps();
    std::vector<int> position(t.chain.size());
    for (std::size_t k = 0; k < t.chain.size(); ++k) position[static_cast<std::size_t>(t.chain[k])] = static_cast<int>(k);
    int deepest = -1;
    double value = 0.0;
    for (const Clamp& c : clamps) {
        const int p = position[static_cast<std::size_t>(c.node)];
        if (p > deepest) {
            deepest = p;
            value = c.value;
        }
    }
    const bool upstream_shape = static_cast<int>(clamps.size()) == deepest + 1;
    const bool single_shape = clamps.size() == 1;
    if ((kind == PolicyKind::dp_upstream && !upstream_shape) || (kind == PolicyKind::dp_single && !single_shape))
        throw std::invalid_argument("candidate " + i.to_string() + " does not belong to the " +
                                    std::string(policy_name(kind)) + " family");
    return rows(deepest, t.nearest(deepest, value));
}

}  // namespace

Selection select_intervention(const PolicyConfig& policy, const BeliefState& belief, const CandidateSet& cands,
                              const CostModel& costs, const RiskSpec& spec, Rng& rng)
{
    Selection sel;
    if (policy.kind == PolicyKind::observe) return sel;
    if (cands.empty()) throw std::invalid_argument("candidate set is empty");
    if (policy.kind == PolicyKind::random) {
        std::uniform_int_distribution<std::size_t> pick(0, cands.size() - 1);
        sel.index = pick(rng);
        sel.chosen = cands[*sel.index];
        return sel;
    }

    sel.post_risks.resize(cands.size());
    if (policy.kind == PolicyKind::sampling) {
        const RiskEvaluator evaluator(belief, spec);
        sel.current_risk = evaluator.current();
        const std::uint64_t base = rng();
        for (std::size_t c = 0; c < cands.size(); ++c) {
            Rng stream = substream(base, {c});
            sel.post_risks[c] = estimate_post_risk_sampling(evaluator, belief, cands[c], policy.samples, stream).mean;
        }
    } else {
        const DpTables t = build_dp_tables(belief, policy.grid, spec);
        for (double u : t.current) sel.current_risk += u;
        const Eigen::MatrixXd rows =
            policy.kind == PolicyKind::dp_upstream ? dp_upstream_post_risks(t) : dp_single_post_risks(t);
        for (std::size_t c = 0; c < cands.size(); ++c) sel.post_risks[c] = dp_lookup(t, rows, policy.kind, cands[c]);
    }

    sel.values.resize(cands.size());
    std::size_t best = 0;
    for (std::size_t c = 0; c < cands.size(); ++c) {
        sel.values[c] = value_of(sel.current_risk, sel.post_risks[c], costs.cost(cands[c]));
        if (sel.values[c] > sel.values[best]) best = c;
    }
    sel.index = best;
    sel.chosen = cands[best];
    return sel;
}

}  // namespace scmal

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "scmal/belief.hpp"
#include "scmal/random.hpp"
#include "scmal/scm.hpp"

namespace scmal {

/// Discretized intervention set searched by the policies.
struct CandidateSet {
    std::vector<Intervention> items;

    std::size_t size() const { return items.size(); }
    bool empty() const { return items.empty(); }
    const Intervention& operator[](std::size_t k) const { return items[k]; }

    /// Throws std::invalid_argument on duplicates or clamps outside the graph.
    void check(const Graph& graph) const;
};

/// Cost per intervention, looked up by the set of clamped nodes.
struct CostModel {
    double default_cost = 1.0;
    std::map<std::vector<int>, double> by_nodes;

    double cost(const Intervention& i) const;
    CostModel scaled(double factor) const;
};

/// Expected reduction of the expected total risk per unit cost.
double value_of(double current_risk, double post_risk, double cost);

/// Expected total risk after adding (i, x), by refitting the affected nodes.
/// Only the parent coordinates of x matter; outputs are placeholders.
double risk_after_datum(const BeliefState& belief, const Intervention& i, const Eigen::VectorXd& x, const RiskSpec& spec);

struct RiskEstimate {
    double mean = 0.0;
    double std_error = 0.0;
};

/// Monte-Carlo estimate of the expected total risk after one draw under i,
/// averaging over `samples` draws from the belief's predictive distribution.
RiskEstimate estimate_post_risk_sampling(const BeliefState& belief, const Intervention& i, int samples,
                                         const RiskSpec& spec, Rng& rng);
RiskEstimate estimate_post_risk_sampling(const RiskEvaluator& evaluator, const BeliefState& belief,
                                         const Intervention& i, int samples, Rng& rng);

struct DpGridSpec {
    int points = 101;
    double margin = 2.0;  // in kernel length-scales beyond the importance domain
};

/// Discretized chain quantities shared by the two dynamic programs. Index k
/// is the position along the chain (k = 0 is the root). Transition k maps the
/// grid of position k-1 (rows) to the grid of position k (columns); gain k is
/// the weighted risk of node k after one new input at each grid point of k-1.
struct DpTables {
    std::vector<int> chain;
    std::vector<Eigen::VectorXd> grids;
    Eigen::VectorXd root_probs;
    std::vector<Eigen::MatrixXd> transitions;  // entry 0 unused
    std::vector<Eigen::VectorXd> gains;        // entry 0 unused
    std::vector<double> current;
    double root_after = 0.0;

    int size() const { return static_cast<int>(chain.size()); }
    Eigen::Index nearest(int position, double value) const;
};

DpTables build_dp_tables(const BeliefState& belief, const DpGridSpec& grid, const RiskSpec& spec);

/// Row k, column j: estimated risk after clamping chain positions 0..k with
/// position k at grids[k][j].
Eigen::MatrixXd dp_upstream_post_risks(const DpTables& t);

/// Row k, column j: estimated risk after clamping only position k at grids[k][j].
Eigen::MatrixXd dp_single_post_risks(const DpTables& t);

/// Estimated risk after a pure observation.
double dp_null_post_risk(const DpTables& t);

enum class PolicyKind { observe, random, sampling, dp_upstream, dp_single };

PolicyKind parse_policy(std::string_view name);
std::string_view policy_name(PolicyKind kind);

struct PolicyConfig {
    PolicyKind kind = PolicyKind::sampling;
    int samples = 64;
    DpGridSpec grid;
};

struct Selection {
    Intervention chosen;
    std::optional<std::size_t> index;  // unset for observe
    double current_risk = 0.0;
    std::vector<double> post_risks;    // per candidate, empty for baselines
    std::vector<double> values;
};

/// Picks the next intervention. Active policies take the argmax of value_of
/// over all candidates; ties go to the earliest candidate.
Selection select_intervention(const PolicyConfig& policy, const BeliefState& belief, const CandidateSet& cands,
                              const CostModel& costs, const RiskSpec& spec, Rng& rng);

}  // namespace scmal

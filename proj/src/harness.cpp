#include "scmal/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace scmal {

using nlohmann::json;

namespace {

constexpr int config_version = 1;

void require_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed,
                  std::initializer_list<const char*> required = {})
{
    if (!obj.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, value] : obj.items()) {
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end())
            throw ConfigError("unknown key '" + key + "' in " + where);
    }
    for (const char* r : required)
        if (!obj.contains(r)) throw ConfigError("missing key '" + std::string(r) + "' in " + where);
}

template <class T>
T get(const json& obj, const char* key, const std::string& where, T fallback)
{
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("bad value for '" + std::string(key) + "' in " + where + ": " + e.what());
    }
}

// A scalar applies to every node; an array must have one entry per node.
std::vector<double> per_node(const json& obj, const char* key, const std::string& where, int nodes, double fallback)
{
    if (!obj.contains(key)) return std::vector<double>(static_cast<std::size_t>(nodes), fallback);
    const json& v = obj.at(key);
    if (v.is_number()) return std::vector<double>(static_cast<std::size_t>(nodes), v.get<double>());
    auto out = get<std::vector<double>>(obj, key, where, {});
    if (static_cast<int>(out.size()) != nodes)
        throw ConfigError("'" + std::string(key) + "' in " + where + " needs one value per node");
    return out;
}

Box parse_range(const json& obj, const std::string& where, Box fallback)
{
    if (!obj.contains("range")) return fallback;
    const auto r = get<std::vector<double>>(obj, "range", where, {});
    if (r.size() != 2 || !(r[0] < r[1])) throw ConfigError("range in " + where + " must be [lo, hi] with lo < hi");
    return {r[0], r[1]};
}

}  // namespace

ScmSpec ExperimentConfig::truth() const
{
    const Graph graph = Graph::from_edges(scm.nodes, scm.edges);
    std::vector<Expression> functions;
    for (int n = 0; n < scm.nodes; ++n)
        functions.push_back(parse_expression(scm.functions.at(static_cast<std::size_t>(n)),
                                             static_cast<int>(graph.parents(n).size())));
    return ScmSpec(graph, std::move(functions), Eigen::Map<const Eigen::VectorXd>(scm.noise_variance.data(), scm.nodes));
}

std::vector<Kernel<double>> ExperimentConfig::kernels() const
{
    return std::vector<Kernel<double>>(static_cast<std::size_t>(scm.nodes), Kernel<double>::rbf(kernel_bandwidth, kernel_amplitude));
}

ExperimentConfig parse_config(const std::string& text)
{
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    require_keys(root, "config", {"version", "scm", "kernel", "candidates", "risk", "policies", "costs", "metrics", "run"},
                 {"version", "scm", "candidates", "policies", "run"});
    ExperimentConfig cfg;
    cfg.version = get<int>(root, "version", "config", 0);
    if (cfg.version != config_version)
        throw ConfigError("unsupported config version " + std::to_string(cfg.version) + " (expected " +
                          std::to_string(config_version) + ")");

    const json& scm = root.at("scm");
    require_keys(scm, "scm", {"nodes", "edges", "functions", "noise_variance"}, {"nodes", "functions", "noise_variance"});
    cfg.scm.nodes = get<int>(scm, "nodes", "scm", 0);
    if (cfg.scm.nodes <= 0) throw ConfigError("scm.nodes must be positive");
    for (const auto& e : get<std::vector<std::vector<int>>>(scm, "edges", "scm", {})) {
        if (e.size() != 2) throw ConfigError("each edge must be [parent, child]");
        cfg.scm.edges.emplace_back(e[0], e[1]);
    }
    cfg.scm.functions = get<std::vector<std::string>>(scm, "functions", "scm", {});
    if (static_cast<int>(cfg.scm.functions.size()) != cfg.scm.nodes)
        throw ConfigError("scm.functions needs one expression per node");
    cfg.scm.noise_variance = per_node(scm, "noise_variance", "scm", cfg.scm.nodes, 0.1);

    if (root.contains("kernel")) {
        const json& k = root.at("kernel");
        require_keys(k, "kernel", {"bandwidth", "amplitude"});
        cfg.kernel_bandwidth = get<double>(k, "bandwidth", "kernel", 1.0);
        cfg.kernel_amplitude = get<double>(k, "amplitude", "kernel", 1.0);
    }

    const json& cand = root.at("candidates");
    require_keys(cand, "candidates", {"family", "range", "values_per_node", "include_null"}, {"family"});
    const auto family = get<std::string>(cand, "family", "candidates", "");
    if (family == "single")
        cfg.candidates.family = CandidateFamily::single;
    else if (family == "upstream")
        cfg.candidates.family = CandidateFamily::upstream;
    else
        throw ConfigError("candidates.family must be 'single' or 'upstream'");
    cfg.candidates.range = parse_range(cand, "candidates", Box{});
    cfg.candidates.values_per_node = get<int>(cand, "values_per_node", "candidates", 50);
    cfg.candidates.include_null = get<bool>(cand, "include_null", "candidates", true);

    cfg.risk = RiskSpec::uniform(cfg.scm.nodes);
    if (root.contains("risk")) {
        const json& r = root.at("risk");
        require_keys(r, "risk", {"range", "weights", "grid_1d", "grid_nd"});
        const Box box = parse_range(r, "risk", Box{});
        cfg.risk.domains.assign(static_cast<std::size_t>(cfg.scm.nodes), box);
        cfg.risk.weights = per_node(r, "weights", "risk", cfg.scm.nodes, 1.0);
        cfg.risk.grid_1d = get<int>(r, "grid_1d", "risk", 200);
        cfg.risk.grid_nd = get<int>(r, "grid_nd", "risk", 60);
    }

    const json& pol = root.at("policies");
    if (!pol.is_array() || pol.empty()) throw ConfigError("policies must be a nonempty array");
    for (const json& p : pol) {
        require_keys(p, "policy", {"name", "samples", "grid_points", "grid_margin"}, {"name"});
        PolicyConfig pc;
        try {
            pc.kind = parse_policy(get<std::string>(p, "name", "policy", ""));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        pc.samples = get<int>(p, "samples", "policy", 64);
        pc.grid.points = get<int>(p, "grid_points", "policy", 101);
        pc.grid.margin = get<double>(p, "grid_margin", "policy", 2.0);
        cfg.policies.push_back(pc);
    }

    if (root.contains("costs")) {
        const json& c = root.at("costs");
        require_keys(c, "costs", {"default", "by_nodes"});
        cfg.costs.default_cost = get<double>(c, "default", "costs", 1.0);
        if (c.contains("by_nodes")) {
            if (!c.at("by_nodes").is_array()) throw ConfigError("costs.by_nodes must be an array");
            for (const json& entry : c.at("by_nodes")) {
                require_keys(entry, "costs.by_nodes entry", {"nodes", "cost"}, {"nodes", "cost"});
                auto nodes = get<std::vector<int>>(entry, "nodes", "costs.by_nodes", {});
                std::sort(nodes.begin(), nodes.end());
                cfg.costs.by_nodes[nodes] = get<double>(entry, "cost", "costs.by_nodes", 1.0);
            }
        }
    }

    if (root.contains("metrics")) {
        const json& m = root.at("metrics");
        require_keys(m, "metrics", {"kl_samples", "mmd_samples", "mmd_bandwidth", "stride"});
        cfg.metrics.kl_samples = get<int>(m, "kl_samples", "metrics", 2000);
        cfg.metrics.mmd_samples = get<int>(m, "mmd_samples", "metrics", 500);
        cfg.metrics.mmd_bandwidth = get<double>(m, "mmd_bandwidth", "metrics", 1.0);
        cfg.metric_stride = get<int>(m, "stride", "metrics", 1);
    }

    const json& run = root.at("run");
    require_keys(run, "run", {"trials", "steps", "seed", "output", "record_timing"});
    cfg.run.trials = get<int>(run, "trials", "run", 10);
    cfg.run.steps = get<int>(run, "steps", "run", 30);
    cfg.run.seed = get<std::uint64_t>(run, "seed", "run", 0);
    cfg.run.output = get<std::string>(run, "output", "run", "results");
    cfg.run.record_timing = get<bool>(run, "record_timing", "run", false);

    validate_config(cfg);
    return cfg;
}

ExperimentConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::size_t validate_config(const ExperimentConfig& cfg)
{
    try {
        const ScmSpec truth = cfg.truth();
        const int n = truth.size();
        for (double v : cfg.scm.noise_variance)
            if (!(v > 0.0)) throw ConfigError("noise variances must be positive for learning");
        (void)cfg.kernels();
        cfg.risk.check(n);
        if (cfg.candidates.values_per_node < 1) throw ConfigError("candidates.values_per_node must be positive");
        if (cfg.policies.empty()) throw ConfigError("at least one policy is required");
        for (const PolicyConfig& p : cfg.policies) {
            if (p.samples < 1) throw ConfigError("policy samples must be positive");
            if (p.grid.points < 2 || !(p.grid.margin >= 0.0)) throw ConfigError("dp grid needs >= 2 points and margin >= 0");
            if ((p.kind == PolicyKind::dp_upstream || p.kind == PolicyKind::dp_single) && !truth.graph().chain_order())
                throw ConfigError(std::string(policy_name(p.kind)) + " requires a chain graph");
            if (p.kind == PolicyKind::dp_upstream && cfg.candidates.family != CandidateFamily::upstream)
                throw ConfigError("dp_upstream requires the upstream candidate family");
            if (p.kind == PolicyKind::dp_single && cfg.candidates.family != CandidateFamily::single)
                throw ConfigError("dp_single requires the single candidate family");
        }
        if (!(cfg.costs.default_cost > 0.0)) throw ConfigError("costs must be positive");
        for (const auto& [nodes, c] : cfg.costs.by_nodes)
            if (!(c > 0.0)) throw ConfigError("costs must be positive");
        if (cfg.metrics.kl_samples < 1 || cfg.metrics.mmd_samples < 2 || !(cfg.metrics.mmd_bandwidth > 0.0) ||
            cfg.metric_stride < 1)
            throw ConfigError("metrics need kl_samples >= 1, mmd_samples >= 2, bandwidth > 0, stride >= 1");
        if (cfg.run.trials < 1 || cfg.run.steps < 0) throw ConfigError("run needs trials >= 1 and steps >= 0");
        const CandidateSet cands = build_candidates(cfg);
        cands.check(truth.graph());
        return cands.size();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
}

CandidateSet build_candidates(const ExperimentConfig& cfg)
{
    const Graph graph = Graph::from_edges(cfg.scm.nodes, cfg.scm.edges);
    const int count = cfg.candidates.values_per_node;
    const Box r = cfg.candidates.range;
    Eigen::VectorXd values = Eigen::VectorXd::LinSpaced(count, r.lo, r.hi);
    if (count == 1) values[0] = 0.5 * (r.lo + r.hi);
    CandidateSet out;
    if (cfg.candidates.family == CandidateFamily::upstream) {
        const auto chain = graph.chain_order();
        if (!chain) throw GraphError("upstream candidate family requires a chain graph");
        for (std::size_t m = 0; m < chain->size(); ++m) {
            for (double v : values) {
                std::vector<Clamp> clamps;
                for (std::size_t k = 0; k <= m; ++k) clamps.push_back({(*chain)[k], v});
                out.items.emplace_back(std::move(clamps));
            }
        }
    } else {
        for (int n = 0; n < graph.size(); ++n)
            for (double v : values) out.items.push_back(Intervention::single(n, v));
    }
    if (cfg.candidates.include_null) out.items.push_back(Intervention::none());
    return out;
}

namespace {

TraceRow base_row(int trial, int step, const PolicyConfig& policy)
{
    TraceRow row;
    row.trial = trial;
    row.step = step;
    row.policy = std::string(policy_name(policy.kind));
    const double nan = std::numeric_limits<double>::quiet_NaN();
    row.expected_total_risk = row.true_total_risk = nan;
    row.kl_max = row.kl_median = row.mmd_max = row.mmd_median = nan;
    return row;
}

void run_trial(const ExperimentConfig& cfg, const ScmSpec& truth, const CandidateSet& cands, const PolicyConfig& policy,
               int trial, std::vector<TraceRow>& rows)
{
    using clock = std::chrono::steady_clock;
    const std::uint64_t trial_seed = mix_seed(cfg.run.seed, {static_cast<std::uint64_t>(trial)});
    BeliefState belief(truth.graph(), cfg.kernels(), truth.noise_vars());

    for (int step = 0; step <= cfg.run.steps; ++step) {
        const auto started = clock::now();
        TraceRow row = base_row(trial, step, policy);
        const auto key = static_cast<std::uint64_t>(step);
        try {
            if (step == 0) {
                row.intervention = "start";
            } else {
                Rng select_rng = substream(trial_seed, {key, 1});
                const Selection sel = select_intervention(policy, belief, cands, cfg.costs, cfg.risk, select_rng);
                Rng draw_rng = substream(trial_seed, {key, 2});
                belief = belief.with_draw(sample_scm(truth, sel.chosen, draw_rng));
                row.intervention = sel.chosen.to_string();
                row.nodes = sel.chosen.nodes_string();
                row.values = sel.chosen.values_string();
                row.candidates_evaluated = sel.values.size();
            }
            if (belief.dataset().size() != static_cast<std::size_t>(step))
                throw std::logic_error("dataset length differs from the step count");
            row.expected_total_risk = expected_total_risk(belief, cfg.risk);
            if (step % cfg.metric_stride == 0 || step == cfg.run.steps) {
                Rng metric_rng = substream(trial_seed, {key, 3});
                const MetricReport m = evaluate(truth, belief, cands, cfg.risk, cfg.metrics, metric_rng);
                row.true_total_risk = m.true_total_risk;
                row.kl_max = m.kl_max;
                row.kl_median = m.kl_median;
                row.mmd_max = m.mmd_max;
                row.mmd_median = m.mmd_median;
            } else {
                row.true_total_risk = true_total_risk(truth, belief, cfg.risk);
            }
        } catch (const std::exception& e) {
            row.status = std::string("error: ") + e.what();
            rows.push_back(std::move(row));
            return;
        }
        if (cfg.run.record_timing)
            row.elapsed_ms = std::chrono::duration<double, std::milli>(clock::now() - started).count();
        rows.push_back(std::move(row));
    }
}

}  // namespace

std::vector<TraceRow> run_experiment(const ExperimentConfig& cfg, std::ostream* progress)
{
    validate_config(cfg);
    const ScmSpec truth = cfg.truth();
    const CandidateSet cands = build_candidates(cfg);
    std::vector<TraceRow> rows;
    for (const PolicyConfig& policy : cfg.policies) {
        for (int trial = 0; trial < cfg.run.trials; ++trial) {
            run_trial(cfg, truth, cands, policy, trial, rows);
            if (progress) *progress << policy_name(policy.kind) << " trial " << trial << " done" << std::endl;
        }
    }
    return rows;
}

std::vector<SummaryRow> summarize(const std::vector<TraceRow>& traces)
{
    std::vector<std::string> policies;
    std::map<std::string, std::map<int, std::set<int>>> steps_by_trial;  // policy -> trial -> steps
    std::map<std::pair<std::string, int>, std::vector<const TraceRow*>> groups;
    for (const TraceRow& r : traces) {
        if (std::find(policies.begin(), policies.end(), r.policy) == policies.end()) policies.push_back(r.policy);
        steps_by_trial[r.policy][r.trial].insert(r.step);
        groups[{r.policy, r.step}].push_back(&r);
    }
    std::vector<SummaryRow> out;
    for (const std::string& policy : policies) {
        const auto& per_trial = steps_by_trial[policy];
        const std::set<int>& steps = per_trial.begin()->second;
        for (const auto& [trial, s] : per_trial)
            if (s != steps) throw std::invalid_argument("trials of policy " + policy + " cover different steps");
        for (int step : steps) {
            const auto& g = groups[{policy, step}];
            SummaryRow row;
            row.policy = policy;
            row.step = step;
            row.trials = static_cast<int>(g.size());
            auto mean = [&](double TraceRow::*field) {
                double s = 0.0;
                for (const TraceRow* r : g) s += r->*field;
                return s / static_cast<double>(g.size());
            };
            row.expected_total_risk = mean(&TraceRow::expected_total_risk);
            row.true_total_risk = mean(&TraceRow::true_total_risk);
            row.kl_max = mean(&TraceRow::kl_max);
            row.kl_median = mean(&TraceRow::kl_median);
            row.mmd_max = mean(&TraceRow::mmd_max);
            row.mmd_median = mean(&TraceRow::mmd_median);
            out.push_back(row);
        }
    }
    return out;
}

const char* const trace_header =
    "trial,step,policy,intervention,nodes,values,expected_total_risk,true_total_risk,kl_max,kl_median,mmd_max,"
    "mmd_median,candidates_evaluated,elapsed_ms,status";
const char* const summary_header =
    "policy,step,trials,expected_total_risk,true_total_risk,kl_max,kl_median,mmd_max,mmd_median";

std::string format_double(double v)
{
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace {

std::string quote(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c == '\n' ? ' ' : c;
    }
    return out + "\"";
}

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> fields(1);
    bool quoted = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
        const char c = line[k];
        if (quoted) {
            if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') {
                fields.back() += '"';
                ++k;
            } else if (c == '"') {
                quoted = false;
            } else {
                fields.back() += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.emplace_back();
        } else {
            fields.back() += c;
        }
    }
    return fields;
}

double parse_double(const std::string& s)
{
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("malformed number '" + s + "'");
    return v;
}

}  // namespace

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& rows)
{
    os << trace_header << '\n';
    for (const TraceRow& r : rows) {
        os << r.trial << ',' << r.step << ',' << quote(r.policy) << ',' << quote(r.intervention) << ',' << quote(r.nodes)
           << ',' << quote(r.values) << ',' << format_double(r.expected_total_risk) << ','
           << format_double(r.true_total_risk) << ',' << format_double(r.kl_max) << ',' << format_double(r.kl_median)
           << ',' << format_double(r.mmd_max) << ',' << format_double(r.mmd_median) << ',' << r.candidates_evaluated
           << ',' << format_double(r.elapsed_ms) << ',' << quote(r.status) << '\n';
    }
}

void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows)
{
    os << summary_header << '\n';
    for (const SummaryRow& r : rows) {
        os << quote(r.policy) << ',' << r.step << ',' << r.trials << ',' << format_double(r.expected_total_risk) << ','
           << format_double(r.true_total_risk) << ',' << format_double(r.kl_max) << ',' << format_double(r.kl_median)
           << ',' << format_double(r.mmd_max) << ',' << format_double(r.mmd_median) << '\n';
    }
}

std::vector<TraceRow> read_trace_csv(std::istream& is)
{
    std::string line;
    if (!std::getline(is, line) || line != trace_header) throw std::invalid_argument("not a trace CSV (header mismatch)");
    std::vector<TraceRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 15) throw std::invalid_argument("trace row has " + std::to_string(f.size()) + " fields");
        TraceRow r;
        r.trial = std::stoi(f[0]);
        r.step = std::stoi(f[1]);
        r.policy = f[2];
        r.intervention = f[3];
        r.nodes = f[4];
        r.values = f[5];
        r.expected_total_risk = parse_double(f[6]);
        r.true_total_risk = parse_double(f[7]);
        r.kl_max = parse_double(f[8]);
        r.kl_median = parse_double(f[9]);
        r.mmd_max = parse_double(f[10]);
        r.mmd_median = parse_double(f[11]);
        r.candidates_evaluated = static_cast<std::size_t>(std::stoull(f[12]));
        r.elapsed_ms = parse_double(f[13]);
        r.status = f[14];
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace scmal

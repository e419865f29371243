#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <type_traits>

#include "scmal/harness.hpp"

using namespace scmal;

namespace {

namespace fs = std::filesystem;

const char* const small_config = R"json({
  "version": 1,
  "scm": {"nodes": 3, "edges": [[0, 1], [1, 2]], "functions": ["3", "p0*p0", "2*p0 + sin(p0)"], "noise_variance": 0.1},
  "candidates": {"family": "single", "range": [-6, 6], "values_per_node": 3, "include_null": true},
  "policies": [{"name": "observe"}, {"name": "sampling", "samples": 8}],
  "metrics": {"kl_samples": 50, "mmd_samples": 20},
  "run": {"trials": 2, "steps": 3, "seed": 5}
})json";

ExperimentConfig small()
{
    return parse_config(small_config);
}

std::string edit(const std::string& from, const std::string& to)
{
    std::string s = small_config;
    const auto at = s.find(from);
    REQUIRE(at != std::string::npos);
    return s.replace(at, from.size(), to);
}

std::string trace_text(const ExperimentConfig& cfg)
{
    std::ostringstream os;
    write_trace_csv(os, run_experiment(cfg));
    return os.str();
}

fs::path scratch_dir(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / ("scmal_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int run_cli(const std::string& args)
{
    const int status = std::system((std::string(SCMAL_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config parsing fills defaults")
{
    const ExperimentConfig cfg = small();
    CHECK(cfg.scm.nodes == 3);
    CHECK(cfg.scm.noise_variance == std::vector<double>(3, 0.1));
    CHECK(cfg.kernel_bandwidth == 1.0);
    CHECK(cfg.kernel_amplitude == 1.0);
    CHECK(cfg.risk.grid_1d == 200);
    CHECK(cfg.policies.size() == 2);
    CHECK(cfg.policies[1].samples == 8);
    CHECK(cfg.metrics.mmd_bandwidth == 1.0);
    CHECK(cfg.run.seed == 5);
    CHECK(validate_config(cfg) == 10);
}

TEST_CASE("config errors")
{
    CHECK_THROWS_AS(parse_config("{"), ConfigError);
    CHECK_THROWS_AS(parse_config(edit("\"version\": 1", "\"version\": 2")), ConfigError);
    CHECK_THROWS_AS(parse_config(edit("\"version\": 1,", "")), ConfigError);
    CHECK_THROWS_AS(parse_config(edit("\"seed\": 5", "\"seed\": 5, \"sed\": 1")), ConfigError);
    CHECK_THROWS_AS(parse_config(edit("\"single\"", "\"pairs\"")), ConfigError);
    CHECK_THROWS_AS(parse_config(edit("\"p0*p0\"", "\"p0/p0\"")), ConfigError);
    CHECK_THROWS_AS(parse_config(edit("\"p0*p0\"", "\"p1\"")), ConfigError);
    CHECK_THROWS_AS(parse_config(edit("[[0, 1], [1, 2]]", "[[0, 1], [1, 2], [2, 0]]")), ConfigError);
    CHECK_THROWS_AS(parse_config(edit("\"noise_variance\": 0.1", "\"noise_variance\": [0.1, 0.1]")), ConfigError);
    CHECK_THROWS_AS(parse_config(edit("\"noise_variance\": 0.1", "\"noise_variance\": 0")), ConfigError);
    CHECK_THROWS_AS(parse_config(edit("{\"name\": \"observe\"}", "{\"name\": \"dp_upstream\"}")), ConfigError);
    CHECK_THROWS_AS(parse_config(edit("{\"name\": \"observe\"}", "{\"name\": \"greedy\"}")), ConfigError);
    CHECK_THROWS_AS(parse_config(edit("[[0, 1], [1, 2]]", "[[0, 1], [0, 2]]").replace(
                        std::string(small_config).find("{\"name\": \"observe\"}"), 19, "{\"name\": \"dp_single\"}")),
                    ConfigError);
    CHECK_THROWS_AS(parse_config(edit("\"trials\": 2", "\"trials\": 0")), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("candidate construction")
{
    ExperimentConfig cfg = small();
    const CandidateSet c = build_candidates(cfg);
    REQUIRE(c.size() == 10);
    CHECK(c[0].to_string() == "do(X0=-6)");
    CHECK(c[1].to_string() == "do(X0=0)");
    CHECK(c[2].to_string() == "do(X0=6)");
    CHECK(c[3].to_string() == "do(X1=-6)");
    CHECK(c[9].empty());

    const ExperimentConfig m1 = load_config(std::string(SCMAL_CONFIG_DIR) + "/m1.json");
    const CandidateSet u = build_candidates(m1);
    CHECK(u.size() == 250);
    CHECK(u[49].to_string() == "do(X0=6)");
    CHECK(u[50].clamps().size() == 2);
    CHECK(u[249].clamps().size() == 5);
    ExperimentConfig with_null = m1;
    with_null.candidates.include_null = true;
    CHECK(build_candidates(with_null).size() == 251);
    CHECK(build_candidates(with_null).items.back().empty());

    const ExperimentConfig m2 = load_config(std::string(SCMAL_CONFIG_DIR) + "/m2.json");
    CHECK(validate_config(m2) == 250);
}

TEST_CASE("zero steps gives one prior row per trial")
{
    ExperimentConfig cfg = small();
    cfg.run.steps = 0;
    const auto rows = run_experiment(cfg);
    CHECK(rows.size() == 4);
    for (const TraceRow& r : rows) {
        CHECK(r.step == 0);
        CHECK(r.expected_total_risk == 3.0);
        CHECK(r.intervention == "start");
        CHECK(r.status == "ok");
    }
}

TEST_CASE("observe on the example SCM records the null intervention")
{
    ExperimentConfig cfg = load_config(std::string(SCMAL_CONFIG_DIR) + "/example1.json");
    cfg.run.steps = 1;
    cfg.run.trials = 1;
    cfg.policies.resize(1);
    const auto rows = run_experiment(cfg);
    REQUIRE(rows.size() == 2);
    CHECK(rows[1].intervention == "none");
    CHECK(rows[1].nodes.empty());
    CHECK(rows[1].status == "ok");
    CHECK(rows[1].expected_total_risk < rows[0].expected_total_risk);
}

TEST_CASE("every policy runs on the example SCM without errors")
{
    const ExperimentConfig cfg = load_config(std::string(SCMAL_CONFIG_DIR) + "/example1.json");
    const auto rows = run_experiment(cfg);
    CHECK(rows.size() == cfg.policies.size() * 2 * 6);
    for (const TraceRow& r : rows) {
        CHECK(r.status == "ok");
        CHECK(std::isfinite(r.true_total_risk));
        CHECK(std::isfinite(r.kl_max));
        CHECK(r.kl_max >= r.kl_median);
        CHECK(r.mmd_max >= r.mmd_median);
    }
}

TEST_CASE("metric stride leaves skipped steps empty")
{
    ExperimentConfig cfg = small();
    cfg.metric_stride = 2;
    cfg.run.trials = 1;
    const auto rows = run_experiment(cfg);
    for (const TraceRow& r : rows) {
        CHECK(std::isfinite(r.true_total_risk));
        CHECK(std::isnan(r.kl_max) == (r.step == 1));
    }
}

TEST_CASE("runs are reproducible from the seed")
{
    const ExperimentConfig cfg = small();
    CHECK(trace_text(cfg) == trace_text(cfg));
    ExperimentConfig other = cfg;
    other.run.seed = 6;
    const auto a = run_experiment(cfg);
    const auto b = run_experiment(other);
    bool differs = false;
    for (std::size_t k = 0; k < a.size(); ++k) differs = differs || (a[k].policy == "sampling" && a[k].values != b[k].values);
    CHECK(differs);
}

TEST_CASE("policies share the random stream of the ground truth")
{
    // The observe policy's draws do not depend on which other policies run.
    ExperimentConfig cfg = small();
    ExperimentConfig alone = cfg;
    alone.policies.resize(1);
    const auto all = run_experiment(cfg);
    const auto one = run_experiment(alone);
    for (std::size_t k = 0; k < one.size(); ++k) CHECK(one[k].expected_total_risk == all[k].expected_total_risk);
}

TEST_CASE("summaries average across trials")
{
    std::vector<TraceRow> rows(4);
    for (int k = 0; k < 4; ++k) {
        rows[k].policy = "random";
        rows[k].trial = k / 2;
        rows[k].step = k % 2;
        rows[k].true_total_risk = k < 2 ? 1.0 : 3.0;
        rows[k].kl_max = k;
    }
    const auto s = summarize(rows);
    REQUIRE(s.size() == 2);
    CHECK(s[0].true_total_risk == 2.0);
    CHECK(s[0].trials == 2);
    CHECK(s[1].kl_max == 2.0);

    const auto single = summarize({rows[0], rows[1]});
    CHECK(single[1].kl_max == rows[1].kl_max);
    CHECK(single[0].true_total_risk == rows[0].true_total_risk);

    rows.pop_back();
    CHECK_THROWS(summarize(rows));

    ExperimentConfig cfg = small();
    CHECK(summarize(run_experiment(cfg)).size() == cfg.policies.size() * static_cast<std::size_t>(cfg.run.steps + 1));
}

TEST_CASE("trace CSV round trip")
{
    ExperimentConfig cfg = small();
    cfg.run.trials = 1;
    const auto rows = run_experiment(cfg);
    std::ostringstream os;
    write_trace_csv(os, rows);
    CHECK(os.str().rfind(std::string(trace_header) + "\n", 0) == 0);
    std::istringstream is(os.str());
    const auto back = read_trace_csv(is);
    std::ostringstream again;
    write_trace_csv(again, back);
    CHECK(again.str() == os.str());

    TraceRow quoted;
    quoted.policy = "observe";
    quoted.status = "error: bad, \"worse\"";
    std::ostringstream qs;
    write_trace_csv(qs, {quoted});
    std::istringstream qi(qs.str());
    CHECK(read_trace_csv(qi)[0].status == quoted.status);

    CHECK(format_double(0.1) == "0.10000000000000001");
    CHECK(format_double(std::nan("")) == "nan");
    std::istringstream bad("not,a,trace\n");
    CHECK_THROWS(read_trace_csv(bad));
}

TEST_CASE("selection never sees the ground truth")
{
    static_assert(!std::is_invocable_v<decltype(&select_intervention), const PolicyConfig&, const ScmSpec&, const CandidateSet&,
                                       const CostModel&, const RiskSpec&, Rng&>);
    static_assert(std::is_invocable_v<decltype(&select_intervention), const PolicyConfig&, const BeliefState&, const CandidateSet&,
                                      const CostModel&, const RiskSpec&, Rng&>);
}

TEST_CASE("command-line exit codes and outputs")
{
    const std::string cfg_dir = SCMAL_CONFIG_DIR;
    CHECK(run_cli("validate --config " + cfg_dir + "/m1.json") == 0);
    CHECK(run_cli("validate --config " + cfg_dir + "/m2.json") == 0);
    CHECK(run_cli("bogus") == 1);
    CHECK(run_cli("validate") == 1);

    const fs::path dir = scratch_dir("cli");
    {
        std::ofstream(dir / "bad.json") << edit("\"seed\": 5", "\"seed\": 5, \"typo\": true");
        std::ofstream(dir / "good.json") << small_config;
    }
    CHECK(run_cli("validate --config " + (dir / "bad.json").string()) == 1);
    CHECK(run_cli("run --config " + (dir / "good.json").string() + " --out " + (dir / "a").string()) == 0);
    CHECK(run_cli("run --config " + (dir / "good.json").string() + " --out " + (dir / "b").string()) == 0);
    CHECK(run_cli("run --config " + (dir / "good.json").string() + " --policy dp_upstream") == 1);

    const auto slurp = [](const fs::path& p) {
        std::ifstream in(p);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    CHECK(slurp(dir / "a" / "trace.csv") == slurp(dir / "b" / "trace.csv"));
    CHECK(!slurp(dir / "a" / "summary.csv").empty());

    CHECK(run_cli("summarize --trace " + (dir / "a" / "trace.csv").string() + " --out " + (dir / "s.csv").string()) == 0);
    CHECK(slurp(dir / "s.csv") == slurp(dir / "a" / "summary.csv"));

    CHECK(run_cli("run --config " + (dir / "good.json").string() + " --trials 1 --seed 9 --policy observe --out " +
                  (dir / "c").string()) == 0);
    std::ifstream trace(dir / "c" / "trace.csv");
    const auto rows = read_trace_csv(trace);
    CHECK(rows.size() == 4);

    CHECK(setenv("SCMAL_OUTPUT_DIR", (dir / "env").string().c_str(), 1) == 0);
    CHECK(run_cli("run --config " + (dir / "good.json").string() + " --trials 1 --policy observe") == 0);
    CHECK(fs::exists(dir / "env" / "trace.csv"));
    unsetenv("SCMAL_OUTPUT_DIR");
    fs::remove_all(dir);
}

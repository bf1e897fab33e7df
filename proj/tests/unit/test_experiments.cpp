#include "ncs/experiments.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

using namespace ncs;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        rows.push_back(cells);
    }
    return rows;
}

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("ncs_test_" + name);
    fs::remove_all(dir);
    return dir;
}

ExperimentSpec short_spec(Scenario s) {
    auto spec = default_spec(s);
    spec.base.duration_s = 4.0;
    spec.base.warmup_s = 1.0;
    spec.base.cooldown_s = 1.0;
    spec.base.replications = 3;
    return spec;
}

} // namespace

TEST_CASE("minimal config takes the documented defaults") {
    const auto spec = parse_config_text("scenario: single\nprotocol: rr\nN: 5\n");
    CHECK(spec.scenario == Scenario::single);
    CHECK(spec.n_min == 5);
    CHECK(spec.n_max == 5);
    CHECK(spec.protocols.size() == 1);
    CHECK(spec.protocols[0].name() == "round_robin");
    CHECK(spec.base.duration_s == 30.0);
    CHECK(spec.base.sampling_period_s == 0.01);
    CHECK(spec.base.replications == 20);
    CHECK(spec.base.seed == 0);
    CHECK(spec.base.channel.mode == ChannelMode::offset_capture);
    const auto cfg = spec.config_for(5, spec.protocols[0]);
    CHECK(cfg.window().first == 501);
    CHECK(cfg.window().last == 2500);
    CHECK(cfg.systems[3].klass == SystemClass::easy);
}

TEST_CASE("full config round trip") {
    const auto spec = parse_config_text(R"(
scenario: sweep
protocols: [sa, adra, pmef]
n_range: [3, 6]
classes: [hard, pendulum]
duration_s: 12
warmup_s: 2
cooldown_s: 1
seed: 17
replications: 4
p: 0.2
adra: {threshold: 4, p: 0.3}
channel: {mode: strict_collision, erasure_prob: 0.1, tx_duration_s: 0.002, slot_duration_s: 0.01}
gateway: {poll_guard_s: 0.001}
)");
    CHECK(spec.n_min == 3);
    CHECK(spec.n_max == 6);
    CHECK(*spec.protocols[0].get<SlottedAloha>()->p == 0.2);
    CHECK(*spec.protocols[1].get<Adra>()->threshold == 4);
    CHECK(spec.base.channel.tx_duration_us == 2000);
    CHECK(spec.base.channel.erasure_prob == 0.1);
    CHECK(spec.base.poll_guard_us == 1000);
    CHECK(spec.base.seed == 17);
    CHECK(spec.classes == std::vector<SystemClass>{SystemClass::hard, SystemClass::pendulum});
}

TEST_CASE("config errors carry the offending line") {
    auto error_of = [](const std::string& text) {
        try {
            (void)parse_config_text(text, "cfg.yaml");
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    const auto bad_p = error_of("protocol: sa\nN: 4\np: 1.5\n");
    CHECK(bad_p.find("cfg.yaml:3") != std::string::npos);
    const auto unknown = error_of("protocol: rr\nbogus: 1\n");
    CHECK(unknown.find("bogus") != std::string::npos);
    CHECK(unknown.find("cfg.yaml:2") != std::string::npos);
    CHECK_FALSE(error_of("protocol: csma\n").empty());
    CHECK_FALSE(error_of("channel: {mode: strict, erasure_prob: 1.0}\n").empty());
    CHECK_FALSE(error_of("classes: [easy, wobbly]\n").empty());
    CHECK_FALSE(error_of("scenario: validate_theory\nchannel: {mode: offset_capture}\n").empty());
    CHECK_THROWS_AS((void)parse_config("/nonexistent/ncs.yaml"), ConfigError);
}

TEST_CASE("validate_theory needs the ideal channel") {
    auto spec = default_spec(Scenario::validate_theory);
    spec.base.channel = ChannelConfig::testbed();
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = default_spec(Scenario::validate_theory);
    spec.protocols = {WiFresh{}};
    CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("sweep output layout") {
    auto spec = short_spec(Scenario::sweep);
    spec.protocols = {RoundRobin{}};
    const auto results = run_sweep(spec);
    REQUIRE(results.size() == 14);
    const auto dir = scratch("sweep");
    emit_results(results, dir);
    for (const char* f : {"runs.csv", "summary.csv", "aoi_vs_n.csv", "lqg_vs_n.csv", "mse_vs_n.csv",
                          "nmse_vs_n.csv", "fractions.csv", "nmse_vs_age.csv"}) {
        CHECK(fs::exists(dir / f));
    }
    const auto summary = read_csv(dir / "summary.csv");
    REQUIRE(!summary.empty());
    CHECK(summary[0] == std::vector<std::string>{"protocol", "N", "metric", "mean", "ci99_half_width",
                                                 "replications"});
    std::map<std::string, int> per_metric;
    for (std::size_t r = 1; r < summary.size(); ++r) {
        ++per_metric[summary[r][2]];
        CHECK(summary[r][5] == "3");
    }
    for (const char* m : {"mean_aoi", "mean_mse", "mean_nmse", "lqg_cost"}) {
        CHECK(per_metric[m] == 14);
    }
    // round robin on a lossy channel cannot beat its ideal age
    const auto aoi = read_csv(dir / "aoi_vs_n.csv");
    REQUIRE(aoi.size() == 15);
    for (std::size_t r = 1; r < aoi.size(); ++r) {
        const int n = std::stoi(aoi[r][1]);
        CHECK(std::stod(aoi[r][2]) >= (n + 1) / 2.0 - 1e-9);
    }

    const auto again = scratch("sweep_again");
    emit_results(run_sweep(spec), again);
    for (const char* f : {"runs.csv", "summary.csv", "fractions.csv"}) {
        CHECK(slurp(dir / f) == slurp(again / f));
    }
    fs::remove_all(dir);
    fs::remove_all(again);
}

TEST_CASE("non-finite values only appear for diverged runs") {
    auto spec = short_spec(Scenario::single);
    spec.n_min = spec.n_max = 8;
    spec.protocols = {SlottedAloha{}};
    spec.base.channel = ChannelConfig::ideal();
    spec.base.duration_s = 30.0;
    spec.base.warmup_s = 5.0;
    spec.base.cooldown_s = 5.0;
    spec.base.replications = 10;
    const auto dir = scratch("nonfinite");
    emit_results(run_sweep(spec), dir);
    const auto runs = read_csv(dir / "runs.csv");
    REQUIRE(runs.size() > 1);
    for (std::size_t r = 1; r < runs.size(); ++r) {
        const auto& row = runs[r];
        bool nonfinite = false;
        for (std::size_t c = 5; c <= 8; ++c) {
            nonfinite = nonfinite || row[c] == "inf" || row[c] == "nan";
        }
        if (nonfinite) {
            CHECK(row.back() == "1");
        }
    }
    fs::remove_all(dir);
}

TEST_CASE("theory validation report") {
    auto spec = default_spec(Scenario::validate_theory);
    spec.n_min = 3;
    spec.n_max = 4;
    spec.base.replications = 4;
    const auto report = validate_theory(spec);
    CHECK(report.rows.size() == 6);
    for (const auto& row : report.rows) {
        CAPTURE(row.protocol);
        CAPTURE(row.n_loops);
        CHECK(std::isfinite(row.theory));
        CHECK(row.rel_error() == doctest::Approx(std::abs(row.simulated - row.theory) / row.theory));
    }
    const auto dir = scratch("theory");
    emit_theory_report(report, dir);
    CHECK(fs::exists(dir / "theory.csv"));
    fs::remove_all(dir);
}

TEST_CASE("pendulum angle is reported in degrees") {
    auto spec = short_spec(Scenario::pendulum);
    spec.n_min = spec.n_max = 3;
    spec.protocols = {RoundRobin{}};
    spec.base.replications = 2;
    const auto report = pendulum_case_study(spec);
    const auto& res = report.at("round_robin");
    REQUIRE(res.pendulums.size() == 1);
    CHECK(res.pendulums[0].loop == 1);

    // rerun the same configuration with traces and take the peak by hand
    auto cfg = spec.config_for(3, RoundRobin{});
    cfg.record_traces = true;
    double peak = 0.0;
    double xi_peak = 0.0;
    const auto window = cfg.window();
    for (int r = 0; r < cfg.replications; ++r) {
        auto c = cfg;
        c.seed = cfg.seed + static_cast<std::uint64_t>(r);
        const auto run_r = run(c);
        for (auto t = window.first; t <= window.last; ++t) {
            const auto& x = run_r.traces[1].state[static_cast<std::size_t>(t - 1)];
            peak = std::max(peak, std::abs(x(2)) * 180.0 / std::numbers::pi);
            xi_peak = std::max(xi_peak, std::abs(x(0)));
        }
    }
    CHECK(res.phi_peak_deg() == doctest::Approx(peak));
    CHECK(res.xi_peak() == doctest::Approx(xi_peak));
    CHECK(res.all_stabilized() == (peak <= spec.phi_limit_deg));
    CHECK(res.summary.runs.front().traces.empty());

    const auto dir = scratch("pendulum");
    emit_pendulum_report(report, dir);
    for (const char* f : {"pendulum_verdicts.csv", "pendulum_trajectories.csv", "nmse_vs_age.csv"}) {
        CHECK(fs::exists(dir / f));
    }
    CHECK_THROWS_AS((void)report.at("mef"), std::out_of_range);
    fs::remove_all(dir);
}

TEST_CASE("nMSE curve file") {
    const auto dir = scratch("curves");
    fs::create_directories(dir);
    emit_nmse_curves(dir / "curve.csv", 10);
    const auto rows = read_csv(dir / "curve.csv");
    REQUIRE(rows.size() == 11);
    CHECK(rows[0][0] == "age");
    for (std::size_t c = 1; c <= 4; ++c) {
        CHECK(std::stod(rows[1][c]) == doctest::Approx(1.0));
    }
    // easy preset: nMSE(age) = age
    CHECK(std::stod(rows[10][1]) == doctest::Approx(10.0));
    fs::remove_all(dir);
}

#pragma once

#include "ncs/sim.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ncs {

enum class Scenario { single, sweep, validate_theory, pendulum };

[[nodiscard]] std::string_view to_string(Scenario s);
[[nodiscard]] Scenario parse_scenario(std::string_view name);

struct ExperimentSpec {
    Scenario scenario = Scenario::single;
    std::vector<SchedulerPolicy> protocols{RoundRobin{}};
    int n_min = 2;
    int n_max = 15;
    std::vector<SystemClass> classes{SystemClass::easy, SystemClass::mid, SystemClass::hard};
    SimConfig base; // systems left empty; filled per N
    std::filesystem::path out_dir = "results";
    int jobs = 1;
    double phi_limit_deg = 10.0;

    void validate() const;
    // base with the loops for N loops and the given protocol
    [[nodiscard]] SimConfig config_for(int n_loops, const SchedulerPolicy& protocol) const;
};

// Documented defaults per scenario: 30 s runs, 20 replications, seed 0,
// testbed channel (strict lossless slots for validate_theory).
[[nodiscard]] ExperimentSpec default_spec(Scenario s);

// YAML document; unknown keys and out-of-range values raise ConfigError with
// the offending line.
[[nodiscard]] ExperimentSpec parse_config(const std::filesystem::path& file);
[[nodiscard]] ExperimentSpec parse_config_text(std::string_view text, const std::string& source = "<config>");

// ============================================================================
// Results
// ============================================================================

struct ProtocolRun {
    std::string protocol;
    int n_loops = 0;
    ReplicationSummary summary;
};

// Runs every (protocol, N) pair of the spec.
[[nodiscard]] std::vector<ProtocolRun> run_sweep(const ExperimentSpec& spec);

// runs.csv, summary.csv, aoi_vs_n.csv, lqg_vs_n.csv, mse_vs_n.csv,
// nmse_vs_n.csv, fractions.csv, nmse_vs_age.csv
void emit_results(const std::vector<ProtocolRun>& results, const std::filesystem::path& dir);

// Age-indexed nMSE of easy/mid/hard/pendulum and the raw pendulum MSE.
void emit_nmse_curves(const std::filesystem::path& file, int max_age = 30);

struct TheoryRow {
    std::string protocol;
    int n_loops = 0;
    double simulated = 0.0;
    double half_width = 0.0;
    double theory = 0.0;
    double tolerance = 0.0;
    int threshold = 0; // ADRA only
    double p = 0.0;    // SA / ADRA access probability

    [[nodiscard]] double rel_error() const;
    [[nodiscard]] bool pass() const { return rel_error() <= tolerance; }
};

struct TheoryReport {
    std::vector<TheoryRow> rows;
    // (N, simulated ADRA < simulated SA) for every N with both protocols
    std::vector<std::pair<int, bool>> adra_below_sa;

    [[nodiscard]] bool all_pass() const;
};

// Protocols must be slotted_aloha, adra or round_robin on a strict lossless
// channel. SA and ADRA rows only for N >= 3.
[[nodiscard]] TheoryReport validate_theory(const ExperimentSpec& spec);
void emit_theory_report(const TheoryReport& report, const std::filesystem::path& dir);

struct Envelope {
    std::vector<double> lo; // per evaluated step
    std::vector<double> hi;
};

struct PendulumLoopResult {
    int loop = 0;
    double phi_peak_deg = 0.0; // max |phi| over runs and evaluated steps
    double xi_peak = 0.0;
    double mean_aoi = 0.0;     // across runs
    double mean_nmse = 0.0;
    bool stabilized = false;
    Envelope phi_deg;
    Envelope xi;
};

struct PendulumProtocolResult {
    std::string protocol;
    ReplicationSummary summary;
    std::vector<PendulumLoopResult> pendulums;

    [[nodiscard]] double phi_peak_deg() const;
    [[nodiscard]] double xi_peak() const;
    [[nodiscard]] bool all_stabilized() const;
    [[nodiscard]] double pendulum_mean_aoi() const;
};

struct PendulumReport {
    std::int64_t window_first = 0;
    double sampling_period_s = 0.010;
    std::vector<PendulumProtocolResult> results;

    [[nodiscard]] const PendulumProtocolResult& at(std::string_view protocol) const;
};

// N = 15, classes cycled {easy, pendulum, hard}; protocols from the spec
// (default rr, mef, wifresh, pmef and the raw-MSE MEF ablation).
[[nodiscard]] PendulumReport pendulum_case_study(const ExperimentSpec& spec);
void emit_pendulum_report(const PendulumReport& report, const std::filesystem::path& dir);

} // namespace ncs

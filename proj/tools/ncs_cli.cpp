// Command-line front end: run, sweep, validate, pendulum.
#include "ncs/experiments.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

namespace {

struct Overrides {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<int> reps;
    std::optional<int> jobs;
};

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config, "YAML experiment file")->check(CLI::ExistingFile);
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--seed", o.seed, "base seed (replication r uses seed + r)");
    cmd->add_option("--reps", o.reps, "replications")->check(CLI::PositiveNumber);
    cmd->add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
}

ncs::ExperimentSpec load(ncs::Scenario scenario, const Overrides& o) {
    ncs::ExperimentSpec spec = o.config.empty() ? ncs::default_spec(scenario) : ncs::parse_config(o.config);
    if (!o.config.empty() && spec.scenario != scenario) {
        std::cerr << "note: config scenario '" << ncs::to_string(spec.scenario) << "' overridden by subcommand\n";
        spec.scenario = scenario;
    }
    if (!o.out.empty()) {
        spec.out_dir = o.out;
    }
    if (o.seed) {
        spec.base.seed = *o.seed;
    }
    if (o.reps) {
        spec.base.replications = *o.reps;
    }
    if (o.jobs) {
        spec.jobs = *o.jobs;
    }
    spec.validate();
    return spec;
}

void print_runs(const std::vector<ncs::ProtocolRun>& runs) {
    std::printf("%-14s %4s %12s %12s %14s %14s\n", "protocol", "N", "mean_aoi", "mean_nmse", "lqg_cost", "+/-99%");
    for (const auto& r : runs) {
        const auto& s = r.summary;
        std::printf("%-14s %4d %12.4f %12.4g %14.6g %14.6g\n", r.protocol.c_str(), r.n_loops, s.mean_aoi.mean,
                    s.mean_nmse.mean, s.lqg_cost.mean, s.lqg_cost.half_width);
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Networked control loops over a shared wireless hop"};
    app.require_subcommand(1);

    Overrides o;
    auto* run_cmd = app.add_subcommand("run", "single configuration");
    auto* sweep_cmd = app.add_subcommand("sweep", "protocols over a range of N");
    auto* validate_cmd = app.add_subcommand("validate", "simulated vs closed-form mean AoI");
    auto* pendulum_cmd = app.add_subcommand("pendulum", "mixed network with inverted pendulums");
    for (auto* cmd : {run_cmd, sweep_cmd, validate_cmd, pendulum_cmd}) {
        add_common(cmd, o);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*run_cmd || *sweep_cmd) {
            const auto spec = load(*run_cmd ? ncs::Scenario::single : ncs::Scenario::sweep, o);
            const auto runs = ncs::run_sweep(spec);
            ncs::emit_results(runs, spec.out_dir);
            print_runs(runs);
            return 0;
        }
        if (*validate_cmd) {
            const auto spec = load(ncs::Scenario::validate_theory, o);
            const auto report = ncs::validate_theory(spec);
            ncs::emit_theory_report(report, spec.out_dir);
            std::printf("%-14s %4s %6s %8s %10s %10s %9s %s\n", "protocol", "N", "delta", "p", "simulated", "theory",
                        "rel_err", "verdict");
            for (const auto& r : report.rows) {
                std::printf("%-14s %4d %6d %8.4f %10.4f %10.4f %8.2f%% %s\n", r.protocol.c_str(), r.n_loops,
                            r.threshold, r.p, r.simulated, r.theory, 100.0 * r.rel_error(),
                            r.pass() ? "ok" : "OUT OF TOLERANCE");
            }
            for (const auto& [n, below] : report.adra_below_sa) {
                std::printf("N=%d: ADRA below SA: %s\n", n, below ? "yes" : "NO");
            }
            return report.all_pass() ? 0 : 2;
        }
        if (*pendulum_cmd) {
            const auto spec = load(ncs::Scenario::pendulum, o);
            const auto report = ncs::pendulum_case_study(spec);
            ncs::emit_pendulum_report(report, spec.out_dir);
            std::printf("%-14s %12s %10s %12s %10s %s\n", "protocol", "phi_peak_deg", "xi_peak_m", "pend_aoi",
                        "lqg_cost", "all stabilized");
            for (const auto& r : report.results) {
                std::printf("%-14s %12.3f %10.4f %12.3f %10.4g %s\n", r.protocol.c_str(), r.phi_peak_deg(),
                            r.xi_peak(), r.pendulum_mean_aoi(), r.summary.lqg_cost.mean,
                            r.all_stabilized() ? "yes" : "no");
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

// Acceptance checks. `ncs_acceptance <id>...` runs the listed criteria (all when
// none are given) and prints one PASS/FAIL line each. Exit status is the number
// of failures.
#include "ncs/aoi.hpp"
#include "ncs/experiments.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>

using namespace ncs;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

class Detail {
public:
    template <class T>
    Detail& operator<<(const T& v) {
        out_ << v;
        return *this;
    }
    [[nodiscard]] std::string str() const { return out_.str(); }

private:
    std::ostringstream out_ = [] {
        std::ostringstream o;
        o << std::setprecision(5);
        return o;
    }();
};

const std::vector<SystemClass> kMixed{SystemClass::easy, SystemClass::mid, SystemClass::hard};

std::vector<LtiSystem> all_presets() {
    return {make_preset(SystemClass::easy), make_preset(SystemClass::mid), make_preset(SystemClass::hard),
            make_preset(SystemClass::pendulum)};
}

// ----------------------------------------------------------------------------

Verdict round_robin_exact() {
    bool ok = true;
    double worst = 0.0;
    for (int n = 2; n <= 15; ++n) {
        SimConfig cfg;
        cfg.systems = make_loops(n, kMixed);
        cfg.protocol = RoundRobin{};
        cfg.channel = ChannelConfig::ideal();
        const auto res = run(cfg);
        if (cfg.window().length() != 2000) {
            return {false, "window is not 2000 steps"};
        }
        const double err = std::abs(res.metrics.network.mean_aoi - rr_mean_aoi(n));
        worst = std::max(worst, err);
        ok = ok && err <= 0.01;
    }
    return {ok, (Detail() << "max |AoI - (N+1)/2| over N=2..15 is " << worst).str()};
}

// validate_theory at N in {3, 5, 7}, cached across the two criteria using it
const TheoryReport& theory_report() {
    static const TheoryReport report = [] {
        TheoryReport all;
        for (int n : {3, 5, 7}) {
            auto spec = default_spec(Scenario::validate_theory);
            spec.protocols = {SlottedAloha{}, Adra{}};
            spec.n_min = spec.n_max = n;
            auto part = validate_theory(spec);
            all.rows.insert(all.rows.end(), part.rows.begin(), part.rows.end());
            all.adra_below_sa.insert(all.adra_below_sa.end(), part.adra_below_sa.begin(), part.adra_below_sa.end());
        }
        return all;
    }();
    return report;
}

Verdict slotted_aloha_formula() {
    Detail d;
    bool ok = true;
    for (const auto& row : theory_report().rows) {
        if (row.protocol != "slotted_aloha") {
            continue;
        }
        ok = ok && row.rel_error() <= 0.05;
        d << "N=" << row.n_loops << " sim " << row.simulated << " theory " << row.theory << " ("
          << 100.0 * row.rel_error() << "%) ";
    }
    return {ok, d.str()};
}

Verdict adra_dominance() {
    Detail d;
    bool ok = theory_report().adra_below_sa.size() == 3;
    for (const auto& [n, below] : theory_report().adra_below_sa) {
        ok = ok && below;
    }
    for (const auto& row : theory_report().rows) {
        if (row.protocol != "adra") {
            continue;
        }
        ok = ok && row.rel_error() <= 0.10;
        d << "N=" << row.n_loops << " (delta " << row.threshold << ", p " << row.p << ") sim " << row.simulated
          << " theory " << row.theory << " ";
    }
    return {ok, d.str() + (ok ? "below SA everywhere" : "")};
}

Verdict mse_monte_carlo() {
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> normal;
    constexpr int draws = 100000;
    bool ok = true;
    double worst_z = 0.0;
    for (const auto& sys : all_presets()) {
        const auto n = sys.state_dim();
        const Vector sd = sys.noise_cov.diagonal().cwiseSqrt();
        for (int age = 1; age <= 8; ++age) {
            double sum = 0.0;
            double sum_sq = 0.0;
            for (int k = 0; k < draws; ++k) {
                // e = sum_{q=1..age} A^{q-1} w_q, by Horner
                Vector e = Vector::Zero(n);
                for (int q = 0; q < age; ++q) {
                    Vector w(n);
                    for (Eigen::Index j = 0; j < n; ++j) {
                        w(j) = sd(j) * normal(rng);
                    }
                    e = sys.A * e + w;
                }
                const double v = e.squaredNorm();
                sum += v;
                sum_sq += v * v;
            }
            const double mean = sum / draws;
            const double se = std::sqrt((sum_sq / draws - mean * mean) / draws);
            const double z = std::abs(mean - mse_of_age(sys, age)) / se;
            worst_z = std::max(worst_z, z);
            ok = ok && z <= 4.0;
        }
    }
    return {ok, (Detail() << "worst deviation " << worst_z << " standard errors").str()};
}

Verdict trace_identity() {
    double worst = 0.0;
    for (const auto& sys : all_presets()) {
        for (int age = 1; age <= 50; ++age) {
            const double a = error_covariance(sys, age).trace();
            const double b = mse_of_age(sys, age);
            worst = std::max(worst, std::abs(a - b) / std::abs(b));
        }
    }
    return {worst <= 1e-9, (Detail() << "max relative gap " << worst).str()};
}

Verdict riccati() {
    bool ok = true;
    Detail d;
    for (auto sys : all_presets()) {
        const auto sol = solve_dare(sys);
        const double res = riccati_residual(sys, sol.P);
        const double rho = spectral_radius(sys.A - sys.B * sol.gain);
        ok = ok && res < 1e-8 && rho < 1.0;
        d << sys.name << ": residual " << res << " rho " << rho << "; ";
    }
    return {ok, d.str()};
}

Verdict pendulum_zoh() {
    const auto c = pendulum_continuous(PendulumParams{});
    const auto m = discretize_zoh(c.A, c.B, 0.01);
    const Matrix dA = (m.A - pendulum_reference_A()).cwiseAbs();
    const Matrix dB = (m.B - pendulum_reference_B()).cwiseAbs();
    Eigen::Index r = 0;
    Eigen::Index col = 0;
    const double worst_a = dA.maxCoeff(&r, &col);
    const double worst_b = dB.maxCoeff();
    const double worst = std::max(worst_a, worst_b);
    return {worst <= 1e-4, (Detail() << "max |entry gap| " << worst << " (A(" << r + 1 << "," << col + 1
                                     << ") derived " << m.A(r, col) << " vs tabulated "
                                     << pendulum_reference_A()(r, col) << ")")
                               .str()};
}

// N = 15 on the testbed channel, cached across criteria 8 to 10
const std::map<std::string, ReplicationSummary>& comparison() {
    static const std::map<std::string, ReplicationSummary> runs = [] {
        auto spec = default_spec(Scenario::sweep);
        spec.n_min = spec.n_max = 15;
        std::map<std::string, ReplicationSummary> out;
        for (auto& pr : run_sweep(spec)) {
            out.emplace(pr.protocol, std::move(pr.summary));
        }
        return out;
    }();
    return runs;
}

bool below(const Estimate& a, const Estimate& b) {
    return a.mean < b.mean && disjoint(a, b);
}

Verdict protocol_ordering() {
    const auto& r = comparison();
    const auto& pmef = r.at("pmef");
    const auto& wif = r.at("wifresh");
    const auto& mef = r.at("mef");
    const auto& rr = r.at("round_robin");
    const bool a = below(pmef.lqg_cost, wif.lqg_cost);
    const bool b = below(mef.lqg_cost, rr.lqg_cost);
    const bool c = below(pmef.mean_nmse, wif.mean_nmse);
    return {a && b && c, (Detail() << "LQG pmef " << pmef.lqg_cost.mean << "+-" << pmef.lqg_cost.half_width
                                   << " wifresh " << wif.lqg_cost.mean << "+-" << wif.lqg_cost.half_width << " mef "
                                   << mef.lqg_cost.mean << "+-" << mef.lqg_cost.half_width << " rr "
                                   << rr.lqg_cost.mean << "+-" << rr.lqg_cost.half_width << "; nMSE pmef "
                                   << pmef.mean_nmse.mean << " wifresh " << wif.mean_nmse.mean)
                                 .str()};
}

Verdict aoi_control_trade() {
    const auto& r = comparison();
    const auto& pmef = r.at("pmef");
    const auto& wif = r.at("wifresh");
    const bool ok = wif.mean_aoi.mean < pmef.mean_aoi.mean && protocol_ordering().pass;
    return {ok, (Detail() << "AoI wifresh " << wif.mean_aoi.mean << " pmef " << pmef.mean_aoi.mean).str()};
}

Verdict resource_fractions() {
    const auto& r = comparison();
    Detail d;
    bool ok = true;
    const auto e = class_index(SystemClass::easy);
    const auto m = class_index(SystemClass::mid);
    const auto h = class_index(SystemClass::hard);
    for (const char* name : {"round_robin", "wifresh"}) {
        const auto& f = r.at(name).class_fraction;
        for (auto k : {e, m, h}) {
            ok = ok && std::abs(f[k].mean - 1.0 / 3.0) <= 0.02;
        }
        d << name << " " << f[e].mean << "/" << f[m].mean << "/" << f[h].mean << "; ";
    }
    for (const char* name : {"mef", "pmef"}) {
        const auto& f = r.at(name).class_fraction;
        ok = ok && f[h].mean > f[e].mean;
        d << name << " " << f[e].mean << "/" << f[m].mean << "/" << f[h].mean << "; ";
    }
    return {ok, d.str() + "(easy/mid/hard)"};
}

Verdict contention_instability() {
    auto spec = default_spec(Scenario::single);
    spec.protocols = {SlottedAloha{}};
    spec.n_min = spec.n_max = 8;
    spec.base.channel = ChannelConfig::ideal();
    const auto results = run_sweep(spec);
    int witnesses = 0;
    double worst = 0.0;
    for (const auto& run : results.front().summary.runs) {
        const auto& net = run.metrics.network;
        worst = std::max(worst, net.lqg_cost);
        if (net.lqg_cost >= 1e6 && net.any_diverged) {
            ++witnesses;
        }
    }
    return {witnesses >= 1, (Detail() << witnesses << " of " << results.front().summary.runs.size()
                                      << " replications diverged, max LQG " << worst)
                                .str()};
}

Verdict pendulum_case() {
    const auto spec = default_spec(Scenario::pendulum);
    const auto report = pendulum_case_study(spec);
    const auto& pmef = report.at("pmef");
    const auto& mef = report.at("mef");
    const auto& raw = report.at("mef_raw_mse");
    const bool stabilized = pmef.pendulums.size() == 5 && pmef.all_stabilized();
    const bool wider = mef.phi_peak_deg() > pmef.phi_peak_deg() && mef.xi_peak() > pmef.xi_peak();

    // starvation: pendulum loops get under half their fair share of deliveries,
    // hold older information than under the normalized metric and lose the
    // angle bound
    const auto ip = class_index(SystemClass::pendulum);
    const double raw_share = raw.summary.class_fraction[ip].mean;
    const double fair_share = 1.0 / static_cast<double>(spec.classes.size());
    const double aoi_ratio = raw.pendulum_mean_aoi() / mef.pendulum_mean_aoi();
    const bool starved = raw_share < 0.5 * fair_share && aoi_ratio > 1.0 && !raw.all_stabilized();

    return {stabilized && wider && starved,
            (Detail() << "pmef phi " << pmef.phi_peak_deg() << " deg xi " << pmef.xi_peak() << " m; mef phi "
                      << mef.phi_peak_deg() << " deg xi " << mef.xi_peak() << " m; raw-MSE MEF pendulum AoI x"
                      << aoi_ratio << ", delivery share " << raw_share << ", phi " << raw.phi_peak_deg() << " deg")
                .str()};
}

const std::map<int, std::pair<const char*, std::function<Verdict()>>>& criteria() {
    static const std::map<int, std::pair<const char*, std::function<Verdict()>>> table{
        {1, {"round robin exactness", round_robin_exact}},
        {2, {"slotted ALOHA formula", slotted_aloha_formula}},
        {3, {"ADRA dominance", adra_dominance}},
        {4, {"MSE law vs Monte-Carlo", mse_monte_carlo}},
        {5, {"trace identity", trace_identity}},
        {6, {"Riccati correctness", riccati}},
        {7, {"pendulum discretization", pendulum_zoh}},
        {8, {"protocol ordering", protocol_ordering}},
        {9, {"AoI vs control trade", aoi_control_trade}},
        {10, {"resource fractions", resource_fractions}},
        {11, {"contention instability", contention_instability}},
        {12, {"pendulum case study", pendulum_case}},
    };
    return table;
}

} // namespace

int main(int argc, char** argv) {
    std::vector<int> ids;
    for (int i = 1; i < argc; ++i) {
        ids.push_back(std::atoi(argv[i]));
    }
    if (ids.empty()) {
        for (const auto& [id, entry] : criteria()) {
            ids.push_back(id);
        }
    }
    int failures = 0;
    for (int id : ids) {
        const auto it = criteria().find(id);
        if (it == criteria().end()) {
            std::cerr << "unknown criterion " << id << '\n';
            return 64;
        }
        const auto start = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = it->second.second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failures += v.pass ? 0 : 1;
        std::printf("criterion %2d %-26s %s  %s [%.1f s]\n", id, it->second.first, v.pass ? "PASS" : "FAIL",
                    v.detail.c_str(), secs);
        std::fflush(stdout);
    }
    return failures;
}

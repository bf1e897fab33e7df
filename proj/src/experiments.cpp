#include "ncs/experiments.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace ncs {

std::string_view to_string(Scenario s) {
    switch (s) {
    case Scenario::single:
        return "single";
    case Scenario::sweep:
        return "sweep";
    case Scenario::validate_theory:
        return "validate_theory";
    case Scenario::pendulum:
        return "pendulum";
    }
    return "?";
}

Scenario parse_scenario(std::string_view name) {
    if (name == "single" || name == "run") {
        return Scenario::single;
    }
    if (name == "sweep") {
        return Scenario::sweep;
    }
    if (name == "validate_theory" || name == "validate") {
        return Scenario::validate_theory;
    }
    if (name == "pendulum") {
        return Scenario::pendulum;
    }
    throw ConfigError("unknown scenario '" + std::string(name) + "'");
}

// ============================================================================
// Spec
// ============================================================================

void ExperimentSpec::validate() const {
    if (protocols.empty()) {
        throw ConfigError("experiment: protocol list is empty");
    }
    if (n_min < 1 || n_max < n_min) {
        throw ConfigError("experiment: empty N range [" + std::to_string(n_min) + ", " + std::to_string(n_max) + "]");
    }
    if (classes.empty()) {
        throw ConfigError("experiment: class list is empty");
    }
    if (jobs < 1) {
        throw ConfigError("experiment: jobs must be >= 1");
    }
    if (!(phi_limit_deg > 0.0)) {
        throw ConfigError("experiment: phi limit must be positive");
    }
    if (scenario == Scenario::validate_theory) {
        if (base.channel.mode != ChannelMode::strict_collision || base.channel.erasure_prob != 0.0) {
            throw ConfigError("validate_theory: the closed forms assume a strict_collision channel without erasures");
        }
        for (const auto& p : protocols) {
            if (!p.get<SlottedAloha>() && !p.get<Adra>() && !p.get<RoundRobin>()) {
                throw ConfigError("validate_theory: no closed form for protocol " + p.name());
            }
        }
    }
    // everything else is checked once loops exist
    SimConfig probe = config_for(n_min, protocols.front());
    probe.validate();
}

SimConfig ExperimentSpec::config_for(int n_loops, const SchedulerPolicy& protocol) const {
    SimConfig c = base;
    c.systems = make_loops(n_loops, classes);
    c.protocol = protocol;
    return c;
}

ExperimentSpec default_spec(Scenario s) {
    ExperimentSpec spec;
    spec.scenario = s;
    spec.base.channel = ChannelConfig::testbed();
    switch (s) {
    case Scenario::single:
        spec.n_min = spec.n_max = 5;
        break;
    case Scenario::sweep:
        spec.protocols = {RoundRobin{}, Mef{}, WiFresh{}, Pmef{}};
        break;
    case Scenario::validate_theory:
        spec.base.channel = ChannelConfig::ideal();
        spec.protocols = {SlottedAloha{}, Adra{}, RoundRobin{}};
        spec.n_min = 3;
        spec.n_max = 7;
        break;
    case Scenario::pendulum:
        spec.protocols = {RoundRobin{}, Mef{}, WiFresh{}, Pmef{}, Mef{20, ErrorMetric::raw_mse}};
        spec.classes = {SystemClass::easy, SystemClass::pendulum, SystemClass::hard};
        spec.n_min = spec.n_max = 15;
        break;
    }
    return spec;
}

// ============================================================================
// YAML parsing
// ============================================================================

namespace {

class Reader {
public:
    explicit Reader(std::string source) : source_(std::move(source)) {}

    [[noreturn]] void fail(const YAML::Node& node, const std::string& msg) const {
        const auto mark = node.Mark();
        std::string where = source_;
        if (mark.line >= 0) {
            where += ":" + std::to_string(mark.line + 1);
        }
        throw ConfigError(where + ": " + msg);
    }

    void check_keys(const YAML::Node& map, const std::set<std::string>& allowed, const std::string& ctx) const {
        if (!map.IsMap()) {
            fail(map, ctx + " must be a mapping");
        }
        for (const auto& kv : map) {
            const auto key = kv.first.as<std::string>();
            if (!allowed.count(key)) {
                fail(kv.first, "unknown key '" + key + "' in " + ctx);
            }
        }
    }

    template <class T>
    T get(const YAML::Node& node, const std::string& key) const {
        try {
            return node.as<T>();
        } catch (const YAML::Exception&) {
            fail(node, "invalid value for '" + key + "'");
        }
    }

    double number(const YAML::Node& node, const std::string& key, double lo, double hi, bool lo_open = false,
                  bool hi_open = false) const {
        const double v = get<double>(node, key);
        const bool ok = (lo_open ? v > lo : v >= lo) && (hi_open ? v < hi : v <= hi);
        if (!std::isfinite(v) || !ok) {
            std::ostringstream os;
            os << "'" << key << "' = " << v << " outside " << (lo_open ? "(" : "[") << lo << ", " << hi
               << (hi_open ? ")" : "]");
            fail(node, os.str());
        }
        return v;
    }

    std::int64_t micros(const YAML::Node& node, const std::string& key) const {
        return std::llround(number(node, key, 0.0, 3600.0) * 1e6);
    }

    int integer(const YAML::Node& node, const std::string& key, long lo, long hi) const {
        const long v = get<long>(node, key);
        if (v < lo || v > hi) {
            fail(node, "'" + key + "' = " + std::to_string(v) + " outside [" + std::to_string(lo) + ", "
                           + std::to_string(hi) + "]");
        }
        return static_cast<int>(v);
    }

private:
    std::string source_;
};

void apply_sa_p(std::vector<SchedulerPolicy>& protocols, double p) {
    for (auto& pol : protocols) {
        if (pol.get<SlottedAloha>()) {
            pol = SlottedAloha{p};
        }
    }
}

} // namespace

ExperimentSpec parse_config_text(std::string_view text, const std::string& source) {
    YAML::Node root;
    try {
        root = YAML::Load(std::string(text));
    } catch (const YAML::ParserException& e) {
        throw ConfigError(source + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
    }
    const Reader rd(source);
    if (!root.IsMap()) {
        throw ConfigError(source + ": top level must be a mapping");
    }
    rd.check_keys(root,
                  {"scenario", "protocol", "protocols", "N", "n_range", "classes", "duration_s", "warmup_s",
                   "cooldown_s", "sampling_period_s", "frame_len", "seed", "replications", "jobs", "output", "p",
                   "adra", "metric", "channel", "gateway", "phi_limit_deg"},
                  "configuration");

    Scenario scenario = Scenario::single;
    if (root["scenario"]) {
        try {
            scenario = parse_scenario(rd.get<std::string>(root["scenario"], "scenario"));
        } catch (const ConfigError& e) {
            rd.fail(root["scenario"], e.what());
        }
    }
    ExperimentSpec spec = default_spec(scenario);
    auto& base = spec.base;

    if (root["protocol"] && root["protocols"]) {
        rd.fail(root["protocols"], "give either 'protocol' or 'protocols'");
    }
    auto parse_one = [&](const YAML::Node& n) {
        try {
            return parse_policy(rd.get<std::string>(n, "protocol"));
        } catch (const ConfigError& e) {
            rd.fail(n, e.what());
        }
    };
    if (const auto n = root["protocol"]) {
        spec.protocols = {parse_one(n)};
    }
    if (const auto n = root["protocols"]) {
        if (!n.IsSequence() || n.size() == 0) {
            rd.fail(n, "'protocols' must be a non-empty list");
        }
        spec.protocols.clear();
        for (const auto& item : n) {
            spec.protocols.push_back(parse_one(item));
        }
    }

    if (root["N"] && root["n_range"]) {
        rd.fail(root["n_range"], "give either 'N' or 'n_range'");
    }
    if (const auto n = root["N"]) {
        spec.n_min = spec.n_max = rd.integer(n, "N", 1, 10000);
    }
    if (const auto n = root["n_range"]) {
        if (!n.IsSequence() || n.size() != 2) {
            rd.fail(n, "'n_range' must be [min, max]");
        }
        spec.n_min = rd.integer(n[0], "n_range", 1, 10000);
        spec.n_max = rd.integer(n[1], "n_range", 1, 10000);
        if (spec.n_max < spec.n_min) {
            rd.fail(n, "'n_range' is empty");
        }
    }
    if (const auto n = root["classes"]) {
        if (!n.IsSequence() || n.size() == 0) {
            rd.fail(n, "'classes' must be a non-empty list");
        }
        spec.classes.clear();
        for (const auto& item : n) {
            try {
                const auto c = parse_system_class(rd.get<std::string>(item, "classes"));
                if (c == SystemClass::custom) {
                    rd.fail(item, "'custom' loops cannot be built from a class name");
                }
                spec.classes.push_back(c);
            } catch (const ConfigError& e) {
                rd.fail(item, e.what());
            }
        }
    }

    if (const auto n = root["duration_s"]) {
        base.duration_s = rd.number(n, "duration_s", 0.0, 1e6, true);
    }
    if (const auto n = root["warmup_s"]) {
        base.warmup_s = rd.number(n, "warmup_s", 0.0, 1e6);
    }
    if (const auto n = root["cooldown_s"]) {
        base.cooldown_s = rd.number(n, "cooldown_s", 0.0, 1e6);
    }
    if (const auto n = root["sampling_period_s"]) {
        base.sampling_period_s = rd.number(n, "sampling_period_s", 0.0, 10.0, true);
        base.channel.slot_duration_us = base.period_us();
    }
    if (const auto n = root["frame_len"]) {
        base.frame_len = rd.integer(n, "frame_len", 1, 100000);
        for (auto& pol : spec.protocols) {
            if (const auto* mef = pol.get<Mef>()) {
                pol = Mef{base.frame_len, mef->metric};
            }
        }
    }
    if (const auto n = root["seed"]) {
        base.seed = rd.get<std::uint64_t>(n, "seed");
    }
    if (const auto n = root["replications"]) {
        base.replications = rd.integer(n, "replications", 1, 1000000);
    }
    if (const auto n = root["jobs"]) {
        spec.jobs = rd.integer(n, "jobs", 1, 4096);
    }
    if (const auto n = root["output"]) {
        spec.out_dir = rd.get<std::string>(n, "output");
    }
    if (const auto n = root["phi_limit_deg"]) {
        spec.phi_limit_deg = rd.number(n, "phi_limit_deg", 0.0, 360.0, true);
    }
    if (const auto n = root["p"]) {
        apply_sa_p(spec.protocols, rd.number(n, "p", 0.0, 1.0, true));
    }
    if (const auto n = root["adra"]) {
        rd.check_keys(n, {"threshold", "p"}, "adra");
        if (!n["threshold"] || !n["p"]) {
            rd.fail(n, "'adra' needs both threshold and p (omit the block to optimize)");
        }
        const int threshold = rd.integer(n["threshold"], "adra.threshold", 0, 100000);
        const double p = rd.number(n["p"], "adra.p", 0.0, 1.0, true);
        for (auto& pol : spec.protocols) {
            if (pol.get<Adra>()) {
                pol = Adra{threshold, p};
            }
        }
    }
    if (const auto n = root["metric"]) {
        ErrorMetric m{};
        try {
            m = parse_error_metric(rd.get<std::string>(n, "metric"));
        } catch (const ConfigError& e) {
            rd.fail(n, e.what());
        }
        for (auto& pol : spec.protocols) {
            if (const auto* mef = pol.get<Mef>()) {
                pol = Mef{mef->frame_len, m};
            } else if (pol.get<Pmef>()) {
                pol = Pmef{m};
            }
        }
    }
    if (const auto n = root["channel"]) {
        rd.check_keys(n, {"mode", "erasure_prob", "tx_duration_s", "slot_duration_s", "capture_prob"}, "channel");
        auto& ch = base.channel;
        if (const auto m = n["mode"]) {
            try {
                ch.mode = parse_channel_mode(rd.get<std::string>(m, "channel.mode"));
            } catch (const ConfigError& e) {
                rd.fail(m, e.what());
            }
            // a bare mode switch starts from that mode's documented defaults
            const auto preset = ch.mode == ChannelMode::strict_collision ? ChannelConfig::ideal()
                                                                         : ChannelConfig::testbed();
            ch.erasure_prob = preset.erasure_prob;
            ch.capture_prob = preset.capture_prob;
        }
        if (const auto m = n["erasure_prob"]) {
            ch.erasure_prob = rd.number(m, "channel.erasure_prob", 0.0, 1.0, false, true);
        }
        if (const auto m = n["tx_duration_s"]) {
            ch.tx_duration_us = rd.micros(m, "channel.tx_duration_s");
        }
        if (const auto m = n["slot_duration_s"]) {
            ch.slot_duration_us = rd.micros(m, "channel.slot_duration_s");
        }
        if (const auto m = n["capture_prob"]) {
            ch.capture_prob = rd.number(m, "channel.capture_prob", 0.0, 1.0);
        }
        try {
            ch.validate();
        } catch (const ConfigError& e) {
            rd.fail(n, e.what());
        }
    }
    if (const auto n = root["gateway"]) {
        rd.check_keys(n,
                      {"beacon_loss", "ack_loss", "ack_duration_s", "poll_duration_s", "poll_guard_s",
                       "reliability_window_s"},
                      "gateway");
        if (const auto m = n["beacon_loss"]) {
            base.beacon_loss = rd.number(m, "gateway.beacon_loss", 0.0, 1.0, false, true);
        }
        if (const auto m = n["ack_loss"]) {
            base.ack_loss = rd.number(m, "gateway.ack_loss", 0.0, 1.0, false, true);
        }
        if (const auto m = n["ack_duration_s"]) {
            base.ack_duration_us = rd.micros(m, "gateway.ack_duration_s");
        }
        if (const auto m = n["poll_duration_s"]) {
            base.poll_duration_us = rd.micros(m, "gateway.poll_duration_s");
        }
        if (const auto m = n["poll_guard_s"]) {
            base.poll_guard_us = rd.micros(m, "gateway.poll_guard_s");
        }
        if (const auto m = n["reliability_window_s"]) {
            base.reliability_window_us = rd.micros(m, "gateway.reliability_window_s");
        }
    }

    try {
        spec.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(source + ": " + e.what());
    }
    return spec;
}

ExperimentSpec parse_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw ConfigError("cannot read configuration " + file.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), file.string());
}

// ============================================================================
// CSV output
// ============================================================================

namespace {

std::string num(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::ofstream open_csv(const std::filesystem::path& dir, const std::string& name, const std::string& header) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    const auto path = dir / name;
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << header << '\n';
    return out;
}

void close_csv(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) {
        throw std::runtime_error("write failed for " + path.string());
    }
}

constexpr std::array<SystemClass, 4> kPresetClasses{SystemClass::easy, SystemClass::mid, SystemClass::hard,
                                                    SystemClass::pendulum};

bool class_present(const ReplicationSummary& s, SystemClass c) {
    if (s.runs.empty()) {
        return false;
    }
    const auto& loops = s.runs.front().metrics.loops;
    return std::any_of(loops.begin(), loops.end(), [c](const LoopMetrics& l) { return l.klass == c; });
}

} // namespace

std::vector<ProtocolRun> run_sweep(const ExperimentSpec& spec) {
    spec.validate();
    std::vector<ProtocolRun> out;
    for (const auto& protocol : spec.protocols) {
        for (int n = spec.n_min; n <= spec.n_max; ++n) {
            ProtocolRun pr;
            pr.protocol = protocol.name();
            pr.n_loops = n;
            pr.summary = run_replications(spec.config_for(n, protocol), spec.jobs);
            out.push_back(std::move(pr));
        }
    }
    return out;
}

void emit_results(const std::vector<ProtocolRun>& results, const std::filesystem::path& dir) {
    {
        auto out = open_csv(dir, "runs.csv",
                            "run_id,protocol,N,loop_id,class,mean_aoi,mean_mse,mean_nmse,lqg_cost,tx_count,rx_count,"
                            "delivery_ratio,diverged");
        for (const auto& pr : results) {
            for (std::size_t r = 0; r < pr.summary.runs.size(); ++r) {
                for (const auto& l : pr.summary.runs[r].metrics.loops) {
                    out << r << ',' << pr.protocol << ',' << pr.n_loops << ',' << l.loop + 1 << ','
                        << to_string(l.klass) << ',' << num(l.mean_aoi) << ',' << num(l.mean_mse) << ','
                        << num(l.mean_nmse) << ',' << num(l.lqg_cost) << ',' << l.tx_count << ',' << l.rx_count << ','
                        << num(l.delivery_ratio()) << ',' << (l.diverged ? 1 : 0) << '\n';
                }
            }
        }
        close_csv(out, dir / "runs.csv");
    }
    {
        auto out = open_csv(dir, "summary.csv", "protocol,N,metric,mean,ci99_half_width,replications");
        for (const auto& pr : results) {
            const auto& s = pr.summary;
            auto row = [&](const std::string& metric, const Estimate& e) {
                out << pr.protocol << ',' << pr.n_loops << ',' << metric << ',' << num(e.mean) << ','
                    << num(e.half_width) << ',' << e.n << '\n';
            };
            row("mean_aoi", s.mean_aoi);
            row("mean_mse", s.mean_mse);
            row("mean_nmse", s.mean_nmse);
            row("lqg_cost", s.lqg_cost);
            for (auto c : kPresetClasses) {
                if (class_present(s, c)) {
                    row("fraction_" + std::string(to_string(c)), s.class_fraction[class_index(c)]);
                }
            }
        }
        close_csv(out, dir / "summary.csv");
    }
    auto family = [&](const std::string& name, auto pick) {
        auto out = open_csv(dir, name, "protocol,N,mean,lo,hi");
        for (const auto& pr : results) {
            const Estimate& e = pick(pr.summary);
            out << pr.protocol << ',' << pr.n_loops << ',' << num(e.mean) << ',' << num(e.lo()) << ','
                << num(e.hi()) << '\n';
        }
        close_csv(out, dir / name);
    };
    family("aoi_vs_n.csv", [](const ReplicationSummary& s) -> const Estimate& { return s.mean_aoi; });
    family("lqg_vs_n.csv", [](const ReplicationSummary& s) -> const Estimate& { return s.lqg_cost; });
    family("mse_vs_n.csv", [](const ReplicationSummary& s) -> const Estimate& { return s.mean_mse; });
    family("nmse_vs_n.csv", [](const ReplicationSummary& s) -> const Estimate& { return s.mean_nmse; });
    {
        auto out = open_csv(dir, "fractions.csv", "protocol,N,class,fraction,ci99_half_width");
        for (const auto& pr : results) {
            for (auto c : kPresetClasses) {
                if (class_present(pr.summary, c)) {
                    const auto& e = pr.summary.class_fraction[class_index(c)];
                    out << pr.protocol << ',' << pr.n_loops << ',' << to_string(c) << ',' << num(e.mean) << ','
                        << num(e.half_width) << '\n';
                }
            }
        }
        close_csv(out, dir / "fractions.csv");
    }
    emit_nmse_curves(dir / "nmse_vs_age.csv");
}

void emit_nmse_curves(const std::filesystem::path& file, int max_age) {
    auto out = open_csv(file.parent_path().empty() ? "." : file.parent_path(), file.filename().string(),
                        "age,easy,mid,hard,pendulum,pendulum_raw_mse");
    MseTable easy(make_preset(SystemClass::easy));
    MseTable mid(make_preset(SystemClass::mid));
    MseTable hard(make_preset(SystemClass::hard));
    MseTable ip(make_preset(SystemClass::pendulum));
    for (int a = 1; a <= max_age; ++a) {
        out << a << ',' << num(easy.nmse(a)) << ',' << num(mid.nmse(a)) << ',' << num(hard.nmse(a)) << ','
            << num(ip.nmse(a)) << ',' << num(ip.mse(a)) << '\n';
    }
    close_csv(out, file);
}

// ============================================================================
// Theory validation
// ============================================================================

double TheoryRow::rel_error() const {
    return std::abs(simulated - theory) / theory;
}

bool TheoryReport::all_pass() const {
    const bool rows_ok = std::all_of(rows.begin(), rows.end(), [](const TheoryRow& r) { return r.pass(); });
    const bool order_ok =
        std::all_of(adra_below_sa.begin(), adra_below_sa.end(), [](const auto& p) { return p.second; });
    return rows_ok && order_ok;
}

TheoryReport validate_theory(const ExperimentSpec& spec_in) {
    ExperimentSpec spec = spec_in;
    spec.scenario = Scenario::validate_theory;
    spec.validate();

    TheoryReport report;
    for (int n = spec.n_min; n <= spec.n_max; ++n) {
        double sa_sim = -1.0;
        double adra_sim = -1.0;
        for (const auto& protocol : spec.protocols) {
            const bool rr = protocol.get<RoundRobin>() != nullptr;
            if (!rr && n < 3) {
                continue;
            }
            SimConfig cfg = spec.config_for(n, protocol);
            cfg.protocol = cfg.resolved_protocol();
            const auto summary = run_replications(cfg, spec.jobs);

            TheoryRow row;
            row.protocol = protocol.name();
            row.n_loops = n;
            row.simulated = summary.mean_aoi.mean;
            row.half_width = summary.mean_aoi.half_width;
            if (rr) {
                row.theory = rr_mean_aoi(n);
                row.tolerance = 0.05;
            } else if (const auto* sa = cfg.protocol.get<SlottedAloha>()) {
                row.p = *sa->p;
                row.theory = sa_mean_aoi(n, *sa->p);
                row.tolerance = 0.05;
                sa_sim = row.simulated;
            } else if (const auto* adra = cfg.protocol.get<Adra>()) {
                row.p = *adra->p;
                row.threshold = *adra->threshold;
                row.theory = adra_mean_aoi(n, row.threshold, row.p);
                row.tolerance = 0.10;
                adra_sim = row.simulated;
            }
            report.rows.push_back(row);
        }
        if (sa_sim > 0.0 && adra_sim > 0.0) {
            report.adra_below_sa.emplace_back(n, adra_sim < sa_sim);
        }
    }
    return report;
}

void emit_theory_report(const TheoryReport& report, const std::filesystem::path& dir) {
    auto out = open_csv(dir, "theory.csv",
                        "protocol,N,threshold,p,simulated,ci99_half_width,theory,rel_error,tolerance,pass");
    for (const auto& r : report.rows) {
        out << r.protocol << ',' << r.n_loops << ',' << r.threshold << ',' << num(r.p) << ',' << num(r.simulated)
            << ',' << num(r.half_width) << ',' << num(r.theory) << ',' << num(r.rel_error()) << ','
            << num(r.tolerance) << ',' << (r.pass() ? 1 : 0) << '\n';
    }
    close_csv(out, dir / "theory.csv");
}

// ============================================================================
// Pendulum case study
// ============================================================================

double PendulumProtocolResult::phi_peak_deg() const {
    double v = 0.0;
    for (const auto& p : pendulums) {
        v = std::max(v, p.phi_peak_deg);
    }
    return v;
}

double PendulumProtocolResult::xi_peak() const {
    double v = 0.0;
    for (const auto& p : pendulums) {
        v = std::max(v, p.xi_peak);
    }
    return v;
}

bool PendulumProtocolResult::all_stabilized() const {
    return !pendulums.empty()
           && std::all_of(pendulums.begin(), pendulums.end(), [](const auto& p) { return p.stabilized; });
}

double PendulumProtocolResult::pendulum_mean_aoi() const {
    double v = 0.0;
    for (const auto& p : pendulums) {
        v += p.mean_aoi;
    }
    return pendulums.empty() ? 0.0 : v / static_cast<double>(pendulums.size());
}

const PendulumProtocolResult& PendulumReport::at(std::string_view protocol) const {
    for (const auto& r : results) {
        if (r.protocol == protocol) {
            return r;
        }
    }
    throw std::out_of_range("pendulum report has no protocol " + std::string(protocol));
}

PendulumReport pendulum_case_study(const ExperimentSpec& spec_in) {
    ExperimentSpec spec = spec_in;
    spec.scenario = Scenario::pendulum;
    spec.validate();
    const bool has_pendulum = std::find(spec.classes.begin(), spec.classes.end(), SystemClass::pendulum)
                              != spec.classes.end();
    if (!has_pendulum) {
        throw ConfigError("pendulum: class list has no pendulum loops");
    }
    constexpr double kDeg = 180.0 / std::numbers::pi;
    constexpr Eigen::Index kXi = 0;
    constexpr Eigen::Index kPhi = 2;

    PendulumReport report;
    for (const auto& protocol : spec.protocols) {
        SimConfig cfg = spec.config_for(spec.n_max, protocol);
        cfg.record_traces = true;
        const auto window = cfg.window();
        report.window_first = window.first;
        report.sampling_period_s = cfg.sampling_period_s;

        PendulumProtocolResult res;
        res.protocol = protocol.name();
        res.summary = run_replications(cfg, spec.jobs);

        const auto len = static_cast<std::size_t>(window.length());
        for (int i = 0; i < cfg.n_loops(); ++i) {
            if (cfg.systems[static_cast<std::size_t>(i)].klass != SystemClass::pendulum) {
                continue;
            }
            PendulumLoopResult pl;
            pl.loop = i;
            pl.phi_deg.lo.assign(len, std::numeric_limits<double>::infinity());
            pl.phi_deg.hi.assign(len, -std::numeric_limits<double>::infinity());
            pl.xi.lo = pl.phi_deg.lo;
            pl.xi.hi = pl.phi_deg.hi;
            bool diverged = false;
            for (const auto& run : res.summary.runs) {
                const auto& trace = run.traces[static_cast<std::size_t>(i)];
                const auto& lm = run.metrics.loops[static_cast<std::size_t>(i)];
                diverged = diverged || lm.diverged;
                pl.mean_aoi += lm.mean_aoi / static_cast<double>(res.summary.runs.size());
                pl.mean_nmse += lm.mean_nmse / static_cast<double>(res.summary.runs.size());
                for (std::size_t s = 0; s < len; ++s) {
                    const auto& x = trace.state[static_cast<std::size_t>(window.first - 1) + s];
                    const double phi = x(kPhi) * kDeg;
                    const double xi = x(kXi);
                    pl.phi_deg.lo[s] = std::min(pl.phi_deg.lo[s], phi);
                    pl.phi_deg.hi[s] = std::max(pl.phi_deg.hi[s], phi);
                    pl.xi.lo[s] = std::min(pl.xi.lo[s], xi);
                    pl.xi.hi[s] = std::max(pl.xi.hi[s], xi);
                    pl.phi_peak_deg = std::max(pl.phi_peak_deg, std::abs(phi));
                    pl.xi_peak = std::max(pl.xi_peak, std::abs(xi));
                }
            }
            pl.stabilized = !diverged && std::isfinite(pl.phi_peak_deg) && pl.phi_peak_deg <= spec.phi_limit_deg;
            res.pendulums.push_back(std::move(pl));
        }
        // traces are summarized above; drop them to bound memory
        for (auto& run : res.summary.runs) {
            run.traces.clear();
        }
        report.results.push_back(std::move(res));
    }
    return report;
}

void emit_pendulum_report(const PendulumReport& report, const std::filesystem::path& dir) {
    {
        auto out = open_csv(dir, "pendulum_verdicts.csv",
                            "protocol,loop_id,phi_peak_deg,xi_peak_m,mean_aoi,mean_nmse,stabilized");
        for (const auto& r : report.results) {
            for (const auto& p : r.pendulums) {
                out << r.protocol << ',' << p.loop + 1 << ',' << num(p.phi_peak_deg) << ',' << num(p.xi_peak) << ','
                    << num(p.mean_aoi) << ',' << num(p.mean_nmse) << ',' << (p.stabilized ? 1 : 0) << '\n';
            }
        }
        close_csv(out, dir / "pendulum_verdicts.csv");
    }
    {
        auto out = open_csv(dir, "pendulum_trajectories.csv",
                            "protocol,loop_id,step,time_s,phi_min_deg,phi_max_deg,xi_min_m,xi_max_m");
        for (const auto& r : report.results) {
            for (const auto& p : r.pendulums) {
                for (std::size_t s = 0; s < p.phi_deg.lo.size(); ++s) {
                    const auto step = report.window_first + static_cast<std::int64_t>(s);
                    out << r.protocol << ',' << p.loop + 1 << ',' << step << ',' << num(static_cast<double>(step) * report.sampling_period_s) << ','
                        << num(p.phi_deg.lo[s]) << ',' << num(p.phi_deg.hi[s]) << ',' << num(p.xi.lo[s]) << ','
                        << num(p.xi.hi[s]) << '\n';
                }
            }
        }
        close_csv(out, dir / "pendulum_trajectories.csv");
    }
    {
        auto out = open_csv(dir, "pendulum_nmse_boxplot.csv", "protocol,run_id,loop_id,class,mean_nmse,mean_aoi");
        for (const auto& r : report.results) {
            for (std::size_t k = 0; k < r.summary.runs.size(); ++k) {
                for (const auto& l : r.summary.runs[k].metrics.loops) {
                    out << r.protocol << ',' << k << ',' << l.loop + 1 << ',' << to_string(l.klass) << ','
                        << num(l.mean_nmse) << ',' << num(l.mean_aoi) << '\n';
                }
            }
        }
        close_csv(out, dir / "pendulum_nmse_boxplot.csv");
    }
    emit_nmse_curves(dir / "nmse_vs_age.csv");
}

} // namespace ncs

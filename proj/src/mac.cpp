#include "ncs/mac.hpp"

#include <algorithm>

namespace ncs {

// ============================================================================
// Packet / LcfsQueue
// ============================================================================

Packet Packet::data(int src, std::int64_t gen_step, Vector state, std::int64_t duration_us) {
    Packet p;
    p.kind = Kind::data;
    p.src = src;
    p.dst = kGatewayId;
    p.gen_step = gen_step;
    p.payload = std::move(state);
    p.tx_duration_us = duration_us;
    return p;
}

Packet Packet::poll(int dst, std::int64_t duration_us) {
    Packet p;
    p.kind = Kind::poll;
    p.src = kGatewayId;
    p.dst = dst;
    p.tx_duration_us = duration_us;
    return p;
}

Packet Packet::ack(int dst, std::int64_t gen_step) {
    Packet p;
    p.kind = Kind::ack;
    p.src = kGatewayId;
    p.dst = dst;
    p.gen_step = gen_step;
    return p;
}

Packet Packet::beacon(std::int64_t slot_index, std::vector<int> schedule) {
    Packet p;
    p.kind = Kind::beacon;
    p.src = kGatewayId;
    p.slot_index = slot_index;
    p.schedule = std::move(schedule);
    return p;
}

void LcfsQueue::push(Packet pkt) {
    if (pkt.kind != Packet::Kind::data) {
        throw InvariantError("LCFS queue holds data packets only");
    }
    if (slot_) {
        if (slot_->gen_step >= pkt.gen_step) {
            return;
        }
        ++replaced_;
    }
    slot_ = std::move(pkt);
}

std::optional<Packet> LcfsQueue::pop() {
    std::optional<Packet> out;
    out.swap(slot_);
    return out;
}

// ============================================================================
// GwLoopView
// ============================================================================

GwLoopView::GwLoopView(std::int64_t window_us) : window_us_(window_us) {
    if (window_us <= 0) {
        throw ConfigError("reliability window must be positive");
    }
}

std::int64_t GwLoopView::est_age(std::int64_t step) const {
    return std::max<std::int64_t>(1, step - last_gen_);
}

void GwLoopView::prune(std::int64_t now_us) {
    const std::int64_t cutoff = now_us - window_us_;
    while (!polls_.empty() && polls_.front() < cutoff) {
        polls_.pop_front();
    }
    while (!receptions_.empty() && receptions_.front() < cutoff) {
        receptions_.pop_front();
    }
}

void GwLoopView::on_poll(std::int64_t now_us) {
    polls_.push_back(now_us);
}

bool GwLoopView::on_data(std::int64_t gen_step, std::int64_t now_us) {
    receptions_.push_back(now_us);
    if (gen_step <= last_gen_) {
        ++stale_;
        return false;
    }
    last_gen_ = gen_step;
    return true;
}

std::int64_t GwLoopView::rx_in_window(std::int64_t now_us) {
    prune(now_us);
    return static_cast<std::int64_t>(receptions_.size());
}

std::int64_t GwLoopView::tx_in_window(std::int64_t now_us) {
    prune(now_us);
    return static_cast<std::int64_t>(polls_.size());
}

double GwLoopView::reliability(std::int64_t now_us) {
    prune(now_us);
    const auto rx = static_cast<double>(receptions_.size());
    const auto tx = static_cast<double>(polls_.size());
    return (rx + 1.0) / (tx + 1.0);
}

// ============================================================================
// SchedulerPolicy
// ============================================================================

std::string_view to_string(ErrorMetric m) {
    return m == ErrorMetric::nmse ? "nmse" : "raw_mse";
}

ErrorMetric parse_error_metric(std::string_view name) {
    if (name == "nmse") {
        return ErrorMetric::nmse;
    }
    if (name == "raw_mse" || name == "mse") {
        return ErrorMetric::raw_mse;
    }
    throw ConfigError("unknown error metric '" + std::string(name) + "'");
}

namespace {

void check_probability(double p, const char* what) {
    if (!(p > 0.0 && p <= 1.0)) {
        throw ConfigError(std::string(what) + ": access probability must lie in (0, 1]");
    }
}

} // namespace

SchedulerPolicy::SchedulerPolicy(PolicyVariant v) : v_(std::move(v)) {
    if (const auto* sa = get<SlottedAloha>(); sa && sa->p) {
        check_probability(*sa->p, "slotted_aloha");
    } else if (const auto* adra = get<Adra>()) {
        if (adra->threshold.has_value() != adra->p.has_value()) {
            throw ConfigError("adra: set both threshold and p, or neither");
        }
        if (adra->threshold && *adra->threshold < 0) {
            throw ConfigError("adra: threshold must be >= 0");
        }
        if (adra->p) {
            check_probability(*adra->p, "adra");
        }
    } else if (const auto* mef = get<Mef>()) {
        if (mef->frame_len < 1) {
            throw ConfigError("mef: frame_len must be >= 1");
        }
    }
}

std::string SchedulerPolicy::name() const {
    struct Visitor {
        std::string operator()(const Aloha&) const { return "aloha"; }
        std::string operator()(const SlottedAloha&) const { return "slotted_aloha"; }
        std::string operator()(const Adra&) const { return "adra"; }
        std::string operator()(const RoundRobin&) const { return "round_robin"; }
        std::string operator()(const Mef& m) const {
            return m.metric == ErrorMetric::nmse ? "mef" : "mef_raw_mse";
        }
        std::string operator()(const WiFresh&) const { return "wifresh"; }
        std::string operator()(const Pmef& m) const {
            return m.metric == ErrorMetric::nmse ? "pmef" : "pmef_raw_mse";
        }
    };
    return std::visit(Visitor{}, v_);
}

bool SchedulerPolicy::is_polling() const {
    return get<WiFresh>() != nullptr || get<Pmef>() != nullptr;
}

bool SchedulerPolicy::is_slotted() const {
    return get<SlottedAloha>() || get<Adra>() || get<RoundRobin>() || get<Mef>();
}

bool SchedulerPolicy::uses_beacons() const {
    return get<RoundRobin>() || get<Mef>();
}

SchedulerPolicy parse_policy(std::string_view name) {
    if (name == "aloha") {
        return Aloha{};
    }
    if (name == "slotted_aloha" || name == "sa") {
        return SlottedAloha{};
    }
    if (name == "adra") {
        return Adra{};
    }
    if (name == "round_robin" || name == "rr") {
        return RoundRobin{};
    }
    if (name == "mef") {
        return Mef{};
    }
    if (name == "mef_raw_mse") {
        return Mef{20, ErrorMetric::raw_mse};
    }
    if (name == "wifresh") {
        return WiFresh{};
    }
    if (name == "pmef") {
        return Pmef{};
    }
    if (name == "pmef_raw_mse") {
        return Pmef{ErrorMetric::raw_mse};
    }
    throw ConfigError("unknown protocol '" + std::string(name) + "'");
}

// ============================================================================
// Decision rules
// ============================================================================

bool sa_on_slot(const SlottedAloha& policy, Rng& rng) {
    if (!policy.p) {
        throw ConfigError("slotted_aloha: access probability not resolved");
    }
    return bernoulli(rng, *policy.p);
}

bool adra_on_slot(const Adra& policy, std::int64_t source_age, Rng& rng) {
    if (!policy.threshold || !policy.p) {
        throw ConfigError("adra: parameters not resolved");
    }
    if (source_age < *policy.threshold) {
        return false;
    }
    return bernoulli(rng, *policy.p);
}

int rr_next(std::int64_t t, int n_loops) {
    if (n_loops < 1 || t < 1) {
        throw std::domain_error("rr_next: requires t >= 1 and N >= 1");
    }
    return static_cast<int>((t - 1) % n_loops);
}

std::vector<int> mef_build_schedule(std::vector<std::int64_t> ages, const ErrorFn& error, int frame_len) {
    if (frame_len < 1) {
        throw ConfigError("mef: frame_len must be >= 1");
    }
    if (ages.empty()) {
        throw ConfigError("mef: no loops to schedule");
    }
    std::vector<int> schedule;
    schedule.reserve(static_cast<std::size_t>(frame_len));
    for (int slot = 0; slot < frame_len; ++slot) {
        int best = 0;
        double best_value = error(0, ages[0]);
        for (int i = 1; i < static_cast<int>(ages.size()); ++i) {
            const double v = error(i, ages[static_cast<std::size_t>(i)]);
            if (v > best_value) {
                best = i;
                best_value = v;
            }
        }
        schedule.push_back(best);
        // served loop ends the slot with age 1, the rest with one more
        ages[static_cast<std::size_t>(best)] = 0;
        for (auto& a : ages) {
            ++a;
        }
    }
    return schedule;
}

namespace {

template <class Weight>
std::optional<int> argmax_eligible(std::size_t n, const std::vector<bool>& eligible, Weight weight) {
    std::optional<int> best;
    double best_value = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!eligible[i]) {
            continue;
        }
        const double v = weight(static_cast<int>(i));
        if (!best || v > best_value) {
            best = static_cast<int>(i);
            best_value = v;
        }
    }
    return best;
}

void check_sizes(const std::vector<double>& r, const std::vector<std::int64_t>& ages, const std::vector<bool>& e) {
    if (r.size() != ages.size() || e.size() != ages.size()) {
        throw std::invalid_argument("scheduler: per-loop vectors differ in size");
    }
}

} // namespace

std::optional<int> wifresh_next(const std::vector<double>& reliability, const std::vector<std::int64_t>& ages,
                                const std::vector<bool>& eligible) {
    check_sizes(reliability, ages, eligible);
    return argmax_eligible(ages.size(), eligible, [&](int i) {
        const auto k = static_cast<std::size_t>(i);
        return reliability[k] * static_cast<double>(ages[k]);
    });
}

std::optional<int> pmef_next(const std::vector<double>& reliability, const std::vector<std::int64_t>& ages,
                             const std::vector<bool>& eligible, const ErrorFn& error) {
    check_sizes(reliability, ages, eligible);
    return argmax_eligible(ages.size(), eligible, [&](int i) {
        const auto k = static_cast<std::size_t>(i);
        return reliability[k] * error(i, ages[k]);
    });
}

Packet gw_on_data(GwLoopView& view, const Packet& pkt, std::int64_t now_us) {
    if (pkt.kind != Packet::Kind::data) {
        throw InvariantError("gw_on_data: not a data packet");
    }
    view.on_data(pkt.gen_step, now_us);
    return Packet::ack(pkt.src, view.last_gen());
}

} // namespace ncs

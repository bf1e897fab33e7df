#pragma once

#include "ncs/aoi.hpp"
#include "ncs/channel.hpp"
#include "ncs/control.hpp"
#include "ncs/mac.hpp"
#include "ncs/metrics.hpp"

#include <cstdint>
#include <queue>
#include <string>
#include <vector>

namespace ncs {

// ============================================================================
// Configuration
// ============================================================================

struct SimConfig {
    std::vector<LtiSystem> systems; // one per loop, gains synthesized
    SchedulerPolicy protocol;
    ChannelConfig channel;
    double duration_s = 30.0;
    double warmup_s = 5.0;
    double cooldown_s = 5.0;
    double sampling_period_s = 0.010;
    int frame_len = 20; // beacon frame of round robin (MEF carries its own)
    std::uint64_t seed = 0;
    int replications = 20;

    double beacon_loss = 0.0;
    double ack_loss = 0.0;
    std::int64_t ack_duration_us = 0;
    std::int64_t poll_duration_us = -1; // -1: channel tx_duration
    std::int64_t poll_guard_us = 2000;
    std::int64_t reliability_window_us = 500'000;
    double divergence_threshold = 1e12;
    bool record_traces = false;

    [[nodiscard]] int n_loops() const { return static_cast<int>(systems.size()); }
    [[nodiscard]] std::int64_t period_us() const;
    [[nodiscard]] std::int64_t steps() const;
    [[nodiscard]] EvalWindow window() const;
    [[nodiscard]] std::int64_t poll_us() const {
        return poll_duration_us < 0 ? channel.tx_duration_us : poll_duration_us;
    }

    void validate() const;

    // Fills run-time defaults: slotted ALOHA p = 1/N, ADRA (delta, p) from
    // optimize_adra(N).
    [[nodiscard]] SchedulerPolicy resolved_protocol() const;
};

// Loops built from class presets, cycling `classes` over loop ids.
[[nodiscard]] std::vector<LtiSystem> make_loops(int n_loops, const std::vector<SystemClass>& classes);

// ============================================================================
// Event queue
// ============================================================================

// Lower value runs first among events at the same instant.
enum class EventKind : int {
    rx_delivery = 0,
    tx_end = 1,
    poll_timeout = 2,
    sample_tick = 3,
    frame_start = 4,
    slot_start = 5,
    poll_start = 6,
};

struct Event {
    std::int64_t time_us = 0;
    EventKind kind = EventKind::sample_tick;
    int loop = -1;
    std::uint64_t seq = 0; // insertion order, last tie-break
    std::int64_t arg = 0;  // step, slot index or token
    Packet packet;
};

class EventQueue {
public:
    void push(Event e);
    [[nodiscard]] Event pop();
    [[nodiscard]] bool empty() const { return heap_.empty(); }
    [[nodiscard]] std::size_t size() const { return heap_.size(); }
    [[nodiscard]] std::int64_t now() const { return now_; }

private:
    struct Later {
        bool operator()(const Event& a, const Event& b) const;
    };
    std::priority_queue<Event, std::vector<Event>, Later> heap_;
    std::uint64_t next_seq_ = 0;
    std::int64_t now_ = 0;
};

// ============================================================================
// Runs
// ============================================================================

struct LoopTrace {
    std::vector<std::int64_t> age;     // Delta[t], t = 1..steps
    std::vector<Vector> state;         // x[t], t = 1..steps
};

struct SimStats {
    std::uint64_t events = 0;
    std::uint64_t slots = 0;
    std::uint64_t collisions = 0;      // slots with >= 2 transmissions
    std::uint64_t polls = 0;
    std::uint64_t poll_timeouts = 0;
    std::uint64_t beacons_lost = 0;
    std::uint64_t max_queue = 0;
    std::vector<std::int64_t> sample_ticks;
    std::vector<int> poll_targets; // only with record_traces
};

struct RunResult {
    std::uint64_t seed = 0;
    std::string protocol;
    FinalMetrics metrics;
    SimStats stats;
    std::vector<LoopTrace> traces; // empty unless record_traces
};

// One replication with cfg.seed.
[[nodiscard]] RunResult run(const SimConfig& cfg);

struct Estimate {
    double mean = 0.0;
    double half_width = 0.0; // confidence half-width; 0 for fewer than 2 samples
    int n = 0;

    [[nodiscard]] double lo() const { return mean - half_width; }
    [[nodiscard]] double hi() const { return mean + half_width; }
};

// Student-t interval over the samples. Non-finite samples give an infinite mean
// and half-width.
[[nodiscard]] Estimate summarize(const std::vector<double>& samples, double confidence = 0.99);

[[nodiscard]] bool disjoint(const Estimate& a, const Estimate& b);

struct ReplicationSummary {
    std::vector<RunResult> runs;
    Estimate mean_aoi;
    Estimate mean_mse;
    Estimate mean_nmse;
    Estimate lqg_cost;
    std::array<Estimate, kClassCount> class_fraction;
    std::array<Estimate, kClassCount> class_aoi;
    std::array<Estimate, kClassCount> class_nmse;
    std::array<Estimate, kClassCount> class_lqg;
};

// Replication r runs with seed cfg.seed + r, spread over `jobs` threads.
[[nodiscard]] ReplicationSummary run_replications(const SimConfig& cfg, int jobs = 1);

} // namespace ncs

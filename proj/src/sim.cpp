#include "ncs/sim.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

namespace ncs {

// ============================================================================
// SimConfig
// ============================================================================

std::int64_t SimConfig::period_us() const {
    return std::llround(sampling_period_s * 1e6);
}

std::int64_t SimConfig::steps() const {
    return std::llround(duration_s / sampling_period_s);
}

EvalWindow SimConfig::window() const {
    return EvalWindow{std::llround(warmup_s / sampling_period_s) + 1,
                      std::llround((duration_s - cooldown_s) / sampling_period_s)};
}

void SimConfig::validate() const {
    if (systems.empty()) {
        throw ConfigError("sim: at least one loop is required");
    }
    for (const auto& sys : systems) {
        sys.validate();
        if (!sys.has_gain()) {
            throw ConfigError("sim: loop '" + sys.name + "' has no synthesized gain");
        }
    }
    if (!(sampling_period_s > 0.0) || period_us() <= 0) {
        throw ConfigError("sim: sampling period must be positive");
    }
    if (!(warmup_s >= 0.0 && cooldown_s >= 0.0)) {
        throw ConfigError("sim: warmup and cooldown must be non-negative");
    }
    if (!(duration_s > warmup_s + cooldown_s)) {
        throw ConfigError("sim: duration must exceed warmup + cooldown");
    }
    if (frame_len < 1) {
        throw ConfigError("sim: frame_len must be >= 1");
    }
    if (replications < 1) {
        throw ConfigError("sim: replications must be >= 1");
    }
    channel.validate();
    if (channel.slot_duration_us != period_us()) {
        throw ConfigError("sim: slot duration must equal the sampling period");
    }
    for (double p : {beacon_loss, ack_loss}) {
        if (!(p >= 0.0 && p < 1.0)) {
            throw ConfigError("sim: beacon/ack loss must lie in [0, 1)");
        }
    }
    if (ack_duration_us < 0 || ack_duration_us + channel.tx_duration_us > channel.slot_duration_us) {
        throw ConfigError("sim: ack must fit in the slot after the data");
    }
    if (poll_guard_us < 0 || reliability_window_us <= 0) {
        throw ConfigError("sim: poll guard / reliability window out of range");
    }
    if (poll_us() <= 0) {
        throw ConfigError("sim: poll duration must be positive");
    }
    if (!(divergence_threshold > 0.0)) {
        throw ConfigError("sim: divergence threshold must be positive");
    }
}

SchedulerPolicy SimConfig::resolved_protocol() const {
    const int n = n_loops();
    if (const auto* sa = protocol.get<SlottedAloha>(); sa && !sa->p) {
        return SlottedAloha{1.0 / n};
    }
    if (const auto* adra = protocol.get<Adra>(); adra && !adra->threshold) {
        if (n < 3) {
            throw ConfigError("adra: optimizer needs N >= 3; set threshold and p explicitly");
        }
        const auto best = optimize_adra(n);
        return Adra{best.threshold, best.p};
    }
    return protocol;
}

std::vector<LtiSystem> make_loops(int n_loops, const std::vector<SystemClass>& classes) {
    if (n_loops < 1) {
        throw ConfigError("make_loops: N must be >= 1");
    }
    if (classes.empty()) {
        throw ConfigError("make_loops: class list is empty");
    }
    std::vector<LtiSystem> out;
    out.reserve(static_cast<std::size_t>(n_loops));
    for (int i = 0; i < n_loops; ++i) {
        out.push_back(make_preset(classes[static_cast<std::size_t>(i) % classes.size()]));
    }
    return out;
}

// ============================================================================
// EventQueue
// ============================================================================

bool EventQueue::Later::operator()(const Event& a, const Event& b) const {
    if (a.time_us != b.time_us) {
        return a.time_us > b.time_us;
    }
    if (a.kind != b.kind) {
        return static_cast<int>(a.kind) > static_cast<int>(b.kind);
    }
    if (a.loop != b.loop) {
        return a.loop > b.loop;
    }
    return a.seq > b.seq;
}

void EventQueue::push(Event e) {
    if (e.time_us < now_) {
        throw InvariantError("event queue: event scheduled in the past");
    }
    e.seq = next_seq_++;
    heap_.push(std::move(e));
}

Event EventQueue::pop() {
    if (heap_.empty()) {
        throw InvariantError("event queue: pop from empty queue");
    }
    Event e = heap_.top();
    heap_.pop();
    now_ = e.time_us;
    return e;
}

// ============================================================================
// Engine
// ============================================================================

namespace {

class Engine {
public:
    explicit Engine(const SimConfig& cfg)
        : cfg_(cfg),
          policy_(cfg.resolved_protocol()),
          n_(cfg.n_loops()),
          period_(cfg.period_us()),
          steps_(cfg.steps()),
          metrics_(classes_of(cfg), cfg.window()),
          gateway_rng_(make_stream(cfg.seed, -1, StreamPurpose::gateway)),
          slot_rng_(make_stream(cfg.seed, -1, StreamPurpose::channel)) {
        const auto N = static_cast<std::size_t>(n_);
        loops_.reserve(N);
        tables_.reserve(N);
        for (int i = 0; i < n_; ++i) {
            const auto& sys = cfg.systems[static_cast<std::size_t>(i)];
            loops_.emplace_back(sys, Vector::Zero(sys.state_dim()));
            tables_.emplace_back(sys);
            noise_rng_.push_back(make_stream(cfg.seed, i, StreamPurpose::noise));
            access_rng_.push_back(make_stream(cfg.seed, i, StreamPurpose::access));
            channel_rng_.push_back(make_stream(cfg.seed, i, StreamPurpose::channel));
            views_.emplace_back(cfg.reliability_window_us);
            noise_std_.push_back(sys.noise_cov.diagonal().cwiseSqrt());
        }
        queues_.resize(N);
        source_gen_.assign(N, 0);
        heard_.assign(N, true);
        stats_.sample_ticks.assign(N, 0);
        if (cfg.record_traces) {
            traces_.resize(N);
            for (auto& tr : traces_) {
                tr.age.reserve(static_cast<std::size_t>(steps_));
                tr.state.reserve(static_cast<std::size_t>(steps_));
            }
        }
        if (const auto* mef = policy_.get<Mef>()) {
            frame_len_ = mef->frame_len;
            metric_ = mef->metric;
        } else {
            frame_len_ = cfg.frame_len;
        }
        if (const auto* pmef = policy_.get<Pmef>()) {
            metric_ = pmef->metric;
        }
    }

    RunResult run() {
        for (int i = 0; i < n_; ++i) {
            schedule(period_, EventKind::sample_tick, i, 1);
        }
        if (policy_.is_polling()) {
            schedule(0, EventKind::poll_start, -1, 0);
        } else {
            schedule(period_, EventKind::slot_start, -1, 1);
            if (policy_.uses_beacons()) {
                schedule(period_, EventKind::frame_start, -1, 1);
            }
        }

        const std::int64_t end = (steps_ + 1) * period_;
        while (!queue_.empty()) {
            Event e = queue_.pop();
            if (e.time_us >= end) {
                break;
            }
            ++stats_.events;
            dispatch(e);
        }

        RunResult out;
        out.seed = cfg_.seed;
        out.protocol = policy_.name();
        out.metrics = metrics_.finalize();
        out.stats = std::move(stats_);
        out.traces = std::move(traces_);
        return out;
    }

private:
    static std::vector<SystemClass> classes_of(const SimConfig& cfg) {
        std::vector<SystemClass> c;
        for (const auto& s : cfg.systems) {
            c.push_back(s.klass);
        }
        return c;
    }

    void schedule(std::int64_t time, EventKind kind, int loop, std::int64_t arg, Packet pkt = {}) {
        Event e;
        e.time_us = time;
        e.kind = kind;
        e.loop = loop;
        e.arg = arg;
        e.packet = std::move(pkt);
        queue_.push(std::move(e));
    }

    [[nodiscard]] std::int64_t step_at(std::int64_t time) const { return time / period_; }

    [[nodiscard]] double error(int loop, std::int64_t age) {
        auto& table = tables_[static_cast<std::size_t>(loop)];
        return metric_ == ErrorMetric::nmse ? table.nmse(age) : table.mse(age);
    }

    void dispatch(Event& e) {
        switch (e.kind) {
        case EventKind::sample_tick:
            on_sample_tick(e.loop, e.arg);
            break;
        case EventKind::frame_start:
            on_frame_start(e.arg);
            break;
        case EventKind::slot_start:
            on_slot_start(e.arg);
            break;
        case EventKind::rx_delivery:
            on_delivery(e);
            break;
        case EventKind::tx_end:
            break;
        case EventKind::poll_timeout:
            if (busy_ && e.arg == poll_token_) {
                ++stats_.poll_timeouts;
                busy_ = false;
                start_poll();
            }
            break;
        case EventKind::poll_start:
            start_poll();
            break;
        }
    }

    // ------------------------------------------------------------------
    // Plant side
    // ------------------------------------------------------------------

    void on_sample_tick(int i, std::int64_t t) {
        const auto k = static_cast<std::size_t>(i);
        const auto& sys = cfg_.systems[k];
        auto& loop = loops_[k];

        Vector w(sys.state_dim());
        for (Eigen::Index j = 0; j < w.size(); ++j) {
            w(j) = noise_std_[k](j) * normal_(noise_rng_[k]);
        }
        loop.advance(sys, w); // x[t]
        if (loop.step() != t) {
            throw InvariantError("sample tick out of step");
        }
        const Vector& x = loop.true_state();
        if (!x.allFinite() || max_abs(x) > cfg_.divergence_threshold) {
            metrics_.mark_diverged(i);
        }

        const auto cs = loop.control(sys);
        auto& table = tables_[k];
        double cost = cs.stage_cost;
        if (std::isnan(cost)) {
            cost = std::numeric_limits<double>::infinity();
        }
        metrics_.record_step(i, t, cs.age, table.mse(cs.age), table.nmse(cs.age), cost);
        if (cfg_.record_traces) {
            traces_[k].age.push_back(cs.age);
            traces_[k].state.push_back(x);
        }

        queues_[k].push(Packet::data(i, t, x, cfg_.channel.tx_duration_us));
        stats_.max_queue = std::max<std::uint64_t>(stats_.max_queue, queues_[k].size());
        metrics_.record_generated(i);
        ++stats_.sample_ticks[k];

        if (t < steps_) {
            schedule((t + 1) * period_, EventKind::sample_tick, i, t + 1);
        }
    }

    // ------------------------------------------------------------------
    // Slotted and unslotted contention, beacon scheduling
    // ------------------------------------------------------------------

    void on_frame_start(std::int64_t k) {
        if (policy_.get<Mef>()) {
            std::vector<std::int64_t> ages(static_cast<std::size_t>(n_));
            for (int i = 0; i < n_; ++i) {
                ages[static_cast<std::size_t>(i)] = views_[static_cast<std::size_t>(i)].est_age(k + 1);
            }
            frame_ = mef_build_schedule(std::move(ages), [this](int i, std::int64_t a) { return error(i, a); },
                                        frame_len_);
        } else {
            frame_.clear();
            for (int s = 0; s < frame_len_; ++s) {
                frame_.push_back(rr_next(k + s, n_));
            }
        }
        frame_first_slot_ = k;
        for (int i = 0; i < n_; ++i) {
            const bool lost = cfg_.beacon_loss > 0.0 && bernoulli(gateway_rng_, cfg_.beacon_loss);
            heard_[static_cast<std::size_t>(i)] = !lost;
            stats_.beacons_lost += lost ? 1 : 0;
        }
        if (k + frame_len_ <= steps_) {
            schedule((k + frame_len_) * period_, EventKind::frame_start, -1, k + frame_len_);
        }
    }

    void on_slot_start(std::int64_t k) {
        ++stats_.slots;
        std::vector<SlotTransmission> txs;
        std::vector<Packet> sent;

        auto transmit = [&](int i, std::int64_t offset) {
            auto pkt = queues_[static_cast<std::size_t>(i)].pop();
            if (!pkt) {
                return;
            }
            metrics_.record_tx(i);
            txs.push_back(SlotTransmission{i, offset});
            sent.push_back(std::move(*pkt));
        };

        if (policy_.get<Aloha>()) {
            for (int i = 0; i < n_; ++i) {
                auto& rng = access_rng_[static_cast<std::size_t>(i)];
                if (aloha_on_sample(!queues_[static_cast<std::size_t>(i)].empty())) {
                    transmit(i, draw_async_offset(cfg_.channel, rng));
                }
            }
        } else if (const auto* sa = policy_.get<SlottedAloha>()) {
            for (int i = 0; i < n_; ++i) {
                auto& rng = access_rng_[static_cast<std::size_t>(i)];
                if (!queues_[static_cast<std::size_t>(i)].empty() && sa_on_slot(*sa, rng)) {
                    transmit(i, draw_offset(cfg_.channel, rng));
                }
            }
        } else if (const auto* adra = policy_.get<Adra>()) {
            for (int i = 0; i < n_; ++i) {
                const auto idx = static_cast<std::size_t>(i);
                if (cfg_.ack_loss == 0.0 && source_gen_[idx] != views_[idx].last_gen()) {
                    throw InvariantError("adra: source view of loop " + std::to_string(i)
                                         + " disagrees with the gateway under lossless acks");
                }
                auto& rng = access_rng_[idx];
                const std::int64_t source_age = k - source_gen_[idx];
                if (!queues_[idx].empty() && adra_on_slot(*adra, source_age, rng)) {
                    transmit(i, draw_offset(cfg_.channel, rng));
                }
            }
        } else {
            const auto pos = static_cast<std::size_t>(k - frame_first_slot_);
            if (pos >= frame_.size()) {
                throw InvariantError("slot outside the current beacon frame");
            }
            const int i = frame_[pos];
            if (heard_[static_cast<std::size_t>(i)]) {
                transmit(i, draw_offset(cfg_.channel, access_rng_[static_cast<std::size_t>(i)]));
            }
        }

        if (txs.size() >= 2) {
            ++stats_.collisions;
        }
        std::vector<int> decoded;
        if (policy_.get<Aloha>() && cfg_.channel.mode == ChannelMode::strict_collision) {
            // unslotted: only overlapping packets collide, and never capture
            ChannelConfig no_capture = cfg_.channel;
            no_capture.capture_prob = 0.0;
            decoded = resolve_overlaps(txs, no_capture, slot_rng_);
        } else {
            decoded = resolve_slot(txs, cfg_.channel, slot_rng_);
        }

        const std::int64_t slot_begin = k * period_;
        for (std::size_t j = 0; j < txs.size(); ++j) {
            const std::int64_t done = slot_begin + txs[j].offset_us + cfg_.channel.tx_duration_us;
            const bool ok = std::find(decoded.begin(), decoded.end(), txs[j].loop) != decoded.end();
            if (ok) {
                schedule(done, EventKind::rx_delivery, txs[j].loop, 0, std::move(sent[j]));
            } else {
                schedule(done, EventKind::tx_end, txs[j].loop, 0);
            }
        }

        if (k < steps_) {
            schedule((k + 1) * period_, EventKind::slot_start, -1, k + 1);
        }
    }

    // ------------------------------------------------------------------
    // Receptions
    // ------------------------------------------------------------------

    void on_delivery(Event& e) {
        const Packet& pkt = e.packet;
        if (pkt.kind == Packet::Kind::ack) {
            auto& gen = source_gen_[static_cast<std::size_t>(pkt.dst)];
            gen = std::max(gen, pkt.gen_step);
            return;
        }
        if (pkt.kind != Packet::Kind::data) {
            throw InvariantError("unexpected packet kind at the gateway");
        }
        const int i = pkt.src;
        const auto k = static_cast<std::size_t>(i);
        const std::int64_t now = e.time_us;
        Packet ack = gw_on_data(views_[k], pkt, now);
        loops_[k].deliver(pkt.payload, pkt.gen_step);
        metrics_.record_rx(i, step_at(now) + 1);

        if (!(cfg_.ack_loss > 0.0 && bernoulli(gateway_rng_, cfg_.ack_loss))) {
            schedule(now + cfg_.ack_duration_us, EventKind::rx_delivery, i, 0, std::move(ack));
        }

        if (policy_.is_polling() && busy_ && i == poll_target_) {
            busy_ = false;
            schedule(now, EventKind::poll_start, -1, 0);
        }
    }

    // ------------------------------------------------------------------
    // Polling gateway
    // ------------------------------------------------------------------

    void start_poll() {
        if (busy_) {
            return;
        }
        const std::int64_t now = queue_.now();
        const std::int64_t step = step_at(now);

        const auto N = static_cast<std::size_t>(n_);
        std::vector<bool> eligible(N);
        std::vector<std::int64_t> ages(N);
        std::vector<double> rel(N);
        bool any = false;
        for (std::size_t i = 0; i < N; ++i) {
            eligible[i] = views_[i].last_gen() < step;
            any = any || eligible[i];
            ages[i] = views_[i].est_age(step + 1);
            rel[i] = views_[i].reliability(now);
        }
        if (!any) {
            if (step + 1 <= steps_) {
                schedule((step + 1) * period_, EventKind::poll_start, -1, 0);
            }
            return;
        }

        std::optional<int> target;
        if (policy_.get<WiFresh>()) {
            target = wifresh_next(rel, ages, eligible);
        } else {
            target = pmef_next(rel, ages, eligible, [this](int i, std::int64_t a) { return error(i, a); });
        }
        if (!target) {
            throw InvariantError("polling: no target despite eligible loops");
        }

        const int i = *target;
        const auto k = static_cast<std::size_t>(i);
        busy_ = true;
        poll_target_ = i;
        ++poll_token_;
        ++stats_.polls;
        views_[k].on_poll(now);
        if (cfg_.record_traces) {
            stats_.poll_targets.push_back(i);
        }

        const std::int64_t poll = cfg_.poll_us();
        const std::int64_t data = cfg_.channel.tx_duration_us;
        auto& rng = channel_rng_[k];
        if (resolve_pointtopoint(cfg_.channel, rng)) {
            if (auto pkt = queues_[k].pop()) {
                metrics_.record_tx(i);
                if (resolve_pointtopoint(cfg_.channel, rng)) {
                    schedule(now + poll + data, EventKind::rx_delivery, i, 0, std::move(*pkt));
                    return;
                }
            }
        }
        schedule(now + poll + data + cfg_.poll_guard_us, EventKind::poll_timeout, -1, poll_token_);
    }

    const SimConfig& cfg_;
    SchedulerPolicy policy_;
    int n_;
    std::int64_t period_;
    std::int64_t steps_;
    MetricsAccumulator metrics_;
    EventQueue queue_;

    std::vector<LoopState> loops_;
    std::vector<MseTable> tables_;
    std::vector<Vector> noise_std_;
    std::vector<Rng> noise_rng_;
    std::vector<Rng> access_rng_;
    std::vector<Rng> channel_rng_;
    Rng gateway_rng_;
    Rng slot_rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};

    std::vector<LcfsQueue> queues_;
    std::vector<GwLoopView> views_;
    std::vector<std::int64_t> source_gen_; // source-side copy of the gateway's freshest gen (acks)

    int frame_len_ = 20;
    ErrorMetric metric_ = ErrorMetric::nmse;
    std::vector<int> frame_;
    std::int64_t frame_first_slot_ = 1;
    std::vector<bool> heard_;

    bool busy_ = false;
    int poll_target_ = -1;
    std::int64_t poll_token_ = 0;

    SimStats stats_;
    std::vector<LoopTrace> traces_;
};

} // namespace

RunResult run(const SimConfig& cfg) {
    cfg.validate();
    Engine engine(cfg);
    return engine.run();
}

// ============================================================================
// Replications
// ============================================================================

Estimate summarize(const std::vector<double>& samples, double confidence) {
    Estimate e;
    e.n = static_cast<int>(samples.size());
    if (samples.empty()) {
        return e;
    }
    const bool finite = std::all_of(samples.begin(), samples.end(), [](double v) { return std::isfinite(v); });
    if (!finite) {
        e.mean = std::numeric_limits<double>::infinity();
        e.half_width = std::numeric_limits<double>::infinity();
        return e;
    }
    const double n = static_cast<double>(samples.size());
    e.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
    if (samples.size() < 2) {
        return e;
    }
    double ss = 0.0;
    for (double v : samples) {
        ss += (v - e.mean) * (v - e.mean);
    }
    const double sd = std::sqrt(ss / (n - 1.0));
    const boost::math::students_t dist(n - 1.0);
    const double t = boost::math::quantile(dist, 0.5 + confidence / 2.0);
    e.half_width = t * sd / std::sqrt(n);
    return e;
}

bool disjoint(const Estimate& a, const Estimate& b) {
    return a.hi() < b.lo() || b.hi() < a.lo();
}

ReplicationSummary run_replications(const SimConfig& cfg, int jobs) {
    cfg.validate();
    const int reps = cfg.replications;
    // resolve once so every replication shares the optimizer's pair
    SimConfig base = cfg;
    base.protocol = cfg.resolved_protocol();

    ReplicationSummary out;
    out.runs.resize(static_cast<std::size_t>(reps));
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&] {
        for (int r = next++; r < reps; r = next++) {
            try {
                SimConfig c = base;
                c.seed = base.seed + static_cast<std::uint64_t>(r);
                out.runs[static_cast<std::size_t>(r)] = run(c);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
            }
        }
    };
    const int threads = std::clamp(jobs, 1, reps);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) {
            pool.emplace_back(worker);
        }
        for (auto& th : pool) {
            th.join();
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }

    auto collect = [&](auto get) {
        std::vector<double> v;
        v.reserve(out.runs.size());
        for (const auto& r : out.runs) {
            v.push_back(get(r.metrics));
        }
        return summarize(v);
    };
    out.mean_aoi = collect([](const FinalMetrics& m) { return m.network.mean_aoi; });
    out.mean_mse = collect([](const FinalMetrics& m) { return m.network.mean_mse; });
    out.mean_nmse = collect([](const FinalMetrics& m) { return m.network.mean_nmse; });
    out.lqg_cost = collect([](const FinalMetrics& m) { return m.network.lqg_cost; });

    for (std::size_t c = 0; c < kClassCount; ++c) {
        out.class_fraction[c] = collect([c](const FinalMetrics& m) { return m.network.class_fraction[c]; });
        auto class_mean = [c](const FinalMetrics& m, auto field) {
            double sum = 0.0;
            int count = 0;
            for (const auto& l : m.loops) {
                if (class_index(l.klass) == c) {
                    sum += field(l);
                    ++count;
                }
            }
            return count == 0 ? 0.0 : sum / count;
        };
        out.class_aoi[c] = collect([&](const FinalMetrics& m) {
            return class_mean(m, [](const LoopMetrics& l) { return l.mean_aoi; });
        });
        out.class_nmse[c] = collect([&](const FinalMetrics& m) {
            return class_mean(m, [](const LoopMetrics& l) { return l.mean_nmse; });
        });
        out.class_lqg[c] = collect([&](const FinalMetrics& m) {
            return class_mean(m, [](const LoopMetrics& l) { return l.lqg_cost; });
        });
    }
    return out;
}

} // namespace ncs

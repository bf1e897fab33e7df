#pragma once

#include "ncs/linalg.hpp"
#include "ncs/rng.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

namespace ncs {

// ============================================================================
// Messages and queues
// ============================================================================

inline constexpr int kGatewayId = -1;

struct Packet {
    enum class Kind { data, poll, ack, beacon };

    Kind kind = Kind::data;
    int src = 0;
    int dst = kGatewayId;
    std::int64_t gen_step = -1; // data and ack
    Vector payload;             // data
    std::vector<int> schedule;  // beacon
    std::int64_t slot_index = 0;
    std::int64_t tx_duration_us = 0;

    [[nodiscard]] static Packet data(int src, std::int64_t gen_step, Vector state, std::int64_t duration_us);
    [[nodiscard]] static Packet poll(int dst, std::int64_t duration_us);
    [[nodiscard]] static Packet ack(int dst, std::int64_t gen_step);
    [[nodiscard]] static Packet beacon(std::int64_t slot_index, std::vector<int> schedule);
};

// Single-slot last-come-first-served buffer.
class LcfsQueue {
public:
    // Replaces an older packet; a packet that is not fresher is dropped.
    void push(Packet pkt);
    [[nodiscard]] std::optional<Packet> pop();
    [[nodiscard]] const Packet* peek() const { return slot_ ? &*slot_ : nullptr; }
    [[nodiscard]] bool empty() const { return !slot_.has_value(); }
    [[nodiscard]] std::size_t size() const { return slot_ ? 1 : 0; }
    [[nodiscard]] std::int64_t replaced() const { return replaced_; }

private:
    std::optional<Packet> slot_;
    std::int64_t replaced_ = 0;
};

// ============================================================================
// Gateway-side view of one loop
// ============================================================================

class GwLoopView {
public:
    explicit GwLoopView(std::int64_t window_us = 500'000);

    // Generation step of the freshest data received (0 at cold start).
    [[nodiscard]] std::int64_t last_gen() const { return last_gen_; }
    // max(1, step - last_gen)
    [[nodiscard]] std::int64_t est_age(std::int64_t step) const;

    void on_poll(std::int64_t now_us);
    // Returns true if the data is strictly fresher. Counts RX either way.
    bool on_data(std::int64_t gen_step, std::int64_t now_us);

    // (RX + 1) / (TX + 1) over the trailing window
    [[nodiscard]] double reliability(std::int64_t now_us);
    [[nodiscard]] std::int64_t rx_in_window(std::int64_t now_us);
    [[nodiscard]] std::int64_t tx_in_window(std::int64_t now_us);
    [[nodiscard]] std::int64_t stale_count() const { return stale_; }

private:
    void prune(std::int64_t now_us);

    std::int64_t window_us_;
    std::int64_t last_gen_ = 0;
    std::int64_t stale_ = 0;
    std::deque<std::int64_t> polls_;
    std::deque<std::int64_t> receptions_;
};

// ============================================================================
// Policies
// ============================================================================

enum class ErrorMetric { nmse, raw_mse };

[[nodiscard]] std::string_view to_string(ErrorMetric m);
[[nodiscard]] ErrorMetric parse_error_metric(std::string_view name);

struct Aloha {};
struct SlottedAloha {
    std::optional<double> p; // unset: 1/N at run time
};
struct Adra {
    // unset: the optimizer's (delta*, p*) at run time
    std::optional<int> threshold;
    std::optional<double> p;
};
struct RoundRobin {};
struct Mef {
    int frame_len = 20;
    ErrorMetric metric = ErrorMetric::nmse;
};
struct WiFresh {};
struct Pmef {
    ErrorMetric metric = ErrorMetric::nmse;
};

using PolicyVariant = std::variant<Aloha, SlottedAloha, Adra, RoundRobin, Mef, WiFresh, Pmef>;

class SchedulerPolicy {
public:
    SchedulerPolicy() = default;
    // Validates parameters; throws ConfigError.
    SchedulerPolicy(PolicyVariant v); // NOLINT(google-explicit-constructor)

    template <class T>
        requires std::is_constructible_v<PolicyVariant, T> && (!std::is_same_v<std::decay_t<T>, PolicyVariant>)
                 && (!std::is_same_v<std::decay_t<T>, SchedulerPolicy>)
    SchedulerPolicy(T alternative) // NOLINT(google-explicit-constructor)
        : SchedulerPolicy(PolicyVariant(std::move(alternative))) {}

    [[nodiscard]] const PolicyVariant& variant() const { return v_; }
    [[nodiscard]] std::string name() const;
    [[nodiscard]] bool is_polling() const;
    [[nodiscard]] bool is_slotted() const;
    [[nodiscard]] bool uses_beacons() const;

    template <class T>
    [[nodiscard]] const T* get() const {
        return std::get_if<T>(&v_);
    }

private:
    PolicyVariant v_ = RoundRobin{};
};

// "aloha", "slotted_aloha", "adra", "round_robin", "mef", "wifresh", "pmef"
// with default parameters; also accepts "sa", "rr".
[[nodiscard]] SchedulerPolicy parse_policy(std::string_view name);

// ============================================================================
// Decision rules. Loop ids are 0-based.
// ============================================================================

// ALOHA: a fresh sample is always sent at once.
[[nodiscard]] inline bool aloha_on_sample(bool queue_nonempty) {
    return queue_nonempty;
}

// Throws ConfigError if p is unresolved.
[[nodiscard]] bool sa_on_slot(const SlottedAloha& policy, Rng& rng);

// Silent while source_age < threshold, otherwise transmit w.p. p. Throws
// ConfigError if the parameters are unresolved.
[[nodiscard]] bool adra_on_slot(const Adra& policy, std::int64_t source_age, Rng& rng);

// The i with (t + N - i) mod N == 0 for 1-based i; returned 0-based.
[[nodiscard]] int rr_next(std::int64_t t, int n_loops);

// error(loop, age) -> estimation error used as the scheduling weight
using ErrorFn = std::function<double(int, std::int64_t)>;

// Greedy frame: per slot take argmax error(i, age_i), then reset the chosen
// loop's age to 1 and age every loop by one. `ages` are the ages each loop
// would have at the end of the first slot if not served.
[[nodiscard]] std::vector<int> mef_build_schedule(std::vector<std::int64_t> ages, const ErrorFn& error,
                                                  int frame_len = 20);

// argmax r_i * age_i over eligible loops; lowest id on ties.
[[nodiscard]] std::optional<int> wifresh_next(const std::vector<double>& reliability,
                                              const std::vector<std::int64_t>& ages,
                                              const std::vector<bool>& eligible);

// argmax r_i * error(i, age_i) over eligible loops; lowest id on ties.
[[nodiscard]] std::optional<int> pmef_next(const std::vector<double>& reliability,
                                           const std::vector<std::int64_t>& ages, const std::vector<bool>& eligible,
                                           const ErrorFn& error);

// Gateway reception of a data packet. Returns the ack for the source.
Packet gw_on_data(GwLoopView& view, const Packet& pkt, std::int64_t now_us);

} // namespace ncs

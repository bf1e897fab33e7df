#pragma once

#include "ncs/control.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace ncs {

// Inclusive range of control steps that contribute to the averages.
struct EvalWindow {
    std::int64_t first = 501;
    std::int64_t last = 2500;

    [[nodiscard]] bool contains(std::int64_t step) const { return step >= first && step <= last; }
    [[nodiscard]] std::int64_t length() const { return last - first + 1; }
};

inline constexpr std::size_t kClassCount = 5;

[[nodiscard]] inline std::size_t class_index(SystemClass c) {
    return static_cast<std::size_t>(c);
}

struct LoopMetrics {
    int loop = 0;
    SystemClass klass = SystemClass::custom;
    double mean_aoi = 0.0;
    double mean_mse = 0.0;
    double mean_nmse = 0.0;
    double lqg_cost = 0.0;
    std::int64_t samples = 0;          // evaluated steps
    std::int64_t generated = 0;        // samples put into the queue over the whole run
    std::int64_t tx_count = 0;         // data transmissions over the whole run
    std::int64_t rx_count = 0;         // data receptions over the whole run
    std::int64_t window_deliveries = 0;
    bool diverged = false;

    [[nodiscard]] double delivery_ratio() const {
        return tx_count == 0 ? 0.0 : static_cast<double>(rx_count) / static_cast<double>(tx_count);
    }
};

struct NetworkMetrics {
    double mean_aoi = 0.0;
    double mean_mse = 0.0;
    double mean_nmse = 0.0;
    double lqg_cost = 0.0;
    // share of in-window deliveries, indexed by class_index()
    std::array<double, kClassCount> class_fraction{};
    bool any_diverged = false;
};

struct FinalMetrics {
    std::vector<LoopMetrics> loops;
    NetworkMetrics network;
};

class MetricsAccumulator {
public:
    MetricsAccumulator(std::vector<SystemClass> classes, EvalWindow window);

    // One control step of one loop; ignored outside the window.
    void record_step(int loop, std::int64_t step, std::int64_t age, double mse, double nmse, double stage_cost);
    void record_generated(int loop);
    void record_tx(int loop);
    void record_rx(int loop, std::int64_t step);
    void mark_diverged(int loop);

    [[nodiscard]] const EvalWindow& window() const { return window_; }
    [[nodiscard]] std::size_t loop_count() const { return loops_.size(); }

    // Throws ConfigError for an empty window. With require_complete every
    // loop must have exactly window().length() samples (InvariantError).
    [[nodiscard]] FinalMetrics finalize(bool require_complete = true) const;

private:
    struct Sums {
        SystemClass klass = SystemClass::custom;
        double aoi = 0.0;
        double mse = 0.0;
        double nmse = 0.0;
        double cost = 0.0;
        std::int64_t count = 0;
        std::int64_t generated = 0;
        std::int64_t tx = 0;
        std::int64_t rx = 0;
        std::int64_t window_rx = 0;
        bool diverged = false;
    };

    Sums& at(int loop);

    EvalWindow window_;
    std::vector<Sums> loops_;
};

} // namespace ncs

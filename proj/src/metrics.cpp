#include "ncs/metrics.hpp"

#include <string>

namespace ncs {

MetricsAccumulator::MetricsAccumulator(std::vector<SystemClass> classes, EvalWindow window) : window_(window) {
    loops_.resize(classes.size());
    for (std::size_t i = 0; i < classes.size(); ++i) {
        loops_[i].klass = classes[i];
    }
}

MetricsAccumulator::Sums& MetricsAccumulator::at(int loop) {
    if (loop < 0 || static_cast<std::size_t>(loop) >= loops_.size()) {
        throw std::out_of_range("metrics: loop " + std::to_string(loop) + " out of range");
    }
    return loops_[static_cast<std::size_t>(loop)];
}

void MetricsAccumulator::record_step(int loop, std::int64_t step, std::int64_t age, double mse, double nmse,
                                     double stage_cost) {
    auto& s = at(loop);
    if (!window_.contains(step)) {
        return;
    }
    s.aoi += static_cast<double>(age);
    s.mse += mse;
    s.nmse += nmse;
    s.cost += stage_cost;
    ++s.count;
}

void MetricsAccumulator::record_generated(int loop) {
    ++at(loop).generated;
}

void MetricsAccumulator::record_tx(int loop) {
    ++at(loop).tx;
}

void MetricsAccumulator::record_rx(int loop, std::int64_t step) {
    auto& s = at(loop);
    ++s.rx;
    if (window_.contains(step)) {
        ++s.window_rx;
    }
}

void MetricsAccumulator::mark_diverged(int loop) {
    at(loop).diverged = true;
}

FinalMetrics MetricsAccumulator::finalize(bool require_complete) const {
    if (window_.length() <= 0) {
        throw ConfigError("metrics: empty evaluation window [" + std::to_string(window_.first) + ", "
                          + std::to_string(window_.last) + "]");
    }
    FinalMetrics out;
    out.loops.reserve(loops_.size());
    std::array<double, kClassCount> deliveries{};
    double total_deliveries = 0.0;

    for (std::size_t i = 0; i < loops_.size(); ++i) {
        const auto& s = loops_[i];
        if (require_complete && s.count != window_.length()) {
            throw InvariantError("metrics: loop " + std::to_string(i) + " has " + std::to_string(s.count)
                                 + " samples, expected " + std::to_string(window_.length()));
        }
        LoopMetrics m;
        m.loop = static_cast<int>(i);
        m.klass = s.klass;
        if (s.count > 0) {
            const double n = static_cast<double>(s.count);
            m.mean_aoi = s.aoi / n;
            m.mean_mse = s.mse / n;
            m.mean_nmse = s.nmse / n;
            m.lqg_cost = s.cost / n;
        }
        m.samples = s.count;
        m.generated = s.generated;
        m.tx_count = s.tx;
        m.rx_count = s.rx;
        m.window_deliveries = s.window_rx;
        m.diverged = s.diverged;
        out.loops.push_back(m);

        deliveries[class_index(s.klass)] += static_cast<double>(s.window_rx);
        total_deliveries += static_cast<double>(s.window_rx);
    }

    auto& net = out.network;
    if (!out.loops.empty()) {
        const double n = static_cast<double>(out.loops.size());
        for (const auto& m : out.loops) {
            net.mean_aoi += m.mean_aoi / n;
            net.mean_mse += m.mean_mse / n;
            net.mean_nmse += m.mean_nmse / n;
            net.lqg_cost += m.lqg_cost / n;
            net.any_diverged = net.any_diverged || m.diverged;
        }
    }
    if (total_deliveries > 0.0) {
        for (std::size_t c = 0; c < kClassCount; ++c) {
            net.class_fraction[c] = deliveries[c] / total_deliveries;
        }
    }
    return out;
}

} // namespace ncs

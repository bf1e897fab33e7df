#pragma once

#include "ncs/control.hpp"

#include <cstdint>
#include <vector>

namespace ncs {

// ============================================================================
// Estimation error as a function of age
// ============================================================================

// sum_{d=1..age} tr((A')^{d-1} A^{d-1} Sigma); 0 for age 0. Overflow yields
// +inf and bumps mse_overflow_count().
[[nodiscard]] double mse_of_age(const LtiSystem& sys, std::int64_t age);

// mse_of_age(age) / mse_of_age(1). Throws ConfigError when tr(Sigma) == 0.
[[nodiscard]] double nmse_of_age(const LtiSystem& sys, std::int64_t age);

// sum_{d=1..age} A^{d-1} Sigma (A^{d-1})'
[[nodiscard]] Matrix error_covariance(const LtiSystem& sys, std::int64_t age);

[[nodiscard]] std::uint64_t mse_overflow_count();

// Lazily extended table of mse_of_age for one system; the simulation and the
// error-aware schedulers look ages up here on every step.
class MseTable {
public:
    MseTable() = default;
    explicit MseTable(const LtiSystem& sys);

    [[nodiscard]] double mse(std::int64_t age);
    [[nodiscard]] double nmse(std::int64_t age) { return mse(age) / normalizer_; }
    [[nodiscard]] double normalizer() const { return normalizer_; }

private:
    Matrix A_;
    Matrix power_; // A^{k} where k = values_.size() - 1
    Matrix noise_cov_;
    std::vector<double> values_{0.0};
    double normalizer_ = 1.0;
};

// ============================================================================
// Closed-form mean AoI
// ============================================================================

// Slotted ALOHA, 1 / (p (1-p)^{N-1}). Requires N >= 3 and 0 < p < 1.
[[nodiscard]] double sa_mean_aoi(int n_loops, double p);

// Round robin, (N + 1) / 2.
[[nodiscard]] double rr_mean_aoi(int n_loops);

struct AdraParams {
    int threshold = 0;  // delta
    double p = 0.5;     // channel access probability
    double q = 1.0;     // per-attempt success probability
};

// Success probability of an eligible source's attempt. A renewal cycle holds
// max(delta-1, 0) ineligible slots followed by geometric(pq) eligible ones;
// q is read off the stationary throughput of a birth-death chain over the
// number of eligible sources, which keeps sources that collided eligible
// together (the independent-peers fixed point below does not).
[[nodiscard]] double solve_adra_q(int n_loops, int threshold, double p);

// Independent-peers fixed point q = (1 - p a(q))^{N-1}, a(q) the stationary
// eligible share. Accurate for small p only.
[[nodiscard]] double solve_adra_q_mean_field(int n_loops, int threshold, double p);

// delta/2 + 1/(pq) - delta / (2 (delta p q + 1 - p q))
[[nodiscard]] double adra_mean_aoi(int threshold, double p, double q);
[[nodiscard]] double adra_mean_aoi(int n_loops, int threshold, double p);

// Minimizes adra_mean_aoi over integer delta in [0, max_threshold] with a
// golden-section search over p for every delta.
[[nodiscard]] AdraParams optimize_adra(int n_loops, int max_threshold = 60);

// ============================================================================
// Age bookkeeping
// ============================================================================

// Destination-side AoI of one source on the sampling grid.
class AoiTracker {
public:
    // Age at `step` given that nothing fresher than gen_step has arrived.
    [[nodiscard]] std::int64_t age_at(std::int64_t step) const;
    [[nodiscard]] std::int64_t last_gen_step() const { return last_gen_; }

    // Returns true if gen_step is strictly fresher.
    bool receive(std::int64_t gen_step);

private:
    std::int64_t last_gen_ = 0;
};

} // namespace ncs

#include "ncs/aoi.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace ncs {

namespace {

std::atomic<std::uint64_t> g_mse_overflows{0};

constexpr double kInf = std::numeric_limits<double>::infinity();

// (1-p)^k, through logs for large k
double survival(double p, int k) {
    if (k > 50) {
        return std::exp(static_cast<double>(k) * std::log1p(-p));
    }
    return std::pow(1.0 - p, k);
}

} // namespace

std::uint64_t mse_overflow_count() {
    return g_mse_overflows.load(std::memory_order_relaxed);
}

double mse_of_age(const LtiSystem& sys, std::int64_t age) {
    if (age < 0) {
        throw std::domain_error("mse_of_age: negative age");
    }
    Matrix power = Matrix::Identity(sys.state_dim(), sys.state_dim());
    double total = 0.0;
    for (std::int64_t d = 1; d <= age; ++d) {
        total += (power.transpose() * power * sys.noise_cov).trace();
        if (!std::isfinite(total)) {
            g_mse_overflows.fetch_add(1, std::memory_order_relaxed);
            return kInf;
        }
        power = sys.A * power;
    }
    return total;
}

double nmse_of_age(const LtiSystem& sys, std::int64_t age) {
    const double norm = sys.noise_cov.trace();
    if (!(norm > 0.0)) {
        throw ConfigError(sys.name + ": nMSE undefined for zero noise covariance");
    }
    return mse_of_age(sys, age) / norm;
}

Matrix error_covariance(const LtiSystem& sys, std::int64_t age) {
    if (age < 1) {
        throw std::domain_error("error_covariance: age must be >= 1");
    }
    const auto n = sys.state_dim();
    Matrix power = Matrix::Identity(n, n);
    Matrix cov = Matrix::Zero(n, n);
    for (std::int64_t d = 1; d <= age; ++d) {
        cov += power * sys.noise_cov * power.transpose();
        power = sys.A * power;
    }
    if (!cov.allFinite()) {
        g_mse_overflows.fetch_add(1, std::memory_order_relaxed);
    }
    return 0.5 * (cov + cov.transpose());
}

MseTable::MseTable(const LtiSystem& sys)
    : A_(sys.A),
      power_(Matrix::Identity(sys.state_dim(), sys.state_dim())),
      noise_cov_(sys.noise_cov),
      normalizer_(sys.noise_cov.trace()) {
    if (!(normalizer_ > 0.0)) {
        throw ConfigError(sys.name + ": nMSE undefined for zero noise covariance");
    }
}

double MseTable::mse(std::int64_t age) {
    if (age < 0) {
        throw std::domain_error("MseTable: negative age");
    }
    const auto wanted = static_cast<std::size_t>(age);
    while (values_.size() <= wanted) {
        const double prev = values_.back();
        if (!std::isfinite(prev)) {
            values_.push_back(kInf);
            continue;
        }
        double next = prev + (power_.transpose() * power_ * noise_cov_).trace();
        if (!std::isfinite(next)) {
            g_mse_overflows.fetch_add(1, std::memory_order_relaxed);
            next = kInf;
        }
        values_.push_back(next);
        power_ = A_ * power_;
    }
    return values_[wanted];
}

// ============================================================================
// Closed forms
// ============================================================================

double sa_mean_aoi(int n_loops, double p) {
    if (n_loops < 3) {
        throw std::domain_error("sa_mean_aoi: requires N >= 3");
    }
    if (!(p > 0.0 && p < 1.0)) {
        throw std::domain_error("sa_mean_aoi: p must lie in (0, 1)");
    }
    return 1.0 / (p * survival(p, n_loops - 1));
}

double rr_mean_aoi(int n_loops) {
    if (n_loops < 1) {
        throw std::domain_error("rr_mean_aoi: requires N >= 1");
    }
    return (n_loops + 1) / 2.0;
}

double solve_adra_q_mean_field(int n_loops, int threshold, double p) {
    if (n_loops < 1) {
        throw std::domain_error("solve_adra_q: requires N >= 1");
    }
    if (!(p > 0.0 && p < 1.0) || threshold < 0) {
        throw std::domain_error("solve_adra_q: invalid (delta, p)");
    }
    if (n_loops == 1) {
        return 1.0;
    }
    const double idle = std::max(threshold - 1, 0);
    auto image = [&](double q) {
        // eligible share: (1/(pq)) / (idle + 1/(pq))
        const double eligible = 1.0 / (1.0 + idle * p * q);
        return survival(p * eligible, n_loops - 1);
    };
    double q = 1.0;
    constexpr double damping = 0.5;
    for (int it = 0; it < 100000; ++it) {
        const double next = (1.0 - damping) * q + damping * image(q);
        if (std::abs(next - q) < 1e-10) {
            return next;
        }
        q = next;
    }
    throw OptimizationError("solve_adra_q: no convergence for N=" + std::to_string(n_loops)
                            + " delta=" + std::to_string(threshold) + " p=" + std::to_string(p));
}

double solve_adra_q(int n_loops, int threshold, double p) {
    if (n_loops < 1) {
        throw std::domain_error("solve_adra_q: requires N >= 1");
    }
    if (!(p > 0.0 && p < 1.0) || threshold < 0) {
        throw std::domain_error("solve_adra_q: invalid (delta, p)");
    }
    if (n_loops == 1) {
        return 1.0;
    }
    if (threshold <= 1) {
        // nobody is ever ineligible
        return survival(p, n_loops - 1);
    }

    // Markov chain on K = number of eligible sources. Per slot the pool
    // succeeds w.p. K p (1-p)^{K-1}, removing one source; each ineligible
    // source rejoins w.p. 1/(delta-1), matching the mean ineligible sojourn.
    const int n = n_loops;
    const double rejoin = 1.0 / (threshold - 1);
    Matrix T = Matrix::Zero(n + 1, n + 1);
    for (int k = 0; k <= n; ++k) {
        const double success = k > 0 ? k * p * std::pow(1.0 - p, k - 1) : 0.0;
        const int idle = n - k;
        for (int j = 0; j <= idle; ++j) {
            const double ret = std::exp(std::lgamma(idle + 1.0) - std::lgamma(j + 1.0) - std::lgamma(idle - j + 1.0))
                               * std::pow(rejoin, j) * std::pow(1.0 - rejoin, idle - j);
            T(k, k + j) += (1.0 - success) * ret;
            if (k + j >= 1) {
                T(k, k + j - 1) += success * ret;
            }
        }
    }
    // stationary distribution: (T' - I) pi = 0, sum(pi) = 1
    Matrix system = T.transpose() - Matrix::Identity(n + 1, n + 1);
    system.row(n).setOnes();
    Vector rhs = Vector::Zero(n + 1);
    rhs(n) = 1.0;
    const Vector pi = system.partialPivLu().solve(rhs);
    if (!pi.allFinite()) {
        throw OptimizationError("solve_adra_q: stationary distribution not found for N=" + std::to_string(n_loops)
                                + " delta=" + std::to_string(threshold) + " p=" + std::to_string(p));
    }
    double throughput = 0.0;
    for (int k = 1; k <= n; ++k) {
        throughput += std::max(pi(k), 0.0) * k * p * std::pow(1.0 - p, k - 1);
    }
    if (!(throughput > 0.0)) {
        throw OptimizationError("solve_adra_q: zero throughput for N=" + std::to_string(n_loops));
    }
    // per-source cycle = (delta - 1) ineligible slots + 1/(pq) eligible slots
    const double cycle = n / throughput;
    const double eligible_slots = cycle - (threshold - 1);
    if (!(eligible_slots > 0.0)) {
        throw OptimizationError("solve_adra_q: inconsistent renewal cycle");
    }
    return std::min(1.0, 1.0 / (p * eligible_slots));
}

double adra_mean_aoi(int threshold, double p, double q) {
    const double d = threshold;
    const double pq = p * q;
    return d / 2.0 + 1.0 / pq - d / (2.0 * (d * pq + 1.0 - pq));
}

double adra_mean_aoi(int n_loops, int threshold, double p) {
    return adra_mean_aoi(threshold, p, solve_adra_q(n_loops, threshold, p));
}

AdraParams optimize_adra(int n_loops, int max_threshold) {
    if (n_loops < 3) {
        throw std::domain_error("optimize_adra: requires N >= 3");
    }
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    AdraParams best{0, 1.0 / n_loops, 0.0};
    double best_value = adra_mean_aoi(n_loops, 0, best.p);
    best.q = solve_adra_q(n_loops, 0, best.p);

    for (int delta = 0; delta <= max_threshold; ++delta) {
        auto f = [&](double p) { return adra_mean_aoi(n_loops, delta, p); };
        double lo = 1e-4;
        double hi = 1.0 - 1e-4;
        double x1 = hi - inv_phi * (hi - lo);
        double x2 = lo + inv_phi * (hi - lo);
        double f1 = f(x1);
        double f2 = f(x2);
        while (hi - lo > 1e-7) {
            if (f1 <= f2) {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - inv_phi * (hi - lo);
                f1 = f(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + inv_phi * (hi - lo);
                f2 = f(x2);
            }
        }
        const double p = 0.5 * (lo + hi);
        const double value = f(p);
        if (value < best_value) {
            best_value = value;
            best = AdraParams{delta, p, solve_adra_q(n_loops, delta, p)};
        }
    }
    return best;
}

// ============================================================================
// AoiTracker
// ============================================================================

std::int64_t AoiTracker::age_at(std::int64_t step) const {
    return std::max<std::int64_t>(1, step - last_gen_);
}

bool AoiTracker::receive(std::int64_t gen_step) {
    if (gen_step <= last_gen_) {
        return false;
    }
    last_gen_ = gen_step;
    return true;
}

} // namespace ncs

#pragma once

#include "ncs/linalg.hpp"

#include <cstdint>
#include <deque>
#include <string>
#include <string_view>

namespace ncs {

// ============================================================================
// Plant / controller description
// ============================================================================

enum class SystemClass { easy, mid, hard, pendulum, custom };

[[nodiscard]] std::string_view to_string(SystemClass c);
// Throws ConfigError for unknown names.
[[nodiscard]] SystemClass parse_system_class(std::string_view name);

// Discrete-time LTI plant x[t+1] = A x[t] + B u[t] + w[t], w ~ N(0, noise_cov),
// regulated by u = -gain * xhat. `gain` is empty until synthesize() runs.
struct LtiSystem {
    std::string name;
    SystemClass klass = SystemClass::custom;
    Matrix A;
    Matrix B;
    Matrix noise_cov;
    Matrix Q;
    Matrix R;
    Matrix gain;
    double sampling_period = 0.010; // seconds

    [[nodiscard]] Eigen::Index state_dim() const { return A.rows(); }
    [[nodiscard]] Eigen::Index input_dim() const { return B.cols(); }
    [[nodiscard]] bool has_gain() const { return gain.size() != 0; }

    // Shapes, symmetry, diagonal noise covariance, R positive definite.
    void validate() const;
};

struct DareSolution {
    Matrix P;
    Matrix gain;
    double residual = 0.0;
    long iterations = 0;
};

// Fixed-point iteration of the Riccati recursion starting from P = Q, stopping
// when the max-abs elementwise change drops below `tol`. Throws SynthesisError
// if the iteration does not settle or the closed loop is not Schur stable.
[[nodiscard]] DareSolution solve_dare(const LtiSystem& sys, double tol = 1e-10, long max_iter = 1'000'000);

// max-abs elementwise residual of P against the Riccati right-hand side
[[nodiscard]] double riccati_residual(const LtiSystem& sys, const Matrix& P);

// (R + B'PB)^-1 B'PA
[[nodiscard]] Matrix riccati_gain(const LtiSystem& sys, const Matrix& P);

// Fills sys.gain from solve_dare().
void synthesize(LtiSystem& sys);

[[nodiscard]] Vector step_plant(const LtiSystem& sys, const Vector& x, const Vector& u, const Vector& w);

// u = -L xhat
[[nodiscard]] Vector control_input(const LtiSystem& sys, const Vector& xhat);

// x'Qx + u'Ru
[[nodiscard]] double lqg_stage_cost(const LtiSystem& sys, const Vector& x, const Vector& u);

// ============================================================================
// Remote estimation
// ============================================================================

// Inputs applied by one controller, indexed by the step they were applied in.
// Grows on demand; entries older than the freshest received sample are dropped
// by the owner via discard_before().
class InputHistory {
public:
    static constexpr std::size_t kMaxLength = 1u << 22;

    void push(std::int64_t step, Vector u);
    void discard_before(std::int64_t step);

    // u[step]; throws InvariantError when the entry is not retained.
    [[nodiscard]] const Vector& at(std::int64_t step) const;
    [[nodiscard]] bool covers(std::int64_t first, std::int64_t last) const;
    [[nodiscard]] std::size_t size() const { return inputs_.size(); }
    [[nodiscard]] std::int64_t first_step() const { return first_; }

private:
    std::int64_t first_ = 0;
    std::deque<Vector> inputs_;
};

// xhat[t] = A^age x[nu] + sum_{q=1..age} A^{q-1} B u[t-q], with t = nu + age.
[[nodiscard]] Vector estimate_state(const LtiSystem& sys,
                                    const Vector& freshest,
                                    std::int64_t freshest_step,
                                    const InputHistory& history,
                                    std::int64_t age);

// Runtime state of one feedback loop. The controller starts out knowing x[0]
// (nu = 0) and every step t >= 1 runs estimate -> control -> plant update.
class LoopState {
public:
    LoopState() = default;
    LoopState(const LtiSystem& sys, Vector x0);

    struct ControlStep {
        std::int64_t step;
        std::int64_t age;
        Vector estimate;
        Vector input;
        double stage_cost;
    };

    // Offer a received sample. Returns true if it was strictly fresher than
    // the current one. Samples from the current or future steps violate
    // causality and throw InvariantError.
    bool deliver(const Vector& state, std::int64_t gen_step);

    // Estimate and control for the current step.
    ControlStep control(const LtiSystem& sys);

    // x[t+1] = A x[t] + B u[t] + w; advances the step counter.
    void advance(const LtiSystem& sys, const Vector& noise);

    [[nodiscard]] std::int64_t step() const { return step_; }
    [[nodiscard]] std::int64_t freshest_step() const { return freshest_step_; }
    [[nodiscard]] std::int64_t age() const { return step_ - freshest_step_; }
    [[nodiscard]] const Vector& true_state() const { return x_; }
    [[nodiscard]] const Vector& estimate() const { return xhat_; }
    [[nodiscard]] const Vector& last_input() const { return u_; }
    [[nodiscard]] const InputHistory& history() const { return history_; }

private:
    Vector x_;
    Vector xhat_;
    Vector u_;
    Vector freshest_;
    std::int64_t freshest_step_ = 0;
    std::int64_t step_ = 0;
    InputHistory history_;
};

// ============================================================================
// Discretization and presets
// ============================================================================

struct DiscreteModel {
    Matrix A;
    Matrix B;
};

// Zero-order hold: exp([[Ac Bc]; [0 0]] * Ts) = [[A B]; [0 I]].
[[nodiscard]] DiscreteModel discretize_zoh(const Matrix& Ac, const Matrix& Bc, double Ts);

// Cart-pole around the upright equilibrium, state [xi, xi_dot, phi, phi_dot].
struct PendulumParams {
    double cart_mass = 0.5;     // kg
    double pend_mass = 0.2;     // kg
    double friction = 0.1;      // N/m/s
    double length = 0.3;        // m, to the centre of mass
    double inertia = 0.006;     // kg m^2
    double gravity = 9.81;      // m/s^2

    void validate() const;
};

struct ContinuousModel {
    Matrix A;
    Matrix B;
};

// Linearized equations of motion
//   (I + m l^2) phi'' - m g l phi = m l xi''
//   (M + m) xi'' + b xi' - m l phi'' = u
// solved for the two accelerations.
[[nodiscard]] ContinuousModel pendulum_continuous(const PendulumParams& p);

// Tabulated 100 Hz pendulum matrices used by the pendulum preset.
[[nodiscard]] Matrix pendulum_reference_A();
[[nodiscard]] Matrix pendulum_reference_B();
[[nodiscard]] Matrix pendulum_noise_cov();

// easy/mid/hard: scalar A in {1.0, 1.1, 1.2}, B = Sigma = 1, Q = 100, R = 1.
// pendulum: tabulated matrices, Q = diag(5000, 0, 100, 0), R = 1.
// All at Ts = 10 ms with the gain synthesized.
[[nodiscard]] LtiSystem make_preset(SystemClass c);
[[nodiscard]] LtiSystem make_preset(std::string_view name);

} // namespace ncs

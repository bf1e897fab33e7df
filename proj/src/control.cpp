#include "ncs/control.hpp"

#include <cmath>
#include <string>

namespace ncs {

std::string_view to_string(SystemClass c) {
    switch (c) {
    case SystemClass::easy: return "easy";
    case SystemClass::mid: return "mid";
    case SystemClass::hard: return "hard";
    case SystemClass::pendulum: return "pendulum";
    case SystemClass::custom: return "custom";
    }
    return "custom";
}

SystemClass parse_system_class(std::string_view name) {
    if (name == "easy") return SystemClass::easy;
    if (name == "mid") return SystemClass::mid;
    if (name == "hard") return SystemClass::hard;
    if (name == "pendulum" || name == "ip") return SystemClass::pendulum;
    throw ConfigError("unknown system class '" + std::string(name) + "'");
}

void LtiSystem::validate() const {
    const auto n = A.rows();
    const auto m = B.cols();
    if (n <= 0 || m <= 0) {
        throw ConfigError(name + ": state and input dimensions must be positive");
    }
    require_shape(A, n, n, name + ".A");
    require_shape(B, n, m, name + ".B");
    require_shape(noise_cov, n, n, name + ".noise_cov");
    require_shape(Q, n, n, name + ".Q");
    require_shape(R, m, m, name + ".R");
    if (has_gain()) {
        require_shape(gain, m, n, name + ".gain");
    }
    if (!(sampling_period > 0.0)) {
        throw ConfigError(name + ": sampling period must be positive");
    }
    if (!is_symmetric(Q) || !is_symmetric(R)) {
        throw ConfigError(name + ": Q and R must be symmetric");
    }
    const Matrix off_diag = noise_cov - Matrix(noise_cov.diagonal().asDiagonal());
    if (max_abs(off_diag) != 0.0 || (noise_cov.diagonal().array() < 0.0).any()) {
        throw ConfigError(name + ": noise covariance must be diagonal with non-negative entries");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> q_eig(Q);
    if (q_eig.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, max_abs(Q))) {
        throw ConfigError(name + ": Q must be positive semi-definite");
    }
    Eigen::LLT<Matrix> r_llt(R);
    if (r_llt.info() != Eigen::Success) {
        throw ConfigError(name + ": R must be positive definite");
    }
}

// ============================================================================
// Riccati
// ============================================================================

namespace {

Matrix riccati_rhs(const LtiSystem& sys, const Matrix& P) {
    const Matrix& A = sys.A;
    const Matrix& B = sys.B;
    const Matrix S = sys.R + B.transpose() * P * B;
    const Matrix PB = P * B;
    const Matrix K = S.partialPivLu().solve(PB.transpose());
    Matrix next = sys.Q + A.transpose() * (P - PB * K) * A;
    return 0.5 * (next + next.transpose());
}

} // namespace

Matrix riccati_gain(const LtiSystem& sys, const Matrix& P) {
    const Matrix S = sys.R + sys.B.transpose() * P * sys.B;
    return S.partialPivLu().solve(sys.B.transpose() * P * sys.A);
}

double riccati_residual(const LtiSystem& sys, const Matrix& P) {
    return max_abs(riccati_rhs(sys, P) - P);
}

DareSolution solve_dare(const LtiSystem& sys, double tol, long max_iter) {
    sys.validate();
    DareSolution sol;
    Matrix P = sys.Q;
    long it = 0;
    double change = 0.0;
    for (; it < max_iter; ++it) {
        Matrix next = riccati_rhs(sys, P);
        if (!next.allFinite()) {
            throw SynthesisError(sys.name + ": Riccati iteration diverged");
        }
        change = max_abs(next - P);
        P = std::move(next);
        if (change < tol) {
            ++it;
            break;
        }
    }
    if (!(change < tol)) {
        throw SynthesisError(sys.name + ": Riccati iteration did not converge within "
                             + std::to_string(max_iter) + " iterations");
    }
    sol.P = std::move(P);
    sol.gain = riccati_gain(sys, sol.P);
    sol.residual = riccati_residual(sys, sol.P);
    sol.iterations = it;

    const double rho = spectral_radius(sys.A - sys.B * sol.gain);
    if (!(rho < 1.0)) {
        throw SynthesisError(sys.name + ": closed loop not stable (spectral radius "
                             + std::to_string(rho) + ")");
    }
    return sol;
}

void synthesize(LtiSystem& sys) {
    sys.gain = solve_dare(sys).gain;
}

// ============================================================================
// Plant, control law, cost
// ============================================================================

Vector step_plant(const LtiSystem& sys, const Vector& x, const Vector& u, const Vector& w) {
    if (x.size() != sys.state_dim() || w.size() != sys.state_dim() || u.size() != sys.input_dim()) {
        throw ConfigError(sys.name + ": dimension mismatch in plant step");
    }
    return sys.A * x + sys.B * u + w;
}

Vector control_input(const LtiSystem& sys, const Vector& xhat) {
    if (!sys.has_gain()) {
        throw ConfigError(sys.name + ": feedback gain not synthesized");
    }
    return -sys.gain * xhat;
}

double lqg_stage_cost(const LtiSystem& sys, const Vector& x, const Vector& u) {
    if (x.size() != sys.state_dim() || u.size() != sys.input_dim()) {
        throw ConfigError(sys.name + ": dimension mismatch in stage cost");
    }
    return x.dot(sys.Q * x) + u.dot(sys.R * u);
}

// ============================================================================
// Remote estimation
// ============================================================================

void InputHistory::push(std::int64_t step, Vector u) {
    if (inputs_.empty()) {
        first_ = step;
    } else if (step != first_ + static_cast<std::int64_t>(inputs_.size())) {
        throw InvariantError("input history: non-contiguous push at step " + std::to_string(step));
    }
    if (inputs_.size() >= kMaxLength) {
        throw InvariantError("input history exceeded " + std::to_string(kMaxLength)
                             + " entries; AoI is unbounded");
    }
    inputs_.push_back(std::move(u));
}

void InputHistory::discard_before(std::int64_t step) {
    while (!inputs_.empty() && first_ < step) {
        inputs_.pop_front();
        ++first_;
    }
}

const Vector& InputHistory::at(std::int64_t step) const {
    if (step < first_ || step >= first_ + static_cast<std::int64_t>(inputs_.size())) {
        throw InvariantError("input history: u[" + std::to_string(step) + "] not retained");
    }
    return inputs_[static_cast<std::size_t>(step - first_)];
}

bool InputHistory::covers(std::int64_t first, std::int64_t last) const {
    return first >= first_ && last < first_ + static_cast<std::int64_t>(inputs_.size());
}

Vector estimate_state(const LtiSystem& sys,
                      const Vector& freshest,
                      std::int64_t freshest_step,
                      const InputHistory& history,
                      std::int64_t age) {
    if (age < 1) {
        throw InvariantError(sys.name + ": estimation requires age >= 1");
    }
    const std::int64_t t = freshest_step + age;
    if (!history.covers(t - age, t - 1)) {
        throw InvariantError(sys.name + ": input history does not cover u[" + std::to_string(t - age) + ".."
                             + std::to_string(t - 1) + "]");
    }
    // A^{q-1} is carried along q = 1..age
    Matrix power = Matrix::Identity(sys.state_dim(), sys.state_dim());
    Vector sum = Vector::Zero(sys.state_dim());
    for (std::int64_t q = 1; q <= age; ++q) {
        sum.noalias() += power * (sys.B * history.at(t - q));
        power = sys.A * power;
    }
    return power * freshest + sum;
}

LoopState::LoopState(const LtiSystem& sys, Vector x0)
    : x_(std::move(x0)),
      xhat_(x_),
      u_(Vector::Zero(sys.input_dim())),
      freshest_(x_) {
    if (x_.size() != sys.state_dim()) {
        throw ConfigError(sys.name + ": initial state has wrong dimension");
    }
    history_.push(0, u_);
}

bool LoopState::deliver(const Vector& state, std::int64_t gen_step) {
    if (gen_step > step_) {
        throw InvariantError("causality: sample from step " + std::to_string(gen_step) + " delivered at step "
                             + std::to_string(step_));
    }
    if (gen_step <= freshest_step_) {
        return false;
    }
    freshest_ = state;
    freshest_step_ = gen_step;
    history_.discard_before(gen_step);
    return true;
}

LoopState::ControlStep LoopState::control(const LtiSystem& sys) {
    if (freshest_step_ >= step_) {
        throw InvariantError("causality: estimator at step " + std::to_string(step_) + " holds sample from step "
                             + std::to_string(freshest_step_));
    }
    const std::int64_t age = step_ - freshest_step_;
    xhat_ = estimate_state(sys, freshest_, freshest_step_, history_, age);
    u_ = control_input(sys, xhat_);
    history_.push(step_, u_);
    return ControlStep{step_, age, xhat_, u_, lqg_stage_cost(sys, x_, u_)};
}

void LoopState::advance(const LtiSystem& sys, const Vector& noise) {
    x_ = step_plant(sys, x_, u_, noise);
    ++step_;
}

// ============================================================================
// Discretization and presets
// ============================================================================

DiscreteModel discretize_zoh(const Matrix& Ac, const Matrix& Bc, double Ts) {
    if (!(Ts > 0.0)) {
        throw ConfigError("discretize_zoh: sampling period must be positive");
    }
    const auto n = Ac.rows();
    require_shape(Ac, n, n, "discretize_zoh.Ac");
    const auto m = Bc.cols();
    require_shape(Bc, n, m, "discretize_zoh.Bc");

    Matrix aug = Matrix::Zero(n + m, n + m);
    aug.topLeftCorner(n, n) = Ac * Ts;
    aug.topRightCorner(n, m) = Bc * Ts;
    const Matrix e = expm(aug);
    if (!e.allFinite()) {
        throw NumericError("discretize_zoh: non-finite matrix exponential");
    }
    return DiscreteModel{e.topLeftCorner(n, n), e.topRightCorner(n, m)};
}

void PendulumParams::validate() const {
    for (double v : {cart_mass, pend_mass, friction, length, inertia, gravity}) {
        if (!(v > 0.0)) {
            throw ConfigError("pendulum parameters must be strictly positive");
        }
    }
}

ContinuousModel pendulum_continuous(const PendulumParams& p) {
    p.validate();
    const double M = p.cart_mass;
    const double m = p.pend_mass;
    const double ml = m * p.length;
    const double J = p.inertia + m * p.length * p.length;
    // mass matrix [[M+m, -ml], [-ml, J]] acting on [xi'', phi'']
    const double det = (M + m) * J - ml * ml;

    Matrix A = Matrix::Zero(4, 4);
    Matrix B = Matrix::Zero(4, 1);
    A(0, 1) = 1.0;
    A(1, 1) = -J * p.friction / det;
    A(1, 2) = ml * ml * p.gravity / det;
    A(2, 3) = 1.0;
    A(3, 1) = -ml * p.friction / det;
    A(3, 2) = ml * p.gravity * (M + m) / det;
    B(1, 0) = J / det;
    B(3, 0) = ml / det;
    return ContinuousModel{A, B};
}

Matrix pendulum_reference_A() {
    Matrix A(4, 4);
    A << 1.0, 0.01, 0.0001, 0.0,
         0.0, 0.9983, 0.0191, 0.0001,
         0.0, 0.0, 1.0017, 0.01,
         0.0, -0.0049, 0.3351, 1.0017;
    return A;
}

Matrix pendulum_reference_B() {
    Matrix B(4, 1);
    B << 0.0001, 0.0182, 0.0002, 0.0454;
    return B;
}

Matrix pendulum_noise_cov() {
    Vector d(4);
    d << 6.4e-7, 4.9e-7, 2.742e-5, 4.874e-5;
    return d.asDiagonal();
}

LtiSystem make_preset(SystemClass c) {
    LtiSystem sys;
    sys.klass = c;
    sys.name = std::string(to_string(c));
    sys.sampling_period = 0.010;
    switch (c) {
    case SystemClass::easy:
    case SystemClass::mid:
    case SystemClass::hard: {
        const double a = c == SystemClass::easy ? 1.0 : (c == SystemClass::mid ? 1.1 : 1.2);
        sys.A = Matrix::Constant(1, 1, a);
        sys.B = Matrix::Constant(1, 1, 1.0);
        sys.noise_cov = Matrix::Constant(1, 1, 1.0);
        sys.Q = Matrix::Constant(1, 1, 100.0);
        sys.R = Matrix::Constant(1, 1, 1.0);
        break;
    }
    case SystemClass::pendulum: {
        sys.A = pendulum_reference_A();
        sys.B = pendulum_reference_B();
        sys.noise_cov = pendulum_noise_cov();
        Vector q(4);
        q << 5000.0, 0.0, 100.0, 0.0;
        sys.Q = q.asDiagonal();
        sys.R = Matrix::Constant(1, 1, 1.0);
        break;
    }
    case SystemClass::custom:
        throw ConfigError("no preset for class 'custom'");
    }
    synthesize(sys);
    return sys;
}

LtiSystem make_preset(std::string_view name) {
    return make_preset(parse_system_class(name));
}

} // namespace ncs

#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace ncs {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ============================================================================
// Error types
// ============================================================================

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SynthesisError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct OptimizationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Broken simulation invariant; the run is aborted.
struct InvariantError : std::logic_error {
    using std::logic_error::logic_error;
};

// ============================================================================
// Small dense helpers
// ============================================================================

// Matrix exponential by scaling and squaring with a truncated Taylor series.
// Terms are summed until the next addend falls below 1e-12 (relative to the
// running sum's norm).
[[nodiscard]] Matrix expm(const Matrix& a);

// max |lambda_i| over the eigenvalues of a square matrix
[[nodiscard]] double spectral_radius(const Matrix& a);

[[nodiscard]] inline double max_abs(const Matrix& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

[[nodiscard]] inline bool is_symmetric(const Matrix& m, double tol = 1e-12) {
    return m.rows() == m.cols() && max_abs(m - m.transpose()) <= tol * std::max(1.0, max_abs(m));
}

[[nodiscard]] inline bool all_finite(const Matrix& m) {
    return m.allFinite();
}

inline void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
    if (m.rows() != rows || m.cols() != cols) {
        throw ConfigError(what + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) + ", got "
                          + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
}

} // namespace ncs

#include "ncs/linalg.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace ncs {

Matrix expm(const Matrix& a) {
    if (a.rows() != a.cols()) {
        throw ConfigError("expm: matrix must be square");
    }
    if (!a.allFinite()) {
        throw NumericError("expm: non-finite input");
    }
    const auto n = a.rows();
    if (n == 0) {
        return a;
    }

    // Scale so that ||A / 2^s||_inf <= 0.5, which keeps the series short.
    const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
    int squarings = 0;
    if (norm > 0.5) {
        squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
    }
    const Matrix scaled = a / std::ldexp(1.0, squarings);

    Matrix result = Matrix::Identity(n, n);
    Matrix term = Matrix::Identity(n, n);
    for (int k = 1; k < 64; ++k) {
        term = term * scaled / static_cast<double>(k);
        result += term;
        if (max_abs(term) <= 1e-12 * std::max(1.0, max_abs(result))) {
            break;
        }
    }
    for (int i = 0; i < squarings; ++i) {
        result = result * result;
    }
    if (!result.allFinite()) {
        throw NumericError("expm: non-finite result");
    }
    return result;
}

double spectral_radius(const Matrix& a) {
    if (a.rows() != a.cols()) {
        throw ConfigError("spectral_radius: matrix must be square");
    }
    if (a.size() == 0) {
        return 0.0;
    }
    Eigen::EigenSolver<Matrix> solver(a, false);
    if (solver.info() != Eigen::Success) {
        throw NumericError("spectral_radius: eigenvalue computation failed");
    }
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

} // namespace ncs

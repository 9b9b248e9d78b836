#pragma once

// Shared numerical kernels: seeded RNG, RK4, ridge / minimum-norm least
// squares and finite-difference linearization.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace blskoop {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class FactorizationError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Raised when a simulated or predicted state stops being finite.
/// `time` is in seconds for integrators; `step` is the step index for rollouts.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, double time, long step)
        : Error(what), time_(time), step_(step) {}
    double time() const { return time_; }
    long step() const { return step_; }

private:
    double time_;
    long step_;
};

inline void require_dims(bool ok, const std::string& what) {
    if (!ok) {
        throw DimensionError(what);
    }
}

// ---------------------------------------------------------------------------
// Randomness. Everything random in the library draws from Rng so that runs are
// reproducible from a single 64-bit seed. std::mt19937_64 is fully specified
// by the standard; the real-valued mapping below is done by hand because
// std::uniform_real_distribution is implementation-defined.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    /// Independent stream for sub-task `index` (trajectory, run, ...).
    static Rng stream(std::uint64_t seed, std::uint64_t index, std::uint64_t salt = 0) {
        return Rng(splitmix64(seed ^ splitmix64(index + 0x632BE59BD9B4E019ULL * (salt + 1))));
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    Vector uniform(const Vector& lo, const Vector& hi) {
        Vector v(lo.size());
        for (Eigen::Index i = 0; i < lo.size(); ++i) {
            v(i) = uniform(lo(i), hi(i));
        }
        return v;
    }

private:
    std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// ODE right-hand sides and RK4

/// Continuous-time vector field x' = f(x, u, t).
struct OdeRightHandSide {
    int state_dim = 0;
    int input_dim = 0;
    std::function<Vector(const Vector&, const Vector&, double)> eval;

    Vector operator()(const Vector& x, const Vector& u, double t) const { return eval(x, u, t); }
};

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

/// One classical RK4 step with the input held constant over [t, t + dt].
template <class Field>
Vector rk4_step(const Field& f, const Vector& x, const Vector& u, double t, double dt) {
    if (!(dt > 0.0)) {
        throw Error("rk4_step: dt must be positive");
    }
    const Vector k1 = f(x, u, t);
    const Vector k2 = f(x + 0.5 * dt * k1, u, t + 0.5 * dt);
    const Vector k3 = f(x + 0.5 * dt * k2, u, t + 0.5 * dt);
    const Vector k4 = f(x + dt * k3, u, t + dt);
    Vector next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!next.allFinite()) {
        std::ostringstream msg;
        msg << "integration diverged at t = " << t + dt;
        throw DivergenceError(msg.str(), t + dt, -1);
    }
    return next;
}

// ---------------------------------------------------------------------------
// Regularized least squares

/// Accumulates the normal equations of min_M ||M * Lhs - Rhs||_F^2 column
/// block by column block, so that huge snapshot matrices never have to be
/// materialized. Only the lower triangle of the Gram matrix is maintained.
class RidgeAccumulator {
public:
    RidgeAccumulator(Eigen::Index lhs_rows, Eigen::Index rhs_rows)
        : gram_(Matrix::Zero(lhs_rows, lhs_rows)), cross_(Matrix::Zero(lhs_rows, rhs_rows)) {}

    void add(const Eigen::Ref<const Matrix>& lhs, const Eigen::Ref<const Matrix>& rhs) {
        require_dims(lhs.rows() == gram_.rows() && rhs.rows() == cross_.cols() && lhs.cols() == rhs.cols(),
                     "RidgeAccumulator::add: block shape mismatch");
        gram_.selfadjointView<Eigen::Lower>().rankUpdate(lhs);
        cross_.noalias() += lhs * rhs.transpose();
        columns_ += lhs.cols();
    }

    Eigen::Index columns() const { return columns_; }

    /// Returns M (rhs_rows x lhs_rows). Requires lambda > 0.
    Matrix solve(double lambda) const {
        if (!(lambda > 0.0)) {
            throw Error("RidgeAccumulator::solve needs lambda > 0; use ridge_right_solve for lambda = 0");
        }
        Matrix g = gram_.selfadjointView<Eigen::Lower>();
        g.diagonal().array() += lambda;
        Eigen::LDLT<Matrix> ldlt(g);
        if (ldlt.info() != Eigen::Success) {
            throw FactorizationError("ridge solve: LDLT factorization failed");
        }
        Matrix mt = ldlt.solve(cross_);
        if (!mt.allFinite()) {
            throw FactorizationError("ridge solve: non-finite solution");
        }
        return mt.transpose();
    }

private:
    Matrix gram_;
    Matrix cross_;
    Eigen::Index columns_ = 0;
};

/// Minimum-norm least squares solution of M * Lhs = Rhs via SVD.
inline Matrix min_norm_right_solve(const Eigen::Ref<const Matrix>& lhs, const Eigen::Ref<const Matrix>& rhs) {
    require_dims(lhs.cols() == rhs.cols(), "min_norm_right_solve: column counts differ");
    Eigen::BDCSVD<Matrix> svd(lhs.transpose(), Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success) {
        throw FactorizationError("minimum-norm solve: SVD failed");
    }
    Matrix mt = svd.solve(rhs.transpose());
    if (!mt.allFinite()) {
        throw FactorizationError("minimum-norm solve: non-finite solution");
    }
    return mt.transpose();
}

/// argmin_M ||M * Lhs - Rhs||_F^2 + lambda ||M||_F^2 for Lhs (p x N), Rhs (q x N).
/// lambda = 0 gives the pseudo-inverse (minimum-norm) solution Rhs * pinv(Lhs).
inline Matrix ridge_right_solve(const Eigen::Ref<const Matrix>& lhs, const Eigen::Ref<const Matrix>& rhs,
                                double lambda) {
    require_dims(lhs.cols() == rhs.cols(), "ridge_right_solve: column counts differ");
    if (lambda < 0.0 || !std::isfinite(lambda)) {
        throw Error("ridge_right_solve: lambda must be finite and >= 0");
    }
    if (lambda == 0.0) {
        return min_norm_right_solve(lhs, rhs);
    }
    RidgeAccumulator acc(lhs.rows(), rhs.rows());
    acc.add(lhs, rhs);
    return acc.solve(lambda);
}

// ---------------------------------------------------------------------------
// Local linearization

struct LocalLinearization {
    Matrix A;   // df/dx at (x0, u0)
    Matrix B;   // df/du at (x0, u0)
    Vector c;   // f(x0, u0)
    Vector x0;
    Vector u0;

    /// Affine model c + A (x - x0) + B (u - u0).
    Vector operator()(const Vector& x, const Vector& u, double /*t*/) const {
        return c + A * (x - x0) + B * (u - u0);
    }
};

/// Central-difference Jacobians of f at (x0, u0), evaluated at t = 0.
template <class Field>
LocalLinearization linearize(const Field& f, const Vector& x0, const Vector& u0, double h_fd = 1e-6) {
    if (!(h_fd > 0.0)) {
        throw Error("linearize: finite-difference step must be positive");
    }
    LocalLinearization lin;
    lin.x0 = x0;
    lin.u0 = u0;
    lin.c = f(x0, u0, 0.0);
    const auto n = x0.size();
    const auto l = u0.size();
    lin.A.resize(lin.c.size(), n);
    lin.B.resize(lin.c.size(), l);
    for (Eigen::Index j = 0; j < n; ++j) {
        Vector xp = x0, xm = x0;
        xp(j) += h_fd;
        xm(j) -= h_fd;
        lin.A.col(j) = (f(xp, u0, 0.0) - f(xm, u0, 0.0)) / (2.0 * h_fd);
    }
    for (Eigen::Index j = 0; j < l; ++j) {
        Vector up = u0, um = u0;
        up(j) += h_fd;
        um(j) -= h_fd;
        lin.B.col(j) = (f(x0, up, 0.0) - f(x0, um, 0.0)) / (2.0 * h_fd);
    }
    if (!lin.A.allFinite() || !lin.B.allFinite() || !lin.c.allFinite()) {
        throw Error("linearize: non-finite Jacobian entries");
    }
    return lin;
}

}  // namespace blskoop

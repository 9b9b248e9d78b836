#pragma once

// Condensed linear MPC on a lifted Koopman predictor.
//
// Over a horizon of N steps the predicted outputs are
//
//   Y = Upsilon z0 + Omega U,  Upsilon = [CA; CA^2; ...; CA^N],
//   Omega(i, j) = C A^(i-j) B  for j <= i,
//
// where C here is the output selector. The tracking cost
// (Y - Yref)' Qbar (Y - Yref) + U' Rbar U becomes the box-constrained QP
// 1/2 U' S U + g' U with S = 2 (Omega' Qbar Omega + Rbar) and
// g = 2 Omega' Qbar (Upsilon z0 - Yref).

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "blskoop/koopman.hpp"
#include "blskoop/numerics.hpp"
#include "blskoop/systems.hpp"

namespace blskoop {

/// Reference output at absolute time t.
using ReferenceSource = std::function<Vector(double)>;

inline ReferenceSource constant_reference(Vector y) {
    return [y = std::move(y)](double) { return y; };
}

struct MpcConfig {
    int horizon = 20;
    Matrix Q;  // n_out x n_out, per step
    Matrix R;  // l x l, per step
    Vector u_min;
    Vector u_max;
    /// Optional output bounds, enforced as a quadratic soft penalty when
    /// output_penalty > 0.
    std::optional<Vector> y_min;
    std::optional<Vector> y_max;
    double output_penalty = 0.0;
    double control_period = 0.01;
    double integration_step = 0.01;
    Matrix output_selector;  // n_out x E
    /// Use S = Omega' Qbar Omega + Rbar (no factor 2) with the same g.
    bool half_hessian = false;
    double qp_tol = 1e-9;
    int qp_max_iter = 500;

    Eigen::Index output_dim() const { return output_selector.rows(); }
    Eigen::Index input_dim() const { return R.rows(); }

    void validate(int lifted_dim, int input_dim_expected) const {
        if (horizon < 1) {
            throw ConfigError("mpc: horizon must be >= 1");
        }
        if (output_selector.cols() != lifted_dim) {
            throw DimensionError("mpc: output selector width differs from the lifted dimension");
        }
        const auto no = output_selector.rows();
        if (Q.rows() != no || Q.cols() != no || R.rows() != input_dim_expected || R.cols() != input_dim_expected) {
            throw DimensionError("mpc: Q or R has the wrong shape");
        }
        if (!Q.isApprox(Q.transpose()) || !R.isApprox(R.transpose())) {
            throw ConfigError("mpc: Q and R must be symmetric");
        }
        if (Eigen::LLT<Matrix>(Q).info() != Eigen::Success || Eigen::LLT<Matrix>(R).info() != Eigen::Success) {
            throw ConfigError("mpc: Q and R must be positive definite");
        }
        if (u_min.size() != input_dim_expected || u_max.size() != input_dim_expected ||
            (u_min.array() >= u_max.array()).any()) {
            throw ConfigError("mpc: input bounds must satisfy u_min < u_max");
        }
        if ((y_min && y_min->size() != no) || (y_max && y_max->size() != no)) {
            throw ConfigError("mpc: output bounds have the wrong dimension");
        }
        if (!(control_period > 0.0) || !(integration_step > 0.0)) {
            throw ConfigError("mpc: control period and integration step must be positive");
        }
        if (output_penalty < 0.0) {
            throw ConfigError("mpc: output penalty must be non-negative");
        }
    }
};

/// Selector rows picking raw-state components out of a lifted vector.
inline Matrix select_outputs(int lifted_dim, int state_dim, const std::vector<int>& indices) {
    Matrix S = Matrix::Zero(static_cast<Eigen::Index>(indices.size()), lifted_dim);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] < 0 || indices[r] >= state_dim) {
            throw DimensionError("select_outputs: index " + std::to_string(indices[r]) + " is not a state component");
        }
        S(static_cast<Eigen::Index>(r), indices[r]) = 1.0;
    }
    return S;
}

inline Matrix select_outputs(const KoopmanPredictor& pred, const std::vector<int>& indices) {
    return select_outputs(pred.lifted_dim(), pred.state_dim(), indices);
}

struct CondensedHorizon {
    Matrix Upsilon;  // (n_out N) x E
    Matrix Omega;    // (n_out N) x (l N)
    Matrix Qbar;
    Matrix Rbar;
    int horizon = 0;

    /// Stacked outputs y_1..y_N.
    Vector predict(const Vector& z0, const Vector& U) const { return Upsilon * z0 + Omega * U; }
};

inline Matrix block_diag(const Matrix& block, int count) {
    Matrix out = Matrix::Zero(block.rows() * count, block.cols() * count);
    for (int i = 0; i < count; ++i) {
        out.block(i * block.rows(), i * block.cols(), block.rows(), block.cols()) = block;
    }
    return out;
}

inline CondensedHorizon condense(const KoopmanPredictor& pred, const MpcConfig& cfg) {
    cfg.validate(pred.lifted_dim(), pred.input_dim());
    const int N = cfg.horizon;
    const auto no = cfg.output_dim();
    const auto l = pred.input_dim();
    const auto E = pred.lifted_dim();

    CondensedHorizon ch;
    ch.horizon = N;
    ch.Upsilon.resize(no * N, E);
    ch.Omega = Matrix::Zero(no * N, l * N);
    std::vector<Matrix> markov;  // C A^i B, i = 0..N-1
    Matrix CA = cfg.output_selector;  // C A^i
    for (int i = 0; i < N; ++i) {
        markov.push_back(CA * pred.B);
        CA = CA * pred.A;
        ch.Upsilon.middleRows(i * no, no) = CA;
    }
    for (int i = 0; i < N; ++i) {
        for (int j = 0; j <= i; ++j) {
            ch.Omega.block(i * no, j * l, no, l) = markov[i - j];
        }
    }
    ch.Qbar = block_diag(cfg.Q, N);
    ch.Rbar = block_diag(cfg.R, N);
    return ch;
}

// ---------------------------------------------------------------------------
// Box-constrained QP

struct QpInstance {
    Matrix S;  // symmetric positive definite
    Vector g;
    Vector lo;
    Vector hi;
    /// Cost terms independent of U, so that objective(U) + offset is the MPC cost.
    double offset = 0.0;

    double objective(const Vector& U) const { return 0.5 * U.dot(S * U) + g.dot(U); }
};

/// Builds the QP for the current lifted state. `guess` (e.g. the shifted
/// previous solution) decides which output bounds are penalized.
inline QpInstance build_qp(const CondensedHorizon& ch, const Vector& z0, const Vector& y_ref, const MpcConfig& cfg,
                           const Vector* guess = nullptr) {
    require_dims(z0.size() == ch.Upsilon.cols(), "build_qp: lifted state has the wrong dimension");
    require_dims(y_ref.size() == ch.Upsilon.rows(), "build_qp: reference has the wrong length");
    const auto l = cfg.input_dim();
    const int N = ch.horizon;

    const Vector free_response = ch.Upsilon * z0;
    const Vector err = free_response - y_ref;
    const Matrix QO = ch.Qbar * ch.Omega;

    QpInstance qp;
    qp.S = ch.Omega.transpose() * QO + ch.Rbar;
    if (!cfg.half_hessian) {
        qp.S *= 2.0;
    }
    qp.g = 2.0 * QO.transpose() * err;
    qp.offset = err.dot(ch.Qbar * err);

    if (cfg.output_penalty > 0.0 && (cfg.y_min || cfg.y_max)) {
        const auto no = cfg.output_dim();
        const Vector U0 = guess ? *guess : Vector::Zero(l * N);
        const Vector y_pred = free_response + ch.Omega * U0;
        for (Eigen::Index row = 0; row < y_pred.size(); ++row) {
            const auto c = row % no;
            double bound = 0.0;
            if (cfg.y_max && y_pred(row) > (*cfg.y_max)(c)) {
                bound = (*cfg.y_max)(c);
            } else if (cfg.y_min && y_pred(row) < (*cfg.y_min)(c)) {
                bound = (*cfg.y_min)(c);
            } else {
                continue;
            }
            // rho (Omega_r U + free_r - bound)^2
            const Vector om = ch.Omega.row(row).transpose();
            const double d = free_response(row) - bound;
            qp.S.noalias() += 2.0 * cfg.output_penalty * om * om.transpose();
            qp.g += 2.0 * cfg.output_penalty * d * om;
            qp.offset += cfg.output_penalty * d * d;
        }
    }
    qp.S = 0.5 * (qp.S + qp.S.transpose());
    qp.lo.resize(l * N);
    qp.hi.resize(l * N);
    for (int i = 0; i < N; ++i) {
        qp.lo.segment(i * l, l) = cfg.u_min;
        qp.hi.segment(i * l, l) = cfg.u_max;
    }
    return qp;
}

struct QpResult {
    Vector u;
    int iterations = 0;
    bool converged = false;
    double objective = 0.0;
    double kkt_residual = 0.0;
};

/// Scaled projected-gradient norm: max_i |u_i - clip(u_i - grad_i)| / (1 + ||g||_inf).
/// Zero exactly at the KKT point of the box QP.
inline double kkt_residual(const QpInstance& qp, const Vector& u) {
    const Vector grad = qp.S * u + qp.g;
    const Vector proj = (u - grad).cwiseMax(qp.lo).cwiseMin(qp.hi);
    const double scale = 1.0 + (qp.g.size() ? qp.g.cwiseAbs().maxCoeff() : 0.0);
    return (u - proj).cwiseAbs().maxCoeff() / scale;
}

/// Primal active-set method for min 1/2 u'Su + g'u s.t. lo <= u <= hi with S
/// positive definite. Iterates are feasible throughout and variables on the
/// active set sit exactly on their bound.
inline QpResult solve_box_qp(const QpInstance& qp, double tol = 1e-9, int max_iter = 500,
                             const Vector* warm_start = nullptr) {
    const auto n = qp.g.size();
    require_dims(qp.S.rows() == n && qp.S.cols() == n && qp.lo.size() == n && qp.hi.size() == n,
                 "solve_box_qp: inconsistent shapes");
    if ((qp.lo.array() > qp.hi.array()).any()) {
        throw Error("solve_box_qp: empty box");
    }
    enum : char { kFree, kLower, kUpper };

    Vector u = warm_start && warm_start->size() == n ? *warm_start : Vector::Zero(n);
    u = u.cwiseMax(qp.lo).cwiseMin(qp.hi);
    std::vector<char> state(n, kFree);
    {
        const Vector grad = qp.S * u + qp.g;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (u(i) == qp.lo(i) && grad(i) > 0.0) {
                state[i] = kLower;
            } else if (u(i) == qp.hi(i) && grad(i) < 0.0) {
                state[i] = kUpper;
            }
        }
    }

    QpResult res;
    std::vector<Eigen::Index> freeset;
    for (res.iterations = 0; res.iterations < max_iter; ++res.iterations) {
        freeset.clear();
        for (Eigen::Index i = 0; i < n; ++i) {
            if (state[i] == kFree) {
                freeset.push_back(i);
            }
        }
        const Vector grad = qp.S * u + qp.g;
        bool at_subspace_min = true;
        if (!freeset.empty()) {
            const auto nf = static_cast<Eigen::Index>(freeset.size());
            Matrix Sff(nf, nf);
            Vector rhs(nf);
            for (Eigen::Index a = 0; a < nf; ++a) {
                rhs(a) = -grad(freeset[a]);
                for (Eigen::Index b = 0; b < nf; ++b) {
                    Sff(a, b) = qp.S(freeset[a], freeset[b]);
                }
            }
            Eigen::LLT<Matrix> llt(Sff);
            if (llt.info() != Eigen::Success) {
                throw FactorizationError("solve_box_qp: Hessian is not positive definite");
            }
            const Vector p = llt.solve(rhs);
            // Longest feasible step along p, capped at the Newton step.
            double alpha = 1.0;
            Eigen::Index blocking = -1;
            char blocking_side = kFree;
            for (Eigen::Index a = 0; a < nf; ++a) {
                const auto i = freeset[a];
                if (p(a) < 0.0) {
                    const double t = (qp.lo(i) - u(i)) / p(a);
                    if (t < alpha) {
                        alpha = t;
                        blocking = i;
                        blocking_side = kLower;
                    }
                } else if (p(a) > 0.0) {
                    const double t = (qp.hi(i) - u(i)) / p(a);
                    if (t < alpha) {
                        alpha = t;
                        blocking = i;
                        blocking_side = kUpper;
                    }
                }
            }
            alpha = std::max(alpha, 0.0);
            for (Eigen::Index a = 0; a < nf; ++a) {
                const auto i = freeset[a];
                u(i) = std::clamp(u(i) + alpha * p(a), qp.lo(i), qp.hi(i));
            }
            if (blocking >= 0) {
                u(blocking) = blocking_side == kLower ? qp.lo(blocking) : qp.hi(blocking);
                state[blocking] = blocking_side;
                at_subspace_min = false;
            }
        }
        if (!at_subspace_min) {
            continue;
        }
        // Release the bound whose multiplier has the wrong sign the most.
        // Violations at roundoff level are ignored to avoid cycling.
        const Vector g2 = qp.S * u + qp.g;
        Eigen::Index release = -1;
        double worst = 1e-14 * (1.0 + (n ? qp.g.cwiseAbs().maxCoeff() : 0.0));
        for (Eigen::Index i = 0; i < n; ++i) {
            double violation = 0.0;
            if (state[i] == kLower) {
                violation = -g2(i);
            } else if (state[i] == kUpper) {
                violation = g2(i);
            }
            if (violation > worst) {
                worst = violation;
                release = i;
            }
        }
        if (release < 0) {
            res.converged = true;
            break;
        }
        state[release] = kFree;
    }
    res.u = std::move(u);
    res.objective = qp.objective(res.u);
    res.kkt_residual = kkt_residual(qp, res.u);
    res.converged = res.kkt_residual <= tol;
    return res;
}

// ---------------------------------------------------------------------------
// Receding-horizon loop

struct ClosedLoopRow {
    double t = 0.0;      // time at the end of the control period
    Vector state;        // plant state at t
    Vector input;        // input applied over (t - period, t]
    double cost = 0.0;   // predicted horizon cost of the chosen input sequence
    int qp_iterations = 0;
    bool qp_converged = true;
};

struct ClosedLoopLog {
    Vector x0;
    std::uint64_t seed = 0;
    std::vector<ClosedLoopRow> rows;
    bool aborted = false;
    std::string abort_reason;

    int non_converged() const {
        return static_cast<int>(std::count_if(rows.begin(), rows.end(), [](const auto& r) { return !r.qp_converged; }));
    }

    std::string to_csv(const std::vector<std::string>& state_names, const std::vector<std::string>& input_names) const {
        std::string out = "t";
        for (const auto& s : state_names) {
            out += "," + s;
        }
        for (const auto& s : input_names) {
            out += "," + s;
        }
        out += ",cost\n";
        for (const auto& r : rows) {
            out += detail::format_double(r.t);
            for (Eigen::Index i = 0; i < r.state.size(); ++i) {
                out += "," + detail::format_double(r.state(i));
            }
            for (Eigen::Index i = 0; i < r.input.size(); ++i) {
                out += "," + detail::format_double(r.input(i));
            }
            out += "," + detail::format_double(r.cost) + "\n";
        }
        return out;
    }
};

/// Algorithm: lift the measured state, solve the horizon QP, apply the first
/// input block to the nonlinear plant for one control period, repeat until T.
inline ClosedLoopLog run_receding_horizon(const Plant& plant, const KoopmanPredictor& pred, const MpcConfig& cfg,
                                          const ReferenceSource& reference, const Vector& x0, double T,
                                          std::uint64_t seed = 0) {
    require_dims(plant.state_dim() == pred.state_dim() && plant.input_dim() == pred.input_dim(),
                 "run_receding_horizon: plant and predictor dimensions differ");
    require_dims(x0.size() == plant.state_dim(), "run_receding_horizon: wrong initial state dimension");
    const CondensedHorizon ch = condense(pred, cfg);
    const auto l = pred.input_dim();
    const auto no = cfg.output_dim();
    const int N = cfg.horizon;
    const auto substeps = std::max<long long>(1, std::llround(cfg.control_period / cfg.integration_step));
    const double h = cfg.control_period / static_cast<double>(substeps);
    const auto steps = static_cast<long long>(std::llround(T / cfg.control_period));

    ClosedLoopLog log;
    log.x0 = x0;
    log.seed = seed;
    log.rows.reserve(static_cast<std::size_t>(std::max(0LL, steps)));

    Vector x = x0;
    Vector warm = Vector::Zero(l * N);
    Vector y_ref(no * N);
    for (long long k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * cfg.control_period;
        for (int i = 0; i < N; ++i) {
            y_ref.segment(i * no, no) = reference(t + (i + 1) * cfg.control_period);
        }
        Vector z0;
        try {
            z0 = pred.encode(x);
        } catch (const Error& e) {
            log.aborted = true;
            log.abort_reason = e.what();
            break;
        }
        const QpInstance qp = build_qp(ch, z0, y_ref, cfg, &warm);
        const QpResult sol = solve_box_qp(qp, cfg.qp_tol, cfg.qp_max_iter, &warm);
        const Vector u = sol.u.head(l);

        try {
            for (long long s = 0; s < substeps; ++s) {
                x = rk4_step(plant.rhs, x, u, t + static_cast<double>(s) * h, h);
            }
        } catch (const DivergenceError& e) {
            log.aborted = true;
            log.abort_reason = e.what();
            break;
        }
        ClosedLoopRow row;
        row.t = static_cast<double>(k + 1) * cfg.control_period;
        row.state = x;
        row.input = u;
        row.cost = sol.objective + qp.offset;
        row.qp_iterations = sol.iterations;
        row.qp_converged = sol.converged;
        log.rows.push_back(std::move(row));

        warm.head(l * (N - 1)) = sol.u.tail(l * (N - 1));
        warm.tail(l) = sol.u.tail(l);
    }
    return log;
}

/// Summary of a tracking run on one state component.
struct TrackingSummary {
    double final_error = std::numeric_limits<double>::quiet_NaN();
    /// First time after which |state - target| <= band holds to the end; NaN if never.
    double settling_time = std::numeric_limits<double>::quiet_NaN();
    double max_abs_input = 0.0;
    int qp_non_converged = 0;
    int qp_max_iterations = 0;
    double qp_mean_iterations = 0.0;
    bool aborted = false;

    nlohmann::json to_json() const {
        auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
        return {{"final_error", num(final_error)},
                {"settling_time", num(settling_time)},
                {"max_abs_input", max_abs_input},
                {"qp_non_converged", qp_non_converged},
                {"qp_max_iterations", qp_max_iterations},
                {"qp_mean_iterations", qp_mean_iterations},
                {"aborted", aborted}};
    }
};

inline TrackingSummary summarize_tracking(const ClosedLoopLog& log, int component, double target, double band) {
    TrackingSummary s;
    s.aborted = log.aborted;
    if (log.rows.empty()) {
        return s;
    }
    s.final_error = std::abs(log.rows.back().state(component) - target);
    std::size_t last_outside = log.rows.size();
    long long iters = 0;
    for (std::size_t i = 0; i < log.rows.size(); ++i) {
        const auto& r = log.rows[i];
        if (std::abs(r.state(component) - target) > band) {
            last_outside = i;
        }
        s.max_abs_input = std::max(s.max_abs_input, r.input.cwiseAbs().maxCoeff());
        s.qp_max_iterations = std::max(s.qp_max_iterations, r.qp_iterations);
        s.qp_non_converged += r.qp_converged ? 0 : 1;
        iters += r.qp_iterations;
    }
    s.qp_mean_iterations = static_cast<double>(iters) / static_cast<double>(log.rows.size());
    if (last_outside == log.rows.size()) {
        s.settling_time = 0.0;
    } else if (last_outside + 1 < log.rows.size()) {
        s.settling_time = log.rows[last_outside + 1].t;
    }
    return s;
}

}  // namespace blskoop

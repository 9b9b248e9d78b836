#pragma once

// Finite-dimensional Koopman predictors fitted by (regularized) EDMD on a
// lifted dictionary:
//
//   z_{k+1} = A z_k + B u_k,   y_k = C z_k,   z_0 = lift(x_0)
//
// [A B] solves min ||lift(Y) - A lift(X) - B U||_F (ridge-regularized), and
// since every lifter passes the raw state through, C = [I 0].

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"

#include "blskoop/binary_io.hpp"
#include "blskoop/data.hpp"
#include "blskoop/lifting.hpp"
#include "blskoop/numerics.hpp"
#include "blskoop/parallel.hpp"
#include "blskoop/systems.hpp"

namespace blskoop {

struct KoopmanPredictor {
    Lifter lifter;
    Matrix A;  // E x E
    Matrix B;  // E x l
    Matrix C;  // n x E
    /// ||lift(Y) - A lift(X) - B U||_F on the training data.
    double training_residual = 0.0;
    /// Mean squared one-step state error on the training data.
    double training_state_mse = 0.0;
    double lambda = 0.0;

    int lifted_dim() const { return static_cast<int>(A.rows()); }
    int state_dim() const { return static_cast<int>(C.rows()); }
    int input_dim() const { return static_cast<int>(B.cols()); }

    Vector encode(const Vector& x) const { return lift(lifter, x); }
    Vector advance(const Vector& z, const Vector& u) const { return A * z + B * u; }
    Vector decode(const Vector& z) const { return C * z; }
};

/// [I 0]: reads the passed-through state out of a lifted vector.
inline Matrix state_decoder(int n, int lifted) {
    Matrix C = Matrix::Zero(n, lifted);
    C.leftCols(n).setIdentity();
    return C;
}

namespace detail {

/// Lifts columns [begin, begin + count) of X and Y. Inside a trajectory
/// Y(:, k) == X(:, k + 1), in which case the X lift is reused.
inline void lift_chunk(const Lifter& lifter, const SnapshotDataset& ds, Eigen::Index begin, Eigen::Index count,
                       Matrix& PX, Matrix& PY) {
    Matrix xs(ds.state_dim(), count + 1);
    xs.leftCols(count) = ds.X.middleCols(begin, count);
    xs.col(count) = ds.Y.col(begin + count - 1);
    const Matrix lifted = lift_columns(lifter, xs);
    PX = lifted.leftCols(count);
    PY.resize(lifted.rows(), count);
    std::vector<Eigen::Index> missing;
    for (Eigen::Index k = 0; k < count; ++k) {
        if (k + 1 < count && ds.Y.col(begin + k) == ds.X.col(begin + k + 1)) {
            PY.col(k) = lifted.col(k + 1);
        } else if (k + 1 == count) {
            PY.col(k) = lifted.col(count);
        } else {
            missing.push_back(k);
        }
    }
    if (!missing.empty()) {
        Matrix ys(ds.state_dim(), static_cast<Eigen::Index>(missing.size()));
        for (std::size_t i = 0; i < missing.size(); ++i) {
            ys.col(static_cast<Eigen::Index>(i)) = ds.Y.col(begin + missing[i]);
        }
        const Matrix ly = lift_columns(lifter, ys);
        for (std::size_t i = 0; i < missing.size(); ++i) {
            PY.col(missing[i]) = ly.col(static_cast<Eigen::Index>(i));
        }
    }
}

}  // namespace detail

struct FitDiagnostics {
    double lifted_residual = 0.0;  // ||lift(Y) - A lift(X) - B U||_F
    double state_mse = 0.0;        // mean_k ||C(A lift(x_k) + B u_k) - y_k||^2
};

/// Both training errors of a fitted predictor on `ds`.
inline FitDiagnostics evaluate_fit(const KoopmanPredictor& pred, const SnapshotDataset& ds,
                                   Eigen::Index chunk = 4096) {
    require_dims(ds.state_dim() == pred.state_dim() && ds.input_dim() == pred.input_dim(),
                 "evaluate_fit: dataset does not match predictor");
    double lifted_sq = 0.0, state_sq = 0.0;
    for (Eigen::Index a = 0; a < ds.size(); a += chunk) {
        const Eigen::Index m = std::min(chunk, ds.size() - a);
        Matrix PX, PY;
        detail::lift_chunk(pred.lifter, ds, a, m, PX, PY);
        Matrix R = PY;
        R.noalias() -= pred.A * PX;
        R.noalias() -= pred.B * ds.U.middleCols(a, m);
        lifted_sq += R.squaredNorm();
        // C = [I 0] and the first n rows of lift(Y) are Y, so the state error is
        // the residual's top block.
        state_sq += (pred.C * (PY - R) - ds.Y.middleCols(a, m)).squaredNorm();
    }
    FitDiagnostics d;
    d.lifted_residual = std::sqrt(lifted_sq);
    d.state_mse = ds.size() ? state_sq / static_cast<double>(ds.size()) : 0.0;
    return d;
}

/// EDMD fit of [A B] = lift(Y) [lift(X); U]^+ (ridge for lambda > 0, streamed
/// over column chunks; minimum-norm SVD for lambda = 0, which materializes the
/// lifted data).
inline KoopmanPredictor fit_edmd(const SnapshotDataset& ds, const Lifter& lifter, double lambda,
                                 Eigen::Index chunk = 4096) {
    ds.validate();
    if (!ds.usable()) {
        throw Error("fit_edmd: dataset is empty");
    }
    require_dims(state_dim(lifter) == ds.state_dim(), "fit_edmd: lifter state dimension differs from dataset");
    const Eigen::Index E = lifted_dim(lifter);
    const Eigen::Index l = ds.input_dim();
    const Eigen::Index N = ds.size();

    Matrix K;  // E x (E + l)
    if (lambda > 0.0) {
        RidgeAccumulator acc(E + l, E);
        Matrix lhs(E + l, 0);
        for (Eigen::Index a = 0; a < N; a += chunk) {
            const Eigen::Index m = std::min(chunk, N - a);
            Matrix PX, PY;
            detail::lift_chunk(lifter, ds, a, m, PX, PY);
            lhs.resize(E + l, m);
            lhs.topRows(E) = PX;
            lhs.bottomRows(l) = ds.U.middleCols(a, m);
            acc.add(lhs, PY);
        }
        K = acc.solve(lambda);
    } else if (lambda == 0.0) {
        Matrix PX, PY;
        detail::lift_chunk(lifter, ds, 0, N, PX, PY);
        Matrix lhs(E + l, N);
        lhs.topRows(E) = PX;
        lhs.bottomRows(l) = ds.U;
        K = min_norm_right_solve(lhs, PY);
    } else {
        throw Error("fit_edmd: lambda must be >= 0");
    }

    KoopmanPredictor pred;
    pred.lifter = lifter;
    pred.A = K.leftCols(E);
    pred.B = K.rightCols(l);
    pred.C = state_decoder(static_cast<int>(ds.state_dim()), static_cast<int>(E));
    pred.lambda = lambda;
    const auto diag = evaluate_fit(pred, ds, chunk);
    pred.training_residual = diag.lifted_residual;
    pred.training_state_mse = diag.state_mse;
    return pred;
}

// ---------------------------------------------------------------------------
// Incremental node growth

struct TrainOptions {
    int init_nz = 600;
    int init_nh = 400;
    /// Stop once the mean squared one-step state error drops below epsilon.
    double epsilon = 1e-6;
    int growth_z = 100;
    int growth_h = 100;
    /// Upper bound on the lifted dimension.
    int max_dim = 1002;
    double lambda = 1e-6;
    std::uint64_t seed = 7;
    Activation activation = Activation::Tps;
    double scale = 1.0;
    Vector center;
    Vector halfwidth;
    Eigen::Index chunk = 4096;
};

struct GrowthStage {
    int n_z = 0;
    int n_h = 0;
    int lifted_dim = 0;
    double error = 0.0;     // mean squared one-step state error
    double residual = 0.0;  // lifted Frobenius residual
};

struct TrainResult {
    KoopmanPredictor predictor;  // lowest-error stage
    std::vector<GrowthStage> trace;
    bool reached_epsilon = false;
    bool budget_exhausted = false;
};

/// Fit, measure the one-step error, and grow the BLS hidden layer until the
/// error falls below epsilon or the next growth would exceed max_dim.
inline TrainResult train_bls_edmd(const SnapshotDataset& ds, const TrainOptions& opt) {
    if (!(opt.epsilon > 0.0)) {
        throw ConfigError("train_bls_edmd: epsilon must be positive");
    }
    const int n = static_cast<int>(ds.state_dim());
    BlsLifter lifter =
        BlsLifter::create(n, opt.init_nz, opt.init_nh, opt.activation, opt.scale, opt.seed, opt.center, opt.halfwidth);
    if (lifter.lifted_dim() > opt.max_dim) {
        throw ConfigError("train_bls_edmd: initial lifted dimension " + std::to_string(lifter.lifted_dim()) +
                          " exceeds max_dim " + std::to_string(opt.max_dim));
    }
    TrainResult result;
    double best = std::numeric_limits<double>::infinity();
    for (std::uint64_t stage = 0;; ++stage) {
        KoopmanPredictor pred = fit_edmd(ds, lifter, opt.lambda, opt.chunk);
        const double err = pred.training_state_mse;
        result.trace.push_back(
            {lifter.feature_count(), lifter.enhance_count(), lifter.lifted_dim(), err, pred.training_residual});
        if (err < best || result.trace.size() == 1) {
            best = err;
            result.predictor = std::move(pred);
        }
        if (err < opt.epsilon) {
            result.reached_epsilon = true;
            break;
        }
        const int step = opt.growth_z + opt.growth_h;
        if (step <= 0 || lifter.lifted_dim() + step > opt.max_dim) {
            result.budget_exhausted = true;
            break;
        }
        lifter = lifter.grow(opt.growth_z, opt.growth_h, splitmix64(opt.seed + stage + 1));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Rollouts

/// Pure lifted-space rollout: z_{k+1} = A z_k + B u_k from z_0. Column k of the
/// result is z_{k+1}.
inline Matrix rollout_lifted(const KoopmanPredictor& pred, const Vector& z0, const Matrix& u_seq) {
    require_dims(z0.size() == pred.lifted_dim() && u_seq.rows() == pred.input_dim(),
                 "rollout_lifted: dimension mismatch");
    Matrix out(pred.lifted_dim(), u_seq.cols());
    Vector z = z0;
    for (Eigen::Index k = 0; k < u_seq.cols(); ++k) {
        z = pred.advance(z, u_seq.col(k));
        if (!z.allFinite()) {
            throw DivergenceError("predictor rollout diverged at step " + std::to_string(k + 1),
                                  std::numeric_limits<double>::quiet_NaN(), static_cast<long>(k + 1));
        }
        out.col(k) = z;
    }
    return out;
}

/// Predicted states y_1..y_K for inputs u_0..u_{K-1}; x0 is lifted once.
inline Matrix predict_rollout(const KoopmanPredictor& pred, const Vector& x0, const Matrix& u_seq) {
    require_dims(x0.size() == pred.state_dim(), "predict_rollout: wrong initial state dimension");
    if (u_seq.cols() < 1) {
        throw Error("predict_rollout: need at least one input step");
    }
    return pred.C * rollout_lifted(pred, pred.encode(x0), u_seq);
}

/// States x_1..x_K of the plant itself under u_0..u_{K-1}.
template <class Field>
Matrix simulate(const Field& f, const Vector& x0, const Matrix& u_seq, double dt) {
    Matrix out(x0.size(), u_seq.cols());
    Vector x = x0;
    for (Eigen::Index k = 0; k < u_seq.cols(); ++k) {
        x = rk4_step(f, x, u_seq.col(k), static_cast<double>(k) * dt, dt);
        out.col(k) = x;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Error metric

/// sqrt(||pred - truth||^2 / ||truth||^2) over the flattened run.
inline double relative_run_error(const Matrix& pred, const Matrix& truth) {
    require_dims(pred.rows() == truth.rows() && pred.cols() == truth.cols(), "relative_run_error: shape mismatch");
    return std::sqrt((pred - truth).squaredNorm() / truth.squaredNorm());
}

struct RmseSummary {
    double percent = 0.0;             // mean over valid runs, in %
    std::vector<double> per_run;      // in %, NaN for excluded runs
    std::vector<std::size_t> excluded;  // runs whose truth has zero norm
};

inline RmseSummary rmse_percent(const std::vector<Matrix>& pred_runs, const std::vector<Matrix>& true_runs) {
    require_dims(pred_runs.size() == true_runs.size(), "rmse_percent: run counts differ");
    RmseSummary s;
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < pred_runs.size(); ++i) {
        if (true_runs[i].squaredNorm() == 0.0) {
            s.excluded.push_back(i);
            s.per_run.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        const double r = 100.0 * relative_run_error(pred_runs[i], true_runs[i]);
        s.per_run.push_back(r);
        sum += r;
        ++used;
    }
    if (used == 0) {
        throw Error("rmse_percent: no run with a nonzero true trajectory");
    }
    s.percent = sum / static_cast<double>(used);
    return s;
}

// ---------------------------------------------------------------------------
// Persistence: "BKPR", u32 version, f64 lambda, f64 residual, A, B, C, lifter.

inline constexpr std::uint32_t kPredictorFormatVersion = 1;

inline void save_predictor(const KoopmanPredictor& p, const std::string& path) {
    BinaryWriter w;
    w.bytes("BKPR", 4);
    w.u32(kPredictorFormatVersion);
    w.f64(p.lambda);
    w.f64(p.training_residual);
    w.f64(p.training_state_mse);
    w.matrix(p.A);
    w.matrix(p.B);
    w.matrix(p.C);
    write_lifter(w, p.lifter);
    w.save(path);
}

inline KoopmanPredictor load_predictor(const std::string& path) {
    auto r = BinaryReader::from_file(path);
    r.expect_magic("BKPR", kPredictorFormatVersion);
    KoopmanPredictor p;
    p.lambda = r.f64();
    p.training_residual = r.f64();
    p.training_state_mse = r.f64();
    p.A = r.matrix();
    p.B = r.matrix();
    p.C = r.matrix();
    p.lifter = read_lifter(r);
    if (!r.at_end()) {
        throw FormatError("trailing bytes after predictor payload");
    }
    const auto E = lifted_dim(p.lifter);
    if (p.A.rows() != E || p.A.cols() != E || p.B.rows() != E || p.C.cols() != E ||
        p.C.rows() != state_dim(p.lifter)) {
        throw FormatError("predictor matrices do not match the embedded lifter");
    }
    return p;
}

// ---------------------------------------------------------------------------
// Prediction benchmark

/// Maps (x0, inputs u_0..u_{K-1}) to predicted states x_1..x_K.
using TrajectoryPredictor = std::function<Matrix(const Vector&, const Matrix&)>;

struct NamedPredictor {
    std::string name;
    TrajectoryPredictor predict;
};

inline NamedPredictor koopman_method(std::string name, KoopmanPredictor pred) {
    return {std::move(name), [p = std::move(pred)](const Vector& x0, const Matrix& u) {
                return predict_rollout(p, x0, u);
            }};
}

/// Linearizes the plant at (x0, 0) and integrates the affine model with RK4.
inline NamedPredictor local_linearization_method(const Plant& plant, double dt, double h_fd = 1e-6,
                                                 std::string name = "local") {
    return {std::move(name), [plant, dt, h_fd](const Vector& x0, const Matrix& u) {
                const auto lin = linearize(plant.rhs, x0, Vector::Zero(plant.input_dim()), h_fd);
                return simulate(lin, x0, u, dt);
            }};
}

inline NamedPredictor truth_method(const Plant& plant, double dt, std::string name = "truth") {
    return {std::move(name),
            [plant, dt](const Vector& x0, const Matrix& u) { return simulate(plant.rhs, x0, u, dt); }};
}

struct BenchmarkRange {
    double half_width = 1.0;  // initial states uniform on [-h, h]^n
    double horizon = 3.0;     // seconds
};

struct BenchmarkConfig {
    double dt = 0.01;
    std::vector<BenchmarkRange> ranges{{1.0, 3.0}, {0.5, 1.0}, {0.8, 3.0}};
    int runs = 50;
    std::uint64_t seed = 2024;
    SquareWave wave{0.3, 1.0, 0.0};
    unsigned jobs = 1;
    /// Truth trajectories leaving this magnitude are redrawn.
    double max_abs_state = 1e6;
    unsigned max_resamples = 10000;
    /// Keep every truth/prediction trajectory in the report.
    bool keep_series = false;
};

struct MethodRangeResult {
    std::vector<double> per_run;  // % per run; +inf when the predictor diverged
    double mean = 0.0;            // mean of per_run, in %
    int diverged = 0;
};

struct RangeReport {
    BenchmarkRange range;
    std::vector<Vector> initial_states;
    int resampled = 0;
    std::vector<MethodRangeResult> methods;  // same order as report.methods
    std::vector<Matrix> truth;                         // when keep_series
    std::vector<std::vector<Matrix>> predictions;      // [method][run], when keep_series
};

struct PredictionBenchmarkReport {
    std::vector<std::string> methods;
    std::vector<RangeReport> ranges;
    std::uint64_t seed = 0;
    double dt = 0.0;
    int runs = 0;

    static std::string range_label(const BenchmarkRange& r) {
        return "[-" + detail::format_double(r.half_width) + "," + detail::format_double(r.half_width) + "]";
    }

    /// method x range table of mean RMSE (%).
    std::string table_csv() const {
        std::string out = "method";
        for (const auto& r : ranges) {
            out += ",\"" + range_label(r.range) + "\"";
        }
        out += "\n";
        for (std::size_t m = 0; m < methods.size(); ++m) {
            out += methods[m];
            for (const auto& r : ranges) {
                out += "," + detail::format_double(r.methods[m].mean);
            }
            out += "\n";
        }
        return out;
    }

    /// One row per (range, run, method).
    std::string runs_csv() const {
        std::string out = "range,horizon,run,method,x0,rmse_percent\n";
        for (const auto& r : ranges) {
            for (std::size_t i = 0; i < r.initial_states.size(); ++i) {
                std::string x0;
                for (Eigen::Index j = 0; j < r.initial_states[i].size(); ++j) {
                    x0 += (j ? " " : "") + detail::format_double(r.initial_states[i](j));
                }
                for (std::size_t m = 0; m < methods.size(); ++m) {
                    out += "\"" + range_label(r.range) + "\"," + detail::format_double(r.range.horizon) + "," +
                           std::to_string(i) + "," + methods[m] + "," + x0 + "," +
                           detail::format_double(r.methods[m].per_run[i]) + "\n";
                }
            }
        }
        return out;
    }

    nlohmann::json to_json() const {
        auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
        nlohmann::json j;
        j["seed"] = seed;
        j["dt"] = dt;
        j["runs"] = runs;
        j["methods"] = methods;
        for (const auto& r : ranges) {
            nlohmann::json jr;
            jr["half_width"] = r.range.half_width;
            jr["horizon"] = r.range.horizon;
            jr["resampled"] = r.resampled;
            for (const auto& x0 : r.initial_states) {
                jr["initial_states"].push_back(std::vector<double>(x0.data(), x0.data() + x0.size()));
            }
            for (std::size_t m = 0; m < methods.size(); ++m) {
                nlohmann::json jm;
                jm["mean_rmse_percent"] = num(r.methods[m].mean);
                jm["diverged"] = r.methods[m].diverged;
                for (double v : r.methods[m].per_run) {
                    jm["per_run"].push_back(num(v));
                }
                jr["methods"][methods[m]] = jm;
            }
            j["ranges"].push_back(jr);
        }
        return j;
    }
};

/// Draws `runs` initial states per range, simulates the plant under the
/// square-wave input and scores every method with rmse_percent.
inline PredictionBenchmarkReport benchmark_predictors(const Plant& plant, const std::vector<NamedPredictor>& methods,
                                                      const BenchmarkConfig& cfg) {
    if (cfg.runs < 1) {
        throw ConfigError("benchmark: runs must be >= 1");
    }
    PredictionBenchmarkReport report;
    report.seed = cfg.seed;
    report.dt = cfg.dt;
    report.runs = cfg.runs;
    for (const auto& m : methods) {
        report.methods.push_back(m.name);
    }
    const int n = plant.state_dim();
    for (std::size_t r = 0; r < cfg.ranges.size(); ++r) {
        const auto& range = cfg.ranges[r];
        const auto K = static_cast<Eigen::Index>(std::llround(range.horizon / cfg.dt));
        if (K < 1) {
            throw ConfigError("benchmark: horizon shorter than one step");
        }
        Matrix u(plant.input_dim(), K);
        for (Eigen::Index k = 0; k < K; ++k) {
            u.col(k).setConstant(square_wave(static_cast<double>(k) * cfg.dt, cfg.wave));
        }

        RangeReport rr;
        rr.range = range;
        rr.initial_states.resize(cfg.runs);
        std::vector<Matrix> truth(cfg.runs);
        std::vector<int> resampled(cfg.runs, 0);
        std::vector<std::vector<Matrix>> preds(methods.size(), std::vector<Matrix>(cfg.runs));
        std::vector<std::vector<char>> diverged(methods.size(), std::vector<char>(cfg.runs, 0));

        parallel_for(static_cast<std::size_t>(cfg.runs), cfg.jobs, [&](std::size_t i) {
            Rng rng = Rng::stream(cfg.seed, i, r);
            const Vector lo = Vector::Constant(n, -range.half_width);
            const Vector hi = Vector::Constant(n, range.half_width);
            for (unsigned attempt = 0;; ++attempt) {
                if (attempt > cfg.max_resamples) {
                    throw DivergenceError("benchmark: could not draw a bounded truth trajectory", 0.0, -1);
                }
                Vector x0 = rng.uniform(lo, hi);
                try {
                    Matrix tr = simulate(plant.rhs, x0, u, cfg.dt);
                    if (tr.cwiseAbs().maxCoeff() > cfg.max_abs_state) {
                        throw DivergenceError("truth left the state bound", 0.0, -1);
                    }
                    truth[i] = std::move(tr);
                    rr.initial_states[i] = std::move(x0);
                    break;
                } catch (const DivergenceError&) {
                    ++resampled[i];
                }
            }
            for (std::size_t m = 0; m < methods.size(); ++m) {
                try {
                    preds[m][i] = methods[m].predict(rr.initial_states[i], u);
                    if (!preds[m][i].allFinite()) {
                        diverged[m][i] = 1;
                    }
                } catch (const DivergenceError&) {
                    diverged[m][i] = 1;
                }
            }
        });

        for (int v : resampled) {
            rr.resampled += v;
        }
        for (std::size_t m = 0; m < methods.size(); ++m) {
            MethodRangeResult res;
            std::vector<Matrix> ok_pred, ok_true;
            std::vector<std::size_t> ok_index;
            for (int i = 0; i < cfg.runs; ++i) {
                if (diverged[m][i]) {
                    ++res.diverged;
                } else {
                    ok_pred.push_back(preds[m][i]);
                    ok_true.push_back(truth[i]);
                    ok_index.push_back(static_cast<std::size_t>(i));
                }
            }
            res.per_run.assign(cfg.runs, std::numeric_limits<double>::infinity());
            if (!ok_pred.empty()) {
                const auto s = rmse_percent(ok_pred, ok_true);
                for (std::size_t k = 0; k < ok_index.size(); ++k) {
                    res.per_run[ok_index[k]] = s.per_run[k];
                }
            }
            double sum = 0.0;
            int used = 0;
            for (double v : res.per_run) {
                if (!std::isnan(v)) {
                    sum += v;
                    ++used;
                }
            }
            res.mean = used ? sum / used : std::numeric_limits<double>::quiet_NaN();
            rr.methods.push_back(std::move(res));
        }
        if (cfg.keep_series) {
            rr.truth = std::move(truth);
            rr.predictions = std::move(preds);
        }
        report.ranges.push_back(std::move(rr));
    }
    return report;
}

}  // namespace blskoop

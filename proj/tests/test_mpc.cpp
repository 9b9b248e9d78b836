#include <gtest/gtest.h>

#include "blskoop/mpc.hpp"
#include "test_util.hpp"

using namespace blskoop;
using namespace blskoop::testing;

namespace {

/// Predictor on the raw state (identity lift) with the given matrices.
KoopmanPredictor linear_predictor(const Matrix& A, const Matrix& B) {
    KoopmanPredictor p;
    p.lifter = BlsLifter::create(static_cast<int>(A.rows()), 0, 0, Activation::Tps, 1.0, 0);
    p.A = A;
    p.B = B;
    p.C = state_decoder(static_cast<int>(A.rows()), static_cast<int>(A.rows()));
    return p;
}

/// Predictor with a random lifted dimension E whose first n coordinates are the state.
KoopmanPredictor random_predictor(Rng& rng, int n, int E, int l) {
    KoopmanPredictor p;
    p.lifter = BlsLifter::create(n, E - n, 0, Activation::Tanh, 1.0, 1);
    p.A = random_stable(rng, E, rng.uniform(0.5, 1.1));
    p.B = random_matrix(rng, E, l);
    p.C = state_decoder(n, E);
    return p;
}

MpcConfig basic_config(const KoopmanPredictor& p, int horizon, const std::vector<int>& outputs) {
    MpcConfig c;
    c.horizon = horizon;
    c.output_selector = select_outputs(p, outputs);
    c.Q = Matrix::Identity(static_cast<Eigen::Index>(outputs.size()), static_cast<Eigen::Index>(outputs.size()));
    c.R = Matrix::Identity(p.input_dim(), p.input_dim());
    c.u_min = Vector::Constant(p.input_dim(), -1e6);
    c.u_max = Vector::Constant(p.input_dim(), 1e6);
    return c;
}

QpInstance random_qp(Rng& rng, Eigen::Index n, double box) {
    QpInstance qp;
    qp.S = random_spd(rng, n);
    qp.g = random_vector(rng, n, -3, 3);
    qp.lo = random_vector(rng, n, -box, 0);
    qp.hi = random_vector(rng, n, 0, box);
    return qp;
}

}  // namespace

TEST(SelectOutputs, PicksStateComponents) {
    const Matrix S = select_outputs(1105, 5, {0, 3});
    ASSERT_EQ(S.rows(), 2);
    ASSERT_EQ(S.cols(), 1105);
    EXPECT_EQ(S(0, 0), 1.0);
    EXPECT_EQ(S(1, 3), 1.0);
    EXPECT_EQ(S.sum(), 2.0);
    EXPECT_EQ(select_outputs(12, 5, {0, 1, 2, 3, 4}), state_decoder(5, 12));
    EXPECT_THROW(select_outputs(12, 5, {5}), DimensionError);
    EXPECT_THROW(select_outputs(12, 5, {-1}), DimensionError);

    const auto b = BlsLifter::create(5, 20, 10, Activation::Tps, 1.0, 2);
    Rng rng(61);
    const Vector x = random_vector(rng, 5);
    const Vector y = select_outputs(b.lifted_dim(), 5, {0, 3}) * b.lift(x);
    EXPECT_EQ(y(0), x(0));
    EXPECT_EQ(y(1), x(3));
}

// ---------------------------------------------------------------------------

TEST(Condense, SingleStepHorizon) {
    Rng rng(62);
    const auto p = random_predictor(rng, 2, 6, 1);
    const auto ch = condense(p, basic_config(p, 1, {0, 1}));
    EXPECT_LT((ch.Upsilon - p.C * p.A).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((ch.Omega - p.C * p.B).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Condense, IdentityDynamicsRepeatTheInputResponse) {
    Rng rng(63);
    const Matrix B = random_matrix(rng, 3, 2);
    const auto p = linear_predictor(Matrix::Identity(3, 3), B);
    const auto ch = condense(p, basic_config(p, 4, {0, 2}));
    const Matrix CB = select_outputs(p, {0, 2}) * B;
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            const Matrix blk = ch.Omega.block(i * 2, j * 2, 2, 2);
            EXPECT_EQ(blk, j <= i ? CB : Matrix::Zero(2, 2)) << i << "," << j;
        }
    }
}

TEST(Condense, MatrixPredictionEqualsRecursion) {
    Rng rng(64);
    for (int trial = 0; trial < 40; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform(0, 4));
        const int E = n + static_cast<int>(rng.uniform(0, 20));
        const int l = 1 + static_cast<int>(rng.uniform(0, 3));
        const int N = 1 + static_cast<int>(rng.uniform(0, 30));
        const auto p = random_predictor(rng, n, E, l);
        std::vector<int> outs;
        for (int i = 0; i < n; ++i) {
            if (rng.uniform01() < 0.7 || outs.empty()) {
                outs.push_back(i);
            }
        }
        const auto cfg = basic_config(p, N, outs);
        const auto ch = condense(p, cfg);
        const Vector z0 = random_vector(rng, E);
        const Vector U = random_vector(rng, l * N);
        const Vector stacked = ch.predict(z0, U);
        Vector z = z0;
        Vector rec(stacked.size());
        const auto no = static_cast<Eigen::Index>(outs.size());
        for (int i = 0; i < N; ++i) {
            z = p.A * z + p.B * U.segment(i * l, l);
            rec.segment(i * no, no) = cfg.output_selector * z;
        }
        EXPECT_LT((stacked - rec).norm() / std::max(1.0, rec.norm()), 1e-10) << "trial " << trial;
    }
}

TEST(Condense, RejectsInconsistentConfig) {
    Rng rng(65);
    const auto p = random_predictor(rng, 2, 5, 1);
    auto cfg = basic_config(p, 5, {0});
    cfg.horizon = 0;
    EXPECT_THROW(condense(p, cfg), ConfigError);
    cfg = basic_config(p, 5, {0});
    cfg.Q = Matrix::Identity(2, 2);
    EXPECT_THROW(condense(p, cfg), DimensionError);
    cfg = basic_config(p, 5, {0});
    cfg.R = -Matrix::Identity(1, 1);
    EXPECT_THROW(condense(p, cfg), ConfigError);
    cfg = basic_config(p, 5, {0});
    cfg.u_min = cfg.u_max;
    EXPECT_THROW(condense(p, cfg), ConfigError);
}

// ---------------------------------------------------------------------------

TEST(BuildQp, ScalarToyProblem) {
    // C A = 1, C B = 1, Q = R = 1, E_t = z0 - ref = -1.
    const auto p = linear_predictor(Matrix::Ones(1, 1), Matrix::Ones(1, 1));
    const auto cfg = basic_config(p, 1, {0});
    const auto ch = condense(p, cfg);
    const auto qp = build_qp(ch, Vector::Zero(1), Vector::Ones(1), cfg);
    EXPECT_DOUBLE_EQ(qp.S(0, 0), 4.0);
    EXPECT_DOUBLE_EQ(qp.g(0), -2.0);
    const auto sol = solve_box_qp(qp);
    EXPECT_NEAR(sol.u(0), 0.5, 1e-15);
    // Matches direct minimization of (z0 + U - ref)^2 + U^2.
    EXPECT_NEAR(sol.objective + qp.offset, 0.5, 1e-15);

    auto literal = cfg;
    literal.half_hessian = true;
    const auto qp2 = build_qp(ch, Vector::Zero(1), Vector::Ones(1), literal);
    EXPECT_DOUBLE_EQ(qp2.S(0, 0), 2.0);
    EXPECT_DOUBLE_EQ(qp2.g(0), -2.0);
    EXPECT_NEAR(solve_box_qp(qp2).u(0), 1.0, 1e-15);
}

TEST(BuildQp, OnTargetReferenceGivesZeroInput) {
    Rng rng(66);
    const auto p = random_predictor(rng, 3, 9, 2);
    const auto cfg = basic_config(p, 10, {0, 2});
    const auto ch = condense(p, cfg);
    const Vector z0 = random_vector(rng, 9);
    const auto qp = build_qp(ch, z0, ch.Upsilon * z0, cfg);
    EXPECT_LT(qp.g.cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT(solve_box_qp(qp).u.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(BuildQp, CondensedCostEqualsHorizonCost) {
    Rng rng(67);
    for (int trial = 0; trial < 20; ++trial) {
        const auto p = random_predictor(rng, 2, 7, 1);
        auto cfg = basic_config(p, 8, {0, 1});
        cfg.Q = random_spd(rng, 2);
        cfg.R = random_spd(rng, 1);
        const auto ch = condense(p, cfg);
        const Vector z0 = random_vector(rng, 7);
        const Vector ref = random_vector(rng, 16);
        const auto qp = build_qp(ch, z0, ref, cfg);
        EXPECT_LT((qp.S - qp.S.transpose()).cwiseAbs().maxCoeff(), 1e-12);
        const Vector U = random_vector(rng, 8);
        // sum_i (y_i - r_i)' Q (y_i - r_i) + u_i' R u_i
        const Vector e = ch.predict(z0, U) - ref;
        const double direct = e.dot(ch.Qbar * e) + U.dot(ch.Rbar * U);
        EXPECT_NEAR(qp.objective(U) + qp.offset, direct, 1e-9 * (1 + direct));
        const auto sol = solve_box_qp(qp);
        EXPECT_LE(qp.objective(sol.u), qp.objective(Vector::Zero(8)) + 1e-12);
    }
}

TEST(BuildQp, SoftOutputBoundPullsThePredictionTowardTheBound) {
    const auto p = linear_predictor(Matrix::Ones(1, 1), Matrix::Ones(1, 1));
    auto cfg = basic_config(p, 1, {0});
    cfg.y_max = Vector::Constant(1, 0.2);
    const auto ch = condense(p, cfg);
    const Vector ref = Vector::Ones(1);
    const Vector guess = Vector::Constant(1, 0.5);
    const double free_u = solve_box_qp(build_qp(ch, Vector::Zero(1), ref, cfg, &guess)).u(0);
    cfg.output_penalty = 100.0;
    const double soft_u = solve_box_qp(build_qp(ch, Vector::Zero(1), ref, cfg, &guess)).u(0);
    EXPECT_NEAR(free_u, 0.5, 1e-14);
    // Minimizer of (u - 1)^2 + u^2 + 100 (u - 0.2)^2.
    EXPECT_NEAR(soft_u, (1.0 + 100.0 * 0.2) / (2.0 + 100.0), 1e-12);
}

// ---------------------------------------------------------------------------

TEST(SolveBoxQp, OneDimensionalProjection) {
    QpInstance qp{Matrix::Constant(1, 1, 2.0), Vector::Constant(1, 4.0), Vector::Constant(1, -1.0),
                  Vector::Constant(1, 1.0)};
    const auto sol = solve_box_qp(qp);
    EXPECT_EQ(sol.u(0), -1.0);
    EXPECT_TRUE(sol.converged);
    qp.lo(0) = -10.0;
    EXPECT_NEAR(solve_box_qp(qp).u(0), -2.0, 1e-15);
}

TEST(SolveBoxQp, InactiveBoundsGiveTheNewtonSolution) {
    Rng rng(68);
    for (int trial = 0; trial < 100; ++trial) {
        const auto n = 1 + static_cast<Eigen::Index>(rng.uniform(0, 20));
        auto qp = random_qp(rng, n, 1.0);
        qp.lo.setConstant(-1e8);
        qp.hi.setConstant(1e8);
        const Vector newton = -qp.S.llt().solve(qp.g);
        const auto sol = solve_box_qp(qp);
        EXPECT_TRUE(sol.converged);
        EXPECT_LT((sol.u - newton).cwiseAbs().maxCoeff(), 1e-8 * (1 + newton.cwiseAbs().maxCoeff()));
    }
}

TEST(SolveBoxQp, FeasibleKktPointThatBeatsRandomFeasiblePoints) {
    Rng rng(69);
    for (int trial = 0; trial < 100; ++trial) {
        const auto n = 1 + static_cast<Eigen::Index>(rng.uniform(0, 20));
        const auto qp = random_qp(rng, n, rng.uniform(0.05, 2.0));
        const auto sol = solve_box_qp(qp, 1e-9);
        ASSERT_TRUE(sol.converged) << "trial " << trial;
        EXPECT_LT(sol.kkt_residual, 1e-9);
        EXPECT_TRUE((sol.u.array() >= qp.lo.array()).all());
        EXPECT_TRUE((sol.u.array() <= qp.hi.array()).all());
        for (int k = 0; k < 1000; ++k) {
            Vector v(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                v(i) = rng.uniform(qp.lo(i), qp.hi(i));
            }
            ASSERT_LE(sol.objective, qp.objective(v) + 1e-12);
        }
    }
}

TEST(SolveBoxQp, TwoDimensionalGridOracle) {
    Rng rng(70);
    for (int trial = 0; trial < 50; ++trial) {
        const auto qp = random_qp(rng, 2, rng.uniform(0.2, 2.0));
        const auto sol = solve_box_qp(qp);
        // 100 x 100 grid over the box, endpoints included.
        double best = std::numeric_limits<double>::infinity();
        Vector arg(2);
        for (int i = 0; i < 100; ++i) {
            for (int j = 0; j < 100; ++j) {
                Vector v(2);
                v << qp.lo(0) + (qp.hi(0) - qp.lo(0)) * i / 99.0, qp.lo(1) + (qp.hi(1) - qp.lo(1)) * j / 99.0;
                const double f = qp.objective(v);
                if (f < best) {
                    best = f;
                    arg = v;
                }
            }
        }
        EXPECT_LE(sol.objective, best + 1e-12);
        // Strong convexity: |v - u*|^2 <= 2 (f(v) - f(u*)) / lambda_min, plus one grid cell.
        const double lmin = Eigen::SelfAdjointEigenSolver<Matrix>(qp.S).eigenvalues()(0);
        const double cell = std::max(qp.hi(0) - qp.lo(0), qp.hi(1) - qp.lo(1)) / 99.0;
        EXPECT_LE((arg - sol.u).norm(), std::sqrt(2.0 * std::max(0.0, best - sol.objective) / lmin) + 1e-9);
        EXPECT_LE(best - sol.objective, qp.S.norm() * cell * cell + 1e-12);
    }
}

TEST(SolveBoxQp, FiveDimensionalGridOracle) {
    Rng rng(71);
    for (int trial = 0; trial < 5; ++trial) {
        const auto qp = random_qp(rng, 5, 1.0);
        const auto sol = solve_box_qp(qp);
        const int m = 11;
        double best = std::numeric_limits<double>::infinity();
        Vector v(5);
        std::array<int, 5> idx{};
        for (long long code = 0; code < 161051; ++code) {
            long long c = code;
            for (int d = 0; d < 5; ++d) {
                idx[d] = static_cast<int>(c % m);
                c /= m;
                v(d) = qp.lo(d) + (qp.hi(d) - qp.lo(d)) * idx[d] / (m - 1.0);
            }
            best = std::min(best, qp.objective(v));
        }
        EXPECT_LE(sol.objective, best + 1e-12);
    }
}

TEST(SolveBoxQp, WarmStartReachesTheSameSolution) {
    Rng rng(72);
    for (int trial = 0; trial < 30; ++trial) {
        const auto n = 2 + static_cast<Eigen::Index>(rng.uniform(0, 15));
        const auto qp = random_qp(rng, n, 0.5);
        const auto cold = solve_box_qp(qp);
        const Vector warm_guess = random_vector(rng, n, -5, 5);
        const auto warm = solve_box_qp(qp, 1e-9, 500, &warm_guess);
        EXPECT_LT((cold.u - warm.u).cwiseAbs().maxCoeff(), 1e-8);
        const auto again = solve_box_qp(qp, 1e-9, 500, &cold.u);
        EXPECT_LE(again.iterations, 1);
    }
}

TEST(SolveBoxQp, IterationCapReturnsAFeasibleNonConvergedIterate) {
    Rng rng(73);
    const auto qp = random_qp(rng, 12, 0.1);
    const auto sol = solve_box_qp(qp, 1e-9, 0);
    EXPECT_FALSE(sol.converged);
    EXPECT_TRUE((sol.u.array() >= qp.lo.array()).all() && (sol.u.array() <= qp.hi.array()).all());
}

TEST(SolveBoxQp, LargerInputPenaltyShrinksTheUnconstrainedSolution) {
    Rng rng(74);
    for (int trial = 0; trial < 50; ++trial) {
        const auto p = random_predictor(rng, 2, 6, 1);
        auto cfg = basic_config(p, 10, {0, 1});
        const auto ch = condense(p, cfg);
        const Vector z0 = random_vector(rng, 6);
        const Vector ref = random_vector(rng, 20);
        double prev2 = std::numeric_limits<double>::infinity();
        double prev_inf = std::numeric_limits<double>::infinity();
        for (double r : {0.01, 0.1, 1.0, 10.0, 100.0}) {
            cfg.R = Matrix::Constant(1, 1, r);
            auto c2 = condense(p, cfg);
            const auto u = solve_box_qp(build_qp(c2, z0, ref, cfg)).u;
            EXPECT_LE(u.norm(), prev2 * (1 + 1e-12));
            EXPECT_LE(u.cwiseAbs().maxCoeff(), prev_inf * (1 + 1e-12)) << "trial " << trial << " r " << r;
            prev2 = u.norm();
            prev_inf = u.cwiseAbs().maxCoeff();
        }
        (void)ch;
    }
}

// ---------------------------------------------------------------------------

namespace {

/// Damped oscillator x' = [[0,1],[-1,-0.5]] x + [0,1] u and its exact RK4 map.
struct LinearLoop {
    Matrix M = (Matrix(2, 2) << 0, 1, -1, -0.5).finished();
    Matrix N = (Matrix(2, 1) << 0, 1).finished();
    double dt = 0.05;
    Plant plant = make_linear_plant(M, N);

    KoopmanPredictor predictor() const {
        // RK4 on a linear field is linear; recover its matrices from basis vectors.
        Matrix A(2, 2), B(2, 1);
        for (int j = 0; j < 2; ++j) {
            A.col(j) = rk4_step(plant.rhs, Vector::Unit(2, j), Vector::Zero(1), 0.0, dt);
        }
        B.col(0) = rk4_step(plant.rhs, Vector::Zero(2), Vector::Ones(1), 0.0, dt);
        return linear_predictor(A, B);
    }

    MpcConfig config(const KoopmanPredictor& p) const {
        MpcConfig c = basic_config(p, 15, {0});
        c.Q = Matrix::Constant(1, 1, 10.0);
        c.R = Matrix::Constant(1, 1, 0.01);
        c.u_min = Vector::Constant(1, -5.0);
        c.u_max = Vector::Constant(1, 5.0);
        c.control_period = dt;
        c.integration_step = dt;
        return c;
    }
};

}  // namespace

TEST(RecedingHorizon, PerfectModelTrackingErrorDecays) {
    const LinearLoop sys;
    const auto pred = sys.predictor();
    const auto cfg = sys.config(pred);
    const auto log =
        run_receding_horizon(sys.plant, pred, cfg, constant_reference(Vector::Ones(1)), Vector::Zero(2), 20.0, 3);
    ASSERT_FALSE(log.aborted);
    ASSERT_EQ(log.rows.size(), 400u);
    // With R > 0 the offset-free target is x1 = 1 with steady input u = 1; the
    // cost trades a small offset for input. Error must shrink geometrically to it.
    std::vector<double> err;
    for (const auto& r : log.rows) {
        err.push_back(std::abs(r.state(0) - 1.0));
    }
    const double steady = err.back();
    EXPECT_LT(steady, 0.01);
    EXPECT_LT(std::abs(err[300] - steady), 1e-6);
    EXPECT_LT(std::abs(err[200] - steady), 1e-4);
    EXPECT_EQ(log.non_converged(), 0);
}

TEST(RecedingHorizon, HugeInputPenaltyLeavesThePlantOnItsNaturalDrift) {
    const LinearLoop sys;
    const auto pred = sys.predictor();
    auto cfg = sys.config(pred);
    cfg.R = Matrix::Constant(1, 1, 1e9);
    const Vector x0 = (Vector(2) << 1.0, 0.0).finished();
    const auto log = run_receding_horizon(sys.plant, pred, cfg, constant_reference(Vector::Zero(1)), x0, 5.0);
    Vector x = x0;
    for (std::size_t k = 0; k < log.rows.size(); ++k) {
        x = rk4_step(sys.plant.rhs, x, Vector::Zero(1), k * sys.dt, sys.dt);
        EXPECT_LT(std::abs(log.rows[k].input(0)), 1e-5);
        EXPECT_LT((log.rows[k].state - x).cwiseAbs().maxCoeff(), 1e-5);
    }
}

TEST(RecedingHorizon, AppliedInputsNeverLeaveTheBox) {
    const LinearLoop sys;
    const auto pred = sys.predictor();
    auto cfg = sys.config(pred);
    cfg.u_min(0) = -0.3;
    cfg.u_max(0) = 0.2;
    const auto log =
        run_receding_horizon(sys.plant, pred, cfg, constant_reference(Vector::Constant(1, 3.0)), Vector::Zero(2), 10.0);
    bool saturated = false;
    for (const auto& r : log.rows) {
        ASSERT_GE(r.input(0), -0.3);
        ASSERT_LE(r.input(0), 0.2);
        saturated |= r.input(0) == 0.2;
    }
    EXPECT_TRUE(saturated);
}

TEST(RecedingHorizon, SubstepsIntegrateWithinAControlPeriod) {
    const LinearLoop sys;
    const auto pred = sys.predictor();
    auto cfg = sys.config(pred);
    cfg.integration_step = sys.dt / 5.0;
    const auto log =
        run_receding_horizon(sys.plant, pred, cfg, constant_reference(Vector::Ones(1)), Vector::Zero(2), 1.0);
    ASSERT_EQ(log.rows.size(), 20u);
    EXPECT_NEAR(log.rows.back().t, 1.0, 1e-12);
    // Five RK4 substeps of the held input agree with one step to RK4 accuracy.
    Vector x = Vector::Zero(2);
    for (const auto& r : log.rows) {
        const Vector one = rk4_step(sys.plant.rhs, x, r.input, 0.0, sys.dt);
        EXPECT_LT((one - r.state).cwiseAbs().maxCoeff(), 1e-6);
        x = r.state;
    }
}

TEST(RecedingHorizon, DivergingPlantAbortsWithAPartialLog) {
    Plant blowup;
    blowup.name = "blowup";
    blowup.rhs = {1, 1, [](const Vector& x, const Vector&, double) -> Vector {
                      return (x.array().square() * 1e3).matrix();
                  }};
    const auto pred = linear_predictor(Matrix::Ones(1, 1), Matrix::Ones(1, 1));
    auto cfg = basic_config(pred, 3, {0});
    cfg.u_min(0) = -1;
    cfg.u_max(0) = 1;
    const auto log = run_receding_horizon(blowup, pred, cfg, constant_reference(Vector::Zero(1)),
                                          Vector::Constant(1, 10.0), 100.0);
    EXPECT_TRUE(log.aborted);
    EXPECT_FALSE(log.abort_reason.empty());
    EXPECT_LT(log.rows.size(), 10000u);
}

TEST(ClosedLoopLog, CsvLayoutAndSummary) {
    ClosedLoopLog log;
    for (int k = 1; k <= 5; ++k) {
        ClosedLoopRow r;
        r.t = 0.5 * k;
        r.state = (Vector(2) << 10.0 - 2.0 * k, 0.0).finished();
        r.input = Vector::Constant(1, k == 1 ? -0.4 : 0.1);
        r.cost = 1.0;
        r.qp_iterations = k;
        r.qp_converged = k != 3;
        log.rows.push_back(r);
    }
    const std::string csv = log.to_csv({"a", "b"}, {"u"});
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,a,b,u,cost");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
    EXPECT_EQ(log.non_converged(), 1);

    // States 8, 6, 4, 2, 0 against target 1 with band 1.5: inside from t = 2.0 (value 2).
    const auto s = summarize_tracking(log, 0, 1.0, 1.5);
    EXPECT_DOUBLE_EQ(s.settling_time, 2.0);
    EXPECT_DOUBLE_EQ(s.final_error, 1.0);
    EXPECT_DOUBLE_EQ(s.max_abs_input, 0.4);
    EXPECT_EQ(s.qp_non_converged, 1);
    EXPECT_EQ(s.qp_max_iterations, 5);
    EXPECT_DOUBLE_EQ(s.qp_mean_iterations, 3.0);
    EXPECT_TRUE(std::isnan(summarize_tracking(log, 0, 100.0, 1.0).settling_time));
}

#include <gtest/gtest.h>

#include "blskoop/koopman.hpp"
#include "test_util.hpp"

using namespace blskoop;
using namespace blskoop::testing;

namespace {

/// Snapshots of the discrete system x+ = M x + N u.
SnapshotDataset linear_dataset(const Matrix& M, const Matrix& N, int count, Rng& rng) {
    SnapshotDataset ds;
    ds.X = random_matrix(rng, M.rows(), count);
    ds.U = random_matrix(rng, N.cols(), count);
    ds.Y = M * ds.X + N * ds.U;
    ds.dt = 1.0;
    ds.meta.plant = "linear";
    return ds;
}

Lifter identity_lifter(int n) { return BlsLifter::create(n, 0, 0, Activation::Tps, 1.0, 0); }

SnapshotDataset vdp_dataset(std::uint64_t n_traj, std::uint64_t n_steps) {
    CollectOptions o;
    o.n_traj = n_traj;
    o.n_steps = n_steps;
    o.init_lo = Vector::Constant(2, -1.0);
    o.init_hi = Vector::Constant(2, 1.0);
    o.input_lo = Vector::Constant(1, -1.0);
    o.input_hi = Vector::Constant(1, 1.0);
    o.seed = 5;
    return collect_snapshots(make_vdp_plant(VdpVariant::KordaStandard), o);
}

}  // namespace

TEST(FitEdmd, RecoversAnExactLinearSystem) {
    Rng rng(51);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix M = random_stable(rng, 3);
        const Matrix N = random_matrix(rng, 3, 1);
        const auto ds = linear_dataset(M, N, 200, rng);
        const auto pred = fit_edmd(ds, identity_lifter(3), 0.0);
        EXPECT_LT((pred.A - M).cwiseAbs().maxCoeff(), 1e-8);
        EXPECT_LT((pred.B - N).cwiseAbs().maxCoeff(), 1e-8);
        EXPECT_LT(pred.training_residual, 1e-10);
    }
}

TEST(FitEdmd, DecoderIsIdentityOnTheStateBlock) {
    Rng rng(52);
    const auto ds = vdp_dataset(5, 20);
    const auto pred = fit_edmd(ds, BlsLifter::create(2, 30, 20, Activation::Tps, 1.0, 3), 1e-6);
    EXPECT_EQ(pred.C, state_decoder(2, 52));
    EXPECT_EQ(pred.C.leftCols(2), Matrix::Identity(2, 2));
    EXPECT_EQ(pred.C.rightCols(50), Matrix::Zero(2, 50));
    for (int i = 0; i < 100; ++i) {
        const Vector x = random_vector(rng, 2);
        EXPECT_EQ(pred.decode(pred.encode(x)), x);
    }
}

TEST(FitEdmd, SingleSnapshotIsInterpolatedExactly) {
    SnapshotDataset ds;
    ds.X = (Matrix(2, 1) << 0.3, -0.7).finished();
    ds.Y = (Matrix(2, 1) << 1.1, 0.4).finished();
    ds.U = (Matrix(1, 1) << 0.5).finished();
    ds.dt = 0.01;
    const auto pred = fit_edmd(ds, identity_lifter(2), 0.0);
    EXPECT_LT((pred.A * ds.X + pred.B * ds.U - ds.Y).norm(), 1e-14);
    // Minimum norm: [A B] = y [x; u]^T / ||[x; u]||^2.
    Vector xu(3);
    xu << 0.3, -0.7, 0.5;
    const Matrix K = ds.Y * xu.transpose() / xu.squaredNorm();
    EXPECT_LT((pred.A - K.leftCols(2)).norm(), 1e-14);
    EXPECT_LT((pred.B - K.rightCols(1)).norm(), 1e-14);
}

TEST(FitEdmd, LeastSquaresOptimalityUnderPerturbation) {
    Rng rng(53);
    const auto ds = vdp_dataset(10, 30);
    const auto pred = fit_edmd(ds, BlsLifter::create(2, 8, 6, Activation::Tanh, 1.0, 4), 0.0);
    const auto base = evaluate_fit(pred, ds).lifted_residual;
    for (int i = 0; i < 200; ++i) {
        KoopmanPredictor p = pred;
        const double eps = std::pow(10.0, rng.uniform(-8, -2));
        p.A += eps * random_matrix(rng, p.A.rows(), p.A.cols());
        p.B += eps * random_matrix(rng, p.B.rows(), p.B.cols());
        EXPECT_GE(evaluate_fit(p, ds).lifted_residual, base * (1.0 - 1e-12));
    }
}

TEST(FitEdmd, StreamedRidgeMatchesDenseRidge) {
    const auto ds = vdp_dataset(6, 40);
    const Lifter lifter = BlsLifter::create(2, 12, 9, Activation::Tps, 1.0, 8);
    const auto streamed = fit_edmd(ds, lifter, 1e-4, 37);
    Matrix L(24, ds.size());
    L.topRows(23) = lift_columns(lifter, ds.X);
    L.bottomRows(1) = ds.U;
    const Matrix K = ridge_right_solve(L, lift_columns(lifter, ds.Y), 1e-4);
    EXPECT_LT(rel_err(streamed.A, K.leftCols(23)), 1e-9);
    EXPECT_LT(rel_err(streamed.B, K.rightCols(1)), 1e-9);
}

TEST(FitEdmd, RejectsEmptyOrMismatchedData) {
    SnapshotDataset empty;
    empty.X.resize(2, 0);
    empty.Y.resize(2, 0);
    empty.U.resize(1, 0);
    EXPECT_THROW(fit_edmd(empty, identity_lifter(2), 0.0), Error);
    Rng rng(54);
    const auto ds = linear_dataset(Matrix::Identity(3, 3), Matrix::Ones(3, 1), 5, rng);
    EXPECT_THROW(fit_edmd(ds, identity_lifter(2), 0.0), DimensionError);
}

// ---------------------------------------------------------------------------

TEST(TrainBlsEdmd, LinearDataNeedsNoGrowth) {
    Rng rng(55);
    const auto ds = linear_dataset(random_stable(rng, 2), random_matrix(rng, 2, 1), 100, rng);
    TrainOptions opt;
    opt.init_nz = 0;
    opt.init_nh = 0;
    opt.max_dim = 100;
    opt.lambda = 0.0;
    opt.epsilon = 1e-12;
    const auto r = train_bls_edmd(ds, opt);
    EXPECT_EQ(r.trace.size(), 1u);
    EXPECT_TRUE(r.reached_epsilon);
    EXPECT_FALSE(r.budget_exhausted);
    EXPECT_LT(r.predictor.training_state_mse, 1e-20);
}

TEST(TrainBlsEdmd, InfiniteEpsilonStopsAfterTheFirstFit) {
    const auto ds = vdp_dataset(5, 20);
    TrainOptions opt;
    opt.init_nz = 10;
    opt.init_nh = 10;
    opt.epsilon = std::numeric_limits<double>::infinity();
    opt.max_dim = 1000;
    const auto r = train_bls_edmd(ds, opt);
    EXPECT_EQ(r.trace.size(), 1u);
    EXPECT_TRUE(r.reached_epsilon);
}

TEST(TrainBlsEdmd, GrowthPathIncreasesNodesAndNeverWorsensTheStateError) {
    const auto ds = vdp_dataset(30, 100);
    TrainOptions opt;
    opt.init_nz = 10;
    opt.init_nh = 10;
    opt.growth_z = 10;
    opt.growth_h = 10;
    opt.epsilon = 1e-30;
    opt.lambda = 0.0;
    opt.max_dim = 2 + 20 + 4 * 20;
    const auto r = train_bls_edmd(ds, opt);
    ASSERT_EQ(r.trace.size(), 5u);
    EXPECT_TRUE(r.budget_exhausted);
    EXPECT_FALSE(r.reached_epsilon);
    for (std::size_t s = 1; s < r.trace.size(); ++s) {
        EXPECT_EQ(r.trace[s].n_z, r.trace[s - 1].n_z + 10);
        EXPECT_EQ(r.trace[s].n_h, r.trace[s - 1].n_h + 10);
        EXPECT_LE(r.trace[s].error, r.trace[s - 1].error * (1.0 + 1e-9));
    }
    EXPECT_LT(r.trace.back().error, r.trace.front().error);
    EXPECT_EQ(r.predictor.training_state_mse, r.trace.back().error);
}

TEST(TrainBlsEdmd, InitialSizeBeyondBudgetIsAConfigError) {
    const auto ds = vdp_dataset(2, 10);
    TrainOptions opt;
    opt.init_nz = 10;
    opt.init_nh = 10;
    opt.max_dim = 5;
    EXPECT_THROW(train_bls_edmd(ds, opt), ConfigError);
    opt.max_dim = 100;
    opt.epsilon = 0.0;
    EXPECT_THROW(train_bls_edmd(ds, opt), ConfigError);
}

// ---------------------------------------------------------------------------

TEST(PredictRollout, IdentityDynamicsHoldTheInitialState) {
    KoopmanPredictor p;
    p.lifter = identity_lifter(2);
    p.A = Matrix::Identity(2, 2);
    p.B = Matrix::Zero(2, 1);
    p.C = state_decoder(2, 2);
    const Vector x0 = (Vector(2) << 0.25, -1.5).finished();
    const Matrix Y = predict_rollout(p, x0, Matrix::Ones(1, 30));
    for (Eigen::Index k = 0; k < 30; ++k) {
        EXPECT_EQ(Y.col(k), x0);
    }
}

TEST(PredictRollout, FirstStepIsOneApplicationOfThePredictor) {
    const auto ds = vdp_dataset(5, 20);
    const auto pred = fit_edmd(ds, BlsLifter::create(2, 15, 10, Activation::Tps, 1.0, 3), 1e-6);
    const Vector x0 = (Vector(2) << 0.1, 0.2).finished();
    const Matrix u = (Matrix(1, 1) << 0.7).finished();
    const Vector direct = pred.C * (pred.A * pred.encode(x0) + pred.B * u.col(0));
    EXPECT_LT((predict_rollout(pred, x0, u).col(0) - direct).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(PredictRollout, ExactLinearPredictorTracksThePlant) {
    Rng rng(56);
    const Matrix M = random_stable(rng, 3, 0.95);
    const Matrix N = random_matrix(rng, 3, 1);
    const auto pred = fit_edmd(linear_dataset(M, N, 100, rng), identity_lifter(3), 0.0);
    const Vector x0 = random_vector(rng, 3);
    const Matrix u = random_matrix(rng, 1, 100);
    const Matrix Y = predict_rollout(pred, x0, u);
    Vector x = x0;
    for (Eigen::Index k = 0; k < 100; ++k) {
        x = M * x + N * u.col(k);
        EXPECT_LT((Y.col(k) - x).cwiseAbs().maxCoeff(), 1e-6);
    }
}

TEST(PredictRollout, LiftedSuperposition) {
    Rng rng(57);
    const auto ds = vdp_dataset(5, 20);
    const auto pred = fit_edmd(ds, BlsLifter::create(2, 15, 10, Activation::Tps, 1.0, 3), 1e-6);
    const Vector z0 = pred.encode(random_vector(rng, 2));
    const Matrix u1 = random_matrix(rng, 1, 25);
    const Matrix u2 = random_matrix(rng, 1, 25);
    const Matrix zero = Matrix::Zero(1, 25);
    // z(u1 + u2) = z(u1) + z(u2) - z(0) for a shared initial lift.
    const Matrix lhs = rollout_lifted(pred, z0, u1 + u2);
    const Matrix rhs = rollout_lifted(pred, z0, u1) + rollout_lifted(pred, z0, u2) - rollout_lifted(pred, z0, zero);
    EXPECT_LT(rel_err(lhs, rhs), 1e-10);
}

TEST(PredictRollout, UnstablePredictorReportsTheDivergenceStep) {
    KoopmanPredictor p;
    p.lifter = identity_lifter(1);
    p.A = Matrix::Constant(1, 1, 1e100);
    p.B = Matrix::Zero(1, 1);
    p.C = state_decoder(1, 1);
    try {
        predict_rollout(p, Vector::Ones(1), Matrix::Zero(1, 10));
        FAIL();
    } catch (const DivergenceError& e) {
        EXPECT_EQ(e.step(), 4);
    }
}

// ---------------------------------------------------------------------------

TEST(RmsePercent, ZeroForPerfectPrediction) {
    Rng rng(58);
    std::vector<Matrix> t{random_matrix(rng, 2, 10), random_matrix(rng, 2, 10)};
    EXPECT_EQ(rmse_percent(t, t).percent, 0.0);
}

TEST(RmsePercent, DoubledPredictionIsOneHundredPercent) {
    Rng rng(59);
    std::vector<Matrix> t, p;
    for (int i = 0; i < 5; ++i) {
        t.push_back(random_matrix(rng, 2, 10));
        p.push_back(2.0 * t.back());
    }
    EXPECT_NEAR(rmse_percent(p, t).percent, 100.0, 1e-12);
}

TEST(RmsePercent, HandComputedTwoRunAverage) {
    const std::vector<Matrix> t{Matrix::Constant(1, 4, 1.0), Matrix::Constant(1, 1, 2.0)};
    const std::vector<Matrix> p{Matrix::Constant(1, 4, 1.5), Matrix::Constant(1, 1, 2.0)};
    // Run 1: sqrt(4 * 0.25 / 4) = 0.5; run 2: 0. Mean 25 %.
    const auto s = rmse_percent(p, t);
    EXPECT_NEAR(s.percent, 25.0, 1e-12);
    EXPECT_NEAR(s.per_run[0], 50.0, 1e-12);
}

TEST(RmsePercent, ScaleAndRotationInvariant) {
    Rng rng(60);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Matrix> t, p, ts, ps, tr, pr;
        const Matrix Qr = Eigen::HouseholderQR<Matrix>(random_matrix(rng, 3, 3)).householderQ();
        const double c = rng.uniform(0.1, 10);
        for (int i = 0; i < 4; ++i) {
            t.push_back(random_matrix(rng, 3, 8));
            p.push_back(t.back() + 0.3 * random_matrix(rng, 3, 8));
            ts.push_back(c * t.back());
            ps.push_back(c * p.back());
            tr.push_back(Qr * t.back());
            pr.push_back(Qr * p.back());
        }
        const double base = rmse_percent(p, t).percent;
        EXPECT_NEAR(rmse_percent(ps, ts).percent, base, 1e-10 * base);
        EXPECT_NEAR(rmse_percent(pr, tr).percent, base, 1e-10 * base);
    }
}

TEST(RmsePercent, ZeroNormRunsAreExcluded) {
    const std::vector<Matrix> t{Matrix::Zero(1, 3), Matrix::Ones(1, 3)};
    const std::vector<Matrix> p{Matrix::Ones(1, 3), Matrix::Ones(1, 3)};
    const auto s = rmse_percent(p, t);
    EXPECT_EQ(s.excluded, std::vector<std::size_t>{0});
    EXPECT_EQ(s.percent, 0.0);
    EXPECT_THROW(rmse_percent({Matrix::Ones(1, 3)}, {Matrix::Zero(1, 3)}), Error);
    EXPECT_THROW(rmse_percent({Matrix::Ones(1, 3)}, {Matrix::Ones(1, 4)}), DimensionError);
}

// ---------------------------------------------------------------------------

TEST(PredictorFile, RoundTripIsBitExact) {
    const auto ds = vdp_dataset(3, 10);
    const auto pred = fit_edmd(ds, BlsLifter::create(2, 7, 5, Activation::Tps, 1.0, 3), 1e-6);
    const auto path = temp_path("pred.bkpr");
    save_predictor(pred, path.string());
    const auto back = load_predictor(path.string());
    EXPECT_EQ(back.A, pred.A);
    EXPECT_EQ(back.B, pred.B);
    EXPECT_EQ(back.C, pred.C);
    EXPECT_EQ(back.lambda, pred.lambda);
    EXPECT_EQ(back.training_residual, pred.training_residual);
    EXPECT_EQ(back.lifter, pred.lifter);
}

TEST(PredictorFile, TruncatedFileIsRejected) {
    const auto ds = vdp_dataset(3, 10);
    const auto pred = fit_edmd(ds, TpsRbfLifter::random(Vector::Constant(2, -1), Vector::Ones(2), 4, 1), 1e-6);
    const auto path = temp_path("pred_trunc.bkpr");
    save_predictor(pred, path.string());
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 9);
    EXPECT_THROW(load_predictor(path.string()), FormatError);
}

// ---------------------------------------------------------------------------

TEST(Benchmark, TruthAgainstItselfScoresZero) {
    const Plant plant = make_vdp_plant(VdpVariant::AsPrinted);
    BenchmarkConfig cfg;
    cfg.runs = 5;
    cfg.ranges = {{1.0, 0.5}, {0.5, 0.3}};
    const auto rep = benchmark_predictors(plant, {truth_method(plant, cfg.dt, "bls")}, cfg);
    for (const auto& r : rep.ranges) {
        EXPECT_EQ(r.methods[0].mean, 0.0);
        EXPECT_EQ(r.methods[0].per_run.size(), 5u);
    }
}

TEST(Benchmark, SingleRunReportEqualsThatRun) {
    const Plant plant = make_vdp_plant(VdpVariant::KordaStandard);
    BenchmarkConfig cfg;
    cfg.runs = 1;
    cfg.ranges = {{0.5, 0.5}};
    const auto rep = benchmark_predictors(plant, {local_linearization_method(plant, cfg.dt)}, cfg);
    EXPECT_EQ(rep.ranges[0].methods[0].mean, rep.ranges[0].methods[0].per_run[0]);
    EXPECT_GT(rep.ranges[0].methods[0].mean, 0.0);
}

TEST(Benchmark, MeanIsTheAverageOfPerRunValuesAndOutputIsStable) {
    const Plant plant = make_vdp_plant(VdpVariant::KordaStandard);
    BenchmarkConfig cfg;
    cfg.runs = 8;
    cfg.ranges = {{0.8, 0.4}};
    const auto methods = std::vector<NamedPredictor>{local_linearization_method(plant, cfg.dt)};
    const auto a = benchmark_predictors(plant, methods, cfg);
    const auto& r = a.ranges[0].methods[0];
    double sum = 0.0;
    for (double v : r.per_run) {
        sum += v;
    }
    EXPECT_NEAR(r.mean, sum / 8.0, 1e-12);
    cfg.jobs = 3;
    const auto b = benchmark_predictors(plant, methods, cfg);
    EXPECT_EQ(a.table_csv(), b.table_csv());
    EXPECT_EQ(a.runs_csv(), b.runs_csv());
    EXPECT_EQ(a.table_csv().substr(0, 6), "method");
}

TEST(Benchmark, LocalLinearizationIsExactOnALinearPlant) {
    const Matrix M = (Matrix(2, 2) << 0, 1, -2, -0.5).finished();
    const Matrix N = (Matrix(2, 1) << 0, 1).finished();
    const Plant plant = make_linear_plant(M, N);
    BenchmarkConfig cfg;
    cfg.runs = 4;
    cfg.ranges = {{1.0, 1.0}};
    const auto rep = benchmark_predictors(plant, {local_linearization_method(plant, cfg.dt, 1e-5)}, cfg);
    EXPECT_LT(rep.ranges[0].methods[0].mean, 1e-6);
}

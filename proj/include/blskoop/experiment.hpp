#pragma once

// Experiment configuration and the end-to-end pipelines behind the CLI:
// collect -> train -> benchmark (van der Pol) and collect -> train -> MPC (DSRV).
//
// All knobs live in one flat key = value namespace. A resolved config can be
// written back out (to_kv) and reproduces the run exactly.

#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "blskoop/config.hpp"
#include "blskoop/data.hpp"
#include "blskoop/koopman.hpp"
#include "blskoop/lifting.hpp"
#include "blskoop/mpc.hpp"
#include "blskoop/systems.hpp"

namespace blskoop {

inline double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

inline std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out += (i ? "," : "") + v[i];
    }
    return out;
}

inline Vector std_to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace detail

struct ExperimentConfig {
    std::string plant = "vdp";
    VdpVariant vdp_variant = VdpVariant::KordaStandard;
    DsrvParameters dsrv;
    std::uint64_t seed = 1;

    // dataset
    std::uint64_t n_traj = 500;
    std::uint64_t n_steps = 300;
    double dt = 0.01;
    std::uint64_t dataset_seed = 1;
    Vector init_lo, init_hi, input_lo, input_hi;
    bool per_trajectory_input = false;

    // lifter
    std::string lifter_kind = "bls";  // bls | tps
    int n_z = 600;
    int n_h = 400;
    Activation activation = Activation::Tps;
    double weight_scale = 1.0;
    std::uint64_t lifter_seed = 2;
    std::string normalize = "none";  // none | init-box
    int centers = 100;
    std::uint64_t centers_seed = 4;

    // training
    double lambda = 1e-6;
    double epsilon = 1e-6;
    int growth_z = 100;
    int growth_h = 100;
    int max_dim = 1002;

    // van der Pol benchmark
    std::vector<double> bench_ranges{1.0, 0.5, 0.8};
    std::vector<double> bench_horizons{3.0, 1.0, 3.0};
    int bench_runs = 50;
    std::uint64_t bench_seed = 3;
    double wave_period = 0.3;
    double wave_amplitude = 1.0;
    std::vector<std::string> bench_methods{"bls", "local", "edmd"};
    double fd_step = 1e-6;

    // MPC
    int horizon = 20;
    Vector q_diag;
    double r_weight = 0.1;
    double rudder_limit_deg = 30.0;
    std::vector<int> outputs{0, 3};
    Vector reference;
    Vector x0;
    double duration = 300.0;
    double control_period = 0.01;
    double qp_tol = 1e-9;
    int qp_max_iter = 500;
    bool half_hessian = false;
    std::optional<Vector> y_min, y_max;
    double output_penalty = 0.0;
    double settle_band = 1.0;
    double max_nonconverged_fraction = 0.01;

    unsigned jobs = 1;

    int state_dim() const { return plant == "dsrv" ? 5 : 2; }

    Plant make_plant() const {
        if (plant == "vdp") {
            return make_vdp_plant(vdp_variant);
        }
        if (plant == "dsrv") {
            return make_dsrv_plant(dsrv);
        }
        throw ConfigError("unknown plant '" + plant + "' (expected vdp or dsrv)");
    }

    /// Resolves every setting from `kv`, using per-plant defaults for anything
    /// not given.
    static ExperimentConfig from(const KeyValueConfig& kv) {
        ExperimentConfig c;
        c.plant = kv.get_string("plant", "vdp");
        if (c.plant != "vdp" && c.plant != "dsrv") {
            throw ConfigError("unknown plant '" + c.plant + "' (expected vdp or dsrv)");
        }
        const bool dsrv = c.plant == "dsrv";
        c.vdp_variant = parse_vdp_variant(kv.get_string("plant.variant", "korda-standard"));
        c.dsrv = DsrvParameters::from_config(kv);
        c.seed = static_cast<std::uint64_t>(kv.get_int("seed", 1));

        c.n_traj = static_cast<std::uint64_t>(kv.get_int("dataset.n_traj", 500));
        c.n_steps = static_cast<std::uint64_t>(kv.get_int("dataset.n_steps", 300));
        c.dt = kv.get_double("dataset.dt", 0.01);
        c.dataset_seed = static_cast<std::uint64_t>(kv.get_int("dataset.seed", static_cast<long long>(c.seed)));
        const double rud = deg_to_rad(kv.get_double("mpc.rudder_limit_deg", 30.0));
        if (dsrv) {
            Vector lo(5), hi(5);
            lo << -1.0, -0.5, 0.0, -10.0, -0.6;
            hi << 1.0, 0.5, 1300.0, 70.0, 0.6;
            c.init_lo = kv.get_vector("dataset.init_lo", lo);
            c.init_hi = kv.get_vector("dataset.init_hi", hi);
            c.input_lo = kv.get_vector("dataset.input_lo", Vector::Constant(1, -deg_to_rad(30.0)));
            c.input_hi = kv.get_vector("dataset.input_hi", Vector::Constant(1, deg_to_rad(30.0)));
        } else {
            c.init_lo = kv.get_vector("dataset.init_lo", Vector::Constant(2, -1.0));
            c.init_hi = kv.get_vector("dataset.init_hi", Vector::Constant(2, 1.0));
            c.input_lo = kv.get_vector("dataset.input_lo", Vector::Constant(1, -1.0));
            c.input_hi = kv.get_vector("dataset.input_hi", Vector::Constant(1, 1.0));
        }
        const auto mode = kv.get_string("dataset.input_mode", "per-step");
        if (mode != "per-step" && mode != "per-trajectory") {
            throw ConfigError("dataset.input_mode must be per-step or per-trajectory");
        }
        c.per_trajectory_input = mode == "per-trajectory";

        c.lifter_kind = kv.get_string("lifter.kind", "bls");
        if (c.lifter_kind != "bls" && c.lifter_kind != "tps") {
            throw ConfigError("lifter.kind must be bls or tps");
        }
        c.n_z = static_cast<int>(kv.get_int("lifter.n_z", dsrv ? 700 : 600));
        c.n_h = static_cast<int>(kv.get_int("lifter.n_h", 400));
        c.activation = parse_activation(kv.get_string("lifter.activation", "tps"));
        c.weight_scale = kv.get_double("lifter.scale", 1.0);
        c.lifter_seed = static_cast<std::uint64_t>(kv.get_int("lifter.seed", static_cast<long long>(c.seed + 1)));
        c.normalize = kv.get_string("lifter.normalize", dsrv ? "init-box" : "none");
        if (c.normalize != "none" && c.normalize != "init-box") {
            throw ConfigError("lifter.normalize must be none or init-box");
        }
        c.centers = static_cast<int>(kv.get_int("lifter.centers", 100));
        c.centers_seed = static_cast<std::uint64_t>(kv.get_int("lifter.centers_seed", static_cast<long long>(c.seed + 3)));

        c.lambda = kv.get_double("train.lambda", 1e-6);
        c.epsilon = kv.get_double("train.epsilon", 1e-6);
        c.growth_z = static_cast<int>(kv.get_int("train.growth_z", 100));
        c.growth_h = static_cast<int>(kv.get_int("train.growth_h", 100));
        c.max_dim = static_cast<int>(kv.get_int("train.max_dim", c.state_dim() + c.n_z + c.n_h));

        auto doubles = [&](const std::string& key, const std::vector<double>& fallback) {
            const Vector v = kv.get_vector(key, detail::std_to_vector(fallback));
            return std::vector<double>(v.data(), v.data() + v.size());
        };
        c.bench_ranges = doubles("bench.ranges", {1.0, 0.5, 0.8});
        c.bench_horizons = doubles("bench.horizons", {3.0, 1.0, 3.0});
        if (c.bench_ranges.size() != c.bench_horizons.size()) {
            throw ConfigError("bench.ranges and bench.horizons must have the same length");
        }
        c.bench_runs = static_cast<int>(kv.get_int("bench.runs", 50));
        c.bench_seed = static_cast<std::uint64_t>(kv.get_int("bench.seed", static_cast<long long>(c.seed + 2)));
        c.wave_period = kv.get_double("bench.wave_period", 0.3);
        c.wave_amplitude = kv.get_double("bench.wave_amplitude", 1.0);
        c.bench_methods = detail::split_list(kv.get_string("bench.methods", "bls,local,edmd"));
        for (const auto& m : c.bench_methods) {
            if (m != "bls" && m != "local" && m != "edmd" && m != "truth") {
                throw ConfigError("unknown benchmark method '" + m + "'");
            }
        }
        c.fd_step = kv.get_double("bench.fd_step", 1e-6);

        c.horizon = static_cast<int>(kv.get_int("mpc.horizon", 20));
        Vector q(2);
        q << 10.0, 50.0;
        c.q_diag = kv.get_vector("mpc.q", q);
        c.r_weight = kv.get_double("mpc.r", 0.1);
        c.rudder_limit_deg = rad_to_deg_checked(rud);
        {
            const Vector o = kv.get_vector("mpc.outputs", Vector((Vector(2) << 0, 3).finished()));
            c.outputs.clear();
            for (Eigen::Index i = 0; i < o.size(); ++i) {
                c.outputs.push_back(static_cast<int>(o(i)));
            }
        }
        c.reference = kv.get_vector("mpc.reference", Vector((Vector(2) << 0.0, 50.0).finished()));
        c.x0 = kv.get_vector("mpc.x0", Vector((Vector(5) << 0.2, 0.0, 0.0, 0.1, 0.0).finished()));
        c.duration = kv.get_double("mpc.duration", 300.0);
        c.control_period = kv.get_double("mpc.control_period", c.dt);
        c.qp_tol = kv.get_double("mpc.qp_tol", 1e-9);
        c.qp_max_iter = static_cast<int>(kv.get_int("mpc.qp_max_iter", 500));
        c.half_hessian = kv.get_bool("mpc.half_hessian", false);
        if (kv.has("mpc.y_min")) {
            c.y_min = kv.get_vector("mpc.y_min", {});
        }
        if (kv.has("mpc.y_max")) {
            c.y_max = kv.get_vector("mpc.y_max", {});
        }
        c.output_penalty = kv.get_double("mpc.output_penalty", 0.0);
        c.settle_band = kv.get_double("mpc.settle_band", 1.0);
        c.max_nonconverged_fraction = kv.get_double("mpc.max_nonconverged_fraction", 0.01);

        c.jobs = static_cast<unsigned>(std::max<long long>(1, kv.get_int("jobs", 1)));
        return c;
    }

    /// Full echo of the resolved configuration.
    KeyValueConfig to_kv() const {
        KeyValueConfig kv;
        kv.set("plant", plant);
        kv.set("plant.variant", to_string(vdp_variant));
        dsrv.to_config(kv);
        kv.set("seed", static_cast<long long>(seed));
        kv.set("dataset.n_traj", static_cast<long long>(n_traj));
        kv.set("dataset.n_steps", static_cast<long long>(n_steps));
        kv.set("dataset.dt", dt);
        kv.set("dataset.seed", static_cast<long long>(dataset_seed));
        kv.set("dataset.init_lo", init_lo);
        kv.set("dataset.init_hi", init_hi);
        kv.set("dataset.input_lo", input_lo);
        kv.set("dataset.input_hi", input_hi);
        kv.set("dataset.input_mode", std::string(per_trajectory_input ? "per-trajectory" : "per-step"));
        kv.set("lifter.kind", lifter_kind);
        kv.set("lifter.n_z", n_z);
        kv.set("lifter.n_h", n_h);
        kv.set("lifter.activation", to_string(activation));
        kv.set("lifter.scale", weight_scale);
        kv.set("lifter.seed", static_cast<long long>(lifter_seed));
        kv.set("lifter.normalize", normalize);
        kv.set("lifter.centers", centers);
        kv.set("lifter.centers_seed", static_cast<long long>(centers_seed));
        kv.set("train.lambda", lambda);
        kv.set("train.epsilon", epsilon);
        kv.set("train.growth_z", growth_z);
        kv.set("train.growth_h", growth_h);
        kv.set("train.max_dim", max_dim);
        kv.set("bench.ranges", detail::std_to_vector(bench_ranges));
        kv.set("bench.horizons", detail::std_to_vector(bench_horizons));
        kv.set("bench.runs", bench_runs);
        kv.set("bench.seed", static_cast<long long>(bench_seed));
        kv.set("bench.wave_period", wave_period);
        kv.set("bench.wave_amplitude", wave_amplitude);
        kv.set("bench.methods", detail::join(bench_methods));
        kv.set("bench.fd_step", fd_step);
        kv.set("mpc.horizon", horizon);
        kv.set("mpc.q", q_diag);
        kv.set("mpc.r", r_weight);
        kv.set("mpc.rudder_limit_deg", rudder_limit_deg);
        {
            Vector o(static_cast<Eigen::Index>(outputs.size()));
            for (std::size_t i = 0; i < outputs.size(); ++i) {
                o(static_cast<Eigen::Index>(i)) = outputs[i];
            }
            kv.set("mpc.outputs", o);
        }
        kv.set("mpc.reference", reference);
        kv.set("mpc.x0", x0);
        kv.set("mpc.duration", duration);
        kv.set("mpc.control_period", control_period);
        kv.set("mpc.qp_tol", qp_tol);
        kv.set("mpc.qp_max_iter", qp_max_iter);
        kv.set("mpc.half_hessian", half_hessian);
        if (y_min) {
            kv.set("mpc.y_min", *y_min);
        }
        if (y_max) {
            kv.set("mpc.y_max", *y_max);
        }
        kv.set("mpc.output_penalty", output_penalty);
        kv.set("mpc.settle_band", settle_band);
        kv.set("mpc.max_nonconverged_fraction", max_nonconverged_fraction);
        kv.set("jobs", static_cast<long long>(jobs));
        return kv;
    }

private:
    static double rad_to_deg_checked(double rad) {
        const double deg = rad * 180.0 / std::numbers::pi;
        if (!(deg > 0.0)) {
            throw ConfigError("mpc.rudder_limit_deg must be positive");
        }
        return deg;
    }
};

// ---------------------------------------------------------------------------
// Pipeline pieces

inline CollectOptions collect_options(const ExperimentConfig& c) {
    CollectOptions o;
    o.n_traj = c.n_traj;
    o.n_steps = c.n_steps;
    o.dt = c.dt;
    o.init_lo = c.init_lo;
    o.init_hi = c.init_hi;
    o.input_lo = c.input_lo;
    o.input_hi = c.input_hi;
    o.seed = c.dataset_seed;
    o.per_trajectory_input = c.per_trajectory_input;
    o.jobs = c.jobs;
    return o;
}

inline SnapshotDataset collect(const ExperimentConfig& c) { return collect_snapshots(c.make_plant(), collect_options(c)); }

inline TrainOptions train_options(const ExperimentConfig& c) {
    TrainOptions t;
    t.init_nz = c.n_z;
    t.init_nh = c.n_h;
    t.epsilon = c.epsilon;
    t.growth_z = c.growth_z;
    t.growth_h = c.growth_h;
    t.max_dim = c.max_dim;
    t.lambda = c.lambda;
    t.seed = c.lifter_seed;
    t.activation = c.activation;
    t.scale = c.weight_scale;
    if (c.normalize == "init-box") {
        t.center = 0.5 * (c.init_lo + c.init_hi);
        t.halfwidth = (0.5 * (c.init_hi - c.init_lo)).cwiseMax(1e-12);
    }
    return t;
}

inline TpsRbfLifter edmd_lifter(const ExperimentConfig& c) {
    return TpsRbfLifter::random(c.init_lo, c.init_hi, c.centers, c.centers_seed);
}

/// Trains whichever predictor `lifter_kind` selects.
inline TrainResult train_predictor(const ExperimentConfig& c, const SnapshotDataset& ds) {
    if (c.lifter_kind == "tps") {
        TrainResult r;
        r.predictor = fit_edmd(ds, edmd_lifter(c), c.lambda);
        r.trace.push_back({0, 0, r.predictor.lifted_dim(), r.predictor.training_state_mse,
                           r.predictor.training_residual});
        r.reached_epsilon = r.predictor.training_state_mse < c.epsilon;
        return r;
    }
    return train_bls_edmd(ds, train_options(c));
}

inline nlohmann::json train_report_json(const TrainResult& r) {
    nlohmann::json j;
    j["lifted_dim"] = r.predictor.lifted_dim();
    j["lifter"] = lifter_kind(r.predictor.lifter);
    j["lambda"] = r.predictor.lambda;
    j["training_residual"] = r.predictor.training_residual;
    j["training_state_mse"] = r.predictor.training_state_mse;
    j["reached_epsilon"] = r.reached_epsilon;
    j["budget_exhausted"] = r.budget_exhausted;
    for (const auto& s : r.trace) {
        j["growth_trace"].push_back(
            {{"n_z", s.n_z}, {"n_h", s.n_h}, {"lifted_dim", s.lifted_dim}, {"error", s.error}, {"residual", s.residual}});
    }
    return j;
}

inline BenchmarkConfig bench_config(const ExperimentConfig& c) {
    BenchmarkConfig b;
    b.dt = c.dt;
    b.ranges.clear();
    for (std::size_t i = 0; i < c.bench_ranges.size(); ++i) {
        b.ranges.push_back({c.bench_ranges[i], c.bench_horizons[i]});
    }
    b.runs = c.bench_runs;
    b.seed = c.bench_seed;
    b.wave = {c.wave_period, c.wave_amplitude, 0.0};
    b.jobs = c.jobs;
    return b;
}

/// Benchmark methods in the configured order. Missing predictors for the
/// requested learned methods are an error.
inline std::vector<NamedPredictor> bench_methods(const ExperimentConfig& c, const KoopmanPredictor* bls,
                                                 const KoopmanPredictor* edmd) {
    const Plant plant = c.make_plant();
    std::vector<NamedPredictor> out;
    for (const auto& m : c.bench_methods) {
        if (m == "bls") {
            if (!bls) {
                throw ConfigError("benchmark method 'bls' needs a BLS predictor");
            }
            out.push_back(koopman_method("bls", *bls));
        } else if (m == "edmd") {
            if (!edmd) {
                throw ConfigError("benchmark method 'edmd' needs an EDMD predictor");
            }
            out.push_back(koopman_method("edmd", *edmd));
        } else if (m == "local") {
            out.push_back(local_linearization_method(plant, c.dt, c.fd_step));
        } else if (m == "truth") {
            out.push_back(truth_method(plant, c.dt));
        }
    }
    return out;
}

struct VdpBenchmarkOutcome {
    SnapshotDataset dataset;
    TrainResult bls;
    KoopmanPredictor edmd;
    PredictionBenchmarkReport report;
};

/// collect -> train BLS and TPS-EDMD -> benchmark, all in process.
inline VdpBenchmarkOutcome run_vdp_benchmark(const ExperimentConfig& c) {
    if (c.plant != "vdp") {
        throw ConfigError("the prediction benchmark runs on the vdp plant");
    }
    VdpBenchmarkOutcome o;
    o.dataset = collect(c);
    o.bls = train_bls_edmd(o.dataset, train_options(c));
    o.edmd = fit_edmd(o.dataset, edmd_lifter(c), c.lambda);
    o.report = benchmark_predictors(c.make_plant(), bench_methods(c, &o.bls.predictor, &o.edmd), bench_config(c));
    return o;
}

inline MpcConfig mpc_config(const ExperimentConfig& c, const KoopmanPredictor& pred) {
    MpcConfig m;
    m.horizon = c.horizon;
    m.Q = c.q_diag.asDiagonal();
    m.R = Matrix::Constant(1, 1, c.r_weight);
    const double lim = deg_to_rad(c.rudder_limit_deg);
    m.u_min = Vector::Constant(1, -lim);
    m.u_max = Vector::Constant(1, lim);
    m.y_min = c.y_min;
    m.y_max = c.y_max;
    m.output_penalty = c.output_penalty;
    m.control_period = c.control_period;
    m.integration_step = c.dt;
    m.output_selector = select_outputs(pred, c.outputs);
    m.half_hessian = c.half_hessian;
    m.qp_tol = c.qp_tol;
    m.qp_max_iter = c.qp_max_iter;
    return m;
}

inline ClosedLoopLog run_mpc(const ExperimentConfig& c, const KoopmanPredictor& pred) {
    const MpcConfig m = mpc_config(c, pred);
    if (c.reference.size() != m.output_dim()) {
        throw ConfigError("mpc.reference needs one entry per selected output");
    }
    return run_receding_horizon(c.make_plant(), pred, m, constant_reference(c.reference), c.x0, c.duration, c.seed);
}

inline const std::vector<std::string>& dsrv_state_names() {
    static const std::vector<std::string> names{"w", "q", "x", "z", "theta"};
    return names;
}

struct DsrvMpcOutcome {
    SnapshotDataset dataset;
    TrainResult training;
    ClosedLoopLog log;
    TrackingSummary summary;
};

/// collect -> train -> closed loop, all in process.
inline DsrvMpcOutcome run_dsrv_pipeline(const ExperimentConfig& c) {
    if (c.plant != "dsrv") {
        throw ConfigError("the depth-control task runs on the dsrv plant");
    }
    DsrvMpcOutcome o;
    o.dataset = collect(c);
    o.training = train_bls_edmd(o.dataset, train_options(c));
    o.log = run_mpc(c, o.training.predictor);
    o.summary = summarize_tracking(o.log, dsrv::kZ, c.reference(c.reference.size() - 1), c.settle_band);
    return o;
}

}  // namespace blskoop

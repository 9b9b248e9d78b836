// blskoop: experiment harness for BLS-EDMD Koopman prediction and MPC.
//
// Exit codes: 0 ok, 1 unexpected error, 2 config error, 3 I/O or file format
// error, 4 numerical divergence, 5 too many non-converged QPs, 6 training
// budget exhausted before reaching epsilon (outputs are still written).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "blskoop/experiment.hpp"

namespace fs = std::filesystem;
using namespace blskoop;

namespace {

enum ExitCode : int {
    kOk = 0,
    kUnexpected = 1,
    kConfig = 2,
    kIo = 3,
    kDivergence = 4,
    kQp = 5,
    kBudget = 6,
};

class IoError : public Error {
public:
    using Error::Error;
};

struct CommonOptions {
    std::optional<long long> seed;
    std::string config_path;
    std::string out;
    std::vector<std::string> sets;
    std::optional<unsigned> jobs;
    std::string plant;
};

void add_common(CLI::App* app, CommonOptions& c, const std::string& default_plant) {
    c.plant = default_plant;
    app->add_option("--seed", c.seed, "Master seed; dataset, lifter and benchmark seeds derive from it");
    app->add_option("--config", c.config_path, "key = value config file")->check(CLI::ExistingFile);
    app->add_option("--out", c.out, "Output directory (default $BLSKOOP_OUT/<command> or ./out/<command>)");
    app->add_option("--set", c.sets, "Override one config key, e.g. --set mpc.horizon=30 (repeatable)");
    app->add_option("--jobs", c.jobs, "Worker threads for collection and benchmarking");
    app->add_option("--plant", c.plant, "vdp or dsrv")->capture_default_str();
}

KeyValueConfig build_config(const CommonOptions& c) {
    KeyValueConfig kv;
    kv.set("plant", c.plant);
    if (!c.config_path.empty()) {
        kv.merge(KeyValueConfig::load(c.config_path));
    }
    if (c.seed) {
        kv.set("seed", *c.seed);
    }
    if (c.jobs) {
        kv.set("jobs", static_cast<long long>(*c.jobs));
    }
    for (const auto& s : c.sets) {
        kv.merge(KeyValueConfig::parse(s, "--set"));
    }
    return kv;
}

fs::path output_dir(const CommonOptions& c, const std::string& command) {
    fs::path dir;
    if (!c.out.empty()) {
        dir = c.out;
    } else if (const char* root = std::getenv("BLSKOOP_OUT"); root && *root) {
        dir = fs::path(root) / command;
    } else {
        dir = fs::path("out") / command;
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
    }
    return dir;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) {
        throw IoError("cannot write '" + path.string() + "'");
    }
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

void echo_config(const fs::path& dir, const ExperimentConfig& cfg) {
    write_text(dir / "config.txt", cfg.to_kv().to_string());
}

template <class F>
auto wrap_io(F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const FormatError&) {
        throw;
    } catch (const DimensionError&) {
        throw;
    } catch (const ConfigError&) {
        throw;
    } catch (const DivergenceError&) {
        throw;
    } catch (const FactorizationError&) {
        throw;
    } catch (const Error& e) {
        throw IoError(e.what());
    }
}

SnapshotDataset load_or_collect(const ExperimentConfig& cfg, const std::string& data_path) {
    if (data_path.empty()) {
        return collect(cfg);
    }
    return wrap_io([&] { return load_dataset(data_path); });
}

KoopmanPredictor load_pred(const std::string& path) {
    return wrap_io([&] { return load_predictor(path); });
}

nlohmann::json dataset_json(const SnapshotDataset& ds) {
    return {{"plant", ds.meta.plant},    {"seed", ds.meta.seed},         {"n_traj", ds.meta.n_traj},
            {"n_steps", ds.meta.n_steps}, {"discards", ds.meta.discards}, {"snapshots", ds.size()},
            {"dt", ds.dt}};
}

int report_budget(const TrainResult& r) {
    if (r.budget_exhausted) {
        std::cerr << "warning: lifting budget exhausted before the error reached epsilon (E = "
                  << r.predictor.lifted_dim() << ", error = " << r.predictor.training_state_mse << ")\n";
        return kBudget;
    }
    return kOk;
}

// ---------------------------------------------------------------------------

struct CollectArgs {
    CommonOptions common;
    std::optional<long long> n_traj, n_steps;
    bool csv = false;
};

int cmd_collect(const CollectArgs& a) {
    auto kv = build_config(a.common);
    if (a.n_traj) {
        kv.set("dataset.n_traj", *a.n_traj);
    }
    if (a.n_steps) {
        kv.set("dataset.n_steps", *a.n_steps);
    }
    const auto cfg = ExperimentConfig::from(kv);
    const auto dir = output_dir(a.common, "collect");
    const auto ds = collect(cfg);
    echo_config(dir, cfg);
    wrap_io([&] { save_dataset(ds, (dir / "dataset.bin").string()); });
    write_json(dir / "dataset.json", dataset_json(ds));
    if (a.csv) {
        std::ofstream out(dir / "dataset.csv");
        export_dataset_csv(ds, out);
        if (!out) {
            throw IoError("cannot write dataset.csv");
        }
    }
    std::cout << "collected " << ds.size() << " snapshot pairs (" << ds.meta.discards << " discarded) -> "
              << (dir / "dataset.bin").string() << "\n";
    return kOk;
}

struct TrainArgs {
    CommonOptions common;
    std::string data;
    std::string baseline = "bls";
    std::optional<int> centers, n_z, n_h;
};

int cmd_train(const TrainArgs& a) {
    auto kv = build_config(a.common);
    if (a.baseline == "edmd-tps") {
        kv.set("lifter.kind", std::string("tps"));
    }
    if (a.centers) {
        kv.set("lifter.centers", *a.centers);
    }
    if (a.n_z) {
        kv.set("lifter.n_z", *a.n_z);
    }
    if (a.n_h) {
        kv.set("lifter.n_h", *a.n_h);
    }
    const auto cfg = ExperimentConfig::from(kv);
    const auto dir = output_dir(a.common, "train");
    const auto ds = load_or_collect(cfg, a.data);
    const auto result = train_predictor(cfg, ds);
    echo_config(dir, cfg);
    wrap_io([&] { save_predictor(result.predictor, (dir / "predictor.bin").string()); });
    auto report = train_report_json(result);
    report["dataset"] = dataset_json(ds);
    write_json(dir / "train.json", report);
    std::cout << "trained " << lifter_kind(result.predictor.lifter) << " predictor, E = "
              << result.predictor.lifted_dim() << ", one-step state MSE = " << result.predictor.training_state_mse
              << " -> " << (dir / "predictor.bin").string() << "\n";
    return cfg.lifter_kind == "bls" ? report_budget(result) : kOk;
}

struct BenchArgs {
    CommonOptions common;
    std::string bls_path, edmd_path;
    std::optional<int> runs;
    std::string methods;
    bool no_series = false;
};

void write_series(const fs::path& dir, const PredictionBenchmarkReport& rep, double dt) {
    fs::create_directories(dir);
    for (std::size_t r = 0; r < rep.ranges.size(); ++r) {
        const auto& rr = rep.ranges[r];
        for (std::size_t i = 0; i < rr.truth.size(); ++i) {
            const Matrix& truth = rr.truth[i];
            const auto n = truth.rows();
            std::string csv = "t";
            for (Eigen::Index j = 0; j < n; ++j) {
                csv += ",x" + std::to_string(j + 1) + "_truth";
            }
            for (const auto& m : rep.methods) {
                for (Eigen::Index j = 0; j < n; ++j) {
                    csv += ",x" + std::to_string(j + 1) + "_" + m;
                }
            }
            csv += "\n";
            // Row 0 is the shared initial state.
            for (Eigen::Index k = 0; k <= truth.cols(); ++k) {
                csv += detail::format_double(static_cast<double>(k) * dt);
                const auto col = [&](const Matrix& M) -> Vector {
                    return k == 0 ? rr.initial_states[i] : Vector(M.col(k - 1));
                };
                const Vector xt = col(truth);
                for (Eigen::Index j = 0; j < n; ++j) {
                    csv += "," + detail::format_double(xt(j));
                }
                for (std::size_t m = 0; m < rep.methods.size(); ++m) {
                    const Matrix& P = rr.predictions[m][i];
                    const bool ok = P.cols() == truth.cols();
                    for (Eigen::Index j = 0; j < n; ++j) {
                        csv += "," + (ok ? detail::format_double(col(P)(j)) : std::string("nan"));
                    }
                }
                csv += "\n";
            }
            write_text(dir / ("range" + std::to_string(r) + "_run" + std::to_string(i) + ".csv"), csv);
        }
    }
}

int cmd_bench(const BenchArgs& a) {
    auto kv = build_config(a.common);
    if (a.runs) {
        kv.set("bench.runs", *a.runs);
    }
    if (!a.methods.empty()) {
        kv.set("bench.methods", a.methods);
    }
    const auto cfg = ExperimentConfig::from(kv);
    if (cfg.plant != "vdp") {
        throw ConfigError("bench-vdp runs on the vdp plant");
    }
    const auto dir = output_dir(a.common, "bench-vdp");
    auto wants = [&](const std::string& m) {
        return std::find(cfg.bench_methods.begin(), cfg.bench_methods.end(), m) != cfg.bench_methods.end();
    };

    std::optional<KoopmanPredictor> bls, edmd;
    std::optional<SnapshotDataset> ds;
    int code = kOk;
    auto dataset = [&]() -> const SnapshotDataset& {
        if (!ds) {
            ds = collect(cfg);
        }
        return *ds;
    };
    if (wants("bls")) {
        if (!a.bls_path.empty()) {
            bls = load_pred(a.bls_path);
        } else {
            auto r = train_bls_edmd(dataset(), train_options(cfg));
            code = report_budget(r);
            bls = std::move(r.predictor);
        }
    }
    if (wants("edmd")) {
        edmd = !a.edmd_path.empty() ? load_pred(a.edmd_path) : fit_edmd(dataset(), edmd_lifter(cfg), cfg.lambda);
    }
    auto bc = bench_config(cfg);
    bc.keep_series = !a.no_series;
    const auto report =
        benchmark_predictors(cfg.make_plant(), bench_methods(cfg, bls ? &*bls : nullptr, edmd ? &*edmd : nullptr), bc);

    echo_config(dir, cfg);
    write_text(dir / "table.csv", report.table_csv());
    write_text(dir / "runs.csv", report.runs_csv());
    write_json(dir / "report.json", report.to_json());
    if (!a.no_series) {
        write_series(dir / "series", report, cfg.dt);
    }
    std::cout << report.table_csv();
    return code;
}

struct MpcArgs {
    CommonOptions common;
    std::string predictor;
    std::optional<double> depth, rudder_limit, duration;
    std::string x0;
};

int cmd_mpc(const MpcArgs& a) {
    auto kv = build_config(a.common);
    if (a.rudder_limit) {
        kv.set("mpc.rudder_limit_deg", *a.rudder_limit);
    }
    if (a.duration) {
        kv.set("mpc.duration", *a.duration);
    }
    if (!a.x0.empty()) {
        kv.set("mpc.x0", a.x0);
    }
    if (a.depth) {
        Vector ref = ExperimentConfig::from(kv).reference;
        ref(ref.size() - 1) = *a.depth;
        kv.set("mpc.reference", ref);
    }
    const auto cfg = ExperimentConfig::from(kv);
    if (cfg.plant != "dsrv") {
        throw ConfigError("mpc-dsrv runs on the dsrv plant");
    }
    const auto dir = output_dir(a.common, "mpc-dsrv");
    int code = kOk;
    KoopmanPredictor pred;
    if (!a.predictor.empty()) {
        pred = load_pred(a.predictor);
    } else {
        auto r = train_bls_edmd(collect(cfg), train_options(cfg));
        code = report_budget(r);
        pred = std::move(r.predictor);
    }
    const auto log = run_mpc(cfg, pred);
    const double target = cfg.reference(cfg.reference.size() - 1);
    const auto summary = summarize_tracking(log, dsrv::kZ, target, cfg.settle_band);

    echo_config(dir, cfg);
    write_text(dir / "closed_loop.csv", log.to_csv(dsrv_state_names(), {"delta"}));
    auto j = summary.to_json();
    j["target_depth"] = target;
    j["steps"] = log.rows.size();
    j["settle_band"] = cfg.settle_band;
    if (log.aborted) {
        j["abort_reason"] = log.abort_reason;
    }
    write_json(dir / "summary.json", j);
    std::cout << "final |z - " << detail::format_double(target) << "| = " << summary.final_error
              << " m, settling time = " << summary.settling_time << " s, max |delta| = " << summary.max_abs_input
              << " rad\n";

    if (log.aborted) {
        std::cerr << "error: closed loop aborted: " << log.abort_reason << "\n";
        return kDivergence;
    }
    const double frac = log.rows.empty() ? 0.0 : static_cast<double>(summary.qp_non_converged) /
                                                      static_cast<double>(log.rows.size());
    if (frac > cfg.max_nonconverged_fraction) {
        std::cerr << "error: " << summary.qp_non_converged << " of " << log.rows.size()
                  << " QP solves did not converge\n";
        return kQp;
    }
    return code;
}

struct PredictArgs {
    CommonOptions common;
    std::string predictor;
    std::string x0;
    double horizon = 3.0;
};

int cmd_predict(const PredictArgs& a) {
    const auto cfg = ExperimentConfig::from(build_config(a.common));
    const auto pred = load_pred(a.predictor);
    const auto dir = output_dir(a.common, "predict");
    const Plant plant = cfg.make_plant();
    if (pred.state_dim() != plant.state_dim()) {
        throw ConfigError("predictor state dimension does not match plant '" + cfg.plant + "'");
    }
    Vector x0 = Vector::Zero(plant.state_dim());
    if (!a.x0.empty()) {
        KeyValueConfig tmp;
        tmp.set("x0", a.x0);
        x0 = tmp.get_vector("x0", x0);
        require_dims(x0.size() == plant.state_dim(), "--x0 has the wrong dimension");
    }
    const auto K = static_cast<Eigen::Index>(std::llround(a.horizon / cfg.dt));
    if (K < 1) {
        throw ConfigError("--horizon shorter than one step");
    }
    Matrix u(plant.input_dim(), K);
    const SquareWave wave{cfg.wave_period, cfg.wave_amplitude, 0.0};
    for (Eigen::Index k = 0; k < K; ++k) {
        u.col(k).setConstant(square_wave(static_cast<double>(k) * cfg.dt, wave));
    }
    const Matrix truth = simulate(plant.rhs, x0, u, cfg.dt);
    const Matrix p = predict_rollout(pred, x0, u);

    const auto n = plant.state_dim();
    std::string csv = "t";
    for (int j = 0; j < n; ++j) {
        csv += ",x" + std::to_string(j + 1) + "_truth";
    }
    for (int j = 0; j < n; ++j) {
        csv += ",x" + std::to_string(j + 1) + "_pred";
    }
    for (int j = 0; j < plant.input_dim(); ++j) {
        csv += ",u" + std::to_string(j + 1);
    }
    csv += "\n";
    for (Eigen::Index k = 0; k <= K; ++k) {
        csv += detail::format_double(static_cast<double>(k) * cfg.dt);
        for (int j = 0; j < n; ++j) {
            csv += "," + detail::format_double(k == 0 ? x0(j) : truth(j, k - 1));
        }
        for (int j = 0; j < n; ++j) {
            csv += "," + detail::format_double(k == 0 ? x0(j) : p(j, k - 1));
        }
        for (int j = 0; j < plant.input_dim(); ++j) {
            csv += "," + (k < K ? detail::format_double(u(j, k)) : std::string(""));
        }
        csv += "\n";
    }
    echo_config(dir, cfg);
    write_text(dir / "rollout.csv", csv);
    const double err = relative_run_error(p, truth) * 100.0;
    write_json(dir / "rollout.json", {{"rmse_percent", err}, {"steps", K}});
    std::cout << "rollout RMSE = " << err << " %\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"BLS-EDMD Koopman prediction and model predictive control experiments.\n"
                 "Config files are flat key = value lists (dataset.n_traj = 500, mpc.horizon = 20, ...);\n"
                 "command-line flags override file values. Angles are in degrees on the command line\n"
                 "and radians everywhere else."};
    app.require_subcommand(1);

    CollectArgs ca;
    auto* collect_cmd = app.add_subcommand("collect", "Simulate random trajectories into a snapshot dataset");
    add_common(collect_cmd, ca.common, "vdp");
    collect_cmd->add_option("--n-traj", ca.n_traj, "Number of trajectories");
    collect_cmd->add_option("--n-steps", ca.n_steps, "Steps per trajectory");
    collect_cmd->add_flag("--csv", ca.csv, "Also export dataset.csv");

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "Fit a BLS-EDMD (or TPS-EDMD baseline) predictor");
    add_common(train_cmd, ta.common, "vdp");
    train_cmd->add_option("--data", ta.data, "Dataset file from 'collect' (collected in process if omitted)");
    train_cmd->add_option("--baseline", ta.baseline, "bls or edmd-tps")
        ->check(CLI::IsMember({"bls", "edmd-tps"}))
        ->capture_default_str();
    train_cmd->add_option("--centers", ta.centers, "TPS centers for the edmd-tps baseline");
    train_cmd->add_option("--n-z", ta.n_z, "Initial feature nodes");
    train_cmd->add_option("--n-h", ta.n_h, "Initial enhancement nodes");

    BenchArgs ba;
    auto* bench_cmd = app.add_subcommand("bench-vdp", "Multi-step prediction benchmark on van der Pol");
    add_common(bench_cmd, ba.common, "vdp");
    bench_cmd->add_option("--bls", ba.bls_path, "BLS predictor file (trained in process if omitted)");
    bench_cmd->add_option("--edmd", ba.edmd_path, "TPS-EDMD predictor file (trained in process if omitted)");
    bench_cmd->add_option("--runs", ba.runs, "Initial states per range");
    bench_cmd->add_option("--methods", ba.methods, "Comma list from bls,local,edmd,truth");
    bench_cmd->add_flag("--no-series", ba.no_series, "Skip the per-run time-series CSVs");

    MpcArgs ma;
    auto* mpc_cmd = app.add_subcommand("mpc-dsrv", "Closed-loop depth control of the DSRV");
    add_common(mpc_cmd, ma.common, "dsrv");
    mpc_cmd->add_option("--predictor", ma.predictor, "DSRV predictor file (trained in process if omitted)");
    mpc_cmd->add_option("--depth", ma.depth, "Target depth in metres");
    mpc_cmd->add_option("--x0", ma.x0, "Initial state w,q,x,z,theta (SI units, theta in rad)");
    mpc_cmd->add_option("--rudder-limit", ma.rudder_limit, "Stern-plane bound in degrees");
    mpc_cmd->add_option("--duration", ma.duration, "Simulated time in seconds");

    PredictArgs pa;
    auto* predict_cmd = app.add_subcommand("predict", "Dump one predicted and true trajectory");
    add_common(predict_cmd, pa.common, "vdp");
    predict_cmd->add_option("--predictor", pa.predictor, "Predictor file")->required();
    predict_cmd->add_option("--x0", pa.x0, "Initial state, comma separated (default zero)");
    predict_cmd->add_option("--horizon", pa.horizon, "Seconds to predict")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        if (*collect_cmd) {
            return cmd_collect(ca);
        }
        if (*train_cmd) {
            return cmd_train(ta);
        }
        if (*bench_cmd) {
            return cmd_bench(ba);
        }
        if (*mpc_cmd) {
            return cmd_mpc(ma);
        }
        if (*predict_cmd) {
            return cmd_predict(pa);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const DimensionError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kIo;
    } catch (const FormatError& e) {
        std::cerr << "file format error: " << e.what() << "\n";
        return kIo;
    } catch (const DivergenceError& e) {
        std::cerr << "numerical divergence: " << e.what() << "\n";
        return kDivergence;
    } catch (const FactorizationError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kDivergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUnexpected;
    }
    return kUnexpected;
}

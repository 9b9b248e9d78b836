#pragma once

// Snapshot-pair datasets (X, Y, U) collected from simulated plants.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "blskoop/binary_io.hpp"
#include "blskoop/config.hpp"
#include "blskoop/numerics.hpp"
#include "blskoop/parallel.hpp"
#include "blskoop/systems.hpp"

namespace blskoop {

struct DatasetMeta {
    std::string plant;
    std::uint64_t seed = 0;
    std::uint64_t n_traj = 0;
    std::uint64_t n_steps = 0;
    std::uint64_t discards = 0;

    bool operator==(const DatasetMeta&) const = default;
};

/// Column k holds one snapshot pair: Y(:, k) is the state one step after X(:, k)
/// under input U(:, k). Columns are trajectory-major; a pair never spans two
/// trajectories.
struct SnapshotDataset {
    Matrix X;
    Matrix Y;
    Matrix U;
    double dt = 0.0;
    DatasetMeta meta;

    Eigen::Index size() const { return X.cols(); }
    Eigen::Index state_dim() const { return X.rows(); }
    Eigen::Index input_dim() const { return U.rows(); }

    /// Empty datasets load fine but cannot be fitted.
    bool usable() const { return size() > 0; }

    void validate() const {
        require_dims(X.rows() == Y.rows() && X.cols() == Y.cols(), "dataset: X and Y shapes differ");
        require_dims(U.cols() == X.cols(), "dataset: U column count differs from X");
    }

    bool operator==(const SnapshotDataset& o) const {
        return X.rows() == o.X.rows() && X.cols() == o.X.cols() && U.rows() == o.U.rows() && X == o.X &&
               Y == o.Y && U == o.U && dt == o.dt && meta == o.meta;
    }
};

struct CollectOptions {
    std::uint64_t n_traj = 500;
    std::uint64_t n_steps = 300;
    double dt = 0.01;
    Vector init_lo;
    Vector init_hi;
    Vector input_lo;
    Vector input_hi;
    std::uint64_t seed = 1;
    /// Hold one random input for a whole trajectory instead of redrawing every step.
    bool per_trajectory_input = false;
    /// A trajectory whose state leaves this magnitude counts as diverged.
    double max_abs_state = 1e6;
    unsigned max_attempts = 1000;
    unsigned jobs = 1;
};

namespace detail {

inline void check_box(const Vector& lo, const Vector& hi, Eigen::Index dim, const char* what) {
    if (lo.size() != dim || hi.size() != dim) {
        throw ConfigError(std::string(what) + " box has the wrong dimension");
    }
    if ((lo.array() > hi.array()).any()) {
        throw ConfigError(std::string(what) + " box is not well ordered (lo > hi)");
    }
}

}  // namespace detail

/// Simulates `n_traj` trajectories of `n_steps` RK4 steps each. Diverging
/// trajectories are redrawn from a fresh stream and counted in meta.discards.
inline SnapshotDataset collect_snapshots(const Plant& plant, const CollectOptions& opt) {
    const int n = plant.state_dim();
    const int l = plant.input_dim();
    if (opt.n_traj < 1 || opt.n_steps < 1) {
        throw ConfigError("collect_snapshots: n_traj and n_steps must be >= 1");
    }
    if (!(opt.dt > 0.0)) {
        throw ConfigError("collect_snapshots: dt must be positive");
    }
    detail::check_box(opt.init_lo, opt.init_hi, n, "initial-state");
    detail::check_box(opt.input_lo, opt.input_hi, l, "input");

    const auto steps = static_cast<Eigen::Index>(opt.n_steps);
    SnapshotDataset ds;
    ds.X.resize(n, static_cast<Eigen::Index>(opt.n_traj) * steps);
    ds.Y.resize(n, ds.X.cols());
    ds.U.resize(l, ds.X.cols());
    ds.dt = opt.dt;
    ds.meta = {plant.name, opt.seed, opt.n_traj, opt.n_steps, 0};

    std::vector<std::uint64_t> discards(opt.n_traj, 0);
    parallel_for(opt.n_traj, opt.jobs, [&](std::size_t traj) {
        for (unsigned attempt = 0;; ++attempt) {
            if (attempt >= opt.max_attempts) {
                throw DivergenceError("collect_snapshots: trajectory " + std::to_string(traj) + " diverged " +
                                          std::to_string(attempt) + " times",
                                      0.0, -1);
            }
            Rng rng = Rng::stream(opt.seed, traj, attempt);
            Vector x = rng.uniform(opt.init_lo, opt.init_hi);
            Vector u = rng.uniform(opt.input_lo, opt.input_hi);
            const Eigen::Index base = static_cast<Eigen::Index>(traj) * steps;
            bool ok = true;
            for (Eigen::Index k = 0; k < steps; ++k) {
                if (k > 0 && !opt.per_trajectory_input) {
                    u = rng.uniform(opt.input_lo, opt.input_hi);
                }
                Vector y;
                try {
                    y = rk4_step(plant.rhs, x, u, static_cast<double>(k) * opt.dt, opt.dt);
                } catch (const DivergenceError&) {
                    ok = false;
                    break;
                }
                if (y.cwiseAbs().maxCoeff() > opt.max_abs_state) {
                    ok = false;
                    break;
                }
                ds.X.col(base + k) = x;
                ds.Y.col(base + k) = y;
                ds.U.col(base + k) = u;
                x = std::move(y);
            }
            if (ok) {
                return;
            }
            ++discards[traj];
        }
    });
    for (auto d : discards) {
        ds.meta.discards += d;
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Persistence. Layout (little-endian): "BKDS", u32 version, str plant,
// u64 seed, u64 n_traj, u64 n_steps, u64 discards, f64 dt, then X, Y, U as
// (u64 rows, u64 cols, f64 column-major entries), then a u64 FNV-1a checksum.

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

inline std::string serialize_dataset(const SnapshotDataset& ds) {
    ds.validate();
    BinaryWriter w;
    w.bytes("BKDS", 4);
    w.u32(kDatasetFormatVersion);
    w.str(ds.meta.plant);
    w.u64(ds.meta.seed);
    w.u64(ds.meta.n_traj);
    w.u64(ds.meta.n_steps);
    w.u64(ds.meta.discards);
    w.f64(ds.dt);
    w.matrix(ds.X);
    w.matrix(ds.Y);
    w.matrix(ds.U);
    return w.finish();
}

inline SnapshotDataset deserialize_dataset(std::string blob) {
    BinaryReader r(std::move(blob));
    r.expect_magic("BKDS", kDatasetFormatVersion);
    SnapshotDataset ds;
    ds.meta.plant = r.str();
    ds.meta.seed = r.u64();
    ds.meta.n_traj = r.u64();
    ds.meta.n_steps = r.u64();
    ds.meta.discards = r.u64();
    ds.dt = r.f64();
    ds.X = r.matrix();
    ds.Y = r.matrix();
    ds.U = r.matrix();
    if (!r.at_end()) {
        throw FormatError("trailing bytes after dataset payload");
    }
    try {
        ds.validate();
    } catch (const DimensionError& e) {
        throw FormatError(e.what());
    }
    return ds;
}

inline void save_dataset(const SnapshotDataset& ds, const std::string& path) {
    const auto blob = serialize_dataset(ds);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open '" + path + "' for writing");
    }
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) {
        throw Error("write to '" + path + "' failed");
    }
}

inline SnapshotDataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open '" + path + "' for reading");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return deserialize_dataset(ss.str());
}

/// One row per snapshot: x1..xn, y1..yn, u1..ul.
inline void export_dataset_csv(const SnapshotDataset& ds, std::ostream& out) {
    const auto n = ds.state_dim();
    const auto l = ds.input_dim();
    for (Eigen::Index i = 0; i < n; ++i) {
        out << (i ? "," : "") << "x" << i + 1;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        out << ",y" << i + 1;
    }
    for (Eigen::Index i = 0; i < l; ++i) {
        out << ",u" << i + 1;
    }
    out << "\n";
    for (Eigen::Index k = 0; k < ds.size(); ++k) {
        for (Eigen::Index i = 0; i < n; ++i) {
            out << (i ? "," : "") << detail::format_double(ds.X(i, k));
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            out << "," << detail::format_double(ds.Y(i, k));
        }
        for (Eigen::Index i = 0; i < l; ++i) {
            out << "," << detail::format_double(ds.U(i, k));
        }
        out << "\n";
    }
}

}  // namespace blskoop

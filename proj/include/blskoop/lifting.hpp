#pragma once

// Lifting dictionaries. Every lifter here maps x in R^n to [x; features(x)],
// i.e. the raw state passes through unchanged as the first n components.
//
//   BlsLifter     broad-learning random features: a feature block
//                 z = act(We^T xn + be) followed by an enhancement block
//                 h = act(Wh^T z + bh), where xn is the (optionally
//                 normalized) state.
//   TpsRbfLifter  thin-plate-spline radial basis functions r^2 ln r around
//                 fixed centers.

#include <cmath>
#include <string>
#include <variant>

#include "blskoop/binary_io.hpp"
#include "blskoop/numerics.hpp"

namespace blskoop {

enum class Activation : std::uint32_t {
    Tps = 0,   // v^2 ln|v|, 0 at v = 0
    Tanh = 1,
};

inline Activation parse_activation(const std::string& s) {
    if (s == "tps") {
        return Activation::Tps;
    }
    if (s == "tanh") {
        return Activation::Tanh;
    }
    throw ConfigError("unknown activation '" + s + "' (expected tps or tanh)");
}

inline std::string to_string(Activation a) { return a == Activation::Tps ? "tps" : "tanh"; }

inline double activation(Activation kind, double v) {
    switch (kind) {
        case Activation::Tps:
            return v == 0.0 ? 0.0 : v * v * std::log(std::abs(v));
        case Activation::Tanh:
            return std::tanh(v);
    }
    return 0.0;
}

namespace detail {

template <class Derived>
void apply_activation(Activation kind, Eigen::MatrixBase<Derived>& m) {
    m.derived() = m.unaryExpr([kind](double v) { return activation(kind, v); });
}

}  // namespace detail

// ---------------------------------------------------------------------------

class BlsLifter {
public:
    BlsLifter() = default;

    /// Draws every weight and bias i.i.d. uniform on [-scale, scale]. The
    /// optional per-coordinate normalization maps x to (x - center) / halfwidth
    /// before the feature layer; empty vectors mean identity.
    static BlsLifter create(int n, int n_z, int n_h, Activation act, double scale, std::uint64_t seed,
                            Vector center = {}, Vector halfwidth = {}) {
        if (n < 1 || n_z < 0 || n_h < 0) {
            throw ConfigError("BlsLifter: need n >= 1 and non-negative node counts");
        }
        if (!(scale > 0.0)) {
            throw ConfigError("BlsLifter: weight scale must be positive");
        }
        BlsLifter b;
        b.activation_ = act;
        b.scale_ = scale;
        b.seed_ = seed;
        b.center_ = center.size() ? std::move(center) : Vector::Zero(n);
        b.halfwidth_ = halfwidth.size() ? std::move(halfwidth) : Vector::Ones(n);
        if (b.center_.size() != n || b.halfwidth_.size() != n || (b.halfwidth_.array() <= 0.0).any()) {
            throw ConfigError("BlsLifter: normalization must have n entries with positive half-widths");
        }
        Rng rng(seed);
        b.We_ = draw(rng, n, n_z, scale);
        b.be_ = draw(rng, n_z, 1, scale);
        b.Wh_ = draw(rng, n_z, n_h, scale);
        b.bh_ = draw(rng, n_h, 1, scale);
        return b;
    }

    /// Lifter with explicit weights (no normalization unless given).
    static BlsLifter from_weights(const Matrix& We, const Vector& be, const Matrix& Wh, const Vector& bh,
                                  Activation act, Vector center = {}, Vector halfwidth = {}) {
        const auto n = We.rows();
        if (n < 1 || be.size() != We.cols() || Wh.rows() != We.cols() || bh.size() != Wh.cols()) {
            throw DimensionError("BlsLifter::from_weights: inconsistent block shapes");
        }
        BlsLifter b;
        b.activation_ = act;
        b.center_ = center.size() ? std::move(center) : Vector::Zero(n);
        b.halfwidth_ = halfwidth.size() ? std::move(halfwidth) : Vector::Ones(n);
        if (b.center_.size() != n || b.halfwidth_.size() != n || (b.halfwidth_.array() <= 0.0).any()) {
            throw ConfigError("BlsLifter: normalization must have n entries with positive half-widths");
        }
        b.We_ = We;
        b.be_ = be;
        b.Wh_ = Wh;
        b.bh_ = bh;
        return b;
    }

    int state_dim() const { return static_cast<int>(center_.size()); }
    int feature_count() const { return static_cast<int>(We_.cols()); }
    int enhance_count() const { return static_cast<int>(Wh_.cols()); }
    int lifted_dim() const { return state_dim() + feature_count() + enhance_count(); }

    Activation activation_kind() const { return activation_; }
    double scale() const { return scale_; }
    std::uint64_t seed() const { return seed_; }
    const Vector& center() const { return center_; }
    const Vector& halfwidth() const { return halfwidth_; }
    const RowMajorMatrix& feature_weights() const { return We_; }
    const Vector& feature_bias() const { return be_; }
    const RowMajorMatrix& enhance_weights() const { return Wh_; }
    const Vector& enhance_bias() const { return bh_; }

    /// Single-point lift. Pre-activations are accumulated input by input in a
    /// fixed order, so appending zero-weight inputs (see grow) leaves every
    /// existing node bit-for-bit unchanged.
    Vector lift(const Vector& x) const {
        require_dims(x.size() == state_dim(), "BlsLifter::lift: wrong state dimension");
        const int n = state_dim();
        Vector out(lifted_dim());
        out.head(n) = x;
        const Vector xn = (x - center_).cwiseQuotient(halfwidth_);

        auto z = out.segment(n, feature_count());
        z = be_;
        for (int j = 0; j < n; ++j) {
            z += xn(j) * We_.row(j).transpose();
        }
        z = z.unaryExpr([this](double v) { return activation(activation_, v); });

        auto h = out.tail(enhance_count());
        h = bh_;
        for (int j = 0; j < feature_count(); ++j) {
            h += z(j) * Wh_.row(j).transpose();
        }
        h = h.unaryExpr([this](double v) { return activation(activation_, v); });

        if (!out.allFinite()) {
            throw Error("BlsLifter::lift: non-finite activation output");
        }
        return out;
    }

    /// Lifts every column of X (n x N) with dense products; agrees with lift()
    /// up to floating-point summation order.
    Matrix lift_columns(const Matrix& X) const {
        require_dims(X.rows() == state_dim(), "BlsLifter::lift_columns: wrong state dimension");
        const int n = state_dim();
        Matrix out(lifted_dim(), X.cols());
        out.topRows(n) = X;
        const Matrix xn = (X.colwise() - center_).array().colwise() / halfwidth_.array();
        Matrix z = We_.transpose() * xn;
        z.colwise() += be_;
        detail::apply_activation(activation_, z);
        Matrix h = Wh_.transpose() * z;
        h.colwise() += bh_;
        detail::apply_activation(activation_, h);
        out.middleRows(n, feature_count()) = z;
        out.bottomRows(enhance_count()) = h;
        if (!out.allFinite()) {
            throw Error("BlsLifter::lift_columns: non-finite activation output");
        }
        return out;
    }

    /// Returns a lifter with `add_z` more feature nodes and `add_h` more
    /// enhancement nodes. Old enhancement nodes get zero weights from the new
    /// features, so the old lift is an exact prefix of the new one.
    BlsLifter grow(int add_z, int add_h, std::uint64_t seed) const {
        if (add_z < 0 || add_h < 0) {
            throw ConfigError("BlsLifter::grow: node increments must be non-negative");
        }
        const int n = state_dim();
        const int nz = feature_count() + add_z;
        const int nh = enhance_count() + add_h;
        Rng rng(seed);
        BlsLifter g = *this;
        g.We_.conservativeResize(n, nz);
        g.We_.rightCols(add_z) = draw(rng, n, add_z, scale_);
        g.be_.conservativeResize(nz);
        g.be_.tail(add_z) = draw(rng, add_z, 1, scale_);
        g.Wh_ = RowMajorMatrix::Zero(nz, nh);
        g.Wh_.topLeftCorner(feature_count(), enhance_count()) = Wh_;
        g.Wh_.rightCols(add_h) = draw(rng, nz, add_h, scale_);
        g.bh_.conservativeResize(nh);
        g.bh_.tail(add_h) = draw(rng, add_h, 1, scale_);
        return g;
    }

    void write(BinaryWriter& w) const {
        w.u32(static_cast<std::uint32_t>(activation_));
        w.f64(scale_);
        w.u64(seed_);
        w.vector(center_);
        w.vector(halfwidth_);
        w.matrix(We_);
        w.vector(be_);
        w.matrix(Wh_);
        w.vector(bh_);
    }

    static BlsLifter read(BinaryReader& r) {
        BlsLifter b;
        const auto act = r.u32();
        if (act > 1) {
            throw FormatError("unknown activation tag " + std::to_string(act));
        }
        b.activation_ = static_cast<Activation>(act);
        b.scale_ = r.f64();
        b.seed_ = r.u64();
        b.center_ = r.vector();
        b.halfwidth_ = r.vector();
        b.We_ = r.matrix();
        b.be_ = r.vector();
        b.Wh_ = r.matrix();
        b.bh_ = r.vector();
        const auto n = b.center_.size();
        if (n < 1 || b.halfwidth_.size() != n || b.We_.rows() != n || b.be_.size() != b.We_.cols() ||
            b.Wh_.rows() != b.We_.cols() || b.bh_.size() != b.Wh_.cols()) {
            throw FormatError("inconsistent BLS lifter block shapes");
        }
        return b;
    }

    bool operator==(const BlsLifter& o) const {
        return activation_ == o.activation_ && scale_ == o.scale_ && seed_ == o.seed_ &&
               center_.size() == o.center_.size() && center_ == o.center_ && halfwidth_ == o.halfwidth_ &&
               We_.rows() == o.We_.rows() && We_.cols() == o.We_.cols() && We_ == o.We_ && be_ == o.be_ &&
               Wh_.rows() == o.Wh_.rows() && Wh_.cols() == o.Wh_.cols() && Wh_ == o.Wh_ && bh_ == o.bh_;
    }

private:
    static RowMajorMatrix draw(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale) {
        RowMajorMatrix m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i) {
            for (Eigen::Index j = 0; j < cols; ++j) {
                m(i, j) = rng.uniform(-scale, scale);
            }
        }
        return m;
    }

    Activation activation_ = Activation::Tps;
    double scale_ = 1.0;
    std::uint64_t seed_ = 0;
    Vector center_;
    Vector halfwidth_;
    RowMajorMatrix We_;  // n x n_z
    Vector be_;
    RowMajorMatrix Wh_;  // n_z x n_h
    Vector bh_;
};

// ---------------------------------------------------------------------------

inline double thin_plate_spline(double r) { return r == 0.0 ? 0.0 : r * r * std::log(r); }

class TpsRbfLifter {
public:
    TpsRbfLifter() = default;
    explicit TpsRbfLifter(Matrix centers) : centers_(std::move(centers)) {
        if (centers_.rows() < 1) {
            throw ConfigError("TpsRbfLifter: centers need at least one row");
        }
    }

    /// `count` centers drawn uniformly from the box [lo, hi].
    static TpsRbfLifter random(const Vector& lo, const Vector& hi, int count, std::uint64_t seed) {
        require_dims(lo.size() == hi.size() && lo.size() > 0, "TpsRbfLifter::random: box mismatch");
        if (count < 0) {
            throw ConfigError("TpsRbfLifter: center count must be non-negative");
        }
        Rng rng(seed);
        Matrix c(lo.size(), count);
        for (int j = 0; j < count; ++j) {
            c.col(j) = rng.uniform(lo, hi);
        }
        return TpsRbfLifter(std::move(c));
    }

    int state_dim() const { return static_cast<int>(centers_.rows()); }
    int center_count() const { return static_cast<int>(centers_.cols()); }
    int lifted_dim() const { return state_dim() + center_count(); }
    const Matrix& centers() const { return centers_; }

    Vector lift(const Vector& x) const {
        require_dims(x.size() == state_dim(), "TpsRbfLifter::lift: wrong state dimension");
        Vector out(lifted_dim());
        out.head(state_dim()) = x;
        for (int j = 0; j < center_count(); ++j) {
            out(state_dim() + j) = thin_plate_spline((x - centers_.col(j)).norm());
        }
        return out;
    }

    Matrix lift_columns(const Matrix& X) const {
        require_dims(X.rows() == state_dim(), "TpsRbfLifter::lift_columns: wrong state dimension");
        Matrix out(lifted_dim(), X.cols());
        for (Eigen::Index k = 0; k < X.cols(); ++k) {
            out.col(k) = lift(X.col(k));
        }
        return out;
    }

    void write(BinaryWriter& w) const { w.matrix(centers_); }
    static TpsRbfLifter read(BinaryReader& r) {
        Matrix c = r.matrix();
        if (c.rows() < 1) {
            throw FormatError("TPS lifter without state dimension");
        }
        return TpsRbfLifter(std::move(c));
    }

    bool operator==(const TpsRbfLifter& o) const {
        return centers_.rows() == o.centers_.rows() && centers_.cols() == o.centers_.cols() &&
               centers_ == o.centers_;
    }

private:
    Matrix centers_;  // n x M
};

// ---------------------------------------------------------------------------

using Lifter = std::variant<BlsLifter, TpsRbfLifter>;

inline int lifted_dim(const Lifter& l) {
    return std::visit([](const auto& v) { return v.lifted_dim(); }, l);
}
inline int state_dim(const Lifter& l) {
    return std::visit([](const auto& v) { return v.state_dim(); }, l);
}
inline Vector lift(const Lifter& l, const Vector& x) {
    return std::visit([&](const auto& v) { return v.lift(x); }, l);
}
inline Matrix lift_columns(const Lifter& l, const Matrix& X) {
    return std::visit([&](const auto& v) { return v.lift_columns(X); }, l);
}

inline std::string lifter_kind(const Lifter& l) {
    return std::holds_alternative<BlsLifter>(l) ? "bls" : "tps";
}

inline void write_lifter(BinaryWriter& w, const Lifter& l) {
    w.u32(static_cast<std::uint32_t>(l.index()));
    std::visit([&](const auto& v) { v.write(w); }, l);
}

inline Lifter read_lifter(BinaryReader& r) {
    switch (r.u32()) {
        case 0:
            return BlsLifter::read(r);
        case 1:
            return TpsRbfLifter::read(r);
        default:
            throw FormatError("unknown lifter kind tag");
    }
}

inline constexpr std::uint32_t kLifterFormatVersion = 1;

inline void save_lifter(const Lifter& l, const std::string& path) {
    BinaryWriter w;
    w.bytes("BKLF", 4);
    w.u32(kLifterFormatVersion);
    write_lifter(w, l);
    w.save(path);
}

inline Lifter load_lifter(const std::string& path) {
    auto r = BinaryReader::from_file(path);
    r.expect_magic("BKLF", kLifterFormatVersion);
    Lifter l = read_lifter(r);
    if (!r.at_end()) {
        throw FormatError("trailing bytes after lifter payload");
    }
    return l;
}

}  // namespace blskoop

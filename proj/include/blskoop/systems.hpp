#pragma once

// Plant models and test signals: the forced van der Pol oscillator and the
// longitudinal (depth-plane) subsystem of a deep sea rescue vehicle.

#include <cmath>
#include <string>

#include "blskoop/config.hpp"
#include "blskoop/numerics.hpp"

namespace blskoop {

/// A named continuous-time plant.
struct Plant {
    std::string name;
    OdeRightHandSide rhs;

    int state_dim() const { return rhs.state_dim; }
    int input_dim() const { return rhs.input_dim; }
};

// ---------------------------------------------------------------------------
// van der Pol

enum class VdpVariant {
    AsPrinted,      // x1' = -2 x2,  x2' = 0.8 x1 + 10 x1^2 x2 - 2 x2 + u
    KordaStandard,  // x1' =  2 x2,  x2' = -0.8 x1 + 2 x2 - 10 x1^2 x2 + u
};

inline VdpVariant parse_vdp_variant(const std::string& s) {
    if (s == "as-printed") {
        return VdpVariant::AsPrinted;
    }
    if (s == "korda-standard") {
        return VdpVariant::KordaStandard;
    }
    throw ConfigError("unknown van der Pol variant '" + s + "' (expected as-printed or korda-standard)");
}

inline std::string to_string(VdpVariant v) {
    return v == VdpVariant::AsPrinted ? "as-printed" : "korda-standard";
}

inline Vector vdp_rhs(const Vector& x, const Vector& u, VdpVariant variant = VdpVariant::AsPrinted) {
    const double x1 = x(0), x2 = x(1);
    Vector dx(2);
    if (variant == VdpVariant::AsPrinted) {
        dx(0) = -2.0 * x2;
        dx(1) = 0.8 * x1 + 10.0 * x1 * x1 * x2 - 2.0 * x2 + u(0);
    } else {
        dx(0) = 2.0 * x2;
        dx(1) = -0.8 * x1 + 2.0 * x2 - 10.0 * x1 * x1 * x2 + u(0);
    }
    return dx;
}

inline Plant make_vdp_plant(VdpVariant variant) {
    Plant p;
    p.name = "vdp";
    p.rhs.state_dim = 2;
    p.rhs.input_dim = 1;
    p.rhs.eval = [variant](const Vector& x, const Vector& u, double) { return vdp_rhs(x, u, variant); };
    return p;
}

// ---------------------------------------------------------------------------
// DSRV longitudinal subsystem, state (w, q, x, z, theta), input rudder angle.

struct DsrvParameters {
    double U0 = 4.11;  // cruise speed alpha0 [m/s]
    double m11 = 0.067936;
    double m12 = 0.000130;
    double m21 = 0.000146;
    double m22 = 0.003498;
    double Zq = -0.017455;
    double Zw = -0.043938;
    double Zdelta = 0.027695;
    double Mq = -0.01131;
    double Mw = 0.011175;
    double Mtheta_num = -0.156276;  // M_theta = Mtheta_num / U0^2
    double Mdelta = -0.012797;
    double L = 5.0;  // hull length [m]; not used by the longitudinal equations

    double det_m() const { return m11 * m22 - m12 * m21; }
    double m_theta() const { return Mtheta_num / (U0 * U0); }

    void validate() const {
        if (det_m() == 0.0 || !std::isfinite(det_m())) {
            throw ConfigError("DSRV mass matrix is singular");
        }
        if (U0 == 0.0) {
            throw ConfigError("DSRV cruise speed must be nonzero");
        }
    }

    static DsrvParameters from_config(const KeyValueConfig& cfg) {
        DsrvParameters p;
        p.U0 = cfg.get_double("dsrv.U0", p.U0);
        p.m11 = cfg.get_double("dsrv.m11", p.m11);
        p.m12 = cfg.get_double("dsrv.m12", p.m12);
        p.m21 = cfg.get_double("dsrv.m21", p.m21);
        p.m22 = cfg.get_double("dsrv.m22", p.m22);
        p.Zq = cfg.get_double("dsrv.Zq", p.Zq);
        p.Zw = cfg.get_double("dsrv.Zw", p.Zw);
        p.Zdelta = cfg.get_double("dsrv.Zdelta", p.Zdelta);
        p.Mq = cfg.get_double("dsrv.Mq", p.Mq);
        p.Mw = cfg.get_double("dsrv.Mw", p.Mw);
        p.Mtheta_num = cfg.get_double("dsrv.Mtheta_num", p.Mtheta_num);
        p.Mdelta = cfg.get_double("dsrv.Mdelta", p.Mdelta);
        p.L = cfg.get_double("dsrv.L", p.L);
        p.validate();
        return p;
    }

    void to_config(KeyValueConfig& cfg) const {
        cfg.set("dsrv.U0", U0);
        cfg.set("dsrv.m11", m11);
        cfg.set("dsrv.m12", m12);
        cfg.set("dsrv.m21", m21);
        cfg.set("dsrv.m22", m22);
        cfg.set("dsrv.Zq", Zq);
        cfg.set("dsrv.Zw", Zw);
        cfg.set("dsrv.Zdelta", Zdelta);
        cfg.set("dsrv.Mq", Mq);
        cfg.set("dsrv.Mw", Mw);
        cfg.set("dsrv.Mtheta_num", Mtheta_num);
        cfg.set("dsrv.Mdelta", Mdelta);
        cfg.set("dsrv.L", L);
    }
};

namespace dsrv {
inline constexpr int kW = 0;
inline constexpr int kQ = 1;
inline constexpr int kX = 2;
inline constexpr int kZ = 3;
inline constexpr int kTheta = 4;
}  // namespace dsrv

inline Vector dsrv_rhs(const Vector& s, double delta, const DsrvParameters& p) {
    const double w = s(dsrv::kW), q = s(dsrv::kQ), theta = s(dsrv::kTheta);
    const double Z = p.Zq * q + p.Zw * w + p.Zdelta * delta;
    const double M = p.Mq * q + p.Mw * w + p.m_theta() * theta + p.Mdelta * delta;
    const double det = p.det_m();
    Vector ds(5);
    ds(dsrv::kW) = (p.m22 * Z - p.m12 * M) / det;
    ds(dsrv::kQ) = (-p.m21 * Z + p.m11 * M) / det;
    ds(dsrv::kX) = p.U0 * std::cos(theta) + w * std::sin(theta);
    ds(dsrv::kZ) = -p.U0 * std::sin(theta) + w * std::cos(theta);
    ds(dsrv::kTheta) = q;
    return ds;
}

inline Plant make_dsrv_plant(const DsrvParameters& params = {}) {
    params.validate();
    Plant p;
    p.name = "dsrv";
    p.rhs.state_dim = 5;
    p.rhs.input_dim = 1;
    p.rhs.eval = [params](const Vector& x, const Vector& u, double) { return dsrv_rhs(x, u(0), params); };
    return p;
}

/// A linear plant x' = M x + N u; handy for oracle tests and examples.
inline Plant make_linear_plant(const Matrix& M, const Matrix& N, std::string name = "linear") {
    require_dims(M.rows() == M.cols() && N.rows() == M.rows(), "make_linear_plant: shape mismatch");
    Plant p;
    p.name = std::move(name);
    p.rhs.state_dim = static_cast<int>(M.rows());
    p.rhs.input_dim = static_cast<int>(N.cols());
    p.rhs.eval = [M, N](const Vector& x, const Vector& u, double) -> Vector { return M * x + N * u; };
    return p;
}

// ---------------------------------------------------------------------------
// Square wave test input

struct SquareWave {
    double period = 0.3;
    double amplitude = 1.0;
    double phase = 0.0;
};

/// +amplitude on the first half of each period, -amplitude on the second.
inline double square_wave(double t, const SquareWave& w) {
    if (!(w.period > 0.0)) {
        throw Error("square_wave: period must be positive");
    }
    double s = std::fmod(t + w.phase, w.period);
    if (s < 0.0) {
        s += w.period;
    }
    return s < 0.5 * w.period ? w.amplitude : -w.amplitude;
}

}  // namespace blskoop

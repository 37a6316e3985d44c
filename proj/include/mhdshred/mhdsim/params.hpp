#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "mhdshred/error.hpp"
#include "mhdshred/keyvalue.hpp"

namespace mhdshred::mhdsim {

using Vec3 = std::array<double, 3>;

inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

/// Lead-lithium properties, SI units.
struct MaterialProps {
    double rho0 = 9806.0;       // kg/m^3
    double mu_visc = 1.93e-3;   // Pa s
    double mu_B = 1.26e-6;      // H/m
    double sigma_el = 7.82e5;   // 1/(Ohm m)
    double beta = 1.3e-4;       // 1/K
    double kappa = 20.93;       // W/(m K)
    double c_p = 189.5;         // J/(kg K)

    double kinematic_viscosity() const { return mu_visc / rho0; }
    double thermal_diffusivity() const { return kappa / (rho0 * c_p); }
    double magnetic_diffusivity() const { return 1.0 / (sigma_el * mu_B); }

    void validate() const {
        for (double v : {rho0, mu_visc, mu_B, sigma_el, beta, kappa, c_p})
            if (!(v > 0.0) || !std::isfinite(v))
                throw ConfigurationError("material properties must be strictly positive");
    }
};

/// Square duct of side `side` along z, with a coaxial pipe of radius `pipe_radius`.
struct Geometry {
    double length = 0.07;
    double side = 0.02;
    double pipe_radius = 0.005;
    int nx = 16;
    int ny = 16;
    int nz = 32;
};

enum class DriveKind { ConstantToroidal, ConstantCombined, SinusoidalToroidal };

inline std::string to_string(DriveKind k) {
    switch (k) {
        case DriveKind::ConstantToroidal: return "constant-toroidal";
        case DriveKind::ConstantCombined: return "constant-combined";
        case DriveKind::SinusoidalToroidal: return "sinusoidal-toroidal";
    }
    return "?";
}

inline DriveKind drive_kind_from_string(const std::string& s) {
    if (s == "constant-toroidal") return DriveKind::ConstantToroidal;
    if (s == "constant-combined") return DriveKind::ConstantCombined;
    if (s == "sinusoidal-toroidal") return DriveKind::SinusoidalToroidal;
    throw ConfigurationError("unknown drive kind '" + s + "'");
}

/// Imposed magnetic field B0(t). Toroidal is x, poloidal is y.
struct MagneticDrive {
    DriveKind kind = DriveKind::ConstantToroidal;
    double Bx = 0.0;
    double By = 0.0;
    double A = 0.0;
    double omega = 0.0;
    double phi = 0.0;
    double C = 0.0;

    static MagneticDrive toroidal(double bx) { return {DriveKind::ConstantToroidal, bx, 0.0, 0, 0, 0, 0}; }
    static MagneticDrive combined(double bx, double by) { return {DriveKind::ConstantCombined, bx, by, 0, 0, 0, 0}; }
    static MagneticDrive sinusoidal(double a, double omega, double phi, double c) {
        return {DriveKind::SinusoidalToroidal, 0.0, 0.0, a, omega, phi, c};
    }

    Vec3 value(double t) const {
        switch (kind) {
            case DriveKind::ConstantToroidal: return {Bx, 0.0, 0.0};
            case DriveKind::ConstantCombined: return {Bx, By, 0.0};
            case DriveKind::SinusoidalToroidal: return {A * std::sin(omega * t + phi) + C, 0.0, 0.0};
        }
        return {0.0, 0.0, 0.0};
    }

    /// Largest |B0| over all time.
    double max_magnitude() const {
        if (kind == DriveKind::SinusoidalToroidal) return std::abs(A) + std::abs(C);
        return std::hypot(Bx, By);
    }

    void validate() const {
        if (kind == DriveKind::SinusoidalToroidal && !(C - std::abs(A) > 0.0))
            throw ConfigurationError("sinusoidal drive requires C - |A| > 0");
        for (double v : {Bx, By, A, omega, phi, C})
            if (!std::isfinite(v)) throw ConfigurationError("drive parameters must be finite");
    }
};

enum class InductionMode { Full, QuasiStatic };

struct SimConfig {
    MaterialProps material;
    Geometry geometry;
    MagneticDrive drive;
    double T0 = 600.0;
    double T_pipe = 560.0;
    double u0 = 0.01;
    double p_ext = 1e5;
    double t_end = 3.0;
    double store_dt = 0.025;
    double cfl = 0.5;
    InductionMode induction_mode = InductionMode::QuasiStatic;
    Vec3 gravity = {0.0, -9.81, 0.0};
    bool joule_heating = true;
    /// Uniform axial body force per unit volume (Pa/m); zero in the campaigns.
    double axial_forcing = 0.0;

    int frame_count() const {
        const double ratio = t_end / store_dt;
        const double rounded = std::round(ratio);
        if (!(store_dt > 0.0) || std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio) || rounded < 1.0)
            throw ConfigurationError("t_end / store_dt must be a positive integer");
        return static_cast<int>(rounded);
    }

    void validate() const {
        material.validate();
        drive.validate();
        frame_count();
        if (!(cfl > 0.0 && cfl <= 1.0)) throw ConfigurationError("cfl must lie in (0, 1]");
        if (!(T0 > 0.0 && T_pipe > 0.0)) throw ConfigurationError("temperatures must be positive");
    }

    KeyValueDoc to_keyvalue() const {
        KeyValueDoc d;
        d.set("material.rho0", material.rho0);
        d.set("material.mu_visc", material.mu_visc);
        d.set("material.mu_B", material.mu_B);
        d.set("material.sigma_el", material.sigma_el);
        d.set("material.beta", material.beta);
        d.set("material.kappa", material.kappa);
        d.set("material.c_p", material.c_p);
        d.set("geometry.length", geometry.length);
        d.set("geometry.side", geometry.side);
        d.set("geometry.pipe_radius", geometry.pipe_radius);
        d.set("geometry.nx", geometry.nx);
        d.set("geometry.ny", geometry.ny);
        d.set("geometry.nz", geometry.nz);
        d.set("drive.kind", to_string(drive.kind));
        d.set("drive.Bx", drive.Bx);
        d.set("drive.By", drive.By);
        d.set("drive.A", drive.A);
        d.set("drive.omega", drive.omega);
        d.set("drive.phi", drive.phi);
        d.set("drive.C", drive.C);
        d.set("simulation.T0", T0);
        d.set("simulation.T_pipe", T_pipe);
        d.set("simulation.u0", u0);
        d.set("simulation.p_ext", p_ext);
        d.set("simulation.t_end", t_end);
        d.set("simulation.store_dt", store_dt);
        d.set("simulation.cfl", cfl);
        d.set("simulation.induction_mode",
              std::string(induction_mode == InductionMode::Full ? "full" : "quasi-static"));
        d.set("simulation.gravity_x", gravity[0]);
        d.set("simulation.gravity_y", gravity[1]);
        d.set("simulation.gravity_z", gravity[2]);
        d.set("simulation.joule_heating", joule_heating);
        d.set("simulation.axial_forcing", axial_forcing);
        return d;
    }

    /// Missing keys keep their defaults.
    static SimConfig from_keyvalue(const KeyValueDoc& d) {
        SimConfig c;
        auto& m = c.material;
        m.rho0 = d.get_double_or("material.rho0", m.rho0);
        m.mu_visc = d.get_double_or("material.mu_visc", m.mu_visc);
        m.mu_B = d.get_double_or("material.mu_B", m.mu_B);
        m.sigma_el = d.get_double_or("material.sigma_el", m.sigma_el);
        m.beta = d.get_double_or("material.beta", m.beta);
        m.kappa = d.get_double_or("material.kappa", m.kappa);
        m.c_p = d.get_double_or("material.c_p", m.c_p);
        auto& g = c.geometry;
        g.length = d.get_double_or("geometry.length", g.length);
        g.side = d.get_double_or("geometry.side", g.side);
        g.pipe_radius = d.get_double_or("geometry.pipe_radius", g.pipe_radius);
        g.nx = static_cast<int>(d.get_int_or("geometry.nx", g.nx));
        g.ny = static_cast<int>(d.get_int_or("geometry.ny", g.ny));
        g.nz = static_cast<int>(d.get_int_or("geometry.nz", g.nz));
        if (d.has("drive.kind")) c.drive.kind = drive_kind_from_string(d.get("drive.kind"));
        c.drive.Bx = d.get_double_or("drive.Bx", c.drive.Bx);
        c.drive.By = d.get_double_or("drive.By", c.drive.By);
        c.drive.A = d.get_double_or("drive.A", c.drive.A);
        c.drive.omega = d.get_double_or("drive.omega", c.drive.omega);
        c.drive.phi = d.get_double_or("drive.phi", c.drive.phi);
        c.drive.C = d.get_double_or("drive.C", c.drive.C);
        c.T0 = d.get_double_or("simulation.T0", c.T0);
        c.T_pipe = d.get_double_or("simulation.T_pipe", c.T_pipe);
        c.u0 = d.get_double_or("simulation.u0", c.u0);
        c.p_ext = d.get_double_or("simulation.p_ext", c.p_ext);
        c.t_end = d.get_double_or("simulation.t_end", c.t_end);
        c.store_dt = d.get_double_or("simulation.store_dt", c.store_dt);
        c.cfl = d.get_double_or("simulation.cfl", c.cfl);
        const std::string mode = d.get_or("simulation.induction_mode", "quasi-static");
        if (mode == "full") c.induction_mode = InductionMode::Full;
        else if (mode == "quasi-static") c.induction_mode = InductionMode::QuasiStatic;
        else throw ConfigurationError("unknown induction mode '" + mode + "'");
        c.gravity = {d.get_double_or("simulation.gravity_x", c.gravity[0]),
                     d.get_double_or("simulation.gravity_y", c.gravity[1]),
                     d.get_double_or("simulation.gravity_z", c.gravity[2])};
        c.joule_heating = d.get_bool_or("simulation.joule_heating", c.joule_heating);
        c.axial_forcing = d.get_double_or("simulation.axial_forcing", c.axial_forcing);
        return c;
    }

    std::string hash() const { return to_keyvalue().hash(); }
};

}  // namespace mhdshred::mhdsim

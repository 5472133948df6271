#pragma once

// Dimensionless impacting-cantilever model: piecewise-linear and smoothed
// vector fields, their derivatives, the elastic restoring force and the
// first-principles estimators for the beam parameters.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace impact {

using State = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Raised when a parameter set or geometry violates its invariants.
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Parameters of the nondimensional model plus the smoothing pair (p, K).
struct ModelParams {
    double xi = 0.03;
    double beta = 0.885;
    double alpha = 5.9;
    double nu = 0.0;
    double forcing = 0.2;
    double omega = 1.0;
    double p = 100.0;
    double k_sign = 100.0;

    double period() const { return 2.0 * std::numbers::pi / omega; }

    void validate() const {
        auto require = [](bool ok, const char* what) {
            if (!ok) throw DomainError(what);
        };
        require(std::isfinite(xi) && xi > 0.0, "xi must be positive");
        require(std::isfinite(beta) && beta >= 0.0, "beta must be non-negative");
        require(std::isfinite(alpha) && alpha >= 0.0, "alpha must be non-negative");
        require(std::isfinite(nu), "nu must be finite");
        require(std::isfinite(forcing) && forcing >= 0.0, "forcing must be non-negative");
        require(std::isfinite(omega) && omega > 0.0, "omega must be positive");
        require(std::isfinite(p) && p > 0.0, "p must be positive");
        require(std::isfinite(k_sign) && k_sign > 0.0, "k_sign must be positive");
    }
};

/// Selector for parameter derivatives and continuation.
/// `log10_p` is the smoothing exponent on a logarithmic scale; `i_l` is the
/// laser-rescaled forcing amplitude (needs a Rescaling to resolve).
enum class Param { xi, beta, alpha, nu, forcing, omega, p, k_sign, log10_p, i_l };

inline std::string_view to_string(Param which) {
    switch (which) {
    case Param::xi: return "xi";
    case Param::beta: return "beta";
    case Param::alpha: return "alpha";
    case Param::nu: return "nu";
    case Param::forcing: return "forcing";
    case Param::omega: return "omega";
    case Param::p: return "p";
    case Param::k_sign: return "k_sign";
    case Param::log10_p: return "log10_p";
    case Param::i_l: return "i_l";
    }
    return "?";
}

inline Param param_from_string(std::string_view name) {
    static constexpr std::array<Param, 10> all{Param::xi,    Param::beta,   Param::alpha,
                                               Param::nu,    Param::forcing, Param::omega,
                                               Param::p,     Param::k_sign, Param::log10_p,
                                               Param::i_l};
    for (Param q : all)
        if (to_string(q) == name) return q;
    if (name == "I") return Param::forcing;
    throw std::invalid_argument("unknown parameter '" + std::string(name) + "'");
}

/// Reads a plain model parameter. `i_l` is not a model field and throws.
inline double get(const ModelParams& mp, Param which) {
    switch (which) {
    case Param::xi: return mp.xi;
    case Param::beta: return mp.beta;
    case Param::alpha: return mp.alpha;
    case Param::nu: return mp.nu;
    case Param::forcing: return mp.forcing;
    case Param::omega: return mp.omega;
    case Param::p: return mp.p;
    case Param::k_sign: return mp.k_sign;
    case Param::log10_p: return std::log10(mp.p);
    case Param::i_l: break;
    }
    throw std::invalid_argument("parameter is not a model field: " + std::string(to_string(which)));
}

inline void set(ModelParams& mp, Param which, double value) {
    switch (which) {
    case Param::xi: mp.xi = value; return;
    case Param::beta: mp.beta = value; return;
    case Param::alpha: mp.alpha = value; return;
    case Param::nu: mp.nu = value; return;
    case Param::forcing: mp.forcing = value; return;
    case Param::omega: mp.omega = value; return;
    case Param::p: mp.p = value; return;
    case Param::k_sign: mp.k_sign = value; return;
    case Param::log10_p: mp.p = std::pow(10.0, value); return;
    case Param::i_l: break;
    }
    throw std::invalid_argument("parameter is not a model field: " + std::string(to_string(which)));
}

// ---------------------------------------------------------------------------
// Switching function H(x1, p) = 1 / (1 + (x1^2)^p)
// ---------------------------------------------------------------------------

/// H and 1 - H evaluated without cancellation. (x1^2)^p is handled through
/// its logarithm so that large exponents saturate instead of overflowing.
struct Switch {
    double h;       // H
    double h_comp;  // 1 - H
    double log_u;   // p * ln(x1^2), -inf at x1 = 0
};

inline Switch switching(double x1, double p) {
    if (x1 == 0.0) return {1.0, 0.0, -std::numeric_limits<double>::infinity()};
    const double log_u = p * std::log(x1 * x1);
    if (log_u > 700.0) return {std::exp(-log_u), 1.0, log_u};
    if (log_u < -700.0) return {1.0, std::exp(log_u), log_u};
    const double u = std::exp(log_u);
    return {1.0 / (1.0 + u), u / (1.0 + u), log_u};
}

inline double switching_h(double x1, double p) { return switching(x1, p).h; }

/// dH/dx1 = -(2p/x1) H (1 - H); zero at the origin (limit for p > 1/2).
inline double switching_h_dx(double x1, double p) {
    if (x1 == 0.0) return 0.0;
    const Switch s = switching(x1, p);
    return -2.0 * p / x1 * s.h * s.h_comp;
}

/// dH/dp = -H (1 - H) ln(x1^2).
inline double switching_h_dp(double x1, double p) {
    if (x1 == 0.0) return 0.0;
    const Switch s = switching(x1, p);
    return -s.h * s.h_comp * std::log(x1 * x1);
}

// ---------------------------------------------------------------------------
// Vector fields
// ---------------------------------------------------------------------------

namespace detail {

// Second components of the free-flight (f1) and contact (f2) fields.
struct Phases {
    double free;
    double contact;
};

inline Phases phase_accelerations(const State& x, double t, const ModelParams& mp) {
    const double drive = mp.forcing * mp.omega * mp.omega * std::cos(mp.omega * t);
    const double free = -x[0] - 2.0 * mp.xi * x[1] + drive;
    const double contact = -(1.0 + mp.alpha) * x[0] - 2.0 * mp.xi * (1.0 + mp.beta) * x[1] +
                           mp.alpha * std::tanh(mp.k_sign * x[0]) + (1.0 + mp.nu) * drive;
    return {free, contact};
}

}  // namespace detail

/// Smoothed field g = H f1 + (1 - H) f2.
inline State rhs_smooth(const State& x, double t, const ModelParams& mp) {
    const Switch s = switching(x[0], mp.p);
    const auto [free, contact] = detail::phase_accelerations(x, t, mp);
    return {x[1], s.h * free + s.h_comp * contact};
}

/// Piecewise-linear field: free flight for |x1| < 1, contact (exact sign) otherwise.
inline State rhs_piecewise(const State& x, double t, const ModelParams& mp) {
    const double drive = mp.forcing * mp.omega * mp.omega * std::cos(mp.omega * t);
    if (std::abs(x[0]) < 1.0) return {x[1], -x[0] - 2.0 * mp.xi * x[1] + drive};
    const double sgn = x[0] > 0.0 ? 1.0 : -1.0;
    return {x[1], -(1.0 + mp.alpha) * x[0] - 2.0 * mp.xi * (1.0 + mp.beta) * x[1] +
                      mp.alpha * sgn + (1.0 + mp.nu) * drive};
}

/// Analytic state Jacobian of rhs_smooth.
inline Mat2 jacobian_state(const State& x, double t, const ModelParams& mp) {
    const Switch s = switching(x[0], mp.p);
    const double dh = switching_h_dx(x[0], mp.p);
    const auto [free, contact] = detail::phase_accelerations(x, t, mp);
    const double th = std::tanh(mp.k_sign * x[0]);
    const double dcontact_dx1 = -(1.0 + mp.alpha) + mp.alpha * mp.k_sign * (1.0 - th * th);

    Mat2 jac;
    jac(0, 0) = 0.0;
    jac(0, 1) = 1.0;
    jac(1, 0) = dh * (free - contact) - s.h + s.h_comp * dcontact_dx1;
    jac(1, 1) = -2.0 * mp.xi * (s.h + s.h_comp * (1.0 + mp.beta));
    return jac;
}

/// d2H/dx1^2, with the x1 -> 0 limit taken for p >= 1.
inline double switching_h_dxx(double x1, double p) {
    if (x1 == 0.0) return p == 1.0 ? -2.0 : 0.0;
    const Switch s = switching(x1, p);
    const double q = s.h * s.h_comp;
    const double dh = -2.0 * p / x1 * q;
    return 2.0 * p / (x1 * x1) * q - 2.0 * p / x1 * dh * (s.h_comp - s.h);
}

/// Second state derivatives: {dJ/dx1, dJ/dx2}. Only the second row of the
/// Jacobian depends on the state.
inline std::array<Mat2, 2> hessian_state(const State& x, double t, const ModelParams& mp) {
    const Switch s = switching(x[0], mp.p);
    const double dh = switching_h_dx(x[0], mp.p);
    const double ddh = switching_h_dxx(x[0], mp.p);
    const auto [free, contact] = detail::phase_accelerations(x, t, mp);
    const double th = std::tanh(mp.k_sign * x[0]);
    const double sech2 = 1.0 - th * th;
    const double dcontact = -(1.0 + mp.alpha) + mp.alpha * mp.k_sign * sech2;
    const double ddcontact = -2.0 * mp.alpha * mp.k_sign * mp.k_sign * sech2 * th;
    const double cross = 2.0 * mp.xi * mp.beta * dh;

    std::array<Mat2, 2> out{Mat2::Zero(), Mat2::Zero()};
    out[0](1, 0) = ddh * (free - contact) - 2.0 * dh * (1.0 + dcontact) + s.h_comp * ddcontact;
    out[0](1, 1) = cross;
    out[1](1, 0) = cross;
    return out;
}

/// Partial derivative of rhs_smooth with respect to a model parameter, at
/// fixed physical time t. The omega derivative carries both the omega^2
/// amplitude factor and the cos(omega t) phase.
inline State jacobian_params(const State& x, double t, const ModelParams& mp, Param which) {
    const Switch s = switching(x[0], mp.p);
    const double c = std::cos(mp.omega * t);
    const double weight = s.h + s.h_comp * (1.0 + mp.nu);  // forcing weight
    double d2 = 0.0;
    switch (which) {
    case Param::xi:
        d2 = -2.0 * x[1] * (s.h + s.h_comp * (1.0 + mp.beta));
        break;
    case Param::beta:
        d2 = -2.0 * mp.xi * x[1] * s.h_comp;
        break;
    case Param::alpha:
        d2 = s.h_comp * (-x[0] + std::tanh(mp.k_sign * x[0]));
        break;
    case Param::nu:
        d2 = s.h_comp * mp.forcing * mp.omega * mp.omega * c;
        break;
    case Param::forcing:
        d2 = weight * mp.omega * mp.omega * c;
        break;
    case Param::omega:
        d2 = weight * mp.forcing *
             (2.0 * mp.omega * c - mp.omega * mp.omega * t * std::sin(mp.omega * t));
        break;
    case Param::p:
    case Param::log10_p: {
        const auto [free, contact] = detail::phase_accelerations(x, t, mp);
        d2 = switching_h_dp(x[0], mp.p) * (free - contact);
        if (which == Param::log10_p) d2 *= mp.p * std::numbers::ln10;
        break;
    }
    default:
        throw std::invalid_argument("jacobian_params: unsupported selector " +
                                    std::string(to_string(which)));
    }
    return {0.0, d2};
}

/// Explicit time derivative of rhs_smooth.
inline State time_derivative(const State& x, double t, const ModelParams& mp) {
    const Switch s = switching(x[0], mp.p);
    const double weight = s.h + s.h_comp * (1.0 + mp.nu);
    return {0.0, -weight * mp.forcing * mp.omega * mp.omega * mp.omega * std::sin(mp.omega * t)};
}

// ---------------------------------------------------------------------------
// Restoring force
// ---------------------------------------------------------------------------

inline double restoring_force(double x1, const ModelParams& mp, bool smoothed) {
    if (!smoothed) {
        if (std::abs(x1) < 1.0) return x1;
        const double sgn = x1 > 0.0 ? 1.0 : -1.0;
        return (1.0 + mp.alpha) * x1 - mp.alpha * sgn;
    }
    const Switch s = switching(x1, mp.p);
    return s.h * x1 + s.h_comp * ((1.0 + mp.alpha) * x1 - mp.alpha * std::tanh(mp.k_sign * x1));
}

/// d/dx1 of the smoothed restoring force.
inline double restoring_force_slope(double x1, const ModelParams& mp) {
    const Switch s = switching(x1, mp.p);
    const double th = std::tanh(mp.k_sign * x1);
    const double contact = (1.0 + mp.alpha) * x1 - mp.alpha * th;
    const double contact_slope = (1.0 + mp.alpha) - mp.alpha * mp.k_sign * (1.0 - th * th);
    return s.h + s.h_comp * contact_slope + switching_h_dx(x1, mp.p) * (x1 - contact);
}

/// Smallest slope of the smoothed restoring force on x1 in (0, 3]. The force
/// is odd, so this covers the symmetric half as well. Sampling is refined
/// inside the switching layer around x1 = 1, whose width scales like 1/p.
inline double min_restoring_slope(const ModelParams& mp) {
    double lowest = std::numeric_limits<double>::infinity();
    // Stay clear of the tanh layer at the origin, where the contact term is
    // multiplied by 1 - H ~ x1^(2p) and cannot change the sign of the slope.
    const double x_start = std::min(0.1, 10.0 / mp.k_sign);
    constexpr int coarse = 4000;
    for (int i = 0; i <= coarse; ++i) {
        const double x1 = x_start + (3.0 - x_start) * i / coarse;
        lowest = std::min(lowest, restoring_force_slope(x1, mp));
    }
    constexpr int fine = 4000;
    for (int i = 0; i <= fine; ++i) {
        const double y = -30.0 + 60.0 * i / fine;  // y = 2p (x1 - 1)
        const double x1 = 1.0 + y / (2.0 * mp.p);
        if (x1 > 0.0 && x1 <= 3.0) lowest = std::min(lowest, restoring_force_slope(x1, mp));
    }
    return lowest;
}

inline bool restoring_force_monotone(const ModelParams& mp) { return min_restoring_slope(mp) > 0.0; }

/// Smoothing exponent above which the smoothed restoring force is monotone,
/// located by bisection in log10(p) on [log10_lo, log10_hi]. Returns p_lo when
/// the force is already monotone there and nullopt when it is still softening
/// at p_hi.
inline std::optional<double> monotone_threshold(ModelParams mp, double log10_lo = 0.0,
                                                double log10_hi = 6.0) {
    mp.p = std::pow(10.0, log10_lo);
    if (restoring_force_monotone(mp)) return mp.p;
    mp.p = std::pow(10.0, log10_hi);
    if (!restoring_force_monotone(mp)) return std::nullopt;
    double lo = log10_lo, hi = log10_hi;
    while (hi - lo > 1e-6) {
        const double mid = 0.5 * (lo + hi);
        mp.p = std::pow(10.0, mid);
        (restoring_force_monotone(mp) ? hi : lo) = mid;
    }
    return std::pow(10.0, hi);
}

// ---------------------------------------------------------------------------
// Parameter estimation from beam geometry
// ---------------------------------------------------------------------------

/// Physical beam data. The effective span for stiffness and frequency
/// estimates is the mass position `mass_position`.
struct BeamGeometry {
    double modulus = 2e11;           // E [Pa]
    double area_moment = 2.08e-12;   // I_sec [m^4]
    double cross_section = 2.5e-5;   // A0 [m^2]
    double density = 8e3;            // rho [kg/m^3]
    double lumped_mass = 0.2116;     // m [kg]
    double length = 0.161;           // L [m]
    double stop_position = 0.071;    // L_i [m]
    double mass_position = 0.1275;   // L_m [m]
    double gap = 1e-3;               // delta [m]

    void validate() const {
        const std::array<double, 9> all{modulus,       area_moment,   cross_section,
                                        density,       lumped_mass,   length,
                                        stop_position, mass_position, gap};
        for (double v : all)
            if (!(std::isfinite(v) && v > 0.0))
                throw DomainError("beam geometry values must be finite and positive");
        if (!(stop_position < mass_position && mass_position <= length))
            throw DomainError("beam geometry requires 0 < L_i < L_m <= L");
    }

    double bending_stiffness() const { return modulus * area_moment; }
    double span() const { return mass_position; }
    double stop_ratio() const { return stop_position / mass_position; }
};

/// Static cantilever deflection for a unit tip load, normalised to 1 at the tip.
inline double static_shape(double zeta) { return 0.5 * zeta * zeta * (3.0 - zeta); }

/// alpha = (1 - (3 - gamma)^2 gamma / 4)^-1 - 1 for a stop at relative position gamma.
inline double estimate_alpha(double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw DomainError("stop ratio gamma must lie in (0, 1)");
    const double denom = 1.0 - 0.25 * (3.0 - gamma) * (3.0 - gamma) * gamma;
    if (!(denom > 0.0)) throw DomainError("stiffness ratio denominator is not positive");
    return 1.0 / denom - 1.0;
}

inline double estimate_alpha(const BeamGeometry& g) {
    g.validate();
    return estimate_alpha(g.stop_ratio());
}

/// Static tip stiffness [N/m], free flight or in contact with the stop.
inline double estimate_tip_stiffness(const BeamGeometry& g, bool contact) {
    g.validate();
    const double span = g.span();
    const double free = 3.0 * g.bending_stiffness() / (span * span * span);
    if (!contact) return free;
    return free * (1.0 + estimate_alpha(g.stop_ratio()));
}

/// Rayleigh quotient for the lowest eigenfrequency [Hz] with the static
/// cubic as trial shape; integrals by 4-point Gauss-Legendre (exact here).
inline double estimate_natural_frequency(const BeamGeometry& g) {
    g.validate();
    static constexpr std::array<double, 4> nodes{-0.8611363115940526, -0.3399810435848563,
                                                 0.3399810435848563, 0.8611363115940526};
    static constexpr std::array<double, 4> weights{0.3478548451374538, 0.6521451548625461,
                                                   0.6521451548625461, 0.3478548451374538};
    double curvature = 0.0;  // int_0^1 (phi'')^2
    double shape_sq = 0.0;   // int_0^1 phi^2
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const double zeta = 0.5 * (nodes[i] + 1.0);
        const double w = 0.5 * weights[i];
        const double phi2 = 3.0 - 3.0 * zeta;
        curvature += w * phi2 * phi2;
        shape_sq += w * static_shape(zeta) * static_shape(zeta);
    }
    const double span = g.span();
    const double stiffness = g.bending_stiffness() * curvature / (span * span * span);
    const double mass = g.lumped_mass * static_shape(1.0) * static_shape(1.0) +
                        g.density * g.cross_section * span * shape_sq;
    return std::sqrt(stiffness / mass) / (2.0 * std::numbers::pi);
}

// ---------------------------------------------------------------------------
// Laser-point rescaling
// ---------------------------------------------------------------------------

/// Map between the model scales (forcing I, displacement a; unit length is
/// the mass-point grazing displacement Delta) and the reporting scales used
/// against laser measurements (I_l, a_l; unit length Delta_l).
///
/// I = (d/m) A / Delta and I_l = (d/m) A / Delta_l, hence I_l = I Delta / Delta_l.
/// The laser point moves in proportion to the mass point in the static
/// shape, so it reaches Delta_l exactly when the mass reaches Delta and
/// a_l = a.
struct Rescaling {
    double mass_force_ratio = 2.0 / 3.0;  // m/d
    double grazing_displacement = 1.0;    // Delta_l [m]
    double base_amplitude = 0.0;          // A [m]
    double model_grazing_displacement = 1.0;  // Delta [m]

    void validate() const {
        if (!(std::isfinite(mass_force_ratio) && mass_force_ratio > 0.0))
            throw DomainError("mass_force_ratio must be positive");
        if (!(std::isfinite(grazing_displacement) && grazing_displacement > 0.0))
            throw DomainError("grazing_displacement must be positive");
        if (!(std::isfinite(model_grazing_displacement) && model_grazing_displacement > 0.0))
            throw DomainError("model_grazing_displacement must be positive");
    }

    /// I_l implied by the base amplitude: (d/m) A / Delta_l.
    double forcing_from_base() const {
        validate();
        return base_amplitude / (mass_force_ratio * grazing_displacement);
    }

    /// Base amplitude A [m] that produces a given I_l.
    double base_from_forcing(double i_l) const {
        validate();
        return i_l * mass_force_ratio * grazing_displacement;
    }

    /// I / I_l = Delta_l / Delta.
    double forcing_ratio() const {
        validate();
        return grazing_displacement / model_grazing_displacement;
    }

    double to_laser_forcing(double forcing) const { return forcing / forcing_ratio(); }
    double from_laser_forcing(double i_l) const { return i_l * forcing_ratio(); }
    double to_laser_displacement(double a) const { return a; }
    double laser_displacement_metres(double a_l) const { return a_l * grazing_displacement; }

    /// Grazing displacements from the static shape: Delta at the mass for a
    /// stop deflection `gap`, Delta_l at `laser_position` (on the rigidly
    /// rotating overhang when it lies beyond the mass).
    static Rescaling from_geometry(const BeamGeometry& g, double mass_force_ratio,
                                   double laser_position) {
        g.validate();
        if (!(laser_position > 0.0 && laser_position <= g.length))
            throw DomainError("laser position must lie on the beam");
        Rescaling r;
        r.mass_force_ratio = mass_force_ratio;
        r.model_grazing_displacement = g.gap / static_shape(g.stop_ratio());
        const double zeta = laser_position / g.span();
        const double gain = zeta <= 1.0 ? static_shape(zeta) : 1.0 + 1.5 * (zeta - 1.0);
        r.grazing_displacement = r.model_grazing_displacement * gain;
        r.validate();
        return r;
    }
};

inline double rescale_forcing(const ModelParams& mp, const Rescaling& r) {
    return r.to_laser_forcing(mp.forcing);
}

inline double unscale_forcing(double i_l, const Rescaling& r) { return r.from_laser_forcing(i_l); }

}  // namespace impact

#pragma once

// Adaptive Dormand-Prince 5(4) integration of the smoothed system with
// continuous (dense) output, plus the variational equations for the
// monodromy matrix of a periodic orbit.

#include "impact/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace impact {

class IntegrationError : public std::runtime_error {
public:
    IntegrationError(const std::string& what, double where)
        : std::runtime_error(what), time(where) {}
    double time;
};

struct IvpSettings {
    double rel_tol = 1e-8;
    double abs_tol = 1e-10;
    double max_step = 0.1;
    bool dense_output = true;

    /// Tolerances used when the integrator serves as a verification oracle.
    static IvpSettings oracle() { return {1e-10, 1e-12, 0.1, true}; }

    void validate() const {
        if (!(rel_tol > 0.0 && rel_tol <= 1e-2) || !(abs_tol > 0.0 && abs_tol <= 1e-2))
            throw std::invalid_argument("IVP tolerances must lie in (0, 1e-2]");
        if (!(max_step > 0.0)) throw std::invalid_argument("IVP max_step must be positive");
    }
};

namespace dopri {

inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
inline constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                        a75 = -2187.0 / 6784, a76 = 11.0 / 84;
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                        e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
inline constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                        d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                        d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

}  // namespace dopri

/// Samples of an integrated solution. With dense output, each step carries
/// the five coefficient vectors of the 4th-order continuous extension.
template <int Dim>
struct BasicTrajectory {
    using Vec = Eigen::Matrix<double, Dim, 1>;

    std::vector<double> times;
    std::vector<Vec> states;
    std::vector<std::array<Vec, 5>> dense;  // one entry per step, if requested

    bool has_dense() const { return !dense.empty(); }
    double front_time() const { return times.front(); }
    double back_time() const { return times.back(); }
    const Vec& back() const { return states.back(); }

    Vec operator()(double t) const {
        if (t <= times.front()) return states.front();
        if (t >= times.back()) return states.back();
        const auto it = std::upper_bound(times.begin(), times.end(), t);
        const std::size_t k = static_cast<std::size_t>(it - times.begin()) - 1;
        const double h = times[k + 1] - times[k];
        const double theta = (t - times[k]) / h;
        if (!has_dense()) return states[k] + theta * (states[k + 1] - states[k]);
        const auto& r = dense[k];
        const double eta = 1.0 - theta;
        return r[0] + theta * (r[1] + eta * (r[2] + theta * (r[3] + eta * r[4])));
    }
};

using Trajectory = BasicTrajectory<2>;

/// Generic adaptive integration of y' = f(t, y) over [t0, t1]. When `store`
/// is false only the final state is kept.
template <int Dim, class Rhs>
BasicTrajectory<Dim> integrate_system(Rhs&& f, const Eigen::Matrix<double, Dim, 1>& y0, double t0,
                                      double t1, const IvpSettings& settings, bool store = true) {
    using namespace dopri;
    using Vec = Eigen::Matrix<double, Dim, 1>;
    settings.validate();
    if (!(t1 > t0)) throw std::invalid_argument("integration interval must be nonempty");
    if (!y0.allFinite()) throw IntegrationError("non-finite initial state", t0);

    BasicTrajectory<Dim> out;
    out.times.push_back(t0);
    out.states.push_back(y0);

    auto error_norm = [&](const Vec& err, const Vec& ya, const Vec& yb) {
        double sum = 0.0;
        for (int i = 0; i < Dim; ++i) {
            const double sc =
                settings.abs_tol + settings.rel_tol * std::max(std::abs(ya[i]), std::abs(yb[i]));
            sum += (err[i] / sc) * (err[i] / sc);
        }
        return std::sqrt(sum / Dim);
    };

    double t = t0;
    Vec y = y0;
    Vec k1 = f(t, y);
    double h = std::min(settings.max_step, 0.01 * (t1 - t0));
    {
        // Hairer's starting step estimate.
        const double d0 = error_norm(y, y, y);
        const double d1n = error_norm(k1, y, y);
        if (d0 > 1e-5 && d1n > 1e-5) h = std::min(h, 0.01 * d0 / d1n);
        h = std::max(h, 1e-10 * (t1 - t0));
    }

    bool last_rejected = false;
    while (t < t1) {
        if (t + h > t1) h = t1 - t;
        if (h < 1e-14 * std::max(1.0, std::abs(t))) {
            std::ostringstream msg;
            msg << "step size underflow at t = " << t;
            throw IntegrationError(msg.str(), t);
        }
        const Vec k2 = f(t + c2 * h, y + h * (a21 * k1));
        const Vec k3 = f(t + c3 * h, y + h * (a31 * k1 + a32 * k2));
        const Vec k4 = f(t + c4 * h, y + h * (a41 * k1 + a42 * k2 + a43 * k3));
        const Vec k5 = f(t + c5 * h, y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
        const Vec k6 = f(t + h, y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
        const Vec y1 = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
        const Vec k7 = f(t + h, y1);
        const Vec err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
        const double en = error_norm(err, y, y1);
        if (!std::isfinite(en) || !y1.allFinite()) {
            if (h < 1e-10) throw IntegrationError("non-finite state", t);
            h *= 0.25;
            last_rejected = true;
            continue;
        }
        if (en <= 1.0) {
            if (store && settings.dense_output) {
                std::array<Vec, 5> r;
                r[0] = y;
                r[1] = y1 - y;
                r[2] = h * k1 - r[1];
                r[3] = r[1] - h * k7 - r[2];
                r[4] = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
                out.dense.push_back(r);
            }
            t = (t1 - (t + h) < 1e-14 * std::abs(t1)) ? t1 : t + h;
            y = y1;
            k1 = k7;
            if (store) {
                out.times.push_back(t);
                out.states.push_back(y);
            }
            double fac = 0.9 * std::pow(std::max(en, 1e-10), -0.2);
            fac = std::clamp(fac, 0.2, last_rejected ? 1.0 : 5.0);
            h = std::min(h * fac, settings.max_step);
            last_rejected = false;
        } else {
            h *= std::max(0.2, 0.9 * std::pow(en, -0.2));
            last_rejected = true;
        }
    }
    if (!store) {
        out.times.push_back(t);
        out.states.push_back(y);
    }
    return out;
}

/// Integrates the smoothed system. The step is capped at T/50 so the
/// forcing phase is always resolved.
inline Trajectory integrate(const State& x0, double t0, double t1, const ModelParams& mp,
                            IvpSettings settings = {}) {
    mp.validate();
    settings.max_step = std::min(settings.max_step, mp.period() / 50.0);
    return integrate_system<2>([&](double t, const State& x) { return rhs_smooth(x, t, mp); }, x0,
                               t0, t1, settings);
}

/// Final state only; used for long transients.
inline State advance(const State& x0, double t0, double t1, const ModelParams& mp,
                     IvpSettings settings = {}) {
    mp.validate();
    settings.max_step = std::min(settings.max_step, mp.period() / 50.0);
    return integrate_system<2>([&](double t, const State& x) { return rhs_smooth(x, t, mp); }, x0,
                               t0, t1, settings, false)
        .back();
}

using Multipliers = std::array<std::complex<double>, 2>;

/// Eigenvalues of a 2x2 matrix from its characteristic polynomial,
/// ordered by decreasing modulus.
inline Multipliers eigenvalues2(const Mat2& m) {
    const double tr = m.trace();
    const double det = m.determinant();
    const std::complex<double> disc = std::sqrt(std::complex<double>(tr * tr - 4.0 * det));
    // Avoid cancellation in the smaller root.
    const std::complex<double> big = 0.5 * (tr + (tr >= 0.0 ? disc : -disc));
    const std::complex<double> small = std::abs(big) > 0.0 ? det / big : 0.5 * (tr - disc);
    Multipliers mu{big, small};
    if (std::abs(mu[1]) > std::abs(mu[0])) std::swap(mu[0], mu[1]);
    return mu;
}

struct MonodromyResult {
    Mat2 matrix;
    Multipliers multipliers;
    BasicTrajectory<6> flow;  // (x1, x2, Y00, Y10, Y01, Y11) over one period
};

/// Integrates x' = g(x, t) together with Y' = J(x, t) Y, Y(0) = I over one
/// forcing period starting at t = 0.
inline MonodromyResult monodromy(const State& orbit_start, const ModelParams& mp,
                                 IvpSettings settings = {}) {
    using Vec6 = Eigen::Matrix<double, 6, 1>;
    mp.validate();
    const double period = mp.period();
    settings.max_step = std::min(settings.max_step, period / 50.0);
    Vec6 y0;
    y0 << orbit_start, 1.0, 0.0, 0.0, 1.0;
    auto rhs = [&](double t, const Vec6& y) {
        const State x = y.head<2>();
        const Mat2 jac = jacobian_state(x, t, mp);
        const Mat2 ym = Eigen::Map<const Mat2>(y.data() + 2);
        const Mat2 dy = jac * ym;
        Vec6 out;
        out.head<2>() = rhs_smooth(x, t, mp);
        out.segment<4>(2) = Eigen::Map<const Eigen::Vector4d>(dy.data());
        return out;
    };
    MonodromyResult res;
    res.flow = integrate_system<6>(rhs, y0, 0.0, period, settings);
    res.matrix = Eigen::Map<const Mat2>(res.flow.back().data() + 2);
    res.multipliers = eigenvalues2(res.matrix);
    return res;
}

}  // namespace impact

#pragma once

// Reference values computed independently of the library code paths.

#include "impact/bvp.hpp"
#include "impact/ivp.hpp"
#include "impact/model.hpp"

#include <array>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>

namespace oracle {

/// Steady amplitude of x'' + 2 xi x' + x = I Omega^2 cos(Omega t).
inline double linear_amplitude(double forcing, double omega, double xi) {
    const double d = 1.0 - omega * omega;
    return forcing * omega * omega / std::sqrt(d * d + 4.0 * xi * xi * omega * omega);
}

/// H evaluated in extended precision straight from its definition.
inline long double switching_h(long double x1, long double p) {
    return 1.0L / (1.0L + std::pow(x1 * x1, p));
}

/// Trace of the state Jacobian: d g2 / d x2 = -2 xi (H + (1 - H)(1 + beta)).
inline double jacobian_trace(double x1, const impact::ModelParams& mp) {
    const long double h = switching_h(x1, mp.p);
    return static_cast<double>(-2.0L * mp.xi * (h + (1.0L - h) * (1.0L + mp.beta)));
}

inline constexpr std::array<double, 5> gauss5_nodes{-0.9061798459386640, -0.5384693101056831, 0.0,
                                                    0.5384693101056831, 0.9061798459386640};
inline constexpr std::array<double, 5> gauss5_weights{0.2369268850561891, 0.4786286704993665,
                                                      0.5688888888888889, 0.4786286704993665,
                                                      0.2369268850561891};

/// Integral of f over [a, b] with `pieces` panels of 5-point Gauss-Legendre.
template <class F>
double gauss_integral(F&& f, double a, double b, int pieces) {
    double sum = 0.0;
    const double h = (b - a) / pieces;
    for (int k = 0; k < pieces; ++k) {
        const double mid = a + (k + 0.5) * h;
        for (std::size_t i = 0; i < gauss5_nodes.size(); ++i)
            sum += 0.5 * h * gauss5_weights[i] * f(mid + 0.5 * h * gauss5_nodes[i]);
    }
    return sum;
}

/// exp of the trace integral along an IVP monodromy flow, panel-wise on the
/// integrator's own steps.
inline double liouville_determinant(const impact::MonodromyResult& res, const impact::ModelParams& mp) {
    const auto& flow = res.flow;
    double integral = 0.0;
    for (std::size_t k = 0; k + 1 < flow.times.size(); ++k)
        integral += gauss_integral([&](double t) { return jacobian_trace(flow(t)[0], mp); },
                                   flow.times[k], flow.times[k + 1], 2);
    return std::exp(integral);
}

/// Same identity along a collocation orbit, panel-wise on its mesh.
inline double liouville_determinant(const impact::PeriodicOrbit& orbit) {
    const auto& mesh = orbit.mesh;
    const impact::Collocation col(mesh);
    double integral = 0.0;
    for (int j = 0; j < mesh.intervals(); ++j)
        integral += gauss_integral(
            [&](double s) { return jacobian_trace(col.evaluate(orbit.coefficients, s)[0], orbit.params); },
            mesh.breaks[j], mesh.breaks[j + 1], 4);
    return std::exp(integral * orbit.period());
}

/// Fresh, empty scratch directory under the system temp directory.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("impact_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace oracle

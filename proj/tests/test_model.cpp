#include "impact/model.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

using namespace impact;

namespace {

constexpr double kPi = std::numbers::pi;

ModelParams random_params(std::mt19937& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ModelParams mp;
    mp.xi = 0.01 + 0.1 * u(rng);
    mp.beta = 2.0 * u(rng);
    mp.alpha = 12.0 * u(rng);
    mp.nu = 2.0 * u(rng) - 0.5;
    mp.forcing = 0.5 * u(rng);
    mp.omega = 0.3 + 2.0 * u(rng);
    mp.p = std::pow(10.0, 0.5 + 2.0 * u(rng));
    return mp;
}

}  // namespace

// --- switching function -------------------------------------------------------

TEST(Switching, SymmetricAndInRange) {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> ux(-3.0, 3.0), up(0.0, 3.0);
    for (int i = 0; i < 2000; ++i) {
        const double x = ux(rng), p = std::pow(10.0, up(rng));
        const double h = switching_h(x, p);
        EXPECT_EQ(h, switching_h(-x, p));
        EXPECT_GE(h, 0.0);
        EXPECT_LE(h, 1.0);
        if (std::abs(x) < 3.0 && p < 100.0) EXPECT_GT(h, 0.0);
    }
}

TEST(Switching, HalfAtTheStopForEveryExponent) {
    for (double p : {0.5, 1.0, std::pow(10.0, 1.1), 100.0, 1000.0, 1e4, 1e6}) {
        EXPECT_EQ(switching_h(1.0, p), 0.5) << "p = " << p;
        EXPECT_EQ(switching_h(-1.0, p), 0.5) << "p = " << p;
    }
}

TEST(Switching, StrictlyDecreasingInMagnitude) {
    for (double p : {1.0, 10.0, 100.0, 1000.0}) {
        Switch prev = switching(1e-3, p);
        for (int i = 1; i <= 3000; ++i) {
            const double x = 1e-3 + 3.0 * i / 3000.0;
            const Switch s = switching(x, p);
            if (std::abs(s.log_u) < 600.0 && std::abs(prev.log_u) < 600.0) {
                // Whichever of H and 1 - H is resolved in double must move.
                EXPECT_LE(s.h, prev.h);
                EXPECT_TRUE(s.h < prev.h || s.h_comp > prev.h_comp) << "x = " << x << ", p = " << p;
            }
            prev = s;
        }
    }
}

TEST(Switching, MatchesExtendedPrecisionDefinition) {
    const double h = switching_h(1.2, 100.0);
    const double ref = static_cast<double>(oracle::switching_h(1.2L, 100.0L));
    EXPECT_NEAR(h, ref, 1e-12 * ref);
    EXPECT_NEAR(h, 1.47e-16, 0.01 * 1.47e-16);  // stated to about 1%
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> ux(0.05, 3.0), up(0.0, 2.5);
    for (int i = 0; i < 500; ++i) {
        const double x = ux(rng), p = std::pow(10.0, up(rng));
        const long double ref_h = oracle::switching_h(x, p);
        EXPECT_NEAR(switching_h(x, p), static_cast<double>(ref_h), 1e-14 + 1e-12 * ref_h);
    }
}

TEST(Switching, OverflowSaturatesToZero) {
    for (double p : {1000.0, 1e4, 1e8}) {
        const Switch s = switching(3.0, p);
        EXPECT_TRUE(std::isfinite(s.h));
        EXPECT_EQ(s.h, 0.0);
        EXPECT_EQ(s.h_comp, 1.0);
        EXPECT_TRUE(std::isfinite(switching_h_dx(3.0, p)));
        const Switch inner = switching(0.3, p);
        EXPECT_EQ(inner.h, 1.0);
        EXPECT_TRUE(std::isfinite(switching_h_dx(0.3, p)));
    }
    const State g = rhs_smooth(State(3.0, 1.0), 0.0, ModelParams{.p = 1e4});
    EXPECT_TRUE(g.allFinite());
    EXPECT_EQ(switching_h(0.0, 100.0), 1.0);
}

// --- vector field ----------------------------------------------------------------

TEST(VectorField, PointwiseLimitOfLargeExponent) {
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> ux(-3.0, 3.0), uv(-5.0, 5.0);
    ModelParams mp;
    mp.p = 1e4;
    int checked = 0;
    while (checked < 1000) {
        const double x1 = ux(rng);
        if (std::abs(x1 - 1.0) <= 0.05 || std::abs(x1 + 1.0) <= 0.05) continue;
        const State x(x1, uv(rng));
        const double t = 2.0 * kPi * ux(rng);
        const State diff = rhs_smooth(x, t, mp) - rhs_piecewise(x, t, mp);
        EXPECT_LT(diff.lpNorm<Eigen::Infinity>(), 1e-9) << "x1 = " << x1;
        ++checked;
    }
}

TEST(VectorField, TieAtTheStopUsesContactBranch) {
    ModelParams mp;
    mp.forcing = 0.0;
    const State g = rhs_piecewise(State(1.0, 0.5), 0.0, mp);
    const double contact = -(1.0 + mp.alpha) + mp.alpha - 2.0 * mp.xi * (1.0 + mp.beta) * 0.5;
    EXPECT_DOUBLE_EQ(g[1], contact);
}

TEST(VectorField, OddForcingSymmetry) {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> ux(-3.0, 3.0), u01(0.0, 1.0);
    for (int i = 0; i < 2000; ++i) {
        const ModelParams mp = random_params(rng);
        const State x(ux(rng), ux(rng));
        const double period = mp.period();
        const double t = period * u01(rng);
        const State a = rhs_smooth(-x, t + 0.5 * period, mp);
        const State b = rhs_smooth(x, t, mp);
        EXPECT_LT((a + b).lpNorm<Eigen::Infinity>(), 1e-12);
        const State c = rhs_piecewise(-x, t + 0.5 * period, mp);
        const State d = rhs_piecewise(x, t, mp);
        if (std::abs(x[0]) != 1.0) EXPECT_LT((c + d).lpNorm<Eigen::Infinity>(), 1e-12);
    }
}

TEST(VectorField, JacobiansMatchCentralDifferences) {
    std::mt19937 rng(2024);
    std::uniform_real_distribution<double> ux(-3.0, 3.0), u01(0.0, 1.0);
    const std::array<double, 3> exponents{std::pow(10.0, 1.1), std::pow(10.0, 1.5), 100.0};
    for (int i = 0; i < 1000; ++i) {
        ModelParams mp;
        mp.nu = i % 2 == 0 ? 0.0 : 1.0;
        mp.omega = 0.5 + 1.5 * u01(rng);
        mp.p = exponents[i % exponents.size()];
        const State x(ux(rng), ux(rng));
        const double t = mp.period() * u01(rng);

        const Mat2 jac = jacobian_state(x, t, mp);
        Mat2 fd;
        for (int c = 0; c < 2; ++c) {
            const double h = 1e-6 * std::max(1.0, std::abs(x[c]));
            State xp = x, xm = x;
            xp[c] += h;
            xm[c] -= h;
            fd.col(c) = (rhs_smooth(xp, t, mp) - rhs_smooth(xm, t, mp)) / (2.0 * h);
        }
        const double scale = std::max(1.0, jac.lpNorm<Eigen::Infinity>());
        EXPECT_LT((jac - fd).lpNorm<Eigen::Infinity>(), 1e-6 * scale) << "x = " << x.transpose();

        const auto hess = hessian_state(x, t, mp);
        for (int c = 0; c < 2; ++c) {
            const double h = 1e-6 * std::max(1.0, std::abs(x[c]));
            State xp = x, xm = x;
            xp[c] += h;
            xm[c] -= h;
            const Mat2 dj = (jacobian_state(xp, t, mp) - jacobian_state(xm, t, mp)) / (2.0 * h);
            const double hs = std::max(1.0, hess[c].lpNorm<Eigen::Infinity>());
            EXPECT_LT((hess[c] - dj).lpNorm<Eigen::Infinity>(), 1e-6 * hs);
        }

        for (Param which : {Param::xi, Param::beta, Param::alpha, Param::nu, Param::forcing,
                            Param::omega, Param::log10_p}) {
            const double v = get(mp, which);
            const double h = 1e-6 * std::max(1.0, std::abs(v));
            ModelParams a = mp, b = mp;
            set(a, which, v + h);
            set(b, which, v - h);
            const State fdp = (rhs_smooth(x, t, a) - rhs_smooth(x, t, b)) / (2.0 * h);
            const State an = jacobian_params(x, t, mp, which);
            const double ps = std::max(1.0, an.lpNorm<Eigen::Infinity>());
            EXPECT_LT((an - fdp).lpNorm<Eigen::Infinity>(), 1e-6 * ps) << to_string(which);
        }
    }
}

// --- restoring force -----------------------------------------------------------

TEST(RestoringForce, PiecewiseIsContinuousAndLinear) {
    ModelParams mp;
    EXPECT_DOUBLE_EQ(restoring_force(1.0, mp, false), 1.0);
    EXPECT_DOUBLE_EQ(restoring_force(std::nextafter(1.0, 0.0), mp, false), std::nextafter(1.0, 0.0));
    EXPECT_DOUBLE_EQ(restoring_force(-1.0, mp, false), -1.0);
    EXPECT_DOUBLE_EQ(restoring_force(2.0, mp, false), 6.9 * 2.0 - 5.9);
    EXPECT_NEAR(restoring_force(2.0, mp, false), 7.9, 1e-14);
    EXPECT_DOUBLE_EQ(restoring_force(-2.0, mp, false), -7.9);
    for (double p : {1.0, 10.0, 100.0, 1e4}) {
        mp.p = p;
        const double expected = 0.5 * 1.0 + 0.5 * (1.0 + 5.9 - 5.9 * std::tanh(100.0));
        EXPECT_NEAR(restoring_force(1.0, mp, true), expected, 1e-12);
        EXPECT_NEAR(restoring_force(1.0, mp, true), 1.0, 1e-12);
    }
}

TEST(RestoringForce, MonotoneAboveReportedThreshold) {
    for (auto [alpha, beta] : {std::pair{5.9, 0.885}, std::pair{10.0, 1.5}}) {
        ModelParams mp;
        mp.alpha = alpha;
        mp.beta = beta;
        const auto threshold = monotone_threshold(mp, -1.0, 6.0);
        ASSERT_TRUE(threshold.has_value());
        const double lp = std::log10(*threshold);
        if (lp > -0.95) {
            mp.p = std::pow(10.0, lp - 0.05);
            EXPECT_FALSE(restoring_force_monotone(mp)) << "alpha = " << alpha;
        }
        mp.p = std::pow(10.0, lp + 0.05);
        EXPECT_TRUE(restoring_force_monotone(mp)) << "alpha = " << alpha;
    }
    ModelParams hard;
    hard.alpha = 10.0;
    hard.beta = 1.5;
    hard.p = std::pow(10.0, 1.1);
    EXPECT_FALSE(restoring_force_monotone(hard));
    hard.p = 1000.0;
    EXPECT_TRUE(restoring_force_monotone(hard));
}

TEST(RestoringForce, SlopeMatchesDifferenceQuotient) {
    ModelParams mp;
    mp.alpha = 10.0;
    mp.p = std::pow(10.0, 1.5);
    for (double x = 0.2; x < 3.0; x += 0.0137) {
        const double h = 1e-6;
        const double fd = (restoring_force(x + h, mp, true) - restoring_force(x - h, mp, true)) / (2 * h);
        EXPECT_NEAR(restoring_force_slope(x, mp), fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
}

// --- parameter estimation ---------------------------------------------------------

TEST(Estimation, AlphaFormulaAndLimits) {
    const double gamma = 0.588;
    const double ref = 1.0 / (1.0 - 0.25 * (3.0 - gamma) * (3.0 - gamma) * gamma) - 1.0;
    EXPECT_NEAR(estimate_alpha(gamma), ref, 1e-14 * ref);
    EXPECT_NEAR(estimate_alpha(gamma), 5.91, 0.01);
    EXPECT_LT(estimate_alpha(1e-6), 1e-5);
    EXPECT_GT(estimate_alpha(1.0 - 1e-6), 1e5);
    double prev = 0.0;
    for (int i = 1; i < 1000; ++i) {
        const double a = estimate_alpha(i / 1000.0);
        EXPECT_GT(a, prev);
        prev = a;
    }
    EXPECT_THROW(estimate_alpha(0.0), DomainError);
    EXPECT_THROW(estimate_alpha(1.0), DomainError);
    EXPECT_THROW(estimate_alpha(-0.2), DomainError);
}

TEST(Estimation, TableGeometry) {
    const BeamGeometry g;
    EXPECT_NEAR(estimate_alpha(g), 4.9, 0.1);
    EXPECT_NEAR(estimate_natural_frequency(g), 8.4, 0.1);

    // Closed form: k = 3 EI / L^3, M = m + (33/140) rho A L.
    const double ei = 2e11 * 2.08e-12;
    const double span = 0.1275;
    const double k = 3.0 * ei / (span * span * span);
    const double mass = 0.2116 + 33.0 / 140.0 * 8e3 * 2.5e-5 * span;
    const double f = std::sqrt(k / mass) / (2.0 * kPi);
    EXPECT_NEAR(estimate_natural_frequency(g), f, 1e-12 * f);
    EXPECT_NEAR(estimate_natural_frequency(g), 8.37, 0.05);

    EXPECT_NEAR(estimate_tip_stiffness(g, false), k, 1e-12 * k);
    EXPECT_NEAR(estimate_tip_stiffness(g, false), 602.0, 1.0);
    const double ratio = estimate_tip_stiffness(g, true) / estimate_tip_stiffness(g, false);
    EXPECT_NEAR(ratio - 1.0, estimate_alpha(g), 1e-13);
}

TEST(Estimation, Limits) {
    BeamGeometry g;
    g.lumped_mass = 1e9;
    const double span = g.mass_position;
    const double limit =
        std::sqrt(3.0 * g.bending_stiffness() / (g.lumped_mass * span * span * span)) / (2.0 * kPi);
    EXPECT_NEAR(estimate_natural_frequency(g), limit, 1e-9 * limit);

    BeamGeometry near_clamp;
    near_clamp.stop_position = 1e-9;
    EXPECT_NEAR(estimate_tip_stiffness(near_clamp, true), estimate_tip_stiffness(near_clamp, false),
                1e-6 * estimate_tip_stiffness(near_clamp, false));

    BeamGeometry bad;
    bad.stop_position = 0.2;
    EXPECT_THROW(estimate_alpha(bad), DomainError);
    bad = BeamGeometry{};
    bad.modulus = -1.0;
    EXPECT_THROW(estimate_natural_frequency(bad), DomainError);
}

// --- rescaling ---------------------------------------------------------------------

TEST(Rescaling, IdentityAndRoundTrip) {
    const Rescaling same;
    EXPECT_EQ(same.to_laser_forcing(0.2), 0.2);

    const Rescaling r = Rescaling::from_geometry(BeamGeometry{}, 2.0 / 3.0, 0.149);
    std::mt19937 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const double forcing = u(rng);
        const double back = r.from_laser_forcing(r.to_laser_forcing(forcing));
        EXPECT_NEAR(back, forcing, 1e-15);
        ModelParams mp;
        mp.forcing = forcing;
        EXPECT_NEAR(unscale_forcing(rescale_forcing(mp, r), r), forcing, 1e-15);
    }
}

TEST(Rescaling, LaserForcingFromBaseAmplitude) {
    Rescaling r;
    r.mass_force_ratio = 2.0 / 3.0;
    r.grazing_displacement = 1.1e-3;
    r.base_amplitude = 4.0e-5;
    EXPECT_NEAR(r.forcing_from_base(), 1.5 * 4.0e-5 / 1.1e-3, 1e-15);
    EXPECT_NEAR(r.base_from_forcing(r.forcing_from_base()), 4.0e-5, 1e-18);
}

TEST(Rescaling, RejectsInvalidScales) {
    Rescaling r;
    r.grazing_displacement = 0.0;
    EXPECT_THROW(r.validate(), DomainError);
    EXPECT_THROW(r.to_laser_forcing(0.1), DomainError);
    r = Rescaling{};
    r.mass_force_ratio = -1.0;
    EXPECT_THROW(r.validate(), DomainError);
    EXPECT_THROW(Rescaling::from_geometry(BeamGeometry{}, 2.0 / 3.0, 0.5), DomainError);
}

TEST(Params, ValidationAndSelectors) {
    ModelParams mp;
    EXPECT_NO_THROW(mp.validate());
    mp.p = -1.0;
    EXPECT_THROW(mp.validate(), DomainError);
    mp = ModelParams{};
    mp.omega = 0.0;
    EXPECT_THROW(mp.validate(), DomainError);
    mp = ModelParams{};
    set(mp, Param::log10_p, 2.0);
    EXPECT_NEAR(mp.p, 100.0, 1e-12);
    EXPECT_NEAR(get(mp, Param::log10_p), 2.0, 1e-15);
    EXPECT_EQ(param_from_string("omega"), Param::omega);
    EXPECT_THROW(param_from_string("gamma"), std::invalid_argument);
}

#include "impact/continuation.hpp"
#include "impact/scenarios.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace impact;

namespace {

/// Frequency response of the resonance configuration, computed once.
const Branch& resonance_branch() {
    static const Branch b = frequency_response(ModelParams{}, 0.3, 3.0);
    return b;
}

double closest_multiplier_gap(const Multipliers& mu) {
    return std::min(std::abs(mu[0] - 1.0), std::abs(mu[1] - 1.0));
}

}  // namespace

TEST(ContinueBranch, LinearResonanceEverywhere) {
    ModelParams mp;
    mp.forcing = 0.01;
    mp.p = 1000.0;
    mp.omega = 0.2;
    const PeriodicOrbit start = settled_orbit(mp);
    const Branch b = continue_branch(start, ParamAxis::make(Param::omega), 0.2, 2.0);
    EXPECT_EQ(b.termination, Termination::range);
    EXPECT_EQ(b.fold_count(), 0u);
    ASSERT_GT(b.points.size(), 10u);
    for (std::size_t i = 0; i < b.points.size(); ++i) {
        const BranchPoint& pt = b.points[i];
        if (pt.parameter < 0.2 || pt.parameter > 2.0) continue;
        const double expected = oracle::linear_amplitude(mp.forcing, pt.parameter, mp.xi);
        EXPECT_NEAR(pt.amplitude, expected, 1e-6 * expected) << "omega = " << pt.parameter;
        EXPECT_TRUE(pt.stable);
        EXPECT_GT(pt.tangent_parameter, 0.0);
        if (i > 0) EXPECT_GT(pt.parameter, b.points[i - 1].parameter);
    }
}

TEST(ContinueBranch, ResonanceHasTwoFolds) {
    const Branch& b = resonance_branch();
    ASSERT_EQ(b.fold_count(), 2u);
    const double w1 = b.points[b.folds[0]].parameter, w2 = b.points[b.folds[1]].parameter;
    EXPECT_NEAR(std::max(w1, w2), 2.305, 0.01);
    EXPECT_NEAR(std::min(w1, w2), 1.112, 0.01);
}

TEST(ContinueBranch, PointInvariants) {
    const Branch& b = resonance_branch();
    const StepControls ctl;
    for (std::size_t i = 0; i < b.points.size(); ++i) {
        const BranchPoint& pt = b.points[i];
        EXPECT_LE(std::abs(pt.tangent_parameter), 1.0 + 1e-12);
        if (i > 0) EXPECT_LE(std::abs(pt.parameter - b.points[i - 1].parameter), ctl.max + 1e-12);
        if (pt.is_fold) {
            EXPECT_LT(std::abs(pt.tangent_parameter), 1e-6);
            EXPECT_LT(closest_multiplier_gap(pt.multipliers), 1e-6);
        }
    }
    EXPECT_EQ(unexplained_stability_changes(b), 0);
}

TEST(LocateFold, FoldsAreOnTheBranchAndHaveUnitMultiplier) {
    const Branch& b = resonance_branch();
    for (std::size_t k : b.folds) {
        const BranchPoint& f = b.points[k];
        ASSERT_TRUE(f.orbit.has_value());
        const PeriodicOrbit& orbit = *f.orbit;
        // Plain periodic BVP residual at the fold parameters.
        const Collocation col(orbit.mesh);
        EXPECT_LT(col.residual(orbit.coefficients, orbit.params).lpNorm<Eigen::Infinity>(), 1e-9);
        // IVP monodromy oracle.
        const auto mu = monodromy(orbit.start(), orbit.params, IvpSettings::oracle()).multipliers;
        EXPECT_LT(closest_multiplier_gap(mu), 1e-6) << "omega = " << f.parameter;
    }
}

TEST(LocateFold, RequiresSignChange) {
    const Branch& b = resonance_branch();
    std::size_t i = 0;
    while (i + 1 < b.points.size() && !(b.points[i].orbit && !b.points[i].is_fold)) ++i;
    ASSERT_LT(i + 1, b.points.size());
    std::size_t j = i + 1;
    while (j < b.points.size() && b.points[j].is_fold) ++j;
    ASSERT_LT(j, b.points.size());
    if ((b.points[i].tangent_parameter > 0) == (b.points[j].tangent_parameter > 0))
        EXPECT_THROW(locate_fold(b, {i, j}), std::invalid_argument);
}

TEST(FoldCurve, ConsistentWithOneParameterSections) {
    const Branch& b = resonance_branch();
    ASSERT_EQ(b.fold_count(), 2u);
    const std::size_t lower = b.points[b.folds[0]].parameter < b.points[b.folds[1]].parameter
                                  ? b.folds[0] : b.folds[1];
    const ParamAxis forcing = ParamAxis::make(Param::forcing);
    FoldCurveOptions fo;
    const FoldCurve curve = continue_fold_curve(b.points[lower], b.axis, forcing, 0.17, 0.23, fo);
    ASSERT_GT(curve.records.size(), 4u);
    EXPECT_TRUE(curve.cusps.empty());
    for (const auto& rec : curve.records) EXPECT_LT(rec.null_function, 1e-6);

    for (double target : {0.18, 0.22}) {
        // Interpolate the curve at the target forcing.
        std::optional<double> predicted;
        for (std::size_t i = 0; i + 1 < curve.records.size(); ++i) {
            const auto& a = curve.records[i];
            const auto& c = curve.records[i + 1];
            if ((a.param2 - target) * (c.param2 - target) > 0.0) continue;
            const double w = (target - a.param2) / (c.param2 - a.param2);
            predicted = a.param1 + w * (c.param1 - a.param1);
        }
        ASSERT_TRUE(predicted.has_value());
        ModelParams mp;
        mp.forcing = target;
        const Branch section = frequency_response(mp, 0.3, 3.0);
        ASSERT_GE(section.fold_count(), 1u);
        double best = 1e9;
        for (std::size_t k : section.folds)
            best = std::min(best, std::abs(section.points[k].parameter - *predicted));
        EXPECT_LT(best, 1e-4) << "forcing = " << target;
    }
}

TEST(Isola, ClosedLoopHasEvenFoldCount) {
    const Rescaling r = experiment_rescaling();
    ModelParams mp;
    mp.nu = 1.0;
    const auto sections = detect_isola(mp, r, {0.0475});
    ASSERT_EQ(sections.size(), 1u);
    const IsolaSection& s = sections.front();
    EXPECT_EQ(s.classification, IsolaClass::isola);
    ASSERT_FALSE(s.isolas.empty());
    for (const Branch& iso : s.isolas) {
        EXPECT_TRUE(iso.closed);
        EXPECT_EQ(iso.termination, Termination::closed_loop);
        EXPECT_GE(iso.fold_count(), 2u);
        EXPECT_EQ(iso.fold_count() % 2, 0u);
        EXPECT_EQ(unexplained_stability_changes(iso), 0);
    }
    EXPECT_LT(s.main.max_amplitude(), 1.0);
}

TEST(ContinueBranch, RejectsUnsupportedParameter) {
    EXPECT_THROW(ParamAxis::make(Param::xi), std::invalid_argument);
    EXPECT_THROW(ParamAxis::make(Param::k_sign), std::invalid_argument);
}

#include "impact/scenarios.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

using namespace impact;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Constant-I_l section of the experiment configuration, computed once.
const OverlaySection& section_003() {
    static const OverlaySection sec = [] {
        const Rescaling r = experiment_rescaling();
        ModelParams mp = scenario("fig10_tongue").params;
        mp.forcing = r.from_laser_forcing(0.03);
        const Branch b = frequency_response(mp, 0.5, 1.6);
        return OverlaySection{0.03, branch_rows(b, &r)};
    }();
    return sec;
}

}  // namespace

TEST(Presets, MatchCaptions) {
    ASSERT_EQ(scenario_names().size(), 8u);
    const ModelParams fig4 = scenario("fig4_resonance").params;
    EXPECT_EQ(fig4.xi, 0.03);
    EXPECT_EQ(fig4.beta, 0.885);
    EXPECT_EQ(fig4.forcing, 0.2);
    EXPECT_EQ(fig4.alpha, 5.9);
    EXPECT_EQ(fig4.nu, 0.0);
    EXPECT_EQ(fig4.p, 100.0);
    EXPECT_EQ(fig4.k_sign, 100.0);
    EXPECT_EQ(scenario("fig5_nu0_alpha5.9").params.p, std::pow(10.0, 1.1));
    const ModelParams fig6 = scenario("fig6_nu0_alpha10").params;
    EXPECT_EQ(fig6.alpha, 10.0);
    EXPECT_EQ(fig6.beta, 1.5);
    EXPECT_EQ(fig6.nu, 0.0);
    const ModelParams fig7 = scenario("fig7_nu1_alpha5.9").params;
    EXPECT_EQ(fig7.nu, 1.0);
    EXPECT_EQ(fig7.alpha, 5.9);
    EXPECT_EQ(fig7.p, std::pow(10.0, 1.5));
    EXPECT_EQ(fig7.forcing, 0.2);
    EXPECT_EQ(scenario("fig9_isola").params.nu, 1.0);
    EXPECT_EQ(scenario("fig10_tongue").params.nu, 1.0);
    EXPECT_EQ(overlay_sections(), (std::vector<double>{0.03, 0.07, 0.11, 0.16, 0.20, 0.24}));
    EXPECT_EQ(experiment_geometry().gap, 0.85e-3);
    EXPECT_EQ(experiment_rescaling().mass_force_ratio, 2.0 / 3.0);
    EXPECT_THROW(scenario("fig11"), std::invalid_argument);
    EXPECT_THROW(run_scenario("nope"), std::invalid_argument);
}

TEST(Scenarios, TableEstimates) {
    const ScenarioResult r = run_scenario("table1_estimates");
    EXPECT_TRUE(r.passed());
    EXPECT_NEAR(r.values.at("f_hz"), 8.4, 0.1);
    EXPECT_NEAR(r.values.at("alpha"), 4.9, 0.1);
}

TEST(Scenarios, RestoringForceIsReproducible) {
    const fs::path a = oracle::scratch_dir("fig8_a"), b = oracle::scratch_dir("fig8_b");
    ScenarioOptions so;
    so.out_dir = a;
    const ScenarioResult ra = run_scenario("fig8_restoring_force", so);
    so.out_dir = b;
    const ScenarioResult rb = run_scenario("fig8_restoring_force", so);
    EXPECT_TRUE(ra.passed());
    for (const auto& d : ra.descriptors) EXPECT_TRUE(d.pass) << d.name << ": " << d.observed;
    const std::string file = "fig8_restoring_force/restoring_force.csv";
    EXPECT_EQ(slurp(a / file), slurp(b / file));
    EXPECT_FALSE(slurp(a / file).empty());
    auto ja = nlohmann::json::parse(slurp(a / "fig8_restoring_force/report.json"));
    auto jb = nlohmann::json::parse(slurp(b / "fig8_restoring_force/report.json"));
    EXPECT_EQ(ja["scenario"], "fig8_restoring_force");
    EXPECT_TRUE(ja["passed"].get<bool>());
    ja.erase("seconds");
    jb.erase("seconds");
    EXPECT_EQ(ja, jb);
}

TEST(Scenarios, CuspBracketsFoldCountChange) {
    const ScenarioResult r = run_scenario("fig5_nu0_alpha5.9");
    for (const auto& d : r.descriptors) EXPECT_TRUE(d.pass) << d.name << ": " << d.observed;
    ASSERT_TRUE(r.values.count("cusp_log10_p"));
    const double cusp = r.values.at("cusp_log10_p");
    // Near the cusp the fold pair is narrower than the default step.
    ContinuationOptions fine;
    fine.step.max = 0.02;
    ModelParams mp = r.params;
    mp.p = std::pow(10.0, cusp - 0.1);
    const std::size_t below = frequency_response(mp, 0.3, 3.0, fine).fold_count();
    mp.p = std::pow(10.0, cusp + 0.1);
    const Branch above_branch = frequency_response(mp, 0.3, 3.0, fine);
    const std::size_t above = above_branch.fold_count();
    EXPECT_EQ(below, above + 2) << "cusp at log10 p = " << cusp;

    // Fold-curve consistency: a persisting locus predicts the section's fold.
    bool matched_all = true;
    int compared = 0;
    for (const auto& [stem, curve] : r.fold_curves) {
        if (!curve.cusps.empty()) continue;
        const double target = cusp + 0.1;
        for (std::size_t i = 0; i + 1 < curve.records.size(); ++i) {
            const auto& a = curve.records[i];
            const auto& c = curve.records[i + 1];
            if ((a.param2 - target) * (c.param2 - target) > 0.0 || a.param2 == c.param2) continue;
            const double predicted = a.param1 + (target - a.param2) / (c.param2 - a.param2) * (c.param1 - a.param1);
            double best = 1e9;
            for (std::size_t k : above_branch.folds)
                best = std::min(best, std::abs(above_branch.points[k].parameter - predicted));
            matched_all = matched_all && best < 1e-4;
            ++compared;
            EXPECT_LT(best, 1e-4) << stem << " predicts omega " << predicted;
        }
    }
    EXPECT_GE(compared, 2);
    EXPECT_TRUE(matched_all);
}

TEST(Overlay, EmptyDataGivesEmptyReport) {
    const OverlayReport rep = overlay_experiment({}, {}, 1e-3);
    EXPECT_EQ(rep.rows, 0);
    EXPECT_TRUE(rep.sections.empty());
}

TEST(Overlay, DataOnTheBranchHasNoResidual) {
    const OverlaySection& sec = section_003();
    ASSERT_GT(sec.rows.size(), 10u);
    EXPECT_NEAR(sec.i_l, 0.03, 1e-12);
    std::vector<SweepRow> data;
    for (std::size_t i = 0; i + 1 < sec.rows.size(); ++i) {
        const auto& a = sec.rows[i];
        const auto& b = sec.rows[i + 1];
        data.push_back({a.omega, 0.031, a.max_abs_a_l, 0});
        data.push_back({0.5 * (a.omega + b.omega), 0.029, 0.5 * (a.max_abs_a_l + b.max_abs_a_l), 0});
    }
    const OverlayReport rep = overlay_experiment({sec}, data, 1.1e-3);
    ASSERT_EQ(rep.sections.size(), 1u);
    EXPECT_EQ(rep.sections[0].points + rep.sections[0].unmatched, static_cast<int>(data.size()));
    EXPECT_LT(rep.sections[0].max_abs_residual, 1e-9);
}

TEST(Overlay, RecoversConstantOffset) {
    const OverlaySection& sec = section_003();
    const double delta_l = experiment_rescaling().grazing_displacement;
    const double offset = 0.5e-3 / delta_l;  // 0.5 mm in a_l units
    std::vector<SweepRow> data;
    for (const auto& row : sec.rows) data.push_back({row.omega, 0.03, row.max_abs_a_l + offset, 0});
    // A second, distant section must not attract these points.
    OverlaySection far{0.24, sec.rows};
    for (auto& row : far.rows) row.max_abs_a_l += 10.0;
    const OverlayReport rep = overlay_experiment({sec, far}, data, delta_l);
    ASSERT_EQ(rep.sections.size(), 1u);
    EXPECT_NEAR(rep.sections[0].i_l, 0.03, 1e-12);
    EXPECT_NEAR(rep.sections[0].mean_residual_mm, 0.5, 1e-9);
    EXPECT_NEAR(rep.sections[0].max_abs_residual_mm, 0.5, 1e-9);
    const auto j = overlay_report_json(rep);
    EXPECT_EQ(j["rows"], static_cast<int>(data.size()));
}

TEST(Overlay, SectionsRoundTripThroughFiles) {
    const OverlaySection& sec = section_003();
    const fs::path dir = oracle::scratch_dir("overlay_files");
    {
        std::ofstream out(dir / "branch_section_i_l_0.03.csv");
        write_branch_csv(out, sec.rows);
    }
    std::ofstream(dir / "branch_omega.csv") << "unrelated\n";
    const auto loaded = load_overlay_sections(dir);
    ASSERT_EQ(loaded.size(), 1u);
    EXPECT_EQ(loaded[0].rows, sec.rows);
    EXPECT_EQ(loaded[0].i_l, sec.rows.front().i_l);
}

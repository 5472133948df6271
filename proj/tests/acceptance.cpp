// Acceptance run: one PASS/FAIL line per criterion, each with its runtime
// limit. Exit status is nonzero when any criterion fails.

#include "impact/scenarios.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace impact;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int number;
    std::string title;
    double limit_seconds;
    std::function<Outcome()> run;
};

std::string num(double v, int digits = 6) {
    std::ostringstream os;
    os.precision(digits);
    os << v;
    return os.str();
}

ScenarioOptions scenario_options() {
    ScenarioOptions so;
    so.out_dir = std::filesystem::path("acceptance_out");
    return so;
}

Outcome scenario_outcome(const std::string& name) {
    const ScenarioResult r = run_scenario(name, scenario_options());
    std::string detail;
    for (const auto& d : r.descriptors)
        if (!d.pass || r.descriptors.size() <= 4)
            detail += (detail.empty() ? "" : "; ") + d.name + " = " + d.observed;
    return {r.passed(), detail};
}

// --- criterion bodies ----------------------------------------------------------

Outcome estimation() {
    const BeamGeometry g;
    const double f = estimate_natural_frequency(g);
    const double a = estimate_alpha(g);
    return {std::abs(f - 8.4) <= 0.1 && std::abs(a - 4.9) <= 0.1,
            "f = " + num(f, 4) + " Hz, alpha = " + num(a, 4)};
}

Outcome linear_resonance() {
    ModelParams mp;
    mp.forcing = 0.01;
    mp.p = 1000.0;
    mp.omega = 0.2;
    const Branch b = continue_branch(settled_orbit(mp), ParamAxis::make(Param::omega), 0.2, 2.0);
    double worst = 0.0;
    int checked = 0;
    for (const auto& pt : b.points) {
        if (pt.parameter < 0.2 || pt.parameter > 2.0) continue;
        const double ref = oracle::linear_amplitude(mp.forcing, pt.parameter, mp.xi);
        worst = std::max(worst, std::abs(pt.amplitude - ref) / ref);
        ++checked;
    }
    const bool covered = b.termination == Termination::range && b.points.back().parameter >= 2.0;
    return {covered && checked > 10 && worst < 1e-6 && b.fold_count() == 0,
            std::to_string(checked) + " points, max relative error " + num(worst, 3)};
}

/// Property suite on the model, integrator, collocation and folds.
Outcome property_suite() {
    std::vector<std::string> failures;
    auto expect = [&](bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    };
    std::mt19937 rng(8);
    std::uniform_real_distribution<double> ux(-3.0, 3.0), u01(0.0, 1.0);

    // H identities.
    bool h_ok = true;
    for (int i = 0; i < 2000; ++i) {
        const double x = ux(rng), p = std::pow(10.0, 3.0 * u01(rng));
        const double h = switching_h(x, p);
        h_ok = h_ok && h == switching_h(-x, p) && h >= 0.0 && h <= 1.0 &&
               switching_h(1.0, p) == 0.5 && switching_h(-1.0, p) == 0.5;
    }
    expect(h_ok, "H symmetry/range/half-value");

    // Pointwise limit at p = 1e4.
    ModelParams lim;
    lim.p = 1e4;
    double worst_limit = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double x1 = ux(rng);
        if (std::abs(std::abs(x1) - 1.0) <= 0.05) continue;
        const State x(x1, ux(rng));
        const double t = 10.0 * u01(rng);
        worst_limit = std::max(worst_limit, (rhs_smooth(x, t, lim) - rhs_piecewise(x, t, lim)).lpNorm<Eigen::Infinity>());
    }
    expect(worst_limit < 1e-9, "pointwise limit " + num(worst_limit, 3));

    // Jacobians against central differences.
    double worst_jac = 0.0;
    for (int i = 0; i < 1000; ++i) {
        ModelParams mp;
        mp.nu = i % 2;
        mp.p = std::pow(10.0, 1.0 + u01(rng));
        mp.omega = 0.5 + 1.5 * u01(rng);
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
        worst_jac = std::max(worst_jac, (jac - fd).lpNorm<Eigen::Infinity>() /
                                            std::max(1.0, jac.lpNorm<Eigen::Infinity>()));
    }
    expect(worst_jac < 1e-6, "Jacobian relative error " + num(worst_jac, 3));

    // Odd-forcing symmetry.
    double worst_sym = 0.0;
    for (int i = 0; i < 1000; ++i) {
        ModelParams mp;
        mp.nu = u01(rng);
        mp.omega = 0.3 + 2.0 * u01(rng);
        const State x(ux(rng), ux(rng));
        const double t = mp.period() * u01(rng);
        worst_sym = std::max(worst_sym, (rhs_smooth(-x, t + 0.5 * mp.period(), mp) + rhs_smooth(x, t, mp))
                                            .lpNorm<Eigen::Infinity>());
    }
    expect(worst_sym < 1e-12, "odd symmetry " + num(worst_sym, 3));

    // Folds of the resonance branch: Liouville, closure and unit multiplier.
    const Branch b = frequency_response(ModelParams{}, 0.3, 3.0);
    expect(b.fold_count() == 2, "resonance folds " + std::to_string(b.fold_count()));
    double worst_liouville = 0.0, worst_closure = 0.0, worst_mu = 0.0;
    for (std::size_t k : b.folds) {
        const PeriodicOrbit& orbit = *b.points[k].orbit;
        const MonodromyResult res = monodromy(orbit.start(), orbit.params, IvpSettings::oracle());
        const double ref = oracle::liouville_determinant(res, orbit.params);
        worst_liouville = std::max(worst_liouville, std::abs(res.matrix.determinant() - ref) / ref);
        const double det_col = std::real(orbit.multipliers[0] * orbit.multipliers[1]);
        const double ref_col = oracle::liouville_determinant(orbit);
        worst_liouville = std::max(worst_liouville, std::abs(det_col - ref_col) / ref_col);
        const State end = advance(orbit.start(), 0.0, orbit.period(), orbit.params, IvpSettings::oracle());
        worst_closure = std::max(worst_closure, (end - orbit.start()).lpNorm<Eigen::Infinity>());
        worst_mu = std::max(worst_mu, std::min(std::abs(res.multipliers[0] - 1.0),
                                               std::abs(res.multipliers[1] - 1.0)));
    }
    expect(worst_liouville < 1e-8, "Liouville " + num(worst_liouville, 3));
    expect(worst_closure < 1e-6, "closure " + num(worst_closure, 3));
    expect(worst_mu < 1e-6, "fold multiplier " + num(worst_mu, 3));

    std::string detail = "jac " + num(worst_jac, 2) + ", limit " + num(worst_limit, 2) + ", symmetry " +
                         num(worst_sym, 2) + ", Liouville " + num(worst_liouville, 2) + ", closure " +
                         num(worst_closure, 2) + ", |mu-1| " + num(worst_mu, 2);
    for (const auto& f : failures) detail += "; failed: " + f;
    return {failures.empty(), detail};
}

Outcome overlay_and_round_trip() {
    std::vector<std::string> failures;
    const Rescaling r = experiment_rescaling();
    ModelParams mp = scenario("fig10_tongue").params;
    mp.forcing = r.from_laser_forcing(0.03);
    const Branch b = frequency_response(mp, 0.5, 1.6);
    const OverlaySection sec{0.03, branch_rows(b, &r)};

    if (!overlay_experiment({sec}, {}, r.grazing_displacement).sections.empty())
        failures.push_back("empty data gave sections");

    std::vector<SweepRow> on, off;
    const double offset = 0.5e-3 / r.grazing_displacement;
    for (const auto& row : sec.rows) {
        on.push_back({row.omega, 0.03, row.max_abs_a_l, 0});
        off.push_back({row.omega, 0.03, row.max_abs_a_l + offset, 0});
    }
    const auto rep_on = overlay_experiment({sec}, on, r.grazing_displacement);
    const auto rep_off = overlay_experiment({sec}, off, r.grazing_displacement);
    const double res_on = rep_on.sections.at(0).max_abs_residual;
    const double mm_off = rep_off.sections.at(0).mean_residual_mm;
    if (!(res_on < 1e-9)) failures.push_back("on-branch residual " + num(res_on, 3));
    if (!(std::abs(mm_off - 0.5) < 1e-9)) failures.push_back("offset " + num(mm_off, 12) + " mm");

    // Round trips of branch and sweep files.
    std::stringstream bs;
    write_branch_csv(bs, sec.rows);
    std::istringstream bin(bs.str());
    const bool branch_exact = read_branch_csv(bin) == sec.rows;
    std::stringstream ss;
    write_sweep_csv(ss, off);
    std::istringstream sin(ss.str());
    const auto back = read_sweep_csv(sin);
    bool sweep_exact = back.size() == off.size();
    for (std::size_t i = 0; sweep_exact && i < off.size(); ++i)
        sweep_exact = back[i].omega == off[i].omega && back[i].i_l == off[i].i_l &&
                      back[i].amplitude == off[i].amplitude;
    if (!branch_exact) failures.push_back("branch CSV round trip");
    if (!sweep_exact) failures.push_back("sweep CSV round trip");

    std::string detail = "on-branch residual " + num(res_on, 3) + ", offset recovered " + num(mm_off, 10) +
                         " mm, round trips " + (branch_exact && sweep_exact ? "exact" : "inexact");
    for (const auto& f : failures) detail += "; failed: " + f;
    return {failures.empty(), detail};
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "parameter estimation", 1.0, estimation},
        {2, "linear-resonance oracle", 30.0, linear_resonance},
        {3, "resonance topology", 60.0, [] { return scenario_outcome("fig4_resonance"); }},
        {4, "smoothing-induced folds and cusp", 300.0, [] { return scenario_outcome("fig5_nu0_alpha5.9"); }},
        {5, "hard-impact cusp", 300.0, [] { return scenario_outcome("fig6_nu0_alpha10"); }},
        {6, "discontinuous forcing", 300.0, [] { return scenario_outcome("fig7_nu1_alpha5.9"); }},
        {7, "isola window", 600.0, [] { return scenario_outcome("fig9_isola"); }},
        {8, "property suite", 120.0, property_suite},
        {9, "overlay self-consistency and round trip", 120.0, overlay_and_round_trip},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = c.run();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs < c.limit_seconds;
        const bool pass = out.pass && in_time;
        failed += pass ? 0 : 1;
        std::printf("criterion %d %s: %s (%.1f s, limit %.0f s%s) %s\n", c.number, c.title.c_str(),
                    pass ? "PASS" : "FAIL", secs, c.limit_seconds, in_time ? "" : ", too slow",
                    out.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}

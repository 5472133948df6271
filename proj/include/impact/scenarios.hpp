#pragma once

// Named experiment presets: each runs a continuation pipeline with a fixed
// parameter set, writes its branches and fold curves, and checks a list of
// qualitative descriptors (fold counts, cusp brackets, isola classes).

#include "impact/bvp.hpp"
#include "impact/continuation.hpp"
#include "impact/io.hpp"
#include "impact/ivp.hpp"
#include "impact/model.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace impact {

// ---------------------------------------------------------------------------
// Building blocks
// ---------------------------------------------------------------------------

/// Periodic orbit reached from rest after `periods` forcing periods.
inline PeriodicOrbit settled_orbit(const ModelParams& mp, const BvpOptions& bvp = {},
                                   int periods = 200, State x0 = State(0.0, 0.0)) {
    const double t_end = periods * mp.period();
    const State xf = advance(x0, 0.0, t_end, mp);
    return solve_periodic(integrate(xf, t_end, t_end + mp.period(), mp), mp, bvp);
}

/// Frequency response continued upward from a settled orbit at `lo`.
inline Branch frequency_response(ModelParams mp, double lo, double hi,
                                 const ContinuationOptions& opt = {}) {
    mp.omega = lo;
    ContinuationOptions o = opt;
    o.direction = +1;
    return continue_branch(settled_orbit(mp, opt.bvp), ParamAxis::make(Param::omega), lo * 0.99,
                           hi, o);
}

/// Distinct periodic orbits found by Newton from harmonic guesses
/// a cos(Omega t - phi) + shifted copies, stable or not.
inline std::vector<PeriodicOrbit> coexisting_orbits(const ModelParams& mp,
                                                    const BvpOptions& bvp = {}) {
    std::vector<PeriodicOrbit> found;
    const double w = mp.omega;
    for (double a : {0.2, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 6.0}) {
        for (int k = 0; k < 8; ++k) {
            const double phi = k * std::numbers::pi / 8.0;
            const PeriodicOrbit guess = orbit_guess(
                [&](double s) {
                    const double arg = 2.0 * std::numbers::pi * s - phi;
                    return State(a * std::cos(arg), -a * w * std::sin(arg));
                },
                mp, bvp);
            PeriodicOrbit orbit;
            try {
                orbit = solve_periodic(guess, mp, bvp);
            } catch (const std::exception&) {
                continue;
            }
            const Collocation col(orbit.mesh);
            const State x0 = col.evaluate(orbit.coefficients, 0.0);
            bool seen = false;
            for (const auto& f : found) {
                const State y0 = Collocation(f.mesh).evaluate(f.coefficients, 0.0);
                seen = seen || ((x0 - y0).norm() < 1e-6 && std::abs(f.amplitude - orbit.amplitude) < 1e-6);
            }
            if (!seen) found.push_back(std::move(orbit));
        }
    }
    std::sort(found.begin(), found.end(),
              [](const PeriodicOrbit& a, const PeriodicOrbit& b) { return a.amplitude < b.amplitude; });
    return found;
}

namespace detail {

/// Whether a fold curve passes through (param1, param2).
inline bool curve_passes(const FoldCurve& curve, double param1, double param2, double tol) {
    const auto& r = curve.records;
    for (std::size_t i = 0; i + 1 < r.size(); ++i) {
        const double lo = std::min(r[i].param2, r[i + 1].param2);
        const double hi = std::max(r[i].param2, r[i + 1].param2);
        if (param2 < lo || param2 > hi) continue;
        const double w = hi > lo ? (param2 - r[i].param2) / (r[i + 1].param2 - r[i].param2) : 0.0;
        if (std::abs(r[i].param1 + w * (r[i + 1].param1 - r[i].param1) - param1) < tol) return true;
    }
    return false;
}

}  // namespace detail

struct FoldLocus {
    std::vector<std::size_t> folds;  // indices into Branch::folds on this curve
    FoldCurve curve;
};

/// Fold curves through every fold of a branch. A fold already lying on a
/// computed curve (a partner through a cusp) is not continued again.
inline std::vector<FoldLocus> fold_loci(const Branch& branch, const ParamAxis& axis2, double lo,
                                        double hi, const FoldCurveOptions& opt = {}) {
    std::vector<FoldLocus> loci;
    for (std::size_t k = 0; k < branch.folds.size(); ++k) {
        const BranchPoint& f = branch.points[branch.folds[k]];
        const double p2 = axis2.read(f.params);
        bool covered = false;
        for (auto& l : loci)
            if (detail::curve_passes(l.curve, f.parameter, p2, 1e-4 * std::max(1.0, f.parameter))) {
                l.folds.push_back(k);
                covered = true;
                break;
            }
        if (covered) continue;
        loci.push_back({{k}, continue_fold_curve(f, branch.axis, axis2, lo, hi, opt)});
    }
    return loci;
}

/// Sign changes of the stability flag between consecutive points that are
/// not at a located fold.
inline int unexplained_stability_changes(const Branch& branch) {
    int count = 0;
    const auto& pts = branch.points;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i)
        if (pts[i].stable != pts[i + 1].stable && !pts[i].is_fold && !pts[i + 1].is_fold) ++count;
    return count;
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

/// Beam of the experiment comparison: the default geometry with the stop gap
/// corrected to 0.85 mm.
inline BeamGeometry experiment_geometry() {
    BeamGeometry g;
    g.gap = 0.85e-3;
    return g;
}

/// Laser-point rescaling used for the I_l sections: m/d = 2/3 and a laser
/// point 0.14926 m from the clamp, which gives Delta_l / Delta = 1.256.
inline Rescaling experiment_rescaling() {
    return Rescaling::from_geometry(experiment_geometry(), 2.0 / 3.0, 0.14926);
}

/// Forcing sections of the experiment overlay, on the I_l scale.
inline const std::vector<double>& overlay_sections() {
    static const std::vector<double> s{0.03, 0.07, 0.11, 0.16, 0.20, 0.24};
    return s;
}

struct Scenario {
    std::string name;
    std::string summary;
    ModelParams params;
};

inline const std::vector<std::string>& scenario_names() {
    static const std::vector<std::string> names{
        "fig4_resonance",      "fig5_nu0_alpha5.9", "fig6_nu0_alpha10", "fig7_nu1_alpha5.9",
        "fig8_restoring_force", "fig9_isola",        "fig10_tongue",     "table1_estimates"};
    return names;
}

inline Scenario scenario(std::string_view name) {
    ModelParams base;  // (xi, beta, I, alpha, nu, p) = (0.03, 0.885, 0.2, 5.9, 0, 100)
    Scenario s{std::string(name), "", base};
    if (name == "fig4_resonance") {
        s.summary = "frequency response at p = 100 with two folds and a bistable interval";
    } else if (name == "fig5_nu0_alpha5.9") {
        s.summary = "p = 10^1.1: smoothing-induced fold pair and its cusp in (Omega, log10 p)";
        s.params.p = std::pow(10.0, 1.1);
    } else if (name == "fig6_nu0_alpha10") {
        s.summary = "hard impact alpha = 10, beta = 1.5: cusp in (Omega, log10 p)";
        s.params.alpha = 10.0;
        s.params.beta = 1.5;
        s.params.p = std::pow(10.0, 1.1);
    } else if (name == "fig7_nu1_alpha5.9") {
        s.summary = "discontinuous forcing nu = 1: four disconnected fold loci";
        s.params.nu = 1.0;
        s.params.p = std::pow(10.0, 1.5);
    } else if (name == "fig8_restoring_force") {
        s.summary = "smoothed restoring force against the piecewise-linear one";
    } else if (name == "fig9_isola") {
        s.summary = "isola sections at I_l = 0.0463, 0.0475, 0.0487";
        s.params.nu = 1.0;
    } else if (name == "fig10_tongue") {
        s.summary = "fold loci of the resonance tongue in (Omega, I_l) and the overlay sections";
        s.params.nu = 1.0;
    } else if (name == "table1_estimates") {
        s.summary = "eigenfrequency, stiffnesses and alpha from the beam geometry";
    } else {
        throw std::invalid_argument("unknown scenario '" + std::string(name) + "'");
    }
    return s;
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

struct Descriptor {
    std::string name;
    std::string expected;
    std::string observed;
    bool pass = false;
};

/// Numeric table written as CSV next to the branches.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

struct ScenarioResult {
    std::string name;
    ModelParams params;
    std::optional<Rescaling> rescaling;
    std::vector<std::pair<std::string, Branch>> branches;  // file stem, branch
    std::vector<std::pair<std::string, FoldCurve>> fold_curves;
    std::vector<std::pair<std::string, Table>> tables;
    std::vector<IsolaSection> isola;
    std::map<std::string, double> values;
    std::vector<Descriptor> descriptors;
    double seconds = 0.0;

    bool passed() const {
        return std::all_of(descriptors.begin(), descriptors.end(),
                           [](const Descriptor& d) { return d.pass; });
    }
    const Descriptor* descriptor(std::string_view n) const {
        for (const auto& d : descriptors)
            if (d.name == n) return &d;
        return nullptr;
    }
};

struct ScenarioOptions {
    ContinuationOptions continuation;
    FoldCurveOptions fold_curve;
    /// When set, CSVs and report.json are written to <out_dir>/<name>/.
    std::optional<std::filesystem::path> out_dir;
};

namespace detail {

inline std::string fmt(double v, int digits = 6) {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os.precision(digits);
    os << v;
    return os.str();
}

inline void check(ScenarioResult& r, std::string name, std::string expected, std::string observed,
                  bool pass) {
    r.descriptors.push_back({std::move(name), std::move(expected), std::move(observed), pass});
}

inline std::string fold_list(const Branch& b) {
    std::string s;
    for (auto i : b.folds)
        s += (s.empty() ? "" : "; ") + fmt(b.points[i].parameter) + " (A " +
             fmt(b.points[i].amplitude, 4) + ")";
    return s;
}

/// Range of param1 over records with param2 in [lo, hi].
inline std::pair<double, double> param1_range(const FoldCurve& c, double lo, double hi) {
    double a = std::numeric_limits<double>::infinity(), b = -a;
    for (const auto& r : c.records)
        if (r.param2 >= lo && r.param2 <= hi) {
            a = std::min(a, r.param1);
            b = std::max(b, r.param1);
        }
    return {a, b};
}

inline std::pair<double, double> param2_range(const FoldCurve& c) {
    double a = std::numeric_limits<double>::infinity(), b = -a;
    for (const auto& r : c.records) {
        a = std::min(a, r.param2);
        b = std::max(b, r.param2);
    }
    return {a, b};
}

inline std::size_t sharp_cusps(const FoldCurve& c) {
    return static_cast<std::size_t>(
        std::count_if(c.cusps.begin(), c.cusps.end(), [](const Cusp& k) { return k.sharp; }));
}

inline void run_fig4(ScenarioResult& r, const ScenarioOptions& so) {
    const Branch b = frequency_response(r.params, 0.3, 3.0, so.continuation);
    check(r, "fold_count", "2", std::to_string(b.fold_count()) + " at " + fold_list(b),
          b.fold_count() == 2);
    if (b.fold_count() == 2) {
        const double w1 = b.points[b.folds[0]].parameter, w2 = b.points[b.folds[1]].parameter;
        ModelParams mp = r.params;
        mp.omega = 0.5 * (w1 + w2);
        const auto orbits = coexisting_orbits(mp, so.continuation.bvp);
        int stable = 0;
        for (const auto& o : orbits) stable += o.stable ? 1 : 0;
        const int unstable = static_cast<int>(orbits.size()) - stable;
        r.values["coexisting_omega"] = mp.omega;
        check(r, "coexisting_orbits", "3 orbits (2 stable, 1 unstable) between the folds",
              std::to_string(orbits.size()) + " orbits (" + std::to_string(stable) + " stable, " +
                  std::to_string(unstable) + " unstable) at omega " + fmt(mp.omega),
              orbits.size() == 3 && stable == 2 && unstable == 1);
    }
    const int changes = unexplained_stability_changes(b);
    check(r, "stability_changes_at_folds", "0 stability changes away from folds",
          std::to_string(changes), changes == 0);
    r.branches.emplace_back("branch_omega", b);
}

/// Folds of a branch with amplitude below the grazing level.
inline std::vector<std::size_t> low_folds(const Branch& b) {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < b.folds.size(); ++k)
        if (b.points[b.folds[k]].amplitude < 1.0) out.push_back(k);
    return out;
}

inline void run_p_cusp(ScenarioResult& r, const ScenarioOptions& so, double cusp_expected,
                       double cusp_tol, bool check_persistence) {
    const Branch b = frequency_response(r.params, 0.3, 3.0, so.continuation);
    r.branches.emplace_back("branch_omega", b);
    check(r, "fold_count", "4", std::to_string(b.fold_count()) + " at " + fold_list(b),
          b.fold_count() == 4);
    if (b.fold_count() != 4) return;

    // The smoothing-induced pair is the pair of adjacent folds around Omega ~ 0.9.
    std::size_t pair_lo = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k + 1 < b.folds.size(); ++k) {
        const double d = std::abs(b.points[b.folds[k]].parameter - b.points[b.folds[k + 1]].parameter);
        if (d < best) {
            best = d;
            pair_lo = k;
        }
    }
    if (check_persistence) {
        const auto low = low_folds(b);
        const bool ok = low.size() >= 2 &&
                        b.points[b.folds[pair_lo]].amplitude < 1.0 &&
                        b.points[b.folds[pair_lo + 1]].amplitude < 1.0;
        check(r, "extra_pair_below_stop", "the close fold pair has amplitude < 1",
              fmt(b.points[b.folds[pair_lo]].amplitude, 4) + ", " +
                  fmt(b.points[b.folds[pair_lo + 1]].amplitude, 4),
              ok);
    }

    const auto loci = fold_loci(b, ParamAxis::make(Param::log10_p), 1.0, 3.0, so.fold_curve);
    std::optional<double> cusp;
    std::size_t pair_curve = loci.size();
    for (std::size_t i = 0; i < loci.size(); ++i) {
        const auto& f = loci[i].folds;
        const bool has_pair = std::find(f.begin(), f.end(), pair_lo) != f.end() &&
                              std::find(f.begin(), f.end(), pair_lo + 1) != f.end();
        if (has_pair) pair_curve = i;
        r.fold_curves.emplace_back("folds_" + std::to_string(i) + "_log10_p", loci[i].curve);
    }
    if (pair_curve < loci.size())
        for (const auto& c : loci[pair_curve].curve.cusps)
            if (c.sharp) cusp = c.param2;
    check(r, "cusp_log10_p",
          fmt(cusp_expected) + " +- " + fmt(cusp_tol) + ", joining the close fold pair",
          cusp ? fmt(*cusp) : "none", cusp && std::abs(*cusp - cusp_expected) <= cusp_tol);
    if (cusp) r.values["cusp_log10_p"] = *cusp;

    if (check_persistence) {
        std::string obs;
        bool ok = true;
        int others = 0;
        for (std::size_t i = 0; i < loci.size(); ++i) {
            if (i == pair_curve) continue;
            ++others;
            const auto [p2lo, p2hi] = param2_range(loci[i].curve);
            const auto [w0, w1] = param1_range(loci[i].curve, 2.0, 3.0);
            const double spread = w1 - w0;
            obs += (obs.empty() ? "" : "; ") + std::string("reaches ") + fmt(p2hi, 4) +
                   ", spread " + fmt(spread, 3);
            ok = ok && p2hi >= 3.0 && spread < 1e-3;
            r.values["omega_spread_" + std::to_string(i)] = spread;
        }
        check(r, "upper_loci_persist",
              "2 other loci reach log10 p = 3 with |dOmega| < 1e-3 over [2, 3]", obs,
              ok && others == 2);
    }
}

inline void run_fig6(ScenarioResult& r, const ScenarioOptions& so) {
    run_p_cusp(r, so, 2.0, 0.2, false);
    ModelParams lo = r.params, hi = r.params;
    lo.p = std::pow(10.0, 1.1);
    hi.p = std::pow(10.0, 3.0);
    const bool soft = !restoring_force_monotone(lo);
    const bool mono = restoring_force_monotone(hi);
    if (auto t = monotone_threshold(r.params)) r.values["monotone_log10_p"] = std::log10(*t);
    check(r, "restoring_force_monotonicity",
          "non-monotone at log10 p = 1.1, monotone at log10 p = 3",
          std::string(soft ? "non-monotone" : "monotone") + " / " + (mono ? "monotone" : "non-monotone"),
          soft && mono);
}

inline void run_fig7(ScenarioResult& r, const ScenarioOptions& so) {
    const Branch b = frequency_response(r.params, 0.3, 3.0, so.continuation);
    r.branches.emplace_back("branch_omega", b);
    check(r, "fold_count", "4", std::to_string(b.fold_count()) + " at " + fold_list(b),
          b.fold_count() == 4);
    const auto loci = fold_loci(b, ParamAxis::make(Param::log10_p), 1.0, 3.0, so.fold_curve);
    std::size_t cusps = 0;
    bool spans = true;
    std::string obs;
    for (std::size_t i = 0; i < loci.size(); ++i) {
        cusps += loci[i].curve.cusps.size();
        const auto [a, c] = param2_range(loci[i].curve);
        spans = spans && a <= 1.0 && c >= 3.0;
        obs += (obs.empty() ? "" : "; ") + fmt(a, 4) + ".." + fmt(c, 4);
        r.fold_curves.emplace_back("folds_" + std::to_string(i) + "_log10_p", loci[i].curve);
    }
    check(r, "no_cusp", "0 cusps over log10 p in [1, 3]", std::to_string(cusps), cusps == 0);
    check(r, "disconnected_loci", "4 loci, one per fold, each spanning log10 p in [1, 3]",
          std::to_string(loci.size()) + " loci spanning " + obs,
          loci.size() == 4 && b.fold_count() == 4 && spans);
}

inline void run_fig8(ScenarioResult& r) {
    Table t;
    const std::vector<double> exps{1.0, 1.5, 2.0, 3.0};
    t.header = {"x1", "alpha", "pwl"};
    for (double e : exps) t.header.push_back("p_1e" + fmt(e, 2));
    for (double alpha : {5.9, 10.0}) {
        ModelParams mp = r.params;
        mp.alpha = alpha;
        for (int i = 0; i <= 600; ++i) {
            const double x = 2.0 * i / 600.0;
            std::vector<double> row{x, alpha, restoring_force(x, mp, false)};
            for (double e : exps) {
                mp.p = std::pow(10.0, e);
                row.push_back(restoring_force(x, mp, true));
            }
            t.rows.push_back(std::move(row));
        }
        mp.p = 100.0;
        const auto thr = monotone_threshold(mp);
        if (thr) r.values["monotone_log10_p_alpha_" + fmt(alpha)] = std::log10(*thr);
        ModelParams lo = mp, hi = mp;
        lo.p = std::pow(10.0, 1.1);
        hi.p = 1e3;
        r.values["min_slope_log10_p_1.1_alpha_" + fmt(alpha)] = min_restoring_slope(lo);
        r.values["min_slope_log10_p_3_alpha_" + fmt(alpha)] = min_restoring_slope(hi);
        check(r, "softening_alpha_" + fmt(alpha), "slope dips below the free-flight slope 1",
              "min slope " + fmt(min_restoring_slope(lo), 4) + " at log10 p = 1.1",
              min_restoring_slope(lo) < 1.0);
        check(r, "monotone_at_log10_p_3_alpha_" + fmt(alpha), "monotone",
              restoring_force_monotone(hi) ? "monotone" : "non-monotone",
              restoring_force_monotone(hi));
    }
    ModelParams hard = r.params;
    hard.alpha = 10.0;
    hard.p = std::pow(10.0, 1.1);
    check(r, "non_monotone_alpha_10_low_p", "non-monotone at alpha = 10, log10 p = 1.1",
          restoring_force_monotone(hard) ? "monotone" : "non-monotone",
          !restoring_force_monotone(hard));
    r.tables.emplace_back("restoring_force", std::move(t));
}

inline void run_fig9(ScenarioResult& r, const ScenarioOptions& so) {
    const Rescaling resc = *r.rescaling;
    const std::vector<double> values{0.0463, 0.0475, 0.0487};
    const std::vector<IsolaClass> expected{IsolaClass::no_isola, IsolaClass::isola,
                                           IsolaClass::reconnected};
    IsolaOptions io;
    io.continuation = so.continuation;
    io.continuation.rescaling = nullptr;
    r.isola = detect_isola(r.params, resc, values, io);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const IsolaSection& s = r.isola[i];
        std::string obs = to_string(s.classification);
        obs += " (main folds " + std::to_string(s.main.fold_count()) + ", max amplitude " +
               fmt(s.main.max_amplitude(), 4) + ", isolas " + std::to_string(s.isolas.size()) + ")";
        check(r, "isola_i_l_" + fmt(values[i]), to_string(expected[i]), obs,
              s.classification == expected[i]);
        r.branches.emplace_back("branch_main_i_l_" + fmt(values[i]), s.main);
        for (std::size_t k = 0; k < s.isolas.size(); ++k)
            r.branches.emplace_back("branch_isola_i_l_" + fmt(values[i]) + "_" + std::to_string(k),
                                    s.isolas[k]);
        bool even = true;
        for (const auto& iso : s.isolas) even = even && iso.fold_count() >= 2 && iso.fold_count() % 2 == 0;
        if (!s.isolas.empty())
            check(r, "isola_folds_even_i_l_" + fmt(values[i]), "even fold count >= 2 on each isola",
                  std::to_string(s.isolas.front().fold_count()), even);
    }
}

inline void run_fig10(ScenarioResult& r, const ScenarioOptions& so) {
    const Rescaling resc = *r.rescaling;
    ContinuationOptions copt = so.continuation;
    copt.rescaling = &resc;
    const Branch b = frequency_response(r.params, 0.3, 3.0, copt);
    r.branches.emplace_back("branch_omega_i_l_" + fmt(resc.to_laser_forcing(r.params.forcing), 4), b);
    check(r, "fold_count", "4", std::to_string(b.fold_count()) + " at " + fold_list(b),
          b.fold_count() == 4);
    if (b.fold_count() == 4) {
        // Left-most and right-most folds carry the two loci of the tongue.
        std::size_t left = 0, right = 0;
        for (std::size_t k = 0; k < b.folds.size(); ++k) {
            if (b.points[b.folds[k]].parameter < b.points[b.folds[left]].parameter) left = k;
            if (b.points[b.folds[k]].parameter > b.points[b.folds[right]].parameter) right = k;
        }
        const ParamAxis il = ParamAxis::make(Param::i_l, &resc);
        std::string obs;
        bool ok = true;
        for (auto [k, side] : {std::pair{left, -1}, std::pair{right, +1}}) {
            const BranchPoint& f = b.points[b.folds[k]];
            const FoldCurve c = continue_fold_curve(f, b.axis, il, 0.02, 0.25, so.fold_curve);
            double wmin = std::numeric_limits<double>::infinity(), wmax = -wmin;
            for (const auto& rec : c.records) {
                wmin = std::min(wmin, rec.param1);
                wmax = std::max(wmax, rec.param1);
            }
            const bool separated = side < 0 ? wmax < 1.0 : wmin > 1.0;
            const std::size_t sharp = sharp_cusps(c);
            obs += std::string(obs.empty() ? "" : "; ") + (side < 0 ? "left" : "right") +
                   " Omega in [" + fmt(wmin, 5) + ", " + fmt(wmax, 5) + "], sharp cusps " +
                   std::to_string(sharp);
            for (const auto& cp : c.cusps)
                if (cp.sharp) obs += " at (" + fmt(cp.param1, 5) + ", " + fmt(cp.param2, 5) + ")";
            ok = ok && separated && sharp >= 1;
            r.fold_curves.emplace_back(std::string("folds_") + (side < 0 ? "left" : "right") + "_i_l", c);
        }
        check(r, "tongue_loci", "two fold loci separated by Omega = 1, each with a cusp", obs, ok);
    }
    // Sections used by the experimental overlay.
    for (double v : overlay_sections()) {
        ModelParams mp = r.params;
        mp.forcing = resc.from_laser_forcing(v);
        const Branch s = frequency_response(mp, 0.3, 3.0, copt);
        r.branches.emplace_back("branch_section_i_l_" + fmt(v), s);
    }
    check(r, "overlay_sections", std::to_string(overlay_sections().size()) + " sections",
          std::to_string(r.branches.size() - 1) + " sections",
          r.branches.size() == overlay_sections().size() + 1);
}

inline void run_table1(ScenarioResult& r) {
    const BeamGeometry g;
    const double f = estimate_natural_frequency(g);
    const double a = estimate_alpha(g);
    r.values["f_hz"] = f;
    r.values["k1_n_per_m"] = estimate_tip_stiffness(g, false);
    r.values["k2_n_per_m"] = estimate_tip_stiffness(g, true);
    r.values["alpha"] = a;
    check(r, "frequency_hz", "8.4 +- 0.1", fmt(f, 4), std::abs(f - 8.4) <= 0.1);
    check(r, "alpha", "4.9 +- 0.1", fmt(a, 4), std::abs(a - 4.9) <= 0.1);
}

}  // namespace detail

/// Machine-readable summary of a run: parameters, descriptors and values.
inline nlohmann::json scenario_report(const ScenarioResult& r) {
    nlohmann::json j;
    j["scenario"] = r.name;
    j["passed"] = r.passed();
    j["seconds"] = r.seconds;
    const ModelParams& p = r.params;
    j["params"] = {{"xi", p.xi},     {"beta", p.beta},   {"alpha", p.alpha}, {"nu", p.nu},
                   {"forcing", p.forcing}, {"omega", p.omega}, {"p", p.p},   {"k_sign", p.k_sign}};
    if (r.rescaling)
        j["rescaling"] = {{"mass_force_ratio", r.rescaling->mass_force_ratio},
                          {"grazing_displacement", r.rescaling->grazing_displacement},
                          {"model_grazing_displacement", r.rescaling->model_grazing_displacement}};
    j["descriptors"] = nlohmann::json::array();
    for (const auto& d : r.descriptors)
        j["descriptors"].push_back(
            {{"name", d.name}, {"expected", d.expected}, {"observed", d.observed}, {"pass", d.pass}});
    j["values"] = r.values;
    j["branches"] = nlohmann::json::array();
    for (const auto& [stem, b] : r.branches)
        j["branches"].push_back({{"file", stem + ".csv"},
                                 {"points", b.points.size()},
                                 {"folds", b.fold_count()},
                                 {"termination", to_string(b.termination)},
                                 {"warnings", b.warnings}});
    j["fold_curves"] = nlohmann::json::array();
    for (const auto& [stem, c] : r.fold_curves) {
        nlohmann::json cusps = nlohmann::json::array();
        for (const auto& k : c.cusps)
            cusps.push_back({{"param1", k.param1}, {"param2", k.param2}, {"sharp", k.sharp}});
        j["fold_curves"].push_back({{"file", stem + ".csv"},
                                    {"records", c.records.size()},
                                    {"cusps", cusps},
                                    {"termination_forward", to_string(c.termination_forward)},
                                    {"termination_backward", to_string(c.termination_backward)}});
    }
    return j;
}

/// Writes <dir>/<name>/ with branch_*.csv, folds_*.csv, tables and report.json.
inline std::filesystem::path write_scenario(const ScenarioResult& r, const std::filesystem::path& dir) {
    const std::filesystem::path out = dir / r.name;
    std::filesystem::create_directories(out);
    const Rescaling* resc = r.rescaling ? &*r.rescaling : nullptr;
    for (const auto& [stem, b] : r.branches) write_branch_csv(out / (stem + ".csv"), b, resc);
    for (const auto& [stem, c] : r.fold_curves) write_fold_curve_csv(out / (stem + ".csv"), c);
    for (const auto& [stem, t] : r.tables) {
        std::ofstream f(out / (stem + ".csv"));
        for (std::size_t i = 0; i < t.header.size(); ++i) f << (i ? "," : "") << t.header[i];
        f << '\n';
        for (const auto& row : t.rows) {
            for (std::size_t i = 0; i < row.size(); ++i) f << (i ? "," : "") << format_number(row[i]);
            f << '\n';
        }
    }
    std::ofstream(out / "report.json") << scenario_report(r).dump(2) << '\n';
    return out;
}

/// Runs a named scenario and checks its descriptors.
inline ScenarioResult run_scenario(std::string_view name, const ScenarioOptions& opt = {}) {
    const Scenario sc = scenario(name);
    ScenarioResult r;
    r.name = sc.name;
    r.params = sc.params;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        if (name == "fig4_resonance") {
            detail::run_fig4(r, opt);
        } else if (name == "fig5_nu0_alpha5.9") {
            detail::run_p_cusp(r, opt, 1.5, 0.15, true);
        } else if (name == "fig6_nu0_alpha10") {
            detail::run_fig6(r, opt);
        } else if (name == "fig7_nu1_alpha5.9") {
            detail::run_fig7(r, opt);
        } else if (name == "fig8_restoring_force") {
            detail::run_fig8(r);
        } else if (name == "fig9_isola") {
            r.rescaling = experiment_rescaling();
            detail::run_fig9(r, opt);
        } else if (name == "fig10_tongue") {
            r.rescaling = experiment_rescaling();
            detail::run_fig10(r, opt);
        } else if (name == "table1_estimates") {
            detail::run_table1(r);
        }
    } catch (const std::exception& e) {
        throw std::runtime_error("scenario " + sc.name + ": " + e.what());
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (opt.out_dir) write_scenario(r, *opt.out_dir);
    return r;
}

// ---------------------------------------------------------------------------
// Experimental overlay
// ---------------------------------------------------------------------------

/// A model section of constant I_l, as branch rows.
struct OverlaySection {
    double i_l = 0.0;
    std::vector<BranchRow> rows;
};

struct SectionStats {
    double i_l = 0.0;
    int points = 0;
    int unmatched = 0;  // outside the frequency range of the section
    double mean_residual = 0.0;      // data - model, in a_l units
    double mean_abs_residual = 0.0;
    double max_abs_residual = 0.0;
    double rms_residual = 0.0;
    double mean_residual_mm = 0.0;
    double max_abs_residual_mm = 0.0;
};

struct OverlayReport {
    std::vector<SectionStats> sections;
    int rows = 0;
};

namespace detail {

/// Model amplitude at omega closest to `amplitude` among all branch
/// segments spanning omega.
inline std::optional<double> nearest_model_amplitude(const std::vector<BranchRow>& rows, double omega,
                                                     double amplitude) {
    std::optional<double> best;
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
        const double a = rows[i].omega, b = rows[i + 1].omega;
        if (omega < std::min(a, b) || omega > std::max(a, b)) continue;
        const double w = b != a ? (omega - a) / (b - a) : 0.0;
        const double m = rows[i].max_abs_a_l + w * (rows[i + 1].max_abs_a_l - rows[i].max_abs_a_l);
        if (!best || std::abs(m - amplitude) < std::abs(*best - amplitude)) best = m;
    }
    return best;
}

}  // namespace detail

/// Bins each measured point to the model section with the nearest I_l and
/// reports amplitude residuals per section. `grazing_displacement` (Delta_l,
/// metres) converts residuals to millimetres.
inline OverlayReport overlay_experiment(const std::vector<OverlaySection>& sections,
                                        const std::vector<SweepRow>& data,
                                        double grazing_displacement) {
    OverlayReport rep;
    rep.rows = static_cast<int>(data.size());
    if (data.empty()) return rep;
    if (sections.empty()) throw std::invalid_argument("overlay needs at least one model section");
    std::vector<std::vector<double>> residuals(sections.size());
    std::vector<int> unmatched(sections.size(), 0);
    for (const auto& row : data) {
        std::size_t k = 0;
        for (std::size_t i = 1; i < sections.size(); ++i)
            if (std::abs(sections[i].i_l - row.i_l) < std::abs(sections[k].i_l - row.i_l)) k = i;
        const auto m = detail::nearest_model_amplitude(sections[k].rows, row.omega, row.amplitude);
        if (!m) {
            ++unmatched[k];
            continue;
        }
        residuals[k].push_back(row.amplitude - *m);
    }
    for (std::size_t k = 0; k < sections.size(); ++k) {
        if (residuals[k].empty() && unmatched[k] == 0) continue;
        SectionStats s;
        s.i_l = sections[k].i_l;
        s.points = static_cast<int>(residuals[k].size());
        s.unmatched = unmatched[k];
        double sum = 0.0, sum_abs = 0.0, sum_sq = 0.0;
        for (double r : residuals[k]) {
            sum += r;
            sum_abs += std::abs(r);
            sum_sq += r * r;
            s.max_abs_residual = std::max(s.max_abs_residual, std::abs(r));
        }
        if (s.points > 0) {
            s.mean_residual = sum / s.points;
            s.mean_abs_residual = sum_abs / s.points;
            s.rms_residual = std::sqrt(sum_sq / s.points);
        }
        s.mean_residual_mm = s.mean_residual * grazing_displacement * 1e3;
        s.max_abs_residual_mm = s.max_abs_residual * grazing_displacement * 1e3;
        rep.sections.push_back(s);
    }
    return rep;
}

inline std::vector<OverlaySection> overlay_sections_from(const ScenarioResult& r) {
    std::vector<OverlaySection> out;
    const Rescaling* resc = r.rescaling ? &*r.rescaling : nullptr;
    for (const auto& [stem, b] : r.branches) {
        if (stem.rfind("branch_section_", 0) != 0 || b.points.empty()) continue;
        auto rows = branch_rows(b, resc);
        out.push_back({rows.front().i_l, std::move(rows)});
    }
    return out;
}

/// Sections stored by a fig10_tongue run in `dir` (branch_section_*.csv).
inline std::vector<OverlaySection> load_overlay_sections(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        const std::string n = e.path().filename().string();
        if (n.rfind("branch_section_", 0) == 0 && e.path().extension() == ".csv") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<OverlaySection> out;
    for (const auto& f : files) {
        auto rows = read_branch_csv(f);
        if (rows.empty()) continue;
        out.push_back({rows.front().i_l, std::move(rows)});
    }
    std::sort(out.begin(), out.end(),
              [](const OverlaySection& a, const OverlaySection& b) { return a.i_l < b.i_l; });
    return out;
}

inline nlohmann::json overlay_report_json(const OverlayReport& rep) {
    nlohmann::json j;
    j["rows"] = rep.rows;
    j["sections"] = nlohmann::json::array();
    for (const auto& s : rep.sections)
        j["sections"].push_back({{"i_l", s.i_l},
                                 {"points", s.points},
                                 {"unmatched", s.unmatched},
                                 {"mean_residual", s.mean_residual},
                                 {"mean_abs_residual", s.mean_abs_residual},
                                 {"max_abs_residual", s.max_abs_residual},
                                 {"rms_residual", s.rms_residual},
                                 {"mean_residual_mm", s.mean_residual_mm},
                                 {"max_abs_residual_mm", s.max_abs_residual_mm}});
    return j;
}

}  // namespace impact

#pragma once

// Pseudo-arclength continuation of periodic orbits in one parameter, fold
// detection and localisation through a bordered null-vector system, and
// continuation of fold curves in two parameters.

#include "impact/bvp.hpp"
#include "impact/model.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace impact {

/// A continuation parameter as seen by the solver. The value carried in the
/// unknown vector is model_value / scale; `i_l` maps onto the forcing with
/// scale I / I_l.
struct ParamAxis {
    Param label = Param::omega;
    Param model = Param::omega;
    double scale = 1.0;

    static ParamAxis make(Param label, const Rescaling* rescaling = nullptr) {
        switch (label) {
        case Param::omega: return {label, Param::omega, 1.0};
        case Param::forcing: return {label, Param::forcing, 1.0};
        case Param::p:
        case Param::log10_p: return {label, Param::log10_p, 1.0};
        case Param::i_l: {
            const Rescaling r = rescaling ? *rescaling : Rescaling{};
            return {label, Param::forcing, r.forcing_ratio()};
        }
        default: break;
        }
        throw std::invalid_argument("continuation parameter must be omega, forcing, i_l or p");
    }

    double read(const ModelParams& mp) const { return get(mp, model) / scale; }
    void write(ModelParams& mp, double value) const { set(mp, model, value * scale); }
};

struct StepControls {
    double initial = 0.01;
    double min = 1e-5;
    double max = 0.1;
    double grow = 1.3;
    int easy_iterations = 3;
    int easy_steps_to_grow = 3;
    int max_corrector = 10;
    int max_points = 20000;
    double tol = 1e-9;
    int adapt_every = 1;
    int adapt_passes = 2;
    int store_every = 10;
    /// Steps whose tangent turns by more than this angle (radians) are
    /// retried with half the step, so nearby fold pairs are not jumped over.
    double max_turn = 0.35;
};

struct BranchPoint {
    ModelParams params;
    double parameter = 0.0;  // value on the continuation axis
    double amplitude = 0.0;
    std::optional<double> amplitude_scaled;
    Multipliers multipliers{};
    bool stable = false;
    bool is_fold = false;
    double tangent_parameter = 0.0;    // parameter component of the unit tangent
    std::optional<PeriodicOrbit> orbit;  // kept at folds and every few points
    Eigen::VectorXd tangent;             // full unit tangent, stored with the orbit
};

enum class Termination { range, step_underflow, closed_loop, max_points };

inline const char* to_string(Termination t) {
    switch (t) {
    case Termination::range: return "range";
    case Termination::step_underflow: return "step_underflow";
    case Termination::closed_loop: return "closed_loop";
    case Termination::max_points: return "max_points";
    }
    return "?";
}

struct Branch {
    ParamAxis axis;
    std::vector<BranchPoint> points;
    std::vector<std::size_t> folds;  // indices into points
    std::vector<std::string> warnings;
    Termination termination = Termination::range;
    bool closed = false;

    std::size_t fold_count() const { return folds.size(); }
    double max_amplitude() const {
        double best = 0.0;
        for (const auto& pt : points) best = std::max(best, pt.amplitude);
        return best;
    }
};

// ---------------------------------------------------------------------------
// Generic pseudo-arclength machinery
// ---------------------------------------------------------------------------

namespace detail {

/// Solves the square system [J; row^T] z = rhs.
inline Eigen::VectorXd solve_bordered(Triplets trip, int equations, int unknowns,
                                      const Eigen::VectorXd& row, const Eigen::VectorXd& rhs) {
    for (int c = 0; c < unknowns; ++c)
        if (row[c] != 0.0) trip.emplace_back(equations, c, row[c]);
    SparseMatrix a(equations + 1, unknowns);
    a.setFromTriplets(trip.begin(), trip.end());
    SparseSolver solver;
    solver.compute(a);
    if (solver.info() != Eigen::Success) throw ConvergenceError("singular bordered system");
    Eigen::VectorXd z = solver.solve(rhs);
    if (!z.allFinite()) throw ConvergenceError("non-finite solution of bordered system");
    return z;
}

inline double wdot(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& w) {
    return (a.array() * b.array() * w.array()).sum();
}

}  // namespace detail

/// Periodic orbit with one free parameter: y = (U, lambda).
class PeriodicProblem {
public:
    PeriodicProblem(Mesh mesh, ModelParams base, ParamAxis axis)
        : col_(std::move(mesh)), base_(base), axis_(axis) {}

    int size() const { return col_.unknowns() + 1; }
    int equations() const { return col_.unknowns(); }
    int param_index() const { return col_.unknowns(); }
    const Collocation& collocation() const { return col_; }
    const ParamAxis& axis() const { return axis_; }

    ModelParams params(const Eigen::VectorXd& y) const {
        ModelParams mp = base_;
        axis_.write(mp, y[param_index()]);
        return mp;
    }

    Eigen::VectorXd residual(const Eigen::VectorXd& y) const {
        return col_.residual(y.head(col_.unknowns()), params(y));
    }

    void jacobian(const Eigen::VectorXd& y, Triplets& trip) const {
        const ModelParams mp = params(y);
        const Eigen::VectorXd u = y.head(col_.unknowns());
        col_.jacobian(u, mp, trip);
        const Eigen::VectorXd dl = axis_.scale * col_.param_derivative(u, mp, axis_.model);
        for (int r = 0; r < dl.size(); ++r)
            if (dl[r] != 0.0) trip.emplace_back(r, param_index(), dl[r]);
    }

    Eigen::VectorXd weights() const {
        Eigen::VectorXd w(size());
        w.head(col_.unknowns()) = col_.weights();
        w[param_index()] = 1.0;
        return w;
    }

    /// Moves y and the tangent onto an adapted mesh.
    void remesh(Eigen::VectorXd& y, Eigen::VectorXd& tangent, int intervals) {
        Collocation next(adapt_mesh(col_, y.head(col_.unknowns()), intervals, params(y).p));
        Eigen::VectorXd ny(next.unknowns() + 1), nt(next.unknowns() + 1);
        ny.head(next.unknowns()) = interpolate(col_, y.head(col_.unknowns()), next);
        nt.head(next.unknowns()) = interpolate(col_, tangent.head(col_.unknowns()), next);
        ny[next.unknowns()] = y[param_index()];
        nt[next.unknowns()] = tangent[param_index()];
        col_ = std::move(next);
        y = std::move(ny);
        tangent = std::move(nt);
    }

    PeriodicOrbit orbit(const Eigen::VectorXd& y) const {
        PeriodicOrbit o{col_.mesh(), y.head(col_.unknowns()), params(y)};
        finalize_orbit(o);
        return o;
    }

private:
    Collocation col_;
    ModelParams base_;
    ParamAxis axis_;
};

/// Fold system y = (U, V, lambda_1[, lambda_2]): F(U) = 0, F_U V = 0,
/// <V, V> = 1. With one parameter the system is square; with two it is
/// continued by pseudo-arclength.
class FoldProblem {
public:
    FoldProblem(Mesh mesh, ModelParams base, ParamAxis first, std::optional<ParamAxis> second)
        : col_(std::move(mesh)), base_(base), first_(first), second_(second) {}

    int n() const { return col_.unknowns(); }
    int free_params() const { return second_ ? 2 : 1; }
    int size() const { return 2 * n() + free_params(); }
    int equations() const { return 2 * n() + 1; }
    int param_index() const { return 2 * n(); }   // first parameter
    int second_index() const { return 2 * n() + 1; }
    const Collocation& collocation() const { return col_; }
    const ParamAxis& first() const { return first_; }
    const std::optional<ParamAxis>& second() const { return second_; }

    ModelParams params(const Eigen::VectorXd& y) const {
        ModelParams mp = base_;
        first_.write(mp, y[param_index()]);
        if (second_) second_->write(mp, y[second_index()]);
        return mp;
    }

    Eigen::VectorXd residual(const Eigen::VectorXd& y) const {
        const ModelParams mp = params(y);
        const Eigen::VectorXd u = y.head(n()), v = y.segment(n(), n());
        Eigen::VectorXd r(equations());
        r.head(n()) = col_.residual(u, mp);
        r.segment(n(), n()) = col_.apply_jacobian(u, v, mp);
        r[2 * n()] = detail::wdot(v, v, weights_) - 1.0;
        return r;
    }

    void jacobian(const Eigen::VectorXd& y, Triplets& trip) const {
        const ModelParams mp = params(y);
        const Eigen::VectorXd u = y.head(n()), v = y.segment(n(), n());
        col_.jacobian(u, mp, trip, 0, 0);
        col_.second_derivative(u, v, mp, trip, n(), 0);
        col_.jacobian(u, mp, trip, n(), n());
        for (int c = 0; c < n(); ++c) trip.emplace_back(2 * n(), n() + c, 2.0 * weights_[c] * v[c]);
        auto add_param = [&](const ParamAxis& axis, int column) {
            const Eigen::VectorXd d1 = axis.scale * col_.param_derivative(u, mp, axis.model);
            const Eigen::VectorXd d2 =
                axis.scale * col_.second_param_derivative(u, v, mp, axis.model);
            for (int r = 0; r < n(); ++r) {
                if (d1[r] != 0.0) trip.emplace_back(r, column, d1[r]);
                if (d2[r] != 0.0) trip.emplace_back(n() + r, column, d2[r]);
            }
        };
        add_param(first_, param_index());
        if (second_) add_param(*second_, second_index());
    }

    Eigen::VectorXd weights() const {
        Eigen::VectorXd w(size());
        w.head(n()) = weights_;
        // The null vector is normalised; it does not enter the arclength.
        w.segment(n(), n()).setZero();
        w.tail(free_params()).setOnes();
        return w;
    }

    void remesh(Eigen::VectorXd& y, Eigen::VectorXd& tangent, int intervals) {
        Collocation next(adapt_mesh(col_, y.head(n()), intervals, params(y).p));
        const int nn = next.unknowns();
        auto move = [&](const Eigen::VectorXd& src) {
            Eigen::VectorXd out(2 * nn + free_params());
            out.head(nn) = interpolate(col_, src.head(n()), next);
            out.segment(nn, nn) = interpolate(col_, src.segment(n(), n()), next);
            out.tail(free_params()) = src.tail(free_params());
            return out;
        };
        y = move(y);
        tangent = move(tangent);
        col_ = std::move(next);
        weights_ = col_.weights();
        const double norm = std::sqrt(detail::wdot(y.segment(n(), n()), y.segment(n(), n()), weights_));
        y.segment(n(), n()) /= norm;
    }

    PeriodicOrbit orbit(const Eigen::VectorXd& y) const {
        PeriodicOrbit o{col_.mesh(), y.head(n()), params(y)};
        finalize_orbit(o);
        return o;
    }

    const Eigen::VectorXd& state_weights() const { return weights_; }

private:
    Collocation col_;
    ModelParams base_;
    ParamAxis first_;
    std::optional<ParamAxis> second_;
    Eigen::VectorXd weights_{col_.weights()};
};

/// One corrector solve: Newton on [F(y); t^T W (y - y_pred)] = 0. Returns
/// the iteration count, or nullopt on failure.
template <class Problem>
std::optional<int> correct(const Problem& prob, Eigen::VectorXd& y, const Eigen::VectorXd& tangent,
                           const StepControls& ctl) {
    const Eigen::VectorXd w = prob.weights();
    const Eigen::VectorXd row = (tangent.array() * w.array()).matrix();
    const Eigen::VectorXd pred = y;
    for (int it = 1; it <= ctl.max_corrector; ++it) {
        Eigen::VectorXd rhs(prob.size());
        const Eigen::VectorXd r = prob.residual(y);
        if (!r.allFinite()) return std::nullopt;
        rhs.head(prob.equations()) = -r;
        rhs[prob.equations()] = -row.dot(y - pred);
        Triplets trip;
        prob.jacobian(y, trip);
        Eigen::VectorXd dy;
        try {
            dy = detail::solve_bordered(std::move(trip), prob.equations(), prob.size(), row, rhs);
        } catch (const ConvergenceError&) {
            return std::nullopt;
        }
        y += dy;
        const double step = dy.template lpNorm<Eigen::Infinity>();
        if (!std::isfinite(step) || step > 1.0) return std::nullopt;
        if (step < ctl.tol) {
            if (prob.residual(y).template lpNorm<Eigen::Infinity>() < 10.0 * ctl.tol) return it;
        }
    }
    return std::nullopt;
}

/// Unit tangent at y, oriented along `previous`.
template <class Problem>
Eigen::VectorXd tangent_at(const Problem& prob, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& previous) {
    const Eigen::VectorXd w = prob.weights();
    Triplets trip;
    prob.jacobian(y, trip);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(prob.size());
    rhs[prob.equations()] = 1.0;
    const Eigen::VectorXd row = (previous.array() * w.array()).matrix();
    Eigen::VectorXd t = detail::solve_bordered(std::move(trip), prob.equations(), prob.size(), row, rhs);
    t /= std::sqrt(detail::wdot(t, t, w));
    if (detail::wdot(t, previous, w) < 0.0) t = -t;
    return t;
}

/// Tracks a solution curve of `prob`. The visitor receives every accepted
/// point as (y, tangent, problem) and returns false to stop.
template <class Problem, class Visitor>
Termination trace(Problem& prob, Eigen::VectorXd y, Eigen::VectorXd tangent, const StepControls& ctl,
                  int intervals, Visitor&& visit) {
    double ds = ctl.initial;
    int easy = 0;
    int since_adapt = 0;
    for (int count = 0; count < ctl.max_points; ++count) {
        bool accepted = false;
        Eigen::VectorXd ynew, tnew;
        while (!accepted) {
            ynew = y + ds * tangent;
            const auto iters = correct(prob, ynew, tangent, ctl);
            if (iters) {
                try {
                    tnew = tangent_at(prob, ynew, tangent);
                } catch (const ConvergenceError&) {
                    tnew.resize(0);
                }
                const Eigen::VectorXd w = prob.weights();
                const double cosang =
                    tnew.size() ? std::clamp(detail::wdot(tnew, tangent, w), -1.0, 1.0) : -1.0;
                if (tnew.size() && (std::acos(cosang) <= ctl.max_turn || ds <= ctl.min * 1.0001)) {
                    accepted = true;
                    easy = *iters <= ctl.easy_iterations ? easy + 1 : 0;
                    break;
                }
            }
            easy = 0;
            if (ds <= ctl.min * 1.0001) return Termination::step_underflow;
            ds = std::max(ctl.min, 0.5 * ds);
        }
        y = std::move(ynew);
        tangent = std::move(tnew);
        if (ctl.adapt_every > 0 && ++since_adapt >= ctl.adapt_every) {
            // Adapt the mesh to the new point before reporting it; thin
            // contact layers move out of a mesh refined for the last point.
            since_adapt = 0;
            Problem trial = prob;
            Eigen::VectorXd ya = y, ta = tangent;
            bool ok = true;
            for (int pass = 0; pass < ctl.adapt_passes && ok; ++pass) {
                trial.remesh(ya, ta, intervals);
                StepControls strict = ctl;
                strict.max_corrector = 15;
                ok = correct(trial, ya, ta, strict).has_value();
            }
            if (ok) {
                try {
                    ta = tangent_at(trial, ya, ta);
                    prob = std::move(trial);
                    y = std::move(ya);
                    tangent = std::move(ta);
                } catch (const ConvergenceError&) {
                }
            }
        }
        if (!visit(y, tangent, prob)) return Termination::range;
        if (easy >= ctl.easy_steps_to_grow) {
            ds = std::min(ctl.max, ds * ctl.grow);
            easy = 0;
        }
    }
    return Termination::max_points;
}

// ---------------------------------------------------------------------------
// One-parameter continuation
// ---------------------------------------------------------------------------

struct ContinuationOptions {
    StepControls step;
    BvpOptions bvp;
    int direction = +1;  // initial sign of d(parameter)/ds
    bool locate_folds = true;
    /// Minimum arclength before a return to the start counts as a closed loop.
    double loop_min_length = 0.5;
    const Rescaling* rescaling = nullptr;
};

namespace detail {

inline BranchPoint make_point(const PeriodicProblem& prob, const Eigen::VectorXd& y,
                              const Eigen::VectorXd& tangent, bool keep_orbit,
                              const Rescaling* rescaling, PeriodicOrbit* copy = nullptr) {
    BranchPoint pt;
    PeriodicOrbit orbit = prob.orbit(y);
    if (rescaling) orbit.amplitude_scaled = rescaling->to_laser_displacement(orbit.amplitude);
    pt.params = orbit.params;
    pt.parameter = y[prob.param_index()];
    pt.amplitude = orbit.amplitude;
    pt.amplitude_scaled = orbit.amplitude_scaled;
    pt.multipliers = orbit.multipliers;
    pt.stable = orbit.stable;
    pt.tangent_parameter = tangent[prob.param_index()];
    if (copy) *copy = orbit;
    if (keep_orbit) {
        pt.orbit = std::move(orbit);
        pt.tangent = tangent;
    }
    return pt;
}

}  // namespace detail

namespace detail {

/// Damped Newton on the square fold system; returns the iteration count.
inline int fold_newton(const FoldProblem& prob, Eigen::VectorXd& y, int max_iterations = 30) {
    const int n = prob.n();
    for (int it = 1; it <= max_iterations; ++it) {
        const Eigen::VectorXd r = prob.residual(y);
        Triplets trip;
        prob.jacobian(y, trip);
        SparseMatrix jac(prob.equations(), prob.size());
        jac.setFromTriplets(trip.begin(), trip.end());
        SparseSolver solver;
        solver.compute(jac);
        if (solver.info() != Eigen::Success) throw ConvergenceError("singular fold system");
        Eigen::VectorXd dy = solver.solve(-r);
        if (!dy.allFinite()) throw ConvergenceError("fold Newton produced a non-finite step");
        if (dy.lpNorm<Eigen::Infinity>() < 1e-11) {
            y += dy;
            return it;
        }
        const double r0 = r.norm();
        double lambda = 1.0;
        for (int k = 0; k < 10; ++k, lambda *= 0.5) {
            const Eigen::VectorXd trial = y + lambda * dy;
            const Eigen::VectorXd rt = prob.residual(trial);
            if (rt.allFinite() && rt.norm() < r0) break;
        }
        y += lambda * dy;
    }
    throw ConvergenceError("fold localisation did not converge");
}

}  // namespace detail

struct FoldLocation {
    BranchPoint point;
    Eigen::VectorXd null_vector;  // on point.orbit->mesh
    int iterations = 0;
};

inline FoldLocation locate_fold(const BranchPoint& a, const BranchPoint& b, const ParamAxis& axis,
                                const BvpOptions& bvp = {}, const Rescaling* rescaling = nullptr);

/// Pseudo-arclength continuation of a converged orbit in `axis` over
/// [lo, hi]. Folds are detected by sign changes of the parameter component
/// of the tangent and refined on the fold system.
inline Branch continue_branch(const PeriodicOrbit& start, ParamAxis axis, double lo, double hi,
                              const ContinuationOptions& opt = {}) {
    Branch branch;
    branch.axis = axis;
    PeriodicProblem prob(start.mesh, start.params, axis);
    Eigen::VectorXd y(prob.size());
    y.head(prob.collocation().unknowns()) = start.coefficients;
    y[prob.param_index()] = axis.read(start.params);
    if (!correct(prob, y, Eigen::VectorXd::Unit(prob.size(), prob.param_index()), opt.step))
        throw ConvergenceError("start orbit does not converge on the continuation system");

    Eigen::VectorXd seed = Eigen::VectorXd::Zero(prob.size());
    seed[prob.param_index()] = opt.direction >= 0 ? 1.0 : -1.0;
    Eigen::VectorXd tangent = tangent_at(prob, y, seed);
    PeriodicOrbit prev_orbit;
    branch.points.push_back(detail::make_point(prob, y, tangent, true, opt.rescaling, &prev_orbit));

    const Eigen::VectorXd y_start = y;
    const Eigen::VectorXd t_start = tangent;
    std::optional<double> last_side;
    const int start_n = prob.collocation().unknowns();
    double travelled = 0.0;
    Eigen::VectorXd y_prev = y, t_prev = tangent;
    int since_store = 0;

    auto visit = [&](const Eigen::VectorXd& yn, const Eigen::VectorXd& tn, const PeriodicProblem& pr) {
        const int n = pr.collocation().unknowns();
        const double lam = yn[pr.param_index()];
        const bool sign_change = (tn[pr.param_index()] > 0.0) != (t_prev[pr.param_index()] > 0.0);
        const bool keep = sign_change || ++since_store >= opt.step.store_every;
        if (keep) since_store = 0;
        PeriodicOrbit current;
        BranchPoint pt = detail::make_point(pr, yn, tn, keep, opt.rescaling, &current);
        if (yn.size() == y_prev.size()) {
            const Eigen::VectorXd w = pr.weights();
            const Eigen::VectorXd d = yn - y_prev;
            travelled += std::sqrt(detail::wdot(d, d, w));
        }
        if (sign_change && opt.locate_folds) {
            BranchPoint& prev = branch.points.back();
            if (!prev.orbit) {
                prev.orbit = std::move(prev_orbit);
                prev.tangent = t_prev;
            }
            try {
                FoldLocation fl = locate_fold(prev, pt, axis, opt.bvp, opt.rescaling);
                branch.points.push_back(std::move(fl.point));
                branch.folds.push_back(branch.points.size() - 1);
            } catch (const std::exception& e) {
                // Unconfirmed sign change, e.g. a sharp turn without a multiplier at +1.
                branch.warnings.push_back("fold near " + std::to_string(pt.parameter) +
                                          " not confirmed: " + e.what());
            }
        }
        branch.points.push_back(std::move(pt));
        prev_orbit = std::move(current);
        y_prev = yn;
        t_prev = tn;
        if (lam < lo || lam > hi) return false;
        if (travelled > opt.loop_min_length) {
            // The loop closes when the branch crosses the hyperplane through the
            // start, normal to the start tangent, in the start direction and
            // close to the start point. Compared on the current mesh.
            const Collocation from(start.mesh);
            Eigen::VectorXd d(n + 1), t0(n + 1);
            d.head(n) = yn.head(n) - interpolate(from, y_start.head(start_n), pr.collocation());
            d[n] = yn[n] - y_start[start_n];
            t0.head(n) = interpolate(from, t_start.head(start_n), pr.collocation());
            t0[n] = t_start[start_n];
            const Eigen::VectorXd w = pr.weights();
            const double side = detail::wdot(t0, d, w);
            const bool crossed = last_side && *last_side < 0.0 && side >= 0.0;
            last_side = side;
            if (crossed && std::sqrt(detail::wdot(d, d, w)) < 2.0 * opt.step.max) {
                branch.closed = true;
                return false;
            }
        }
        return true;
    };

    branch.termination = trace(prob, y, tangent, opt.step, opt.bvp.intervals, visit);
    if (branch.closed) branch.termination = Termination::closed_loop;
    if (!branch.points.empty() && !branch.points.back().orbit) {
        // Keep the final orbit for restarts.
        branch.points.back().orbit = std::move(prev_orbit);
        branch.points.back().tangent = t_prev;
    }
    return branch;
}

// ---------------------------------------------------------------------------
// Fold localisation
// ---------------------------------------------------------------------------

/// Refines a fold bracketed by two branch points that carry orbits and
/// tangents. Newton on the square fold system in (U, V, lambda).
inline FoldLocation locate_fold(const BranchPoint& a, const BranchPoint& b, const ParamAxis& axis,
                                const BvpOptions& bvp, const Rescaling* rescaling) {
    if (!a.orbit || a.tangent.size() == 0)
        throw std::invalid_argument("fold bracket needs an orbit and tangent on its first point");
    if ((a.tangent_parameter > 0.0) == (b.tangent_parameter > 0.0))
        throw std::invalid_argument("no sign change of the parameter tangent across the bracket");

    const PeriodicOrbit& base = *a.orbit;
    FoldProblem prob(base.mesh, base.params, axis, std::nullopt);
    const int n = prob.n();

    // Walk along the branch to the turning point: Illinois regula falsi on
    // the parameter component of the tangent, in arclength measured from a.
    PeriodicProblem branch_prob(base.mesh, base.params, axis);
    Eigen::VectorXd ya(n + 1);
    ya.head(n) = base.coefficients;
    ya[n] = axis.read(base.params);
    const Eigen::VectorXd& ta = a.tangent;
    double h = 0.0;
    if (b.orbit) {
        Eigen::VectorXd yb(n + 1);
        yb.head(n) = interpolate(Collocation(b.orbit->mesh), b.orbit->coefficients, branch_prob.collocation());
        yb[n] = b.parameter;
        const Eigen::VectorXd d = yb - ya;
        h = std::sqrt(detail::wdot(d, d, branch_prob.weights()));
    } else {
        h = std::abs(b.parameter - a.parameter) / std::max(std::abs(a.tangent_parameter), 1e-3);
    }
    StepControls strict;
    strict.max_corrector = 20;
    strict.tol = 1e-11;
    Eigen::VectorXd y_turn = ya, t_turn = ta;
    double s_lo = 0.0, f_lo = a.tangent_parameter, s_hi = h, f_hi = b.tangent_parameter;
    int side = 0;
    for (int it = 0; it < 40 && std::abs(f_lo) > 1e-9; ++it) {
        const double s_mid = (s_lo * f_hi - s_hi * f_lo) / (f_hi - f_lo);
        Eigen::VectorXd y = ya + s_mid * ta;
        if (!correct(branch_prob, y, ta, strict)) break;
        const Eigen::VectorXd t = tangent_at(branch_prob, y, ta);
        const double f = t[n];
        y_turn = y;
        t_turn = t;
        if (std::abs(f) < 1e-9 || std::abs(s_hi - s_lo) < 1e-12) break;
        if ((f > 0.0) == (f_lo > 0.0)) {
            s_lo = s_mid;
            f_lo = f;
            if (side == -1) f_hi *= 0.5;
            side = -1;
        } else {
            s_hi = s_mid;
            f_hi = f;
            if (side == +1) f_lo *= 0.5;
            side = +1;
        }
    }

    Eigen::VectorXd y(prob.size());
    y.head(n) = y_turn.head(n);
    Eigen::VectorXd v = t_turn.head(n);
    y.segment(n, n) = v / std::sqrt(detail::wdot(v, v, prob.state_weights()));
    y[prob.param_index()] = y_turn[n];

    const int iterations = detail::fold_newton(prob, y);

    const double lam = y[prob.param_index()];
    const double lam_a = a.parameter, lam_b = b.parameter;
    const double span = std::max(std::abs(lam_a - lam_b), 1e-3);
    if (std::abs(lam - 0.5 * (lam_a + lam_b)) > 5.0 * span + 1e-3)
        throw ConvergenceError("fold localisation left the bracket");

    PeriodicOrbit orbit = prob.orbit(y);
    // Eigenvalue confirmation: one collocation multiplier at +1.
    const double gap = std::min(std::abs(orbit.multipliers[0] - 1.0), std::abs(orbit.multipliers[1] - 1.0));
    if (gap > 1e-4) throw ConvergenceError("tangent sign change without a multiplier at +1");
    if (rescaling) orbit.amplitude_scaled = rescaling->to_laser_displacement(orbit.amplitude);

    FoldLocation out;
    out.point.params = orbit.params;
    out.point.parameter = lam;
    out.point.amplitude = orbit.amplitude;
    out.point.amplitude_scaled = orbit.amplitude_scaled;
    out.point.multipliers = orbit.multipliers;
    out.point.stable = false;
    out.point.is_fold = true;
    out.point.tangent_parameter = 0.0;
    out.null_vector = y.segment(n, n);
    Eigen::VectorXd t = Eigen::VectorXd::Zero(n + 1);
    t.head(n) = out.null_vector;
    out.point.tangent = t;
    out.point.orbit = std::move(orbit);
    out.iterations = iterations;
    return out;
}

/// Refines the fold between points bracket.first and bracket.second of a branch.
inline BranchPoint locate_fold(const Branch& branch, std::pair<std::size_t, std::size_t> bracket,
                               const BvpOptions& bvp = {}) {
    return locate_fold(branch.points.at(bracket.first), branch.points.at(bracket.second),
                       branch.axis, bvp)
        .point;
}

// ---------------------------------------------------------------------------
// Fold curves
// ---------------------------------------------------------------------------

struct FoldRecord {
    double param1 = 0.0;
    double param2 = 0.0;
    double amplitude = 0.0;
    double null_function = 0.0;  // |mu - 1| of the closest collocation multiplier
    double arclength = 0.0;      // signed, from the starting fold
    std::optional<PeriodicOrbit> orbit;
};

/// Extremum of parameter 2 along a fold curve, where two folds of the
/// one-parameter sections meet. `sharp` marks a projection that turns back
/// on itself (parameter 1 is stationary there too), as opposed to a smooth
/// turn such as the birth of an isola.
struct Cusp {
    double param1 = 0.0;
    double param2 = 0.0;
    std::size_t index = 0;  // record nearest to the cusp
    bool sharp = false;
};

struct FoldCurve {
    ParamAxis axis1;
    ParamAxis axis2;
    std::vector<FoldRecord> records;
    std::vector<Cusp> cusps;
    Termination termination_forward = Termination::range;
    Termination termination_backward = Termination::range;
};

struct FoldCurveOptions {
    StepControls step{.initial = 0.01, .min = 1e-5, .max = 0.05};
    BvpOptions bvp;
    double range1_lo = 0.05;
    double range1_hi = 10.0;
    bool both_directions = true;
    int store_every = 10;
};

namespace detail {

/// Vertex of the quadratic through five (arclength, value) samples.
inline std::optional<double> quadratic_vertex(const std::vector<double>& s,
                                              const std::vector<double>& v) {
    Eigen::MatrixXd a(s.size(), 3);
    Eigen::VectorXd b(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        a(i, 0) = 1.0;
        a(i, 1) = s[i];
        a(i, 2) = s[i] * s[i];
        b[i] = v[i];
    }
    const Eigen::Vector3d c = a.colPivHouseholderQr().solve(b);
    if (std::abs(c[2]) < 1e-14) return std::nullopt;
    return -c[1] / (2.0 * c[2]);
}

}  // namespace detail

/// Continues a located fold in (axis1, axis2) with axis2 restricted to [lo, hi].
/// Cusps are extrema of axis2 along the curve, located by a quadratic fit
/// through five consecutive records.
inline FoldCurve continue_fold_curve(const BranchPoint& fold, const ParamAxis& axis1,
                                     const ParamAxis& axis2, double lo, double hi,
                                     const FoldCurveOptions& opt = {}) {
    if (!fold.orbit || fold.tangent.size() == 0)
        throw std::invalid_argument("fold point must carry its orbit and null vector");
    const PeriodicOrbit& base = *fold.orbit;
    FoldProblem prob(base.mesh, base.params, axis1, axis2);
    const int n = prob.n();
    Eigen::VectorXd y0(prob.size());
    y0.head(n) = base.coefficients;
    y0.segment(n, n) = fold.tangent.head(n);
    y0[prob.param_index()] = axis1.read(base.params);
    y0[prob.second_index()] = axis2.read(base.params);
    {
        StepControls strict = opt.step;
        strict.max_corrector = 20;
        Eigen::VectorXd pin = Eigen::VectorXd::Unit(prob.size(), prob.second_index());
        if (!correct(prob, y0, pin, strict))
            throw ConvergenceError("fold point does not satisfy the fold system");
    }

    FoldCurve curve;
    curve.axis1 = axis1;
    curve.axis2 = axis2;

    struct Sample {
        FoldRecord rec;
        double arclength;
    };
    auto run = [&](int direction, Termination& term) {
        std::vector<Sample> out;
        FoldProblem pr = prob;
        Eigen::VectorXd seed = Eigen::VectorXd::Zero(pr.size());
        seed[pr.second_index()] = direction;
        Eigen::VectorXd t0 = tangent_at(pr, y0, seed);
        double s = 0.0;
        Eigen::VectorXd y_prev = y0;
        int since = 0;
        auto record = [&](const Eigen::VectorXd& y, const FoldProblem& p, bool keep) {
            FoldRecord rec;
            rec.param1 = y[p.param_index()];
            rec.param2 = y[p.second_index()];
            PeriodicOrbit orbit = p.orbit(y);
            rec.amplitude = orbit.amplitude;
            rec.null_function = std::min(std::abs(orbit.multipliers[0] - 1.0),
                                         std::abs(orbit.multipliers[1] - 1.0));
            if (keep) rec.orbit = std::move(orbit);
            return rec;
        };
        out.push_back({record(y0, pr, true), 0.0});
        auto visit = [&](const Eigen::VectorXd& y, const Eigen::VectorXd&, const FoldProblem& p) {
            if (y.size() == y_prev.size()) {
                const Eigen::VectorXd d = y - y_prev;
                s += std::sqrt(detail::wdot(d, d, p.weights()));
            }
            y_prev = y;
            const bool keep = ++since >= opt.store_every;
            if (keep) since = 0;
            out.push_back({record(y, p, keep), s});
            const double l2 = y[p.second_index()], l1 = y[p.param_index()];
            return l2 >= lo && l2 <= hi && l1 >= opt.range1_lo && l1 <= opt.range1_hi;
        };
        term = trace(pr, y0, t0, opt.step, opt.bvp.intervals, visit);
        return out;
    };

    std::vector<Sample> fwd = run(+1, curve.termination_forward);
    std::vector<Sample> all;
    if (opt.both_directions) {
        std::vector<Sample> bwd = run(-1, curve.termination_backward);
        for (auto it = bwd.rbegin(); it != bwd.rend(); ++it) {
            it->arclength = -it->arclength;
            all.push_back(std::move(*it));
        }
        all.pop_back();  // the start point appears in both halves
    }
    for (auto& smp : fwd) all.push_back(std::move(smp));

    // Cusp: interior extremum of param2 along the curve.
    for (std::size_t i = 1; i + 1 < all.size(); ++i) {
        const double before = all[i].rec.param2 - all[i - 1].rec.param2;
        const double after = all[i + 1].rec.param2 - all[i].rec.param2;
        if (before * after >= 0.0) continue;
        const std::size_t first = i >= 2 ? i - 2 : 0;
        const std::size_t last = std::min(all.size() - 1, first + 4);
        std::vector<double> ss, v1, v2;
        for (std::size_t k = first; k <= last; ++k) {
            ss.push_back(all[k].arclength);
            v1.push_back(all[k].rec.param1);
            v2.push_back(all[k].rec.param2);
        }
        Cusp cusp;
        cusp.index = i;
        const auto vertex = detail::quadratic_vertex(ss, v2);
        if (vertex && *vertex >= ss.front() && *vertex <= ss.back()) {
            // Evaluate both fits at the vertex.
            Eigen::MatrixXd a(ss.size(), 3);
            Eigen::VectorXd b1(ss.size()), b2(ss.size());
            for (std::size_t k = 0; k < ss.size(); ++k) {
                a(k, 0) = 1.0;
                a(k, 1) = ss[k];
                a(k, 2) = ss[k] * ss[k];
                b1[k] = v1[k];
                b2[k] = v2[k];
            }
            const auto qr = a.colPivHouseholderQr();
            const Eigen::Vector3d c1 = qr.solve(b1), c2 = qr.solve(b2);
            const double sv = *vertex;
            cusp.param1 = c1[0] + c1[1] * sv + c1[2] * sv * sv;
            cusp.param2 = c2[0] + c2[1] * sv + c2[2] * sv * sv;
            double typical = 0.0;
            const std::size_t wide_lo = i >= 8 ? i - 8 : 0;
            const std::size_t wide_hi = std::min(all.size() - 1, i + 8);
            for (std::size_t k = wide_lo; k < wide_hi; ++k) {
                const double ds = all[k + 1].arclength - all[k].arclength;
                if (ds > 0.0)
                    typical = std::max(typical,
                                       std::abs(all[k + 1].rec.param1 - all[k].rec.param1) / ds);
            }
            cusp.sharp = std::abs(c1[1] + 2.0 * c1[2] * sv) < 0.25 * typical;
        } else {
            cusp.param1 = all[i].rec.param1;
            cusp.param2 = all[i].rec.param2;
        }
        curve.cusps.push_back(cusp);
    }
    for (auto& smp : all) {
        smp.rec.arclength = smp.arclength;
        curve.records.push_back(std::move(smp.rec));
    }
    return curve;
}


// ---------------------------------------------------------------------------
// Isola detection
// ---------------------------------------------------------------------------

enum class IsolaClass { no_isola, isola, reconnected, inconclusive };

inline const char* to_string(IsolaClass c) {
    switch (c) {
    case IsolaClass::no_isola: return "no-isola";
    case IsolaClass::isola: return "isola";
    case IsolaClass::reconnected: return "reconnected";
    case IsolaClass::inconclusive: return "inconclusive";
    }
    return "?";
}

struct IsolaOptions {
    double omega_lo = 0.5;
    double omega_hi = 2.0;
    /// Frequencies at which the seeding grid is settled.
    std::vector<double> seed_omegas{1.15, 1.3, 1.45};
    int grid = 8;
    double grid_extent = 3.0;
    int settle_periods = 200;
    /// Amplitude above which an orbit counts as impacting.
    double impact_amplitude = 1.0;
    /// Forcing values (on the caller's scale) where fold-curve data predicts
    /// an isola; a miss inside this window is reported as inconclusive.
    std::optional<std::pair<double, double>> predicted_window;
    ContinuationOptions continuation;
};

struct IsolaSection {
    double forcing_value = 0.0;  // on the caller's scale (I_l)
    double forcing = 0.0;        // model I
    IsolaClass classification = IsolaClass::no_isola;
    Branch main;
    std::vector<Branch> isolas;
    int attractors = 0;  // distinct settled orbits
    std::vector<std::string> notes;
};

namespace detail {

/// Amplitudes of a branch at a parameter value, by linear interpolation on
/// every segment that crosses it.
inline std::vector<double> amplitudes_at(const Branch& branch, double value) {
    std::vector<double> out;
    for (std::size_t i = 0; i + 1 < branch.points.size(); ++i) {
        const auto& a = branch.points[i];
        const auto& b = branch.points[i + 1];
        const double lo = std::min(a.parameter, b.parameter);
        const double hi = std::max(a.parameter, b.parameter);
        if (value < lo || value > hi) continue;
        const double w = hi > lo ? (value - a.parameter) / (b.parameter - a.parameter) : 0.0;
        out.push_back(a.amplitude + w * (b.amplitude - a.amplitude));
    }
    return out;
}

inline bool lies_on(const Branch& branch, double value, double amplitude, double tol) {
    for (double a : amplitudes_at(branch, value))
        if (std::abs(a - amplitude) <= tol * std::max(1.0, amplitude)) return true;
    return false;
}

}  // namespace detail

/// Branch topology of frequency responses at the given forcing values (on
/// the I_l scale of `rescaling`). The main branch is continued from a low
/// frequency; further orbits are found by settling a grid of initial
/// conditions and continued in Omega. Closed loops not on the main branch
/// are isolas; an impacting main branch means the isola has reconnected.
inline std::vector<IsolaSection> detect_isola(const ModelParams& params, const Rescaling& rescaling,
                                              const std::vector<double>& forcing_values,
                                              const IsolaOptions& opt = {}) {
    params.validate();
    std::vector<IsolaSection> report;
    const ParamAxis omega = ParamAxis::make(Param::omega);
    for (double value : forcing_values) {
        IsolaSection sec;
        sec.forcing_value = value;
        sec.forcing = rescaling.from_laser_forcing(value);
        ModelParams mp = params;
        mp.forcing = sec.forcing;
        mp.omega = opt.omega_lo;
        mp.validate();

        const Trajectory settle = integrate(State(0.0, 0.0), 0.0, opt.settle_periods * mp.period(), mp);
        const PeriodicOrbit start = solve_periodic(settle, mp, opt.continuation.bvp);
        ContinuationOptions copt = opt.continuation;
        copt.direction = +1;
        sec.main = continue_branch(start, omega, opt.omega_lo, opt.omega_hi, copt);
        if (sec.main.termination != Termination::range)
            sec.notes.push_back(std::string("main branch ended by ") +
                                to_string(sec.main.termination));

        for (double w : opt.seed_omegas) {
            mp.omega = w;
            const double period = mp.period();
            const double t_end = opt.settle_periods * period;
            std::vector<State> finals;
            for (int i = 0; i < opt.grid; ++i) {
                for (int j = 0; j < opt.grid; ++j) {
                    const double span = opt.grid > 1 ? 2.0 * opt.grid_extent / (opt.grid - 1) : 0.0;
                    const State x0(-opt.grid_extent + i * span, -opt.grid_extent + j * span);
                    const State xf = advance(x0, 0.0, t_end, mp);
                    bool seen = false;
                    for (const auto& f : finals) seen = seen || (f - xf).norm() < 1e-3;
                    if (!seen) finals.push_back(xf);
                }
            }
            for (const auto& xf : finals) {
                PeriodicOrbit orbit;
                try {
                    orbit = solve_periodic(integrate(xf, t_end, t_end + period, mp), mp,
                                           opt.continuation.bvp);
                } catch (const std::exception& e) {
                    sec.notes.push_back("settled state at omega " + std::to_string(w) +
                                        " did not converge: " + e.what());
                    continue;
                }
                ++sec.attractors;
                if (detail::lies_on(sec.main, w, orbit.amplitude, 1e-2)) continue;
                bool known = false;
                for (const auto& iso : sec.isolas)
                    known = known || detail::lies_on(iso, w, orbit.amplitude, 1e-2);
                if (known) continue;
                Branch b = continue_branch(orbit, omega, opt.omega_lo, opt.omega_hi, copt);
                if (b.closed) {
                    sec.isolas.push_back(std::move(b));
                } else {
                    sec.notes.push_back("orbit at omega " + std::to_string(w) + " with amplitude " +
                                        std::to_string(orbit.amplitude) +
                                        " lies on an open branch apart from the main one (" +
                                        to_string(b.termination) + ")");
                }
            }
        }

        const bool impacting_main = sec.main.max_amplitude() > opt.impact_amplitude;
        const bool predicted = opt.predicted_window && value >= opt.predicted_window->first &&
                               value <= opt.predicted_window->second;
        if (!sec.isolas.empty()) {
            sec.classification = IsolaClass::isola;
        } else if (impacting_main && sec.main.fold_count() >= 2) {
            sec.classification = IsolaClass::reconnected;
        } else if (predicted || !sec.notes.empty()) {
            sec.classification = IsolaClass::inconclusive;
            if (predicted) sec.notes.push_back("fold-curve data predicts an isola, none found");
        } else {
            sec.classification = IsolaClass::no_isola;
        }
        report.push_back(std::move(sec));
    }
    return report;
}

}  // namespace impact

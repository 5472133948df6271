#pragma once

// Periodic orbits of the forced smoothed system by piecewise-polynomial
// collocation at Gauss points. Time is normalised to s in [0, 1] with
// t = T s and T = 2 pi / omega fixed by the forcing, so no phase condition
// is needed. Periodicity is built into the unknowns: the last node of the
// last interval is the first node of the first.

#include "impact/ivp.hpp"
#include "impact/model.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace impact {

using Triplets = std::vector<Eigen::Triplet<double>>;
using SparseMatrix = Eigen::SparseMatrix<double>;
using SparseSolver = Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>;

class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Normalised mesh on [0, 1] with `degree` collocation points per interval.
struct Mesh {
    std::vector<double> breaks{0.0, 1.0};
    int degree = 4;

    int intervals() const { return static_cast<int>(breaks.size()) - 1; }
    double width(int j) const { return breaks[j + 1] - breaks[j]; }

    static Mesh uniform(int intervals, int degree = 4) {
        Mesh m;
        m.degree = degree;
        m.breaks.resize(intervals + 1);
        for (int j = 0; j <= intervals; ++j) m.breaks[j] = static_cast<double>(j) / intervals;
        m.validate();
        return m;
    }

    void validate() const {
        if (degree < 3) throw std::invalid_argument("collocation degree must be at least 3");
        if (intervals() < 1 || breaks.front() != 0.0 || breaks.back() != 1.0)
            throw std::invalid_argument("mesh breakpoints must run from 0 to 1");
        for (int j = 0; j < intervals(); ++j)
            if (!(breaks[j + 1] > breaks[j]))
                throw std::invalid_argument("mesh breakpoints must be strictly increasing");
    }

    /// Interval containing s (s in [0, 1]).
    int locate(double s) const {
        const auto it = std::upper_bound(breaks.begin(), breaks.end(), s);
        const int j = static_cast<int>(it - breaks.begin()) - 1;
        return std::clamp(j, 0, intervals() - 1);
    }
};

namespace detail {

/// Gauss-Legendre nodes on (0, 1).
inline std::vector<double> gauss_points(int m) {
    std::vector<double> pts(m);
    for (int i = 0; i < m; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (m + 0.5));
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= m; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            const double dp = m * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        pts[m - 1 - i] = 0.5 * (x + 1.0);
    }
    return pts;
}

/// Lagrange basis on the equispaced nodes z_k = k/m, k = 0..m.
struct LagrangeBasis {
    int degree;

    double value(int k, double z) const {
        double v = 1.0;
        const double zk = static_cast<double>(k) / degree;
        for (int l = 0; l <= degree; ++l)
            if (l != k) v *= (z - static_cast<double>(l) / degree) / (zk - static_cast<double>(l) / degree);
        return v;
    }

    double derivative(int k, double z) const {
        const double zk = static_cast<double>(k) / degree;
        double sum = 0.0;
        for (int i = 0; i <= degree; ++i) {
            if (i == k) continue;
            double term = 1.0 / (zk - static_cast<double>(i) / degree);
            for (int l = 0; l <= degree; ++l)
                if (l != k && l != i)
                    term *= (z - static_cast<double>(l) / degree) / (zk - static_cast<double>(l) / degree);
            sum += term;
        }
        return sum;
    }
};

}  // namespace detail

/// Discretised periodic boundary value problem on a fixed mesh. Unknowns are
/// the node values U(j, k), k = 0..m-1, two components each, stored at
/// 2 (j m + k).
class Collocation {
public:
    explicit Collocation(Mesh mesh) : mesh_(std::move(mesh)) {
        mesh_.validate();
        const int m = mesh_.degree;
        const detail::LagrangeBasis basis{m};
        const auto gauss = detail::gauss_points(m);
        points_ = gauss;
        value_.resize(m, m + 1);
        deriv_.resize(m, m + 1);
        for (int i = 0; i < m; ++i)
            for (int k = 0; k <= m; ++k) {
                value_(i, k) = basis.value(k, gauss[i]);
                deriv_(i, k) = basis.derivative(k, gauss[i]);
            }
    }

    const Mesh& mesh() const { return mesh_; }
    int degree() const { return mesh_.degree; }
    int intervals() const { return mesh_.intervals(); }
    int unknowns() const { return 2 * intervals() * degree(); }

    /// Offset of node k of interval j, wrapping the final node to the start.
    int node(int j, int k) const {
        const int flat = j * degree() + k;
        return 2 * (flat % (intervals() * degree()));
    }

    double node_time(int j, int k) const {
        return mesh_.breaks[j] + mesh_.width(j) * static_cast<double>(k) / degree();
    }

    State node_value(const Eigen::VectorXd& u, int j, int k) const {
        return u.segment<2>(node(j, k));
    }

    /// Quadrature weights per unknown for the L2 inner product on [0, 1].
    Eigen::VectorXd weights() const {
        Eigen::VectorXd w = Eigen::VectorXd::Zero(unknowns());
        const int m = degree();
        for (int j = 0; j < intervals(); ++j) {
            const double h = mesh_.width(j) / m;
            for (int k = 0; k <= m; ++k) {
                const double wk = (k == 0 || k == m) ? 0.5 * h : h;
                w.segment<2>(node(j, k)).array() += wk;
            }
        }
        return w;
    }

    State evaluate(const Eigen::VectorXd& u, double s) const {
        s = s - std::floor(s);
        const int j = mesh_.locate(s);
        const double z = (s - mesh_.breaks[j]) / mesh_.width(j);
        const detail::LagrangeBasis basis{degree()};
        State x = State::Zero();
        for (int k = 0; k <= degree(); ++k) x += basis.value(k, z) * node_value(u, j, k);
        return x;
    }

    /// Node values of a function of normalised time.
    Eigen::VectorXd sample(const std::function<State(double)>& f) const {
        Eigen::VectorXd u(unknowns());
        for (int j = 0; j < intervals(); ++j)
            for (int k = 0; k < degree(); ++k) u.segment<2>(node(j, k)) = f(node_time(j, k));
        return u;
    }

    // -- residual and derivatives ------------------------------------------

    /// Collocation residual, each equation scaled by the interval width:
    /// sum_k L'_k(c) U_k - h T g(x(c), T s_c).
    Eigen::VectorXd residual(const Eigen::VectorXd& u, const ModelParams& mp) const {
        Eigen::VectorXd r(unknowns());
        const double period = mp.period();
        for_each_point(u, [&](int j, int i, int row, const State& x, double s) {
            State lhs = State::Zero();
            for (int k = 0; k <= degree(); ++k) lhs += deriv_(i, k) * node_value(u, j, k);
            r.segment<2>(row) = lhs - mesh_.width(j) * period * rhs_smooth(x, period * s, mp);
        });
        return r;
    }

    /// dF/dU appended to `out` at (row0, col0).
    void jacobian(const Eigen::VectorXd& u, const ModelParams& mp, Triplets& out, int row0 = 0,
                  int col0 = 0) const {
        const double period = mp.period();
        for_each_point(u, [&](int j, int i, int row, const State& x, double s) {
            const Mat2 jac = mesh_.width(j) * period * jacobian_state(x, period * s, mp);
            for (int k = 0; k <= degree(); ++k) {
                const int col = node(j, k);
                const Mat2 block = deriv_(i, k) * Mat2::Identity() - value_(i, k) * jac;
                push_block(out, row0 + row, col0 + col, block);
            }
        });
    }

    /// dF/d(parameter) at fixed normalised time.
    Eigen::VectorXd param_derivative(const Eigen::VectorXd& u, const ModelParams& mp,
                                     Param which) const {
        Eigen::VectorXd d(unknowns());
        const double period = mp.period();
        for_each_point(u, [&](int j, int i, int row, const State& x, double s) {
            d.segment<2>(row) = -mesh_.width(j) * scaled_param_derivative(x, s, period, mp, which);
        });
        return d;
    }

    /// F_U(U) v.
    Eigen::VectorXd apply_jacobian(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                                   const ModelParams& mp) const {
        Eigen::VectorXd r(unknowns());
        const double period = mp.period();
        for_each_point(u, [&](int j, int i, int row, const State& x, double s) {
            State lhs = State::Zero();
            State vc = State::Zero();
            for (int k = 0; k <= degree(); ++k) {
                lhs += deriv_(i, k) * node_value(v, j, k);
                vc += value_(i, k) * node_value(v, j, k);
            }
            r.segment<2>(row) =
                lhs - mesh_.width(j) * period * (jacobian_state(x, period * s, mp) * vc);
        });
        return r;
    }

    /// d(F_U(U) v)/dU appended at (row0, col0).
    void second_derivative(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                           const ModelParams& mp, Triplets& out, int row0, int col0) const {
        const double period = mp.period();
        for_each_point(u, [&](int j, int i, int row, const State& x, double s) {
            State vc = State::Zero();
            for (int k = 0; k <= degree(); ++k) vc += value_(i, k) * node_value(v, j, k);
            const auto hess = hessian_state(x, period * s, mp);
            Mat2 d;
            d.col(0) = hess[0] * vc;
            d.col(1) = hess[1] * vc;
            d *= -mesh_.width(j) * period;
            for (int k = 0; k <= degree(); ++k)
                push_block(out, row0 + row, col0 + node(j, k), value_(i, k) * d);
        });
    }

    /// d(F_U(U) v)/d(parameter), by central differences of the analytic
    /// state Jacobian in the parameter.
    Eigen::VectorXd second_param_derivative(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                                            const ModelParams& mp, Param which) const {
        const double base = get(mp, which);
        const double step = 1e-6 * std::max(1.0, std::abs(base));
        ModelParams hi = mp, lo = mp;
        set(hi, which, base + step);
        set(lo, which, base - step);
        Eigen::VectorXd d(unknowns());
        for_each_point(u, [&](int j, int i, int row, const State& x, double s) {
            State vc = State::Zero();
            for (int k = 0; k <= degree(); ++k) vc += value_(i, k) * node_value(v, j, k);
            const double th = hi.period(), tl = lo.period();
            const State up = th * (jacobian_state(x, th * s, hi) * vc);
            const State dn = tl * (jacobian_state(x, tl * s, lo) * vc);
            d.segment<2>(row) = -mesh_.width(j) * (up - dn) / (2.0 * step);
        });
        return d;
    }

    /// Monodromy matrix of the discretised linearisation, obtained by
    /// condensing each interval to the map from its first to its last node.
    Mat2 monodromy(const Eigen::VectorXd& u, const ModelParams& mp) const {
        const int m = degree();
        const double period = mp.period();
        Mat2 total = Mat2::Identity();
        Eigen::MatrixXd lhs(2 * m, 2 * m);
        Eigen::MatrixXd rhs(2 * m, 2);
        for (int j = 0; j < intervals(); ++j) {
            for (int i = 0; i < m; ++i) {
                const State x = point_state(u, j, i);
                const double s = mesh_.breaks[j] + mesh_.width(j) * points_[i];
                const Mat2 jac = mesh_.width(j) * period * jacobian_state(x, period * s, mp);
                for (int k = 0; k <= m; ++k) {
                    const Mat2 block = deriv_(i, k) * Mat2::Identity() - value_(i, k) * jac;
                    if (k == 0)
                        rhs.block<2, 2>(2 * i, 0) = -block;
                    else
                        lhs.block<2, 2>(2 * i, 2 * (k - 1)) = block;
                }
            }
            const Eigen::MatrixXd sol = lhs.partialPivLu().solve(rhs);
            total = Mat2(sol.bottomRows<2>()) * total;
        }
        return total;
    }

    /// Polynomial values at the collocation points of interval j.
    State point_state(const Eigen::VectorXd& u, int j, int i) const {
        State x = State::Zero();
        for (int k = 0; k <= degree(); ++k) x += value_(i, k) * node_value(u, j, k);
        return x;
    }

private:
    template <class Fn>
    void for_each_point(const Eigen::VectorXd& u, Fn&& fn) const {
        const int m = degree();
        for (int j = 0; j < intervals(); ++j)
            for (int i = 0; i < m; ++i) {
                const double s = mesh_.breaks[j] + mesh_.width(j) * points_[i];
                fn(j, i, 2 * (j * m + i), point_state(u, j, i), s);
            }
    }

    static void push_block(Triplets& out, int row, int col, const Mat2& block) {
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
                if (block(a, b) != 0.0) out.emplace_back(row + a, col + b, block(a, b));
    }

    /// d/d(lambda) of T g(x, T s) at fixed s.
    static State scaled_param_derivative(const State& x, double s, double period,
                                         const ModelParams& mp, Param which) {
        const double t = period * s;
        if (which == Param::omega) {
            const State g = rhs_smooth(x, t, mp);
            const State dg = jacobian_params(x, t, mp, Param::omega) +
                             time_derivative(x, t, mp) * (-t / mp.omega);
            return -(period / mp.omega) * g + period * dg;
        }
        return period * jacobian_params(x, t, mp, which);
    }

    Mesh mesh_;
    std::vector<double> points_;
    Eigen::MatrixXd value_;
    Eigen::MatrixXd deriv_;
};

// ---------------------------------------------------------------------------
// Mesh adaptation
// ---------------------------------------------------------------------------

/// Values of the piecewise polynomial `u` (on `from`) at the nodes of `to`.
inline Eigen::VectorXd interpolate(const Collocation& from, const Eigen::VectorXd& u,
                                   const Collocation& to) {
    return to.sample([&](double s) { return from.evaluate(u, s); });
}

/// New mesh with `intervals` intervals equidistributing the estimate
/// |x^(m+1)|^(1/(m+1)) of the local error, in the manner of AUTO. With a
/// smoothing exponent p > 0, a share `layer_share` of the intervals also
/// equidistributes the variation of H(x1, p), so the contact layers stay
/// resolved wherever they move.
inline Mesh adapt_mesh(const Collocation& col, const Eigen::VectorXd& u, int intervals,
                       double p = 0.0, double layer_share = 0.2) {
    const Mesh& mesh = col.mesh();
    const int n = mesh.intervals();
    const int m = mesh.degree;

    // m-th derivative per interval from the m-th forward difference.
    std::vector<double> binom(m + 1, 1.0);
    for (int k = 1; k <= m; ++k) binom[k] = binom[k - 1] * (m - k + 1) / k;
    std::vector<State> dm(n);
    for (int j = 0; j < n; ++j) {
        State diff = State::Zero();
        for (int k = 0; k <= m; ++k)
            diff += ((m - k) % 2 == 0 ? 1.0 : -1.0) * binom[k] * col.node_value(u, j, k);
        dm[j] = diff / std::pow(mesh.width(j) / m, m);
    }

    std::vector<double> density(n);
    double total = 0.0;
    for (int j = 0; j < n; ++j) {
        const int prev = (j + n - 1) % n, next = (j + 1) % n;
        const State back = (dm[j] - dm[prev]) / (0.5 * (mesh.width(j) + mesh.width(prev)));
        const State fwd = (dm[next] - dm[j]) / (0.5 * (mesh.width(j) + mesh.width(next)));
        const double d = 0.5 * (back.lpNorm<Eigen::Infinity>() + fwd.lpNorm<Eigen::Infinity>());
        density[j] = std::pow(d, 1.0 / (m + 1));
        total += density[j] * mesh.width(j);
    }
    if (!(total > 0.0) || !std::isfinite(total)) return Mesh::uniform(intervals, m);
    // Smooth the monitor over neighbouring intervals so the
    // equidistribution iteration settles instead of oscillating.
    for (int pass = 0; pass < 2; ++pass) {
        std::vector<double> smooth(n);
        for (int j = 0; j < n; ++j) {
            const int prev = (j + n - 1) % n, next = (j + 1) % n;
            smooth[j] = std::max(density[j], 0.5 * (density[prev] + density[next]));
        }
        density.swap(smooth);
    }
    total = 0.0;
    for (int j = 0; j < n; ++j) total += density[j] * mesh.width(j);
    // The monitor lives on sub-cells so a layer inside one interval is
    // still placed accurately.
    constexpr int sub = 16;
    const int cells = n * sub;
    std::vector<double> cell_density(cells), cell_width(cells), cell_start(cells);
    for (int j = 0; j < n; ++j)
        for (int q = 0; q < sub; ++q) {
            const int c = j * sub + q;
            cell_width[c] = mesh.width(j) / sub;
            cell_start[c] = mesh.breaks[j] + q * cell_width[c];
            cell_density[c] = density[j];
        }
    if (p > 0.0) {
        std::vector<double> variation(cells, 0.0);
        double layers = 0.0;
        double prev = switching_h(col.evaluate(u, 0.0)[0], p);
        for (int c = 0; c < cells; ++c) {
            const double next = switching_h(col.evaluate(u, cell_start[c] + cell_width[c])[0], p);
            variation[c] = std::abs(next - prev);
            layers += variation[c];
            prev = next;
        }
        if (layers > 1e-8) {
            const double scale = layer_share / (1.0 - layer_share) * total / layers;
            for (int c = 0; c < cells; ++c) cell_density[c] += scale * variation[c] / cell_width[c];
            total /= 1.0 - layer_share;
        }
    }
    // Floor keeps some resolution where the solution is nearly polynomial.
    const double floor = 0.05 * total;
    total = 0.0;
    for (int c = 0; c < cells; ++c) {
        cell_density[c] += floor;
        total += cell_density[c] * cell_width[c];
    }

    Mesh out;
    out.degree = m;
    out.breaks.assign(intervals + 1, 0.0);
    out.breaks.back() = 1.0;
    double acc = 0.0;
    int c = 0;
    for (int i = 1; i < intervals; ++i) {
        const double target = total * i / intervals;
        while (c < cells - 1 && acc + cell_density[c] * cell_width[c] < target) {
            acc += cell_density[c] * cell_width[c];
            ++c;
        }
        out.breaks[i] = cell_start[c] + (target - acc) / cell_density[c];
        out.breaks[i] = std::min(out.breaks[i], cell_start[c] + cell_width[c]);
    }
    // Guard against coincident breaks from round-off.
    for (int i = 1; i <= intervals; ++i)
        if (!(out.breaks[i] > out.breaks[i - 1])) out.breaks[i] = out.breaks[i - 1] + 1e-12;
    out.breaks.back() = 1.0;
    out.validate();
    return out;
}

// ---------------------------------------------------------------------------
// Periodic orbits
// ---------------------------------------------------------------------------

struct PeriodicOrbit {
    Mesh mesh;
    Eigen::VectorXd coefficients;  // node values, see Collocation
    ModelParams params;
    double amplitude = 0.0;                 // max |x1| over one period
    std::optional<double> amplitude_scaled;  // max |a_l| when a Rescaling is attached
    Multipliers multipliers{};
    bool stable = false;

    double period() const { return params.period(); }
    /// State at normalised time s in [0, 1].
    State at(double s) const { return Collocation(mesh).evaluate(coefficients, s); }
    State at_time(double t) const { return at(t / period()); }
    State start() const { return coefficients.head<2>(); }
};

struct BvpOptions {
    double tol = 1e-10;
    int intervals = 200;
    int degree = 4;
    bool adapt = true;
    int max_iterations = 25;
    int adapt_passes = 2;
    /// Multipliers with modulus within this band of 1 mark a bifurcation
    /// rather than stability.
    double stability_margin = 1e-7;
};

struct NewtonReport {
    int iterations = 0;
    double residual = 0.0;
    double step = 0.0;
};

/// Damped Newton iteration on the collocation system. Full steps with
/// backtracking halving; converged when residual and step are below tol.
inline NewtonReport newton_periodic(const Collocation& col, Eigen::VectorXd& u,
                                    const ModelParams& mp, const BvpOptions& opt) {
    NewtonReport rep;
    Eigen::VectorXd r = col.residual(u, mp);
    double rn = r.lpNorm<Eigen::Infinity>();
    std::vector<double> history{rn};
    SparseSolver solver;
    for (int it = 1; it <= opt.max_iterations; ++it) {
        Triplets trip;
        col.jacobian(u, mp, trip);
        SparseMatrix jac(col.unknowns(), col.unknowns());
        jac.setFromTriplets(trip.begin(), trip.end());
        solver.compute(jac);
        if (solver.info() != Eigen::Success) {
            std::ostringstream msg;
            msg << "singular collocation linearisation (N = " << col.intervals()
                << ", m = " << col.degree() << ", omega = " << mp.omega << ")";
            throw ConvergenceError(msg.str());
        }
        const Eigen::VectorXd du = solver.solve(-r);
        double lambda = 1.0;
        Eigen::VectorXd trial;
        Eigen::VectorXd rt;
        double rtn = 0.0;
        for (int half = 0; half < 12; ++half) {
            trial = u + lambda * du;
            rt = col.residual(trial, mp);
            rtn = rt.lpNorm<Eigen::Infinity>();
            if (std::isfinite(rtn) && (rtn < rn || rtn < opt.tol)) break;
            lambda *= 0.5;
        }
        if (!std::isfinite(rtn) || (rtn >= rn && rtn >= opt.tol))
            throw ConvergenceError("Newton iteration diverged: residual not reduced by backtracking");
        u = trial;
        r = rt;
        rn = rtn;
        rep.iterations = it;
        rep.residual = rn;
        rep.step = lambda * du.lpNorm<Eigen::Infinity>();
        history.push_back(rn);
        if (rn < opt.tol && rep.step < opt.tol) return rep;
        if (rn < 1e-3 * opt.tol) return rep;
    }
    throw ConvergenceError("Newton iteration did not converge within the iteration limit");
}

/// Fills amplitude, multipliers and stability of a converged orbit.
inline double amplitude_measure(const PeriodicOrbit& orbit);

inline void finalize_orbit(PeriodicOrbit& orbit, const BvpOptions& opt = {},
                           const Rescaling* rescaling = nullptr) {
    const Collocation col(orbit.mesh);
    orbit.amplitude = amplitude_measure(orbit);
    if (rescaling) orbit.amplitude_scaled = rescaling->to_laser_displacement(orbit.amplitude);
    orbit.multipliers = eigenvalues2(col.monodromy(orbit.coefficients, orbit.params));
    orbit.stable = std::abs(orbit.multipliers[0]) < 1.0 - opt.stability_margin;
}

/// Converges a periodic orbit from an initial guess on its own mesh.
inline PeriodicOrbit solve_periodic(const PeriodicOrbit& guess, const ModelParams& mp,
                                    const BvpOptions& opt = {}) {
    mp.validate();
    Collocation col(guess.mesh);
    Eigen::VectorXd u = guess.coefficients;
    if (u.size() != col.unknowns()) throw std::invalid_argument("orbit does not match its mesh");
    newton_periodic(col, u, mp, opt);
    if (opt.adapt) {
        for (int pass = 0; pass < opt.adapt_passes; ++pass) {
            Collocation next(adapt_mesh(col, u, opt.intervals, mp.p));
            u = interpolate(col, u, next);
            col = next;
            newton_periodic(col, u, mp, opt);
        }
    }
    PeriodicOrbit orbit{col.mesh(), u, mp};
    finalize_orbit(orbit, opt);
    return orbit;
}

/// Orbit guess sampled from a function of normalised time on a uniform mesh.
inline PeriodicOrbit orbit_guess(const std::function<State(double)>& f, const ModelParams& mp,
                                 const BvpOptions& opt = {}) {
    const Collocation col(Mesh::uniform(opt.intervals, opt.degree));
    return PeriodicOrbit{col.mesh(), col.sample(f), mp};
}

/// Converges a periodic orbit from the last complete forcing period of a
/// trajectory (periods start at multiples of T).
inline PeriodicOrbit solve_periodic(const Trajectory& guess, const ModelParams& mp,
                                    const BvpOptions& opt = {}) {
    const double period = mp.period();
    const double k = std::floor((guess.back_time() - period) / period + 1e-9);
    const double t0 = k * period;
    if (t0 < guess.front_time() - 1e-9)
        throw std::invalid_argument("trajectory does not cover a full forcing period");
    return solve_periodic(orbit_guess([&](double s) { return guess(t0 + s * period); }, mp, opt),
                          mp, opt);
}

/// max |x1| over one period: sampling followed by golden-section refinement
/// of the bracketing interval.
inline double amplitude_measure(const PeriodicOrbit& orbit) {
    const Collocation col(orbit.mesh);
    const auto& u = orbit.coefficients;
    auto f = [&](double s) { return std::abs(col.evaluate(u, s)[0]); };
    constexpr int per_interval = 16;
    double best = -1.0, best_s = 0.0;
    double spacing = 0.0;
    for (int j = 0; j < col.intervals(); ++j) {
        const double h = col.mesh().width(j) / per_interval;
        for (int q = 0; q < per_interval; ++q) {
            const double s = col.mesh().breaks[j] + q * h;
            const double v = f(s);
            if (v > best) {
                best = v;
                best_s = s;
                spacing = h;
            }
        }
    }
    // The bracket may straddle a breakpoint; evaluation handles either side.
    double a = best_s - spacing, b = best_s + spacing;
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > 1e-10) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    return std::max({best, fc, fd});
}

/// Largest deviation from the half-period symmetry x(s + 1/2) = -x(s).
inline double symmetry_defect(const PeriodicOrbit& orbit, int samples = 400) {
    const Collocation col(orbit.mesh);
    double worst = 0.0;
    for (int i = 0; i < samples; ++i) {
        const double s = static_cast<double>(i) / samples;
        const State a = col.evaluate(orbit.coefficients, s);
        const State b = col.evaluate(orbit.coefficients, s + 0.5);
        worst = std::max(worst, (a + b).lpNorm<Eigen::Infinity>());
    }
    return worst;
}

}  // namespace impact

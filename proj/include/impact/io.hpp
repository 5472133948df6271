#pragma once

// Text formats: the key = value run configuration, the branch, fold-curve,
// trajectory and experimental-sweep CSV files. Numbers are written with 17
// significant digits through std::to_chars and read back with
// std::from_chars, so files are locale-independent and round-trip exactly.

#include "impact/bvp.hpp"
#include "impact/continuation.hpp"
#include "impact/ivp.hpp"
#include "impact/model.hpp"

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace impact {

/// Malformed input file; the message carries the line number.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Numbers
// ---------------------------------------------------------------------------

inline std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

inline std::optional<double> parse_number(std::string_view text) {
    text = trim(text);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    if (text.empty()) return std::nullopt;
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) return std::nullopt;
    return v;
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.emplace_back(trim(line.substr(start, comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Generic numeric CSV
// ---------------------------------------------------------------------------

/// A CSV file with a header and cells kept as text.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<int> lines;  // source line of each row

    int column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    }

    double number(std::size_t row, int col) const {
        const auto v = parse_number(rows.at(row).at(static_cast<std::size_t>(col)));
        if (!v)
            throw FormatError("line " + std::to_string(lines.at(row)) + ": column '" +
                              header.at(static_cast<std::size_t>(col)) + "' is not a number");
        return *v;
    }
};

inline CsvTable read_csv(std::istream& in) {
    CsvTable table;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto cells = split_csv_line(line);
        if (table.header.empty()) {
            table.header = std::move(cells);
            continue;
        }
        if (cells.size() != table.header.size())
            throw FormatError("line " + std::to_string(lineno) + ": expected " +
                              std::to_string(table.header.size()) + " fields, found " +
                              std::to_string(cells.size()));
        table.rows.push_back(std::move(cells));
        table.lines.push_back(lineno);
    }
    return table;
}

inline CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return read_csv(in);
}

namespace detail {

inline void expect_header(const CsvTable& table, const std::vector<std::string>& expected,
                          const char* what) {
    if (table.header.empty() && table.rows.empty()) return;
    if (table.header != expected) {
        std::string want;
        for (const auto& h : expected) want += (want.empty() ? "" : ",") + h;
        throw FormatError(std::string("line 1: ") + what + " header must be '" + want + "'");
    }
}

inline std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Branch CSV
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& branch_header() {
    static const std::vector<std::string> h{"index", "omega",      "forcing",     "i_l",
                                            "p",     "max_abs_x1", "max_abs_a_l", "stability",
                                            "is_fold"};
    return h;
}

struct BranchRow {
    long index = 0;
    double omega = 0.0;
    double forcing = 0.0;
    double i_l = 0.0;
    double p = 0.0;
    double max_abs_x1 = 0.0;
    double max_abs_a_l = 0.0;
    int stability = -1;  // +1 stable, -1 unstable
    bool is_fold = false;

    bool operator==(const BranchRow&) const = default;
};

inline std::vector<BranchRow> branch_rows(const Branch& branch, const Rescaling* rescaling = nullptr) {
    std::vector<BranchRow> rows;
    rows.reserve(branch.points.size());
    for (std::size_t i = 0; i < branch.points.size(); ++i) {
        const BranchPoint& pt = branch.points[i];
        BranchRow r;
        r.index = static_cast<long>(i);
        r.omega = pt.params.omega;
        r.forcing = pt.params.forcing;
        r.i_l = rescaling ? rescaling->to_laser_forcing(pt.params.forcing) : pt.params.forcing;
        r.p = pt.params.p;
        r.max_abs_x1 = pt.amplitude;
        r.max_abs_a_l = pt.amplitude_scaled.value_or(
            rescaling ? rescaling->to_laser_displacement(pt.amplitude) : pt.amplitude);
        r.stability = pt.stable ? 1 : -1;
        r.is_fold = pt.is_fold;
        rows.push_back(r);
    }
    return rows;
}

inline void write_branch_csv(std::ostream& out, const std::vector<BranchRow>& rows) {
    const auto& h = branch_header();
    for (std::size_t i = 0; i < h.size(); ++i) out << (i ? "," : "") << h[i];
    out << '\n';
    for (const auto& r : rows) {
        out << std::to_string(r.index) << ',' << format_number(r.omega) << ',' << format_number(r.forcing) << ','
            << format_number(r.i_l) << ',' << format_number(r.p) << ','
            << format_number(r.max_abs_x1) << ',' << format_number(r.max_abs_a_l) << ','
            << std::to_string(r.stability) << ',' << (r.is_fold ? '1' : '0') << '\n';
    }
}

inline void write_branch_csv(const std::filesystem::path& path, const Branch& branch,
                             const Rescaling* rescaling = nullptr) {
    auto out = detail::open_output(path);
    write_branch_csv(out, branch_rows(branch, rescaling));
}

inline std::vector<BranchRow> read_branch_csv(std::istream& in) {
    const CsvTable t = read_csv(in);
    detail::expect_header(t, branch_header(), "branch");
    std::vector<BranchRow> rows;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        BranchRow r;
        r.index = static_cast<long>(t.number(i, 0));
        r.omega = t.number(i, 1);
        r.forcing = t.number(i, 2);
        r.i_l = t.number(i, 3);
        r.p = t.number(i, 4);
        r.max_abs_x1 = t.number(i, 5);
        r.max_abs_a_l = t.number(i, 6);
        const double s = t.number(i, 7);
        if (s != 1.0 && s != -1.0)
            throw FormatError("line " + std::to_string(t.lines[i]) + ": stability must be +1 or -1");
        r.stability = static_cast<int>(s);
        const double f = t.number(i, 8);
        if (f != 0.0 && f != 1.0)
            throw FormatError("line " + std::to_string(t.lines[i]) + ": is_fold must be 0 or 1");
        r.is_fold = f == 1.0;
        rows.push_back(r);
    }
    return rows;
}

inline std::vector<BranchRow> read_branch_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return read_branch_csv(in);
}

// ---------------------------------------------------------------------------
// Fold-curve CSV
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& fold_curve_header() {
    static const std::vector<std::string> h{"index",       "param1_name", "param1",
                                            "param2_name", "param2",      "max_abs_x1"};
    return h;
}

struct FoldCurveRow {
    long index = 0;
    std::string param1_name;
    double param1 = 0.0;
    std::string param2_name;
    double param2 = 0.0;
    double max_abs_x1 = 0.0;

    bool operator==(const FoldCurveRow&) const = default;
};

inline std::vector<FoldCurveRow> fold_curve_rows(const FoldCurve& curve) {
    std::vector<FoldCurveRow> rows;
    const std::string n1(to_string(curve.axis1.label)), n2(to_string(curve.axis2.label));
    for (std::size_t i = 0; i < curve.records.size(); ++i) {
        const FoldRecord& r = curve.records[i];
        rows.push_back({static_cast<long>(i), n1, r.param1, n2, r.param2, r.amplitude});
    }
    return rows;
}

inline void write_fold_curve_csv(std::ostream& out, const std::vector<FoldCurveRow>& rows) {
    const auto& h = fold_curve_header();
    for (std::size_t i = 0; i < h.size(); ++i) out << (i ? "," : "") << h[i];
    out << '\n';
    for (const auto& r : rows)
        out << std::to_string(r.index) << ',' << r.param1_name << ',' << format_number(r.param1) << ','
            << r.param2_name << ',' << format_number(r.param2) << ','
            << format_number(r.max_abs_x1) << '\n';
}

inline void write_fold_curve_csv(const std::filesystem::path& path, const FoldCurve& curve) {
    auto out = detail::open_output(path);
    write_fold_curve_csv(out, fold_curve_rows(curve));
}

inline std::vector<FoldCurveRow> read_fold_curve_csv(std::istream& in) {
    const CsvTable t = read_csv(in);
    detail::expect_header(t, fold_curve_header(), "fold-curve");
    std::vector<FoldCurveRow> rows;
    for (std::size_t i = 0; i < t.rows.size(); ++i)
        rows.push_back({static_cast<long>(t.number(i, 0)), t.rows[i][1], t.number(i, 2),
                        t.rows[i][3], t.number(i, 4), t.number(i, 5)});
    return rows;
}

// ---------------------------------------------------------------------------
// Trajectories and orbits
// ---------------------------------------------------------------------------

inline void write_trajectory_csv(std::ostream& out, const Trajectory& tr) {
    out << "t,x1,x2\n";
    for (std::size_t i = 0; i < tr.times.size(); ++i)
        out << format_number(tr.times[i]) << ',' << format_number(tr.states[i][0]) << ','
            << format_number(tr.states[i][1]) << '\n';
}

/// One period of an orbit sampled at `samples` + 1 equally spaced times.
inline void write_orbit_csv(std::ostream& out, const PeriodicOrbit& orbit, int samples = 400) {
    const Collocation col(orbit.mesh);
    const double period = orbit.params.period();
    out << "t,x1,x2\n";
    for (int i = 0; i <= samples; ++i) {
        const double s = static_cast<double>(i) / samples;
        const State x = col.evaluate(orbit.coefficients, s);
        out << format_number(s * period) << ',' << format_number(x[0]) << ',' << format_number(x[1])
            << '\n';
    }
}

// ---------------------------------------------------------------------------
// Experimental sweeps
// ---------------------------------------------------------------------------

/// One measured point: frequency, rescaled forcing and laser-scaled amplitude.
struct SweepRow {
    double omega = 0.0;
    double i_l = 0.0;
    double amplitude = 0.0;
    int line = 0;

    bool operator==(const SweepRow& o) const {
        return omega == o.omega && i_l == o.i_l && amplitude == o.amplitude;
    }
};

inline std::vector<SweepRow> read_sweep_csv(std::istream& in) {
    const CsvTable t = read_csv(in);
    detail::expect_header(t, {"omega", "i_l", "amplitude"}, "sweep");
    std::vector<SweepRow> rows;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        SweepRow r{t.number(i, 0), t.number(i, 1), t.number(i, 2), t.lines[i]};
        const std::string at = "line " + std::to_string(r.line) + ": ";
        if (!(std::isfinite(r.omega) && r.omega > 0.0)) throw FormatError(at + "omega must be positive");
        if (!(std::isfinite(r.i_l) && r.i_l >= 0.0)) throw FormatError(at + "i_l must be non-negative");
        if (!(std::isfinite(r.amplitude) && r.amplitude >= 0.0))
            throw FormatError(at + "amplitude must be non-negative");
        rows.push_back(r);
    }
    return rows;
}

inline std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return read_sweep_csv(in);
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
    out << "omega,i_l,amplitude\n";
    for (const auto& r : rows)
        out << format_number(r.omega) << ',' << format_number(r.i_l) << ','
            << format_number(r.amplitude) << '\n';
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct SolverConfig {
    int intervals = BvpOptions{}.intervals;
    int degree = BvpOptions{}.degree;
    double tol = BvpOptions{}.tol;
    double step_initial = StepControls{}.initial;
    double step_min = StepControls{}.min;
    double step_max = StepControls{}.max;
    int max_points = StepControls{}.max_points;
};

struct RunConfig {
    ModelParams model;
    Rescaling rescaling;
    BeamGeometry geometry;
    std::optional<double> laser_position;  // [m]; derives the rescaling from the geometry
    std::optional<double> i_l;             // overrides the forcing through the rescaling
    SolverConfig solver;
    std::string out_dir;
    std::map<std::string, int> keys;  // keys present, with their line numbers

    ContinuationOptions continuation() const {
        ContinuationOptions opt;
        opt.bvp.intervals = solver.intervals;
        opt.bvp.degree = solver.degree;
        opt.bvp.tol = solver.tol;
        opt.step.initial = solver.step_initial;
        opt.step.min = solver.step_min;
        opt.step.max = solver.step_max;
        opt.step.max_points = solver.max_points;
        return opt;
    }
};

namespace detail {

struct ConfigKey {
    std::function<void(RunConfig&, double)> apply;
    bool integer = false;
};

inline const std::map<std::string, ConfigKey, std::less<>>& config_keys() {
    auto model = [](double ModelParams::*f) {
        return ConfigKey{[f](RunConfig& c, double v) { c.model.*f = v; }};
    };
    auto geom = [](double BeamGeometry::*f) {
        return ConfigKey{[f](RunConfig& c, double v) { c.geometry.*f = v; }};
    };
    auto resc = [](double Rescaling::*f) {
        return ConfigKey{[f](RunConfig& c, double v) { c.rescaling.*f = v; }};
    };
    static const std::map<std::string, ConfigKey, std::less<>> keys{
        {"xi", model(&ModelParams::xi)},
        {"beta", model(&ModelParams::beta)},
        {"alpha", model(&ModelParams::alpha)},
        {"nu", model(&ModelParams::nu)},
        {"forcing", model(&ModelParams::forcing)},
        {"omega", model(&ModelParams::omega)},
        {"p", model(&ModelParams::p)},
        {"k_sign", model(&ModelParams::k_sign)},
        {"log10_p", {[](RunConfig& c, double v) { c.model.p = std::pow(10.0, v); }}},
        {"i_l", {[](RunConfig& c, double v) { c.i_l = v; }}},
        {"modulus", geom(&BeamGeometry::modulus)},
        {"area_moment", geom(&BeamGeometry::area_moment)},
        {"cross_section", geom(&BeamGeometry::cross_section)},
        {"density", geom(&BeamGeometry::density)},
        {"lumped_mass", geom(&BeamGeometry::lumped_mass)},
        {"length", geom(&BeamGeometry::length)},
        {"stop_position", geom(&BeamGeometry::stop_position)},
        {"mass_position", geom(&BeamGeometry::mass_position)},
        {"gap", geom(&BeamGeometry::gap)},
        {"mass_force_ratio", resc(&Rescaling::mass_force_ratio)},
        {"grazing_displacement", resc(&Rescaling::grazing_displacement)},
        {"model_grazing_displacement", resc(&Rescaling::model_grazing_displacement)},
        {"base_amplitude", resc(&Rescaling::base_amplitude)},
        {"laser_position", {[](RunConfig& c, double v) { c.laser_position = v; }}},
        {"intervals", {[](RunConfig& c, double v) { c.solver.intervals = static_cast<int>(v); }, true}},
        {"degree", {[](RunConfig& c, double v) { c.solver.degree = static_cast<int>(v); }, true}},
        {"tol", {[](RunConfig& c, double v) { c.solver.tol = v; }}},
        {"step_initial", {[](RunConfig& c, double v) { c.solver.step_initial = v; }}},
        {"step_min", {[](RunConfig& c, double v) { c.solver.step_min = v; }}},
        {"step_max", {[](RunConfig& c, double v) { c.solver.step_max = v; }}},
        {"max_points", {[](RunConfig& c, double v) { c.solver.max_points = static_cast<int>(v); }, true}},
    };
    return keys;
}

/// Invariant check of one key applied on top of the defaults.
inline void check_key(const std::string& key, double value) {
    RunConfig c;
    config_keys().at(key).apply(c, value);
    if (key == "i_l" && !(std::isfinite(value) && value >= 0.0))
        throw DomainError("i_l must be non-negative");
    if (key == "laser_position" && !(std::isfinite(value) && value > 0.0))
        throw DomainError("laser_position must be positive");
    c.model.validate();
    c.rescaling.validate();
    if (key == "base_amplitude" && !(std::isfinite(value) && value >= 0.0))
        throw DomainError("base_amplitude must be non-negative");
    const SolverConfig& s = c.solver;
    if (s.intervals < 4) throw DomainError("intervals must be at least 4");
    if (s.degree < 3 || s.degree > 7) throw DomainError("degree must lie in [3, 7]");
    if (!(s.tol > 0.0 && s.tol < 1e-2)) throw DomainError("tol must lie in (0, 1e-2)");
    if (!(s.step_min > 0.0 && s.step_min <= s.step_initial && s.step_initial <= s.step_max))
        throw DomainError("steps must satisfy 0 < step_min <= step_initial <= step_max");
    if (s.max_points < 1) throw DomainError("max_points must be positive");
    const BeamGeometry& g = c.geometry;
    for (double v : {g.modulus, g.area_moment, g.cross_section, g.density, g.lumped_mass, g.length,
                     g.stop_position, g.mass_position, g.gap})
        if (!(std::isfinite(v) && v > 0.0)) throw DomainError(key + " must be positive");
}

}  // namespace detail

/// Parses `key = value` lines; `#` starts a comment. Unknown keys, repeated
/// keys and invariant violations are errors that name the line and the key.
inline RunConfig parse_config(std::istream& in) {
    RunConfig cfg;
    const auto& keys = detail::config_keys();
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view text = line;
        if (const auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
        text = trim(text);
        if (text.empty()) continue;
        const std::string at = "line " + std::to_string(lineno) + ": ";
        const auto eq = text.find('=');
        if (eq == std::string_view::npos) throw FormatError(at + "expected 'key = value'");
        const std::string key(trim(text.substr(0, eq)));
        const std::string_view value = trim(text.substr(eq + 1));
        if (key.empty()) throw FormatError(at + "missing key");
        if (cfg.keys.count(key)) throw FormatError(at + "key '" + key + "' given twice");
        if (key == "out_dir") {
            if (value.empty()) throw FormatError(at + "out_dir needs a value");
            cfg.out_dir = std::string(value);
            cfg.keys[key] = lineno;
            continue;
        }
        const auto it = keys.find(key);
        if (it == keys.end()) throw FormatError(at + "unknown key '" + key + "'");
        const auto v = parse_number(value);
        if (!v) throw FormatError(at + "value of '" + key + "' is not a number");
        if (it->second.integer && *v != std::floor(*v))
            throw FormatError(at + "value of '" + key + "' must be an integer");
        try {
            detail::check_key(key, *v);
        } catch (const DomainError& e) {
            throw FormatError(at + "invalid value for '" + key + "': " + e.what());
        }
        it->second.apply(cfg, *v);
        cfg.keys[key] = lineno;
    }
    try {
        cfg.model.validate();
        cfg.geometry.validate();
        if (cfg.laser_position)
            cfg.rescaling = Rescaling::from_geometry(cfg.geometry, cfg.rescaling.mass_force_ratio,
                                                     *cfg.laser_position);
        cfg.rescaling.validate();
        if (cfg.i_l) cfg.model.forcing = cfg.rescaling.from_laser_forcing(*cfg.i_l);
    } catch (const DomainError& e) {
        throw FormatError(std::string("inconsistent configuration: ") + e.what());
    }
    return cfg;
}

inline RunConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path.string());
    return parse_config(in);
}

/// Output directory: IMPACT_OUT_DIR when set, else the fallback.
inline std::filesystem::path output_directory(const std::string& fallback = "impact_out") {
    if (const char* env = std::getenv("IMPACT_OUT_DIR"); env && *env) return env;
    return fallback;
}

}  // namespace impact

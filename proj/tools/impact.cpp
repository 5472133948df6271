// Command-line front end: parameter estimates, simulations, frequency
// responses, fold curves, isola scans, scenarios, overlays and plots.

#include "impact/bvp.hpp"
#include "impact/continuation.hpp"
#include "impact/io.hpp"
#include "impact/ivp.hpp"
#include "impact/model.hpp"
#include "impact/plot.hpp"
#include "impact/scenarios.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace impact;

namespace {

enum Exit { ok = 0, failed = 1, usage = 2, bad_input = 3, numerical = 4 };

RunConfig load_config(const std::string& path) {
    if (path.empty()) return RunConfig{};
    return parse_config(fs::path(path));
}

fs::path out_dir(const std::string& flag, const RunConfig& cfg) {
    if (!flag.empty()) return flag;
    if (!cfg.out_dir.empty() && !std::getenv("IMPACT_OUT_DIR")) return cfg.out_dir;
    return output_directory();
}

void print_folds(const Branch& b) {
    std::cout << "folds: " << b.fold_count() << '\n';
    for (auto i : b.folds) {
        const BranchPoint& f = b.points[i];
        std::cout << "  " << to_string(b.axis.label) << " = " << format_number(f.parameter)
                  << "  max|x1| = " << format_number(f.amplitude) << '\n';
    }
    for (const auto& w : b.warnings) std::cout << "  warning: " << w << '\n';
}

/// Settled orbit at the configured parameters with `axis` set to `value`.
PeriodicOrbit start_orbit(const RunConfig& cfg, const ParamAxis& axis, double value,
                          const ContinuationOptions& opt) {
    ModelParams mp = cfg.model;
    axis.write(mp, value);
    return settled_orbit(mp, opt.bvp);
}

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto v = parse_number(item);
        if (!v) throw FormatError("'" + item + "' is not a number");
        out.push_back(*v);
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Continuation and bifurcation analysis of a forced impacting cantilever"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config;

    auto* estimate = app.add_subcommand("estimate", "eigenfrequency, tip stiffnesses and alpha from beam geometry");
    estimate->add_option("--config", config, "configuration file");

    auto* simulate = app.add_subcommand("simulate", "integrate the smoothed system and write t,x1,x2");
    double periods = 50.0, x1 = 0.0, x2 = 0.0;
    std::string sim_out;
    simulate->add_option("--config", config, "configuration file");
    simulate->add_option("--periods", periods, "forcing periods to integrate")->check(CLI::PositiveNumber);
    simulate->add_option("--x1", x1, "initial displacement");
    simulate->add_option("--x2", x2, "initial velocity");
    simulate->add_option("--out", sim_out, "output CSV (default <out dir>/trajectory.csv)");

    auto* freq = app.add_subcommand("freq-response", "continue periodic orbits in one parameter");
    std::string param = "omega", out_flag;
    double lo = 0.3, hi = 3.0;
    freq->add_option("--config", config, "configuration file");
    freq->add_option("--param", param, "omega, forcing, i_l or p");
    freq->add_option("--min", lo, "lower end of the range (start point)");
    freq->add_option("--max", hi, "upper end of the range");
    freq->add_option("--out", out_flag, "output directory");

    auto* fold = app.add_subcommand("fold-curve", "continue the folds of a frequency response in a second parameter");
    std::string param2 = "p";
    double lo2 = 1.0, hi2 = 3.0, wlo = 0.3, whi = 3.0;
    fold->add_option("--config", config, "configuration file");
    fold->add_option("--param2", param2, "p, forcing or i_l")->check(CLI::IsMember({"p", "forcing", "i_l"}));
    fold->add_option("--min", lo2, "lower end of the second parameter (log10 p for p)");
    fold->add_option("--max", hi2, "upper end of the second parameter");
    fold->add_option("--omega-min", wlo, "frequency response start");
    fold->add_option("--omega-max", whi, "frequency response end");
    fold->add_option("--out", out_flag, "output directory");

    auto* isola = app.add_subcommand("isola-scan", "classify branch topology at I_l sections");
    std::string il_list;
    isola->add_option("--config", config, "configuration file");
    isola->add_option("--il", il_list, "comma-separated I_l values")->required();
    isola->add_option("--out", out_flag, "output directory");

    auto* scen = app.add_subcommand("scenario", "run a named scenario and check its descriptors");
    std::string name;
    scen->add_option("--name", name, "scenario name")->required()->check(CLI::IsMember(scenario_names()));
    scen->add_option("--out", out_flag, "output directory");

    auto* overlay = app.add_subcommand("overlay", "compare an experimental sweep with model sections");
    std::string result_dir, data_file, report_file;
    overlay->add_option("--result", result_dir, "fig10_tongue result directory")->required();
    overlay->add_option("--data", data_file, "sweep CSV with omega,i_l,amplitude")->required();
    overlay->add_option("--report", report_file, "write the JSON report here as well");

    auto* plot = app.add_subcommand("plot", "render two CSV columns as SVG");
    std::string in_csv, out_svg, xcol, ycol, style = "solid-dashed-by:stability", title;
    plot->add_option("--in", in_csv, "input CSV")->required();
    plot->add_option("--out", out_svg, "output SVG")->required();
    plot->add_option("--x", xcol, "x column")->required();
    plot->add_option("--y", ycol, "y column")->required();
    plot->add_option("--style", style, "solid or solid-dashed-by:stability")
        ->check(CLI::IsMember({"solid", "solid-dashed-by:stability"}));
    plot->add_option("--title", title, "plot title");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return usage;
    }

    try {
        if (*estimate) {
            const RunConfig cfg = load_config(config);
            const BeamGeometry& g = cfg.geometry;
            std::cout << "f = " << format_number(estimate_natural_frequency(g)) << " Hz\n"
                      << "k1 = " << format_number(estimate_tip_stiffness(g, false)) << " N/m\n"
                      << "k2 = " << format_number(estimate_tip_stiffness(g, true)) << " N/m\n"
                      << "alpha = " << format_number(estimate_alpha(g)) << '\n';
        } else if (*simulate) {
            const RunConfig cfg = load_config(config);
            const fs::path path = sim_out.empty() ? out_dir("", cfg) / "trajectory.csv" : fs::path(sim_out);
            const Trajectory tr = integrate(State(x1, x2), 0.0, periods * cfg.model.period(), cfg.model);
            if (path.has_parent_path()) fs::create_directories(path.parent_path());
            std::ofstream out(path);
            write_trajectory_csv(out, tr);
            std::cout << "wrote " << path.string() << " (" << tr.times.size() << " samples)\n";
        } else if (*freq) {
            const RunConfig cfg = load_config(config);
            const ParamAxis axis = ParamAxis::make(param_from_string(param), &cfg.rescaling);
            const ContinuationOptions base = cfg.continuation();
            ContinuationOptions opt = base;
            opt.rescaling = &cfg.rescaling;
            const PeriodicOrbit start = start_orbit(cfg, axis, lo, opt);
            const Branch b = continue_branch(start, axis, std::min(lo, hi) - 1e-3 * std::abs(lo),
                                             std::max(lo, hi), opt);
            const fs::path path = out_dir(out_flag, cfg) / ("branch_" + param + ".csv");
            write_branch_csv(path, b, &cfg.rescaling);
            print_folds(b);
            std::cout << "termination: " << to_string(b.termination) << "\nwrote " << path.string() << '\n';
        } else if (*fold) {
            const RunConfig cfg = load_config(config);
            ContinuationOptions opt = cfg.continuation();
            opt.rescaling = &cfg.rescaling;
            const Branch b = frequency_response(cfg.model, wlo, whi, opt);
            const fs::path dir = out_dir(out_flag, cfg);
            write_branch_csv(dir / "branch_omega.csv", b, &cfg.rescaling);
            print_folds(b);
            FoldCurveOptions fo;
            fo.bvp = opt.bvp;
            const ParamAxis axis2 = ParamAxis::make(param_from_string(param2), &cfg.rescaling);
            const auto loci = fold_loci(b, axis2, lo2, hi2, fo);
            for (std::size_t i = 0; i < loci.size(); ++i) {
                const fs::path path = dir / ("folds_" + std::to_string(i) + "_" + param2 + ".csv");
                write_fold_curve_csv(path, loci[i].curve);
                std::cout << "fold curve " << i << ": " << loci[i].curve.records.size() << " records, "
                          << loci[i].curve.cusps.size() << " cusps\n";
                for (const auto& c : loci[i].curve.cusps)
                    std::cout << "  cusp at (" << format_number(c.param1) << ", "
                              << format_number(c.param2) << ")" << (c.sharp ? "" : " smooth turn") << '\n';
            }
        } else if (*isola) {
            const RunConfig cfg = load_config(config);
            IsolaOptions io;
            io.continuation = cfg.continuation();
            const auto values = parse_list(il_list);
            const fs::path dir = out_dir(out_flag, cfg);
            const auto report = detect_isola(cfg.model, cfg.rescaling, values, io);
            for (const auto& s : report) {
                std::cout << "I_l = " << format_number(s.forcing_value) << ": "
                          << to_string(s.classification) << '\n';
                for (const auto& n : s.notes) std::cout << "  " << n << '\n';
                write_branch_csv(dir / ("branch_main_i_l_" + format_number(s.forcing_value) + ".csv"),
                                 s.main, &cfg.rescaling);
                for (std::size_t k = 0; k < s.isolas.size(); ++k)
                    write_branch_csv(dir / ("branch_isola_i_l_" + format_number(s.forcing_value) + "_" +
                                            std::to_string(k) + ".csv"),
                                     s.isolas[k], &cfg.rescaling);
            }
        } else if (*scen) {
            ScenarioOptions so;
            so.out_dir = out_flag.empty() ? output_directory() : fs::path(out_flag);
            const ScenarioResult r = run_scenario(name, so);
            for (const auto& d : r.descriptors)
                std::cout << (d.pass ? "PASS " : "FAIL ") << d.name << ": expected " << d.expected
                          << ", observed " << d.observed << '\n';
            std::cout << "wrote " << (*so.out_dir / r.name).string() << '\n';
            return r.passed() ? ok : failed;
        } else if (*overlay) {
            const auto sections = load_overlay_sections(result_dir);
            const auto data = read_sweep_csv(fs::path(data_file));
            double delta_l = experiment_rescaling().grazing_displacement;
            if (std::ifstream rep{fs::path(result_dir) / "report.json"}) {
                const auto j = nlohmann::json::parse(rep, nullptr, false);
                if (!j.is_discarded() && j.contains("rescaling"))
                    delta_l = j["rescaling"].value("grazing_displacement", delta_l);
            }
            const OverlayReport rep = overlay_experiment(sections, data, delta_l);
            const std::string text = overlay_report_json(rep).dump(2);
            std::cout << text << '\n';
            if (!report_file.empty()) std::ofstream(report_file) << text << '\n';
        } else if (*plot) {
            PlotOptions po;
            po.x = xcol;
            po.y = ycol;
            po.title = title;
            po.style = style == "solid" ? LineStyle::solid : LineStyle::by_stability;
            write_plot(in_csv, out_svg, po);
            std::cout << "wrote " << out_svg << '\n';
        }
    } catch (const FormatError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return bad_input;
    } catch (const DomainError& e) {
        std::cerr << "parameter error: " << e.what() << '\n';
        return bad_input;
    } catch (const ConvergenceError& e) {
        std::cerr << "solver error: " << e.what() << '\n';
        return numerical;
    } catch (const IntegrationError& e) {
        std::cerr << "integration error: " << e.what() << '\n';
        return numerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return failed;
    }
    return ok;
}

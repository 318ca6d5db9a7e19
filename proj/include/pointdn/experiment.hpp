#ifndef POINTDN_EXPERIMENT_HPP
#define POINTDN_EXPERIMENT_HPP

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "pointdn/grid.hpp"
#include "pointdn/io.hpp"
#include "pointdn/linear_solve.hpp"
#include "pointdn/linearization.hpp"
#include "pointdn/measure.hpp"
#include "pointdn/parallel.hpp"
#include "pointdn/reconstruct.hpp"
#include "pointdn/runge.hpp"
#include "pointdn/semilinear.hpp"

namespace pointdn {

inline constexpr const char* kVersion = "0.1.0";

using Json = nlohmann::ordered_json;

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitSolver = 3, kExitCheck = 4 };

inline int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument:
        case ErrorKind::Io: return kExitConfig;
        default: return kExitSolver;
    }
}

// ---- config access ------------------------------------------------------

inline const Json& at(const Json& cfg, const std::string& key) {
    if (!cfg.contains(key)) throw Error(ErrorKind::InvalidArgument, "config is missing key '" + key + "'");
    return cfg.at(key);
}

template <class T>
T get(const Json& cfg, const std::string& key) {
    try {
        return at(cfg, key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidArgument, "config key '" + key + "' has the wrong type: " + e.what());
    }
}

// "a.b.c=value": value parsed as JSON, falling back to a plain string.
inline void apply_override(Json& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw Error(ErrorKind::InvalidArgument, "override '" + assignment + "' is not key=value");
    const std::string path = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    Json value;
    try {
        value = Json::parse(text);
    } catch (const nlohmann::json::exception&) {
        value = text;
    }
    Json* node = &cfg;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) throw Error(ErrorKind::InvalidArgument, "override '" + assignment + "' has an empty key");
        if (!node->is_object()) *node = Json::object();
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

inline Json load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::InvalidArgument, "cannot open config " + path.string());
    try {
        return Json::parse(in, nullptr, true, true);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidArgument, "config " + path.string() + " is not valid JSON: " + e.what());
    }
}

// A manifest written by a previous run can be passed back as a config.
inline Json unwrap_manifest(Json loaded) {
    if (loaded.is_object() && loaded.contains("command") && loaded.contains("config") && loaded.at("config").is_object())
        return loaded.at("config");
    return loaded;
}

inline Json default_config(const std::string& command, const std::string& mode = "moment") {
    const Json point = {{"type", "point"}, {"x0", {1.0, 0.5}}, {"sigma", 0.1}};
    Json base = {{"seed", 0}, {"output_dir", "out/" + command}, {"delta", kDefaultSmallness},
                 {"newton", {{"max_iter", 50}, {"residual_tol", 1e-12}, {"max_halvings", 20}}}};
    if (command == "forward" || command == "dn") {
        base.update(Json{{"n", 81},
                         {"m", 2},
                         {"q", {{"type", "constant"}, {"value", 1.0}}},
                         {"gamma", {0.0, 4.0}},
                         {"f", {{"type", "function"}, {"name", "xy"}, {"scale", 1e-2}}}});
        if (command == "dn") base["measure"] = point;
    } else if (command == "verify-identities") {
        base.update(Json{{"n", {41, 81}},
                         {"m", 2},
                         {"q", {{"type", "constant"}, {"value", 1.0}}},
                         {"gamma", {0.0, 4.0}},
                         {"directions", nullptr},
                         {"measure", point},
                         {"eps_scale", 1e-2},
                         {"richardson", 1},
                         {"tolerance", 1e-3},
                         {"ratio_band", {3.5, 4.5}}});
    } else if (command == "measure-data") {
        base.update(Json{{"ns", {41, 81, 161}},
                         {"measure", point},
                         {"source", {{"type", "constant"}, {"value", 1.0}}},
                         {"ratio_band", {3.5, 4.5}},
                         {"lr_n", 321},
                         {"sigmas", {0.2, 0.1, 0.05, 0.025}},
                         {"r_bounded", 1.8},
                         {"r_growing", 2.5},
                         {"max_variation", 0.25},
                         {"min_growth", 2.0}});
    } else if (command == "reconstruct") {
        base.update(Json{{"mode", mode}, {"m", 2}, {"n_data", 161}, {"n_recon", 81}, {"noise_rel", 0.0},
                         {"eps_scale", 1e-2}, {"richardson", 1}, {"phi_floor", 1e-3}});
        if (mode == "fourier") {
            base.update(Json{{"q", {{"type", "cosine"}, {"fx", 1}, {"fy", 0}, {"amplitude", 1.0}}},
                             {"gamma", {0.0, 4.0}},
                             {"measure", point},
                             {"kmax", 8.0 * std::numbers::pi},
                             {"basis_order", 3},
                             {"data_source", "cascade"},
                             {"threshold", 0.02}});
        } else {
            base.update(Json{{"q",
                              {{"type", "bumps"},
                               {"bumps",
                                {{{"center", {0.3, 0.15}}, {"height", 0.5}, {"width", 0.1}},
                                 {{"center", {0.7, 0.15}}, {"height", 0.5}, {"width", 0.1}}}}}},
                             {"gamma", {0.0, 1.0}},
                             {"measure", {{"type", "point"}, {"x0", {0.5, 1.0}}, {"sigma", 0.1}}},
                             {"basis_count", 20},
                             {"half_width", 0.1},
                             {"pairs", 200},
                             {"lcurve", true},
                             {"lambda", nullptr},
                             {"regularizer", "gradient"},
                             {"data_source", "mixed"},
                             {"threshold", 0.15}});
        }
    } else if (command == "runge-demo") {
        base.update(Json{{"n", 161},
                         {"inner_height", 0.5},
                         {"sources", {8, 16, 32, 64}},
                         {"target", {{"type", "random"}, {"modes", 12}, {"decay", 1.0}}},
                         {"control", true},
                         {"control_ratio", 50.0}});
    } else {
        throw Error(ErrorKind::InvalidArgument, "unknown subcommand '" + command + "'");
    }
    return base;
}

// Objects merge key by key; anything else replaces.
inline void merge_into(Json& base, const Json& patch) {
    if (!base.is_object() || !patch.is_object()) {
        base = patch;
        return;
    }
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        if (base.contains(it.key())) {
            merge_into(base[it.key()], it.value());
        } else {
            base[it.key()] = it.value();
        }
    }
}

// Defaults first, user keys on top. Unknown top-level keys are rejected.
inline Json effective_config(const std::string& command, const Json& user) {
    if (!user.is_object()) throw Error(ErrorKind::InvalidArgument, "config must be a JSON object");
    std::string mode = "moment";
    if (command == "reconstruct" && user.contains("mode")) {
        mode = user.at("mode").is_string() ? user.at("mode").get<std::string>() : "";
        if (mode != "moment" && mode != "fourier")
            throw Error(ErrorKind::InvalidArgument, "reconstruct mode must be 'fourier' or 'moment'");
    }
    Json cfg = default_config(command, mode);
    for (auto it = user.begin(); it != user.end(); ++it) {
        if (it.key() == "command" || it.key() == "threads") continue;
        if (!cfg.contains(it.key()))
            throw Error(ErrorKind::InvalidArgument, "unknown config key '" + it.key() + "' for " + command);
        merge_into(cfg[it.key()], it.value());
    }
    if (user.contains("threads")) cfg["threads"] = user.at("threads");
    return cfg;
}

// ---- config builders ---------------------------------------------------

inline double gaussian_bump(double x, double y, double cx, double cy, double width) {
    const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
    return std::exp(-0.5 * r2 / (width * width));
}

inline RealField make_q(const Json& spec, const GridHandle& grid) {
    const auto type = get<std::string>(spec, "type");
    if (type == "constant") {
        const double value = get<double>(spec, "value");
        return RealField::from_function(grid, [&](double, double) { return value; });
    }
    if (type == "bumps") {
        std::vector<std::array<double, 4>> bumps;
        for (const auto& b : at(spec, "bumps")) {
            const auto c = get<std::vector<double>>(b, "center");
            require(c.size() == 2, "bump center needs two coordinates");
            const double width = get<double>(b, "width");
            require(width > 0, "bump width must be positive");
            bumps.push_back({c[0], c[1], get<double>(b, "height"), width});
        }
        const double offset = spec.value("offset", 0.0);
        return RealField::from_function(grid, [&](double x, double y) {
            double v = offset;
            for (const auto& b : bumps) v += b[2] * gaussian_bump(x, y, b[0], b[1], b[3]);
            return v;
        });
    }
    if (type == "cosine") {
        const double fx = get<double>(spec, "fx");
        const double fy = get<double>(spec, "fy");
        const double amp = spec.value("amplitude", 1.0);
        const double offset = spec.value("offset", 0.0);
        const double two_pi = 2.0 * std::numbers::pi;
        return RealField::from_function(grid, [&](double x, double y) {
            return offset + amp * std::cos(two_pi * fx * x) * std::cos(two_pi * fy * y);
        });
    }
    if (type == "csv") return read_field_csv(get<std::string>(spec, "path"), grid);
    throw Error(ErrorKind::InvalidArgument, "unknown q type '" + type + "'");
}

inline Arc make_gamma(const Json& spec) {
    const auto g = spec.get<std::vector<double>>();
    require(g.size() == 2, "gamma must be [s_start, s_end]");
    if (g[1] - g[0] >= 4.0 - 1e-12) return Arc::full();
    require(g[0] >= 0.0 && g[0] < 4.0 && g[1] >= 0.0 && g[1] <= 4.0 && g[0] != g[1],
            "gamma endpoints must lie in [0, 4] and differ");
    return {g[0], g[1]};
}

inline double boundary_function(const std::string& name, double x, double y) {
    if (name == "one") return 1.0;
    if (name == "x") return x;
    if (name == "y") return y;
    if (name == "xy") return x * y;
    if (name == "x2_minus_y2") return x * x - y * y;
    if (name == "sin_pi_x") return std::sin(std::numbers::pi * x);
    throw Error(ErrorKind::InvalidArgument, "unknown boundary function '" + name + "'");
}

inline RealBoundary make_boundary(const Json& spec, const GridHandle& grid, const Arc& gamma) {
    const auto type = get<std::string>(spec, "type");
    const double scale = spec.value("scale", 1.0);
    if (type == "zero") return RealBoundary(grid, Vector<double>::Zero(grid->boundary_count()), arc_mask(*grid, gamma));
    if (type == "function") {
        const auto name = get<std::string>(spec, "name");
        boundary_function(name, 0.0, 0.0);
        return trace(grid, [&](double x, double y) { return scale * boundary_function(name, x, y); }, gamma);
    }
    if (type == "bump") {
        return bump_trace(grid, gamma, get<double>(spec, "center"), get<double>(spec, "half_width"),
                          scale * spec.value("height", 1.0));
    }
    if (type == "csv") {
        Vector<double> values = scale * read_boundary_csv(get<std::string>(spec, "path"), *grid);
        auto mask = arc_mask(*grid, gamma);
        for (int b = 0; b < values.size(); ++b)
            require(mask[b] || values[b] == 0.0, "boundary CSV is nonzero outside gamma");
        return RealBoundary(grid, std::move(values), std::move(mask));
    }
    throw Error(ErrorKind::InvalidArgument, "unknown boundary data type '" + type + "'");
}

inline BoundaryMeasure make_measure(const Json& spec, const GridHandle& grid) {
    const auto type = get<std::string>(spec, "type");
    if (type == "point") {
        const auto x0 = get<std::vector<double>>(spec, "x0");
        require(x0.size() == 2, "measure x0 needs two coordinates");
        return mollified_point_mass(grid, {x0[0], x0[1]}, get<double>(spec, "sigma"));
    }
    if (type == "density") return density_measure(grid, read_boundary_csv(get<std::string>(spec, "values_csv"), *grid));
    if (type == "uniform") return uniform_measure(grid, spec.value("value", 0.25));
    throw Error(ErrorKind::InvalidArgument, "unknown measure type '" + type + "'");
}

inline NewtonParams make_newton(const Json& spec) {
    NewtonParams p;
    p.max_iter = spec.value("max_iter", p.max_iter);
    p.residual_tol = spec.value("residual_tol", p.residual_tol);
    p.max_halvings = spec.value("max_halvings", p.max_halvings);
    return p;
}

// Default directions: m smooth bumps inside gamma at staggered centers.
inline std::vector<RealBoundary> default_directions(const GridHandle& grid, const Arc& gamma, int m) {
    std::vector<RealBoundary> out;
    const double length = gamma.length();
    const double half_width = gamma.is_full() ? 0.4 : 0.4 * length;
    for (int j = 0; j < m; ++j) {
        const double center = gamma.is_full() ? 0.5 + j : gamma.start + length * (j + 1.0) / (m + 1.0);
        const double lo = gamma.is_full() ? center : gamma.start + half_width;
        const double hi = gamma.is_full() ? center : gamma.start + length - half_width;
        out.push_back(bump_trace(grid, gamma, std::clamp(center, lo, hi), half_width));
    }
    return out;
}

// ---- run bookkeeping ------------------------------------------------------

struct CheckRecord {
    std::string name;
    bool passed = false;
    std::string detail;
};

class RunContext {
public:
    RunContext(std::filesystem::path out_dir, bool check) : out_dir_(std::move(out_dir)), check_(check) {}

    const std::filesystem::path& out_dir() const noexcept { return out_dir_; }
    bool check_mode() const noexcept { return check_; }

    std::filesystem::path output(const std::string& name) {
        outputs_.push_back(name);
        return out_dir_ / name;
    }

    template <class Fn>
    auto timed(const std::string& label, Fn&& fn) {
        const auto start = std::chrono::steady_clock::now();
        auto finish = [&] {
            timings_.emplace_back(label, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
        };
        if constexpr (std::is_void_v<decltype(fn())>) {
            fn();
            finish();
        } else {
            auto value = fn();
            finish();
            return value;
        }
    }

    void check(const std::string& name, bool passed, const std::string& detail) {
        checks_.push_back({name, passed, detail});
    }

    bool all_checks_passed() const {
        for (const auto& c : checks_)
            if (!c.passed) return false;
        return true;
    }

    const std::vector<CheckRecord>& checks() const noexcept { return checks_; }
    const std::vector<std::string>& outputs() const noexcept { return outputs_; }
    const std::vector<std::pair<std::string, double>>& timings() const noexcept { return timings_; }

private:
    std::filesystem::path out_dir_;
    bool check_;
    std::vector<std::string> outputs_;
    std::vector<std::pair<std::string, double>> timings_;
    std::vector<CheckRecord> checks_;
};

// ---- subcommands ------------------------------------------------------

inline SemilinearProblem make_problem(const Json& cfg, const GridHandle& grid) {
    const Arc gamma = make_gamma(at(cfg, "gamma"));
    return {grid, make_q(at(cfg, "q"), grid), get<int>(cfg, "m"), make_boundary(at(cfg, "f"), grid, gamma),
            get<double>(cfg, "delta")};
}

inline void write_newton_report(const std::filesystem::path& path, const NewtonReport& report) {
    auto out = open_output(path);
    out << "iteration,residual,correction\n";
    for (std::size_t k = 0; k < report.residual_norms.size(); ++k) {
        out << k << ',' << format_number(report.residual_norms[k]) << ',';
        if (k < report.correction_norms.size()) out << format_number(report.correction_norms[k]);
        out << '\n';
    }
}

inline void run_forward(const Json& cfg, RunContext& ctx) {
    const GridHandle grid = build_grid(get<int>(cfg, "n"));
    const SemilinearProblem problem = make_problem(cfg, grid);
    const SemilinearSolution sol = ctx.timed("solve", [&] { return solve_semilinear(problem, make_newton(at(cfg, "newton"))); });
    write_field_csv(ctx.output("u.csv"), sol.u);
    write_boundary_csv(ctx.output("flux.csv"), normal_derivative(sol.u));
    write_newton_report(ctx.output("newton.csv"), sol.report);
    const double tol = sol.report.tolerance;
    const double res = sol.report.residual_norms.back();
    ctx.check("newton_residual", res <= tol, "residual " + format_number(res) + " <= " + format_number(tol));
    ctx.check("small_branch", sol.u.max_abs() <= 2.0 * problem.f.max_abs(),
              "|u|_inf " + format_number(sol.u.max_abs()) + " <= 2|f|_inf");
}

inline void run_dn(const Json& cfg, RunContext& ctx) {
    const GridHandle grid = build_grid(get<int>(cfg, "n"));
    const SemilinearProblem problem = make_problem(cfg, grid);
    const BoundaryMeasure mu = make_measure(at(cfg, "measure"), grid);
    const DNRecord record = ctx.timed("dn", [&] { return dn_map(problem, make_newton(at(cfg, "newton")), &mu); });
    write_boundary_csv(ctx.output("dn.csv"), record.flux);
    auto out = open_output(ctx.output("functional.csv"));
    out << "functional\n" << format_number(*record.functional) << '\n';
}

// Gaps at this level are rounding, e.g. q = 0 where every method returns zero.
inline constexpr double kExactGap = 1e-12;

struct IdentityReport {
    double mixed = 0.0;
    double cascade = 0.0;
    double volume = 0.0;
    double eps = 0.0;

    double scale() const { return std::abs(cascade) > 0 ? std::abs(cascade) : 1.0; }
    // Difference-scheme gap, relative to the cascade value (absolute when that vanishes).
    double mixed_gap() const { return std::abs(mixed - cascade) / scale(); }
    // Discretization gap of the Green identity.
    double volume_gap() const { return std::abs(volume - cascade) / scale(); }
};

inline IdentityReport evaluate_identities(const LinearizationPlan& plan) {
    IdentityReport r;
    r.mixed = mixed_difference_dn(plan);
    r.cascade = cascade_oracle(plan);
    r.volume = volume_identity(plan);
    r.eps = *std::max_element(plan.steps.begin(), plan.steps.end());
    return r;
}

inline LinearizationPlan make_plan(const Json& cfg, const GridHandle& grid) {
    const int m = get<int>(cfg, "m");
    const Arc gamma = make_gamma(at(cfg, "gamma"));
    std::vector<RealBoundary> directions;
    if (cfg.contains("directions") && !cfg.at("directions").is_null()) {
        for (const auto& d : cfg.at("directions")) directions.push_back(make_boundary(d, grid, gamma));
    } else {
        directions = default_directions(grid, gamma, m);
    }
    auto steps = default_steps(directions, get<double>(cfg, "eps_scale"));
    LinearizationPlan plan{grid, m, std::move(directions), std::move(steps), make_measure(at(cfg, "measure"), grid),
                           make_q(at(cfg, "q"), grid), get<int>(cfg, "richardson"), get<double>(cfg, "delta"),
                           make_newton(at(cfg, "newton"))};
    plan.validate();
    return plan;
}

inline void run_verify_identities(const Json& cfg, RunContext& ctx) {
    std::vector<int> ns;
    if (at(cfg, "n").is_array()) {
        ns = get<std::vector<int>>(cfg, "n");
    } else {
        ns.push_back(get<int>(cfg, "n"));
    }
    auto out = open_output(ctx.output("report.csv"));
    out << "method,m,n,eps,value\n";
    const double tolerance = get<double>(cfg, "tolerance");
    const auto band = get<std::vector<double>>(cfg, "ratio_band");
    require(band.size() == 2, "ratio_band must be [low, high]");
    std::vector<double> volume_gaps;
    for (int n : ns) {
        const LinearizationPlan plan = make_plan(cfg, build_grid(n));
        const IdentityReport r = ctx.timed("identities_n" + std::to_string(n), [&] { return evaluate_identities(plan); });
        for (auto [name, value] : {std::pair{"mixed_difference", r.mixed}, std::pair{"cascade_oracle", r.cascade},
                                   std::pair{"volume_identity", r.volume}}) {
            out << name << ',' << plan.m << ',' << n << ',' << format_number(r.eps) << ',' << format_number(value)
                << '\n';
        }
        ctx.check("mixed_vs_cascade_n" + std::to_string(n), r.mixed_gap() <= tolerance,
                  "gap " + format_number(r.mixed_gap()) + " <= " + format_number(tolerance));
        if (!volume_gaps.empty()) {
            const std::string name = "cascade_vs_volume_ratio_n" + std::to_string(n);
            if (volume_gaps.back() <= kExactGap && r.volume_gap() <= kExactGap) {
                ctx.check(name, true, "both gaps vanish (exact agreement)");
            } else {
                const double ratio = volume_gaps.back() / r.volume_gap();
                ctx.check(name, ratio >= band[0] && ratio <= band[1],
                          "gap " + format_number(r.volume_gap()) + ", refinement ratio " + format_number(ratio));
            }
        }
        volume_gaps.push_back(r.volume_gap());
    }
}

inline RealField make_source(const Json& spec, const GridHandle& grid) { return make_q(spec, grid); }

/// Duality residual at each n for w solving Delta w = F, w = 0.
inline std::vector<double> duality_sweep(const std::vector<int>& ns, const Json& measure_spec, const Json& source) {
    std::vector<double> residuals(ns.size());
    parallel_for(static_cast<int>(ns.size()), [&](int k) {
        const GridHandle grid = build_grid(ns[k]);
        LinearSystem laplace(grid);
        const BoundaryMeasure mu = make_measure(measure_spec, grid);
        const RealField psi = solve_measure_dirichlet(laplace, mu);
        const RealField w = laplace.solve(make_source(source, grid), RealBoundary(grid));
        residuals[k] = duality_residual(psi, mu, w);
    });
    return residuals;
}

/// ||Psi_sigma||_{L^r} for a point mass at x0 on one grid.
inline std::vector<std::vector<double>> lr_sweep(int n, Point x0, const std::vector<double>& sigmas,
                                                 const std::vector<double>& rs) {
    const GridHandle grid = build_grid(n);
    LinearSystem laplace(grid);
    std::vector<std::vector<double>> norms(sigmas.size(), std::vector<double>(rs.size()));
    for (std::size_t s = 0; s < sigmas.size(); ++s) {
        const RealField psi = solve_measure_dirichlet(laplace, mollified_point_mass(grid, x0, sigmas[s]));
        for (std::size_t r = 0; r < rs.size(); ++r) norms[s][r] = lr_norm(psi, rs[r]);
    }
    return norms;
}

struct DichotomyVerdict {
    double variation = 0.0;  // (max - min) / min of the bounded norm
    double growth = 0.0;     // last / first of the growing norm
    bool monotone = false;
    bool bounded_ok = false;
    bool growing_ok = false;
};

inline DichotomyVerdict lr_dichotomy(const std::vector<double>& bounded, const std::vector<double>& growing,
                                     double max_variation, double min_growth) {
    DichotomyVerdict v;
    const auto [lo, hi] = std::minmax_element(bounded.begin(), bounded.end());
    v.variation = (*hi - *lo) / *lo;
    v.growth = growing.back() / growing.front();
    v.monotone = true;
    for (std::size_t k = 1; k < growing.size(); ++k) v.monotone = v.monotone && growing[k] > growing[k - 1];
    v.bounded_ok = v.variation < max_variation;
    v.growing_ok = v.monotone && v.growth > min_growth;
    return v;
}

inline void run_measure_data(const Json& cfg, RunContext& ctx) {
    const auto ns = get<std::vector<int>>(cfg, "ns");
    require(!ns.empty(), "measure-data needs at least one grid size");
    const auto residuals = ctx.timed("duality", [&] { return duality_sweep(ns, at(cfg, "measure"), at(cfg, "source")); });
    const auto band = get<std::vector<double>>(cfg, "ratio_band");
    require(band.size() == 2, "ratio_band must be [low, high]");
    {
        auto out = open_output(ctx.output("duality.csv"));
        out << "n,h,residual,ratio\n";
        for (std::size_t k = 0; k < ns.size(); ++k) {
            out << ns[k] << ',' << format_number(1.0 / (ns[k] - 1)) << ',' << format_number(residuals[k]) << ',';
            if (k > 0) {
                const double ratio = residuals[k - 1] / residuals[k];
                out << format_number(ratio);
                ctx.check("duality_ratio_n" + std::to_string(ns[k]), ratio >= band[0] && ratio <= band[1],
                          "ratio " + format_number(ratio) + " in [" + format_number(band[0]) + ", " +
                              format_number(band[1]) + "]");
            }
            out << '\n';
        }
    }

    const auto sigmas = get<std::vector<double>>(cfg, "sigmas");
    require(sigmas.size() >= 2, "the L^r sweep needs at least two widths");
    const double r_lo = get<double>(cfg, "r_bounded");
    const double r_hi = get<double>(cfg, "r_growing");
    const auto x0 = get<std::vector<double>>(at(cfg, "measure"), "x0");
    const auto norms = ctx.timed("lr", [&] { return lr_sweep(get<int>(cfg, "lr_n"), {x0[0], x0[1]}, sigmas, {r_lo, r_hi}); });
    std::vector<double> bounded, growing;
    {
        auto out = open_output(ctx.output("lr.csv"));
        out << "sigma,r,norm\n";
        for (std::size_t s = 0; s < sigmas.size(); ++s) {
            out << format_number(sigmas[s]) << ',' << format_number(r_lo) << ',' << format_number(norms[s][0]) << '\n';
            out << format_number(sigmas[s]) << ',' << format_number(r_hi) << ',' << format_number(norms[s][1]) << '\n';
            bounded.push_back(norms[s][0]);
            growing.push_back(norms[s][1]);
        }
    }
    const auto v = lr_dichotomy(bounded, growing, get<double>(cfg, "max_variation"), get<double>(cfg, "min_growth"));
    ctx.check("lr_bounded", v.bounded_ok, "variation " + format_number(v.variation));
    ctx.check("lr_growing", v.growing_ok,
              "growth " + format_number(v.growth) + (v.monotone ? ", monotone" : ", not monotone"));
}

// ---- reconstruction ------------------------------------------------------

inline MeasurementSetup make_setup(const Json& cfg, const GridHandle& grid) {
    const int m = get<int>(cfg, "m");
    const Arc gamma = make_gamma(at(cfg, "gamma"));
    return {m,
            default_auxiliary(grid, gamma, m),
            make_measure(at(cfg, "measure"), grid),
            get<double>(cfg, "eps_scale"),
            get<int>(cfg, "richardson"),
            get<double>(cfg, "delta"),
            make_newton(at(cfg, "newton"))};
}

inline DataSource make_data_source(const Json& cfg) {
    const auto s = get<std::string>(cfg, "data_source");
    if (s == "mixed") return DataSource::MixedDifference;
    if (s == "cascade") return DataSource::Cascade;
    throw Error(ErrorKind::InvalidArgument, "data_source must be 'mixed' or 'cascade'");
}

// Adds noise with standard deviation noise_rel * rms(values) per entry.
template <class T>
void add_noise(std::vector<T>& values, double noise_rel, std::uint64_t seed) {
    if (noise_rel <= 0.0 || values.empty()) return;
    double sum = 0.0;
    for (const auto& v : values) sum += std::norm(v);
    const double sd = noise_rel * std::sqrt(sum / values.size());
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& v : values) {
        if constexpr (std::is_same_v<T, Complex>) {
            const double re = normal(rng);
            const double im = normal(rng);
            v += sd * Complex(re, im) / std::sqrt(2.0);
        } else {
            v += sd * normal(rng);
        }
    }
}

struct MomentRun {
    ReconstructionResult result;
    std::vector<LCurvePoint> lcurve;
    std::vector<double> data;
};

inline MomentBasis make_basis(const Json& cfg) {
    return {make_gamma(at(cfg, "gamma")), get<int>(cfg, "basis_count"), get<double>(cfg, "half_width"),
            get<int>(cfg, "pairs")};
}

inline Regularizer make_regularizer(const Json& cfg) {
    const auto r = get<std::string>(cfg, "regularizer");
    if (r == "gradient") return Regularizer::Gradient;
    if (r == "identity") return Regularizer::Identity;
    throw Error(ErrorKind::InvalidArgument, "regularizer must be 'gradient' or 'identity'");
}

inline std::vector<double> simulate_moment_config(const Json& cfg) {
    const GridHandle data_grid = build_grid(get<int>(cfg, "n_data"));
    const MeasurementSetup setup = make_setup(cfg, data_grid);
    return simulate_moment_data(make_q(at(cfg, "q"), data_grid), make_basis(cfg), setup, make_data_source(cfg));
}

inline MomentRun reconstruct_moment(const Json& cfg, std::vector<double> data) {
    const GridHandle grid = build_grid(get<int>(cfg, "n_recon"));
    add_noise(data, get<double>(cfg, "noise_rel"), get<std::uint64_t>(cfg, "seed"));
    const MeasurementSetup setup = make_setup(cfg, grid);
    LinearSystem laplace(grid);
    const MomentSystem system = assemble_moment_system(laplace, make_basis(cfg), setup, data);
    const TikhonovSolver solver(grid, system.matrix, system.rhs, make_regularizer(cfg));
    std::vector<LCurvePoint> curve;
    double lambda = 0.0;
    if (get<bool>(cfg, "lcurve")) {
        curve = solver.lcurve(solver.default_lambdas());
        lambda = curve[lcurve_corner(curve)].lambda;
    } else {
        lambda = get<double>(cfg, "lambda");
    }
    return {tikhonov_solve(solver, system.weight, lambda, make_q(at(cfg, "q"), grid), get<double>(cfg, "phi_floor")),
            std::move(curve), std::move(data)};
}

struct FourierRun {
    ReconstructionResult result;
    FourierData data;
};

inline FourierData simulate_fourier_config(const Json& cfg) {
    const GridHandle data_grid = build_grid(get<int>(cfg, "n_data"));
    const MeasurementSetup setup = make_setup(cfg, data_grid);
    return simulate_fourier_data(make_q(at(cfg, "q"), data_grid), setup, get<double>(cfg, "kmax"),
                                 make_data_source(cfg));
}

inline FourierRun reconstruct_fourier(const Json& cfg, FourierData data) {
    require(make_gamma(at(cfg, "gamma")).is_full(), "Fourier mode needs gamma = the whole boundary");
    const GridHandle grid = build_grid(get<int>(cfg, "n_recon"));
    add_noise(data.values, get<double>(cfg, "noise_rel"), get<std::uint64_t>(cfg, "seed"));
    const MeasurementSetup setup = make_setup(cfg, grid);
    LinearSystem laplace(grid);
    const RealField phi = weight_field(laplace, setup.aux, setup.mu);
    FourierRun run{recover_q_fourier(data.ks, data.values, phi, setup.m, get<int>(cfg, "basis_order"),
                                     get<double>(cfg, "phi_floor")),
                   std::move(data)};
    run.result.rel_l2_error = relative_l2_error(run.result.q_rec, make_q(at(cfg, "q"), grid), run.result.mask);
    return run;
}

inline void write_metrics(const std::filesystem::path& path, const ReconstructionResult& r) {
    auto out = open_output(path);
    out << "residual,rel_l2_error,lambda,masked_fraction\n";
    out << format_number(r.residual) << ',' << (r.rel_l2_error ? format_number(*r.rel_l2_error) : "") << ','
        << format_number(r.lambda) << ',' << format_number(r.masked_fraction) << '\n';
}

inline void run_reconstruct(const Json& cfg, RunContext& ctx) {
    const auto mode = get<std::string>(cfg, "mode");
    std::optional<ReconstructionResult> result;
    if (mode == "fourier") {
        FourierData data = ctx.timed("simulate", [&] { return simulate_fourier_config(cfg); });
        FourierRun run = ctx.timed("reconstruct", [&] { return reconstruct_fourier(cfg, std::move(data)); });
        auto out = open_output(ctx.output("data.csv"));
        out << "kx,ky,value_re,value_im\n";
        for (std::size_t k = 0; k < run.data.ks.size(); ++k) {
            out << format_number(run.data.ks[k][0]) << ',' << format_number(run.data.ks[k][1]) << ','
                << format_number(run.data.values[k].real()) << ',' << format_number(run.data.values[k].imag()) << '\n';
        }
        result.emplace(std::move(run.result));
    } else {
        std::vector<double> data = ctx.timed("simulate", [&] { return simulate_moment_config(cfg); });
        MomentRun run = ctx.timed("reconstruct", [&] { return reconstruct_moment(cfg, std::move(data)); });
        {
            auto out = open_output(ctx.output("data.csv"));
            out << "pair,value\n";
            for (std::size_t k = 0; k < run.data.size(); ++k) out << k << ',' << format_number(run.data[k]) << '\n';
        }
        if (!run.lcurve.empty()) {
            auto out = open_output(ctx.output("lcurve.csv"));
            out << "lambda,residual,seminorm\n";
            for (const auto& p : run.lcurve)
                out << format_number(p.lambda) << ',' << format_number(p.residual) << ',' << format_number(p.seminorm)
                    << '\n';
        }
        result.emplace(std::move(run.result));
    }
    write_field_csv(ctx.output("q_true.csv"), make_q(at(cfg, "q"), result->q_rec.handle()));
    write_field_csv(ctx.output("q_rec.csv"), result->q_rec);
    write_metrics(ctx.output("metrics.csv"), *result);
    const double threshold = get<double>(cfg, "threshold");
    ctx.check("rel_l2_error", result->rel_l2_error && *result->rel_l2_error <= threshold,
              "error " + format_number(result->rel_l2_error.value_or(NAN)) + " <= " + format_number(threshold));
}

// ---- Runge ------------------------------------------------------

inline std::function<double(double)> free_side_function(const std::vector<double>& coefficients) {
    return [coefficients](double x) {
        double v = 0.0;
        for (std::size_t k = 0; k < coefficients.size(); ++k) v += coefficients[k] * std::sin((k + 1) * std::numbers::pi * x);
        return v;
    };
}

// Free-side sine coefficients c_k = N(0, 1) / k^decay, k = 1..modes.
inline std::vector<double> random_coefficients(int modes, double decay, std::uint64_t seed) {
    require(modes >= 1, "random target needs at least one mode");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> c(modes);
    for (int k = 0; k < modes; ++k) c[k] = normal(rng) / std::pow(k + 1.0, decay);
    return c;
}

inline RealField make_runge_target(const Json& spec, const NestedDomains& dom, std::uint64_t seed) {
    const auto type = get<std::string>(spec, "type");
    if (type == "free_side") return inner_harmonic(dom, free_side_function(get<std::vector<double>>(spec, "coefficients")));
    if (type == "random") {
        return inner_harmonic(dom, free_side_function(random_coefficients(get<int>(spec, "modes"),
                                                                          get<double>(spec, "decay"), seed)));
    }
    if (type == "constant") {
        const double value = get<double>(spec, "value");
        return RealField::from_function(dom.handle(), [&](double, double) { return value; });
    }
    throw Error(ErrorKind::InvalidArgument, "unknown Runge target type '" + type + "'");
}

inline std::vector<RungeFit> runge_sweep(const NestedDomains& dom, const RealField& target,
                                         const std::vector<int>& counts) {
    std::vector<RungeFit> fits;
    for (int count : counts) fits.push_back(runge_fit(dom, target, count));
    return fits;
}

inline bool strictly_decreasing(const std::vector<RungeFit>& fits) {
    for (std::size_t k = 1; k < fits.size(); ++k)
        if (!(fits[k].residual < fits[k - 1].residual)) return false;
    return true;
}

inline void write_runge_csv(const std::filesystem::path& path, const std::vector<int>& counts,
                            const std::vector<RungeFit>& fits) {
    auto out = open_output(path);
    out << "n_sources,residual,condition\n";
    for (std::size_t k = 0; k < fits.size(); ++k)
        out << counts[k] << ',' << format_number(fits[k].residual) << ',' << format_number(fits[k].condition) << '\n';
}

inline void run_runge_demo(const Json& cfg, RunContext& ctx) {
    const NestedDomains dom(build_grid(get<int>(cfg, "n")), get<double>(cfg, "inner_height"));
    const auto counts = get<std::vector<int>>(cfg, "sources");
    require(!counts.empty(), "runge-demo needs at least one source count");
    const RealField target = make_runge_target(at(cfg, "target"), dom, get<std::uint64_t>(cfg, "seed"));
    const auto fits = ctx.timed("fit", [&] { return runge_sweep(dom, target, counts); });
    write_runge_csv(ctx.output("runge.csv"), counts, fits);
    ctx.check("residual_decreasing", strictly_decreasing(fits), "strict decrease over the source counts");
    if (get<bool>(cfg, "control")) {
        const RealField control = RealField::from_function(dom.handle(), [](double, double) { return 1.0; });
        const auto control_fits = ctx.timed("control", [&] { return runge_sweep(dom, control, counts); });
        write_runge_csv(ctx.output("runge_control.csv"), counts, control_fits);
        const double ratio = control_fits.back().residual / fits.back().residual;
        const double need = get<double>(cfg, "control_ratio");
        ctx.check("control_ratio", ratio >= need, "ratio " + format_number(ratio) + " >= " + format_number(need));
    }
}

// ---- driver ------------------------------------------------------

inline Json manifest_json(const std::string& command, const Json& cfg, const RunContext& ctx,
                          const std::string& status) {
    Json m;
    m["command"] = command;
    m["status"] = status;
    m["version"] = kVersion;
    m["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                 std::to_string(EIGEN_MINOR_VERSION);
    m["compiler"] = __VERSION__;
    m["threads"] = thread_count();
    m["config"] = cfg;
    Json timings = Json::object();
    for (const auto& [label, seconds] : ctx.timings()) timings[label] = seconds;
    m["timings_s"] = timings;
    m["outputs"] = ctx.outputs();
    Json checks = Json::array();
    for (const auto& c : ctx.checks()) checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    m["checks"] = checks;
    return m;
}

inline void write_json(const std::filesystem::path& path, const Json& value) {
    auto out = open_output(path);
    out << value.dump(2) << '\n';
}

struct RunOutcome {
    int exit_code = kExitOk;
    Json manifest;
};

/// Runs one subcommand; writes manifest.json (and error.json on failure) to the output directory.
inline RunOutcome run_command(const std::string& command, const Json& cfg, bool check) {
    RunContext ctx(get<std::string>(cfg, "output_dir"), check);
    if (cfg.contains("threads")) set_thread_count(get<int>(cfg, "threads"));
    std::filesystem::create_directories(ctx.out_dir());
    RunOutcome outcome;
    try {
        if (command == "forward") {
            run_forward(cfg, ctx);
        } else if (command == "dn") {
            run_dn(cfg, ctx);
        } else if (command == "verify-identities") {
            run_verify_identities(cfg, ctx);
        } else if (command == "measure-data") {
            run_measure_data(cfg, ctx);
        } else if (command == "reconstruct") {
            run_reconstruct(cfg, ctx);
        } else if (command == "runge-demo") {
            run_runge_demo(cfg, ctx);
        } else {
            throw Error(ErrorKind::InvalidArgument, "unknown subcommand '" + command + "'");
        }
    } catch (const Error& e) {
        outcome.exit_code = exit_code_for(e.kind());
        const Json record = {{"error", std::string(to_string(e.kind()))},
                             {"message", e.what()},
                             {"exit_code", outcome.exit_code}};
        write_json(ctx.out_dir() / "error.json", record);
        outcome.manifest = manifest_json(command, cfg, ctx, "error");
        outcome.manifest["error"] = record;
        write_json(ctx.out_dir() / "manifest.json", outcome.manifest);
        return outcome;
    }
    std::string status = "ok";
    if (check && !ctx.all_checks_passed()) {
        status = "check_failed";
        outcome.exit_code = kExitCheck;
    }
    outcome.manifest = manifest_json(command, cfg, ctx, status);
    write_json(ctx.out_dir() / "manifest.json", outcome.manifest);
    return outcome;
}

}  // namespace pointdn

#endif  // POINTDN_EXPERIMENT_HPP

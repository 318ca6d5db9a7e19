// Acceptance runner: one PASS/FAIL line per criterion.
// Usage: acceptance [criterion...]; with no arguments every criterion runs.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pointdn/experiment.hpp"

using namespace pointdn;

namespace {

struct Verdict {
    bool passed = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int digits = 4) {
    std::ostringstream out;
    out << std::setprecision(digits) << v;
    return out.str();
}

RealField center_bump(const GridHandle& g) {
    return RealField::from_function(g, [](double x, double y) { return gaussian_bump(x, y, 0.5, 0.5, 0.15); });
}

// ---- identities ------------------------------------------------------

Verdict identities() {
    const auto start = Clock::now();
    bool ok = true;
    double worst_mixed = 0.0;
    double ratio_lo = INFINITY;
    double ratio_hi = -INFINITY;
    std::string failures;
    // q = 0 has an exact zero cascade value; its mixed-difference gap is measured
    // against the q = 1 value at the same (m, n).
    std::map<std::pair<int, int>, double> reference;
    for (int m : {2, 3}) {
        for (const std::string qname : {"one", "bump", "zero"}) {
            std::vector<double> volume_gap;
            for (int n : {41, 81}) {
                const GridHandle g = build_grid(n);
                RealField q(g);
                if (qname == "one") q = RealField::from_function(g, [](double, double) { return 1.0; });
                if (qname == "bump") q = center_bump(g);
                // Directions: boundary traces of x, y and 1, the first m of them.
                std::vector<RealBoundary> dirs{trace(g, [](double x, double) { return x; }),
                                               trace(g, [](double, double y) { return y; })};
                if (m == 3) dirs.push_back(trace(g, [](double, double) { return 1.0; }));
                std::vector<double> steps = default_steps(dirs, 1e-2);
                const LinearizationPlan plan{g, m, dirs, steps, mollified_point_mass(g, {1.0, 0.5}, 0.1), q};
                const double mixed = mixed_difference_dn(plan);
                const double cascade = cascade_oracle(plan);
                const double volume = volume_identity(plan);
                const double gap = std::abs(mixed - cascade);
                if (qname == "one") reference[{m, n}] = std::abs(cascade);
                const double scale = qname == "zero" ? reference.at({m, n}) : std::abs(cascade);
                const bool mixed_ok = gap <= 1e-3 * scale;
                worst_mixed = std::max(worst_mixed, gap / scale);
                if (!mixed_ok) {
                    ok = false;
                    failures += " mixed m=" + std::to_string(m) + " q=" + qname + " n=" + std::to_string(n) + " gap " + fmt(gap);
                }
                volume_gap.push_back(std::abs(cascade - volume));
            }
            if (volume_gap[0] <= kExactGap && volume_gap[1] <= kExactGap) continue;
            const double ratio = volume_gap[0] / volume_gap[1];
            ratio_lo = std::min(ratio_lo, ratio);
            ratio_hi = std::max(ratio_hi, ratio);
            if (!(ratio >= 3.5 && ratio <= 4.5)) {
                ok = false;
                failures += " ratio m=" + std::to_string(m) + " q=" + qname + "=" + fmt(ratio);
            }
        }
    }
    const double elapsed = seconds_since(start);
    if (elapsed > 120.0) {
        ok = false;
        failures += " runtime";
    }
    return {ok, "max relative mixed-cascade gap " + fmt(worst_mixed) + ", cascade-volume ratios in [" + fmt(ratio_lo) +
                    ", " + fmt(ratio_hi) + "], " + fmt(elapsed, 3) + " s" + failures};
}

// ---- measure data ------------------------------------------------------

Verdict measure_duality() {
    const Json cfg = default_config("measure-data");
    const std::vector<int> ns{41, 81, 161};
    const auto residuals = duality_sweep(ns, cfg.at("measure"), cfg.at("source"));
    const double r1 = residuals[0] / residuals[1];
    const double r2 = residuals[1] / residuals[2];
    const bool ok = r1 >= 3.5 && r1 <= 4.5 && r2 >= 3.5 && r2 <= 4.5;
    return {ok, "refinement ratios " + fmt(r1) + ", " + fmt(r2) + " (band [3.5, 4.5])"};
}

Verdict measure_lr_dichotomy() {
    const std::vector<double> sigmas{0.2, 0.1, 0.05, 0.025};
    const auto norms = lr_sweep(321, {1.0, 0.5}, sigmas, {1.8, 2.5});
    std::vector<double> bounded, growing;
    for (const auto& row : norms) {
        bounded.push_back(row[0]);
        growing.push_back(row[1]);
    }
    const DichotomyVerdict v = lr_dichotomy(bounded, growing, 0.25, 2.0);
    return {v.bounded_ok && v.growing_ok,
            "L^1.8 variation " + fmt(v.variation) + " (need < 0.25), L^2.5 growth " + fmt(v.growth) +
                (v.monotone ? " monotone" : " not monotone") + " (need > 2)"};
}

// ---- positivity ------------------------------------------------------

RealBoundary random_bump(const GridHandle& g, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double start = 4.0 * u(rng);
    const double length = 0.5 + 3.0 * u(rng);
    const Arc arc{start, std::fmod(start + length, 4.0)};
    const double center = std::fmod(start + 0.5 * length, 4.0);
    const double half_width = 3.0 * g->h() + (0.45 * length - 3.0 * g->h()) * u(rng);
    return bump_trace(g, arc, center, half_width, 0.1 + 1.9 * u(rng));
}

Verdict positivity() {
    std::mt19937_64 rng(20240601);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const GridHandle g = build_grid(41);
    LinearSystem laplace(g);
    int violations = 0;
    double smallest = INFINITY;
    for (int draw = 0; draw < 100; ++draw) {
        const int m = 3 + static_cast<int>(u(rng) * 4);  // 3..6
        std::vector<RealBoundary> aux;
        for (int j = 2; j < m; ++j) aux.push_back(random_bump(g, rng));
        std::optional<BoundaryMeasure> mu;
        if (u(rng) < 0.5) {
            const Point x0 = Grid::perimeter_point(4.0 * u(rng));
            mu.emplace(mollified_point_mass(g, x0, 2.0 * g->h() + 0.25 * u(rng)));
        } else {
            mu.emplace(density_measure(g, random_bump(g, rng).values()));
        }
        std::vector<RealField> fields;
        for (const auto& h : aux) fields.push_back(harmonic_extension(laplace, h));
        fields.push_back(solve_measure_dirichlet(laplace, *mu));
        RealField phi = fields.back();
        for (std::size_t j = 0; j + 1 < fields.size(); ++j) phi = multiply(phi, fields[j]);
        fields.push_back(phi);
        for (const auto& f : fields) {
            for (int node : g->interior_nodes()) {
                smallest = std::min(smallest, f[node]);
                if (!(f[node] > 0.0)) ++violations;
            }
        }
    }
    return {violations == 0, std::to_string(violations) + " violations over 100 draws, min interior value " +
                                 fmt(smallest)};
}

// ---- small-data well-posedness ------------------------------------------------------

Verdict newton_small_data() {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const GridHandle g = build_grid(41);
    int worst = 0;
    int failures = 0;
    for (int draw = 0; draw < 100; ++draw) {
        std::vector<std::array<double, 4>> bumps;
        for (int b = 0; b < 3; ++b) bumps.push_back({u(rng), u(rng), normal(rng), 0.05 + 0.3 * u(rng)});
        const double offset = normal(rng);
        RealField q = RealField::from_function(g, [&](double x, double y) {
            double v = offset;
            for (const auto& b : bumps) v += b[2] * gaussian_bump(x, y, b[0], b[1], b[3]);
            return v;
        });
        q.values() *= 10.0 * u(rng) / q.max_abs();
        std::vector<double> coeff(8);
        for (auto& c : coeff) c = normal(rng);
        RealBoundary f = trace(g, [&](double x, double y) {
            const double s = Grid::perimeter_parameter({x, y});
            double v = coeff[0];
            for (int k = 1; k < 4; ++k)
                v += coeff[2 * k - 1] * std::cos(0.5 * std::numbers::pi * k * s) +
                     coeff[2 * k] * std::sin(0.5 * std::numbers::pi * k * s);
            return v;
        });
        f = f.scaled(kDefaultSmallness * (1.0 - 1e-9) * u(rng) / f.max_abs());
        const int m = u(rng) < 0.5 ? 2 : 3;
        try {
            const auto sol = solve_semilinear(SemilinearProblem{g, q, m, f});
            worst = std::max(worst, sol.report.iterations);
            if (sol.report.iterations > 8) ++failures;
        } catch (const Error&) {
            ++failures;
        }
    }

    // |u_eps - eps v| against eps, least-squares slope in log-log.
    const RealField q = RealField::from_function(g, [](double x, double y) { return 10.0 * gaussian_bump(x, y, 0.4, 0.6, 0.2); });
    const RealBoundary f = trace(g, [](double x, double y) { return 1.0 + x - y * y; });
    const RealField v = harmonic_extension(g, f);
    std::vector<double> lx, ly;
    for (double eps : {1e-3, 2e-3, 4e-3, 8e-3, 1.6e-2}) {
        const auto sol = solve_semilinear(SemilinearProblem{g, q, 2, f.scaled(eps)});
        lx.push_back(std::log(eps));
        ly.push_back(std::log((sol.u.values() - eps * v.values()).cwiseAbs().maxCoeff()));
    }
    double mx = 0, my = 0;
    for (std::size_t k = 0; k < lx.size(); ++k) mx += lx[k] / lx.size(), my += ly[k] / ly.size();
    double sxy = 0, sxx = 0;
    for (std::size_t k = 0; k < lx.size(); ++k) sxy += (lx[k] - mx) * (ly[k] - my), sxx += (lx[k] - mx) * (lx[k] - mx);
    const double slope = sxy / sxx;
    const bool ok = failures == 0 && std::abs(slope - 2.0) <= 0.1;
    return {ok, "max Newton iterations " + std::to_string(worst) + " over 100 draws, " + std::to_string(failures) +
                    " failures, fitted exponent " + fmt(slope)};
}

// ---- distinguishability ------------------------------------------------------

Verdict distinguishability() {
    const GridHandle g = build_grid(81);
    const Arc gamma{0.0, 1.0};  // bottom side
    const BoundaryMeasure mu = mollified_point_mass(g, {0.5, 1.0}, 0.1);  // top side
    const MomentBasis basis{gamma, 10, 0.1, 50};
    const auto traces = basis.traces(g);
    const auto pairs = basis.pairs();
    const RealField q1(g);
    RealField q2 = center_bump(g);
    q2.values() *= 0.5;
    auto measure = [&](const RealField& q, double step_scale) {
        const MeasurementSetup setup{2, {}, mu, step_scale};
        std::vector<double> out(pairs.size());
        for (std::size_t k = 0; k < pairs.size(); ++k)
            out[k] = real_measurement(q, traces[pairs[k].first], traces[pairs[k].second], setup);
        return Eigen::Map<Eigen::VectorXd>(out.data(), out.size()).eval();
    };
    const Eigen::VectorXd m1 = measure(q1, 1e-2);
    const Eigen::VectorXd m1_perturbed = measure(q1, 1.25e-2);
    const Eigen::VectorXd m2 = measure(q2, 1e-2);
    const double scale = std::max(m1.norm(), m2.norm());
    const double separation = (m2 - m1).norm() / scale;
    const double floor = (m1_perturbed - m1).norm() / scale;
    const double ratio = floor > 0 ? separation / floor : INFINITY;
    return {ratio >= 10.0, std::to_string(pairs.size()) + " pairs, separation " + fmt(separation) + ", noise floor " +
                               fmt(floor) + ", ratio " + fmt(ratio) + " (need >= 10)"};
}

// ---- reconstruction ------------------------------------------------------

Verdict reconstruct_fourier_mode() {
    const auto start = Clock::now();
    const Json cfg = effective_config("reconstruct", Json{{"mode", "fourier"}});
    FourierRun run = reconstruct_fourier(cfg, simulate_fourier_config(cfg));
    const double err = run.result.rel_l2_error.value();
    return {err <= 0.02, "n_data 161, n_recon 81, rel L2 error " + fmt(err) + " (need <= 0.02), masked " +
                             fmt(run.result.masked_fraction) + ", " + fmt(seconds_since(start), 3) + " s"};
}

Verdict reconstruct_moment_mode() {
    const auto start = Clock::now();
    Json cfg = effective_config("reconstruct", Json{{"mode", "moment"}});
    const double threshold = get<double>(cfg, "threshold");
    const std::vector<double> data = simulate_moment_config(cfg);
    const MomentRun clean = reconstruct_moment(cfg, data);
    cfg["noise_rel"] = 1e-3;
    const MomentRun noisy = reconstruct_moment(cfg, data);
    const double e0 = clean.result.rel_l2_error.value();
    const double e1 = noisy.result.rel_l2_error.value();
    const double elapsed = seconds_since(start);
    const bool ok = e0 <= threshold && e1 < 2.0 * e0 && elapsed <= 600.0;
    return {ok, "rel L2 error " + fmt(e0) + " (need <= " + fmt(threshold) + "), with 1e-3 noise " + fmt(e1) +
                    " (degradation " + fmt(e1 / e0) + "x, need < 2), " + fmt(elapsed, 3) + " s"};
}

// ---- Runge ------------------------------------------------------

Verdict runge() {
    const NestedDomains dom(build_grid(161), 0.5);
    const std::vector<int> counts{8, 16, 32, 64};
    const RealField control = RealField::from_function(dom.handle(), [](double, double) { return 1.0; });
    const double control_residual = runge_fit(dom, control, 64).residual;
    bool ok = true;
    double worst_ratio = INFINITY;
    int decreasing = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const RealField target = inner_harmonic(dom, free_side_function(random_coefficients(12, 1.0, seed)));
        const auto fits = runge_sweep(dom, target, counts);
        if (strictly_decreasing(fits)) {
            ++decreasing;
        } else {
            ok = false;
        }
        const double ratio = control_residual / fits.back().residual;
        worst_ratio = std::min(worst_ratio, ratio);
        if (!(ratio >= 50.0)) ok = false;
    }
    return {ok, std::to_string(decreasing) + "/5 targets strictly decreasing, min control ratio " + fmt(worst_ratio) +
                    " (need >= 50)"};
}

// ---- determinism ------------------------------------------------------

std::map<std::string, std::string> csv_contents(const std::filesystem::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
        if (entry.path().extension() != ".csv") continue;
        std::ifstream in(entry.path(), std::ios::binary);
        std::stringstream s;
        s << in.rdbuf();
        out[std::filesystem::relative(entry.path(), dir).string()] = s.str();
    }
    return out;
}

Verdict determinism() {
    const auto root = std::filesystem::temp_directory_path() / "pointdn_acceptance_determinism";
    std::filesystem::remove_all(root);
    const std::vector<std::pair<std::string, Json>> runs{
        {"forward", {{"n", 41}}},
        {"dn", {{"n", 41}}},
        {"verify-identities", {{"n", {21, 41}}, {"m", 3}}},
        {"measure-data", {{"ns", {41, 81}}, {"lr_n", 81}, {"sigmas", {0.2, 0.1, 0.05}}}},
        {"reconstruct", {{"mode", "fourier"}, {"n_data", 41}, {"n_recon", 21}, {"noise_rel", 1e-3}, {"seed", 3}}},
        {"reconstruct", {{"mode", "moment"}, {"n_data", 41}, {"n_recon", 21}, {"basis_count", 8}, {"pairs", 20},
                         {"data_source", "cascade"}, {"noise_rel", 1e-3}, {"seed", 5}}},
        {"runge-demo", {{"n", 81}, {"sources", {8, 16}}}},
    };
    int files = 0;
    std::string mismatches;
    for (std::size_t k = 0; k < runs.size(); ++k) {
        std::map<std::string, std::string> first;
        for (int threads : {1, 4}) {
            Json user = runs[k].second;
            const auto dir = root / (std::to_string(k) + "_" + std::to_string(threads));
            user["output_dir"] = dir.string();
            user["threads"] = threads;
            run_command(runs[k].first, effective_config(runs[k].first, user), false);
            auto contents = csv_contents(dir);
            if (threads == 1) {
                first = std::move(contents);
                files += static_cast<int>(first.size());
            } else if (contents != first) {
                mismatches += " " + runs[k].first;
            }
        }
    }
    set_thread_count(0);
    std::filesystem::remove_all(root);
    return {mismatches.empty() && files > 0,
            std::to_string(files) + " CSV files byte-compared across reruns (1 vs 4 threads)" +
                (mismatches.empty() ? "" : "; mismatches:" + mismatches)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"identities", identities},
        {"measure_duality", measure_duality},
        {"measure_lr_dichotomy", measure_lr_dichotomy},
        {"positivity", positivity},
        {"newton_small_data", newton_small_data},
        {"distinguishability", distinguishability},
        {"reconstruct_fourier", reconstruct_fourier_mode},
        {"reconstruct_moment", reconstruct_moment_mode},
        {"runge", runge},
        {"determinism", determinism},
    };
    std::vector<std::string> selected(argv + 1, argv + argc);
    if (selected.empty())
        for (const auto& [name, fn] : criteria) selected.push_back(name);

    int failed = 0;
    for (const auto& want : selected) {
        auto it = std::find_if(criteria.begin(), criteria.end(), [&](const auto& c) { return c.first == want; });
        if (it == criteria.end()) {
            std::cout << "FAIL " << want << ": unknown criterion\n";
            ++failed;
            continue;
        }
        Verdict v;
        try {
            v = it->second();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        std::cout << (v.passed ? "PASS " : "FAIL ") << want << ": " << v.detail << std::endl;
        failed += v.passed ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}

#ifndef POINTDN_SEMILINEAR_HPP
#define POINTDN_SEMILINEAR_HPP

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "pointdn/grid.hpp"
#include "pointdn/linear_solve.hpp"
#include "pointdn/measure.hpp"

namespace pointdn {

inline constexpr double kDefaultSmallness = 5e-2;

struct NewtonParams {
    int max_iter = 50;
    double residual_tol = 1e-12;  // relative to max(1, |f|_inf)
    int max_halvings = 20;
};

/// Delta u + q u^m = 0 in the square, u = f on the boundary, |f|_inf < delta.
struct SemilinearProblem {
    GridHandle grid;
    RealField q;
    int m = 2;
    RealBoundary f;
    double delta = kDefaultSmallness;

    void validate() const {
        require(grid != nullptr, "semilinear problem has no grid");
        require(q.grid().n() == grid->n() && f.grid().n() == grid->n(), "semilinear problem grid mismatch");
        require(m >= 2, "nonlinearity exponent m must be at least 2");
        require(delta > 0, "smallness budget must be positive");
        require(q.all_finite() && f.values().allFinite(), "non-finite values in semilinear problem");
        require(f.max_abs() < delta, "Dirichlet data |f|_inf = " + std::to_string(f.max_abs()) +
                                         " is not below the smallness budget " + std::to_string(delta));
    }
};

struct NewtonReport {
    int iterations = 0;
    std::vector<double> residual_norms;    // |Delta u + q u^m|_inf before each step, and at exit
    std::vector<double> correction_norms;  // |step|_inf actually applied
    double tolerance = 0.0;                // residual target after the rounding clamp
};

struct SemilinearSolution {
    RealField u;
    NewtonReport report;
};

inline double int_power(double x, int m) {
    double out = 1.0;
    for (int k = 0; k < m; ++k) out *= x;
    return out;
}

// Delta_h u + q u^m on interior nodes, zero on the boundary.
inline RealField semilinear_residual(const RealField& u, const RealField& q, int m) {
    RealField r = apply_laplacian(u);
    for (int node : u.grid().interior_nodes()) r[node] += q[node] * int_power(u[node], m);
    return r;
}

/// Damped Newton for the small solution.
///
/// The first iterate is the boundary lift; with u = 0 inside, the first
/// Newton system is the Laplace problem, so iteration starts from the
/// harmonic extension of f. Every iterate must satisfy |u|_inf <= 2 |f|_inf.
inline SemilinearSolution solve_semilinear(const SemilinearProblem& problem, const NewtonParams& params = {}) {
    problem.validate();
    require(params.max_iter > 0 && params.residual_tol > 0 && params.max_halvings >= 0,
            "Newton parameters must be positive");
    const Grid& g = *problem.grid;
    const int m = problem.m;
    const double f_max = problem.f.max_abs();
    const double bound = 2.0 * f_max;
    // The stencil residual cannot be evaluated below ~16 eps |u| / h^2 in double
    // precision, so the requested tolerance is clamped at that floor (only
    // active on fine grids, n > ~160 for |f| ~ 1e-2).
    const double floor = 16.0 * std::numeric_limits<double>::epsilon() * bound / (g.h() * g.h());
    const double tol = std::max(params.residual_tol * std::max(1.0, f_max), floor);

    SemilinearSolution out{boundary_lift(problem.f), {}};
    RealField& u = out.u;
    NewtonReport& report = out.report;
    report.tolerance = tol;

    LinearSystem jacobian(problem.grid);
    RealField coefficient(problem.grid);
    RealField residual = semilinear_residual(u, problem.q, m);
    double r_norm = residual.max_abs();
    const RealBoundary zero_bc(problem.grid);

    auto escape_check = [&](const RealField& candidate) {
        const double size = candidate.max_abs();
        if (size > bound) {
            throw Error(ErrorKind::BranchEscape,
                        "Newton iterate |u|_inf = " + std::to_string(size) + " exceeds 2|f|_inf = " +
                            std::to_string(bound) + "; data too large for the small-solution branch");
        }
    };

    for (int iter = 0; iter < params.max_iter; ++iter) {
        report.residual_norms.push_back(r_norm);
        if (r_norm <= tol && iter > 0) return out;
        if (r_norm == 0.0) return out;

        // (Delta + m q u^{m-1}) step = -residual
        for (int node : g.interior_nodes()) coefficient[node] = m * problem.q[node] * int_power(u[node], m - 1);
        jacobian.factorize(coefficient);
        RealField rhs(problem.grid);
        rhs.values() = -residual.values();
        const RealField step = jacobian.solve(rhs, zero_bc);

        double t = 1.0;
        bool accepted = false;
        RealField trial(problem.grid);
        RealField trial_residual(problem.grid);
        double trial_norm = 0.0;
        for (int halving = 0; halving <= params.max_halvings; ++halving) {
            trial.values() = u.values() + t * step.values();
            trial_residual = semilinear_residual(trial, problem.q, m);
            trial_norm = trial_residual.max_abs();
            if (trial_norm < r_norm || trial_norm <= tol) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            throw Error(ErrorKind::NonConvergence,
                        "Newton step halving exhausted at iteration " + std::to_string(iter) +
                            " with residual " + std::to_string(r_norm));
        }
        escape_check(trial);
        report.correction_norms.push_back(t * step.max_abs());
        report.iterations = iter + 1;
        u = std::move(trial);
        residual = std::move(trial_residual);
        r_norm = trial_norm;
    }
    report.residual_norms.push_back(r_norm);
    if (r_norm <= tol) return out;
    throw Error(ErrorKind::NonConvergence, "Newton did not converge in " + std::to_string(params.max_iter) +
                                               " iterations; residual " + std::to_string(r_norm));
}

struct DNRecord {
    RealBoundary flux;
    std::optional<double> functional;  // <flux, mu> when a measure is attached
};

inline DNRecord dn_map(const SemilinearProblem& problem, const NewtonParams& params = {},
                       const BoundaryMeasure* mu = nullptr) {
    const SemilinearSolution solution = solve_semilinear(problem, params);
    DNRecord record{normal_derivative(solution.u), std::nullopt};
    if (mu) record.functional = boundary_pair(record.flux, *mu);
    return record;
}

}  // namespace pointdn

#endif  // POINTDN_SEMILINEAR_HPP

#ifndef POINTDN_LINEARIZATION_HPP
#define POINTDN_LINEARIZATION_HPP

#include <cmath>
#include <string>
#include <vector>

#include "pointdn/grid.hpp"
#include "pointdn/linear_solve.hpp"
#include "pointdn/measure.hpp"
#include "pointdn/parallel.hpp"
#include "pointdn/semilinear.hpp"

namespace pointdn {

inline constexpr int kMaxOrder = 6;

inline double factorial(int m) {
    double out = 1.0;
    for (int k = 2; k <= m; ++k) out *= k;
    return out;
}

/// Directions h_1..h_m and steps eps_1..eps_m for the m-th derivative of
/// eps -> <Lambda_q(eps_1 h_1 + ... + eps_m h_m), mu> at eps = 0.
struct LinearizationPlan {
    GridHandle grid;
    int m = 2;
    std::vector<RealBoundary> directions;
    std::vector<double> steps;
    BoundaryMeasure mu;
    RealField q;
    int richardson_levels = 1;
    double delta = kDefaultSmallness;
    NewtonParams newton{};

    void validate() const {
        require(grid != nullptr, "linearization plan has no grid");
        require(m >= 2 && m <= kMaxOrder, "linearization order must be in [2, 6]");
        require(static_cast<int>(directions.size()) == m, "need exactly m directions");
        require(static_cast<int>(steps.size()) == m, "need exactly m step sizes");
        require(richardson_levels >= 0, "Richardson levels must be nonnegative");
        for (double e : steps) require(e > 0, "step sizes must be positive");
        for (const auto& h : directions) require(h.grid().n() == grid->n(), "direction grid mismatch");
        require(q.grid().n() == grid->n() && mu.grid().n() == grid->n(), "plan grid mismatch");
    }
};

// eps_j = 1e-2 / |h_j|_inf
inline std::vector<double> default_steps(const std::vector<RealBoundary>& directions, double scale = 1e-2) {
    std::vector<double> steps;
    for (const auto& h : directions) {
        const double size = h.max_abs();
        steps.push_back(size > 0 ? scale / size : scale);
    }
    return steps;
}

// Sign vector for corner index: bit (m-1-j) set means s_j = +1, so index 0 is all minus.
inline int corner_sign(int corner, int j, int m) { return (corner >> (m - 1 - j)) & 1 ? 1 : -1; }

namespace detail {

inline double central_mixed_difference(const LinearizationPlan& plan, double shrink) {
    const int m = plan.m;
    const int corners = 1 << m;
    std::vector<double> values(corners, 0.0);
    parallel_for(corners, [&](int corner) {
        Vector<double> f = Vector<double>::Zero(plan.grid->boundary_count());
        for (int j = 0; j < m; ++j)
            f += (corner_sign(corner, j, m) * plan.steps[j] * shrink) * plan.directions[j].values();
        std::string signs;
        for (int j = 0; j < m; ++j) signs += corner_sign(corner, j, m) > 0 ? '+' : '-';
        const double size = f.cwiseAbs().maxCoeff();
        if (size >= plan.delta) {
            throw Error(ErrorKind::BranchEscape, "corner (" + signs + ") has |f|_inf = " + std::to_string(size) +
                                                     ", outside the smallness budget " +
                                                     std::to_string(plan.delta));
        }
        try {
            SemilinearProblem problem{plan.grid, plan.q, m, RealBoundary(plan.grid, f), plan.delta};
            const SemilinearSolution solution = solve_semilinear(problem, plan.newton);
            values[corner] = boundary_pair(normal_derivative(solution.u), plan.mu);
        } catch (const Error& e) {
            throw Error(e.kind(), "corner (" + signs + "): " + e.what());
        }
    });
    // Fixed lexicographic reduction order.
    double sum = 0.0;
    for (int corner = 0; corner < corners; ++corner) {
        int sign = 1;
        for (int j = 0; j < m; ++j) sign *= corner_sign(corner, j, m);
        sum += sign * values[corner];
    }
    double denom = 1.0;
    for (int j = 0; j < m; ++j) denom *= 2.0 * plan.steps[j] * shrink;
    return sum / denom;
}

}  // namespace detail

/// m-th mixed central difference of the DN functional, with optional
/// Richardson extrapolation over step halvings (error O(eps^2) per level).
inline double mixed_difference_dn(const LinearizationPlan& plan) {
    plan.validate();
    const int levels = plan.richardson_levels;
    std::vector<double> table(levels + 1);
    for (int l = 0; l <= levels; ++l) table[l] = detail::central_mixed_difference(plan, std::ldexp(1.0, -l));
    for (int k = 1; k <= levels; ++k) {
        const double factor = std::pow(4.0, k);
        for (int l = levels; l >= k; --l) table[l] = (factor * table[l] - table[l - 1]) / (factor - 1.0);
    }
    return table[levels];
}

template <class T>
struct CascadeFields {
    std::vector<Field<T>> v;  // harmonic extensions of the directions
    Field<T> w;               // Delta w = -(m!) q v_1...v_m, w = 0 on the boundary
};

template <class T>
CascadeFields<T> cascade_fields(const LinearSystem& laplace, const RealField& q,
                                const std::vector<BoundaryData<T>>& directions) {
    const GridHandle& grid = laplace.handle();
    const int m = static_cast<int>(directions.size());
    require(m >= 1, "cascade needs at least one direction");
    std::vector<Field<T>> v;
    v.reserve(m);
    for (const auto& h : directions) v.push_back(harmonic_extension(laplace, h));
    Field<T> source(grid);
    const double scale = -factorial(m);
    for (int k = 0; k < grid->node_count(); ++k) {
        T product = T(scale * q[k]);
        for (const auto& vj : v) product *= vj[k];
        source[k] = product;
    }
    Field<T> w = laplace.solve(source, BoundaryData<T>(grid));
    return {std::move(v), std::move(w)};
}

/// Exact discrete m-th derivative via the linearized cascade.
template <class T>
T cascade_value(const LinearSystem& laplace, const RealField& q, const std::vector<BoundaryData<T>>& directions,
                const BoundaryMeasure& mu) {
    const CascadeFields<T> fields = cascade_fields(laplace, q, directions);
    return boundary_pair(normal_derivative(fields.w), mu);
}

inline double cascade_oracle(const LinearizationPlan& plan) {
    plan.validate();
    LinearSystem laplace(plan.grid);
    return cascade_value(laplace, plan.q, plan.directions, plan.mu);
}

/// -(m!) int q v_1...v_m Psi dx, Psi the harmonic extension of mu.
template <class T>
T volume_value(const LinearSystem& laplace, const RealField& q, const std::vector<BoundaryData<T>>& directions,
               const RealField& psi) {
    const GridHandle& grid = laplace.handle();
    std::vector<Field<T>> v;
    for (const auto& h : directions) v.push_back(harmonic_extension(laplace, h));
    Field<T> integrand(grid);
    const double scale = -factorial(static_cast<int>(directions.size()));
    for (int k = 0; k < grid->node_count(); ++k) {
        T product = T(scale * q[k] * psi[k]);
        for (const auto& vj : v) product *= vj[k];
        integrand[k] = product;
    }
    return volume_integral(integrand);
}

inline double volume_identity(const LinearizationPlan& plan) {
    plan.validate();
    LinearSystem laplace(plan.grid);
    const RealField psi = solve_measure_dirichlet(laplace, plan.mu);
    return volume_value(laplace, plan.q, plan.directions, psi);
}

}  // namespace pointdn

#endif  // POINTDN_LINEARIZATION_HPP

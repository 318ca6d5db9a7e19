#ifndef POINTDN_MEASURE_HPP
#define POINTDN_MEASURE_HPP

#include <cmath>
#include <variant>
#include <vector>

#include "pointdn/grid.hpp"
#include "pointdn/linear_solve.hpp"

namespace pointdn {

struct PointMassDescriptor {
    Point x0;
    double s0 = 0.0;  // perimeter parameter of x0
    double sigma = 0.0;
};

struct DensityDescriptor {};

/// Boundary measure represented by its density against arclength.
class BoundaryMeasure {
public:
    using Descriptor = std::variant<PointMassDescriptor, DensityDescriptor>;

    BoundaryMeasure(GridHandle grid, Vector<double> density, Descriptor descriptor = DensityDescriptor{})
        : grid_(std::move(grid)), density_(std::move(density)), descriptor_(descriptor) {
        require(density_.size() == grid_->boundary_count(), "measure density size does not match grid");
        require(density_.allFinite(), "measure density contains non-finite values");
        total_variation_ = 0.0;
        for (int b = 0; b < density_.size(); ++b)
            total_variation_ += std::abs(density_[b]) * grid_->boundary_weights()[b];
        require(total_variation_ > 0.0, "boundary measure must not vanish identically");
    }

    const Grid& grid() const noexcept { return *grid_; }
    const GridHandle& handle() const noexcept { return grid_; }
    const Vector<double>& density() const noexcept { return density_; }
    std::span<const double> density_span() const noexcept { return {density_.data(), size_t(density_.size())}; }
    const Descriptor& descriptor() const noexcept { return descriptor_; }
    double total_variation() const noexcept { return total_variation_; }

    double mass() const {
        double sum = 0.0;
        for (int b = 0; b < density_.size(); ++b) sum += density_[b] * grid_->boundary_weights()[b];
        return sum;
    }

    RealBoundary as_boundary_data() const { return RealBoundary(grid_, density_); }

private:
    GridHandle grid_;
    Vector<double> density_;
    Descriptor descriptor_;
    double total_variation_ = 0.0;
};

template <class T>
T boundary_pair(const BoundaryData<T>& phi, const BoundaryMeasure& mu) {
    return boundary_pair(phi, mu.density_span());
}

/// Gaussian bump in arclength around x0, periodized over the perimeter and
/// normalized to unit discrete mass.
inline BoundaryMeasure mollified_point_mass(const GridHandle& grid, Point x0, double sigma) {
    require(sigma >= 2.0 * grid->h() * (1.0 - 1e-12),
            "mollification width " + std::to_string(sigma) + " is below 2h = " + std::to_string(2.0 * grid->h()));
    const double s0 = Grid::perimeter_parameter(x0);
    Vector<double> density(grid->boundary_count());
    for (int b = 0; b < grid->boundary_count(); ++b) {
        const double d = perimeter_offset(grid->arclength()[b], s0);
        double value = 0.0;
        for (int image = -1; image <= 1; ++image) {
            const double t = (d + 4.0 * image) / sigma;
            value += std::exp(-0.5 * t * t);
        }
        density[b] = value;
    }
    double mass = 0.0;
    for (int b = 0; b < density.size(); ++b) mass += density[b] * grid->boundary_weights()[b];
    density /= mass;
    return BoundaryMeasure(grid, std::move(density), PointMassDescriptor{x0, s0, sigma});
}

inline BoundaryMeasure density_measure(const GridHandle& grid, Vector<double> density) {
    return BoundaryMeasure(grid, std::move(density), DensityDescriptor{});
}

inline BoundaryMeasure uniform_measure(const GridHandle& grid, double value = 0.25) {
    return density_measure(grid, Vector<double>::Constant(grid->boundary_count(), value));
}

/// Harmonic function whose boundary values are the measure density.
inline RealField solve_measure_dirichlet(const LinearSystem& laplace, const BoundaryMeasure& mu) {
    return harmonic_extension(laplace, mu.as_boundary_data());
}

inline RealField solve_measure_dirichlet(const GridHandle& grid, const BoundaryMeasure& mu) {
    LinearSystem laplace(grid);
    return solve_measure_dirichlet(laplace, mu);
}

/// Discrete L^r norm with trapezoidal weights.
inline double lr_norm(const RealField& u, double r) {
    require(r >= 1.0, "L^r norm needs r >= 1");
    const auto w = u.grid().volume_weights();
    double sum = 0.0;
    for (int k = 0; k < u.grid().node_count(); ++k) sum += std::pow(std::abs(u[k]), r) * w[k];
    return std::pow(sum, 1.0 / r);
}

/// Five-point Laplacian with boundary values extrapolated from the interior.
///
/// Edge nodes take 2 L_1 - L_2 along the inward normal, corners the mean of
/// their two edge neighbours. With the plain zero-on-boundary convention the
/// trapezoidal volume integral loses an O(h) boundary strip.
inline RealField laplacian_with_boundary(const RealField& w) {
    RealField lap = apply_laplacian(w);
    const Grid& g = w.grid();
    const int n = g.n();
    for (int t = 1; t < n - 1; ++t) {
        lap[g.node(0, t)] = 2.0 * lap[g.node(1, t)] - lap[g.node(2, t)];
        lap[g.node(n - 1, t)] = 2.0 * lap[g.node(n - 2, t)] - lap[g.node(n - 3, t)];
        lap[g.node(t, 0)] = 2.0 * lap[g.node(t, 1)] - lap[g.node(t, 2)];
        lap[g.node(t, n - 1)] = 2.0 * lap[g.node(t, n - 2)] - lap[g.node(t, n - 3)];
    }
    auto corner = [&](int i, int j, int di, int dj) {
        lap[g.node(i, j)] = 0.5 * (lap[g.node(i + di, j)] + lap[g.node(i, j + dj)]);
    };
    corner(0, 0, 1, 1);
    corner(n - 1, 0, -1, 1);
    corner(0, n - 1, 1, -1);
    corner(n - 1, n - 1, -1, -1);
    return lap;
}

/// |<d_nu w, mu> - int (Delta w) Psi dx| for w vanishing on the boundary.
inline double duality_residual(const RealField& psi, const BoundaryMeasure& mu, const RealField& w) {
    const Grid& g = w.grid();
    require(psi.grid().n() == g.n() && mu.grid().n() == g.n(), "grid mismatch in duality residual");
    const double scale = std::max(1.0, w.max_abs());
    for (int node : g.boundary_nodes())
        require(std::abs(w[node]) <= 1e-12 * scale, "duality test field must vanish on the boundary");
    const double boundary_side = boundary_pair(normal_derivative(w), mu);
    const double volume_side = volume_integral(multiply(laplacian_with_boundary(w), psi));
    return std::abs(boundary_side - volume_side);
}

}  // namespace pointdn

#endif  // POINTDN_MEASURE_HPP

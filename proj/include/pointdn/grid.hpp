#ifndef POINTDN_GRID_HPP
#define POINTDN_GRID_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pointdn/error.hpp"

namespace pointdn {

template <class T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using Complex = std::complex<double>;

struct Point {
    double x = 0.0;
    double y = 0.0;
};

/// Uniform node grid on the unit square with n nodes per side.
///
/// Nodes are numbered row-major, node = j * n + i with x = i h and y = j h.
/// Boundary nodes are ordered counterclockwise starting at the corner (0, 0);
/// the perimeter parameter s of a boundary node is its arclength from that
/// corner, so s runs over [0, 4).
class Grid {
public:
    explicit Grid(int n) : n_(n) {
        require(n >= 5, "grid needs at least 5 nodes per side, got " + std::to_string(n));
        h_ = 1.0 / (n - 1);
        const int count = n * n;
        interior_index_.assign(count, -1);
        boundary_index_.assign(count, -1);
        for (int j = 1; j < n - 1; ++j) {
            for (int i = 1; i < n - 1; ++i) {
                interior_index_[node(i, j)] = static_cast<int>(interior_.size());
                interior_.push_back(node(i, j));
            }
        }
        auto push_boundary = [&](int i, int j, double s) {
            boundary_index_[node(i, j)] = static_cast<int>(boundary_.size());
            boundary_.push_back(node(i, j));
            arclength_.push_back(s);
        };
        for (int i = 0; i < n - 1; ++i) push_boundary(i, 0, i * h_);
        for (int j = 0; j < n - 1; ++j) push_boundary(n - 1, j, 1.0 + j * h_);
        for (int i = n - 1; i > 0; --i) push_boundary(i, n - 1, 2.0 + (n - 1 - i) * h_);
        for (int j = n - 1; j > 0; --j) push_boundary(0, j, 3.0 + (n - 1 - j) * h_);

        // Every boundary node carries one half-edge on each side, corners included.
        boundary_weight_.assign(boundary_.size(), h_);

        volume_weight_.assign(count, h_ * h_);
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) {
                double w = h_ * h_;
                if (i == 0 || i == n - 1) w *= 0.5;
                if (j == 0 || j == n - 1) w *= 0.5;
                volume_weight_[node(i, j)] = w;
            }
        }
    }

    int n() const noexcept { return n_; }
    double h() const noexcept { return h_; }
    int node_count() const noexcept { return n_ * n_; }
    int interior_count() const noexcept { return static_cast<int>(interior_.size()); }
    int boundary_count() const noexcept { return static_cast<int>(boundary_.size()); }

    int node(int i, int j) const noexcept { return j * n_ + i; }
    int col(int node) const noexcept { return node % n_; }
    int row(int node) const noexcept { return node / n_; }
    double x(int node) const noexcept { return col(node) * h_; }
    double y(int node) const noexcept { return row(node) * h_; }
    Point point(int node) const noexcept { return {x(node), y(node)}; }

    bool is_boundary(int node) const noexcept { return boundary_index_[node] >= 0; }
    int interior_index(int node) const noexcept { return interior_index_[node]; }
    int boundary_index(int node) const noexcept { return boundary_index_[node]; }

    std::span<const int> interior_nodes() const noexcept { return interior_; }
    std::span<const int> boundary_nodes() const noexcept { return boundary_; }
    std::span<const double> arclength() const noexcept { return arclength_; }
    std::span<const double> boundary_weights() const noexcept { return boundary_weight_; }
    std::span<const double> volume_weights() const noexcept { return volume_weight_; }

    // Perimeter parameter of an arbitrary point on the boundary of the unit square.
    static double perimeter_parameter(Point p) {
        constexpr double tol = 1e-12;
        require(p.x > -tol && p.x < 1 + tol && p.y > -tol && p.y < 1 + tol,
                "point lies outside the unit square");
        if (std::abs(p.y) <= tol && p.x < 1 - tol) return p.x;
        if (std::abs(p.x - 1) <= tol && p.y < 1 - tol) return 1.0 + p.y;
        if (std::abs(p.y - 1) <= tol && p.x > tol) return 2.0 + (1.0 - p.x);
        if (std::abs(p.x) <= tol && p.y > tol) return 3.0 + (1.0 - p.y);
        if (std::abs(p.x) <= tol && std::abs(p.y) <= tol) return 0.0;
        throw Error(ErrorKind::InvalidArgument, "point is not on the boundary of the unit square");
    }

    static Point perimeter_point(double s) {
        s = std::fmod(std::fmod(s, 4.0) + 4.0, 4.0);
        if (s < 1.0) return {s, 0.0};
        if (s < 2.0) return {1.0, s - 1.0};
        if (s < 3.0) return {3.0 - s, 1.0};
        return {0.0, 4.0 - s};
    }

    // Boundary node closest to perimeter parameter s.
    int nearest_boundary(double s) const {
        s = std::fmod(std::fmod(s, 4.0) + 4.0, 4.0);
        int b = static_cast<int>(std::lround(s / h_));
        return b % boundary_count();
    }

private:
    int n_;
    double h_;
    std::vector<int> interior_index_;
    std::vector<int> boundary_index_;
    std::vector<int> interior_;
    std::vector<int> boundary_;
    std::vector<double> arclength_;
    std::vector<double> boundary_weight_;
    std::vector<double> volume_weight_;
};

using GridHandle = std::shared_ptr<const Grid>;

inline GridHandle build_grid(int n) { return std::make_shared<const Grid>(n); }

// Signed distance along the perimeter from b to a, wrapped into [-2, 2).
inline double perimeter_offset(double a, double b) {
    double d = std::fmod(a - b, 4.0);
    if (d < -2.0) d += 4.0;
    if (d >= 2.0) d -= 4.0;
    return d;
}

/// Contiguous boundary arc [start, end] in perimeter arclength; end < start wraps past s = 0.
struct Arc {
    double start = 0.0;
    double end = 4.0;

    static Arc full() { return {0.0, 4.0}; }

    bool is_full() const { return end - start >= 4.0 - 1e-12; }

    double length() const {
        if (is_full()) return 4.0;
        double len = end - start;
        return len >= 0 ? len : len + 4.0;
    }

    bool contains(double s) const {
        constexpr double tol = 1e-9;
        if (is_full()) return true;
        double offset = std::fmod(s - start + 8.0, 4.0);
        if (offset > 4.0 - tol) offset -= 4.0;
        return offset >= -tol && offset <= length() + tol;
    }
};

template <class T>
class Field {
public:
    explicit Field(GridHandle grid)
        : grid_(std::move(grid)), values_(Vector<T>::Zero(grid_->node_count())) {}

    Field(GridHandle grid, Vector<T> values) : grid_(std::move(grid)), values_(std::move(values)) {
        require(values_.size() == grid_->node_count(), "field size does not match grid");
    }

    template <class Fn>
    static Field from_function(GridHandle grid, Fn&& fn) {
        Field out(grid);
        for (int k = 0; k < grid->node_count(); ++k) out.values_[k] = fn(grid->x(k), grid->y(k));
        return out;
    }

    const Grid& grid() const noexcept { return *grid_; }
    const GridHandle& handle() const noexcept { return grid_; }
    const Vector<T>& values() const noexcept { return values_; }
    Vector<T>& values() noexcept { return values_; }
    T operator[](int node) const { return values_[node]; }
    T& operator[](int node) { return values_[node]; }

    bool all_finite() const { return values_.allFinite(); }
    double max_abs() const { return values_.size() ? values_.cwiseAbs().maxCoeff() : 0.0; }

private:
    GridHandle grid_;
    Vector<T> values_;
};

using RealField = Field<double>;
using ComplexField = Field<Complex>;

/// Values on boundary nodes, zero outside a support mask that encodes the arc Gamma.
template <class T>
class BoundaryData {
public:
    explicit BoundaryData(GridHandle grid)
        : grid_(std::move(grid)),
          values_(Vector<T>::Zero(grid_->boundary_count())),
          support_(grid_->boundary_count(), 1) {}

    BoundaryData(GridHandle grid, Vector<T> values, std::vector<std::uint8_t> support)
        : grid_(std::move(grid)), values_(std::move(values)), support_(std::move(support)) {
        require(values_.size() == grid_->boundary_count() &&
                    static_cast<int>(support_.size()) == grid_->boundary_count(),
                "boundary data size does not match grid");
        for (int b = 0; b < values_.size(); ++b)
            require(support_[b] || values_[b] == T{}, "boundary data is nonzero outside its support");
    }

    BoundaryData(GridHandle grid, Vector<T> values)
        : BoundaryData(grid, std::move(values), std::vector<std::uint8_t>(grid->boundary_count(), 1)) {}

    const Grid& grid() const noexcept { return *grid_; }
    const GridHandle& handle() const noexcept { return grid_; }
    const Vector<T>& values() const noexcept { return values_; }
    const std::vector<std::uint8_t>& support() const noexcept { return support_; }
    T operator[](int b) const { return values_[b]; }
    double max_abs() const { return values_.size() ? values_.cwiseAbs().maxCoeff() : 0.0; }

    BoundaryData scaled(T factor) const {
        BoundaryData out = *this;
        out.values_ *= factor;
        return out;
    }

private:
    GridHandle grid_;
    Vector<T> values_;
    std::vector<std::uint8_t> support_;
};

using RealBoundary = BoundaryData<double>;
using ComplexBoundary = BoundaryData<Complex>;

inline std::vector<std::uint8_t> arc_mask(const Grid& grid, const Arc& arc) {
    std::vector<std::uint8_t> mask(grid.boundary_count());
    for (int b = 0; b < grid.boundary_count(); ++b) mask[b] = arc.contains(grid.arclength()[b]) ? 1 : 0;
    return mask;
}

// Boundary trace of fn(x, y), zeroed outside arc.
template <class Fn>
auto trace(const GridHandle& grid, Fn&& fn, const Arc& arc = Arc::full()) {
    using T = decltype(fn(0.0, 0.0));
    auto mask = arc_mask(*grid, arc);
    Vector<T> values(grid->boundary_count());
    for (int b = 0; b < grid->boundary_count(); ++b) {
        const int node = grid->boundary_nodes()[b];
        values[b] = mask[b] ? fn(grid->x(node), grid->y(node)) : T{};
    }
    return BoundaryData<T>(grid, std::move(values), std::move(mask));
}

template <class T>
BoundaryData<T> boundary_trace(const Field<T>& field) {
    const Grid& g = field.grid();
    Vector<T> values(g.boundary_count());
    for (int b = 0; b < g.boundary_count(); ++b) values[b] = field[g.boundary_nodes()[b]];
    return BoundaryData<T>(field.handle(), std::move(values));
}

// Smooth compactly supported bump exp(1 - 1/(1 - r^2)), r = distance / half_width.
inline double smooth_bump(double distance, double half_width) {
    const double r = distance / half_width;
    if (std::abs(r) >= 1.0) return 0.0;
    return std::exp(1.0 - 1.0 / (1.0 - r * r));
}

/// Bump of the given height in perimeter arclength, centered at s = center.
/// Its support must lie inside arc.
inline RealBoundary bump_trace(const GridHandle& grid, const Arc& arc, double center, double half_width,
                               double height = 1.0) {
    require(half_width > 0, "bump half-width must be positive");
    require(arc.contains(center - half_width) && arc.contains(center + half_width) &&
                (arc.is_full() || 2 * half_width <= arc.length() + 1e-12),
            "bump support is not contained in the arc");
    auto mask = arc_mask(*grid, arc);
    Vector<double> values(grid->boundary_count());
    for (int b = 0; b < grid->boundary_count(); ++b) {
        const double d = perimeter_offset(grid->arclength()[b], center);
        values[b] = mask[b] ? height * smooth_bump(d, half_width) : 0.0;
    }
    return RealBoundary(grid, std::move(values), std::move(mask));
}

// Interior/boundary split: the returned field carries bc on the boundary and zero inside.
template <class T>
Field<T> boundary_lift(const BoundaryData<T>& bc) {
    Field<T> out(bc.handle());
    const Grid& g = bc.grid();
    for (int b = 0; b < g.boundary_count(); ++b) out[g.boundary_nodes()[b]] = bc[b];
    return out;
}

/// Five-point Laplacian; boundary nodes are set to zero.
template <class T>
Field<T> apply_laplacian(const Field<T>& u) {
    const Grid& g = u.grid();
    const int n = g.n();
    const double inv_h2 = 1.0 / (g.h() * g.h());
    Field<T> out(u.handle());
    for (int node : g.interior_nodes()) {
        out[node] = (u[node + 1] + u[node - 1] + u[node + n] + u[node - n] - 4.0 * u[node]) * inv_h2;
    }
    return out;
}

/// Outward normal derivative by the one-sided second-order formula (3 u_b - 4 u_1 + u_2) / (2h).
/// Corners average the formulas of their two sides.
template <class T>
BoundaryData<T> normal_derivative(const Field<T>& u) {
    const Grid& g = u.grid();
    const int n = g.n();
    const double inv_2h = 0.5 / g.h();
    Vector<T> flux(g.boundary_count());
    for (int b = 0; b < g.boundary_count(); ++b) {
        const int node = g.boundary_nodes()[b];
        const int i = g.col(node);
        const int j = g.row(node);
        T sum{};
        int sides = 0;
        auto side = [&](int step) {
            sum += (3.0 * u[node] - 4.0 * u[node + step] + u[node + 2 * step]) * inv_2h;
            ++sides;
        };
        if (i == 0) side(1);
        if (i == n - 1) side(-1);
        if (j == 0) side(n);
        if (j == n - 1) side(-n);
        flux[b] = sum / static_cast<double>(sides);
    }
    return BoundaryData<T>(u.handle(), std::move(flux));
}

/// Sum over boundary nodes of phi * density * arclength weight.
template <class T>
T boundary_pair(const BoundaryData<T>& phi, std::span<const double> density) {
    const Grid& g = phi.grid();
    require(static_cast<int>(density.size()) == g.boundary_count(), "density size does not match grid");
    T sum{};
    for (int b = 0; b < g.boundary_count(); ++b) sum += phi[b] * (density[b] * g.boundary_weights()[b]);
    return sum;
}

/// Trapezoidal quadrature over the unit square.
template <class T>
T volume_integral(const Field<T>& u) {
    const auto w = u.grid().volume_weights();
    T sum{};
    for (int k = 0; k < u.grid().node_count(); ++k) sum += u[k] * w[k];
    return sum;
}

template <class T>
Field<T> multiply(const Field<T>& a, const Field<T>& b) {
    return Field<T>(a.handle(), (a.values().array() * b.values().array()).matrix());
}

inline ComplexField to_complex(const RealField& f) {
    return ComplexField(f.handle(), f.values().cast<Complex>());
}

}  // namespace pointdn

#endif  // POINTDN_GRID_HPP

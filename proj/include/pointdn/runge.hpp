#ifndef POINTDN_RUNGE_HPP
#define POINTDN_RUNGE_HPP

#include <cmath>
#include <array>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <set>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include "pointdn/grid.hpp"
#include "pointdn/linear_solve.hpp"
#include "pointdn/parallel.hpp"

namespace pointdn {

/// Discrete Green column: Delta_h G = -1/h^2 at y, G = 0 on the boundary.
inline RealField green_column(const LinearSystem& laplace, int source_node) {
    const Grid& g = laplace.grid();
    require(source_node >= 0 && source_node < g.node_count(), "source node out of range");
    require(!g.is_boundary(source_node), "Green column source must be an interior node");
    RealField source(laplace.handle());
    source[source_node] = -1.0 / (g.h() * g.h());
    return laplace.solve(source, RealBoundary(laplace.handle()));
}

inline RealField green_column(const GridHandle& grid, int source_node) {
    LinearSystem laplace(grid);
    return green_column(laplace, source_node);
}

/// Outer domain: the unit square. Inner domain: the strip [0,1] x [0, a],
/// which shares its bottom and both vertical sides with the square; its top
/// edge y = a is the free side. Sources sit on an ellipse in the strip
/// above the inner domain.
struct SourceCurve {
    double center_x = 0.5;
    double center_y = 0.8;
    double radius_x = 0.4;
    double radius_y = 0.1;
};

class NestedDomains {
public:
    NestedDomains(GridHandle outer, double height, SourceCurve curve = SourceCurve{})
        : outer_(std::move(outer)), curve_(curve), laplace_(std::make_unique<LinearSystem>(outer_)) {
        const Grid& g = *outer_;
        free_row_ = static_cast<int>(std::lround(height / g.h()));
        require(free_row_ >= 2 && free_row_ <= g.n() - 3, "inner height leaves no room for sources");
        const double y_min = curve.center_y - curve.radius_y;
        const double y_max = curve.center_y + curve.radius_y;
        const double x_min = curve.center_x - curve.radius_x;
        const double x_max = curve.center_x + curve.radius_x;
        require(y_min > inner_height() + 0.5 * g.h() && y_max < 1.0 - 0.5 * g.h() && x_min > 0.5 * g.h() &&
                    x_max < 1.0 - 0.5 * g.h(),
                "source curve must lie strictly between the inner domain and the outer boundary");
        for (int j = 0; j <= free_row_; ++j)
            for (int i = 0; i < g.n(); ++i) inner_nodes_.push_back(g.node(i, j));
    }

    const Grid& outer() const noexcept { return *outer_; }
    const GridHandle& handle() const noexcept { return outer_; }
    const LinearSystem& laplace() const noexcept { return *laplace_; }
    double inner_height() const noexcept { return free_row_ * outer_->h(); }
    int free_row() const noexcept { return free_row_; }
    // Nodes of the closed inner domain, row-major.
    const std::vector<int>& inner_nodes() const noexcept { return inner_nodes_; }

    bool on_shared_boundary(int node) const {
        const Grid& g = *outer_;
        return g.row(node) <= free_row_ && g.is_boundary(node);
    }
    bool inner_interior(int node) const {
        const Grid& g = *outer_;
        return g.row(node) > 0 && g.row(node) < free_row_ && !g.is_boundary(node);
    }

    /// Nested source sets: angle 2 pi k / count on the ellipse, snapped to nodes.
    std::vector<int> sources(int count) const {
        require(count >= 1, "need at least one source");
        const Grid& g = *outer_;
        std::vector<int> out;
        std::set<int> seen;
        for (int k = 0; k < count; ++k) {
            const double t = 2.0 * std::numbers::pi * k / count;
            const double x = curve_.center_x + curve_.radius_x * std::cos(t);
            const double y = curve_.center_y + curve_.radius_y * std::sin(t);
            const int node = g.node(static_cast<int>(std::lround(x / g.h())), static_cast<int>(std::lround(y / g.h())));
            require(g.row(node) > free_row_ && !g.is_boundary(node), "source outside the admissible strip");
            require(seen.insert(node).second, "source set too dense for the grid: duplicate node");
            out.push_back(node);
        }
        return out;
    }

    const RealField& column(int source_node) const {
        {
            std::lock_guard lock(mutex_);
            if (auto it = columns_.find(source_node); it != columns_.end()) return *it->second;
        }
        auto column = std::make_unique<RealField>(green_column(*laplace_, source_node));
        std::lock_guard lock(mutex_);
        auto [it, inserted] = columns_.try_emplace(source_node, std::move(column));
        return *it->second;
    }

private:
    GridHandle outer_;
    SourceCurve curve_;
    std::unique_ptr<LinearSystem> laplace_;
    int free_row_ = 0;
    std::vector<int> inner_nodes_;
    mutable std::mutex mutex_;
    mutable std::map<int, std::unique_ptr<RealField>> columns_;
};

/// Discrete harmonic function on the inner domain with the given values on the
/// free side and zero on the shared sides. Nodes above the free side are zero.
template <class Fn>
RealField inner_harmonic(const NestedDomains& dom, Fn&& free_side) {
    const Grid& g = dom.outer();
    const int n = g.n();
    const int rows = dom.free_row();
    const int cols = n - 2;
    const int unknowns = cols * (rows - 1);
    auto index = [&](int i, int j) { return (j - 1) * cols + (i - 1); };
    RealField out(dom.handle());
    for (int i = 1; i < n - 1; ++i) out[g.node(i, rows)] = free_side(g.x(g.node(i, rows)));
    std::vector<Eigen::Triplet<double>> t;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(unknowns);
    for (int j = 1; j < rows; ++j) {
        for (int i = 1; i < n - 1; ++i) {
            const int r = index(i, j);
            t.emplace_back(r, r, 4.0);
            const std::array<std::pair<int, int>, 4> nbs{{{i + 1, j}, {i - 1, j}, {i, j + 1}, {i, j - 1}}};
            for (auto [a, b] : nbs) {
                if (a >= 1 && a <= n - 2 && b >= 1 && b <= rows - 1) {
                    t.emplace_back(r, index(a, b), -1.0);
                } else {
                    rhs[r] += out[g.node(a, b)];
                }
            }
        }
    }
    Eigen::SparseMatrix<double> a(unknowns, unknowns);
    a.setFromTriplets(t.begin(), t.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(a);
    if (solver.info() != Eigen::Success) throw Error(ErrorKind::SingularSystem, "inner Laplace factorization failed");
    const Eigen::VectorXd x = solver.solve(rhs);
    for (int j = 1; j < rows; ++j)
        for (int i = 1; i < n - 1; ++i) out[g.node(i, j)] = x[index(i, j)];
    return out;
}

struct RungeFit {
    Eigen::VectorXd coefficients;
    double residual = 0.0;   // relative discrete L^2 residual on the inner domain
    double condition = 0.0;  // largest over smallest singular value, unit-norm columns
    double shared_trace = 0.0;  // max |target| on the shared boundary, for the record
};

inline constexpr double kRungeSvdCutoff = 1e-12;

/// Least-squares fit of sum_j c_j G(., y_j) to the target on the closed inner domain.
/// The target must be discretely harmonic inside the inner domain; a nonzero
/// trace on the shared sides is allowed and reported, since it is exactly what
/// the Green columns cannot reproduce.
inline RungeFit runge_fit(const NestedDomains& dom, const RealField& target, int n_sources) {
    const Grid& g = dom.outer();
    require(target.grid().n() == g.n(), "target grid mismatch");
    const RealField lap = apply_laplacian(target);
    const double scale = std::max(1.0, target.max_abs()) / (g.h() * g.h());
    RungeFit fit;
    for (int node : dom.inner_nodes()) {
        if (dom.inner_interior(node))
            require(std::abs(lap[node]) <= 1e-8 * scale, "target is not discretely harmonic in the inner domain");
        if (dom.on_shared_boundary(node)) fit.shared_trace = std::max(fit.shared_trace, std::abs(target[node]));
    }

    const auto sources = dom.sources(n_sources);
    const auto& nodes = dom.inner_nodes();
    std::vector<const RealField*> columns(sources.size());
    parallel_for(static_cast<int>(sources.size()), [&](int k) { columns[k] = &dom.column(sources[k]); });
    Eigen::MatrixXd design(nodes.size(), sources.size());
    Eigen::VectorXd rhs(nodes.size());
    for (std::size_t r = 0; r < nodes.size(); ++r) {
        rhs[r] = target[nodes[r]];
        for (std::size_t c = 0; c < sources.size(); ++c) design(r, c) = (*columns[c])[nodes[r]];
    }

    // Unit-norm columns: same span, but the truncation no longer depends on how
    // strongly each source couples to the inner domain.
    const Eigen::VectorXd col_norm = design.colwise().norm().transpose();
    for (Eigen::Index c = 0; c < design.cols(); ++c) {
        if (!(col_norm[c] > 0)) throw Error(ErrorKind::SingularSystem, "Green column vanishes on the inner domain");
        design.col(c) /= col_norm[c];
    }
    Eigen::JacobiSVD<Eigen::MatrixXd, Eigen::ColPivHouseholderQRPreconditioner> svd(
        design, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    fit.condition = sv[sv.size() - 1] > 0 ? sv[0] / sv[sv.size() - 1] : INFINITY;
    const Eigen::VectorXd projected = svd.matrixU().transpose() * rhs;
    Eigen::VectorXd scaled = Eigen::VectorXd::Zero(sv.size());
    for (int k = 0; k < sv.size(); ++k)
        if (sv[k] > kRungeSvdCutoff * sv[0]) scaled[k] = projected[k] / sv[k];
    const Eigen::VectorXd unit_coefficients = svd.matrixV() * scaled;
    fit.coefficients = unit_coefficients.cwiseQuotient(col_norm);
    const double norm = rhs.norm();
    fit.residual = norm > 0 ? (design * unit_coefficients - rhs).norm() / norm : 0.0;
    return fit;
}

}  // namespace pointdn

#endif  // POINTDN_RUNGE_HPP

#ifndef POINTDN_LINEAR_SOLVE_HPP
#define POINTDN_LINEAR_SOLVE_HPP

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "pointdn/grid.hpp"

namespace pointdn {

enum class SolverBackend {
    Auto,       // direct up to kDirectLimit nodes per side, CG beyond
    Direct,     // sparse LDL^T
    Iterative,  // conjugate gradient, tolerance 1e-12
};

inline constexpr int kDirectLimit = 513;

/// Interior system for Delta v + c v = F with Dirichlet data.
///
/// Assembled with the sign flipped, A = -Delta_h - diag(c), so that A is
/// symmetric positive definite whenever c stays below the first Dirichlet
/// eigenvalue (in particular for c <= 0). The direct path refuses any
/// factorization with a nonpositive pivot. The symbolic analysis is done once;
/// factorize() can be called repeatedly with new zero-order coefficients,
/// which is what Newton iterations need.
class LinearSystem {
public:
    explicit LinearSystem(GridHandle grid, const std::optional<RealField>& c = std::nullopt,
                          SolverBackend backend = SolverBackend::Auto)
        : grid_(std::move(grid)) {
        backend_ = backend;
        if (backend_ == SolverBackend::Auto)
            backend_ = grid_->n() <= kDirectLimit ? SolverBackend::Direct : SolverBackend::Iterative;
        assemble_base();
        if (backend_ == SolverBackend::Direct) {
            direct_ = std::make_unique<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
            direct_->analyzePattern(base_);
        }
        factorize(c);
    }

    LinearSystem(const LinearSystem&) = delete;
    LinearSystem& operator=(const LinearSystem&) = delete;

    const Grid& grid() const noexcept { return *grid_; }
    const GridHandle& handle() const noexcept { return grid_; }
    SolverBackend backend() const noexcept { return backend_; }
    const Eigen::SparseMatrix<double>& matrix() const noexcept { return current_; }

    // Replace the zero-order coefficient; nullopt restores the pure Laplacian.
    void factorize(const std::optional<RealField>& c) {
        current_ = base_;
        if (c) {
            require(&c->grid() == grid_.get() || c->grid().n() == grid_->n(), "coefficient grid mismatch");
            require(c->all_finite(), "zero-order coefficient contains non-finite values");
            for (int k = 0; k < grid_->interior_count(); ++k)
                current_.coeffRef(k, k) -= (*c)[grid_->interior_nodes()[k]];
        }
        if (backend_ == SolverBackend::Direct) {
            direct_->factorize(current_);
            if (direct_->info() != Eigen::Success)
                throw Error(ErrorKind::SingularSystem, "sparse LDL^T factorization failed");
            const auto& d = direct_->vectorD();
            for (int k = 0; k < d.size(); ++k) {
                if (!(d[k] > 0.0)) {
                    throw Error(ErrorKind::SingularSystem,
                                "operator is not positive definite: pivot " + std::to_string(k) + " = " +
                                    std::to_string(d[k]));
                }
            }
        } else {
            iterative_ = std::make_unique<Eigen::ConjugateGradient<Eigen::SparseMatrix<double>,
                                                                   Eigen::Lower | Eigen::Upper>>();
            iterative_->setTolerance(1e-12);
            iterative_->setMaxIterations(20 * grid_->n() * grid_->n());
            iterative_->compute(current_);
        }
    }

    /// Solve Delta v + c v = F inside, v = bc on the boundary.
    template <class T>
    Field<T> solve(const Field<T>& source, const BoundaryData<T>& bc) const {
        require(source.grid().n() == grid_->n() && bc.grid().n() == grid_->n(), "grid mismatch in solve");
        require(source.all_finite() && bc.values().allFinite(), "non-finite values in Dirichlet problem");
        const Grid& g = *grid_;
        const int n = g.n();
        const double inv_h2 = 1.0 / (g.h() * g.h());
        Field<T> out = boundary_lift(bc);
        Vector<T> rhs(g.interior_count());
        for (int k = 0; k < g.interior_count(); ++k) {
            const int node = g.interior_nodes()[k];
            T value = -source[node];
            for (int nb : {node + 1, node - 1, node + n, node - n})
                if (g.is_boundary(nb)) value += out[nb] * inv_h2;
            rhs[k] = value;
        }
        Vector<T> x = solve_interior(rhs);
        for (int k = 0; k < g.interior_count(); ++k) out[g.interior_nodes()[k]] = x[k];
        return out;
    }

    // Solve A x = rhs on interior unknowns.
    template <class T>
    Vector<T> solve_interior(const Vector<T>& rhs) const {
        if constexpr (std::is_same_v<T, Complex>) {
            Vector<double> re = solve_real(rhs.real());
            Vector<double> im = solve_real(rhs.imag());
            Vector<Complex> out(rhs.size());
            for (int k = 0; k < rhs.size(); ++k) out[k] = Complex(re[k], im[k]);
            return out;
        } else {
            return solve_real(rhs);
        }
    }

private:
    void assemble_base() {
        const Grid& g = *grid_;
        const int n = g.n();
        const double inv_h2 = 1.0 / (g.h() * g.h());
        std::vector<Eigen::Triplet<double>> triplets;
        triplets.reserve(5 * g.interior_count());
        for (int k = 0; k < g.interior_count(); ++k) {
            const int node = g.interior_nodes()[k];
            triplets.emplace_back(k, k, 4.0 * inv_h2);
            for (int nb : {node + 1, node - 1, node + n, node - n}) {
                const int col = g.interior_index(nb);
                if (col >= 0) triplets.emplace_back(k, col, -inv_h2);
            }
        }
        base_.resize(g.interior_count(), g.interior_count());
        base_.setFromTriplets(triplets.begin(), triplets.end());
        base_.makeCompressed();
    }

    Vector<double> solve_real(const Vector<double>& rhs) const {
        if (backend_ == SolverBackend::Direct) return direct_->solve(rhs);
        Vector<double> x = iterative_->solve(rhs);
        if (iterative_->info() != Eigen::Success) {
            throw Error(ErrorKind::NonConvergence,
                        "conjugate gradient did not converge: error " + std::to_string(iterative_->error()) +
                            " after " + std::to_string(iterative_->iterations()) + " iterations");
        }
        return x;
    }

    GridHandle grid_;
    SolverBackend backend_;
    Eigen::SparseMatrix<double> base_;
    Eigen::SparseMatrix<double> current_;
    std::unique_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> direct_;
    std::unique_ptr<Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper>>
        iterative_;
};

template <class T>
Field<T> solve_dirichlet(const GridHandle& grid, const Field<T>& source, const BoundaryData<T>& bc,
                         const std::optional<RealField>& c = std::nullopt) {
    LinearSystem system(grid, c);
    return system.solve(source, bc);
}

template <class T>
Field<T> harmonic_extension(const LinearSystem& system, const BoundaryData<T>& bc) {
    return system.solve(Field<T>(system.handle()), bc);
}

template <class T>
Field<T> harmonic_extension(const GridHandle& grid, const BoundaryData<T>& bc) {
    LinearSystem system(grid);
    return harmonic_extension(system, bc);
}

}  // namespace pointdn

#endif  // POINTDN_LINEAR_SOLVE_HPP

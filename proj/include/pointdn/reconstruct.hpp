#ifndef POINTDN_RECONSTRUCT_HPP
#define POINTDN_RECONSTRUCT_HPP

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include "pointdn/grid.hpp"
#include "pointdn/linear_solve.hpp"
#include "pointdn/linearization.hpp"
#include "pointdn/measure.hpp"
#include "pointdn/parallel.hpp"

namespace pointdn {

using Complex2 = std::array<Complex, 2>;

inline Complex bilinear_dot(const Complex2& a, const Complex2& b) { return a[0] * b[0] + a[1] * b[1]; }

/// zeta = (k + i k_perp) / 2 and eta = (k - i k_perp) / 2 with k_perp = (-k_2, k_1).
/// Both are isotropic (zeta . zeta = 0), so exp(i zeta . x) and exp(i eta . x)
/// are harmonic and multiply to exp(i k . x).
struct CalderonPair {
    Eigen::Vector2d k;
    Complex2 zeta;
    Complex2 eta;
};

inline CalderonPair calderon_pair(const Eigen::Vector2d& k) {
    require(k.norm() > 0.0, "Calderon pair needs a nonzero wavevector");
    const Complex i(0.0, 1.0);
    const double kp0 = -k[1];
    const double kp1 = k[0];
    return {k,
            {0.5 * (k[0] + i * kp0), 0.5 * (k[1] + i * kp1)},
            {0.5 * (k[0] - i * kp0), 0.5 * (k[1] - i * kp1)}};
}

inline Complex plane_wave(const Complex2& zeta, double x, double y) {
    return std::exp(Complex(0.0, 1.0) * (zeta[0] * x + zeta[1] * y));
}

// Lattice 2 pi Z^2 truncated to |k| <= kmax, lexicographic in (a, b).
inline std::vector<Eigen::Vector2d> k_lattice(double kmax) {
    require(kmax >= 0, "lattice radius must be nonnegative");
    const double two_pi = 2.0 * std::numbers::pi;
    const int reach = static_cast<int>(std::floor(kmax / two_pi + 1e-9));
    std::vector<Eigen::Vector2d> out;
    for (int a = -reach; a <= reach; ++a) {
        for (int b = -reach; b <= reach; ++b) {
            Eigen::Vector2d k(two_pi * a, two_pi * b);
            if (k.norm() <= kmax * (1.0 + 1e-12)) out.push_back(k);
        }
    }
    return out;
}

// Traces whose harmonic extensions multiply to exp(i k . x); k = 0 gives the constant pair.
inline std::array<ComplexBoundary, 2> fourier_directions(const GridHandle& grid, const Eigen::Vector2d& k) {
    if (k.norm() == 0.0) {
        auto one = [](double, double) { return Complex(1.0, 0.0); };
        return {trace(grid, one), trace(grid, one)};
    }
    const CalderonPair pair = calderon_pair(k);
    return {trace(grid, [&](double x, double y) { return plane_wave(pair.zeta, x, y); }),
            trace(grid, [&](double x, double y) { return plane_wave(pair.eta, x, y); })};
}

inline void check_auxiliary(const std::vector<RealBoundary>& aux) {
    for (const auto& h : aux) {
        require(h.values().minCoeff() >= 0.0, "auxiliary direction must be nonnegative");
        require(h.values().maxCoeff() > 0.0, "auxiliary direction must be positive somewhere");
    }
}

/// Phi = v_3 ... v_m Psi; strictly positive at interior nodes for admissible data.
inline RealField weight_field(const LinearSystem& laplace, const std::vector<RealBoundary>& aux,
                              const BoundaryMeasure& mu) {
    check_auxiliary(aux);
    RealField phi = solve_measure_dirichlet(laplace, mu);
    for (const auto& h : aux) phi = multiply(phi, harmonic_extension(laplace, h));
    for (int node : laplace.grid().interior_nodes()) {
        if (!(phi[node] > 0.0)) {
            throw Error(ErrorKind::InvalidArgument,
                        "weight field is not positive at interior node " + std::to_string(node));
        }
    }
    return phi;
}

// Default h_3 = ... = h_m: unit bump centered in gamma.
inline std::vector<RealBoundary> default_auxiliary(const GridHandle& grid, const Arc& gamma, int m) {
    std::vector<RealBoundary> aux;
    const double length = gamma.length();
    const double center = gamma.is_full() ? 0.5 : gamma.start + 0.5 * length;
    const double half_width = gamma.is_full() ? 0.45 : 0.45 * length;
    for (int j = 2; j < m; ++j) aux.push_back(bump_trace(grid, gamma, center, half_width));
    return aux;
}

/// Everything fixed across measurements: order, auxiliary directions, measure, difference steps.
struct MeasurementSetup {
    int m = 2;
    std::vector<RealBoundary> aux;
    BoundaryMeasure mu;
    double step_scale = 1e-2;  // eps_j = step_scale / |h_j|_inf
    int richardson_levels = 1;
    double delta = kDefaultSmallness;
    NewtonParams newton{};

    void validate() const {
        require(m >= 2 && m <= kMaxOrder, "order m must be in [2, 6]");
        require(static_cast<int>(aux.size()) == m - 2, "need m - 2 auxiliary directions");
        check_auxiliary(aux);
    }
};

enum class DataSource { MixedDifference, Cascade };

inline double real_measurement(const RealField& q, const RealBoundary& h1, const RealBoundary& h2,
                               const MeasurementSetup& setup) {
    std::vector<RealBoundary> directions{h1, h2};
    for (const auto& h : setup.aux) directions.push_back(h);
    LinearizationPlan plan{h1.handle(),   setup.m, directions, default_steps(directions, setup.step_scale),
                           setup.mu,      q,       setup.richardson_levels, setup.delta,
                           setup.newton};
    return mixed_difference_dn(plan);
}

/// Order-m mixed difference of the DN functional along (h1, h2, aux...).
/// Complex traces are split by real multilinearity:
/// D(a + ib, c + id) = D(a, c) - D(b, d) + i [D(a, d) + D(b, c)].
inline Complex simulate_measurement(const RealField& q, const ComplexBoundary& h1, const ComplexBoundary& h2,
                                    const MeasurementSetup& setup) {
    setup.validate();
    const GridHandle& grid = q.handle();
    const RealBoundary a(grid, h1.values().real(), h1.support());
    const RealBoundary b(grid, h1.values().imag(), h1.support());
    const RealBoundary c(grid, h2.values().real(), h2.support());
    const RealBoundary d(grid, h2.values().imag(), h2.support());
    auto term = [&](const RealBoundary& x, const RealBoundary& y) {
        return x.max_abs() == 0.0 || y.max_abs() == 0.0 ? 0.0 : real_measurement(q, x, y, setup);
    };
    return {term(a, c) - term(b, d), term(a, d) + term(b, c)};
}

inline Complex cascade_measurement(const LinearSystem& laplace, const RealField& q, const ComplexBoundary& h1,
                                   const ComplexBoundary& h2, const MeasurementSetup& setup) {
    std::vector<ComplexBoundary> directions{h1, h2};
    for (const auto& h : setup.aux)
        directions.emplace_back(h.handle(), h.values().cast<Complex>(), h.support());
    return cascade_value(laplace, q, directions, setup.mu);
}

struct FourierData {
    std::vector<Eigen::Vector2d> ks;
    std::vector<Complex> values;
};

inline FourierData simulate_fourier_data(const RealField& q, const MeasurementSetup& setup, double kmax,
                                         DataSource source) {
    setup.validate();
    FourierData data{k_lattice(kmax), {}};
    data.values.assign(data.ks.size(), Complex{});
    LinearSystem laplace(q.handle());
    parallel_for(static_cast<int>(data.ks.size()), [&](int idx) {
        const auto dirs = fourier_directions(q.handle(), data.ks[idx]);
        data.values[idx] = source == DataSource::Cascade ? cascade_measurement(laplace, q, dirs[0], dirs[1], setup)
                                                         : simulate_measurement(q, dirs[0], dirs[1], setup);
    });
    return data;
}

struct ReconstructionResult {
    RealField q_rec;
    std::vector<std::uint8_t> mask;  // 1 where Phi >= floor * max Phi
    double lambda = 0.0;
    double residual = 0.0;
    std::optional<double> rel_l2_error;
    RealField weight;
    double masked_fraction = 0.0;
    double condition = 0.0;
};

inline std::vector<std::uint8_t> weight_mask(const RealField& phi, double floor) {
    const double cutoff = floor * phi.values().maxCoeff();
    std::vector<std::uint8_t> mask(phi.grid().node_count());
    for (int k = 0; k < phi.grid().node_count(); ++k) mask[k] = phi[k] >= cutoff ? 1 : 0;
    return mask;
}

inline double masked_fraction(const std::vector<std::uint8_t>& mask) {
    int masked = 0;
    for (auto m : mask) masked += m ? 0 : 1;
    return mask.empty() ? 0.0 : static_cast<double>(masked) / mask.size();
}

/// Relative L^2 error over unmasked nodes, trapezoidal weights.
inline double relative_l2_error(const RealField& estimate, const RealField& truth,
                                const std::vector<std::uint8_t>& mask) {
    const auto w = truth.grid().volume_weights();
    double num = 0.0;
    double den = 0.0;
    for (int k = 0; k < truth.grid().node_count(); ++k) {
        if (!mask.empty() && !mask[k]) continue;
        const double e = estimate[k] - truth[k];
        num += e * e * w[k];
        den += truth[k] * truth[k] * w[k];
    }
    require(den > 0.0, "relative error against a vanishing ground truth");
    return std::sqrt(num / den);
}

inline double cosine_mode(int a, int b, double x, double y) {
    return std::cos(std::numbers::pi * a * x) * std::cos(std::numbers::pi * b * y);
}

inline constexpr double kConditionLimit = 1e12;

/// Fourier-moment inversion.
///
/// The data give -b(k)/m! = int q Phi exp(i k.x) dx. The product q Phi is
/// modelled as Phi times a cosine series cos(pi a x) cos(pi b y), 0 <= a, b
/// <= basis_order, fitted to the moments in least squares (real and
/// imaginary parts stacked). The fitted product is then divided by Phi where
/// Phi >= phi_floor * max Phi; other nodes are masked and set to zero.
inline ReconstructionResult recover_q_fourier(const std::vector<Eigen::Vector2d>& ks,
                                              const std::vector<Complex>& values, const RealField& phi, int m,
                                              int basis_order, double phi_floor = 1e-3) {
    require(ks.size() == values.size() && !ks.empty(), "moment data and lattice sizes differ");
    require(basis_order >= 0, "basis order must be nonnegative");
    const Grid& g = phi.grid();
    for (int node : g.interior_nodes())
        require(phi[node] > 0.0, "weight field must be positive at interior nodes");

    const int modes = (basis_order + 1) * (basis_order + 1);
    const int rows = 2 * static_cast<int>(ks.size());
    Eigen::MatrixXd design = Eigen::MatrixXd::Zero(rows, modes);
    Eigen::VectorXd rhs(rows);
    const auto w = g.volume_weights();
    const double mfact = factorial(m);
    for (std::size_t r = 0; r < ks.size(); ++r) {
        for (int a = 0; a <= basis_order; ++a) {
            for (int b = 0; b <= basis_order; ++b) {
                Complex sum{};
                for (int k = 0; k < g.node_count(); ++k) {
                    const double x = g.x(k);
                    const double y = g.y(k);
                    const Complex wave = std::exp(Complex(0.0, ks[r][0] * x + ks[r][1] * y));
                    sum += w[k] * phi[k] * cosine_mode(a, b, x, y) * wave;
                }
                design(2 * r, a * (basis_order + 1) + b) = sum.real();
                design(2 * r + 1, a * (basis_order + 1) + b) = sum.imag();
            }
        }
        rhs[2 * r] = -values[r].real() / mfact;
        rhs[2 * r + 1] = -values[r].imag() / mfact;
    }

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(design, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double condition = sv[sv.size() - 1] > 0 ? sv[0] / sv[sv.size() - 1] : INFINITY;
    if (!(condition <= kConditionLimit)) {
        throw Error(ErrorKind::IllConditioned,
                    "moment system condition estimate " + std::to_string(condition) + " exceeds limit");
    }
    const Eigen::VectorXd coeff = svd.solve(rhs);

    ReconstructionResult result{RealField(phi.handle()), weight_mask(phi, phi_floor), 0.0, 0.0, std::nullopt,
                                phi, 0.0, condition};
    for (int k = 0; k < g.node_count(); ++k) {
        if (!result.mask[k]) continue;
        double series = 0.0;
        for (int a = 0; a <= basis_order; ++a)
            for (int b = 0; b <= basis_order; ++b)
                series += coeff[a * (basis_order + 1) + b] * cosine_mode(a, b, g.x(k), g.y(k));
        const double product = phi[k] * series;
        result.q_rec[k] = product / phi[k];
    }
    result.residual = (design * coeff - rhs).norm();
    result.masked_fraction = masked_fraction(result.mask);
    return result;
}

/// Bumps of equal half-width with centers equispaced so every support stays inside gamma.
struct MomentBasis {
    Arc gamma;
    int count = 20;
    double half_width = 0.1;
    int max_pairs = 0;  // 0 keeps all pairs i <= j

    std::vector<double> centers() const {
        require(count >= 1, "moment basis needs at least one bump");
        require(!gamma.is_full() || count >= 1, "empty arc");
        const double lo = gamma.start + half_width;
        const double hi = gamma.start + gamma.length() - half_width;
        require(hi >= lo - 1e-12, "bump half-width too large for the arc");
        std::vector<double> out;
        for (int i = 0; i < count; ++i) out.push_back(count == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * i / (count - 1));
        return out;
    }

    std::vector<RealBoundary> traces(const GridHandle& grid) const {
        std::vector<RealBoundary> out;
        for (double c : centers()) out.push_back(bump_trace(grid, gamma, c, half_width));
        return out;
    }

    std::vector<std::pair<int, int>> pairs() const {
        std::vector<std::pair<int, int>> all;
        for (int i = 0; i < count; ++i)
            for (int j = i; j < count; ++j) all.emplace_back(i, j);
        if (max_pairs <= 0 || max_pairs >= static_cast<int>(all.size())) return all;
        std::vector<std::pair<int, int>> picked;
        for (int k = 0; k < max_pairs; ++k) picked.push_back(all[static_cast<std::size_t>(k) * all.size() / max_pairs]);
        return picked;
    }
};

inline std::vector<double> simulate_moment_data(const RealField& q, const MomentBasis& basis,
                                                const MeasurementSetup& setup, DataSource source) {
    setup.validate();
    const auto traces = basis.traces(q.handle());
    const auto pairs = basis.pairs();
    std::vector<double> values(pairs.size(), 0.0);
    LinearSystem laplace(q.handle());
    parallel_for(static_cast<int>(pairs.size()), [&](int idx) {
        const auto& h1 = traces[pairs[idx].first];
        const auto& h2 = traces[pairs[idx].second];
        if (source == DataSource::Cascade) {
            std::vector<RealBoundary> dirs{h1, h2};
            for (const auto& h : setup.aux) dirs.push_back(h);
            values[idx] = cascade_value(laplace, q, dirs, setup.mu);
        } else {
            values[idx] = real_measurement(q, h1, h2, setup);
        }
    });
    return values;
}

struct MomentSystem {
    Eigen::MatrixXd matrix;  // rows: pairs, columns: grid nodes
    Eigen::VectorXd rhs;
    RealField weight;
};

/// Row per pair: A[row, node] = w(node) v_1 v_2 Phi, b[row] = -measurement / m!.
inline MomentSystem assemble_moment_system(const LinearSystem& laplace, const MomentBasis& basis,
                                           const MeasurementSetup& setup, const std::vector<double>& measurements) {
    setup.validate();
    const GridHandle& grid = laplace.handle();
    const auto pairs = basis.pairs();
    require(!basis.gamma.is_full() || basis.count > 0, "empty gamma");
    require(measurements.size() == pairs.size(), "measurement count does not match basis pairs");
    const auto traces = basis.traces(grid);
    std::vector<RealField> v;
    for (const auto& h : traces) v.push_back(harmonic_extension(laplace, h));
    RealField phi = weight_field(laplace, setup.aux, setup.mu);
    const auto w = grid->volume_weights();
    MomentSystem system{Eigen::MatrixXd(pairs.size(), grid->node_count()),
                        Eigen::VectorXd(pairs.size()), phi};
    const double mfact = factorial(setup.m);
    for (std::size_t r = 0; r < pairs.size(); ++r) {
        const auto& v1 = v[pairs[r].first];
        const auto& v2 = v[pairs[r].second];
        for (int k = 0; k < grid->node_count(); ++k) system.matrix(r, k) = w[k] * v1[k] * v2[k] * phi[k];
        system.rhs[r] = -measurements[r] / mfact;
    }
    return system;
}

enum class Regularizer { Identity, Gradient };

inline constexpr double kGradientMass = 1e-3;

/// Penalty matrix M with |L q|^2 = q^T M q. Identity: trapezoidal L^2.
/// Gradient: sum of squared edge differences (a discrete Dirichlet energy)
/// plus kGradientMass times the L^2 term so M is definite.
inline Eigen::SparseMatrix<double> penalty_matrix(const Grid& g, Regularizer reg) {
    const int count = g.node_count();
    std::vector<Eigen::Triplet<double>> t;
    const auto w = g.volume_weights();
    const double mass = reg == Regularizer::Identity ? 1.0 : kGradientMass;
    for (int k = 0; k < count; ++k) t.emplace_back(k, k, mass * w[k]);
    if (reg == Regularizer::Gradient) {
        const int n = g.n();
        auto edge = [&](int a, int b) {
            t.emplace_back(a, a, 1.0);
            t.emplace_back(b, b, 1.0);
            t.emplace_back(a, b, -1.0);
            t.emplace_back(b, a, -1.0);
        };
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                if (i + 1 < n) edge(g.node(i, j), g.node(i + 1, j));
                if (j + 1 < n) edge(g.node(i, j), g.node(i, j + 1));
            }
    }
    Eigen::SparseMatrix<double> m(count, count);
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

struct LCurvePoint {
    double lambda;
    double residual;
    double seminorm;
};

/// Minimizes |A q - b|^2 + lambda q^T M q for many lambda at the cost of one.
///
/// With Z = M^{-1} A^T and G = A Z, the minimizer is q = Z (lambda I + G)^{-1} b,
/// so each lambda needs only a dense solve of size rows x rows.
class TikhonovSolver {
public:
    TikhonovSolver(GridHandle grid, Eigen::MatrixXd matrix, Eigen::VectorXd rhs, Regularizer reg)
        : grid_(std::move(grid)), a_(std::move(matrix)), b_(std::move(rhs)) {
        require(a_.cols() == grid_->node_count() && a_.rows() == b_.size() && a_.rows() > 0,
                "Tikhonov system shape mismatch");
        penalty_ = penalty_matrix(*grid_, reg);
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> factor(penalty_);
        if (factor.info() != Eigen::Success)
            throw Error(ErrorKind::SingularSystem, "penalty matrix factorization failed");
        z_ = factor.solve(a_.transpose());
        gram_ = a_ * z_;
        gram_ = 0.5 * (gram_ + gram_.transpose()).eval();
    }

    const Eigen::MatrixXd& matrix() const noexcept { return a_; }
    const Eigen::VectorXd& rhs() const noexcept { return b_; }

    Eigen::VectorXd solve(double lambda) const {
        require(lambda > 0.0, "Tikhonov parameter must be positive");
        Eigen::MatrixXd system = gram_;
        system.diagonal().array() += lambda;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(system);
        return z_ * ldlt.solve(b_);
    }

    double residual(const Eigen::VectorXd& q) const { return (a_ * q - b_).norm(); }
    double seminorm(const Eigen::VectorXd& q) const { return std::sqrt(std::max(0.0, q.dot(penalty_ * q))); }

    // Natural scale for lambda: mean diagonal of G.
    double lambda_scale() const { return std::max(gram_.trace() / gram_.rows(), 1e-300); }

    std::vector<LCurvePoint> lcurve(const std::vector<double>& lambdas) const {
        std::vector<LCurvePoint> out;
        for (double lambda : lambdas) {
            const Eigen::VectorXd q = solve(lambda);
            out.push_back({lambda, residual(q), seminorm(q)});
        }
        return out;
    }

    // Default sweep: lambda_scale * 10^[-14, 0] in quarter decades.
    std::vector<double> default_lambdas() const {
        std::vector<double> out;
        for (int k = -56; k <= 0; ++k) out.push_back(lambda_scale() * std::pow(10.0, 0.25 * k));
        return out;
    }

private:
    GridHandle grid_;
    Eigen::MatrixXd a_;
    Eigen::VectorXd b_;
    Eigen::SparseMatrix<double> penalty_;
    Eigen::MatrixXd z_;
    Eigen::MatrixXd gram_;
};

/// L-curve corner: the point of maximum signed curvature of
/// (log residual, log seminorm) as a function of log lambda, by central
/// differences on the sweep. The sweep must be uniform in log lambda.
inline std::size_t lcurve_corner(const std::vector<LCurvePoint>& curve) {
    require(!curve.empty(), "empty L-curve");
    if (curve.size() < 3) return 0;
    std::vector<double> xs, ys;
    for (const auto& p : curve) {
        xs.push_back(std::log(std::max(p.residual, 1e-300)));
        ys.push_back(std::log(std::max(p.seminorm, 1e-300)));
    }
    std::size_t best = 1;
    double best_kappa = -INFINITY;
    for (std::size_t k = 1; k + 1 < curve.size(); ++k) {
        const double x1 = 0.5 * (xs[k + 1] - xs[k - 1]);
        const double y1 = 0.5 * (ys[k + 1] - ys[k - 1]);
        const double x2 = xs[k + 1] - 2.0 * xs[k] + xs[k - 1];
        const double y2 = ys[k + 1] - 2.0 * ys[k] + ys[k - 1];
        const double speed = std::pow(x1 * x1 + y1 * y1, 1.5);
        if (!(speed > 0)) continue;
        const double kappa = (x1 * y2 - x2 * y1) / speed;
        if (kappa > best_kappa) {
            best_kappa = kappa;
            best = k;
        }
    }
    return best;
}

/// Tikhonov reconstruction at a fixed lambda.
inline ReconstructionResult tikhonov_solve(const TikhonovSolver& solver, const RealField& weight, double lambda,
                                           const std::optional<RealField>& truth = std::nullopt,
                                           double phi_floor = 1e-3) {
    const Eigen::VectorXd q = solver.solve(lambda);
    ReconstructionResult result{RealField(weight.handle(), q), weight_mask(weight, phi_floor), lambda,
                                solver.residual(q), std::nullopt, weight, 0.0, 0.0};
    result.masked_fraction = masked_fraction(result.mask);
    if (truth) result.rel_l2_error = relative_l2_error(result.q_rec, *truth, result.mask);
    return result;
}

inline ReconstructionResult tikhonov_solve(const GridHandle& grid, const Eigen::MatrixXd& matrix,
                                           const Eigen::VectorXd& rhs, double lambda, Regularizer reg,
                                           const RealField& weight,
                                           const std::optional<RealField>& truth = std::nullopt) {
    TikhonovSolver solver(grid, matrix, rhs, reg);
    return tikhonov_solve(solver, weight, lambda, truth);
}

}  // namespace pointdn

#endif  // POINTDN_RECONSTRUCT_HPP

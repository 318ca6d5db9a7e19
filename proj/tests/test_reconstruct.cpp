#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "pointdn/reconstruct.hpp"

using namespace pointdn;

namespace {

constexpr double kPi = std::numbers::pi;

MeasurementSetup setup_for(const GridHandle& g, int m, const Arc& gamma) {
    return MeasurementSetup{m, default_auxiliary(g, gamma, m), mollified_point_mass(g, {1.0, 0.5}, 0.1)};
}

}  // namespace

TEST(CalderonPair, UnitWavevector) {
    const CalderonPair p = calderon_pair(Eigen::Vector2d(1.0, 0.0));
    EXPECT_NEAR(std::abs(p.zeta[0] - Complex(0.5, 0.0)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(p.zeta[1] - Complex(0.0, 0.5)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(p.zeta[0] + p.eta[0] - 1.0), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(p.zeta[1] + p.eta[1]), 0.0, 1e-15);
}

TEST(CalderonPair, VerticalWavevector) {
    const CalderonPair p = calderon_pair(Eigen::Vector2d(0.0, 2.0 * kPi));
    EXPECT_NEAR(std::abs(p.zeta[0] - Complex(0.0, -kPi)), 0.0, 1e-14);
    EXPECT_NEAR(std::abs(p.zeta[1] - Complex(kPi, 0.0)), 0.0, 1e-14);
}

TEST(CalderonPair, IsotropicOnLattice) {
    for (const auto& k : k_lattice(8.0 * kPi)) {
        if (k.norm() == 0.0) continue;
        const CalderonPair p = calderon_pair(k);
        EXPECT_LE(std::abs(bilinear_dot(p.zeta, p.zeta)), 1e-14 * k.squaredNorm());
        EXPECT_LE(std::abs(bilinear_dot(p.eta, p.eta)), 1e-14 * k.squaredNorm());
        for (double x : {0.0, 0.3, 1.0}) {
            const Complex product = plane_wave(p.zeta, x, 0.7) * plane_wave(p.eta, x, 0.7);
            EXPECT_NEAR(std::abs(product - std::exp(Complex(0.0, k[0] * x + k[1] * 0.7))), 0.0, 1e-12);
        }
    }
    EXPECT_THROW(calderon_pair(Eigen::Vector2d(0.0, 0.0)), Error);
}

TEST(KLattice, CountsAndOrder) {
    EXPECT_EQ(k_lattice(0.0).size(), 1u);
    EXPECT_EQ(k_lattice(2.0 * kPi).size(), 5u);
    // Integer points with a^2 + b^2 <= 16: 49.
    EXPECT_EQ(k_lattice(8.0 * kPi).size(), 49u);
}

TEST(FourierData, ConjugateSymmetry) {
    auto g = build_grid(33);
    LinearSystem laplace(g);
    const RealField q = RealField::from_function(g, [](double x, double y) { return 1.0 + x * y; });
    const auto setup = setup_for(g, 2, Arc::full());
    const Eigen::Vector2d k(2.0 * kPi, -2.0 * kPi);
    const auto plus = fourier_directions(g, k);
    const auto minus = fourier_directions(g, -k);
    const Complex bp = cascade_measurement(laplace, q, plus[0], plus[1], setup);
    const Complex bm = cascade_measurement(laplace, q, minus[0], minus[1], setup);
    EXPECT_NEAR(std::abs(bm - std::conj(bp)), 0.0, 1e-12 * std::abs(bp));
}

TEST(FourierData, ZeroPotentialGivesZero) {
    auto g = build_grid(21);
    const auto setup = setup_for(g, 2, Arc::full());
    const auto data = simulate_fourier_data(RealField(g), setup, 2.0 * kPi, DataSource::Cascade);
    for (const auto& v : data.values) EXPECT_EQ(std::abs(v), 0.0);
    const auto dirs = fourier_directions(g, data.ks[1]);
    EXPECT_NEAR(std::abs(simulate_measurement(RealField(g), dirs[0], dirs[1], setup)), 0.0, 1e-12);
}

TEST(FourierRecovery, ExactOnConsistentData) {
    // Data built with the same quadrature as the inversion: q in the cosine span is recovered.
    auto g = build_grid(41);
    LinearSystem laplace(g);
    const auto setup = setup_for(g, 3, Arc::full());
    const RealField phi = weight_field(laplace, setup.aux, setup.mu);
    const RealField q = RealField::from_function(g, [](double x, double y) {
        return 1.0 + 0.5 * std::cos(2 * kPi * x) - 0.25 * std::cos(kPi * x) * std::cos(3 * kPi * y);
    });
    const auto ks = k_lattice(8.0 * kPi);
    const auto w = g->volume_weights();
    std::vector<Complex> values;
    for (const auto& k : ks) {
        Complex sum{};
        for (int n = 0; n < g->node_count(); ++n)
            sum += w[n] * q[n] * phi[n] * std::exp(Complex(0.0, k[0] * g->x(n) + k[1] * g->y(n)));
        values.push_back(-factorial(3) * sum);
    }
    const ReconstructionResult r = recover_q_fourier(ks, values, phi, 3, 3);
    EXPECT_LT(relative_l2_error(r.q_rec, q, r.mask), 1e-8);
    EXPECT_LT(r.masked_fraction, 0.2);
}

TEST(WeightField, PositiveAndRejectsSignedAuxiliary) {
    auto g = build_grid(41);
    LinearSystem laplace(g);
    const auto setup = setup_for(g, 4, Arc{0.0, 1.0});
    const RealField phi = weight_field(laplace, setup.aux, setup.mu);
    for (int node : g->interior_nodes()) EXPECT_GT(phi[node], 0.0);
    const std::vector<RealBoundary> bad{bump_trace(g, Arc::full(), 0.5, 0.2, -1.0)};
    EXPECT_THROW(weight_field(laplace, bad, setup.mu), Error);
}

TEST(MomentSystem, VolumeIdentityDataIsConsistent) {
    auto g = build_grid(41);
    LinearSystem laplace(g);
    const Arc gamma{0.0, 1.0};
    const auto setup = setup_for(g, 3, gamma);
    const MomentBasis basis{gamma, 6, 0.1, 0};
    const RealField q = RealField::from_function(g, [](double x, double y) { return 1.0 + x - y * y; });
    const RealField psi = solve_measure_dirichlet(laplace, setup.mu);
    const auto traces = basis.traces(g);
    std::vector<double> data;
    for (auto [i, j] : basis.pairs()) data.push_back(volume_value(laplace, q, std::vector{traces[i], traces[j], setup.aux[0]}, psi));
    const MomentSystem sys = assemble_moment_system(laplace, basis, setup, data);
    EXPECT_EQ(sys.matrix.rows(), 21);
    const Eigen::VectorXd diff = sys.matrix * q.values() - sys.rhs;
    EXPECT_LT(diff.cwiseAbs().maxCoeff(), 1e-12 * sys.rhs.cwiseAbs().maxCoeff());

    // Cascade data differ only by discretization error.
    const auto cascade = simulate_moment_data(q, basis, setup, DataSource::Cascade);
    for (std::size_t r = 0; r < data.size(); ++r) EXPECT_NEAR(cascade[r], data[r], 0.05 * std::abs(data[r]));
}

TEST(MomentBasis, CentersStayInsideArc) {
    const MomentBasis basis{Arc{1.0, 2.0}, 5, 0.1, 0};
    const auto c = basis.centers();
    ASSERT_EQ(c.size(), 5u);
    EXPECT_NEAR(c.front(), 1.1, 1e-15);
    EXPECT_NEAR(c.back(), 1.9, 1e-15);
    EXPECT_EQ(basis.pairs().size(), 15u);
    const MomentBasis capped{Arc{1.0, 2.0}, 5, 0.1, 4};
    EXPECT_EQ(capped.pairs().size(), 4u);
    EXPECT_THROW((MomentBasis{Arc{0.0, 0.1}, 3, 0.1, 0}.centers()), Error);
}

TEST(Tikhonov, ZeroDataGivesZero) {
    auto g = build_grid(11);
    Eigen::MatrixXd a = Eigen::MatrixXd::Random(8, g->node_count());
    TikhonovSolver solver(g, a, Eigen::VectorXd::Zero(8), Regularizer::Gradient);
    EXPECT_EQ(solver.solve(1e-3).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_THROW(solver.solve(0.0), Error);
}

TEST(Tikhonov, ResidualAndSeminormAreMonotone) {
    auto g = build_grid(11);
    std::srand(3);
    Eigen::MatrixXd a = Eigen::MatrixXd::Random(15, g->node_count());
    Eigen::VectorXd b = Eigen::VectorXd::Random(15);
    for (Regularizer reg : {Regularizer::Identity, Regularizer::Gradient}) {
        TikhonovSolver solver(g, a, b, reg);
        const auto curve = solver.lcurve(solver.default_lambdas());
        for (std::size_t k = 1; k < curve.size(); ++k) {
            EXPECT_GE(curve[k].residual, curve[k - 1].residual * (1 - 1e-9));
            EXPECT_LE(curve[k].seminorm, curve[k - 1].seminorm * (1 + 1e-9));
        }
    }
}

TEST(Tikhonov, MatchesNormalEquations) {
    auto g = build_grid(9);
    std::srand(5);
    Eigen::MatrixXd a = Eigen::MatrixXd::Random(10, g->node_count());
    Eigen::VectorXd b = Eigen::VectorXd::Random(10);
    TikhonovSolver solver(g, a, b, Regularizer::Gradient);
    const double lambda = 0.3;
    const Eigen::MatrixXd penalty = Eigen::MatrixXd(penalty_matrix(*g, Regularizer::Gradient));
    const Eigen::VectorXd direct = (a.transpose() * a + lambda * penalty).ldlt().solve(a.transpose() * b);
    EXPECT_LT((solver.solve(lambda) - direct).cwiseAbs().maxCoeff(), 1e-9 * direct.cwiseAbs().maxCoeff());
}

TEST(LCurve, CornerOfSyntheticCurve) {
    // Vertical leg for lambda < 1, horizontal leg for lambda > 1, symmetric about lambda = 1.
    std::vector<LCurvePoint> curve;
    std::size_t at_one = 0;
    for (int k = -40; k <= 40; ++k) {
        const double lambda = std::pow(10.0, 0.1 * k);
        if (k == 0) at_one = curve.size();
        curve.push_back({lambda, 1e-3 * std::sqrt(1.0 + lambda * lambda), std::sqrt(1.0 + 1.0 / (lambda * lambda))});
    }
    const std::size_t corner = lcurve_corner(curve);
    EXPECT_EQ(corner, at_one);
    EXPECT_EQ(lcurve_corner({curve[0], curve[1]}), 0u);
}

TEST(RelativeError, MaskedNodesAreIgnored) {
    auto g = build_grid(5);
    const RealField truth = RealField::from_function(g, [](double, double) { return 2.0; });
    RealField est = truth;
    est[0] = 100.0;
    std::vector<std::uint8_t> mask(g->node_count(), 1);
    mask[0] = 0;
    EXPECT_EQ(relative_l2_error(est, truth, mask), 0.0);
    EXPECT_GT(relative_l2_error(est, truth, {}), 0.0);
}

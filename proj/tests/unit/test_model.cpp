#include <gtest/gtest.h>

#include <cmath>

#include "hypofeller/model.hpp"

using namespace hfl;

namespace {

std::vector<Vector> random_points(int dim, int count, std::uint64_t seed, double scale = 1.0) {
    auto rng = make_rng(seed);
    std::normal_distribution<double> normal;
    std::vector<Vector> pts;
    for (int k = 0; k < count; ++k) {
        Vector x(dim);
        for (int i = 0; i < dim; ++i) x(i) = scale * normal(rng);
        pts.push_back(x);
    }
    return pts;
}

SdeModel cubic_model() {
    // b = (x2, -x1 - x1^3 + x1 x2)
    Matrix a(2, 1);
    a << 0.0, 1.0;
    return polynomial_model({{0, 1.0, {0, 1}}, {1, -1.0, {1, 0}}, {1, -1.0, {3, 0}}, {1, 1.0, {1, 1}}}, a);
}

}  // namespace

TEST(SdeModel, LinearDriftAndJacobian) {
    Matrix b(2, 2);
    b << 0, 1, -1, -1;
    const auto m = linear_model(b, Matrix::Identity(2, 2));
    Vector x(2);
    x << 0.5, -2.0;
    EXPECT_TRUE(m.drift(x).isApprox(b * x));
    EXPECT_TRUE(m.jacobian({x.data(), 2}).isApprox(b));
    EXPECT_TRUE(m.jet_jacobian({x.data(), 2}).isApprox(b));
    EXPECT_EQ(m.dim(), 2);
    EXPECT_EQ(m.noise_dim(), 2);
    EXPECT_TRUE(m.exact_jets());
}

TEST(SdeModel, DimensionMismatchRejected) {
    EXPECT_THROW(linear_model(Matrix::Identity(3, 3), Matrix::Identity(2, 2)), ArgumentError);
    EXPECT_THROW(constant_model(Vector::Zero(3), Matrix::Identity(2, 2)), ArgumentError);
    EXPECT_THROW(polynomial_model({{2, 1.0, {1, 0}}}, Matrix::Identity(2, 2)), ArgumentError);
    EXPECT_THROW(polynomial_model({{0, 1.0, {1}}}, Matrix::Identity(2, 2)), ArgumentError);
    Matrix bad = Matrix::Identity(2, 2);
    bad(0, 0) = std::nan("");
    EXPECT_THROW(zero_drift_model(bad), ArgumentError);
}

TEST(SdeModel, JetConsistencyWithCentralDifferences) {
    const auto m = cubic_model();
    const auto r = check_jet_consistency(m, random_points(2, 50, 3));
    EXPECT_TRUE(r.pass) << r.max_relative_error;
}

TEST(SdeModel, PolynomialSecondDerivativesExact) {
    const auto m = cubic_model();
    const std::vector<double> x{0.7, -0.2};
    const auto jets = m.taylor(x, 3);
    // d^2 b_2 / dx1^2 = -6 x1, d^2 b_2 / dx1 dx2 = 1, d^3 b_2 / dx1^3 = -6.
    EXPECT_NEAR(jets[1].partial(std::vector<int>{2, 0}), -6 * 0.7, 1e-13);
    EXPECT_NEAR(jets[1].partial(std::vector<int>{1, 1}), 1.0, 1e-14);
    EXPECT_NEAR(jets[1].partial(std::vector<int>{3, 0}), -6.0, 1e-13);
}

TEST(SdeModel, FiniteDifferenceFallbackIsCapped) {
    Matrix a = Matrix::Identity(2, 2);
    const auto m = SdeModel::from_drift("sin", a, [](std::span<const double> x, std::span<double> out) {
        out[0] = std::sin(x[1]);
        out[1] = -std::sin(x[0]);
    });
    EXPECT_FALSE(m.exact_jets());
    EXPECT_EQ(m.jet_order(), kFiniteDifferenceMaxOrder);
    const std::vector<double> x{0.3, 1.1};
    const auto jets = m.taylor(x, 2);
    EXPECT_NEAR(jets[0].first_partial(1), std::cos(1.1), 1e-7);
    EXPECT_NEAR(jets[1].partial(std::vector<int>{2, 0}), std::sin(0.3), 1e-4);
    try {
        (void)m.taylor(x, 4);
        FAIL() << "expected a capability error";
    } catch (const CapabilityError& e) {
        EXPECT_EQ(e.required_order(), 4);
    }
}

TEST(Lyapunov, SquaredNormOracles) {
    const auto h = squared_norm_lyapunov();
    Vector x(3);
    x << 1, -2, 0.5;
    EXPECT_DOUBLE_EQ(h(x), 1 + 1 + 4 + 0.25);
    EXPECT_TRUE(h.gradient({x.data(), 3}).isApprox(2 * x));
    EXPECT_TRUE(h.hessian({x.data(), 3}).isApprox(2 * Matrix::Identity(3, 3)));
    const auto g = radial_growth_check(h, 3, 20, {1.0, 10.0, 100.0}, 9);
    EXPECT_TRUE(g.nonnegative);
    EXPECT_TRUE(g.growing);
}

#include <gtest/gtest.h>

#include "oracles/oracles.hpp"

TEST(Oracles, GaussianTvClosedFormMatchesQuadrature) {
    for (double sep : {0.0, 0.1, 0.5, 1.0, 3.0})
        for (double t : {0.25, 1.0, 4.0}) EXPECT_NEAR(oracle::gaussian_tv(sep, t), oracle::gaussian_tv_quadrature(sep, t), 1e-8);
}

TEST(Oracles, ExponentialOfRotationGenerator) {
    Eigen::MatrixXd j(2, 2);
    j << 0, -1, 1, 0;
    const auto e = oracle::expm(0.7 * j);
    EXPECT_NEAR(e(0, 0), std::cos(0.7), 1e-14);
    EXPECT_NEAR(e(1, 0), std::sin(0.7), 1e-14);
}

TEST(Oracles, SigmaLinScalarOu) {
    // b = -x, unit kicks at t = 0.5 and 1: e^{-1} + 1 (squared decay factors e^{-2(t - t_i)}).
    Eigen::MatrixXd inc(2, 1);
    inc << 1.0, 1.0;
    const auto s = oracle::sigma_lin(-Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1), {0.0, 0.5, 1.0},
                                     inc, 1.0);
    EXPECT_NEAR(s(0, 0), std::exp(-1.0) + 1.0, 1e-14);
}

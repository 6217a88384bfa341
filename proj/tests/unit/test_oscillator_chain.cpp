#include <gtest/gtest.h>

#include <cmath>

#include "hypofeller/hormander.hpp"
#include "hypofeller/oscillator_chain.hpp"
#include "oracles/oracles.hpp"

using namespace hfl;

namespace {

oracle::ChainDrift oracle_for(const ChainParams& p) {
    return {p.particles, p.gamma_first, p.gamma_last, p.pinning.coefficients(), p.interaction.coefficients()};
}

ChainParams params_with(int d, double g1 = 1.0, double gd = 1.0) {
    ChainParams p;
    p.particles = d;
    p.gamma_first = g1;
    p.gamma_last = gd;
    p.pinning = ScalarPotential::from_taylor({0.0, 0.3, 0.5, -0.1, 0.2});
    p.interaction = ScalarPotential::from_taylor({0.0, -0.2, 0.7, 0.15, 0.25});
    return p;
}

Vector random_point(Rng& rng, int n, double scale = 1.0) { return gaussian_sampler(Vector::Zero(n), scale)(rng); }

}  // namespace

TEST(ChainModel, DriftMatchesTermByTermEvaluation) {
    for (int d : {3, 4, 5}) {
        const auto p = params_with(d, 0.7, 1.3);
        const auto chain = build_chain_model(p);
        const auto ref = oracle_for(p);
        auto rng = make_rng(static_cast<std::uint64_t>(d));
        for (int k = 0; k < 20; ++k) {
            const Vector x = random_point(rng, 2 * d);
            EXPECT_LT((chain.model.drift(x) - ref(x)).norm(), 1e-12);
            EXPECT_NEAR(chain.hamiltonian(x), ref.hamiltonian(x), 1e-12);
        }
    }
}

TEST(ChainModel, MiddleVelocityExample) {
    const auto chain = build_chain_model(ChainParams{});
    Vector x = Vector::Zero(6);
    x(0) = 1.0;
    // z = (1, 0, 0), u = 0: du_2/dt = -(V'(0) - U'(0) + U'(-1)) = 2.
    EXPECT_NEAR(chain.model.drift(x)(4), 2.0, 1e-14);
}

TEST(ChainModel, NoiseActsOnEndVelocitiesOnly) {
    ChainParams p;
    p.temperature_first = 4.0;
    p.temperature_last = 9.0;
    const Matrix a = chain_noise(p);
    EXPECT_EQ(a(3, 3), 2.0);
    EXPECT_EQ(a(5, 5), 3.0);
    EXPECT_EQ(a.cwiseAbs().sum(), 5.0);
}

TEST(ChainModel, HamiltonianDerivativesAgreeWithDifferences) {
    const auto p = params_with(4);
    const auto chain = build_chain_model(p);
    auto rng = make_rng(11);
    const double h = 1e-5;
    for (int k = 0; k < 10; ++k) {
        const Vector x = random_point(rng, 8);
        const Vector g = chain.hamiltonian.gradient({x.data(), 8});
        const Matrix hess = chain.hamiltonian.hessian({x.data(), 8});
        for (int i = 0; i < 8; ++i) {
            Vector e = Vector::Zero(8);
            e(i) = h;
            EXPECT_NEAR(g(i), (chain.hamiltonian(x + e) - chain.hamiltonian(x - e)) / (2 * h), 1e-7);
            const Vector gp = chain.hamiltonian.gradient({Vector(x + e).data(), 8});
            const Vector gm = chain.hamiltonian.gradient({Vector(x - e).data(), 8});
            EXPECT_LT((hess.col(i) - (gp - gm) / (2 * h)).norm(), 1e-6);
        }
    }
}

TEST(ChainModel, EnergyDissipatesOnlyAtTheEnds) {
    const auto p = params_with(5, 0.6, 1.7);
    const auto chain = build_chain_model(p);
    auto rng = make_rng(12);
    for (int k = 0; k < 50; ++k) {
        const Vector x = random_point(rng, 10, 2.0);
        const double rate = chain.model.drift(x).dot(chain.hamiltonian.gradient({x.data(), 10}));
        const double expected = -p.gamma_first * x(5) * x(5) - p.gamma_last * x(9) * x(9);
        EXPECT_NEAR(rate, expected, 1e-10 * (1.0 + std::abs(expected)));
    }
}

TEST(ChainModel, AnalyticJacobianMatchesJets) {
    const auto chain = build_chain_model(params_with(4));
    auto rng = make_rng(13);
    for (int k = 0; k < 10; ++k) {
        const Vector x = random_point(rng, 8);
        EXPECT_LT((chain.model.jacobian({x.data(), 8}) - chain.model.jet_jacobian({x.data(), 8})).norm(), 1e-12);
    }
}

TEST(ChainBrackets, LowOrderClosedForms) {
    const auto p = params_with(3, 0.8);
    const auto ref = oracle_for(p);
    const oracle::ChainBracketForms forms{ref};
    auto rng = make_rng(14);
    for (int k = 0; k < 20; ++k) {
        const Vector x = random_point(rng, 6);
        const auto u = bracket_chain(p, x, 3);
        EXPECT_TRUE(u[0].isApprox(Vector::Unit(6, 3)));
        EXPECT_LT((u[1] - forms.u1()).norm(), 1e-12);
        EXPECT_LT((u[2] - forms.u2(x)).norm(), 1e-10);
        // Every slot but d_{u1} agrees with the displayed third bracket.
        Vector displayed = forms.u3_displayed(x);
        EXPECT_NEAR(u[3](3), forms.u3_u1_exact(x), 1e-10);
        displayed(3) = u[3](3);
        EXPECT_LT((u[3] - displayed).norm(), 1e-10);
    }
}

TEST(ChainBrackets, DefaultChainAtOrigin) {
    const auto u = bracket_chain(ChainParams{}, Vector::Zero(6), 3);
    EXPECT_TRUE(u[1].isApprox((Vector(6) << 1, 0, 0, -1, 0, 0).finished()));
    EXPECT_TRUE(u[2].isApprox((Vector(6) << -1, 0, 0, -1, 1, 0).finished()));
    EXPECT_TRUE(u[3].isApprox((Vector(6) << -1, 1, 0, 3, -1, 0).finished()));
}

TEST(ChainBrackets, UndampedQuadraticChainLosesGammaTerms) {
    ChainParams p;
    p.gamma_first = 0.0;
    p.interaction = ScalarPotential::quadratic();
    const auto u = bracket_chain(p, Vector::Zero(6), 2);
    EXPECT_TRUE(u[1].isApprox(Vector::Unit(6, 0)));
    EXPECT_TRUE(u[2].isApprox((Vector(6) << 0, 0, 0, -2, 1, 0).finished()));
}

TEST(ChainBrackets, LeadingCoefficientLaw) {
    for (int d : {3, 4, 5}) {
        const auto p = params_with(d);
        auto rng = make_rng(static_cast<std::uint64_t>(100 + d));
        for (int trial = 0; trial < 10; ++trial) {
            const Vector x = random_point(rng, 2 * d);
            const auto u = bracket_chain(p, x, 2 * (d - 2));
            double product = 1.0;
            for (int k = 0; k <= d - 2; ++k) {
                if (k > 0) product *= p.interaction.derivative(x(k) - x(k - 1), 2);
                const Vector& v = u[static_cast<std::size_t>(2 * k)];
                EXPECT_NEAR(v(p.u(k)), product, 1e-9 * std::max(1.0, std::abs(product))) << "d=" << d << " k=" << k;
                for (int j = k + 1; j < d; ++j) {
                    EXPECT_EQ(v(p.z(j)), 0.0);
                    EXPECT_EQ(v(p.u(j)), 0.0);
                }
            }
        }
    }
}

TEST(LieBracket, AntisymmetricAndBilinear) {
    const auto chain = build_chain_model(params_with(3));
    const auto v = drift_field(chain.model);
    const auto e1 = coordinate_field(6, 3), e2 = coordinate_field(6, 5);
    const auto w = lie_bracket(e1, v);
    const auto combo = constant_field((Vector(6) << 0, 0, 0, 2.0, 0, -3.0).finished());
    auto rng = make_rng(15);
    for (int k = 0; k < 10; ++k) {
        const Vector x = random_point(rng, 6);
        const Vector xy = jet_values(lie_bracket(w, v, x, 0));
        const Vector yx = jet_values(lie_bracket(v, w, x, 0));
        EXPECT_LT((xy + yx).norm(), 1e-10 * (1.0 + xy.norm()));
        const Vector lhs = jet_values(lie_bracket(combo, v, x, 0));
        const Vector rhs = 2.0 * jet_values(lie_bracket(e1, v, x, 0)) - 3.0 * jet_values(lie_bracket(e2, v, x, 0));
        EXPECT_LT((lhs - rhs).norm(), 1e-10 * (1.0 + rhs.norm()));
    }
}

TEST(LieBracket, LastVelocityBracket) {
    const auto p = params_with(3, 1.0, 0.4);
    const auto chain = build_chain_model(p);
    const Vector x = Vector::Random(6);
    const Vector b = jet_values(lie_bracket(coordinate_field(6, 5), drift_field(chain.model), x, 0));
    EXPECT_TRUE(b.isApprox((Vector(6) << 0, 0, 1, 0, 0, -0.4).finished(), 1e-14));
}

TEST(SpanCheck, ConvexInteractionSpans) {
    auto rng = make_rng(16);
    for (int d : {3, 4}) {
        ChainParams p;
        p.particles = d;
        for (int k = 0; k < 10; ++k) {
            const auto s = bracket_span_check(p, random_point(rng, 2 * d));
            EXPECT_TRUE(s.full_rank);
            EXPECT_EQ(s.columns.cols(), 2 * d);
        }
    }
}

TEST(SpanCheck, LinearInteractionDoesNot) {
    ChainParams p;
    p.interaction = ScalarPotential::linear();
    auto rng = make_rng(17);
    for (int k = 0; k < 10; ++k) EXPECT_FALSE(bracket_span_check(p, random_point(rng, 6)).full_rank);
}

TEST(SpanCheck, AgreesWithMatrixRankCondition) {
    const ChainParams p;
    const auto chain = build_chain_model(p);
    auto rng = make_rng(18);
    for (int k = 0; k < 20; ++k) {
        const Vector x = random_point(rng, 6);
        EXPECT_EQ(bracket_span_check(p, x).full_rank, rank_check(chain.model, x, 6).minimal_order.has_value());
    }
}

TEST(ChainBrackets, DepthCapAndValidation) {
    const ChainParams p;
    EXPECT_NO_THROW(bracket_chain(p, Vector::Zero(6), 4));
    EXPECT_THROW(bracket_chain(p, Vector::Zero(6), 5), ArgumentError);
    EXPECT_THROW(bracket_chain(p, Vector::Zero(5), 2), ArgumentError);
    ChainParams small;
    small.particles = 2;
    EXPECT_THROW(build_chain_model(small), Error);
}

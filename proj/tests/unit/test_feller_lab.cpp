#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "hypofeller/feller_lab.hpp"
#include "hypofeller/oscillator_chain.hpp"
#include "oracles/oracles.hpp"

using namespace hfl;

namespace {

TvSetup quick(std::size_t paths = 4000, std::uint64_t seed = 3) {
    TvSetup s;
    s.steps = 1;
    s.paths = paths;
    s.seed = seed;
    return s;
}

const SdeModel brownian = zero_drift_model(Matrix::Identity(1, 1));
const NoiseDriver unit_clock = DeterministicClock{{1.0}};

}  // namespace

TEST(TvEstimator, BinsGrowWithSampleSize) {
    EXPECT_EQ(detail::bins_for(10, 1), 4);
    EXPECT_EQ(detail::bins_for(10000, 1), 22);
    EXPECT_EQ(detail::bins_for(1000000000, 1), 64);
    EXPECT_LE(detail::bins_for(10000, 2), detail::bins_for(10000, 1));
}

TEST(TvEstimator, IdenticalStartsSitAtTheFloor) {
    const auto e = tv_estimate(brownian, Vector::Zero(1), Vector::Zero(1), unit_clock, quick());
    EXPECT_LT(e.value, e.noise_floor + 4.0 * e.std_error + 0.02);
    EXPECT_GT(e.noise_floor, 0.0);
}

TEST(TvEstimator, CalibratedAgainstGaussianTv) {
    for (double sep : {0.5, 1.0, 2.0}) {
        const auto e = tv_estimate(brownian, Vector::Zero(1), Vector::Constant(1, sep), unit_clock, quick(10000));
        EXPECT_NEAR(e.value, oracle::gaussian_tv(sep, 1.0), 0.03) << sep;
        EXPECT_GE(e.value, 0.0);
        EXPECT_LE(e.value, 1.0);
    }
}

TEST(TvEstimator, SymmetricUpToSampling) {
    const auto ab = tv_estimate(brownian, Vector::Zero(1), Vector::Ones(1), unit_clock, quick());
    const auto ba = tv_estimate(brownian, Vector::Ones(1), Vector::Zero(1), unit_clock, quick());
    EXPECT_NEAR(ab.value, ba.value, 4.0 * std::hypot(ab.std_error, ba.std_error) + 0.02);
}

TEST(TvEstimator, DegenerateNoiseSeparatesCompletely) {
    const auto m = linear_model(-Matrix::Identity(2, 2), Matrix::Zero(2, 1));
    const auto e = tv_estimate(m, Vector::Zero(2), (Vector(2) << 0.1, 0).finished(),
                               SubordinatorSpec({StableSubordinator{0.5}}), quick(1000));
    EXPECT_GT(e.value, 0.95);
}

TEST(TvEstimator, HighDimensionUsesPairProjections) {
    const auto m = zero_drift_model(Matrix::Identity(6, 6));
    const NoiseDriver clock = DeterministicClock{std::vector<double>(6, 1.0)};
    Vector y = Vector::Zero(6);
    y(2) = 2.0;
    const auto e = tv_estimate(m, Vector::Zero(6), y, clock, quick(4000));
    EXPECT_NEAR(e.value, oracle::gaussian_tv(2.0, 1.0), 0.06);
    EXPECT_FALSE(e.binning.empty());
}

TEST(TvEstimator, RejectsSmallSamplesAndMismatches) {
    EXPECT_THROW(tv_estimate(brownian, Vector::Zero(1), Vector::Ones(1), unit_clock, quick(99)), ArgumentError);
    EXPECT_THROW(tv_estimate(brownian, Vector::Zero(2), Vector::Ones(1), unit_clock, quick()), ArgumentError);
    EXPECT_THROW(tv_estimate(brownian, Vector::Zero(1), Vector::Ones(1), NoiseDriver{DeterministicClock{{1.0, 1.0}}},
                             quick()),
                 ArgumentError);
}

TEST(TvEstimator, ReproducibleForFixedSeed) {
    const auto a = tv_estimate(brownian, Vector::Zero(1), Vector::Ones(1), unit_clock, quick());
    const auto b = tv_estimate(brownian, Vector::Zero(1), Vector::Ones(1), unit_clock, quick());
    EXPECT_EQ(a.value, b.value);
    EXPECT_EQ(a.noise_floor, b.noise_floor);
}

TEST(FellerProfile, BrownianProfileShrinks) {
    const auto f = feller_profile(brownian, Vector::Zero(1), Vector::Ones(1), {1.0, 0.5, 0.1, 0.02}, unit_clock,
                                  quick(10000));
    ASSERT_EQ(f.estimates.size(), 4u);
    EXPECT_TRUE(f.decreasing);
    EXPECT_TRUE(f.reaches_floor);
    EXPECT_EQ(f.verdict, "consistent with strong Feller");
    std::ostringstream os;
    write_csv(os, f);
    EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "r,tv,noise_floor,stderr,exit_prob_x,exit_prob_y");
}

TEST(FellerProfile, RejectsBadRadii) {
    EXPECT_THROW(feller_profile(brownian, Vector::Zero(1), Vector::Ones(1), {}, unit_clock, quick()), ArgumentError);
    EXPECT_THROW(feller_profile(brownian, Vector::Zero(1), Vector::Ones(1), {0.1, 0.5}, unit_clock, quick()),
                 ArgumentError);
    EXPECT_THROW(feller_profile(brownian, Vector::Zero(1), Vector::Zero(1), {0.5}, unit_clock, quick()),
                 ArgumentError);
}

TEST(Localization, HighLevelMatchesPlainEstimate) {
    const auto chain = build_chain_model(ChainParams{});
    const SubordinatorSpec spec(std::vector<SubordinatorComponent>(6, StableSubordinator{0.5}));
    TvSetup s;
    s.horizon = 0.01;
    s.steps = 20;
    s.paths = 500;
    Vector y = Vector::Zero(6);
    y(3) = 0.5;
    const auto plain = tv_estimate(chain.model, Vector::Zero(6), y, spec, s, &chain.hamiltonian);
    const auto loc = localized_tv_estimate(chain.model, chain.hamiltonian, std::numeric_limits<int>::max(), Vector::Zero(6), y, spec, s);
    EXPECT_EQ(loc.exit_prob_x, 0.0);
    EXPECT_EQ(loc.exit_prob_y, 0.0);
    EXPECT_NEAR(loc.localized.value, plain.value, 1e-12);
    EXPECT_GE(loc.corrected_bound, loc.localized.value);
}

TEST(Localization, LowLevelBoundIsVacuous) {
    const auto chain = build_chain_model(ChainParams{});
    const SubordinatorSpec spec(std::vector<SubordinatorComponent>(6, StableSubordinator{0.5}));
    TvSetup s;
    s.horizon = 0.05;
    s.steps = 20;
    s.paths = 500;
    Vector x = Vector::Ones(6);
    const auto loc = localized_tv_estimate(chain.model, chain.hamiltonian, 1, x, x, spec, s);
    EXPECT_EQ(loc.exit_prob_x, 1.0);
    EXPECT_GE(loc.corrected_bound, 1.0);
    EXPECT_GE(loc.mean_sup_h_x, 1.0);
    std::ostringstream os;
    write_csv(os, 0.0, loc);
    EXPECT_NE(os.str().find("exit_prob_x"), std::string::npos);
}

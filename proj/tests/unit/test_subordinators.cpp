#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "hypofeller/subordinators.hpp"

using namespace hfl;

namespace {

// Monte Carlo mean of exp(-z S_t) with its standard error.
std::pair<double, double> empirical_laplace(const SubordinatorComponent& c, double t, double z, int n,
                                            std::uint64_t seed) {
    auto rng = make_rng(seed);
    double acc = 0.0, acc2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = std::exp(-z * sample_increment(c, t, rng));
        acc += v;
        acc2 += v * v;
    }
    const double mean = acc / n;
    return {mean, std::sqrt((acc2 / n - mean * mean) / n)};
}

}  // namespace

TEST(LaplaceExponent, ZeroArgumentGivesZero) {
    SubordinatorSpec spec({StableSubordinator{0.5}, GammaSubordinator{1.0, 1.0}, CompoundPoisson{2.0, DiracJumps{1.0}}});
    const std::vector<double> z{0.0, 0.0, 0.0};
    EXPECT_EQ(laplace_exponent(spec, z), 0.0);
}

TEST(LaplaceExponent, ClosedForms) {
    EXPECT_DOUBLE_EQ(laplace_exponent(StableSubordinator{0.5}, 1.0), 1.0);
    EXPECT_NEAR(laplace_exponent(StableSubordinator{0.5}, 4.0), 2.0, 1e-15);
    EXPECT_NEAR(laplace_exponent(CompoundPoisson{2.0, DiracJumps{1.0}}, 1.0), 2.0 * (1.0 - std::exp(-1.0)), 1e-15);
    EXPECT_NEAR(laplace_exponent(CompoundPoisson{2.0, DiracJumps{1.0}}, 1.0), 1.2642, 1e-4);
    EXPECT_NEAR(laplace_exponent(GammaSubordinator{2.0, 3.0}, 1.5), 2.0 * std::log(1.5), 1e-15);
    EXPECT_NEAR(laplace_exponent(CompoundPoisson{1.5, ExponentialJumps{2.0}}, 1.0), 1.5 * (1.0 - 1.0 / 3.0), 1e-15);
}

TEST(LaplaceExponent, NegativeArgumentIsDomainError) {
    EXPECT_THROW(laplace_exponent(StableSubordinator{0.5}, -0.1), DomainError);
    SubordinatorSpec spec({StableSubordinator{0.5}});
    EXPECT_THROW(laplace_exponent(spec, std::vector<double>{1.0, 2.0}), ArgumentError);
}

TEST(SubordinatorSpec, ValidatesParameters) {
    EXPECT_THROW(SubordinatorSpec({StableSubordinator{1.0}}), ArgumentError);
    EXPECT_THROW(SubordinatorSpec({StableSubordinator{0.0}}), ArgumentError);
    EXPECT_THROW(SubordinatorSpec({GammaSubordinator{0.0, 1.0}}), ArgumentError);
    EXPECT_THROW(SubordinatorSpec({GammaSubordinator{1.0, -1.0}}), ArgumentError);
    EXPECT_THROW(SubordinatorSpec({CompoundPoisson{0.0, DiracJumps{1.0}}}), ArgumentError);
    EXPECT_THROW(SubordinatorSpec({CompoundPoisson{1.0, ExponentialJumps{0.0}}}), ArgumentError);
    EXPECT_THROW(SubordinatorSpec(std::vector<SubordinatorComponent>{}), ArgumentError);
    EXPECT_TRUE(SubordinatorSpec({StableSubordinator{0.5}, GammaSubordinator{}}).infinite_activity());
    EXPECT_FALSE(SubordinatorSpec({StableSubordinator{0.5}, CompoundPoisson{}}).infinite_activity());
}

TEST(SamplePath, StartsAtZeroAndIsNondecreasing) {
    SubordinatorSpec spec({StableSubordinator{0.5}, GammaSubordinator{1.0, 1.0}, CompoundPoisson{3.0, ExponentialJumps{1.0}}});
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto p = sample_path(spec, 2.0, 200, seed);
        EXPECT_EQ(p.grid.front(), 0.0);
        EXPECT_EQ(p.grid.back(), 2.0);
        EXPECT_TRUE(p.value(0).isZero(0.0));
        EXPECT_GE(p.increments.minCoeff(), 0.0);
        for (std::size_t i = 1; i < p.grid.size(); ++i) EXPECT_LT(p.grid[i - 1], p.grid[i]);
    }
}

TEST(SamplePath, DeterministicInSeed) {
    SubordinatorSpec spec({StableSubordinator{0.5}, GammaSubordinator{2.0, 1.0}});
    const auto a = sample_path(spec, 1.0, 100, 42);
    const auto b = sample_path(spec, 1.0, 100, 42);
    const auto c = sample_path(spec, 1.0, 100, 43);
    EXPECT_TRUE(a.increments == b.increments);
    EXPECT_FALSE(a.increments == c.increments);
}

TEST(SamplePath, ZeroStepsRejected) {
    SubordinatorSpec spec({StableSubordinator{0.5}});
    EXPECT_THROW(sample_path(spec, 1.0, 0, 1), ArgumentError);
    EXPECT_THROW(sample_path(spec, 0.0, 10, 1), ArgumentError);
}

TEST(SamplePath, RarePoissonGivesZeroPath) {
    SubordinatorSpec spec({CompoundPoisson{1e-3, DiracJumps{1.0}}});
    int zero_paths = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed)
        if (sample_path(spec, 1.0, 10, seed).total()(0) == 0.0) ++zero_paths;
    EXPECT_GE(zero_paths, 45);
}

TEST(SamplePath, StableLaplaceMatchesOnFineGrid) {
    // S_1 as the sum of 1000 stable increments: E exp(-S_1) = exp(-1).
    SubordinatorSpec spec({StableSubordinator{0.5}});
    const int n = 20000;
    double acc = 0.0, acc2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = std::exp(-sample_path(spec, 1.0, 1000, derive_seed(7, Stream::subordinator, i)).total()(0));
        acc += v;
        acc2 += v * v;
    }
    const double mean = acc / n, se = std::sqrt((acc2 / n - mean * mean) / n);
    EXPECT_NEAR(mean, std::exp(-1.0), 3.0 * se);
}

class LaplaceCalibration : public ::testing::TestWithParam<std::pair<int, double>> {};

TEST_P(LaplaceCalibration, WithinFourStandardErrors) {
    const std::vector<SubordinatorComponent> laws{StableSubordinator{0.5}, StableSubordinator{0.3},
                                                  GammaSubordinator{1.0, 1.0}, GammaSubordinator{0.5, 2.0},
                                                  CompoundPoisson{2.0, DiracJumps{1.0}},
                                                  CompoundPoisson{1.0, ExponentialJumps{0.5}}};
    const auto [law, z] = GetParam();
    const auto& c = laws[static_cast<std::size_t>(law)];
    for (double t : {0.5, 1.0}) {
        const auto [mean, se] = empirical_laplace(c, t, z, 20000, 11 + static_cast<std::uint64_t>(law));
        EXPECT_NEAR(mean, std::exp(-t * laplace_exponent(c, z)), 4.0 * se) << describe(c) << " t=" << t;
    }
}

INSTANTIATE_TEST_SUITE_P(Laws, LaplaceCalibration,
                         ::testing::Values(std::pair{0, 0.5}, std::pair{0, 2.0}, std::pair{1, 1.0}, std::pair{2, 0.5},
                                           std::pair{2, 2.0}, std::pair{3, 1.0}, std::pair{4, 1.0},
                                           std::pair{5, 1.0}));

TEST(Nondegeneracy, Verdicts) {
    EXPECT_TRUE(nondegeneracy_check(SubordinatorSpec({StableSubordinator{0.5}, StableSubordinator{0.7}})).pass);
    EXPECT_TRUE(nondegeneracy_check(SubordinatorSpec({StableSubordinator{0.5}, GammaSubordinator{}})).pass);
    const auto r = nondegeneracy_check(SubordinatorSpec({StableSubordinator{0.5}, CompoundPoisson{}}));
    EXPECT_FALSE(r.pass);
    EXPECT_FALSE(r.warning.empty());
    EXPECT_TRUE(r.components[0].nondegenerate);
    EXPECT_FALSE(r.components[1].nondegenerate);
}

TEST(DeterministicClock, LinearInTime) {
    const auto p = DeterministicClock{{1.0, 2.0}}.path(2.0, 4);
    EXPECT_NEAR(p.total()(0), 2.0, 1e-15);
    EXPECT_NEAR(p.total()(1), 4.0, 1e-15);
}

TEST(SubordinatorCsv, HeaderAndZeroFirstRow) {
    SubordinatorSpec spec({StableSubordinator{0.5}, GammaSubordinator{}});
    const auto p = sample_path(spec, 1.0, 3, 5);
    std::ostringstream os;
    write_csv(os, p);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "t,dl_1,dl_2");
    std::getline(is, line);
    EXPECT_EQ(line, "0,0,0");
    int rows = 1;
    while (std::getline(is, line)) ++rows;
    EXPECT_EQ(rows, 4);
}

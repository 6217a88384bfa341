#pragma once

// Multi-component subordinators (increasing pure-jump Levy processes) sampled
// as exact grid increments, with their analytic Laplace exponents.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "hypofeller/core/errors.hpp"
#include "hypofeller/core/linalg.hpp"
#include "hypofeller/core/random.hpp"

namespace hfl {

/// One-sided stable law with E exp(-z S_t) = exp(-t z^index), index in (0, 1).
struct StableSubordinator {
    double index = 0.5;
};

/// Gamma process: S_t ~ Gamma(shape * t, rate).
struct GammaSubordinator {
    double shape = 1.0;
    double rate = 1.0;
};

struct DiracJumps {
    double size = 1.0;
};
struct ExponentialJumps {
    double mean = 1.0;
};
using JumpLaw = std::variant<DiracJumps, ExponentialJumps>;

/// Finite-activity control: Poisson(rate) jumps of positive size.
struct CompoundPoisson {
    double rate = 1.0;
    JumpLaw jumps = DiracJumps{};
};

using SubordinatorComponent = std::variant<StableSubordinator, GammaSubordinator, CompoundPoisson>;

inline std::string describe(const SubordinatorComponent& c) {
    struct {
        std::string operator()(const StableSubordinator& s) const { return "stable(" + std::to_string(s.index) + ")"; }
        std::string operator()(const GammaSubordinator& g) const {
            return "gamma(" + std::to_string(g.shape) + ", " + std::to_string(g.rate) + ")";
        }
        std::string operator()(const CompoundPoisson& p) const {
            return "compound_poisson(" + std::to_string(p.rate) + ")";
        }
    } visitor;
    return std::visit(visitor, c);
}

/// Independent components, one per noise direction.
class SubordinatorSpec {
public:
    SubordinatorSpec() = default;

    explicit SubordinatorSpec(std::vector<SubordinatorComponent> components) : components_(std::move(components)) {
        if (components_.empty()) throw ArgumentError("subordinator spec needs at least one component");
        for (const auto& c : components_) validate(c);
    }

    std::size_t dim() const noexcept { return components_.size(); }
    const std::vector<SubordinatorComponent>& components() const noexcept { return components_; }
    const SubordinatorComponent& operator[](std::size_t k) const { return components_.at(k); }

    /// True iff every component is stable or gamma.
    bool infinite_activity() const noexcept {
        for (const auto& c : components_)
            if (std::holds_alternative<CompoundPoisson>(c)) return false;
        return true;
    }

private:
    static void validate(const SubordinatorComponent& c) {
        if (const auto* s = std::get_if<StableSubordinator>(&c)) {
            if (!(s->index > 0.0 && s->index < 1.0)) throw ArgumentError("stable index must lie in (0, 1)");
        } else if (const auto* g = std::get_if<GammaSubordinator>(&c)) {
            if (!(g->shape > 0.0) || !(g->rate > 0.0)) throw ArgumentError("gamma shape and rate must be positive");
        } else {
            const auto& p = std::get<CompoundPoisson>(c);
            if (!(p.rate > 0.0)) throw ArgumentError("compound Poisson rate must be positive");
            if (const auto* d = std::get_if<DiracJumps>(&p.jumps); d && !(d->size > 0.0))
                throw ArgumentError("jump size must be positive");
            if (const auto* e = std::get_if<ExponentialJumps>(&p.jumps); e && !(e->mean > 0.0))
                throw ArgumentError("jump mean must be positive");
        }
    }

    std::vector<SubordinatorComponent> components_;
};

/// Grid increments of an m-component subordinator on [0, T].
struct SubordinatorPath {
    std::vector<double> grid;  ///< t_0 = 0 < ... < t_N = T
    Matrix increments;         ///< N x m; row i-1 is the increment over [t_{i-1}, t_i]

    std::size_t steps() const noexcept { return grid.empty() ? 0 : grid.size() - 1; }
    Eigen::Index dim() const noexcept { return increments.cols(); }
    double horizon() const noexcept { return grid.empty() ? 0.0 : grid.back(); }

    /// Value l_{t_i} (cumulative sum up to grid point i).
    Vector value(std::size_t i) const {
        Vector v = Vector::Zero(increments.cols());
        for (std::size_t r = 0; r < i; ++r) v += increments.row(static_cast<Eigen::Index>(r)).transpose();
        return v;
    }
    Vector total() const { return value(steps()); }
};

inline std::vector<double> uniform_grid(double horizon, std::size_t steps) {
    if (!(horizon > 0.0)) throw ArgumentError("horizon must be positive");
    if (steps == 0) throw ArgumentError("grid needs at least one step");
    std::vector<double> grid(steps + 1);
    for (std::size_t i = 0; i <= steps; ++i) grid[i] = horizon * static_cast<double>(i) / static_cast<double>(steps);
    grid.back() = horizon;
    return grid;
}

/// Laplace exponent of one component at z >= 0.
inline double laplace_exponent(const SubordinatorComponent& c, double z) {
    if (!(z >= 0.0)) throw DomainError("Laplace exponent needs z >= 0");
    if (const auto* s = std::get_if<StableSubordinator>(&c)) return std::pow(z, s->index);
    if (const auto* g = std::get_if<GammaSubordinator>(&c)) return g->shape * std::log1p(z / g->rate);
    const auto& p = std::get<CompoundPoisson>(c);
    double laplace_jump = 0.0;  // E exp(-z xi)
    if (const auto* d = std::get_if<DiracJumps>(&p.jumps))
        laplace_jump = std::exp(-z * d->size);
    else
        laplace_jump = 1.0 / (1.0 + z * std::get<ExponentialJumps>(p.jumps).mean);
    return p.rate * (1.0 - laplace_jump);
}

/// phi(z) with E exp(-z . S_t) = exp(-t phi(z)); sum over independent components.
inline double laplace_exponent(const SubordinatorSpec& spec, std::span<const double> z) {
    if (z.size() != spec.dim()) throw ArgumentError("Laplace argument dimension does not match spec");
    double phi = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) phi += laplace_exponent(spec[k], z[k]);
    return phi;
}

/// Standard one-sided stable variate (E exp(-z S) = exp(-z^index)) via Kanter's
/// representation of the Chambers-Mallows-Stuck transform.
inline double sample_one_sided_stable(double index, Rng& rng) {
    std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
    std::exponential_distribution<double> expo(1.0);
    double u = 0.0;
    while (u <= 0.0) u = angle(rng);
    double e = 0.0;
    while (e <= 0.0) e = expo(rng);
    const double b = index;
    const double a = std::pow(std::sin(b * u), b / (1.0 - b)) * std::sin((1.0 - b) * u) /
                     std::pow(std::sin(u), 1.0 / (1.0 - b));
    return std::pow(a / e, (1.0 - b) / b);
}

/// Increment of one component over a cell of length h, sampled from its exact law.
inline double sample_increment(const SubordinatorComponent& c, double h, Rng& rng) {
    if (const auto* s = std::get_if<StableSubordinator>(&c))
        return std::pow(h, 1.0 / s->index) * sample_one_sided_stable(s->index, rng);
    if (const auto* g = std::get_if<GammaSubordinator>(&c)) {
        std::gamma_distribution<double> gamma(g->shape * h, 1.0 / g->rate);
        return gamma(rng);
    }
    const auto& p = std::get<CompoundPoisson>(c);
    std::poisson_distribution<long> count(p.rate * h);
    const long n = count(rng);
    if (n == 0) return 0.0;
    if (const auto* d = std::get_if<DiracJumps>(&p.jumps)) return static_cast<double>(n) * d->size;
    std::exponential_distribution<double> jump(1.0 / std::get<ExponentialJumps>(p.jumps).mean);
    double sum = 0.0;
    for (long j = 0; j < n; ++j) sum += jump(rng);
    return sum;
}

/// Path on the uniform grid of step horizon/steps; deterministic in (spec, horizon, steps, seed).
inline SubordinatorPath sample_path(const SubordinatorSpec& spec, double horizon, std::size_t steps,
                                    std::uint64_t seed) {
    if (spec.dim() == 0) throw ArgumentError("empty subordinator spec");
    SubordinatorPath path;
    path.grid = uniform_grid(horizon, steps);
    path.increments.resize(static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(spec.dim()));
    auto rng = make_rng(seed);
    for (std::size_t i = 0; i < steps; ++i) {
        const double h = path.grid[i + 1] - path.grid[i];
        for (std::size_t k = 0; k < spec.dim(); ++k)
            path.increments(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                sample_increment(spec[k], h, rng);
    }
    return path;
}

/// Deterministic clock l^k_t = rate_k * t. Only used to calibrate estimators; not a subordinator.
struct DeterministicClock {
    std::vector<double> rates;

    SubordinatorPath path(double horizon, std::size_t steps) const {
        SubordinatorPath p;
        p.grid = uniform_grid(horizon, steps);
        p.increments.resize(static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(rates.size()));
        for (std::size_t i = 0; i < steps; ++i)
            for (std::size_t k = 0; k < rates.size(); ++k)
                p.increments(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                    rates[k] * (p.grid[i + 1] - p.grid[i]);
        return p;
    }
};

struct NondegeneracyReport {
    struct Component {
        std::string law;
        bool nondegenerate = false;
        std::string reason;
    };
    std::vector<Component> components;
    bool pass = false;
    std::string warning;  ///< empty when pass
};

/// Every component must be positive at all t > 0 almost surely (infinite activity).
inline NondegeneracyReport nondegeneracy_check(const SubordinatorSpec& spec) {
    NondegeneracyReport r;
    r.pass = true;
    for (std::size_t k = 0; k < spec.dim(); ++k) {
        NondegeneracyReport::Component c;
        c.law = describe(spec[k]);
        if (const auto* p = std::get_if<CompoundPoisson>(&spec[k])) {
            c.nondegenerate = false;
            c.reason = "finite activity: P(S_t = 0) = exp(-" + std::to_string(p->rate) + " t) > 0";
            r.pass = false;
        } else {
            c.nondegenerate = true;
            c.reason = "infinite activity: S_t > 0 a.s. for t > 0";
        }
        r.components.push_back(std::move(c));
    }
    if (!r.pass)
        r.warning = "some component has finite activity; the noise is degenerate along that direction with "
                    "positive probability and the regularity theorems do not apply";
    return r;
}

/// CSV with header `t,dl_1,...,dl_m`; row i carries the increment over [t_{i-1}, t_i] (zero at t_0).
inline void write_csv(std::ostream& os, const SubordinatorPath& path) {
    os << "t";
    for (Eigen::Index k = 0; k < path.dim(); ++k) os << ",dl_" << (k + 1);
    os << '\n';
    os.precision(17);
    for (std::size_t i = 0; i < path.grid.size(); ++i) {
        os << path.grid[i];
        for (Eigen::Index k = 0; k < path.dim(); ++k)
            os << ',' << (i == 0 ? 0.0 : path.increments(static_cast<Eigen::Index>(i - 1), k));
        os << '\n';
    }
}

}  // namespace hfl

#pragma once

// Monte Carlo evidence for total-variation continuity of x -> Law(X_t(x)):
// histogram TV between terminal samples, a split-half noise floor, radius
// profiles, and the cutoff/stopping-time localization protocol.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "hypofeller/core/errors.hpp"
#include "hypofeller/core/linalg.hpp"
#include "hypofeller/core/parallel.hpp"
#include "hypofeller/core/random.hpp"
#include "hypofeller/model.hpp"
#include "hypofeller/sde.hpp"
#include "hypofeller/subordinators.hpp"

namespace hfl {

struct TvEstimate {
    double value = 0.0;        ///< in [0, 1]
    double noise_floor = 0.0;  ///< same estimator on two halves of the x-sample
    double std_error = 0.0;    ///< binomial sqrt(v(1-v)/N), v clamped to [1/N, 1 - 1/N]
    std::size_t samples_x = 0;
    std::size_t samples_y = 0;
    int bins_per_axis = 0;
    std::string binning;  ///< human-readable descriptor of the projections and edges
};

/// Experiment shape shared by all estimators.
struct TvSetup {
    double horizon = 1.0;
    std::size_t steps = 100;  ///< grid cells on [0, horizon]
    std::size_t paths = 10000;
    std::uint64_t seed = 1;
    IntegratorOptions integrator{};
};

namespace detail {

/// Per-axis bin count ceil(n^{1/(k+2)}) clamped to [4, 64].
inline int bins_for(std::size_t n, int k) {
    const double b = std::ceil(std::pow(static_cast<double>(n), 1.0 / (k + 2)));
    return static_cast<int>(std::clamp(b, 4.0, 64.0));
}

/// Interior edges at pooled marginal quantiles, deduplicated so ties (point masses) stay in one bin.
inline std::vector<double> quantile_edges(std::vector<double> pooled, int bins) {
    std::sort(pooled.begin(), pooled.end());
    std::vector<double> edges;
    const std::size_t n = pooled.size();
    for (int b = 1; b < bins; ++b) {
        const auto idx = static_cast<std::size_t>(static_cast<double>(b) * static_cast<double>(n) / bins);
        const double e = pooled[std::min(idx, n - 1)];
        if (e > pooled.front() && (edges.empty() || e > edges.back())) edges.push_back(e);
    }
    return edges;
}

/// (1/2) sum_cells |p - q| over the product of pooled-quantile marginal bins; rows are features.
inline double histogram_tv(const Matrix& fx, const Matrix& fy, int bins) {
    const Eigen::Index k = fx.rows();
    const auto nx = static_cast<std::size_t>(fx.cols());
    const auto ny = static_cast<std::size_t>(fy.cols());
    std::vector<std::vector<double>> edges(static_cast<std::size_t>(k));
    for (Eigen::Index a = 0; a < k; ++a) {
        std::vector<double> pooled;
        pooled.reserve(nx + ny);
        for (std::size_t i = 0; i < nx; ++i) pooled.push_back(fx(a, static_cast<Eigen::Index>(i)));
        for (std::size_t i = 0; i < ny; ++i) pooled.push_back(fy(a, static_cast<Eigen::Index>(i)));
        edges[static_cast<std::size_t>(a)] = quantile_edges(std::move(pooled), bins);
    }
    const auto cell = [&](const Matrix& f, Eigen::Index col) {
        std::uint64_t id = 0;
        for (Eigen::Index a = 0; a < k; ++a) {
            const auto& e = edges[static_cast<std::size_t>(a)];
            const auto b = static_cast<std::uint64_t>(std::upper_bound(e.begin(), e.end(), f(a, col)) - e.begin());
            id = id * static_cast<std::uint64_t>(bins) + b;
        }
        return id;
    };
    std::unordered_map<std::uint64_t, std::pair<double, double>> counts;
    for (std::size_t i = 0; i < nx; ++i) counts[cell(fx, static_cast<Eigen::Index>(i))].first += 1.0;
    for (std::size_t i = 0; i < ny; ++i) counts[cell(fy, static_cast<Eigen::Index>(i))].second += 1.0;
    double tv = 0.0;
    for (const auto& [id, c] : counts) tv += std::abs(c.first / static_cast<double>(nx) - c.second / static_cast<double>(ny));
    return std::clamp(0.5 * tv, 0.0, 1.0);
}

/// Feature sets binned jointly: the full state for d <= 3, otherwise the pairs (i, i + d/2)
/// and, when H is available, the scalar H(x). The estimate is the maximum over sets.
struct Projections {
    std::vector<std::vector<Eigen::Index>> coordinate_sets;
    const LyapunovFunction* h = nullptr;

    static Projections for_dim(Eigen::Index d, const LyapunovFunction* h) {
        Projections p;
        if (d <= 3) {
            std::vector<Eigen::Index> all(static_cast<std::size_t>(d));
            for (Eigen::Index i = 0; i < d; ++i) all[static_cast<std::size_t>(i)] = i;
            p.coordinate_sets.push_back(std::move(all));
            return p;
        }
        const Eigen::Index half = d / 2;
        for (Eigen::Index i = 0; i < half; ++i) p.coordinate_sets.push_back({i, i + half});
        if (d % 2 == 1) p.coordinate_sets.push_back({d - 1});
        p.h = h;
        return p;
    }

    std::string describe(int bins_2d, int bins_full, int bins_h) const {
        std::ostringstream os;
        os << "pooled-quantile histogram;";
        for (const auto& s : coordinate_sets) {
            os << " x(";
            for (std::size_t j = 0; j < s.size(); ++j) os << (j ? "," : "") << s[j] + 1;
            os << ")x" << (s.size() == 2 ? bins_2d : bins_full);
        }
        if (h) os << " H(x)x" << bins_h;
        if (coordinate_sets.size() > 1 || h) os << "; max over projections (lower bound for TV)";
        return os.str();
    }
};

inline double projected_tv(const Matrix& xs, const Matrix& ys, const Projections& proj, std::size_t n) {
    double best = 0.0;
    for (const auto& set : proj.coordinate_sets) {
        Matrix fx(static_cast<Eigen::Index>(set.size()), xs.cols()), fy(static_cast<Eigen::Index>(set.size()), ys.cols());
        for (std::size_t j = 0; j < set.size(); ++j) {
            fx.row(static_cast<Eigen::Index>(j)) = xs.row(set[j]);
            fy.row(static_cast<Eigen::Index>(j)) = ys.row(set[j]);
        }
        best = std::max(best, histogram_tv(fx, fy, bins_for(n, static_cast<int>(set.size()))));
    }
    if (proj.h) {
        Matrix fx(1, xs.cols()), fy(1, ys.cols());
        for (Eigen::Index i = 0; i < xs.cols(); ++i) fx(0, i) = (*proj.h)(Vector(xs.col(i)));
        for (Eigen::Index i = 0; i < ys.cols(); ++i) fy(0, i) = (*proj.h)(Vector(ys.col(i)));
        best = std::max(best, histogram_tv(fx, fy, bins_for(n, 1)));
    }
    return best;
}

inline double binomial_std_error(double v, std::size_t n) {
    const double nn = static_cast<double>(n);
    const double c = std::clamp(v, 1.0 / nn, 1.0 - 1.0 / nn);
    return std::sqrt(c * (1.0 - c) / nn);
}

inline std::string explosion_advice(const ExplosionError& e) {
    std::string what = e.what();
    what = what.substr(0, what.rfind(" at t = "));
    return what + "; the drift may grow too fast for plain simulation, use localized_tv_estimate with a Lyapunov "
           "function and a cutoff level";
}

/// Terminal states of `paths` independent trajectories from x0, one column each. `stream` separates
/// the x- and y-samples; `observe(p, i, x)` sees every grid state.
template <class Observe>
Matrix terminal_sample(const SdeModel& model, const Vector& x0, const NoiseDriver& driver, const TvSetup& setup,
                       Stream stream, Observe&& observe) {
    Matrix out(model.dim(), static_cast<Eigen::Index>(setup.paths));
    const std::uint64_t base = derive_seed(setup.seed, stream, 0);
    parallel_for(setup.paths, [&](std::size_t p) {
        const auto sub = driver_path(driver, setup.horizon, setup.steps, derive_seed(base, Stream::subordinator, p));
        out.col(static_cast<Eigen::Index>(p)) =
            simulate_terminal(model, x0, sub, derive_seed(base, Stream::gaussian, p), setup.integrator,
                              [&](std::size_t i, const Vector& x) { observe(p, i, x); });
    });
    return out;
}

inline TvEstimate estimate_from_samples(const Matrix& xs, const Matrix& ys, const LyapunovFunction* h) {
    const auto n = static_cast<std::size_t>(std::min(xs.cols(), ys.cols()));
    const auto proj = Projections::for_dim(xs.rows(), h);
    TvEstimate e;
    e.samples_x = static_cast<std::size_t>(xs.cols());
    e.samples_y = static_cast<std::size_t>(ys.cols());
    e.value = projected_tv(xs, ys, proj, n);
    const Eigen::Index half = xs.cols() / 2;
    e.noise_floor = projected_tv(xs.leftCols(half), xs.middleCols(half, half), proj, static_cast<std::size_t>(half));
    e.std_error = binomial_std_error(e.value, n);
    const int full = bins_for(n, static_cast<int>(proj.coordinate_sets.front().size()));
    e.bins_per_axis = full;
    e.binning = proj.describe(bins_for(n, 2), full, bins_for(n, 1));
    return e;
}

inline void check_tv_inputs(const SdeModel& model, const Vector& x, const Vector& y, const NoiseDriver& driver,
                            const TvSetup& setup) {
    if (setup.paths < 100) throw ArgumentError("TV estimation needs at least 100 paths per point");
    if (x.size() != model.dim() || y.size() != model.dim()) throw ArgumentError("start points have wrong dimension");
    if (driver_dim(driver) != static_cast<std::size_t>(model.noise_dim()))
        throw ArgumentError("noise driver dimension does not match the model");
    if (!(setup.horizon > 0.0) || setup.steps == 0) throw ArgumentError("horizon and steps must be positive");
}

}  // namespace detail

/// Histogram TV between Law(X_t(x)) and Law(X_t(y)). `h`, when given, adds the H(x) projection for d > 3.
inline TvEstimate tv_estimate(const SdeModel& model, const Vector& x, const Vector& y, const NoiseDriver& driver,
                              const TvSetup& setup, const LyapunovFunction* h = nullptr) {
    detail::check_tv_inputs(model, x, y, driver, setup);
    const auto none = [](std::size_t, std::size_t, const Vector&) {};
    try {
        const Matrix xs = detail::terminal_sample(model, x, driver, setup, Stream::start_x, none);
        const Matrix ys = detail::terminal_sample(model, y, driver, setup, Stream::start_y, none);
        return detail::estimate_from_samples(xs, ys, h);
    } catch (const ExplosionError& e) {
        throw ExplosionError(detail::explosion_advice(e), e.time());
    }
}

struct FellerProfile {
    std::vector<double> radii;
    std::vector<TvEstimate> estimates;
    bool decreasing = false;      ///< no step up by more than 2 combined standard errors
    bool reaches_floor = false;   ///< value - noise_floor < 2 std_error at the smallest radius
    std::string verdict;
};

/// TV between x and x + r * direction for each radius. The x-sample is simulated once and shared.
inline FellerProfile feller_profile(const SdeModel& model, const Vector& x, const Vector& direction,
                                    const std::vector<double>& radii, const NoiseDriver& driver, const TvSetup& setup,
                                    const LyapunovFunction* h = nullptr) {
    if (radii.empty()) throw ArgumentError("feller_profile needs at least one radius");
    for (std::size_t i = 0; i < radii.size(); ++i) {
        if (!(radii[i] > 0.0)) throw ArgumentError("radii must be positive");
        if (i > 0 && !(radii[i] < radii[i - 1])) throw ArgumentError("radii must be strictly decreasing");
    }
    if (direction.size() != model.dim() || !(direction.norm() > 0.0)) throw ArgumentError("direction must be nonzero");
    const Vector unit = direction.normalized();
    detail::check_tv_inputs(model, x, x, driver, setup);

    FellerProfile f;
    f.radii = radii;
    const auto none = [](std::size_t, std::size_t, const Vector&) {};
    try {
        const Matrix xs = detail::terminal_sample(model, x, driver, setup, Stream::start_x, none);
        for (std::size_t r = 0; r < radii.size(); ++r) {
            TvSetup ys_setup = setup;
            ys_setup.seed = derive_seed(setup.seed, Stream::start_y, r);
            const Matrix ys =
                detail::terminal_sample(model, Vector(x + radii[r] * unit), driver, ys_setup, Stream::start_y, none);
            f.estimates.push_back(detail::estimate_from_samples(xs, ys, h));
        }
    } catch (const ExplosionError& e) {
        throw ExplosionError(detail::explosion_advice(e), e.time());
    }
    f.decreasing = true;
    for (std::size_t r = 1; r < f.estimates.size(); ++r) {
        const auto& a = f.estimates[r - 1];
        const auto& b = f.estimates[r];
        if (b.value - a.value > 2.0 * std::hypot(a.std_error, b.std_error)) f.decreasing = false;
    }
    const auto& last = f.estimates.back();
    f.reaches_floor = last.value - last.noise_floor < 2.0 * last.std_error;
    f.verdict = f.decreasing && f.reaches_floor ? "consistent with strong Feller"
                                                : "not consistent with strong Feller at this resolution";
    return f;
}

struct LocalizedTvEstimate {
    TvEstimate localized;      ///< TV of the cutoff dynamics
    int level = 0;             ///< n
    double exit_prob_x = 0.0;  ///< fraction of x-paths with H(X) >= n at some grid time <= t
    double exit_prob_y = 0.0;
    double mean_sup_h_x = 0.0;  ///< mean over x-paths of max_grid H(X); Markov bound is this / n
    double mean_sup_h_y = 0.0;
    double corrected_bound = 0.0;  ///< localized.value + 2 exit_prob_x + 2 exit_prob_y (not clamped)
};

/// Simulates with the cutoff drift b_n = b chi_n(H) and reports exit statistics of tau_n = first grid
/// time with H >= n. Below the level the cutoff drift is exactly b, so paths agree with the plain
/// simulation until tau_n under the same seed.
inline LocalizedTvEstimate localized_tv_estimate(const SdeModel& model, const LyapunovFunction& h, int level,
                                                 const Vector& x, const Vector& y, const NoiseDriver& driver,
                                                 const TvSetup& setup) {
    detail::check_tv_inputs(model, x, y, driver, setup);
    const SdeModel cut = cutoff_drift(model, h, level);
    const double n = static_cast<double>(level);
    std::vector<double> sup_x(setup.paths, -std::numeric_limits<double>::infinity());
    std::vector<double> sup_y(setup.paths, -std::numeric_limits<double>::infinity());
    const auto track = [&h](std::vector<double>& sup) {
        return [&h, &sup](std::size_t p, std::size_t, const Vector& s) { sup[p] = std::max(sup[p], h(s)); };
    };
    const Matrix xs = detail::terminal_sample(cut, x, driver, setup, Stream::start_x, track(sup_x));
    const Matrix ys = detail::terminal_sample(cut, y, driver, setup, Stream::start_y, track(sup_y));

    LocalizedTvEstimate r;
    r.level = level;
    r.localized = detail::estimate_from_samples(xs, ys, &h);
    const auto stats = [n](const std::vector<double>& sup, double& prob, double& mean) {
        std::size_t exits = 0;
        double acc = 0.0;
        for (double s : sup) {
            if (s >= n) ++exits;
            acc += s;
        }
        prob = static_cast<double>(exits) / static_cast<double>(sup.size());
        mean = acc / static_cast<double>(sup.size());
    };
    stats(sup_x, r.exit_prob_x, r.mean_sup_h_x);
    stats(sup_y, r.exit_prob_y, r.mean_sup_h_y);
    r.corrected_bound = r.localized.value + 2.0 * r.exit_prob_x + 2.0 * r.exit_prob_y;
    return r;
}

/// CSV `r,tv,noise_floor,stderr,exit_prob_x,exit_prob_y`; exit columns are 0 for a plain profile.
inline void write_csv(std::ostream& os, const FellerProfile& f) {
    os << "r,tv,noise_floor,stderr,exit_prob_x,exit_prob_y\n";
    os.precision(17);
    for (std::size_t i = 0; i < f.radii.size(); ++i) {
        const auto& e = f.estimates[i];
        os << f.radii[i] << ',' << e.value << ',' << e.noise_floor << ',' << e.std_error << ",0,0\n";
    }
}

inline void write_csv(std::ostream& os, double r, const LocalizedTvEstimate& l) {
    os << "r,tv,noise_floor,stderr,exit_prob_x,exit_prob_y\n";
    os.precision(17);
    os << r << ',' << l.localized.value << ',' << l.localized.noise_floor << ',' << l.localized.std_error << ','
       << l.exit_prob_x << ',' << l.exit_prob_y << '\n';
}

}  // namespace hfl

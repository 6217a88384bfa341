#pragma once

// Path simulation for dX = b(X) dt + A dW_{l_t} conditional on a subordinator
// path, Lyapunov diagnostics, and the H-based drift cutoff used for localization.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "hypofeller/core/errors.hpp"
#include "hypofeller/core/linalg.hpp"
#include "hypofeller/core/parallel.hpp"
#include "hypofeller/core/random.hpp"
#include "hypofeller/core/taylor.hpp"
#include "hypofeller/model.hpp"
#include "hypofeller/subordinators.hpp"

namespace hfl {

struct IntegratorOptions {
    double h_max = 1e-2;  ///< largest drift substep
    /// Adaptive safeguards for stiff or fast-growing drifts: a substep starts at most at
    /// guard_ratio * (1 + |x|_inf) / |b(x)|_inf and is halved until the RK4 stages agree,
    /// dt * max_j |k_j - k_1|_inf <= guard_ratio * (1 + |x|_inf).
    bool stability_guard = true;
    double guard_ratio = 0.25;
    std::size_t max_substeps = 1u << 20;  ///< per grid cell, rejected attempts included
};

/// Uniform substep for a cell of length h: h / ceil(h / h_max).
inline double base_substep(double h, const IntegratorOptions& opt) {
    return h / std::max(1.0, std::ceil(h / opt.h_max - 1e-12));
}

inline double sup_norm(std::span<const double> v) {
    double m = 0.0;
    for (double e : v) m = std::max(m, std::abs(e));
    return m;
}

/// First trial substep from state x with drift bx, at most `remaining`; NaN if bx is not finite.
inline double guarded_substep(std::span<const double> x, std::span<const double> bx, double base, double remaining,
                              const IntegratorOptions& opt) {
    double dt = base;
    if (opt.stability_guard) {
        const double rate = sup_norm(bx), size = 1.0 + sup_norm(x);
        if (!std::isfinite(rate)) return std::numeric_limits<double>::quiet_NaN();
        if (rate * dt > opt.guard_ratio * size) dt = opt.guard_ratio * size / rate;
    }
    // Absorb a trailing sliver into the current step.
    return remaining <= dt * (1.0 + 1e-9) ? remaining : dt;
}

/// Acceptance test for an RK4 step of size dt: the later stages stay near the first.
inline bool stages_agree(std::span<const double> x, std::span<const double> k1, std::span<const double> k2,
                         std::span<const double> k3, std::span<const double> k4, double dt,
                         const IntegratorOptions& opt) {
    if (!opt.stability_guard) return true;
    double spread = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        spread = std::max({spread, std::abs(k2[i] - k1[i]), std::abs(k3[i] - k1[i]), std::abs(k4[i] - k1[i])});
    return std::isfinite(spread) && dt * spread <= opt.guard_ratio * (1.0 + sup_norm(x));
}

/// Classical RK4 for dx/dt = b(x) with preallocated stages.
class DriftStepper {
public:
    explicit DriftStepper(const SdeModel& model)
        : model_(&model), k1_(dim()), k2_(dim()), k3_(dim()), k4_(dim()), tmp_(dim()) {}

    void step(std::span<double> x, double h) {
        model_->drift(x, k1_);
        stages(x, h);
        commit(x, h);
    }

    /// Flow over a cell of length h from x; returns the substeps used, or max_substeps + 1 when the
    /// guard cannot resolve the cell (non-finite drift or too many substeps).
    std::size_t advance(std::span<double> x, double h, const IntegratorOptions& opt) {
        const double base = base_substep(h, opt);
        const std::size_t fail = opt.max_substeps + 1;
        double remaining = h;
        double hint = base;  // grows back by doubling after a rejection
        std::size_t used = 0;
        while (remaining > 0.0) {
            if (used == opt.max_substeps) return fail;
            model_->drift(x, k1_);
            double dt = guarded_substep(x, k1_, std::min(base, hint), remaining, opt);
            if (!std::isfinite(dt) || !(dt > 0.0)) return fail;
            for (;;) {
                stages(x, dt);
                if (stages_agree(x, k1_, k2_, k3_, k4_, dt, opt)) break;
                dt *= 0.5;
                if (++used == opt.max_substeps || !(dt > 0.0)) return fail;
            }
            commit(x, dt);
            remaining = dt == remaining ? 0.0 : remaining - dt;
            hint = 2.0 * dt;
            ++used;
        }
        return used;
    }

private:
    std::size_t dim() const { return static_cast<std::size_t>(model_->dim()); }

    void stages(std::span<const double> x, double h) {
        const std::size_t n = x.size();
        for (std::size_t i = 0; i < n; ++i) tmp_[i] = x[i] + 0.5 * h * k1_[i];
        model_->drift(tmp_, k2_);
        for (std::size_t i = 0; i < n; ++i) tmp_[i] = x[i] + 0.5 * h * k2_[i];
        model_->drift(tmp_, k3_);
        for (std::size_t i = 0; i < n; ++i) tmp_[i] = x[i] + h * k3_[i];
        model_->drift(tmp_, k4_);
    }

    void commit(std::span<double> x, double h) const {
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += h / 6.0 * (k1_[i] + 2.0 * k2_[i] + 2.0 * k3_[i] + k4_[i]);
    }

    const SdeModel* model_;
    std::vector<double> k1_, k2_, k3_, k4_, tmp_;
};

struct Trajectory {
    std::vector<double> grid;
    Matrix states;  ///< d x (N+1); column i is X_{t_i} (after the kick at t_i)
    Matrix noise;   ///< m x N; column i-1 is the Gaussian increment xi_i used on [t_{i-1}, t_i]

    Vector state(std::size_t i) const { return states.col(static_cast<Eigen::Index>(i)); }
    Vector terminal() const { return states.col(states.cols() - 1); }
};

namespace detail {

inline bool all_finite(std::span<const double> x) {
    return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

/// Shared core: drift flow then kick A xi per cell. `on_point(i, x)` sees each grid state.
template <class OnPoint>
void integrate(const SdeModel& model, const Vector& x0, const SubordinatorPath& sub, std::uint64_t seed,
               const IntegratorOptions& opt, Matrix* noise_out, OnPoint&& on_point) {
    if (sub.dim() != model.noise_dim())
        throw ArgumentError("subordinator has " + std::to_string(sub.dim()) + " components but the model has " +
                            std::to_string(model.noise_dim()) + " noise directions");
    if (x0.size() != model.dim()) throw ArgumentError("initial condition has wrong dimension");
    const std::size_t steps = sub.steps();
    auto rng = make_rng(seed);
    std::normal_distribution<double> normal;
    DriftStepper stepper(model);
    Vector x = x0;
    Vector xi(model.noise_dim());
    std::span<double> xs(x.data(), static_cast<std::size_t>(x.size()));
    const Matrix& a = model.noise();
    if (noise_out) noise_out->resize(model.noise_dim(), static_cast<Eigen::Index>(steps));
    on_point(std::size_t{0}, x);
    for (std::size_t i = 1; i <= steps; ++i) {
        const double h = sub.grid[i] - sub.grid[i - 1];
        if (stepper.advance(xs, h, opt) > opt.max_substeps || !all_finite(xs))
            throw ExplosionError("non-finite or unresolvable state during drift step", sub.grid[i]);
        for (Eigen::Index k = 0; k < xi.size(); ++k)
            xi(k) = std::sqrt(sub.increments(static_cast<Eigen::Index>(i - 1), k)) * normal(rng);
        x.noalias() += a * xi;
        if (!all_finite(xs)) throw ExplosionError("non-finite state after noise kick", sub.grid[i]);
        if (noise_out) noise_out->col(static_cast<Eigen::Index>(i - 1)) = xi;
        on_point(i, x);
    }
}

}  // namespace detail

/// Splitting scheme: RK4 drift flow over each cell, then the kick A xi_i with
/// xi_i^k ~ N(0, dl^k_i). Deterministic in (model, x0, sub, seed, opt).
inline Trajectory simulate_path(const SdeModel& model, const Vector& x0, const SubordinatorPath& sub,
                                std::uint64_t seed, const IntegratorOptions& opt = {}) {
    Trajectory traj;
    traj.grid = sub.grid;
    traj.states.resize(model.dim(), static_cast<Eigen::Index>(sub.grid.size()));
    detail::integrate(model, x0, sub, seed, opt, &traj.noise,
                      [&](std::size_t i, const Vector& x) { traj.states.col(static_cast<Eigen::Index>(i)) = x; });
    return traj;
}

/// Terminal state only; `on_point(i, x)` may observe the grid states.
template <class OnPoint>
Vector simulate_terminal(const SdeModel& model, const Vector& x0, const SubordinatorPath& sub, std::uint64_t seed,
                         const IntegratorOptions& opt, OnPoint&& on_point) {
    Vector last;
    detail::integrate(model, x0, sub, seed, opt, nullptr, [&](std::size_t i, const Vector& x) {
        on_point(i, x);
        if (i + 1 == sub.grid.size()) last = x;
    });
    return last;
}

inline Vector simulate_terminal(const SdeModel& model, const Vector& x0, const SubordinatorPath& sub,
                                std::uint64_t seed, const IntegratorOptions& opt = {}) {
    return simulate_terminal(model, x0, sub, seed, opt, [](std::size_t, const Vector&) {});
}

/// CSV `t,x_1,...,x_d`.
inline void write_csv(std::ostream& os, const Trajectory& traj) {
    os << "t";
    for (Eigen::Index i = 0; i < traj.states.rows(); ++i) os << ",x_" << (i + 1);
    os << '\n';
    os.precision(17);
    for (std::size_t c = 0; c < traj.grid.size(); ++c) {
        os << traj.grid[c];
        for (Eigen::Index i = 0; i < traj.states.rows(); ++i) os << ',' << traj.states(i, static_cast<Eigen::Index>(c));
        os << '\n';
    }
}

// ---------------------------------------------------------------------------
// Noise drivers
// ---------------------------------------------------------------------------

/// A subordinator spec, or a deterministic clock for estimator calibration.
using NoiseDriver = std::variant<SubordinatorSpec, DeterministicClock>;

inline std::size_t driver_dim(const NoiseDriver& driver) {
    if (const auto* s = std::get_if<SubordinatorSpec>(&driver)) return s->dim();
    return std::get<DeterministicClock>(driver).rates.size();
}

inline SubordinatorPath driver_path(const NoiseDriver& driver, double horizon, std::size_t steps,
                                    std::uint64_t seed) {
    if (const auto* s = std::get_if<SubordinatorSpec>(&driver)) return sample_path(*s, horizon, steps, seed);
    return std::get<DeterministicClock>(driver).path(horizon, steps);
}

// ---------------------------------------------------------------------------
// Lyapunov conditions
// ---------------------------------------------------------------------------

struct LyapunovReport {
    double kappa1 = 0.0;  ///< max (b . grad H)_+ / H
    double kappa2 = 0.0;  ///< max_k |sum_i d_i H a_ik|^2 / H
    double kappa3 = 0.0;  ///< max_k sum_ij d_i d_j H a_ik a_jk (clamped at 0)
    Vector witness1, witness2, witness3;
    double max_drift_product = -std::numeric_limits<double>::infinity();  ///< max b . grad H (signed)
    bool violated = false;  ///< some ratio unbounded on the sample (H = 0 with positive numerator)
    std::string violation;
    std::size_t points = 0;

    bool finite() const noexcept { return !violated; }
};

inline LyapunovReport check_lyapunov(const SdeModel& model, const LyapunovFunction& h,
                                     const std::vector<Vector>& points) {
    if (points.empty()) throw ArgumentError("check_lyapunov needs at least one point");
    LyapunovReport r;
    r.points = points.size();
    const Matrix& a = model.noise();
    const double inf = std::numeric_limits<double>::infinity();
    // Ratio num / H, infinite when H = 0 carries a positive numerator.
    const auto ratio = [&](double num, double hv, const char* what) {
        if (hv > 0.0) return num / hv;
        if (num <= 0.0) return 0.0;
        if (!r.violated) r.violation = what;
        r.violated = true;
        return inf;
    };
    const auto update = [](double value, const Vector& x, double& kappa, Vector& witness) {
        if (witness.size() == 0 || value > kappa) {
            kappa = std::max(kappa, value);
            witness = x;
        }
    };
    for (const auto& x : points) {
        std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
        const double hv = h.value(xs);
        if (hv < 0.0 || !std::isfinite(hv))
            throw ModelError("Lyapunov function returned a negative or non-finite value");
        const Vector grad = h.gradient(xs);
        const Matrix hess = h.hessian(xs);
        const Vector b = model.drift(x);

        const double bh = b.dot(grad);
        r.max_drift_product = std::max(r.max_drift_product, bh);
        update(ratio(std::max(bh, 0.0), hv, "b . grad H > 0 where H = 0"), x, r.kappa1, r.witness1);
        for (Eigen::Index k = 0; k < a.cols(); ++k) {
            const double g = grad.dot(a.col(k));
            update(ratio(g * g, hv, "|grad H . a_k|^2 > 0 where H = 0"), x, r.kappa2, r.witness2);
            update(std::max(0.0, a.col(k).dot(hess * a.col(k))), x, r.kappa3, r.witness3);
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// Cutoff drift b_n = b * chi_n(H)
// ---------------------------------------------------------------------------

/// Smooth step: 1 for s <= n, 0 for s >= n + 1, built from psi(t) = exp(-1/t).
template <class T>
T smooth_cutoff(const T& s, double n) {
    const double s0 = primal(s);
    if (s0 <= n) return constant_like(s, 1.0);
    if (s0 >= n + 1.0) return constant_like(s, 0.0);
    const T left = exp(-reciprocal((n + 1.0) - s));
    const T right = exp(-reciprocal(s - n));
    return left * reciprocal(left + right);
}

/// d/ds of smooth_cutoff at s.
inline double smooth_cutoff_derivative(double s, double n) {
    const Jet j = smooth_cutoff(Jet::variable(MonomialBasis::get(1, 1), 0, s), n);
    return j.first_partial(0);
}

/// Model with drift b_n(x) = b(x) chi_n(H(x)); jets via product and chain rule.
inline SdeModel cutoff_drift(const SdeModel& model, const LyapunovFunction& h, int level) {
    if (level <= 0) throw ArgumentError("cutoff level must be positive");
    const double n = static_cast<double>(level);
    auto base = std::make_shared<const SdeModel>(model);
    auto lyap = std::make_shared<const LyapunovFunction>(h);
    const std::string name = model.name() + "_cutoff_" + std::to_string(level);

    DriftFn drift = [base, lyap, n](std::span<const double> x, std::span<double> out) {
        const double chi = smooth_cutoff(lyap->value(x), n);
        if (chi == 0.0) {
            std::fill(out.begin(), out.end(), 0.0);
            return;
        }
        base->drift(x, out);
        if (chi != 1.0)
            for (auto& v : out) v *= chi;
    };

    if (!model.exact_jets()) return SdeModel::from_drift(name, model.noise(), std::move(drift), model.jet_order());

    const int order = lyap->jet ? model.jet_order() : std::min(model.jet_order(), 1);
    DriftJetFn jet = [base, lyap, n](std::span<const Jet> x, std::span<Jet> out) {
        Jet hj;
        if (lyap->jet) {
            hj = lyap->jet(x);
        } else {
            // First-order composition from the gradient oracle.
            std::vector<double> x0(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) x0[i] = x[i].value();
            const Vector g = lyap->gradient(x0);
            hj = constant_like(x[0], lyap->value(x0)).truncated(1);
            for (std::size_t i = 0; i < x.size(); ++i) hj += g(static_cast<Eigen::Index>(i)) * (x[i] - x0[i]);
        }
        const Jet chi = smooth_cutoff(hj, n);
        std::vector<Jet> b(x.size(), constant_like(x[0], 0.0));
        base->drift(x, b);
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = b[i] * chi;
    };
    JacobianFn jac = [base, lyap, n](std::span<const double> x, Eigen::Ref<Matrix> out) {
        const double hv = lyap->value(x);
        const double chi = smooth_cutoff(hv, n);
        const double dchi = smooth_cutoff_derivative(hv, n);
        if (chi == 0.0 && dchi == 0.0) {
            out.setZero();
            return;
        }
        base->jacobian_into(x, out);
        out *= chi;
        if (dchi != 0.0) {
            Vector b(static_cast<Eigen::Index>(x.size()));
            base->drift(x, {b.data(), x.size()});
            out.noalias() += dchi * b * lyap->gradient(x).transpose();
        }
    };
    return SdeModel(name, model.noise(), std::move(drift), std::move(jet), order, std::move(jac));
}

// ---------------------------------------------------------------------------
// Exponential moment diagnostic
// ---------------------------------------------------------------------------

struct MomentReport {
    std::size_t paths = 0;
    std::size_t explosions = 0;
    std::string first_explosion;
    double log_mean = 0.0;   ///< log of the Monte Carlo mean of the statistic
    double mean = 0.0;       ///< may be +inf if the statistic overflows
    double std_error = 0.0;  ///< of `mean` (NaN when it overflows)
    double log_ratio = 0.0;  ///< log(mean / exp(H(x0)))
    double ratio = 0.0;
};

/// Monte Carlo estimate of E exp(2 sup_{s<=t} H(X_s) / (e^{kappa1 t}(kappa2 |l_t| + 1))), with the sup
/// taken over grid times, reported relative to exp(H(x0)). Diagnostic only; explosions are counted.
inline MomentReport moment_diagnostic(const SdeModel& model, const LyapunovFunction& h, const LyapunovReport& kappas,
                                      const Vector& x0, const NoiseDriver& driver, double horizon, std::size_t steps,
                                      std::size_t paths, std::uint64_t seed, const IntegratorOptions& opt = {}) {
    if (paths == 0) throw ArgumentError("moment_diagnostic needs at least one path");
    if (!kappas.finite()) throw ArgumentError("moment_diagnostic needs finite Lyapunov constants");
    std::vector<double> log_stat(paths, std::numeric_limits<double>::quiet_NaN());
    std::vector<std::string> failure(paths);
    const double growth = std::exp(kappas.kappa1 * horizon);
    parallel_for(paths, [&](std::size_t p) {
        const auto sub = driver_path(driver, horizon, steps, derive_seed(seed, Stream::subordinator, p));
        double sup_h = 0.0;
        try {
            simulate_terminal(model, x0, sub, derive_seed(seed, Stream::gaussian, p), opt,
                              [&](std::size_t, const Vector& x) { sup_h = std::max(sup_h, h(x)); });
        } catch (const ExplosionError& e) {
            failure[p] = e.what();
            return;
        }
        const double ell = sub.total().norm();
        log_stat[p] = 2.0 * sup_h / (growth * (kappas.kappa2 * ell + 1.0));
    });
    MomentReport r;
    r.paths = paths;
    std::vector<double> ok;
    for (std::size_t p = 0; p < paths; ++p) {
        if (std::isnan(log_stat[p])) {
            if (r.explosions++ == 0) r.first_explosion = failure[p];
        } else {
            ok.push_back(log_stat[p]);
        }
    }
    if (ok.empty()) {
        r.log_mean = r.log_ratio = std::numeric_limits<double>::quiet_NaN();
        r.mean = r.ratio = r.std_error = std::numeric_limits<double>::quiet_NaN();
        return r;
    }
    const double top = *std::max_element(ok.begin(), ok.end());
    double acc = 0.0, acc2 = 0.0;
    for (double v : ok) {
        acc += std::exp(v - top);
        acc2 += std::exp(2.0 * (v - top));
    }
    const double n = static_cast<double>(ok.size());
    r.log_mean = top + std::log(acc / n);
    r.mean = std::exp(r.log_mean);
    const double var_scaled = std::max(0.0, acc2 / n - (acc / n) * (acc / n));
    r.std_error = std::exp(top) * std::sqrt(var_scaled / n);
    r.log_ratio = r.log_mean - h(x0);
    r.ratio = std::exp(r.log_ratio);
    return r;
}

}  // namespace hfl

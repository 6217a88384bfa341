#pragma once

// Jacobian flow J_t, inverse flow K_t along a simulated trajectory, and the
// jump-weighted Malliavin covariance
//   Sigma_t = J_t ( sum_k sum_i K_{t_i} a_k (K_{t_i} a_k)^T dl^k_i ) J_t^T.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <vector>

#include "hypofeller/core/errors.hpp"
#include "hypofeller/core/linalg.hpp"
#include "hypofeller/core/parallel.hpp"
#include "hypofeller/core/random.hpp"
#include "hypofeller/model.hpp"
#include "hypofeller/sde.hpp"
#include "hypofeller/subordinators.hpp"

namespace hfl {

struct FlowOptions {
    double flow_tol = 1e-6;  ///< bound on ||K J - I||_F at every grid point
    /// Flow substeps also satisfy dt * ||grad b(x)||_inf <= jacobian_step_ratio, so the linear RK4
    /// stages stay accurate where the drift is stiff. Trajectory substeps are unaffected.
    double jacobian_step_ratio = 0.02;
    /// Also integrate K' = -J grad b (the inverse-flow equation with J in place of K) for comparison.
    bool literal_inverse_diagnostic = false;
};

struct FlowPair {
    std::vector<double> grid;
    std::vector<Matrix> jacobian;  ///< J_{t_i}
    std::vector<Matrix> inverse;   ///< K_{t_i}
    std::vector<double> defect;    ///< ||K_{t_i} J_{t_i} - I||_F
    std::vector<double> literal_defect;  ///< same for the diagnostic K, when requested

    double max_defect() const { return defect.empty() ? 0.0 : *std::max_element(defect.begin(), defect.end()); }
};

/// RK4 on (X, J, K) with dJ = grad b(X) J ds and dK = -K grad b(X) ds, restarted from the
/// recorded post-kick states; additive noise leaves J and K continuous across kicks.
inline FlowPair integrate_flows(const SdeModel& model, const Trajectory& traj, const IntegratorOptions& iopt = {},
                                const FlowOptions& fopt = {}) {
    const Eigen::Index d = model.dim();
    if (traj.states.rows() != d) throw ArgumentError("trajectory dimension does not match model");
    const std::size_t points = traj.grid.size();
    FlowPair f;
    f.grid = traj.grid;
    f.jacobian.reserve(points);
    f.inverse.reserve(points);
    const Matrix eye = Matrix::Identity(d, d);
    Matrix j = eye, k = eye, lit = eye;
    f.jacobian.push_back(j);
    f.inverse.push_back(k);
    f.defect.push_back(0.0);
    if (fopt.literal_inverse_diagnostic) f.literal_defect.push_back(0.0);

    const auto n = static_cast<std::size_t>(d);
    std::vector<double> x(n), xs(n);
    std::vector<double> k1(n), k2(n), k3(n), k4(n);
    Matrix g1(d, d), g2(d, d), g3(d, d), g4(d, d);
    const auto stage = [&](std::span<const double> at, std::vector<double>& kx, Matrix& g) {
        model.drift(at, kx);
        model.jacobian_into(at, g);
    };

    for (std::size_t i = 1; i < points; ++i) {
        const double h = traj.grid[i] - traj.grid[i - 1];
        for (std::size_t c = 0; c < n; ++c) x[c] = traj.states(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i - 1));
        const double base = base_substep(h, iopt);
        double remaining = h;
        double hint = base;
        std::size_t used = 0;
        while (remaining > 0.0) {
            if (used++ >= iopt.max_substeps) throw ExplosionError("unresolvable drift step in flow integration", traj.grid[i]);
            stage(x, k1, g1);
            const double stiff = g1.cwiseAbs().rowwise().sum().maxCoeff();
            double capped = std::min(base, hint);
            if (stiff * capped > fopt.jacobian_step_ratio) capped = fopt.jacobian_step_ratio / stiff;
            double dt = guarded_substep(x, k1, capped, remaining, iopt);
            if (!std::isfinite(dt) || !(dt > 0.0)) throw ExplosionError("non-finite drift in flow integration", traj.grid[i]);
            for (;;) {
                for (std::size_t c = 0; c < n; ++c) xs[c] = x[c] + 0.5 * dt * k1[c];
                stage(xs, k2, g2);
                for (std::size_t c = 0; c < n; ++c) xs[c] = x[c] + 0.5 * dt * k2[c];
                stage(xs, k3, g3);
                for (std::size_t c = 0; c < n; ++c) xs[c] = x[c] + dt * k3[c];
                stage(xs, k4, g4);
                if (stages_agree(x, k1, k2, k3, k4, dt, iopt)) break;
                dt *= 0.5;
                if (used++ >= iopt.max_substeps) throw ExplosionError("unresolvable drift step in flow integration", traj.grid[i]);
            }
            remaining = dt == remaining ? 0.0 : remaining - dt;
            hint = 2.0 * dt;
            for (std::size_t c = 0; c < n; ++c) x[c] += dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);

            // Linear stages for J and K, driven by the same Jacobians.
            const Matrix j1 = g1 * j;
            const Matrix j2 = g2 * (j + 0.5 * dt * j1);
            const Matrix j3 = g3 * (j + 0.5 * dt * j2);
            const Matrix j4 = g4 * (j + dt * j3);
            const Matrix q1 = -k * g1;
            const Matrix q2 = -(k + 0.5 * dt * q1) * g2;
            const Matrix q3 = -(k + 0.5 * dt * q2) * g3;
            const Matrix q4 = -(k + dt * q3) * g4;
            if (fopt.literal_inverse_diagnostic) {
                // K' = -J grad b uses J at the stage points.
                const Matrix l1 = -j * g1;
                const Matrix l2 = -(j + 0.5 * dt * j1) * g2;
                const Matrix l3 = -(j + 0.5 * dt * j2) * g3;
                const Matrix l4 = -(j + dt * j3) * g4;
                lit += dt / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
            }
            j += dt / 6.0 * (j1 + 2.0 * j2 + 2.0 * j3 + j4);
            k += dt / 6.0 * (q1 + 2.0 * q2 + 2.0 * q3 + q4);
        }
        if (!j.allFinite() || !k.allFinite()) throw ExplosionError("non-finite Jacobian flow", traj.grid[i]);
        const double defect = (k * j - eye).norm();
        if (defect > fopt.flow_tol) throw FlowDivergenceError("inverse-flow defect exceeds tolerance", traj.grid[i], defect);
        f.jacobian.push_back(j);
        f.inverse.push_back(k);
        f.defect.push_back(defect);
        if (fopt.literal_inverse_diagnostic) f.literal_defect.push_back((lit * j - eye).norm());
    }
    return f;
}

struct MalliavinCovariance {
    Matrix sigma;                        ///< symmetrized J (inner) J^T
    Matrix inner;                        ///< sum of the per-component contributions
    std::vector<Matrix> contributions;   ///< sum_i K_{t_i} a_k (K_{t_i} a_k)^T dl^k_i, one per k
    Matrix jacobian;                     ///< J_t used for the conjugation
    Vector eigenvalues;                  ///< ascending

    double lambda_min() const { return eigenvalues.size() ? eigenvalues(0) : 0.0; }
    double lambda_max() const { return eigenvalues.size() ? eigenvalues(eigenvalues.size() - 1) : 0.0; }
    double trace() const { return sigma.trace(); }
};

namespace detail {

inline std::size_t grid_index(const std::vector<double>& grid, double t) {
    const auto it = std::lower_bound(grid.begin(), grid.end(), t - 1e-12 * std::max(1.0, std::abs(t)));
    if (it == grid.end() || std::abs(*it - t) > 1e-9 * std::max(1.0, std::abs(t)))
        throw ArgumentError("horizon is not a grid point");
    return static_cast<std::size_t>(it - grid.begin());
}

inline bool same_grid(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

}  // namespace detail

/// Sigma at horizon t (a grid point). The integral against dl^k is the grid sum with K taken at the
/// kick time t_i, where K is continuous.
inline MalliavinCovariance covariance(const SdeModel& model, const Trajectory& traj, const FlowPair& flows,
                                      const SubordinatorPath& sub, double t) {
    if (!detail::same_grid(traj.grid, flows.grid) || !detail::same_grid(traj.grid, sub.grid))
        throw ArgumentError("trajectory, flows and subordinator path must share one grid");
    if (sub.dim() != model.noise_dim()) throw ArgumentError("subordinator dimension does not match the model");
    const std::size_t last = detail::grid_index(sub.grid, t);
    const Eigen::Index d = model.dim();
    const Matrix& a = model.noise();

    MalliavinCovariance c;
    c.contributions.assign(static_cast<std::size_t>(a.cols()), Matrix::Zero(d, d));
    for (Eigen::Index k = 0; k < a.cols(); ++k) {
        Matrix& acc = c.contributions[static_cast<std::size_t>(k)];
        for (std::size_t i = 1; i <= last; ++i) {
            const double dl = sub.increments(static_cast<Eigen::Index>(i - 1), k);
            if (dl == 0.0) continue;
            const Vector v = flows.inverse[i] * a.col(k);
            acc.noalias() += dl * (v * v.transpose());
        }
    }
    c.inner = Matrix::Zero(d, d);
    for (const auto& m : c.contributions) c.inner += m;
    c.jacobian = flows.jacobian[last];
    const Matrix raw = c.jacobian * c.inner * c.jacobian.transpose();
    c.sigma = 0.5 * (raw + raw.transpose());
    c.eigenvalues = symmetric_eigenvalues(c.sigma);
    return c;
}

struct InvertibilityReport {
    std::vector<double> lambda_min, lambda_max, trace;
    double relative_floor = 1e-12;
    std::size_t invertible = 0;  ///< lambda_min > relative_floor * lambda_max and lambda_max > 0
    std::size_t zero = 0;        ///< Sigma identically zero
    double fraction_invertible = 0.0;
    double min_lambda_min = 0.0;
    std::vector<double> quantiles;  ///< lambda_min at probabilities {0, 0.01, 0.1, 0.5, 0.9, 1}

    static constexpr double probabilities[6] = {0.0, 0.01, 0.1, 0.5, 0.9, 1.0};
};

/// Monte Carlo over independent (subordinator, trajectory, flows, Sigma) tuples.
inline InvertibilityReport invertibility_stats(const SdeModel& model, const Vector& x0, const NoiseDriver& driver,
                                               double horizon, std::size_t steps, std::size_t paths,
                                               std::uint64_t seed, const IntegratorOptions& iopt = {},
                                               const FlowOptions& fopt = {}, double relative_floor = 1e-12) {
    if (paths == 0) throw ArgumentError("invertibility_stats needs at least one path");
    InvertibilityReport r;
    r.relative_floor = relative_floor;
    r.lambda_min.resize(paths);
    r.lambda_max.resize(paths);
    r.trace.resize(paths);
    std::vector<char> is_zero(paths, 0);
    parallel_for(paths, [&](std::size_t p) {
        const auto sub = driver_path(driver, horizon, steps, derive_seed(seed, Stream::subordinator, p));
        const auto traj = simulate_path(model, x0, sub, derive_seed(seed, Stream::gaussian, p), iopt);
        const auto flows = integrate_flows(model, traj, iopt, fopt);
        const auto cov = covariance(model, traj, flows, sub, horizon);
        r.lambda_min[p] = cov.lambda_min();
        r.lambda_max[p] = cov.lambda_max();
        r.trace[p] = cov.trace();
        is_zero[p] = cov.sigma.isZero(0.0) ? 1 : 0;
    });
    for (std::size_t p = 0; p < paths; ++p) {
        if (is_zero[p]) ++r.zero;
        if (r.lambda_max[p] > 0.0 && r.lambda_min[p] > relative_floor * r.lambda_max[p]) ++r.invertible;
    }
    r.fraction_invertible = static_cast<double>(r.invertible) / static_cast<double>(paths);
    std::vector<double> sorted = r.lambda_min;
    std::sort(sorted.begin(), sorted.end());
    r.min_lambda_min = sorted.front();
    for (double p : InvertibilityReport::probabilities) {
        const auto idx = static_cast<std::size_t>(std::round(p * static_cast<double>(paths - 1)));
        r.quantiles.push_back(sorted[idx]);
    }
    return r;
}

/// CSV `path_id,lambda_min,lambda_max,trace`.
inline void write_csv(std::ostream& os, const InvertibilityReport& r) {
    os << "path_id,lambda_min,lambda_max,trace\n";
    os.precision(17);
    for (std::size_t p = 0; p < r.lambda_min.size(); ++p)
        os << p << ',' << r.lambda_min[p] << ',' << r.lambda_max[p] << ',' << r.trace[p] << '\n';
}

}  // namespace hfl

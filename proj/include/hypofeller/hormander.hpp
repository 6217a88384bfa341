#pragma once

// Matrix bracket chain B_1 = grad b, B_n = (b . grad) B_{n-1} - (grad b) B_{n-1},
// and the numerical rank test Rank[A, B_1 A, ..., B_n A] = d.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hypofeller/core/errors.hpp"
#include "hypofeller/core/linalg.hpp"
#include "hypofeller/core/parallel.hpp"
#include "hypofeller/core/random.hpp"
#include "hypofeller/core/taylor.hpp"
#include "hypofeller/model.hpp"

namespace hfl {

/// [B_1(x), ..., B_n(x)] from a single order-n jet of the drift at x.
inline std::vector<Matrix> bracket_matrices(const SdeModel& model, const Vector& x, int n) {
    if (n < 0) throw ArgumentError("bracket order must be nonnegative");
    if (x.size() != model.dim()) throw ArgumentError("point has wrong dimension");
    std::vector<Matrix> out;
    if (n == 0) return out;
    if (n > model.jet_order())
        throw CapabilityError("B_" + std::to_string(n) + " needs derivatives of the drift up to order " +
                                  std::to_string(n) + " but model '" + model.name() + "' supports " +
                                  std::to_string(model.jet_order()),
                              n);
    const auto d = static_cast<std::size_t>(model.dim());
    const auto b = model.taylor({x.data(), d}, n);

    using JetMatrix = std::vector<std::vector<Jet>>;
    JetMatrix grad(d, std::vector<Jet>(d));
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) grad[i][j] = b[i].derivative(static_cast<int>(j));

    const auto values = [d](const JetMatrix& m) {
        Matrix v(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) v(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m[i][j].value();
        return v;
    };

    JetMatrix current = grad;
    out.push_back(values(current));
    for (int k = 2; k <= n; ++k) {
        JetMatrix next(d, std::vector<Jet>(d));
        const int order = current[0][0].order() - 1;
        // Directional derivative along b of every entry, then subtract grad b . B_{k-1}.
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                Jet acc = constant_like(current[i][j], 0.0).truncated(order);
                for (std::size_t l = 0; l < d; ++l) acc += b[l] * current[i][j].derivative(static_cast<int>(l));
                for (std::size_t l = 0; l < d; ++l) acc -= grad[i][l] * current[l][j];
                next[i][j] = acc.truncated(order);
            }
        current = std::move(next);
        out.push_back(values(current));
    }
    return out;
}

struct RankReport {
    Vector point;
    std::vector<Matrix> blocks;             ///< B_k A for k = 1..(last order computed)
    std::vector<Vector> singular_values;    ///< spectrum of [A | B_1 A | ... | B_n A] for n = 0, 1, ...
    std::vector<Eigen::Index> ranks;        ///< numerical rank per order
    std::vector<double> tolerances;         ///< threshold used per order
    std::optional<int> minimal_order;       ///< smallest n reaching rank d, if any <= n_max
    int n_max = 0;
    bool rank_monotone = true;              ///< appending blocks never lowered the numerical rank

    /// sigma_d / sigma_1 at the last computed order (0 if fewer than d singular values).
    double conditioning(Eigen::Index d) const {
        const auto& s = singular_values.back();
        if (s.size() < d || s(0) == 0.0) return 0.0;
        return s(d - 1) / s(0);
    }
    double sigma_min(Eigen::Index d) const {
        const auto& s = singular_values.back();
        return s.size() >= d ? s(d - 1) : 0.0;
    }
    double sigma_max() const {
        const auto& s = singular_values.back();
        return s.size() > 0 ? s(0) : 0.0;
    }
};

/// Checks the rank condition for n = 0, 1, ..., n_max and stops at the first success.
inline RankReport rank_check(const SdeModel& model, const Vector& x, int n_max,
                             const TolerancePolicy& policy = relative_tolerance()) {
    if (n_max < 0) throw ArgumentError("n_max must be nonnegative");
    RankReport r;
    r.point = x;
    r.n_max = n_max;
    const Eigen::Index d = model.dim();
    const Matrix& a = model.noise();
    for (int n = 0; n <= n_max; ++n) {
        if (n > 0) {
            const auto bs = bracket_matrices(model, x, n);
            r.blocks.push_back(bs.back() * a);
        }
        Matrix m(d, a.cols() * (n + 1));
        m.leftCols(a.cols()) = a;
        for (int k = 0; k < n; ++k) m.middleCols(a.cols() * (k + 1), a.cols()) = r.blocks[static_cast<std::size_t>(k)];
        const auto nr = numerical_rank(m, policy);
        if (!r.ranks.empty() && nr.rank < r.ranks.back()) r.rank_monotone = false;
        r.singular_values.push_back(nr.singular_values);
        r.ranks.push_back(nr.rank);
        r.tolerances.push_back(nr.tolerance);
        if (nr.rank == d) {
            r.minimal_order = n;
            break;
        }
    }
    return r;
}

using PointSampler = std::function<Vector(Rng&)>;

/// Independent normal coordinates with the given mean and standard deviation.
inline PointSampler gaussian_sampler(Vector center, double scale) {
    return [center = std::move(center), scale](Rng& rng) {
        std::normal_distribution<double> normal;
        Vector x(center.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = center(i) + scale * normal(rng);
        return x;
    };
}

struct RankScanReport {
    std::vector<RankReport> points;
    std::map<int, std::size_t> order_histogram;  ///< minimal_order -> count
    std::size_t failures = 0;
    double worst_conditioning = 1.0;  ///< min sigma_d / sigma_1 over points
    bool verified = false;            ///< every point attained rank d (evidence, not proof)
};

inline RankScanReport rank_scan(const SdeModel& model, const PointSampler& sampler, std::size_t count, int n_max,
                                std::uint64_t seed, const TolerancePolicy& policy = relative_tolerance()) {
    if (count == 0) throw ArgumentError("rank_scan needs at least one point");
    RankScanReport s;
    s.points.resize(count);
    parallel_for(count, [&](std::size_t i) {
        auto rng = make_rng(derive_seed(seed, Stream::point, i));
        s.points[i] = rank_check(model, sampler(rng), n_max, policy);
    });
    for (const auto& r : s.points) {
        if (r.minimal_order)
            ++s.order_histogram[*r.minimal_order];
        else
            ++s.failures;
        s.worst_conditioning = std::min(s.worst_conditioning, r.conditioning(model.dim()));
    }
    s.verified = s.failures == 0;
    return s;
}

/// CSV `x_1..x_d,minimal_order,sigma_min,sigma_max,verdict`.
inline void write_csv(std::ostream& os, const RankScanReport& scan, Eigen::Index d) {
    for (Eigen::Index i = 0; i < d; ++i) os << "x_" << (i + 1) << ',';
    os << "minimal_order,sigma_min,sigma_max,verdict\n";
    os.precision(17);
    for (const auto& r : scan.points) {
        for (Eigen::Index i = 0; i < d; ++i) os << r.point(i) << ',';
        if (r.minimal_order)
            os << *r.minimal_order;
        else
            os << "NA";
        os << ',' << r.sigma_min(d) << ',' << r.sigma_max() << ',' << (r.minimal_order ? "pass" : "fail") << '\n';
    }
}

}  // namespace hfl

#pragma once

// SDE models dX = b(X) dt + A dW_{S_t}: drift oracle with derivative jets,
// constant noise matrix, and Lyapunov functions.

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hypofeller/core/errors.hpp"
#include "hypofeller/core/linalg.hpp"
#include "hypofeller/core/random.hpp"
#include "hypofeller/core/taylor.hpp"

namespace hfl {

using DriftFn = std::function<void(std::span<const double>, std::span<double>)>;
using DriftJetFn = std::function<void(std::span<const Jet>, std::span<Jet>)>;
using JacobianFn = std::function<void(std::span<const double>, Eigen::Ref<Matrix>)>;

/// Jet order reported by models whose jets are exact to any order.
inline constexpr int kUnboundedOrder = std::numeric_limits<int>::max();

/// Highest order at which the finite-difference fallback is considered usable.
inline constexpr int kFiniteDifferenceMaxOrder = 3;

class SdeModel {
public:
    SdeModel() = default;

    /// Model with exact jets; `jacobian` is an optional fast path and must agree with the jets.
    SdeModel(std::string name, Matrix noise, DriftFn drift, DriftJetFn drift_jet, int jet_order,
             JacobianFn jacobian = {})
        : name_(std::move(name)),
          noise_(std::move(noise)),
          drift_(std::move(drift)),
          drift_jet_(std::move(drift_jet)),
          jacobian_(std::move(jacobian)),
          jet_order_(jet_order) {
        validate();
    }

    /// Model from a double-only drift; derivatives come from nested central differences.
    static SdeModel from_drift(std::string name, Matrix noise, DriftFn drift,
                               int declared_order = kFiniteDifferenceMaxOrder) {
        if (declared_order < 1) throw ArgumentError("declared derivative order must be >= 1");
        SdeModel m;
        m.name_ = std::move(name);
        m.noise_ = std::move(noise);
        m.drift_ = std::move(drift);
        m.jet_order_ = declared_order;
        m.validate();
        return m;
    }

    /// Builds both oracles from one generic functor `f(span<const T> x, span<T> out)`.
    template <class Field>
    static SdeModel from_field(std::string name, Matrix noise, Field field, JacobianFn jacobian = {}) {
        auto shared = std::make_shared<const Field>(std::move(field));
        DriftFn drift = [shared](std::span<const double> x, std::span<double> out) { (*shared)(x, out); };
        DriftJetFn jet = [shared](std::span<const Jet> x, std::span<Jet> out) { (*shared)(x, out); };
        return SdeModel(std::move(name), std::move(noise), std::move(drift), std::move(jet), kUnboundedOrder,
                        std::move(jacobian));
    }

    const std::string& name() const noexcept { return name_; }
    int dim() const noexcept { return static_cast<int>(noise_.rows()); }
    int noise_dim() const noexcept { return static_cast<int>(noise_.cols()); }
    const Matrix& noise() const noexcept { return noise_; }
    int jet_order() const noexcept { return jet_order_; }
    bool exact_jets() const noexcept { return static_cast<bool>(drift_jet_); }

    void drift(std::span<const double> x, std::span<double> out) const { drift_(x, out); }

    Vector drift(const Vector& x) const {
        Vector out(x.size());
        drift_({x.data(), static_cast<std::size_t>(x.size())}, {out.data(), static_cast<std::size_t>(out.size())});
        return out;
    }

    /// b composed with arbitrary input jets; needs exact jets.
    void drift(std::span<const Jet> x, std::span<Jet> out) const {
        if (!drift_jet_) throw CapabilityError("model '" + name_ + "' has no exact jet oracle", x[0].order());
        if (x[0].order() > jet_order_)
            throw CapabilityError("model '" + name_ + "' jet order too low", x[0].order());
        drift_jet_(x, out);
    }

    /// Taylor expansion of b at x to the given order (one jet per component).
    std::vector<Jet> taylor(std::span<const double> x, int order) const {
        if (order > jet_order_)
            throw CapabilityError("model '" + name_ + "' supports derivative jets only up to order " +
                                      std::to_string(jet_order_),
                                  order);
        if (drift_jet_) {
            const auto in = Jet::identity(x, order);
            std::vector<Jet> out(x.size(), Jet::constant(in[0].basis_ptr(), 0.0));
            drift_jet_(in, out);
            return out;
        }
        return finite_difference_taylor(x, order);
    }

    /// Jacobian (d b_i / d x_j).
    Matrix jacobian(std::span<const double> x) const {
        Matrix jac(dim(), dim());
        jacobian_into(x, jac);
        return jac;
    }

    void jacobian_into(std::span<const double> x, Eigen::Ref<Matrix> jac) const {
        if (jacobian_) {
            jacobian_(x, jac);
            return;
        }
        const auto jets = taylor(x, 1);
        for (int i = 0; i < dim(); ++i)
            for (int j = 0; j < dim(); ++j) jac(i, j) = jets[static_cast<std::size_t>(i)].first_partial(j);
    }

    /// Jacobian via jets only (ignores the fast path); used to cross-check it.
    Matrix jet_jacobian(std::span<const double> x) const {
        const auto jets = taylor(x, 1);
        Matrix jac(dim(), dim());
        for (int i = 0; i < dim(); ++i)
            for (int j = 0; j < dim(); ++j) jac(i, j) = jets[static_cast<std::size_t>(i)].first_partial(j);
        return jac;
    }

    /// Same model with a different noise matrix (same state dimension).
    SdeModel with_noise(Matrix noise) const {
        SdeModel m = *this;
        m.noise_ = std::move(noise);
        m.validate();
        return m;
    }

private:
    void validate() const {
        if (noise_.rows() < 1 || noise_.cols() < 1) throw ArgumentError("noise matrix must be non-empty");
        if (!noise_.allFinite()) throw ArgumentError("noise matrix has non-finite entries");
        if (!drift_) throw ArgumentError("model needs a drift");
    }

    std::vector<Jet> finite_difference_taylor(std::span<const double> x, int order) const {
        const int n = dim();
        auto basis = MonomialBasis::get(n, order);
        std::vector<std::vector<double>> coef(static_cast<std::size_t>(n),
                                              std::vector<double>(basis->count_up_to(order), 0.0));
        std::vector<double> point(x.begin(), x.end());
        std::vector<int> alpha(static_cast<std::size_t>(n));
        for (std::size_t idx = 0; idx < basis->count_up_to(order); ++idx) {
            const auto e = basis->exponents(idx);
            for (int v = 0; v < n; ++v) alpha[static_cast<std::size_t>(v)] = e[static_cast<std::size_t>(v)];
            const int q = basis->degree(idx);
            const double h = std::pow(std::numeric_limits<double>::epsilon(), 1.0 / (q + 2));
            const auto d = nested_difference(point, alpha, h);
            for (int i = 0; i < n; ++i)
                coef[static_cast<std::size_t>(i)][idx] = d[static_cast<std::size_t>(i)] / basis->factorial(idx);
        }
        std::vector<Jet> out;
        out.reserve(static_cast<std::size_t>(n));
        for (const auto& c : coef) out.push_back(Jet::from_coefficients(basis, c, order));
        return out;
    }

    // d^alpha b(x) by central differences applied one index at a time.
    std::vector<double> nested_difference(std::vector<double>& x, std::vector<int>& alpha, double h) const {
        for (std::size_t v = 0; v < alpha.size(); ++v) {
            if (alpha[v] == 0) continue;
            alpha[v] -= 1;
            const double scale = h * std::max(1.0, std::abs(x[v]));
            const double saved = x[v];
            x[v] = saved + scale;
            auto plus = nested_difference(x, alpha, h);
            x[v] = saved - scale;
            auto minus = nested_difference(x, alpha, h);
            x[v] = saved;
            alpha[v] += 1;
            for (std::size_t i = 0; i < plus.size(); ++i) plus[i] = (plus[i] - minus[i]) / (2.0 * scale);
            return plus;
        }
        std::vector<double> out(x.size());
        drift_(x, out);
        return out;
    }

    std::string name_;
    Matrix noise_;
    DriftFn drift_;
    DriftJetFn drift_jet_;
    JacobianFn jacobian_;
    int jet_order_ = 0;
};

/// Result of comparing the order-1 jet with a central-difference Jacobian.
struct JetConsistency {
    double max_relative_error = 0.0;
    bool pass = false;
};

inline Matrix central_difference_jacobian(const SdeModel& model, std::span<const double> x, double h = 1e-6) {
    const int n = model.dim();
    Matrix jac(n, n);
    std::vector<double> p(x.begin(), x.end()), fp(static_cast<std::size_t>(n)), fm(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        const double s = h * std::max(1.0, std::abs(x[static_cast<std::size_t>(j)]));
        p[static_cast<std::size_t>(j)] = x[static_cast<std::size_t>(j)] + s;
        model.drift(p, fp);
        p[static_cast<std::size_t>(j)] = x[static_cast<std::size_t>(j)] - s;
        model.drift(p, fm);
        p[static_cast<std::size_t>(j)] = x[static_cast<std::size_t>(j)];
        for (int i = 0; i < n; ++i)
            jac(i, j) = (fp[static_cast<std::size_t>(i)] - fm[static_cast<std::size_t>(i)]) / (2.0 * s);
    }
    return jac;
}

/// Order-1 jets vs central differences at the given points, relative to max(1, |J|).
inline JetConsistency check_jet_consistency(const SdeModel& model, const std::vector<Vector>& points,
                                            double rel_tol = 1e-5) {
    JetConsistency r;
    for (const auto& x : points) {
        std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
        const Matrix jet = model.jet_jacobian(xs);
        const Matrix fd = central_difference_jacobian(model, xs);
        const double err = (jet - fd).norm() / std::max(1.0, fd.norm());
        r.max_relative_error = std::max(r.max_relative_error, err);
    }
    r.pass = r.max_relative_error <= rel_tol;
    return r;
}

/// Coercive H >= 0 with gradient and Hessian oracles; `jet` (optional) gives exact Taylor jets.
struct LyapunovFunction {
    std::string name;
    std::function<double(std::span<const double>)> value;
    std::function<Vector(std::span<const double>)> gradient;
    std::function<Matrix(std::span<const double>)> hessian;
    std::function<Jet(std::span<const Jet>)> jet;

    double operator()(const Vector& x) const { return value({x.data(), static_cast<std::size_t>(x.size())}); }
};

/// H(x) = |x|^2 + 1.
inline LyapunovFunction squared_norm_lyapunov() {
    LyapunovFunction h;
    h.name = "squared_norm_plus_one";
    h.value = [](std::span<const double> x) {
        double s = 1.0;
        for (double v : x) s += v * v;
        return s;
    };
    h.gradient = [](std::span<const double> x) {
        Vector g(static_cast<Eigen::Index>(x.size()));
        for (std::size_t i = 0; i < x.size(); ++i) g(static_cast<Eigen::Index>(i)) = 2.0 * x[i];
        return g;
    };
    h.hessian = [](std::span<const double> x) {
        const auto n = static_cast<Eigen::Index>(x.size());
        return Matrix(2.0 * Matrix::Identity(n, n));
    };
    h.jet = [](std::span<const Jet> x) {
        Jet s = constant_like(x[0], 1.0);
        for (const auto& v : x) s += v * v;
        return s;
    };
    return h;
}

struct RadialGrowthReport {
    bool nonnegative = true;
    bool growing = true;       ///< H at the outermost radius exceeds H at the innermost one on every ray
    double min_outer_value = std::numeric_limits<double>::infinity();
};

/// Sanity diagnostic for coercivity on random rays; evidence, not proof.
inline RadialGrowthReport radial_growth_check(const LyapunovFunction& h, int dim, std::size_t rays,
                                              const std::vector<double>& radii, std::uint64_t seed) {
    RadialGrowthReport r;
    auto rng = make_rng(seed);
    std::normal_distribution<double> normal;
    for (std::size_t k = 0; k < rays; ++k) {
        Vector dir(dim);
        for (int i = 0; i < dim; ++i) dir(i) = normal(rng);
        dir.normalize();
        double first = 0.0, last = 0.0;
        for (std::size_t j = 0; j < radii.size(); ++j) {
            const double v = h(Vector(radii[j] * dir));
            if (v < 0.0) r.nonnegative = false;
            if (j == 0) first = v;
            last = v;
        }
        if (!(last > first)) r.growing = false;
        r.min_outer_value = std::min(r.min_outer_value, last);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Built-in drifts
// ---------------------------------------------------------------------------

namespace detail {

struct LinearField {
    Matrix b;
    template <class T>
    void operator()(std::span<const T> x, std::span<T> out) const {
        for (Eigen::Index i = 0; i < b.rows(); ++i) {
            T acc = constant_like(x[0], 0.0);
            for (Eigen::Index j = 0; j < b.cols(); ++j)
                if (b(i, j) != 0.0) acc += b(i, j) * x[static_cast<std::size_t>(j)];
            out[static_cast<std::size_t>(i)] = acc;
        }
    }
};

struct ConstantField {
    Vector c;
    template <class T>
    void operator()(std::span<const T> x, std::span<T> out) const {
        for (Eigen::Index i = 0; i < c.size(); ++i) out[static_cast<std::size_t>(i)] = constant_like(x[0], c(i));
    }
};

}  // namespace detail

/// b(x) = B x.
inline SdeModel linear_model(const Matrix& drift_matrix, Matrix noise) {
    if (drift_matrix.rows() != drift_matrix.cols() || drift_matrix.rows() != noise.rows())
        throw ArgumentError("linear drift matrix must be d x d with d = rows of the noise matrix");
    JacobianFn jac = [b = drift_matrix](std::span<const double>, Eigen::Ref<Matrix> out) { out = b; };
    return SdeModel::from_field("linear", std::move(noise), detail::LinearField{drift_matrix}, std::move(jac));
}

/// b(x) = c (constant, possibly zero).
inline SdeModel constant_model(const Vector& c, Matrix noise) {
    if (c.size() != noise.rows()) throw ArgumentError("constant drift has wrong dimension");
    JacobianFn jac = [](std::span<const double>, Eigen::Ref<Matrix> out) { out.setZero(); };
    return SdeModel::from_field(c.isZero(0.0) ? "zero" : "constant", std::move(noise), detail::ConstantField{c}, std::move(jac));
}

inline SdeModel zero_drift_model(Matrix noise) {
    const auto d = noise.rows();
    return constant_model(Vector::Zero(d), std::move(noise));
}

/// One term coefficient * prod_j x_j^powers[j] of drift component `component`.
struct PolynomialTerm {
    int component = 0;
    double coefficient = 0.0;
    std::vector<int> powers;
};

namespace detail {

struct PolynomialField {
    std::vector<PolynomialTerm> terms;
    template <class T>
    void operator()(std::span<const T> x, std::span<T> out) const {
        for (auto& o : out) o = constant_like(x[0], 0.0);
        for (const auto& t : terms) {
            T mono = constant_like(x[0], t.coefficient);
            for (std::size_t j = 0; j < t.powers.size(); ++j)
                for (int p = 0; p < t.powers[j]; ++p) mono = mono * x[j];
            out[static_cast<std::size_t>(t.component)] += mono;
        }
    }
};

}  // namespace detail

/// Polynomial vector field given as a list of monomial terms.
inline SdeModel polynomial_model(std::vector<PolynomialTerm> terms, Matrix noise) {
    const auto d = static_cast<int>(noise.rows());
    for (const auto& t : terms) {
        if (t.component < 0 || t.component >= d) throw ArgumentError("polynomial term targets a missing component");
        if (static_cast<int>(t.powers.size()) != d) throw ArgumentError("polynomial term powers must have length d");
        for (int p : t.powers)
            if (p < 0) throw ArgumentError("polynomial powers must be nonnegative");
    }
    return SdeModel::from_field("polynomial", std::move(noise), detail::PolynomialField{std::move(terms)});
}

}  // namespace hfl

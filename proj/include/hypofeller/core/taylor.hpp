#pragma once

// Truncated multivariate Taylor polynomials ("jets").
//
// A Jet over n variables with order q stores the coefficients c_alpha of
//   f(x0 + h) = sum_{|alpha| <= q} c_alpha h^alpha + O(|h|^{q+1}),
// so the mixed partial d^alpha f(x0) equals alpha! * c_alpha. Arithmetic on
// jets is exact up to the truncation order, which is what the bracket
// recursions need: derivatives are propagated, never differenced.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <utility>
#include <vector>

#include "hypofeller/core/errors.hpp"

namespace hfl {

/// Monomials of degree <= order in `vars` variables, in graded order, with the
/// precomputed product and differentiation tables shared by every Jet on it.
class MonomialBasis {
public:
    struct Product {
        std::uint32_t j;
        std::uint32_t k;
    };
    struct Shift {
        std::uint32_t src;
        std::uint32_t dst;
        double factor;
    };

    static std::shared_ptr<const MonomialBasis> get(int vars, int order) {
        thread_local std::shared_ptr<const MonomialBasis> last;
        if (last && last->vars_ == vars && last->order_ == order) return last;
        last = get_shared(vars, order);
        return last;
    }

    int vars() const noexcept { return vars_; }
    int order() const noexcept { return order_; }
    std::size_t size() const noexcept { return degree_.size(); }

    /// Number of monomials with degree <= q (they form a prefix).
    std::size_t count_up_to(int q) const noexcept {
        if (q < 0) return 0;
        return prefix_[static_cast<std::size_t>(std::min(q, order_))];
    }

    int degree(std::size_t i) const noexcept { return degree_[i]; }

    std::span<const std::uint8_t> exponents(std::size_t i) const noexcept {
        return {exponents_.data() + i * static_cast<std::size_t>(vars_),
                static_cast<std::size_t>(vars_)};
    }

    /// Index of the monomial with exponent vector `alpha`; throws if out of range.
    std::size_t index_of(std::span<const int> alpha) const {
        if (static_cast<int>(alpha.size()) != vars_) throw ArgumentError("multi-index has wrong length");
        std::uint64_t key = 0;
        int deg = 0;
        for (int a : alpha) {
            if (a < 0) throw ArgumentError("negative multi-index entry");
            deg += a;
            key = key * static_cast<std::uint64_t>(order_ + 1) + static_cast<std::uint64_t>(std::min(a, order_));
        }
        if (deg > order_) throw ArgumentError("multi-index degree exceeds basis order");
        return lookup_.at(key);
    }

    /// alpha! for monomial i.
    double factorial(std::size_t i) const noexcept { return factorial_[i]; }

    /// Pairs (j, k) with x^i * x^j = x^k and deg(k) <= order, sorted by j.
    std::span<const Product> products(std::size_t i) const noexcept {
        return {products_.data() + product_offset_[i], product_offset_[i + 1] - product_offset_[i]};
    }

    /// d/dx_var maps c_src x^src to factor * c_src x^dst.
    std::span<const Shift> derivative(int var) const noexcept { return derivative_[static_cast<std::size_t>(var)]; }

private:
    static std::shared_ptr<const MonomialBasis> get_shared(int vars, int order) {
        static std::mutex mutex;
        static std::map<std::pair<int, int>, std::shared_ptr<const MonomialBasis>> cache;
        std::lock_guard lock(mutex);
        auto& slot = cache[{vars, order}];
        if (!slot) slot = std::shared_ptr<const MonomialBasis>(new MonomialBasis(vars, order));
        return slot;
    }

    MonomialBasis(int vars, int order) : vars_(vars), order_(order) {
        if (vars < 1 || order < 0) throw ArgumentError("jet basis needs vars >= 1 and order >= 0");
        if (static_cast<double>(vars) * std::log2(static_cast<double>(order) + 1.0) > 63.0)
            throw ArgumentError("jet basis too large for index encoding");
        const auto n = static_cast<std::size_t>(vars);

        std::vector<int> alpha(n, 0);
        for (int q = 0; q <= order; ++q) {
            enumerate(alpha, 0, q);
            prefix_.push_back(degree_.size());
        }

        std::vector<int> tmp(n);
        const std::size_t count = size();
        product_offset_.reserve(count + 1);
        product_offset_.push_back(0);
        for (std::size_t i = 0; i < count; ++i) {
            const auto ei = exponents(i);
            const std::size_t limit = count_up_to(order - degree_[i]);
            for (std::size_t j = 0; j < limit; ++j) {
                const auto ej = exponents(j);
                for (std::size_t v = 0; v < n; ++v) tmp[v] = ei[v] + ej[v];
                products_.push_back({static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(index_of(tmp))});
            }
            product_offset_.push_back(products_.size());
        }

        derivative_.resize(n);
        for (std::size_t v = 0; v < n; ++v) {
            for (std::size_t i = 0; i < count; ++i) {
                const auto ei = exponents(i);
                if (ei[v] == 0) continue;
                for (std::size_t w = 0; w < n; ++w) tmp[w] = ei[w];
                tmp[v] -= 1;
                derivative_[v].push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(index_of(tmp)),
                                          static_cast<double>(ei[v])});
            }
        }
    }

    void enumerate(std::vector<int>& alpha, std::size_t pos, int remaining) {
        if (pos + 1 == alpha.size()) {
            alpha[pos] = remaining;
            record(alpha);
            alpha[pos] = 0;
            return;
        }
        for (int a = remaining; a >= 0; --a) {
            alpha[pos] = a;
            enumerate(alpha, pos + 1, remaining - a);
        }
        alpha[pos] = 0;
    }

    void record(const std::vector<int>& alpha) {
        std::uint64_t key = 0;
        int deg = 0;
        double fact = 1.0;
        for (int a : alpha) {
            key = key * static_cast<std::uint64_t>(order_ + 1) + static_cast<std::uint64_t>(a);
            deg += a;
            for (int f = 2; f <= a; ++f) fact *= f;
            exponents_.push_back(static_cast<std::uint8_t>(a));
        }
        lookup_.emplace(key, degree_.size());
        degree_.push_back(deg);
        factorial_.push_back(fact);
    }

    int vars_;
    int order_;
    std::vector<std::uint8_t> exponents_;
    std::vector<int> degree_;
    std::vector<double> factorial_;
    std::vector<std::size_t> prefix_;
    std::map<std::uint64_t, std::size_t> lookup_;
    std::vector<Product> products_;
    std::vector<std::size_t> product_offset_;
    std::vector<std::vector<Shift>> derivative_;
};

using BasisPtr = std::shared_ptr<const MonomialBasis>;

class Jet {
public:
    Jet() = default;

    static Jet constant(BasisPtr basis, double value, int order = -1) {
        Jet j(std::move(basis), order);
        j.c_[0] = value;
        return j;
    }

    /// The coordinate function x_var expanded at x0[var] = at.
    static Jet variable(BasisPtr basis, int var, double at) {
        Jet j(std::move(basis), -1);
        j.c_[0] = at;
        if (j.order_ >= 1) {
            std::vector<int> alpha(static_cast<std::size_t>(j.basis_->vars()), 0);
            alpha[static_cast<std::size_t>(var)] = 1;
            j.c_[j.basis_->index_of(alpha)] = 1.0;
        }
        return j;
    }

    /// Jet with the given raw coefficients (indexed as in the basis).
    static Jet from_coefficients(BasisPtr basis, std::span<const double> coefficients, int order = -1) {
        Jet j(std::move(basis), order);
        const std::size_t n = std::min(coefficients.size(), j.basis_->count_up_to(j.order_));
        std::copy_n(coefficients.begin(), n, j.c_.begin());
        return j;
    }

    /// Coordinates of the point `x` as jets of the given order (the identity map).
    static std::vector<Jet> identity(std::span<const double> x, int order) {
        auto basis = MonomialBasis::get(static_cast<int>(x.size()), order);
        std::vector<Jet> out;
        out.reserve(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) out.push_back(variable(basis, static_cast<int>(i), x[i]));
        return out;
    }

    bool empty() const noexcept { return !basis_; }
    const BasisPtr& basis_ptr() const noexcept { return basis_; }
    const MonomialBasis& basis() const noexcept { return *basis_; }
    int order() const noexcept { return order_; }
    double value() const noexcept { return c_[0]; }
    std::span<const double> coefficients() const noexcept { return c_; }
    double coefficient(std::size_t i) const noexcept { return c_[i]; }

    /// Mixed partial d^alpha f(x0); zero beyond the jet's order.
    double partial(std::span<const int> alpha) const {
        int deg = 0;
        for (int a : alpha) deg += a;
        if (deg > order_) throw CapabilityError("partial derivative beyond jet order", deg);
        const std::size_t i = basis_->index_of(alpha);
        return basis_->factorial(i) * c_[i];
    }

    /// First partial d f / d x_var at the expansion point.
    double first_partial(int var) const {
        std::vector<int> alpha(static_cast<std::size_t>(basis_->vars()), 0);
        alpha[static_cast<std::size_t>(var)] = 1;
        return partial(alpha);
    }

    Jet truncated(int order) const {
        Jet out = *this;
        out.order_ = std::min(order_, order);
        out.zero_above_order();
        return out;
    }

    /// d/dx_var, one order lower.
    Jet derivative(int var) const {
        Jet out(basis_, order_ - 1);
        if (order_ < 1) throw CapabilityError("derivative of an order-0 jet", 1);
        const std::size_t limit = basis_->count_up_to(order_);
        for (const auto& s : basis_->derivative(var)) {
            if (s.src < limit) out.c_[s.dst] += s.factor * c_[s.src];
        }
        return out;
    }

    /// f(p) where derivs[k] = f^{(k)}(p(x0)); uses as many terms as the order allows.
    Jet compose(std::span<const double> derivs) const {
        if (static_cast<int>(derivs.size()) < order_ + 1)
            throw CapabilityError("scalar function composed with jet has too few derivatives", order_);
        Jet delta = *this;
        delta.c_[0] = 0.0;
        // Horner in delta: sum_k derivs[k]/k! delta^k
        std::vector<double> coef(static_cast<std::size_t>(order_) + 1);
        double fact = 1.0;
        for (int k = 0; k <= order_; ++k) {
            if (k > 0) fact *= k;
            coef[static_cast<std::size_t>(k)] = derivs[static_cast<std::size_t>(k)] / fact;
        }
        Jet acc = constant(basis_, coef.back(), order_);
        for (int k = order_ - 1; k >= 0; --k) {
            acc = acc * delta;
            acc.c_[0] += coef[static_cast<std::size_t>(k)];
        }
        return acc;
    }

    Jet operator-() const {
        Jet out = *this;
        for (auto& v : out.c_) v = -v;
        return out;
    }

    Jet& operator+=(const Jet& o) {
        align(o);
        const std::size_t limit = basis_->count_up_to(order_);
        for (std::size_t i = 0; i < limit; ++i) c_[i] += o.c_[i];
        return *this;
    }
    Jet& operator-=(const Jet& o) {
        align(o);
        const std::size_t limit = basis_->count_up_to(order_);
        for (std::size_t i = 0; i < limit; ++i) c_[i] -= o.c_[i];
        return *this;
    }
    Jet& operator+=(double s) {
        c_[0] += s;
        return *this;
    }
    Jet& operator-=(double s) {
        c_[0] -= s;
        return *this;
    }
    Jet& operator*=(double s) {
        for (auto& v : c_) v *= s;
        return *this;
    }
    Jet& operator/=(double s) {
        for (auto& v : c_) v /= s;
        return *this;
    }
    Jet& operator*=(const Jet& o) {
        *this = *this * o;
        return *this;
    }

    friend Jet operator*(const Jet& a, const Jet& b) {
        check_same_basis(a, b);
        const int order = std::min(a.order_, b.order_);
        Jet out(a.basis_, order);
        const auto& basis = *a.basis_;
        const std::size_t limit_i = basis.count_up_to(order);
        for (std::size_t i = 0; i < limit_i; ++i) {
            const double ai = a.c_[i];
            if (ai == 0.0) continue;
            const std::size_t limit_j = basis.count_up_to(order - basis.degree(i));
            for (const auto& p : basis.products(i)) {
                if (p.j >= limit_j) break;
                out.c_[p.k] += ai * b.c_[p.j];
            }
        }
        return out;
    }

    friend Jet operator+(Jet a, const Jet& b) { return a += b; }
    friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
    friend Jet operator+(Jet a, double s) { return a += s; }
    friend Jet operator+(double s, Jet a) { return a += s; }
    friend Jet operator-(Jet a, double s) { return a -= s; }
    friend Jet operator-(double s, const Jet& a) {
        Jet out = -a;
        out.c_[0] += s;
        return out;
    }
    friend Jet operator*(Jet a, double s) { return a *= s; }
    friend Jet operator*(double s, Jet a) { return a *= s; }
    friend Jet operator/(Jet a, double s) { return a /= s; }

private:
    Jet(BasisPtr basis, int order) : basis_(std::move(basis)) {
        order_ = order < 0 ? basis_->order() : std::min(order, basis_->order());
        c_.assign(basis_->size(), 0.0);
    }

    static void check_same_basis(const Jet& a, const Jet& b) {
        if (a.basis_ != b.basis_) throw ArgumentError("jets on different bases cannot be combined");
    }

    void align(const Jet& o) {
        check_same_basis(*this, o);
        if (o.order_ < order_) {
            order_ = o.order_;
            zero_above_order();
        }
    }

    void zero_above_order() {
        std::fill(c_.begin() + static_cast<std::ptrdiff_t>(basis_->count_up_to(order_)), c_.end(), 0.0);
    }

    BasisPtr basis_;
    int order_ = 0;
    std::vector<double> c_;
};

inline Jet exp(const Jet& p) {
    const double e = std::exp(p.value());
    std::vector<double> d(static_cast<std::size_t>(p.order()) + 1, e);
    return p.compose(d);
}

inline Jet reciprocal(const Jet& p) {
    const double v = p.value();
    if (v == 0.0) throw DomainError("reciprocal of a jet with zero value");
    std::vector<double> d(static_cast<std::size_t>(p.order()) + 1);
    // (1/v)^{(k)} = (-1)^k k! / v^{k+1}
    double term = 1.0 / v;
    for (std::size_t k = 0; k < d.size(); ++k) {
        d[k] = term;
        term *= -static_cast<double>(k + 1) / v;
    }
    return p.compose(d);
}

inline Jet operator/(const Jet& a, const Jet& b) { return a * reciprocal(b); }

inline double exp(double v) { return std::exp(v); }
inline double reciprocal(double v) { return 1.0 / v; }

/// Value of a scalar or jet (its constant term).
inline double primal(double v) noexcept { return v; }
inline double primal(const Jet& j) noexcept { return j.value(); }

/// A constant of the same kind as `like`.
inline double constant_like(double, double v) noexcept { return v; }
inline Jet constant_like(const Jet& like, double v) { return Jet::constant(like.basis_ptr(), v, like.order()); }

}  // namespace hfl

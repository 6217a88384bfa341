#pragma once

// Chain of d nearest-neighbour oscillators with heat baths at both ends:
//   dz_i = u_i dt,
//   du_i = -d_{z_i}H dt                                    (1 < i < d),
//   du_i = -[d_{z_i}H + gamma_i u_i] dt + sqrt(T_i) dW^i_{S^i_t}   (i = 1, d),
// with H(z,u) = sum_i (u_i^2/2 + V(z_i)) + sum_i U(z_{i+1} - z_i).
// State ordering is (z_1..z_d, u_1..u_d) throughout.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hypofeller/core/errors.hpp"
#include "hypofeller/core/linalg.hpp"
#include "hypofeller/core/taylor.hpp"
#include "hypofeller/model.hpp"

namespace hfl {

/// Polynomial scalar potential p(z) = sum_k coefficients[k] z^k; exact jets to any order.
class ScalarPotential {
public:
    ScalarPotential() = default;
    ScalarPotential(std::string name, std::vector<double> coefficients)
        : name_(std::move(name)), coef_(std::move(coefficients)) {
        if (coef_.empty()) coef_.push_back(0.0);
    }

    static ScalarPotential quadratic() { return {"quadratic", {0.0, 0.0, 0.5}}; }
    static ScalarPotential quadratic_quartic() { return {"quadratic_quartic", {0.0, 0.0, 0.5, 0.0, 0.25}}; }
    static ScalarPotential linear() { return {"linear", {0.0, 1.0}}; }
    /// Taylor coefficients about 0, i.e. p(z) = sum_k c_k z^k.
    static ScalarPotential from_taylor(std::vector<double> c) { return {"taylor_table", std::move(c)}; }

    const std::string& name() const noexcept { return name_; }
    const std::vector<double>& coefficients() const noexcept { return coef_; }

    /// p^{(k)}(z).
    double derivative(double z, int k) const {
        double acc = 0.0;
        for (std::size_t n = coef_.size(); n-- > static_cast<std::size_t>(k);) {
            double falling = 1.0;
            for (int j = 0; j < k; ++j) falling *= static_cast<double>(n - static_cast<std::size_t>(j));
            acc = acc * z + coef_[n] * falling;
        }
        return acc;
    }
    double operator()(double z) const { return derivative(z, 0); }

    /// p^{(k)} composed with a jet (exact).
    Jet derivative(const Jet& z, int k) const {
        std::vector<double> d(static_cast<std::size_t>(z.order()) + 1);
        for (std::size_t j = 0; j < d.size(); ++j) d[j] = derivative(z.value(), k + static_cast<int>(j));
        return z.compose(d);
    }

private:
    std::string name_;
    std::vector<double> coef_{0.0};
};

struct ChainParams {
    int particles = 3;  ///< d; the state dimension is 2d
    double gamma_first = 1.0;
    double gamma_last = 1.0;
    double temperature_first = 1.0;
    double temperature_last = 1.0;
    ScalarPotential pinning = ScalarPotential::quadratic();             ///< V
    ScalarPotential interaction = ScalarPotential::quadratic_quartic();  ///< U

    void validate() const {
        if (particles < 3) throw ArgumentError("oscillator chain needs d >= 3 particles");
        if (!(temperature_first > 0.0) || !(temperature_last > 0.0))
            throw ArgumentError("temperatures must be positive");
        if (!std::isfinite(gamma_first) || !std::isfinite(gamma_last)) throw ArgumentError("friction must be finite");
    }
    int state_dim() const noexcept { return 2 * particles; }
    int z(int i) const noexcept { return i; }              ///< index of z_{i+1}
    int u(int i) const noexcept { return particles + i; }  ///< index of u_{i+1}
};

namespace detail {

/// d H / d z_i for 0-based i.
template <class T>
T chain_force(const ChainParams& p, std::span<const T> x, int i) {
    const int d = p.particles;
    T f = p.pinning.derivative(x[static_cast<std::size_t>(i)], 1);
    if (i + 1 < d) f -= p.interaction.derivative(x[static_cast<std::size_t>(i + 1)] - x[static_cast<std::size_t>(i)], 1);
    if (i > 0) f += p.interaction.derivative(x[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(i - 1)], 1);
    return f;
}

struct ChainField {
    ChainParams p;
    template <class T>
    void operator()(std::span<const T> x, std::span<T> out) const {
        const int d = p.particles;
        for (int i = 0; i < d; ++i) out[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(p.u(i))];
        for (int i = 0; i < d; ++i) {
            T acc = -chain_force(p, x, i);
            if (i == 0) acc -= p.gamma_first * x[static_cast<std::size_t>(p.u(0))];
            if (i == d - 1) acc -= p.gamma_last * x[static_cast<std::size_t>(p.u(d - 1))];
            out[static_cast<std::size_t>(p.u(i))] = acc;
        }
    }
};

template <class T>
T chain_hamiltonian(const ChainParams& p, std::span<const T> x) {
    const int d = p.particles;
    T h = constant_like(x[0], 0.0);
    for (int i = 0; i < d; ++i) {
        const T& ui = x[static_cast<std::size_t>(p.u(i))];
        h += 0.5 * (ui * ui);
        h += p.pinning.derivative(x[static_cast<std::size_t>(i)], 0);
    }
    for (int i = 0; i + 1 < d; ++i)
        h += p.interaction.derivative(x[static_cast<std::size_t>(i + 1)] - x[static_cast<std::size_t>(i)], 0);
    return h;
}


/// Hessian of H in the z-block.
inline Matrix chain_position_hessian(const ChainParams& p, std::span<const double> x) {
    const int d = p.particles;
    Matrix hzz = Matrix::Zero(d, d);
    for (int i = 0; i < d; ++i) hzz(i, i) = p.pinning.derivative(x[static_cast<std::size_t>(i)], 2);
    for (int i = 0; i + 1 < d; ++i) {
        const double u2 = p.interaction.derivative(x[static_cast<std::size_t>(i + 1)] - x[static_cast<std::size_t>(i)], 2);
        hzz(i, i) += u2;
        hzz(i + 1, i + 1) += u2;
        hzz(i, i + 1) -= u2;
        hzz(i + 1, i) -= u2;
    }
    return hzz;
}

}  // namespace detail

struct ChainModel {
    ChainParams params;
    SdeModel model;
    LyapunovFunction hamiltonian;
};

/// Noise matrix: 2d x 2d with sqrt(T_1) at (u_1, u_1) and sqrt(T_d) at (u_d, u_d).
inline Matrix chain_noise(const ChainParams& p) {
    const int n = p.state_dim();
    Matrix a = Matrix::Zero(n, n);
    a(p.u(0), p.u(0)) = std::sqrt(p.temperature_first);
    a(p.u(p.particles - 1), p.u(p.particles - 1)) = std::sqrt(p.temperature_last);
    return a;
}

inline ChainModel build_chain_model(const ChainParams& params) {
    params.validate();
    ChainModel c;
    c.params = params;
    const int d = params.particles;

    JacobianFn jac = [params, d](std::span<const double> x, Eigen::Ref<Matrix> out) {
        out.setZero();
        out.block(0, d, d, d).setIdentity();
        out.block(d, 0, d, d) = -detail::chain_position_hessian(params, x);
        out(params.u(0), params.u(0)) = -params.gamma_first;
        out(params.u(d - 1), params.u(d - 1)) = -params.gamma_last;
    };
    c.model = SdeModel::from_field("oscillator_chain", chain_noise(params), detail::ChainField{params}, std::move(jac));

    auto& h = c.hamiltonian;
    h.name = "chain_hamiltonian";
    h.value = [params](std::span<const double> x) { return detail::chain_hamiltonian<double>(params, x); };
    h.gradient = [params, d](std::span<const double> x) {
        Vector g(2 * d);
        for (int i = 0; i < d; ++i) {
            g(params.z(i)) = detail::chain_force<double>(params, x, i);
            g(params.u(i)) = x[static_cast<std::size_t>(params.u(i))];
        }
        return g;
    };
    h.hessian = [params, d](std::span<const double> x) {
        Matrix m = Matrix::Zero(2 * d, 2 * d);
        m.topLeftCorner(d, d) = detail::chain_position_hessian(params, x);
        m.bottomRightCorner(d, d).setIdentity();
        return m;
    };
    h.jet = [params](std::span<const Jet> x) { return detail::chain_hamiltonian<Jet>(params, x); };
    return c;
}

// ---------------------------------------------------------------------------
// Vector fields with jets and Lie brackets
// ---------------------------------------------------------------------------

/// A vector field on R^n known through its Taylor expansions.
class VectorFieldJet {
public:
    using Expand = std::function<std::vector<Jet>(const Vector& x, int order)>;

    VectorFieldJet(int dim, Expand expand, int max_order)
        : dim_(dim), expand_(std::move(expand)), max_order_(max_order) {}

    int dim() const noexcept { return dim_; }
    /// Deepest expansion order available.
    int max_order() const noexcept { return max_order_; }

    std::vector<Jet> expand(const Vector& x, int order) const {
        if (order > max_order_) throw CapabilityError("vector field jet depth exceeded", order);
        return expand_(x, order);
    }

    Vector operator()(const Vector& x) const {
        const auto j = expand(x, 0);
        Vector v(dim_);
        for (int i = 0; i < dim_; ++i) v(i) = j[static_cast<std::size_t>(i)].value();
        return v;
    }

private:
    int dim_;
    Expand expand_;
    int max_order_;
};

inline VectorFieldJet drift_field(const SdeModel& model) {
    auto m = std::make_shared<const SdeModel>(model);
    return VectorFieldJet(
        model.dim(),
        [m](const Vector& x, int order) { return m->taylor({x.data(), static_cast<std::size_t>(x.size())}, order); },
        model.jet_order());
}

inline VectorFieldJet constant_field(Vector v) {
    const auto n = static_cast<int>(v.size());
    return VectorFieldJet(
        n,
        [v = std::move(v)](const Vector& x, int order) {
            auto basis = MonomialBasis::get(static_cast<int>(x.size()), order);
            std::vector<Jet> out;
            for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(Jet::constant(basis, v(i)));
            return out;
        },
        kUnboundedOrder);
}

/// Coordinate field d/dx_index.
inline VectorFieldJet coordinate_field(int dim, int index) {
    Vector e = Vector::Zero(dim);
    e(index) = 1.0;
    return constant_field(std::move(e));
}

namespace detail {

/// Same jets on another basis in the same variables; graded bases share their low-degree prefix.
inline std::vector<Jet> rebased(std::vector<Jet> jets, const BasisPtr& basis) {
    for (auto& j : jets)
        if (j.basis_ptr() != basis) j = Jet::from_coefficients(basis, j.coefficients(), std::min(j.order(), basis->order()));
    return jets;
}

/// [X, Y] = (grad Y) X - (grad X) Y from expansions of order q + 1, truncated to q.
inline std::vector<Jet> bracket_expansion(const std::vector<Jet>& x, const std::vector<Jet>& y, int q) {
    const std::size_t n = x.size();
    std::vector<Jet> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Jet acc = constant_like(x[0], 0.0).truncated(q);
        for (std::size_t l = 0; l < n; ++l) {
            acc += x[l] * y[i].derivative(static_cast<int>(l));
            acc -= y[l] * x[i].derivative(static_cast<int>(l));
        }
        out.push_back(acc.truncated(q));
    }
    return out;
}

}  // namespace detail

/// [X, Y] as a field; one order of jet depth is consumed.
inline VectorFieldJet lie_bracket(const VectorFieldJet& x, const VectorFieldJet& y) {
    if (x.dim() != y.dim()) throw ArgumentError("Lie bracket of fields with different dimensions");
    const int depth = std::min(x.max_order(), y.max_order());
    return VectorFieldJet(
        x.dim(),
        [x, y](const Vector& at, int order) {
            // Nested brackets come back on deeper bases; move both onto the order + 1 basis.
            auto basis = MonomialBasis::get(static_cast<int>(at.size()), order + 1);
            return detail::bracket_expansion(detail::rebased(x.expand(at, order + 1), basis),
                                             detail::rebased(y.expand(at, order + 1), basis), order);
        },
        depth == kUnboundedOrder ? kUnboundedOrder : depth - 1);
}

/// [X, Y] at a point, expanded to `order` (order 0 gives the vector).
inline std::vector<Jet> lie_bracket(const VectorFieldJet& x, const VectorFieldJet& y, const Vector& at, int order) {
    return lie_bracket(x, y).expand(at, order);
}

inline Vector jet_values(const std::vector<Jet>& j) {
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].value();
    return v;
}

/// Largest accepted bracket depth for a chain of d particles.
inline int max_bracket_depth(const ChainParams& p) { return 2 * p.particles - 2; }

/// [U_0(x), ..., U_depth(x)] with U_0 = d/du_1 and U_n = [U_{n-1}, V], V the drift field.
inline std::vector<Vector> bracket_chain(const ChainParams& params, const Vector& x, int depth) {
    params.validate();
    if (depth < 0) throw ArgumentError("bracket depth must be nonnegative");
    if (depth > max_bracket_depth(params))
        throw ArgumentError("bracket depth " + std::to_string(depth) + " exceeds the cap 2d - 2 = " +
                            std::to_string(max_bracket_depth(params)));
    if (x.size() != params.state_dim()) throw ArgumentError("point has wrong dimension");
    const auto chain = build_chain_model(params);
    const auto drift = chain.model.taylor({x.data(), static_cast<std::size_t>(x.size())}, std::max(depth, 1));
    auto basis = drift[0].basis_ptr();

    std::vector<Jet> current;
    for (int i = 0; i < params.state_dim(); ++i)
        current.push_back(Jet::constant(basis, i == params.u(0) ? 1.0 : 0.0, depth));
    std::vector<Vector> out{jet_values(current)};
    for (int k = 1; k <= depth; ++k) {
        current = detail::bracket_expansion(current, drift, depth - k);
        out.push_back(jet_values(current));
    }
    return out;
}

struct SpanCheck {
    Matrix columns;  ///< U_0, ..., U_{2d-3}, d/du_d, [d/du_d, V]
    Vector singular_values;
    Eigen::Index rank = 0;
    double tolerance = 0.0;
    bool full_rank = false;
};

/// Numerical span of {U_0, ..., U_{2d-3}, d/du_d, [d/du_d, V]} at x.
inline SpanCheck bracket_span_check(const ChainParams& params, const Vector& x,
                                    const TolerancePolicy& policy = relative_tolerance()) {
    const int n = params.state_dim();
    const auto chain_vectors = bracket_chain(params, x, 2 * params.particles - 3);
    const auto chain = build_chain_model(params);
    const auto last = coordinate_field(n, params.u(params.particles - 1));
    const Vector last_bracket = jet_values(lie_bracket(last, drift_field(chain.model), x, 0));

    SpanCheck s;
    s.columns.resize(n, static_cast<Eigen::Index>(chain_vectors.size()) + 2);
    for (std::size_t k = 0; k < chain_vectors.size(); ++k) s.columns.col(static_cast<Eigen::Index>(k)) = chain_vectors[k];
    s.columns.col(s.columns.cols() - 2) = last(x);
    s.columns.col(s.columns.cols() - 1) = last_bracket;
    const auto nr = numerical_rank(s.columns, policy);
    s.singular_values = nr.singular_values;
    s.rank = nr.rank;
    s.tolerance = nr.tolerance;
    s.full_rank = nr.rank == n;
    return s;
}

}  // namespace hfl

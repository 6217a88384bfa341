#pragma once

// Experiment configuration: a TOML file mapped onto the library types, with
// field-level diagnostics and a hash of the effective (post-override) settings.

#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <toml.hpp>

#include "hypofeller/feller_lab.hpp"
#include "hypofeller/hormander.hpp"
#include "hypofeller/malliavin.hpp"
#include "hypofeller/oscillator_chain.hpp"

namespace hfl::cli {

/// Invalid configuration; the message names the field and, when known, the line.
class ConfigError : public Error {
public:
    using Error::Error;
};

struct ModelConfig {
    std::string kind = "oscillator_chain";
    SdeModel model;
    std::optional<ChainModel> chain;  ///< set for oscillator_chain
};

struct HormanderConfig {
    int n_max = 0;  ///< 0 means 2d
    std::size_t points = 100;
    double scale = 1.0;
    Vector center;
    double rank_safety = 1e3;
};

struct LyapunovConfig {
    std::string function;  ///< "hamiltonian" (chain default) or "squared_norm"
    std::size_t points = 1000;
    double scale = 2.0;
    std::size_t moment_paths = 0;  ///< 0 skips the moment diagnostic
};

struct TvConfig {
    Vector x;
    Vector direction;
    std::vector<double> radii{1.0, 0.5, 0.25, 0.125};
    std::vector<int> levels;  ///< cutoff levels for the localized estimate; empty skips it
    double level_radius = 0.5;  ///< separation used for the localized estimate
};

struct ExperimentConfig {
    std::string source;  ///< path the config was read from
    std::uint64_t seed = 1;
    std::string out = "hypofeller_out";
    double horizon = 1.0;
    std::size_t steps = 100;
    std::size_t paths = 1000;

    ModelConfig model;
    NoiseDriver driver;
    IntegratorOptions integrator;
    FlowOptions flows;
    Vector x0;
    HormanderConfig hormander;
    LyapunovConfig lyapunov;
    TvConfig tv;

    std::string canonical;  ///< TOML text of the effective configuration
    std::uint64_t hash = 0;

    Eigen::Index dim() const { return model.model.dim(); }
    LyapunovFunction lyapunov_function() const {
        if (lyapunov.function == "hamiltonian") return model.chain->hamiltonian;
        return squared_norm_lyapunov();
    }
    TvSetup tv_setup() const {
        TvSetup s;
        s.horizon = horizon;
        s.steps = steps;
        s.paths = paths;
        s.seed = seed;
        s.integrator = integrator;
        return s;
    }
    /// 16 hex digits.
    std::string hash_hex() const {
        std::ostringstream os;
        os << std::hex;
        os.width(16);
        os.fill('0');
        os << hash;
        return os.str();
    }
};

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace detail {

inline std::string where(const toml::node& n) {
    const auto& src = n.source();
    if (src.begin.line == 0) return "";
    return " (line " + std::to_string(src.begin.line) + ")";
}

/// Typed access to one table with the dotted path kept for messages.
class Fields {
public:
    Fields(const toml::table* t, std::string path) : t_(t), path_(std::move(path)) {}

    bool present() const { return t_ != nullptr; }
    bool has(std::string_view key) const { return t_ && t_->contains(key); }
    std::string name(std::string_view key) const { return path_.empty() ? std::string(key) : path_ + "." + std::string(key); }

    const toml::node* node(std::string_view key) const { return t_ ? t_->get(key) : nullptr; }

    [[noreturn]] void fail(std::string_view key, const std::string& what) const {
        const auto* n = node(key);
        throw ConfigError(name(key) + ": " + what + (n ? where(*n) : ""));
    }

    double number(std::string_view key, double fallback) const {
        const auto* n = node(key);
        if (!n) return fallback;
        if (auto v = n->value<double>()) return *v;
        fail(key, "expected a number");
    }
    double positive(std::string_view key, double fallback) const {
        const double v = number(key, fallback);
        if (!(v > 0.0)) fail(key, "must be positive");
        return v;
    }
    std::int64_t integer(std::string_view key, std::int64_t fallback) const {
        const auto* n = node(key);
        if (!n) return fallback;
        if (auto v = n->value_exact<std::int64_t>()) return *v;
        fail(key, "expected an integer");
    }
    std::size_t count(std::string_view key, std::size_t fallback, std::size_t min = 1) const {
        const auto v = integer(key, static_cast<std::int64_t>(fallback));
        if (v < static_cast<std::int64_t>(min)) fail(key, "must be at least " + std::to_string(min));
        return static_cast<std::size_t>(v);
    }
    bool boolean(std::string_view key, bool fallback) const {
        const auto* n = node(key);
        if (!n) return fallback;
        if (auto v = n->value_exact<bool>()) return *v;
        fail(key, "expected true or false");
    }
    std::string string(std::string_view key, std::string fallback) const {
        const auto* n = node(key);
        if (!n) return fallback;
        if (auto v = n->value_exact<std::string>()) return *v;
        fail(key, "expected a string");
    }
    std::vector<double> numbers(std::string_view key) const {
        const auto* n = node(key);
        const auto* a = n ? n->as_array() : nullptr;
        if (!a) fail(key, "expected an array of numbers");
        std::vector<double> out;
        for (const auto& e : *a) {
            auto v = e.value<double>();
            if (!v) fail(key, "expected an array of numbers");
            out.push_back(*v);
        }
        return out;
    }
    Vector vector(std::string_view key) const {
        const auto v = numbers(key);
        return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    Vector vector(std::string_view key, Eigen::Index dim, const Vector& fallback) const {
        if (!has(key)) return fallback;
        Vector v = vector(key);
        if (v.size() != dim) fail(key, "has " + std::to_string(v.size()) + " entries, the model dimension is " + std::to_string(dim));
        return v;
    }
    /// Rows of equal length.
    Matrix matrix(std::string_view key) const {
        const auto* n = node(key);
        const auto* a = n ? n->as_array() : nullptr;
        if (!a || a->empty()) fail(key, "expected a nonempty array of rows");
        std::vector<std::vector<double>> rows;
        for (const auto& r : *a) {
            const auto* row = r.as_array();
            if (!row) fail(key, "expected an array of rows");
            std::vector<double> vals;
            for (const auto& e : *row) {
                auto v = e.value<double>();
                if (!v) fail(key, "entries must be numbers");
                vals.push_back(*v);
            }
            if (!rows.empty() && vals.size() != rows.front().size()) fail(key, "rows have different lengths");
            rows.push_back(std::move(vals));
        }
        Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < rows[i].size(); ++j)
                m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        return m;
    }
    Fields table(std::string_view key) const {
        const auto* n = node(key);
        if (!n) return {nullptr, name(key)};
        if (const auto* t = n->as_table()) return {t, name(key)};
        fail(key, "expected a table");
    }
    const toml::array* array(std::string_view key) const {
        const auto* n = node(key);
        if (!n) return nullptr;
        if (const auto* a = n->as_array()) return a;
        fail(key, "expected an array");
    }

private:
    const toml::table* t_;
    std::string path_;
};

inline ScalarPotential potential(const Fields& f, std::string_view key, ScalarPotential fallback) {
    if (!f.has(key)) return fallback;
    if (f.node(key)->is_string()) {
        const auto s = f.string(key, "");
        if (s == "quadratic") return ScalarPotential::quadratic();
        if (s == "quadratic_quartic") return ScalarPotential::quadratic_quartic();
        if (s == "linear") return ScalarPotential::linear();
        f.fail(key, "unknown potential '" + s + "' (quadratic, quadratic_quartic, linear, or Taylor coefficients)");
    }
    return ScalarPotential::from_taylor(f.numbers(key));
}

inline ModelConfig model(const Fields& f) {
    ModelConfig m;
    m.kind = f.string("kind", "oscillator_chain");
    try {
        if (m.kind == "oscillator_chain") {
            ChainParams p;
            p.particles = static_cast<int>(f.integer("particles", p.particles));
            if (p.particles < 3) f.fail("particles", "the chain needs at least 3 particles");
            p.gamma_first = f.number("gamma_first", p.gamma_first);
            p.gamma_last = f.number("gamma_last", p.gamma_last);
            p.temperature_first = f.positive("temperature_first", p.temperature_first);
            p.temperature_last = f.positive("temperature_last", p.temperature_last);
            p.pinning = potential(f, "pinning", p.pinning);
            p.interaction = potential(f, "interaction", p.interaction);
            m.chain = build_chain_model(p);
            m.model = m.chain->model;
            return m;
        }
        if (m.kind == "linear") {
            const Matrix b = f.matrix("drift_matrix");
            if (b.rows() != b.cols()) f.fail("drift_matrix", "must be square");
            const Matrix a = f.matrix("noise");
            if (a.rows() != b.rows())
                f.fail("noise", "has " + std::to_string(a.rows()) + " rows, drift_matrix is " + std::to_string(b.rows()) + " x " +
                                    std::to_string(b.cols()));
            m.model = linear_model(b, a);
        } else if (m.kind == "constant") {
            const Vector c = f.vector("drift");
            const Matrix a = f.matrix("noise");
            if (a.rows() != c.size()) f.fail("noise", "row count must equal the length of drift");
            m.model = constant_model(c, a);
        } else if (m.kind == "zero") {
            m.model = zero_drift_model(f.matrix("noise"));
        } else if (m.kind == "polynomial") {
            const Matrix a = f.matrix("noise");
            std::vector<PolynomialTerm> terms;
            const auto* arr = f.array("terms");
            if (!arr) f.fail("terms", "required for a polynomial model");
            for (std::size_t i = 0; i < arr->size(); ++i) {
                const auto* t = arr->get(i)->as_table();
                if (!t) f.fail("terms", "entries must be tables {component, coefficient, powers}");
                const Fields tf(t, f.name("terms") + "[" + std::to_string(i) + "]");
                PolynomialTerm term;
                term.component = static_cast<int>(tf.integer("component", -1));
                if (term.component < 0 || term.component >= a.rows())
                    tf.fail("component", "must index a row of the noise matrix");
                term.coefficient = tf.number("coefficient", 0.0);
                for (double p : tf.numbers("powers")) term.powers.push_back(static_cast<int>(p));
                if (term.powers.size() != static_cast<std::size_t>(a.rows()))
                    tf.fail("powers", "needs one exponent per state coordinate");
                terms.push_back(std::move(term));
            }
            m.model = polynomial_model(std::move(terms), a);
        } else {
            f.fail("kind", "unknown model '" + m.kind + "' (oscillator_chain, linear, constant, zero, polynomial)");
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(f.name("kind") + ": " + e.what());
    }
    return m;
}

inline SubordinatorComponent component(const Fields& f) {
    const auto kind = f.string("kind", "stable");
    if (kind == "stable") {
        const double index = f.number("index", 0.5);
        if (!(index > 0.0 && index < 1.0)) f.fail("index", "must lie in (0, 1)");
        return StableSubordinator{index};
    }
    if (kind == "gamma") return GammaSubordinator{f.positive("shape", 1.0), f.positive("rate", 1.0)};
    if (kind == "compound_poisson") {
        CompoundPoisson p;
        p.rate = f.positive("rate", 1.0);
        const auto jump = f.string("jump", "dirac");
        if (jump == "dirac")
            p.jumps = DiracJumps{f.positive("size", 1.0)};
        else if (jump == "exponential")
            p.jumps = ExponentialJumps{f.positive("mean", 1.0)};
        else
            f.fail("jump", "unknown jump law '" + jump + "' (dirac, exponential)");
        return p;
    }
    f.fail("kind", "unknown subordinator '" + kind + "' (stable, gamma, compound_poisson, clock)");
}

inline NoiseDriver driver(const Fields& f, Eigen::Index m) {
    const auto mismatch = [&](std::string_view key, std::size_t got) {
        f.fail(key, "has " + std::to_string(got) + " components, the noise matrix has " + std::to_string(m) + " columns");
    };
    if (f.string("kind", "stable") == "clock") {
        const auto rates = f.numbers("rates");
        if (rates.size() != static_cast<std::size_t>(m)) mismatch("rates", rates.size());
        for (double r : rates)
            if (!(r >= 0.0)) f.fail("rates", "must be nonnegative");
        return DeterministicClock{rates};
    }
    std::vector<SubordinatorComponent> comps;
    if (const auto* arr = f.array("components")) {
        for (std::size_t i = 0; i < arr->size(); ++i) {
            const auto* t = arr->get(i)->as_table();
            if (!t) f.fail("components", "entries must be tables");
            comps.push_back(component(Fields(t, f.name("components") + "[" + std::to_string(i) + "]")));
        }
        if (comps.size() != static_cast<std::size_t>(m)) mismatch("components", comps.size());
    } else {
        comps.assign(static_cast<std::size_t>(m), component(f));
    }
    return SubordinatorSpec(std::move(comps));
}

inline std::string canonical_text(const toml::table& t) {
    std::ostringstream os;
    os << toml::toml_formatter(t, toml::format_flags::none);
    return os.str();
}

}  // namespace detail

/// Parses and validates a configuration; `seed_override` replaces the file's seed.
inline ExperimentConfig parse_config(const toml::table& root, std::string source,
                                     std::optional<std::uint64_t> seed_override = std::nullopt) {
    using detail::Fields;
    ExperimentConfig c;
    c.source = std::move(source);
    const Fields top(&root, "");
    for (const auto& [key, node] : root) {
        static const std::vector<std::string> known{"seed", "out", "horizon", "steps", "paths", "x0", "model",
                                                    "subordinator", "integrator", "flows", "hormander", "lyapunov", "tv"};
        if (std::find(known.begin(), known.end(), std::string(key.str())) == known.end())
            throw ConfigError(std::string(key.str()) + ": unknown key" + detail::where(node));
    }
    const auto seed = top.integer("seed", 1);
    if (seed < 0) top.fail("seed", "must be nonnegative");
    c.seed = seed_override.value_or(static_cast<std::uint64_t>(seed));
    c.out = top.string("out", c.out);
    c.horizon = top.positive("horizon", c.horizon);
    c.steps = top.count("steps", c.steps);
    c.paths = top.count("paths", c.paths);

    c.model = detail::model(top.table("model"));
    const Eigen::Index d = c.dim();
    c.driver = detail::driver(top.table("subordinator"), c.model.model.noise_dim());
    c.x0 = top.vector("x0", d, Vector::Zero(d));

    const auto integ = top.table("integrator");
    c.integrator.h_max = integ.positive("h_max", c.integrator.h_max);
    c.integrator.stability_guard = integ.boolean("stability_guard", c.integrator.stability_guard);
    c.integrator.guard_ratio = integ.positive("guard_ratio", c.integrator.guard_ratio);

    const auto flows = top.table("flows");
    c.flows.flow_tol = flows.positive("flow_tol", c.flows.flow_tol);
    c.flows.jacobian_step_ratio = flows.positive("jacobian_step_ratio", c.flows.jacobian_step_ratio);
    c.flows.literal_inverse_diagnostic = flows.boolean("literal_inverse_diagnostic", false);

    const auto hor = top.table("hormander");
    c.hormander.n_max = static_cast<int>(hor.integer("n_max", 2 * d));
    if (c.hormander.n_max < 0) hor.fail("n_max", "must be nonnegative");
    c.hormander.points = hor.count("points", c.hormander.points);
    c.hormander.scale = hor.positive("scale", c.hormander.scale);
    c.hormander.center = hor.vector("center", d, Vector::Zero(d));
    c.hormander.rank_safety = hor.positive("rank_safety", c.hormander.rank_safety);

    const auto lya = top.table("lyapunov");
    c.lyapunov.function = lya.string("function", c.model.chain ? "hamiltonian" : "squared_norm");
    if (c.lyapunov.function != "hamiltonian" && c.lyapunov.function != "squared_norm")
        lya.fail("function", "unknown Lyapunov function (hamiltonian, squared_norm)");
    if (c.lyapunov.function == "hamiltonian" && !c.model.chain)
        lya.fail("function", "hamiltonian is only defined for the oscillator chain");
    c.lyapunov.points = lya.count("points", c.lyapunov.points);
    c.lyapunov.scale = lya.positive("scale", c.lyapunov.scale);
    c.lyapunov.moment_paths = lya.count("moment_paths", 0, 0);

    const auto tv = top.table("tv");
    c.tv.x = tv.vector("x", d, c.x0);
    Vector dir = Vector::Zero(d);
    dir(c.model.chain ? c.model.chain->params.u(0) : 0) = 1.0;
    c.tv.direction = tv.vector("direction", d, dir);
    if (!(c.tv.direction.norm() > 0.0)) tv.fail("direction", "must be nonzero");
    if (tv.has("radii")) c.tv.radii = tv.numbers("radii");
    if (c.tv.radii.empty()) tv.fail("radii", "needs at least one radius");
    for (std::size_t i = 0; i < c.tv.radii.size(); ++i)
        if (!(c.tv.radii[i] > 0.0) || (i > 0 && !(c.tv.radii[i] < c.tv.radii[i - 1])))
            tv.fail("radii", "must be positive and strictly decreasing");
    if (tv.has("levels")) {
        for (double l : tv.numbers("levels")) {
            if (!(l >= 1.0) || l != std::floor(l)) tv.fail("levels", "must be positive integers");
            c.tv.levels.push_back(static_cast<int>(l));
        }
        if (!c.model.chain && c.lyapunov.function != "squared_norm") tv.fail("levels", "needs a Lyapunov function");
    }
    c.tv.level_radius = tv.positive("level_radius", c.tv.level_radius);

    toml::table effective = root;
    effective.insert_or_assign("seed", static_cast<std::int64_t>(c.seed));
    c.canonical = detail::canonical_text(effective);
    c.hash = fnv1a(c.canonical);
    return c;
}

inline ExperimentConfig load_config(const std::string& path, std::optional<std::uint64_t> seed_override = std::nullopt) {
    toml::table root;
    try {
        root = toml::parse_file(path);
    } catch (const toml::parse_error& e) {
        const auto& b = e.source().begin;
        throw ConfigError(path + ":" + std::to_string(b.line) + ":" + std::to_string(b.column) + ": " +
                          std::string(e.description()));
    }
    try {
        return parse_config(root, path, seed_override);
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

}  // namespace hfl::cli

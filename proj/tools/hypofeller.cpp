// Batch front-end. Exit codes: 0 success, 1 usage or config error, 2 numerical failure,
// 3 a check ran but did not verify.

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "hypofeller/config.hpp"
#include "hypofeller/report.hpp"

namespace {

using namespace hfl;
using namespace hfl::cli;

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kNumerical = 2;
constexpr int kNotVerified = 3;

std::vector<Vector> sample_points(const Vector& center, double scale, std::size_t count, std::uint64_t seed) {
    const auto sampler = gaussian_sampler(center, scale);
    std::vector<Vector> pts;
    pts.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        auto rng = make_rng(derive_seed(seed, Stream::point, i));
        pts.push_back(sampler(rng));
    }
    return pts;
}

void coordinate_header(std::ostream& os, Eigen::Index d) {
    for (Eigen::Index i = 0; i < d; ++i) os << ",x_" << (i + 1);
}

int simulate(const ExperimentConfig& c, ReportWriter& w) {
    const auto sub = driver_path(c.driver, c.horizon, c.steps, derive_seed(c.seed, Stream::subordinator, 0));
    const auto traj = simulate_path(c.model.model, c.x0, sub, derive_seed(c.seed, Stream::gaussian, 0), c.integrator);
    std::ostringstream ts, ss, terminal;
    write_csv(ts, traj);
    write_csv(ss, sub);
    terminal << "path_id";
    coordinate_header(terminal, c.dim());
    terminal << '\n';
    terminal.precision(17);
    std::vector<Vector> ends(c.paths);
    parallel_for(c.paths, [&](std::size_t p) {
        const auto s = driver_path(c.driver, c.horizon, c.steps, derive_seed(c.seed, Stream::subordinator, p));
        ends[p] = simulate_terminal(c.model.model, c.x0, s, derive_seed(c.seed, Stream::gaussian, p), c.integrator);
    });
    for (std::size_t p = 0; p < c.paths; ++p) {
        terminal << p;
        for (Eigen::Index i = 0; i < c.dim(); ++i) terminal << ',' << ends[p](i);
        terminal << '\n';
    }
    w.csv("trajectory.csv", ts.str());
    w.csv("subordinator.csv", ss.str());
    w.csv("terminal.csv", terminal.str());
    if (const auto* spec = std::get_if<SubordinatorSpec>(&c.driver)) {
        const auto nd = nondegeneracy_check(*spec);
        w.summary()["nondegenerate"] = nd.pass;
        if (!nd.pass) std::cerr << "warning: " << nd.warning << '\n';
    }
    w.summary()["paths"] = c.paths;
    std::cout << "simulated " << c.paths << " paths to t = " << c.horizon << '\n';
    return kOk;
}

int check_lyapunov_cmd(const ExperimentConfig& c, ReportWriter& w, const std::string& prefix = "") {
    const auto h = c.lyapunov_function();
    const auto pts = sample_points(c.x0, c.lyapunov.scale, c.lyapunov.points, c.seed);
    const auto r = check_lyapunov(c.model.model, h, pts);
    std::ostringstream os;
    os << "constant,value";
    coordinate_header(os, c.dim());
    os << '\n';
    os.precision(17);
    const auto row = [&](const char* name, double v, const Vector& x) {
        os << name << ',' << v;
        for (Eigen::Index i = 0; i < c.dim(); ++i) os << ',' << (x.size() ? x(i) : 0.0);
        os << '\n';
    };
    row("kappa1", r.kappa1, r.witness1);
    row("kappa2", r.kappa2, r.witness2);
    row("kappa3", r.kappa3, r.witness3);
    w.csv(prefix + "lyapunov.csv", os.str());
    auto& s = w.summary()["lyapunov"];
    s = {{"function", h.name}, {"points", r.points}, {"kappa1", r.kappa1}, {"kappa2", r.kappa2},
         {"kappa3", r.kappa3}, {"finite", r.finite()}};
    if (!r.finite()) {
        s["violation"] = r.violation;
        std::cout << "lyapunov: not verified (" << r.violation << ")\n";
        return kNotVerified;
    }
    if (c.lyapunov.moment_paths > 0) {
        const auto m = moment_diagnostic(c.model.model, h, r, c.x0, c.driver, c.horizon, c.steps, c.lyapunov.moment_paths,
                                         c.seed, c.integrator);
        std::ostringstream ms;
        ms.precision(17);
        ms << "paths,explosions,log_mean,std_error,log_ratio\n"
           << m.paths << ',' << m.explosions << ',' << m.log_mean << ',' << m.std_error << ',' << m.log_ratio << '\n';
        w.csv(prefix + "moments.csv", ms.str());
        s["moment_log_ratio"] = m.log_ratio;
        s["moment_explosions"] = m.explosions;
    }
    std::cout << "lyapunov: kappa1 = " << r.kappa1 << ", kappa2 = " << r.kappa2 << ", kappa3 = " << r.kappa3 << '\n';
    return kOk;
}

int check_hormander_cmd(const ExperimentConfig& c, ReportWriter& w) {
    const auto policy = relative_tolerance(c.hormander.rank_safety);
    const auto at_x0 = rank_check(c.model.model, c.x0, c.hormander.n_max, policy);
    const auto scan = rank_scan(c.model.model, gaussian_sampler(c.hormander.center, c.hormander.scale), c.hormander.points,
                                c.hormander.n_max, c.seed, policy);
    std::ostringstream os, hs;
    write_csv(os, scan, c.dim());
    w.csv("hormander.csv", os.str());
    hs << "minimal_order,count\n";
    for (const auto& [order, n] : scan.order_histogram) hs << order << ',' << n << '\n';
    hs << "NA," << scan.failures << '\n';
    w.csv("hormander_summary.csv", hs.str());
    auto& s = w.summary();
    s["minimal_order_at_x0"] = at_x0.minimal_order ? nlohmann::json(*at_x0.minimal_order) : nlohmann::json(nullptr);
    s["points"] = c.hormander.points;
    s["failures"] = scan.failures;
    s["worst_conditioning"] = scan.worst_conditioning;
    s["verified"] = scan.verified && at_x0.minimal_order.has_value();
    std::cout << "hormander: minimal_order at x0 = "
              << (at_x0.minimal_order ? std::to_string(*at_x0.minimal_order) : std::string("not attained")) << ", scan "
              << (c.hormander.points - scan.failures) << "/" << c.hormander.points << " points attain rank " << c.dim()
              << '\n';
    return s["verified"].get<bool>() ? kOk : kNotVerified;
}

int malliavin_cmd(const ExperimentConfig& c, ReportWriter& w) {
    const auto r = invertibility_stats(c.model.model, c.x0, c.driver, c.horizon, c.steps, c.paths, c.seed, c.integrator,
                                       c.flows);
    std::ostringstream os, ss;
    write_csv(os, r);
    w.csv("invertibility.csv", os.str());
    ss.precision(17);
    ss << "statistic,value\n"
       << "fraction_invertible," << r.fraction_invertible << '\n'
       << "zero_covariance," << r.zero << '\n'
       << "min_lambda_min," << r.min_lambda_min << '\n';
    for (std::size_t i = 0; i < r.quantiles.size(); ++i)
        ss << "lambda_min_q" << InvertibilityReport::probabilities[i] << ',' << r.quantiles[i] << '\n';
    w.csv("malliavin_summary.csv", ss.str());
    bool nondegenerate = true;
    if (const auto* spec = std::get_if<SubordinatorSpec>(&c.driver)) {
        const auto nd = nondegeneracy_check(*spec);
        nondegenerate = nd.pass;
        if (!nd.pass) std::cerr << "warning: " << nd.warning << '\n';
    }
    // Positive lambda_min on every path; the relative floor is reported, not enforced.
    const bool verified = nondegenerate && r.zero == 0 && r.min_lambda_min > 0.0;
    auto& s = w.summary();
    s["fraction_invertible"] = r.fraction_invertible;
    s["zero_covariance"] = r.zero;
    s["min_lambda_min"] = r.min_lambda_min;
    s["nondegenerate"] = nondegenerate;
    s["verified"] = verified;
    std::cout << "malliavin: fraction with lambda_min > " << r.relative_floor << " lambda_max = " << r.fraction_invertible
              << ", zero covariance on " << r.zero << " paths\n";
    return verified ? kOk : kNotVerified;
}

int tv_profile_cmd(const ExperimentConfig& c, ReportWriter& w, const std::string& prefix = "") {
    const LyapunovFunction h = c.lyapunov_function();
    const LyapunovFunction* proj = c.model.chain ? &h : nullptr;
    const auto setup = c.tv_setup();
    const auto f = feller_profile(c.model.model, c.tv.x, c.tv.direction, c.tv.radii, c.driver, setup, proj);
    std::ostringstream os;
    write_csv(os, f);
    w.csv(prefix + "tv_profile.csv", os.str());
    auto& s = w.summary()["tv_profile"];
    s = {{"decreasing", f.decreasing}, {"reaches_floor", f.reaches_floor}, {"verdict", f.verdict},
         {"binning", f.estimates.front().binning}};
    std::cout << "tv-profile: " << f.verdict << '\n';
    for (std::size_t i = 0; i < f.radii.size(); ++i)
        std::cout << "  r = " << f.radii[i] << "  tv = " << f.estimates[i].value << "  floor = " << f.estimates[i].noise_floor
                  << "  se = " << f.estimates[i].std_error << '\n';

    if (!c.tv.levels.empty()) {
        const Vector y = c.tv.x + c.tv.level_radius * c.tv.direction.normalized();
        const auto plain = tv_estimate(c.model.model, c.tv.x, y, c.driver, setup, proj);
        std::ostringstream ls;
        ls.precision(17);
        ls << "level,r,tv,noise_floor,stderr,exit_prob_x,exit_prob_y,mean_sup_h_x,mean_sup_h_y,corrected_bound\n";
        ls << "inf," << c.tv.level_radius << ',' << plain.value << ',' << plain.noise_floor << ',' << plain.std_error
           << ",0,0,NA,NA," << plain.value << '\n';
        for (int level : c.tv.levels) {
            const auto l = localized_tv_estimate(c.model.model, h, level, c.tv.x, y, c.driver, setup);
            ls << level << ',' << c.tv.level_radius << ',' << l.localized.value << ',' << l.localized.noise_floor << ','
               << l.localized.std_error << ',' << l.exit_prob_x << ',' << l.exit_prob_y << ',' << l.mean_sup_h_x << ','
               << l.mean_sup_h_y << ',' << l.corrected_bound << '\n';
            std::cout << "  level " << level << ": exit_prob_x = " << l.exit_prob_x << ", corrected bound = "
                      << l.corrected_bound << " (unlocalized " << plain.value << ")\n";
        }
        w.csv(prefix + "localized.csv", ls.str());
    }
    return f.decreasing && f.reaches_floor ? kOk : kNotVerified;
}

int oscillator_demo_cmd(const ExperimentConfig& c, ReportWriter& w) {
    if (!c.model.chain) throw ConfigError("model.kind: oscillator-demo needs the oscillator_chain model");
    const auto& params = c.model.chain->params;
    const auto pts = sample_points(c.hormander.center, c.hormander.scale, c.hormander.points, c.seed);
    std::ostringstream os;
    os << "point_id";
    coordinate_header(os, c.dim());
    os << ",rank,sigma_min,sigma_max,verdict\n";
    os.precision(17);
    std::size_t spanned = 0;
    for (std::size_t p = 0; p < pts.size(); ++p) {
        const auto s = bracket_span_check(params, pts[p], relative_tolerance(c.hormander.rank_safety));
        if (s.full_rank) ++spanned;
        os << p;
        for (Eigen::Index i = 0; i < c.dim(); ++i) os << ',' << pts[p](i);
        os << ',' << s.rank << ',' << s.singular_values(s.singular_values.size() - 1) << ',' << s.singular_values(0) << ','
           << (s.full_rank ? "pass" : "fail") << '\n';
    }
    w.csv("span_check.csv", os.str());
    const bool span_ok = spanned == pts.size();
    w.summary()["span_check"] = {{"points", pts.size()}, {"full_rank", spanned}, {"verified", span_ok}};
    std::cout << "span check: " << spanned << "/" << pts.size() << " points span R^" << c.dim() << '\n';

    const int lyap = check_lyapunov_cmd(c, w);
    const double kappa1 = w.summary()["lyapunov"]["kappa1"].get<double>();
    const bool lyap_ok = lyap == kOk && kappa1 == 0.0;
    const int tv = tv_profile_cmd(c, w);

    std::ostringstream sum;
    sum << "check,verdict\n"
        << "span_check," << (span_ok ? "pass" : "fail") << '\n'
        << "lyapunov_kappa1_zero," << (lyap_ok ? "pass" : "fail") << '\n'
        << "tv_profile," << (tv == kOk ? "pass" : "fail") << '\n';
    w.csv("summary.csv", sum.str());
    return span_ok && lyap_ok && tv == kOk ? kOk : kNotVerified;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulation and verification toolkit for SDEs driven by subordinated Brownian motion"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    unsigned threads = 1;
    app.add_option("--config", config_path, "experiment configuration (TOML)")->required()->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "master seed, overrides the config");
    app.add_option("--out", out, "output directory, overrides the config");
    app.add_option("--threads", threads, "worker threads")->check(CLI::Range(1u, 1024u));

    const std::vector<std::pair<std::string, std::string>> commands{
        {"simulate", "simulate trajectories and write path and terminal-state CSVs"},
        {"check-lyapunov", "estimate the Lyapunov constants on sampled points"},
        {"check-hormander", "check the bracket rank condition at x0 and on sampled points"},
        {"malliavin", "Monte Carlo invertibility of the Malliavin covariance"},
        {"tv-profile", "total-variation profile in the starting point, optionally localized"},
        {"oscillator-demo", "span check, Lyapunov constants and TV profile for the oscillator chain"}};
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        // Flags are accepted after the subcommand as well.
        sub->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    std::optional<ReportWriter> writer;
    try {
        const auto config = load_config(config_path, seed);
        worker_threads() = threads;
        std::filesystem::path dir = out.empty() ? std::filesystem::path(config.out) : std::filesystem::path(out);
        if (command == "oscillator-demo") dir /= "oscillator_demo";
        writer.emplace(config, command, dir);
        int rc = kOk;
        if (command == "simulate")
            rc = simulate(config, *writer);
        else if (command == "check-lyapunov")
            rc = check_lyapunov_cmd(config, *writer);
        else if (command == "check-hormander")
            rc = check_hormander_cmd(config, *writer);
        else if (command == "malliavin")
            rc = malliavin_cmd(config, *writer);
        else if (command == "tv-profile")
            rc = tv_profile_cmd(config, *writer);
        else
            rc = oscillator_demo_cmd(config, *writer);
        writer->finish(rc);
        std::cout << "reports in " << writer->dir().string() << '\n';
        return rc;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kUsage;
    } catch (const ExplosionError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        if (writer) writer->finish(kNumerical);
        return kNumerical;
    } catch (const FlowDivergenceError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        if (writer) writer->finish(kNumerical);
        return kNumerical;
    } catch (const hfl::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumerical;
    }
}

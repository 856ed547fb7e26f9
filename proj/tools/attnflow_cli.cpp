// attnflow command-line runner. Every subcommand resolves its flags into a JSON
// config, writes its data files plus a manifest, and can be replayed with
// `attnflow rerun <manifest>`.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "attnflow/analysis.hpp"
#include "attnflow/energy.hpp"
#include "attnflow/geometry.hpp"
#include "attnflow/integrate.hpp"
#include "attnflow/io.hpp"
#include "attnflow/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace attnflow;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitInvariant = 2;

struct Context {
    fs::path out_dir;
    std::string command_line;
    unsigned threads = 0;
};

fs::path default_out_dir() {
    if (const char* env = std::getenv("ATTNFLOW_OUT_DIR"); env && *env) {
        return env;
    }
    return ".";
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("config", "cannot open '" + path.string() + "'");
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        // e.byte is the offset where parsing stopped; report the line.
        in.clear();
        in.seekg(0);
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        const auto upto = std::min<std::size_t>(e.byte, text.size());
        const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
        throw ConfigError("config", path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
}

template <class T>
T cfg_get(const json& cfg, const char* key) {
    if (!cfg.contains(key)) {
        throw ConfigError(key, "missing required field");
    }
    try {
        return cfg.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(key, e.what());
    }
}

std::vector<double> linspace(double lo, double hi, int count) {
    std::vector<double> out;
    for (int k = 0; k < count; ++k) {
        out.push_back(count == 1 ? lo : lo + (hi - lo) * k / (count - 1));
    }
    return out;
}

void finish(const Context& ctx, const std::string& name, const json& config, std::uint64_t seed,
            std::chrono::steady_clock::time_point start, std::vector<std::string> outputs,
            std::map<std::string, bool> invariants) {
    RunManifest m;
    m.command_line = ctx.command_line;
    m.config = config;
    m.config["command"] = name;
    m.master_seed = seed;
    m.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    m.outputs = std::move(outputs);
    m.invariants = std::move(invariants);
    write_manifest(ctx.out_dir / (name + ".manifest.json"), m);
}

// ---------------------------------------------------------------- simulate

Mat initial_state(const json& cfg, const ModelSpec& model) {
    if (cfg.contains("initial")) {
        Mat x = matrix_from_json(cfg.at("initial"), "initial");
        if (state_kind(model.variant) == StateKind::Sphere) {
            try {
                Configuration c(x);
            } catch (const DomainError& e) {
                throw ConfigError("initial", e.what());
            }
        }
        return x;
    }
    const long n = cfg_get<long>(cfg, "n");
    const auto seed = cfg.value("seed", std::uint64_t{0});
    const std::string init = cfg.value("init", std::string("uniform"));
    if (state_kind(model.variant) == StateKind::Angles) {
        if (init != "uniform") {
            throw ConfigError("init", "angle models only support 'uniform'");
        }
        Rng rng(seed);
        std::uniform_real_distribution<double> unif(0.0, 2.0 * std::numbers::pi);
        Mat theta(n, 1);
        for (long i = 0; i < n; ++i) {
            theta(i, 0) = unif(rng);
        }
        return theta;
    }
    const long d = cfg_get<long>(cfg, "d");
    if (n < 1 || d < 2) {
        throw ConfigError("n", "need n >= 1 and d >= 2");
    }
    if (init == "uniform") {
        return sample_uniform(n, d, seed).points();
    }
    if (init == "orthonormal") {
        if (n > d) {
            throw ConfigError("init", "orthonormal start needs n <= d");
        }
        return sample_orthonormal(n, d, seed).points();
    }
    throw ConfigError("init", "expected uniform or orthonormal");
}

int run_simulate(const json& cfg, const Context& ctx) {
    const auto start = std::chrono::steady_clock::now();
    if (!cfg.contains("model")) {
        throw ConfigError("model", "missing required section");
    }
    const ModelSpec model = model_from_json(cfg.at("model"));
    const IntegratorConfig icfg = integrator_from_json(cfg.value("integrator", json::object()));
    const double delta = cfg.value("delta", 1e-3);
    const Mat x0 = initial_state(cfg, model);
    if (state_kind(model.variant) != StateKind::Angles) {
        try {
            model.validate(x0.cols());
        } catch (const DomainError& e) {
            throw ConfigError("model", e.what());
        }
    }

    const Trajectory traj = integrate(x0, model, icfg);
    std::vector<std::string> outputs{"trajectory.csv", "energy.csv"};
    write_trajectory_csv(ctx.out_dir / "trajectory.csv", traj);
    write_energy_csv(ctx.out_dir / "energy.csv", traj);
    if (traj.kind != StateKind::Euclidean) {
        write_cluster_timeline_csv(ctx.out_dir / "clusters.csv", cluster_timeline(traj, delta));
        outputs.push_back("clusters.csv");
    }
    std::map<std::string, bool> inv{{"finite_state", !traj.error}};
    if (traj.monotonicity_checked) {
        inv["energy_monotone"] = !traj.energy_violation;
    }
    finish(ctx, "simulate", cfg, cfg.value("seed", std::uint64_t{0}), start, outputs, inv);

    const auto& last = traj.final_state();
    std::cout << "simulated " << to_string(model.variant) << " n=" << last.rows() << " to t=" << traj.times.back()
              << (traj.stopped_early ? " (early stop)" : "") << '\n';
    if (traj.error) {
        std::cerr << "invariant violation: " << traj.error_message << '\n';
        return kExitInvariant;
    }
    if (traj.energy_violation) {
        std::cerr << "invariant violation: energy monotonicity broken beyond slack\n";
        return kExitInvariant;
    }
    return kExitOk;
}

// ----------------------------------------------------------- phase-diagram

int run_phase_diagram(const json& cfg, const Context& ctx) {
    const auto start = std::chrono::steady_clock::now();
    PhaseDiagramParams p;
    p.n = cfg_get<long>(cfg, "n");
    p.d = cfg_get<long>(cfg, "d");
    p.delta = cfg_get<double>(cfg, "delta");
    p.reps = cfg_get<int>(cfg, "reps");
    p.master_seed = cfg_get<std::uint64_t>(cfg, "seed");
    p.dt = cfg_get<double>(cfg, "dt");
    p.threads = ctx.threads;
    const int t_steps = cfg_get<int>(cfg, "t_steps");
    const int beta_steps = cfg_get<int>(cfg, "beta_steps");
    if (t_steps < 2 || beta_steps < 2) {
        throw ConfigError(t_steps < 2 ? "t_steps" : "beta_steps", "grids need at least 2 points");
    }
    if (p.reps < 1) {
        throw ConfigError("reps", "must be >= 1");
    }
    p.t_grid = linspace(0.0, cfg_get<double>(cfg, "t_max"), t_steps);
    p.beta_grid = linspace(0.0, cfg_get<double>(cfg, "beta_max"), beta_steps);
    const std::string qkv = cfg_get<std::string>(cfg, "qkv");
    const std::string value = cfg_get<std::string>(cfg, "value");
    if (qkv != "identity" || value != "identity") {
        try {
            p.model = random_qkv_model(qkv, value, p.d, derive_seed(p.master_seed, 0xC0FFEEull));
        } catch (const DomainError& e) {
            throw ConfigError("qkv", e.what());
        }
    }
    PhaseGrid grid;
    try {
        grid = empirical_phase_diagram(p);
    } catch (const DomainError& e) {
        throw ConfigError("", e.what());
    }
    write_phase_grid_csv(ctx.out_dir / "phase_grid.csv", grid);
    const auto curve = phase_curve_infty(p.n, p.beta_grid, p.delta, Variant::SA);
    write_curve_csv(ctx.out_dir / "phase_curve.csv", curve);
    finish(ctx, "phase-diagram", cfg, p.master_seed, start, {"phase_grid.csv", "phase_curve.csv"}, {});
    std::cout << "phase grid " << beta_steps << "x" << t_steps << " with " << p.reps << " reps written\n";
    return kExitOk;
}

// ------------------------------------------------------------------- gamma

int run_gamma(const json& cfg, const Context& ctx) {
    const auto start = std::chrono::steady_clock::now();
    const double beta = cfg_get<double>(cfg, "beta");
    const long n = cfg_get<long>(cfg, "n");
    const double delta = cfg_get<double>(cfg, "delta");
    Variant variant;
    try {
        variant = parse_variant(cfg_get<std::string>(cfg, "variant"));
    } catch (const DomainError& e) {
        throw ConfigError("variant", e.what());
    }
    IntegratorConfig icfg;
    icfg.t_end = cfg_get<double>(cfg, "t_max");
    icfg.dt = cfg_get<double>(cfg, "dt");
    icfg.sample_every = icfg.dt;
    ScalarCurve curve;
    double t_star = 0.0;
    try {
        curve = integrate_gamma(beta, n, variant, icfg);
        t_star = solve_gamma_hitting_time(beta, n, variant, 1.0 - delta);
    } catch (const DomainError& e) {
        throw ConfigError("", e.what());
    }
    write_scalar_curve_csv(ctx.out_dir / "gamma.csv", curve, "gamma");
    write_text_atomic(ctx.out_dir / "gamma_hitting.json",
                      json{{"beta", beta}, {"n", n}, {"delta", delta}, {"t_star", t_star}}.dump(2) + "\n");
    finish(ctx, "gamma", cfg, 0, start, {"gamma.csv", "gamma_hitting.json"}, {});
    std::cout << "t_star " << format_double(t_star) << '\n';
    return kExitOk;
}

// --------------------------------------------------------------- landscape

json report_json(const LandscapeReport& r) {
    return {{"classification", to_string(r.classification)},
            {"grad_norm", r.grad_norm},
            {"hessian_eigs", std::vector<double>(r.hessian_eigs.data(), r.hessian_eigs.data() + r.hessian_eigs.size())},
            {"beta", r.beta},
            {"diagnostic", r.diagnostic}};
}

int run_landscape(const json& cfg, const Context& ctx) {
    const auto start = std::chrono::steady_clock::now();
    const std::string mode = cfg_get<std::string>(cfg, "mode");
    const double beta = cfg_get<double>(cfg, "beta");
    std::vector<std::string> outputs;
    try {
        if (mode == "classify") {
            LandscapeReport r;
            if (cfg.contains("theta") && !cfg.at("theta").empty()) {
                const auto th = cfg_get<std::vector<double>>(cfg, "theta");
                r = classify_critical_point(Vec(Eigen::Map<const Vec>(th.data(), static_cast<Eigen::Index>(th.size()))),
                                            beta);
            } else if (cfg.contains("points")) {
                r = classify_critical_point(Configuration::normalized(matrix_from_json(cfg.at("points"), "points")),
                                            beta);
            } else {
                throw ConfigError("theta", "classify needs --theta or --config with a points matrix");
            }
            write_text_atomic(ctx.out_dir / "landscape_report.json", report_json(r).dump(2) + "\n");
            outputs.push_back("landscape_report.json");
            std::cout << to_string(r.classification) << '\n';
        } else if (mode == "sweep-g") {
            const int d = cfg_get<int>(cfg, "d");
            const int points = cfg.value("points_count", 201);
            std::ostringstream out;
            out << "zeta,g\n";
            for (double z : linspace(0.0, std::numbers::pi, points)) {
                out << format_double(z) << ',' << format_double(g_function(z, beta, d)) << '\n';
            }
            write_text_atomic(ctx.out_dir / "g_sweep.csv", out.str());
            outputs.push_back("g_sweep.csv");
        } else if (mode == "tau-star") {
            const int d = cfg_get<int>(cfg, "d");
            const double tau = tau_star(beta, d);
            write_text_atomic(ctx.out_dir / "tau_star.json",
                              json{{"beta", beta}, {"d", d}, {"tau_star", tau}}.dump(2) + "\n");
            outputs.push_back("tau_star.json");
            std::cout << format_double(tau) << '\n';
        } else {
            throw ConfigError("mode", "expected classify, sweep-g or tau-star");
        }
    } catch (const DomainError& e) {
        throw ConfigError("", e.what());
    }
    finish(ctx, "landscape", cfg, 0, start, outputs, {});
    return kExitOk;
}

// ------------------------------------------------------------------ wendel

int run_wendel(const json& cfg, const Context& ctx) {
    const auto start = std::chrono::steady_clock::now();
    const long n = cfg_get<long>(cfg, "n");
    const long d = cfg_get<long>(cfg, "d");
    const long mc = cfg.value("mc", 0L);
    const auto seed = cfg.value("seed", std::uint64_t{0});
    if (n < 1 || d < 1) {
        throw ConfigError("n", "need n >= 1 and d >= 1");
    }
    const double exact = wendel_probability(n, d);
    json result{{"n", n}, {"d", d}, {"exact", exact}};
    std::cout << "exact " << format_double(exact) << '\n';
    if (mc > 0) {
        if (d < 2) {
            throw ConfigError("d", "Monte Carlo needs d >= 2");
        }
        std::vector<char> hit(static_cast<std::size_t>(mc));
        parallel_for(hit.size(), ctx.threads, [&](std::size_t k) {
            hit[k] = hemisphere_witness(sample_uniform(n, d, derive_seed(seed, k))).witness.has_value() ? 1 : 0;
        });
        const double p = static_cast<double>(std::count(hit.begin(), hit.end(), 1)) / static_cast<double>(mc);
        const double se = std::sqrt(p * (1.0 - p) / static_cast<double>(mc));
        result["mc_samples"] = mc;
        result["estimate"] = p;
        result["stderr"] = se;
        std::cout << "estimate " << format_double(p) << " stderr " << format_double(se) << '\n';
    }
    write_text_atomic(ctx.out_dir / "wendel.json", result.dump(2) + "\n");
    finish(ctx, "wendel", cfg, seed, start, {"wendel.json"}, {});
    return kExitOk;
}

// -------------------------------------------------------- pair-correlation

int run_pair_correlation(const json& cfg, const Context& ctx) {
    const auto start = std::chrono::steady_clock::now();
    PairCorrelationParams p;
    p.model.variant = Variant::Angular;
    p.model.coupling = Coupling::ExpCos;
    p.model.beta = cfg_get<double>(cfg, "beta");
    p.n = cfg_get<long>(cfg, "n");
    p.t_probe = cfg_get<double>(cfg, "t");
    p.reps = cfg_get<int>(cfg, "reps");
    p.bins = cfg_get<int>(cfg, "bins");
    p.master_seed = cfg_get<std::uint64_t>(cfg, "seed");
    p.dt = cfg_get<double>(cfg, "dt");
    p.threads = ctx.threads;
    Histogram h;
    try {
        h = pair_correlation_circle(p);
    } catch (const DomainError& e) {
        throw ConfigError("", e.what());
    }
    write_histogram_csv(ctx.out_dir / "pair_correlation.csv", h, true);
    finish(ctx, "pair-correlation", cfg, p.master_seed, start, {"pair_correlation.csv"}, {});
    return kExitOk;
}

int dispatch(const std::string& name, const json& cfg, const Context& ctx) {
    fs::create_directories(ctx.out_dir);
    if (name == "simulate") return run_simulate(cfg, ctx);
    if (name == "phase-diagram") return run_phase_diagram(cfg, ctx);
    if (name == "gamma") return run_gamma(cfg, ctx);
    if (name == "landscape") return run_landscape(cfg, ctx);
    if (name == "wendel") return run_wendel(cfg, ctx);
    if (name == "pair-correlation") return run_pair_correlation(cfg, ctx);
    throw ConfigError("command", "unknown command '" + name + "'");
}

/// Stores a flag value into cfg when the user supplied it.
template <class T>
void put_if(json& cfg, const char* key, const CLI::Option* opt, const T& value) {
    if (opt->count() > 0) {
        cfg[key] = value;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"attnflow: self-attention particle dynamics on spheres"};
    app.require_subcommand(1);
    std::string out_dir = default_out_dir().string();
    unsigned threads = 0;
    app.add_option("-o,--out", out_dir, "Output directory (default: $ATTNFLOW_OUT_DIR or .)");
    app.add_option("--threads", threads, "Worker threads (0 = hardware concurrency)");

    std::string cmdline;
    for (int i = 0; i < argc; ++i) {
        cmdline += (i ? " " : "") + std::string(argv[i]);
    }

    // simulate
    auto* sim = app.add_subcommand("simulate", "Integrate one trajectory from a JSON config");
    std::string sim_config;
    std::string s_variant, s_init;
    double s_beta = 0, s_dt = 0, s_tend = 0, s_sample = 0, s_delta = 0, s_stop = 0;
    long s_n = 0, s_d = 0;
    int s_sign = 1;
    std::uint64_t s_seed = 0;
    sim->add_option("config", sim_config, "JSON config file (a manifest is also accepted)");
    auto* o_variant = sim->add_option("--variant", s_variant, "sa|usa|qkv|multihead|angular|hardmax|euclidean_rescaled");
    auto* o_beta = sim->add_option("--beta", s_beta, "Inverse temperature");
    auto* o_sign = sim->add_option("--value-sign", s_sign, "+1 attractive, -1 repulsive");
    auto* o_n = sim->add_option("--n", s_n, "Number of particles");
    auto* o_d = sim->add_option("--d", s_d, "Ambient dimension");
    auto* o_seed = sim->add_option("--seed", s_seed, "Seed for the initial configuration");
    auto* o_init = sim->add_option("--init", s_init, "uniform|orthonormal");
    auto* o_dt = sim->add_option("--dt", s_dt, "Step size");
    auto* o_tend = sim->add_option("--t-end", s_tend, "Final time");
    auto* o_sample = sim->add_option("--sample-every", s_sample, "Sampling interval");
    auto* o_stop = sim->add_option("--stop-tol", s_stop, "Early stop on max pairwise distance");
    auto* o_delta = sim->add_option("--delta", s_delta, "Cluster threshold for the timeline");

    // phase-diagram
    auto* pd = app.add_subcommand("phase-diagram", "Empirical clustering probability over (beta, t)");
    json pd_cfg{{"n", 32},       {"d", 512},         {"delta", 1e-3},      {"t_max", 40.0},
                {"t_steps", 24}, {"beta_max", 9.0},  {"beta_steps", 24},   {"reps", 64},
                {"seed", 0},     {"qkv", "identity"}, {"value", "identity"}, {"dt", 0.02}};
    long pd_n, pd_d;
    double pd_delta, pd_tmax, pd_bmax, pd_dt;
    int pd_ts, pd_bs, pd_reps;
    std::uint64_t pd_seed;
    std::string pd_qkv, pd_value;
    std::vector<std::pair<const char*, CLI::Option*>> pd_opts{
        {"n", pd->add_option("--n", pd_n, "Particles per run")},
        {"d", pd->add_option("--d", pd_d, "Ambient dimension")},
        {"delta", pd->add_option("--delta", pd_delta, "Clustering threshold on <x1,x2>")},
        {"t_max", pd->add_option("--t-max", pd_tmax, "Largest time on the grid")},
        {"t_steps", pd->add_option("--t-steps", pd_ts, "Number of time grid points")},
        {"beta_max", pd->add_option("--beta-max", pd_bmax, "Largest beta on the grid")},
        {"beta_steps", pd->add_option("--beta-steps", pd_bs, "Number of beta grid points")},
        {"reps", pd->add_option("--reps", pd_reps, "Random starts per grid row")},
        {"seed", pd->add_option("--seed", pd_seed, "Master seed")},
        {"qkv", pd->add_option("--qkv", pd_qkv, "identity|ginibre|wigner-sym")},
        {"value", pd->add_option("--value", pd_value, "identity|equalsQK|gaussian-PSD|ginibre")},
        {"dt", pd->add_option("--dt", pd_dt, "Step size")}};

    // gamma
    auto* gm = app.add_subcommand("gamma", "Common inner product ODE for orthonormal starts");
    json gm_cfg{{"beta", 1.0}, {"n", 2}, {"variant", "sa"}, {"delta", 1e-3}, {"t_max", 20.0}, {"dt", 1e-2}};
    double g_beta, g_delta, g_tmax, g_dt;
    long g_n;
    std::string g_variant;
    std::vector<std::pair<const char*, CLI::Option*>> gm_opts{
        {"beta", gm->add_option("--beta", g_beta, "Inverse temperature")},           {"n", gm->add_option("--n", g_n, "Number of particles")},
        {"variant", gm->add_option("--variant", g_variant, "sa|usa")},  {"delta", gm->add_option("--delta", g_delta, "Hitting level is 1 - delta")},
        {"t_max", gm->add_option("--t-max", g_tmax, "Final time")},         {"dt", gm->add_option("--dt", g_dt, "Step size")}};

    // landscape
    auto* ls = app.add_subcommand("landscape", "Critical point classification and saddle machinery");
    json ls_cfg{{"mode", "classify"}, {"beta", 1.0}, {"d", 2}};
    std::string l_mode, l_config;
    double l_beta;
    int l_d, l_points;
    std::vector<double> l_theta;
    auto* o_lmode = ls->add_option("--mode", l_mode, "classify|sweep-g|tau-star");
    auto* o_lbeta = ls->add_option("--beta", l_beta, "Inverse temperature");
    auto* o_ld = ls->add_option("--d", l_d, "Sphere dimension for g and tau*");
    auto* o_lpoints = ls->add_option("--grid-points", l_points, "Grid size for sweep-g");
    auto* o_ltheta = ls->add_option("--theta", l_theta, "Angles of a circle configuration")->delimiter(',');
    ls->add_option("--config", l_config, "JSON file with a `points` matrix");
    ls->add_option("--n", "Particle count (implied by --theta / --config)");

    // wendel
    auto* wd = app.add_subcommand("wendel", "Probability that n uniform points share a hemisphere");
    json wd_cfg{{"seed", 0}, {"mc", 0}};
    long w_n, w_d, w_mc;
    std::uint64_t w_seed;
    std::vector<std::pair<const char*, CLI::Option*>> wd_opts{{"n", wd->add_option("--n", w_n, "Number of points")->required()},
                                                              {"d", wd->add_option("--d", w_d, "Ambient dimension")->required()},
                                                              {"mc", wd->add_option("--mc", w_mc, "Monte Carlo samples (0 = exact only)")},
                                                              {"seed", wd->add_option("--seed", w_seed, "Master seed")}};

    // pair-correlation
    auto* pc = app.add_subcommand("pair-correlation", "Density of theta_2 - theta_1 on the circle");
    json pc_cfg{{"beta", 1.0}, {"n", 8}, {"t", 0.0}, {"reps", 1000}, {"bins", 128}, {"seed", 0}, {"dt", 1e-2}};
    double c_beta, c_t, c_dt;
    long c_n;
    int c_reps, c_bins;
    std::uint64_t c_seed;
    std::vector<std::pair<const char*, CLI::Option*>> pc_opts{
        {"beta", pc->add_option("--beta", c_beta, "Inverse temperature")}, {"n", pc->add_option("--n", c_n, "Number of particles")},
        {"t", pc->add_option("--t", c_t, "Probe time")},          {"reps", pc->add_option("--reps", c_reps, "Random starts")},
        {"bins", pc->add_option("--bins", c_bins, "Histogram bins on [-pi, pi)")}, {"seed", pc->add_option("--seed", c_seed, "Master seed")},
        {"dt", pc->add_option("--dt", c_dt, "Step size")}};

    // rerun
    auto* rr = app.add_subcommand("rerun", "Replay a run from its manifest");
    std::string rr_manifest;
    rr->add_option("manifest", rr_manifest)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    Context ctx{out_dir, cmdline, threads};
    // Copies the parsed value of each supplied option into cfg[key].
    auto merge = [](json& cfg, const std::vector<std::pair<const char*, CLI::Option*>>& opts) {
        for (const auto& [key, opt] : opts) {
            if (opt->count() == 0) {
                continue;
            }
            const std::string raw = opt->as<std::string>();
            const json parsed = json::parse(raw, nullptr, false);
            cfg[key] = parsed.is_discarded() || parsed.is_object() || parsed.is_array() ? json(raw) : parsed;
        }
    };

    try {
        if (sim->parsed()) {
            json cfg = json::object();
            if (!sim_config.empty()) {
                cfg = read_json_file(sim_config);
                if (cfg.contains("config") && cfg.contains("version")) {
                    cfg = cfg.at("config");
                }
            }
            if (!cfg.contains("model")) cfg["model"] = json::object();
            if (!cfg.contains("integrator")) cfg["integrator"] = json::object();
            put_if(cfg["model"], "variant", o_variant, s_variant);
            put_if(cfg["model"], "beta", o_beta, s_beta);
            put_if(cfg["model"], "value_sign", o_sign, s_sign);
            put_if(cfg, "n", o_n, s_n);
            put_if(cfg, "d", o_d, s_d);
            put_if(cfg, "seed", o_seed, s_seed);
            put_if(cfg, "init", o_init, s_init);
            put_if(cfg, "delta", o_delta, s_delta);
            put_if(cfg["integrator"], "dt", o_dt, s_dt);
            put_if(cfg["integrator"], "t_end", o_tend, s_tend);
            put_if(cfg["integrator"], "sample_every", o_sample, s_sample);
            put_if(cfg["integrator"], "stop_tol", o_stop, s_stop);
            cfg.erase("command");
            return dispatch("simulate", cfg, ctx);
        }
        if (pd->parsed()) {
            merge(pd_cfg, pd_opts);
            return dispatch("phase-diagram", pd_cfg, ctx);
        }
        if (gm->parsed()) {
            merge(gm_cfg, gm_opts);
            return dispatch("gamma", gm_cfg, ctx);
        }
        if (ls->parsed()) {
            if (!l_config.empty()) {
                const json file = read_json_file(l_config);
                for (const auto& [k, v] : file.items()) {
                    ls_cfg[k] = v;
                }
            }
            put_if(ls_cfg, "mode", o_lmode, l_mode);
            put_if(ls_cfg, "beta", o_lbeta, l_beta);
            put_if(ls_cfg, "d", o_ld, l_d);
            put_if(ls_cfg, "points_count", o_lpoints, l_points);
            put_if(ls_cfg, "theta", o_ltheta, l_theta);
            return dispatch("landscape", ls_cfg, ctx);
        }
        if (wd->parsed()) {
            merge(wd_cfg, wd_opts);
            return dispatch("wendel", wd_cfg, ctx);
        }
        if (pc->parsed()) {
            merge(pc_cfg, pc_opts);
            return dispatch("pair-correlation", pc_cfg, ctx);
        }
        if (rr->parsed()) {
            const json manifest = read_json_file(rr_manifest);
            if (!manifest.contains("config") || !manifest.at("config").contains("command")) {
                throw ConfigError("config.command", "not a manifest");
            }
            json cfg = manifest.at("config");
            const std::string name = cfg.at("command").get<std::string>();
            cfg.erase("command");
            return dispatch(name, cfg, ctx);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DomainError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << '\n';
        return kExitInvariant;
    }
    return kExitOk;
}

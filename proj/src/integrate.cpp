#include "attnflow/integrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "attnflow/energy.hpp"

namespace attnflow {

namespace {

Mat retract_rows(const Mat& x, const Mat& u, Retraction mode) {
    Mat out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        out.row(i) = retract(x.row(i).transpose(), u.row(i).transpose(), 1.0, mode).transpose();
    }
    return out;
}

Mat pullback_rows(const Mat& x, const Mat& u, const Mat& w, Retraction mode) {
    Mat out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        out.row(i) =
            retraction_pullback(x.row(i).transpose(), u.row(i).transpose(), w.row(i).transpose(), mode).transpose();
    }
    return out;
}

bool monotone_energy_applies(const ModelSpec& m, bool noisy) {
    if (noisy) {
        return false;
    }
    switch (m.variant) {
        case Variant::SA:
        case Variant::USA:
            return m.is_isotropic();
        case Variant::Angular:
            return m.Kc > 0.0 && (!m.omega || m.omega->isZero(0.0));
        default:
            return false;
    }
}

void record(Trajectory& tr, double t, const Mat& state) {
    tr.times.push_back(t);
    tr.energies.push_back(state_energy(state, tr.model));
    double lo = 1.0;
    double hi = -1.0;
    const Eigen::Index n = state.rows();
    if (tr.kind == StateKind::Angles) {
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = i + 1; j < n; ++j) {
                const double c = std::cos(state(i, 0) - state(j, 0));
                lo = std::min(lo, c);
                hi = std::max(hi, c);
            }
        }
    } else {
        const Mat g = state * state.transpose();
        lo = g.minCoeff();
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = i + 1; j < n; ++j) {
                hi = std::max(hi, g(i, j));
            }
        }
    }
    if (n == 1) {
        lo = 1.0;
        hi = 1.0;
    }
    tr.min_gram.push_back(lo);
    tr.max_offdiag_gram.push_back(hi);
    if (tr.integrator.record_states || tr.states.empty()) {
        tr.states.push_back(state);
    } else {
        tr.states.back() = state;
    }
    if (tr.monotonicity_checked && tr.energies.size() >= 2) {
        const double prev = tr.energies[tr.energies.size() - 2];
        const double cur = tr.energies.back();
        const double slack = kEnergySlack * std::max(1.0, std::abs(prev));
        const bool ascent = tr.model.value_sign > 0 || tr.model.variant == Variant::Angular;
        if ((ascent && cur < prev - slack) || (!ascent && cur > prev + slack)) {
            tr.energy_violation = true;
        }
    }
}

double max_pairwise_distance(const Mat& state, StateKind kind) {
    if (kind != StateKind::Sphere) {
        return std::numeric_limits<double>::infinity();
    }
    double worst = 0.0;
    for (Eigen::Index i = 0; i < state.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < state.rows(); ++j) {
            worst = std::max(worst, (state.row(i) - state.row(j)).norm());
        }
    }
    return worst;
}

Trajectory run(const Mat& initial, const ModelSpec& model, const IntegratorConfig& cfg, bool noisy) {
    cfg.validate();
    Trajectory tr;
    tr.kind = state_kind(model.variant);
    tr.model = model;
    tr.integrator = cfg;
    if (tr.kind == StateKind::Angles) {
        if (initial.cols() != 1) {
            throw DomainError("integrate: angular variant expects an n x 1 state");
        }
    } else {
        model.validate(initial.cols());
    }
    Mat state = initial;
    if (tr.kind == StateKind::Sphere) {
        state = Configuration(initial).points();
    }
    const double sigma = noisy ? std::max(cfg.noise_sigma, model.noise_sigma) : 0.0;
    tr.monotonicity_checked = monotone_energy_applies(model, sigma > 0.0);

    Rng rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    record(tr, 0.0, state);
    if (cfg.t_end <= 0.0) {
        return tr;
    }
    const long samples = std::max(1L, static_cast<long>(std::ceil(cfg.t_end / cfg.sample_every - 1e-9)));
    long steps_taken = 0;
    double t = 0.0;
    for (long k = 1; k <= samples; ++k) {
        const double t_next = std::min(cfg.t_end, static_cast<double>(k) * cfg.sample_every);
        const double interval = t_next - t;
        const long m = std::max(1L, static_cast<long>(std::ceil(interval / cfg.dt - 1e-9)));
        const double h = interval / static_cast<double>(m);
        for (long s = 0; s < m; ++s) {
            try {
                if (sigma > 0.0) {
                    Mat drift = velocity(state, t, model);
                    Mat xi(state.rows(), state.cols());
                    for (Eigen::Index i = 0; i < xi.rows(); ++i) {
                        for (Eigen::Index j = 0; j < xi.cols(); ++j) {
                            xi(i, j) = normal(rng);
                        }
                    }
                    if (tr.kind == StateKind::Sphere) {
                        const Mat inc = h * drift + sigma * std::sqrt(h) * project_rows(state, xi);
                        state = retract_rows(state, inc, cfg.retraction);
                    } else {
                        state += h * drift + sigma * std::sqrt(h) * xi;
                    }
                } else if (cfg.scheme == Scheme::EulerRetract) {
                    state = step_euler(state, t, h, model, cfg.retraction);
                } else {
                    state = step_rk4(state, t, h, model, cfg.retraction);
                }
            } catch (const DomainError& e) {
                tr.error = true;
                tr.error_message = e.what();
                return tr;
            }
            t = (s + 1 == m) ? t_next : t + h;
            if (!state.allFinite()) {
                tr.error = true;
                tr.error_message = "non-finite state at t = " + std::to_string(t);
                return tr;
            }
            if (++steps_taken > cfg.max_steps) {
                tr.error = true;
                tr.error_message = "max_steps exceeded";
                return tr;
            }
        }
        record(tr, t_next, state);
        if (cfg.stop_tol > 0.0 && max_pairwise_distance(state, tr.kind) < cfg.stop_tol) {
            tr.stopped_early = true;
            break;
        }
    }
    return tr;
}

}  // namespace

void IntegratorConfig::validate() const {
    if (!(dt > 0.0)) {
        throw DomainError("IntegratorConfig: dt must be > 0");
    }
    if (!(sample_every > 0.0)) {
        throw DomainError("IntegratorConfig: sample_every must be > 0");
    }
    if (t_end < 0.0) {
        throw DomainError("IntegratorConfig: t_end must be >= 0");
    }
    if (t_end > 0.0 && (dt > sample_every * (1 + 1e-12) || sample_every > t_end * (1 + 1e-12))) {
        throw DomainError("IntegratorConfig: require dt <= sample_every <= t_end");
    }
    if (noise_sigma < 0.0) {
        throw DomainError("IntegratorConfig: noise_sigma must be >= 0");
    }
    if (noise_sigma > 0.0 && scheme != Scheme::EulerRetract) {
        throw DomainError("IntegratorConfig: noise_sigma > 0 requires scheme EULER_RETRACT");
    }
}

double ScalarCurve::at(double t) const {
    if (times.empty()) {
        throw DomainError("ScalarCurve::at on empty curve");
    }
    if (t <= times.front()) {
        return values.front();
    }
    if (t >= times.back()) {
        return values.back();
    }
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    const auto k = static_cast<std::size_t>(it - times.begin());
    const double w = (t - times[k - 1]) / (times[k] - times[k - 1]);
    return (1.0 - w) * values[k - 1] + w * values[k];
}

Mat step_rk4(const Mat& x, double t, double h, const ModelSpec& model, Retraction mode) {
    if (state_kind(model.variant) != StateKind::Sphere) {
        const Mat k1 = velocity(x, t, model);
        const Mat k2 = velocity(x + 0.5 * h * k1, t + 0.5 * h, model);
        const Mat k3 = velocity(x + 0.5 * h * k2, t + 0.5 * h, model);
        const Mat k4 = velocity(x + h * k3, t + h, model);
        return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    // Classical RK4 in the retraction chart centred at x.
    const Mat k1 = project_rows(x, velocity(x, t, model));
    const Mat u2 = 0.5 * h * k1;
    const Mat k2 = pullback_rows(x, u2, velocity(retract_rows(x, u2, mode), t + 0.5 * h, model), mode);
    const Mat u3 = 0.5 * h * k2;
    const Mat k3 = pullback_rows(x, u3, velocity(retract_rows(x, u3, mode), t + 0.5 * h, model), mode);
    const Mat u4 = h * k3;
    const Mat k4 = pullback_rows(x, u4, velocity(retract_rows(x, u4, mode), t + h, model), mode);
    const Mat incr = project_rows(x, (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    return retract_rows(x, incr, mode);
}

Mat step_euler(const Mat& x, double t, double h, const ModelSpec& model, Retraction mode) {
    const Mat v = velocity(x, t, model);
    if (state_kind(model.variant) != StateKind::Sphere) {
        return x + h * v;
    }
    return retract_rows(x, h * project_rows(x, v), mode);
}

double state_energy(const Mat& state, const ModelSpec& model) {
    switch (state_kind(model.variant)) {
        case StateKind::Sphere: {
            const Configuration c = Configuration::normalized(state);
            return model.beta > 0.0 ? interaction_energy(c, model.beta) : energy_e0(c);
        }
        case StateKind::Angles:
            if (model.coupling == Coupling::ExpCos && model.beta > 0.0) {
                return energy_circle(state.col(0), model.beta);
            }
            return energy_kuramoto(state.col(0), model.coupling == Coupling::Sine ? model.Kc : 1.0);
        case StateKind::Euclidean:
            return std::numeric_limits<double>::quiet_NaN();
    }
    return std::numeric_limits<double>::quiet_NaN();
}

Trajectory integrate(const Mat& initial, const ModelSpec& model, const IntegratorConfig& cfg) {
    return run(initial, model, cfg, cfg.noise_sigma > 0.0 || model.noise_sigma > 0.0);
}

Trajectory integrate(const Configuration& initial, const ModelSpec& model, const IntegratorConfig& cfg) {
    return integrate(initial.points(), model, cfg);
}

std::vector<Mat> integrate_at(const Mat& initial, const ModelSpec& model, const std::vector<double>& times,
                              double dt, Retraction mode) {
    if (!(dt > 0.0)) {
        throw DomainError("integrate_at: dt must be > 0");
    }
    std::vector<Mat> out;
    out.reserve(times.size());
    Mat state = initial;
    double t = 0.0;
    for (double target : times) {
        if (target < t) {
            throw DomainError("integrate_at: times must be increasing and >= 0");
        }
        const double interval = target - t;
        if (interval > 0.0) {
            const long m = std::max(1L, static_cast<long>(std::ceil(interval / dt - 1e-9)));
            const double h = interval / static_cast<double>(m);
            for (long s = 0; s < m; ++s) {
                state = step_rk4(state, t + static_cast<double>(s) * h, h, model, mode);
            }
            t = target;
        }
        out.push_back(state);
    }
    return out;
}

Trajectory integrate_with_noise(const Mat& initial, const ModelSpec& model, const IntegratorConfig& cfg) {
    IntegratorConfig c = cfg;
    c.scheme = Scheme::EulerRetract;
    return run(initial, model, c, true);
}

double gamma_rhs(double g, double beta, long n, Variant variant) {
    const double nm1 = static_cast<double>(n - 1);
    const double core = (1.0 - g) * (nm1 * g + 1.0);
    if (variant == Variant::USA) {
        return 2.0 / static_cast<double>(n) * std::exp(beta * g) * core;
    }
    // Divide through by e^{beta gamma} to keep the exponent bounded.
    return 2.0 * core / (std::exp(beta * (1.0 - g)) + nm1);
}

namespace {

double gamma_step(double g, double h, double beta, long n, Variant v) {
    const double k1 = gamma_rhs(g, beta, n, v);
    const double k2 = gamma_rhs(g + 0.5 * h * k1, beta, n, v);
    const double k3 = gamma_rhs(g + 0.5 * h * k2, beta, n, v);
    const double k4 = gamma_rhs(g + h * k3, beta, n, v);
    return g + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// Largest |d rhs / d gamma| on [0, 1], sampled.
double gamma_lipschitz(double beta, long n, Variant v) {
    double lip = 0.0;
    constexpr int kGrid = 1000;
    constexpr double eps = 1e-6;
    for (int k = 0; k <= kGrid; ++k) {
        const double g = std::min(1.0 - eps, static_cast<double>(k) / kGrid);
        lip = std::max(lip, std::abs(gamma_rhs(g + eps, beta, n, v) - gamma_rhs(g - eps, beta, n, v)) / (2 * eps));
    }
    return lip;
}

std::vector<double> gamma_on_grid(const std::vector<double>& grid, double dt, double beta, long n, Variant v) {
    std::vector<double> out{0.0};
    double g = 0.0;
    for (std::size_t k = 1; k < grid.size(); ++k) {
        const double interval = grid[k] - grid[k - 1];
        const long m = std::max(1L, static_cast<long>(std::ceil(interval / dt - 1e-9)));
        const double h = interval / static_cast<double>(m);
        for (long s = 0; s < m; ++s) {
            g = gamma_step(g, h, beta, n, v);
        }
        out.push_back(g);
    }
    return out;
}

void check_gamma_args(double beta, long n, Variant variant) {
    if (n < 2) {
        throw DomainError("gamma ODE requires n >= 2");
    }
    if (beta < 0.0) {
        throw DomainError("gamma ODE requires beta >= 0");
    }
    if (variant != Variant::SA && variant != Variant::USA) {
        throw DomainError("gamma ODE variant must be SA or USA");
    }
}

}  // namespace

ScalarCurve integrate_gamma(double beta, long n, Variant variant, const IntegratorConfig& cfg) {
    check_gamma_args(beta, n, variant);
    cfg.validate();
    ScalarCurve curve;
    curve.beta = beta;
    curve.n = n;
    curve.variant = variant;
    const long samples = std::max(1L, static_cast<long>(std::ceil(cfg.t_end / cfg.sample_every - 1e-9)));
    curve.times.push_back(0.0);
    for (long k = 1; k <= samples; ++k) {
        curve.times.push_back(std::min(cfg.t_end, static_cast<double>(k) * cfg.sample_every));
    }
    double dt = std::min(cfg.dt, 0.25 / std::max(1e-12, gamma_lipschitz(beta, n, variant)));
    std::vector<double> coarse = gamma_on_grid(curve.times, dt, beta, n, variant);
    for (int refinement = 0; refinement < 20; ++refinement) {
        dt *= 0.5;
        std::vector<double> fine = gamma_on_grid(curve.times, dt, beta, n, variant);
        double diff = 0.0;
        for (std::size_t k = 0; k < fine.size(); ++k) {
            diff = std::max(diff, std::abs(fine[k] - coarse[k]));
        }
        coarse = std::move(fine);
        if (diff < 1e-10) {
            break;
        }
    }
    curve.values = std::move(coarse);
    return curve;
}

double solve_gamma_hitting_time(double beta, long n, Variant variant, double level, double max_horizon) {
    check_gamma_args(beta, n, variant);
    if (!(level > 0.0 && level < 1.0)) {
        throw DomainError("solve_gamma_hitting_time: level must lie in (0, 1)");
    }
    const double h = std::min(1e-2, 0.25 / std::max(1e-12, gamma_lipschitz(beta, n, variant)));
    double t = 0.0;
    double g = 0.0;
    while (true) {
        const double next = gamma_step(g, h, beta, n, variant);
        if (next >= level) {
            // Bisection on the sub-step length from the bracket's left end.
            double lo = 0.0;
            double hi = h;
            for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, t); ++it) {
                const double mid = 0.5 * (lo + hi);
                if (gamma_step(g, mid, beta, n, variant) < level) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return t + 0.5 * (lo + hi);
        }
        g = next;
        t += h;
        if (t > max_horizon) {
            throw DomainError("solve_gamma_hitting_time: level " + std::to_string(level) +
                              " not reached within horizon " + std::to_string(max_horizon) +
                              " (gamma = " + std::to_string(g) + ")");
        }
    }
}

double theoretical_deviation_bound(double t, double beta, long n, long d, const ScalarCurve& gamma_curve) {
    const double nn = static_cast<double>(n);
    const double dd = static_cast<double>(d);
    const double inv_n = 1.0 / nn;
    if (gamma_curve.times.empty() || gamma_curve.times.back() < inv_n) {
        throw DomainError("theoretical_deviation_bound: gamma curve must cover t = 1/n");
    }
    // 2 c(beta)^{n t} sqrt(log d / d), c(beta) = e^{10 max(1, beta)}
    const double log_first = nn * t * 10.0 * std::max(1.0, beta) + std::log(2.0 * std::sqrt(std::log(dd) / dd));
    const double first = std::exp(log_first);
    const double g1n = gamma_curve.at(inv_n);
    const double eb2 = std::exp(beta / 2.0);
    const double second = std::exp((1.0 - g1n * t) / (2.0 * nn * std::exp(2.0 * beta))) +
                          0.5 * std::exp(nn * nn * std::exp(beta) / (2.0 * (nn + eb2)) - nn * t / (nn + eb2));
    return std::min(first, second);
}

}  // namespace attnflow

#include "attnflow/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "attnflow/parallel.hpp"

namespace attnflow {

UnionFind::UnionFind(std::size_t n) : parent_(n), size_(n, 1) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
}

std::size_t UnionFind::find(std::size_t i) {
    while (parent_[i] != i) {
        parent_[i] = parent_[parent_[i]];
        i = parent_[i];
    }
    return i;
}

void UnionFind::unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) {
        return;
    }
    if (size_[a] < size_[b]) {
        std::swap(a, b);
    }
    parent_[b] = a;
    size_[a] += size_[b];
}

double consensus_residual(const Mat& x) {
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const double nrm = mean.norm();
    if (nrm < 1e-9) {
        return 2.0;
    }
    const Eigen::RowVectorXd xbar = mean / nrm;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        worst = std::max(worst, 0.5 * (x.row(i) - xbar).squaredNorm());
    }
    return worst;
}

ClusterSummary cluster_summary(const Configuration& c, double delta, double time) {
    if (!(delta > 0.0 && delta < 1.0)) {
        throw DomainError("cluster_summary: delta must lie in (0, 1)");
    }
    const auto n = static_cast<std::size_t>(c.n());
    const GramMatrix g = gram(c);
    UnionFind uf(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) >= 1.0 - delta) {
                uf.unite(i, j);
            }
        }
    }
    ClusterSummary s;
    s.time = time;
    s.delta = delta;
    s.labels.assign(n, -1);
    std::vector<int> root_label(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = uf.find(i);
        if (root_label[r] < 0) {
            root_label[r] = static_cast<int>(i);
            ++s.count;
        }
        s.labels[i] = root_label[r];
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (s.labels[i] == s.labels[j]) {
                const Vec diff = c.row(static_cast<Eigen::Index>(i)) - c.row(static_cast<Eigen::Index>(j));
                // Chord-based angle keeps precision for nearly coincident points.
                const double angle = 2.0 * std::asin(std::min(1.0, 0.5 * diff.norm()));
                s.max_intra_angle = std::max(s.max_intra_angle, angle);
            }
        }
    }
    s.residual = consensus_residual(c.points());
    return s;
}

std::vector<ClusterSummary> cluster_timeline(const Trajectory& traj, double delta) {
    if (traj.kind == StateKind::Euclidean) {
        throw DomainError("cluster_timeline: trajectory must live on the sphere or the circle");
    }
    if (traj.states.size() != traj.times.size()) {
        throw DomainError("cluster_timeline: trajectory was recorded without states");
    }
    std::vector<ClusterSummary> out;
    out.reserve(traj.times.size());
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        const Configuration c = traj.kind == StateKind::Angles ? circle_embed(traj.states[k].col(0))
                                                               : Configuration::normalized(traj.states[k]);
        out.push_back(cluster_summary(c, delta, traj.times[k]));
    }
    return out;
}

std::vector<Plateau> metastable_plateaus(const std::vector<double>& times, const std::vector<int>& counts,
                                         double min_duration) {
    std::vector<Plateau> out;
    std::size_t start = 0;
    for (std::size_t k = 1; k <= counts.size(); ++k) {
        if (k == counts.size() || counts[k] != counts[start]) {
            const double duration = times[k - 1] - times[start];
            if (counts[start] >= 2 && duration >= min_duration) {
                out.push_back({counts[start], times[start], times[k - 1]});
            }
            start = k;
        }
    }
    return out;
}

std::vector<Plateau> metastable_plateaus(const std::vector<ClusterSummary>& timeline, double min_duration) {
    std::vector<double> times;
    std::vector<int> counts;
    for (const auto& s : timeline) {
        times.push_back(s.time);
        counts.push_back(s.count);
    }
    return metastable_plateaus(times, counts, min_duration);
}

RateFit fit_exponential_rate(const std::vector<double>& times, const std::vector<double>& residuals,
                             std::pair<double, double> window) {
    RateFit fit;
    fit.window = window;
    std::vector<double> xs;
    std::vector<double> ys;
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (times[k] < window.first || times[k] > window.second) {
            continue;
        }
        if (!(residuals[k] >= 1e-15)) {
            fit.truncated = true;
            fit.window.second = xs.empty() ? window.first : xs.back();
            break;
        }
        xs.push_back(times[k]);
        ys.push_back(std::log(residuals[k]));
    }
    if (xs.size() < 2) {
        return fit;
    }
    const double m = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / m;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / m;
    double sxx = 0.0;
    double sxy = 0.0;
    double syy = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        sxx += (xs[k] - mx) * (xs[k] - mx);
        sxy += (xs[k] - mx) * (ys[k] - my);
        syy += (ys[k] - my) * (ys[k] - my);
    }
    // A series flat to round-off has no rate; report lambda = 0 and r^2 = 0.
    const bool flat = syy <= 1e-24 * m * std::max(1.0, my * my);
    const double slope = (sxx > 0.0 && !flat) ? sxy / sxx : 0.0;
    fit.lambda = -slope;
    fit.c = std::exp(my - slope * mx);
    fit.r2 = (!flat && sxx > 0.0) ? (sxy * sxy) / (sxx * syy) : 0.0;
    fit.converged = fit.lambda > 0.0 && fit.r2 > 0.5;
    return fit;
}

RateFit fit_exponential_rate(const Trajectory& traj, std::pair<double, double> window) {
    if (traj.kind != StateKind::Sphere || traj.states.size() != traj.times.size()) {
        throw DomainError("fit_exponential_rate: need a sphere trajectory with stored states");
    }
    std::vector<double> residuals;
    residuals.reserve(traj.states.size());
    for (const auto& s : traj.states) {
        residuals.push_back(consensus_residual(s));
    }
    return fit_exponential_rate(traj.times, residuals, window);
}

Histogram gram_histogram(const Configuration& c, int bins) {
    if (bins < 1) {
        throw DomainError("gram_histogram: bins must be >= 1");
    }
    Histogram h;
    const double width = 2.0 / bins;
    for (int b = 0; b < bins; ++b) {
        h.bin_lo.push_back(-1.0 + b * width);
        h.bin_hi.push_back(-1.0 + (b + 1) * width);
    }
    h.counts.assign(static_cast<std::size_t>(bins), 0);
    const GramMatrix g = gram(c);
    for (Eigen::Index i = 0; i < c.n(); ++i) {
        for (Eigen::Index j = 0; j < c.n(); ++j) {
            if (i == j) {
                continue;
            }
            const int b = std::clamp(static_cast<int>(std::floor((g(i, j) + 1.0) / width)), 0, bins - 1);
            ++h.counts[static_cast<std::size_t>(b)];
            ++h.total;
        }
    }
    for (long cnt : h.counts) {
        h.density.push_back(h.total > 0 ? static_cast<double>(cnt) / (static_cast<double>(h.total) * width) : 0.0);
    }
    return h;
}

Histogram gram_histogram(const Trajectory& traj, double t, int bins) {
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        if (std::abs(traj.times[k] - t) <= 1e-9 * std::max(1.0, std::abs(t))) {
            if (k >= traj.states.size()) {
                break;
            }
            const Configuration c = traj.kind == StateKind::Angles ? circle_embed(traj.states[k].col(0))
                                                                   : Configuration::normalized(traj.states[k]);
            return gram_histogram(c, bins);
        }
    }
    throw DomainError("gram_histogram: t = " + std::to_string(t) + " is not a stored sample");
}

Mat reduce_to_span(const Mat& x) {
    if (x.cols() <= x.rows()) {
        return x;
    }
    const Eigen::Index n = x.rows();
    Eigen::HouseholderQR<Mat> qr(x.transpose());
    const Mat basis = qr.householderQ() * Mat::Identity(x.cols(), n);
    Mat coords = x * basis;
    for (Eigen::Index i = 0; i < n; ++i) {
        coords.row(i) /= coords.row(i).norm();
    }
    return coords;
}

PhaseGrid empirical_phase_diagram(const PhaseDiagramParams& p) {
    if (p.reps < 1) {
        throw DomainError("empirical_phase_diagram: reps must be >= 1");
    }
    if (p.n < 2 || p.d < 2) {
        throw DomainError("empirical_phase_diagram: need n >= 2 and d >= 2");
    }
    if (!(p.delta > 0.0 && p.delta < 1.0)) {
        throw DomainError("empirical_phase_diagram: delta must lie in (0, 1)");
    }
    for (const auto* grid : {&p.t_grid, &p.beta_grid}) {
        if (grid->empty() || !std::is_sorted(grid->begin(), grid->end()) ||
            std::adjacent_find(grid->begin(), grid->end()) != grid->end()) {
            throw DomainError("empirical_phase_diagram: grids must be non-empty and increasing");
        }
    }
    if (p.t_grid.front() < 0.0 || p.beta_grid.front() < 0.0) {
        throw DomainError("empirical_phase_diagram: grids must be non-negative");
    }
    const bool isotropic = !p.model || p.model->is_isotropic();
    const std::size_t nb = p.beta_grid.size();
    const std::size_t nt = p.t_grid.size();
    const auto reps = static_cast<std::size_t>(p.reps);
    std::vector<std::vector<char>> hits(nb * reps);

    parallel_for(nb * reps, p.threads, [&](std::size_t task) {
        const std::size_t b = task / reps;
        const std::size_t r = task % reps;
        ModelSpec model = p.model.value_or(ModelSpec{});
        if (!p.model) {
            model.variant = Variant::SA;
        }
        model.beta = p.beta_grid[b];
        // Common random initial conditions across beta rows.
        Mat x0 = sample_uniform(p.n, p.d, derive_seed(p.master_seed, r)).points();
        if (isotropic) {
            x0 = reduce_to_span(x0);
        }
        const std::vector<Mat> states = integrate_at(x0, model, p.t_grid, p.dt);
        std::vector<char> row(nt, 0);
        for (std::size_t k = 0; k < nt; ++k) {
            row[k] = states[k].row(0).dot(states[k].row(1)) >= 1.0 - p.delta ? 1 : 0;
        }
        hits[task] = std::move(row);
    });

    PhaseGrid grid;
    grid.t_grid = p.t_grid;
    grid.beta_grid = p.beta_grid;
    grid.reps = p.reps;
    grid.n = p.n;
    grid.d = p.d;
    grid.delta = p.delta;
    grid.seed = p.master_seed;
    grid.prob = Mat::Zero(static_cast<Eigen::Index>(nb), static_cast<Eigen::Index>(nt));
    for (std::size_t b = 0; b < nb; ++b) {
        for (std::size_t k = 0; k < nt; ++k) {
            long count = 0;
            for (std::size_t r = 0; r < reps; ++r) {
                count += hits[b * reps + r][k];
            }
            grid.prob(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k)) =
                static_cast<double>(count) / static_cast<double>(p.reps);
        }
    }
    return grid;
}

std::vector<std::pair<double, double>> phase_curve_infty(long n, const std::vector<double>& beta_grid, double delta,
                                                         Variant variant) {
    if (!(delta > 0.0 && delta < 1.0)) {
        throw DomainError("phase_curve_infty: delta must lie in (0, 1)");
    }
    std::vector<std::pair<double, double>> out;
    out.reserve(beta_grid.size());
    for (double beta : beta_grid) {
        out.emplace_back(beta, solve_gamma_hitting_time(beta, n, variant, 1.0 - delta));
    }
    return out;
}

std::vector<DeviationPoint> deviation_vs_dimension(const DeviationParams& p) {
    if (p.reps < 1 || p.n < 2) {
        throw DomainError("deviation_vs_dimension: need reps >= 1 and n >= 2");
    }
    IntegratorConfig gcfg;
    gcfg.dt = p.dt;
    gcfg.sample_every = p.dt;
    gcfg.t_end = p.t_probe;
    const ScalarCurve gamma = integrate_gamma(p.beta, p.n, p.variant, gcfg);

    ModelSpec model;
    model.variant = p.variant;
    model.beta = p.beta;

    std::vector<DeviationPoint> out;
    for (std::size_t di = 0; di < p.d_list.size(); ++di) {
        const long d = p.d_list[di];
        if (d < p.n || (di > 0 && d <= p.d_list[di - 1])) {
            throw DomainError("deviation_vs_dimension: d_list must be increasing with d >= n");
        }
        std::vector<double> devs(static_cast<std::size_t>(p.reps));
        parallel_for(devs.size(), p.threads, [&](std::size_t r) {
            const std::uint64_t seed = derive_seed(derive_seed(p.master_seed, static_cast<std::uint64_t>(d)), r);
            Mat x0 = p.orthonormal_start ? sample_orthonormal(p.n, d, seed).points()
                                         : sample_uniform(p.n, d, seed).points();
            x0 = reduce_to_span(x0);
            const std::vector<Mat> states = integrate_at(x0, model, gamma.times, p.dt);
            double worst = 0.0;
            for (std::size_t k = 0; k < states.size(); ++k) {
                const Mat g = states[k] * states[k].transpose();
                for (Eigen::Index i = 0; i < g.rows(); ++i) {
                    for (Eigen::Index j = i + 1; j < g.cols(); ++j) {
                        worst = std::max(worst, std::abs(g(i, j) - gamma.values[k]));
                    }
                }
            }
            devs[r] = worst;
        });
        const double m = static_cast<double>(devs.size());
        const double mean = std::accumulate(devs.begin(), devs.end(), 0.0) / m;
        double var = 0.0;
        for (double v : devs) {
            var += (v - mean) * (v - mean);
        }
        var = devs.size() > 1 ? var / (m - 1.0) : 0.0;
        out.push_back({d, mean, std::sqrt(var / m)});
    }
    return out;
}

Histogram pair_correlation_circle(const PairCorrelationParams& p) {
    if (p.n < 2 || p.reps < 1 || p.bins < 1) {
        throw DomainError("pair_correlation_circle: need n >= 2, reps >= 1, bins >= 1");
    }
    const StateKind kind = state_kind(p.model.variant);
    if (kind == StateKind::Euclidean || p.model.variant == Variant::Multihead) {
        throw DomainError("pair_correlation_circle: model must be ANGULAR or a circle SA/USA flow");
    }
    constexpr double two_pi = 2.0 * std::numbers::pi;
    std::vector<double> diffs(static_cast<std::size_t>(p.reps));
    parallel_for(diffs.size(), p.threads, [&](std::size_t r) {
        Rng rng(derive_seed(p.master_seed, r));
        std::uniform_real_distribution<double> unif(0.0, two_pi);
        Vec theta(p.n);
        for (Eigen::Index i = 0; i < p.n; ++i) {
            theta(i) = unif(rng);
        }
        Vec final_theta = theta;
        if (p.t_probe > 0.0) {
            const std::vector<double> times{p.t_probe};
            if (kind == StateKind::Angles) {
                final_theta = integrate_at(Mat(theta), p.model, times, p.dt).back().col(0);
            } else {
                const Mat x = integrate_at(circle_embed(theta).points(), p.model, times, p.dt).back();
                final_theta = circle_angles(Configuration::normalized(x));
            }
        }
        diffs[r] = std::remainder(final_theta(1) - final_theta(0), two_pi);
    });
    Histogram h;
    const double width = two_pi / p.bins;
    for (int b = 0; b < p.bins; ++b) {
        h.bin_lo.push_back(-std::numbers::pi + b * width);
        h.bin_hi.push_back(-std::numbers::pi + (b + 1) * width);
    }
    h.counts.assign(static_cast<std::size_t>(p.bins), 0);
    for (double v : diffs) {
        const int b = std::clamp(static_cast<int>(std::floor((v + std::numbers::pi) / width)), 0, p.bins - 1);
        ++h.counts[static_cast<std::size_t>(b)];
        ++h.total;
    }
    for (long c : h.counts) {
        h.density.push_back(static_cast<double>(c) / (static_cast<double>(h.total) * width));
    }
    return h;
}

std::vector<double> fourier_coefficients_hbeta(double beta, int k_max) {
    if (k_max < 0) {
        throw DomainError("fourier_coefficients_hbeta: k_max must be >= 0");
    }
    using boost::math::quadrature::gauss_kronrod;
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(k_max) + 1);
    for (int k = 0; k <= k_max; ++k) {
        auto f = [beta, k](double th) { return std::exp(beta * std::cos(th)) * std::cos(k * th); };
        // Even integrand: (1/2pi) int_{-pi}^{pi} = (1/pi) int_0^pi.
        const double integral = gauss_kronrod<double, 61>::integrate(f, 0.0, std::numbers::pi, 30, 1e-14);
        out.push_back(integral / std::numbers::pi);
    }
    return out;
}

ModelSpec random_qkv_model(const std::string& qk_preset, const std::string& value_preset, long d,
                           std::uint64_t seed) {
    if (d < 2) {
        throw DomainError("random_qkv_model: d must be >= 2");
    }
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
    auto ginibre = [&] {
        Mat m(d, d);
        for (Eigen::Index i = 0; i < d; ++i) {
            for (Eigen::Index j = 0; j < d; ++j) {
                m(i, j) = normal(rng);
            }
        }
        return m;
    };
    const Mat id = Mat::Identity(d, d);
    ModelSpec model;
    model.variant = Variant::QKV;
    if (qk_preset == "identity") {
        model.Q = id;
        model.K = id;
    } else if (qk_preset == "ginibre") {
        model.Q = ginibre();
        model.K = ginibre();
    } else if (qk_preset == "wigner-sym") {
        // Q^T K = Q is symmetric with off-diagonal variance 1/d.
        const Mat g = ginibre();
        model.Q = (g + g.transpose()) / std::sqrt(2.0);
        model.K = id;
    } else {
        throw DomainError("random_qkv_model: unknown QK preset '" + qk_preset + "'");
    }
    if (value_preset == "identity") {
        model.V = id;
    } else if (value_preset == "equalsQK") {
        model.V = model.Q->transpose() * *model.K;
    } else if (value_preset == "gaussian-PSD") {
        const Mat g = ginibre();
        model.V = g * g.transpose();
    } else if (value_preset == "ginibre") {
        model.V = ginibre();
    } else {
        throw DomainError("random_qkv_model: unknown value preset '" + value_preset + "'");
    }
    return model;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw DomainError("loglog_slope: need at least two paired points");
    }
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        mx += std::log(x[k]);
        my += std::log(y[k]);
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double lx = std::log(x[k]) - mx;
        sxx += lx * lx;
        sxy += lx * (std::log(y[k]) - my);
    }
    return sxy / sxx;
}

}  // namespace attnflow

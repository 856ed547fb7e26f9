#include "attnflow/energy.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

namespace attnflow {

namespace {

void require_positive_beta(double beta, const char* where) {
    if (!(beta > 0.0)) {
        throw DomainError(std::string(where) + ": beta must be > 0");
    }
}

double sum_exp_gram(const GramMatrix& g, double beta, double offset) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
        for (Eigen::Index j = 0; j < g.cols(); ++j) {
            total += std::exp(beta * g(i, j)) - offset;
        }
    }
    return total;
}

// Energy change when particle i moves to exp_{x_i}(frame_i u_i), evaluated
// without forming the two energies: with delta_i = exp_{x_i}(v_i) - x_i,
// <x_i', x_j'> - <x_i, x_j> = <delta_i, x_j> + <x_i, delta_j> + <delta_i, delta_j>.
double energy_change(const Mat& base, const Mat& base_gram, const std::vector<Mat>& frames, const Vec& u,
                     double beta) {
    const Eigen::Index n = base.rows();
    const Eigen::Index m = base.cols() - 1;
    Mat delta = Mat::Zero(n, base.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vec v = frames[static_cast<std::size_t>(i)] * u.segment(i * m, m);
        const double r = v.norm();
        if (r > 0.0) {
            const double s = std::sin(0.5 * r);
            delta.row(i) = (-2.0 * s * s) * base.row(i) + (std::sin(r) / r) * v.transpose();
        }
    }
    const Mat cross = delta * base.transpose();
    const Mat dg = cross + cross.transpose() + delta * delta.transpose();
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            total += std::exp(beta * base_gram(i, j)) * std::expm1(beta * dg(i, j));
        }
    }
    return total / (2.0 * beta * static_cast<double>(n * n));
}

std::vector<double> sorted_eigs(const Mat& h) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (h + h.transpose()), Eigen::EigenvaluesOnly);
    const Vec ev = es.eigenvalues();
    std::vector<double> out(ev.data(), ev.data() + ev.size());
    std::sort(out.begin(), out.end());
    return out;
}

LandscapeReport classify(double grad_norm, const Mat& hess, double beta, double grad_tol, double eig_tol) {
    LandscapeReport rep;
    rep.beta = beta;
    rep.grad_norm = grad_norm;
    rep.hessian_eigs = sorted_eigs(hess);
    if (grad_norm >= grad_tol) {
        rep.classification = Classification::Inconclusive;
        rep.diagnostic = "gradient norm " + std::to_string(grad_norm) + " exceeds grad_tol; not a critical point";
        return rep;
    }
    const double top = rep.hessian_eigs.empty() ? 0.0 : rep.hessian_eigs.back();
    rep.classification = top > eig_tol ? Classification::StrictSaddle : Classification::LocalMaxCandidate;
    return rep;
}

double double_factorial_odd(int a) {
    // (a-1)!! for even a >= 0
    double r = 1.0;
    for (int k = a - 1; k > 1; k -= 2) {
        r *= k;
    }
    return r;
}

void enumerate_exponents(int d, int max_degree, std::vector<int>& cur, int pos, int used,
                         const std::function<void(const std::vector<int>&)>& visit) {
    if (pos == d) {
        if (used > 0) {
            visit(cur);
        }
        return;
    }
    for (int a = 0; a + used <= max_degree; ++a) {
        cur[static_cast<std::size_t>(pos)] = a;
        enumerate_exponents(d, max_degree, cur, pos + 1, used + a, visit);
    }
    cur[static_cast<std::size_t>(pos)] = 0;
}

}  // namespace

std::string to_string(Classification c) {
    switch (c) {
        case Classification::LocalMaxCandidate: return "LOCAL_MAX_CANDIDATE";
        case Classification::StrictSaddle: return "STRICT_SADDLE";
        case Classification::Inconclusive: return "INCONCLUSIVE";
    }
    return "INCONCLUSIVE";
}

double interaction_energy(const Configuration& c, double beta, EnergyConvention convention) {
    require_positive_beta(beta, "interaction_energy");
    const double n = static_cast<double>(c.n());
    const double offset = convention == EnergyConvention::Shifted ? 1.0 : 0.0;
    return sum_exp_gram(gram(c), beta, offset) / (2.0 * beta * n * n);
}

double energy_e0(const Configuration& c) {
    return c.points().colwise().sum().squaredNorm() / static_cast<double>(c.n());
}

double energy_circle(const Vec& theta, double beta) {
    require_positive_beta(beta, "energy_circle");
    const double n = static_cast<double>(theta.size());
    double total = 0.0;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        for (Eigen::Index j = 0; j < theta.size(); ++j) {
            total += std::exp(beta * std::cos(theta(i) - theta(j)));
        }
    }
    return total / (2.0 * beta * n * n);
}

double energy_kuramoto(const Vec& theta, double Kc) {
    const double n = static_cast<double>(theta.size());
    // sum_ij cos(a_i - a_j) = |sum_k e^{i a_k}|^2
    const double cs = theta.array().cos().sum();
    const double sn = theta.array().sin().sum();
    return Kc * (cs * cs + sn * sn) / (2.0 * n * n);
}

double config_energy_repulsive(const Configuration& c, double beta) {
    require_positive_beta(beta, "config_energy_repulsive");
    const Mat& x = c.points();
    const double n = static_cast<double>(c.n());
    double total = 0.0;
    for (Eigen::Index i = 0; i < c.n(); ++i) {
        for (Eigen::Index j = 0; j < c.n(); ++j) {
            total += std::exp(-0.5 * beta * (x.row(i) - x.row(j)).squaredNorm());
        }
    }
    return std::exp(beta) * total / (2.0 * n * n * beta);
}

Mat gradient_standard(const Configuration& c, double beta) {
    if (beta < 0.0) {
        throw DomainError("gradient_standard: beta must be >= 0");
    }
    const Mat& x = c.points();
    const double n = static_cast<double>(c.n());
    const Mat w = (beta * (x * x.transpose()).array()).exp().matrix();
    return project_rows(x, w * x) / (n * n);
}

double modified_metric_check(const Configuration& c, double beta) {
    ModelSpec spec;
    spec.variant = Variant::SA;
    spec.beta = beta;
    const Mat& x = c.points();
    const double n = static_cast<double>(c.n());
    const Mat v = velocity_sa(c, spec);
    const Mat grad = gradient_standard(c, beta);
    const Vec z = (beta * (x * x.transpose()).array()).exp().rowwise().sum();
    const Mat residual = z.asDiagonal() * v - n * n * grad;
    return residual.rowwise().norm().maxCoeff();
}

double dissipation_rate(const Configuration& c, double beta, Variant variant) {
    require_positive_beta(beta, "dissipation_rate");
    ModelSpec spec;
    spec.variant = variant;
    spec.beta = beta;
    const Mat& x = c.points();
    const double n = static_cast<double>(c.n());
    if (variant == Variant::SA) {
        const Mat v = velocity_sa(c, spec);
        const Vec zbar = (beta * (x * x.transpose()).array()).exp().rowwise().sum() / n;
        return (v.rowwise().squaredNorm().array() * zbar.array()).sum() / n;
    }
    if (variant == Variant::USA) {
        return velocity_usa(c, spec).rowwise().squaredNorm().sum() / n;
    }
    throw DomainError("dissipation_rate: variant must be SA or USA");
}

double g_function(double zeta, double beta, int d) {
    if (d < 2) {
        throw DomainError("g_function: d must be >= 2");
    }
    const double s = std::sin(zeta);
    return std::exp(beta * std::cos(zeta)) * ((d - 1) * std::cos(zeta) - beta * s * s);
}

double tau_star(double beta, int d) {
    require_positive_beta(beta, "tau_star");
    if (d < 2) {
        throw DomainError("tau_star: d must be >= 2");
    }
    // f(tau) = beta sin^2 - (d-1) cos: negative at 0, positive at pi/2, increasing.
    auto f = [&](double tau) {
        const double s = std::sin(tau);
        return beta * s * s - (d - 1) * std::cos(tau);
    };
    double lo = 0.0;
    double hi = std::numbers::pi / 2.0;
    while (hi - lo > 1e-15) {
        const double mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

Vec circle_gradient(const Vec& theta, double beta) {
    const Eigen::Index n = theta.size();
    const double nn = static_cast<double>(n * n);
    Vec g = Vec::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index m = 0; m < n; ++m) {
            const double diff = theta(i) - theta(m);
            g(i) -= std::sin(diff) * std::exp(beta * std::cos(diff));
        }
        g(i) /= nn;
    }
    return g;
}

Mat circle_hessian(const Vec& theta, double beta) {
    const Eigen::Index n = theta.size();
    const double nn = static_cast<double>(n * n);
    Mat h = Mat::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i != j) {
                h(i, j) = g_function(theta(i) - theta(j), beta, 2) / nn;
            }
        }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        h(i, i) = -h.row(i).sum();
    }
    return h;
}

Mat tangent_frame(const Vec& x) {
    const Eigen::Index d = x.size();
    Mat frame(d, d - 1);
    Eigen::Index filled = 0;
    for (Eigen::Index k = 0; k < d && filled < d - 1; ++k) {
        Vec e = Vec::Unit(d, k);
        e -= x.dot(e) * x;
        for (Eigen::Index j = 0; j < filled; ++j) {
            e -= frame.col(j).dot(e) * frame.col(j);
        }
        // Re-orthogonalize once for stability.
        e -= x.dot(e) * x;
        for (Eigen::Index j = 0; j < filled; ++j) {
            e -= frame.col(j).dot(e) * frame.col(j);
        }
        const double nrm = e.norm();
        if (nrm > 1e-6) {
            frame.col(filled++) = e / nrm;
        }
    }
    return frame;
}

Mat hessian_fd(const Configuration& c, double beta, double h) {
    require_positive_beta(beta, "hessian_fd");
    if (h < 1e-6 || h > 1e-3) {
        throw DomainError("hessian_fd: step must lie in [1e-6, 1e-3]");
    }
    const Eigen::Index n = c.n();
    const Eigen::Index m = c.d() - 1;
    const Eigen::Index dim = n * m;
    std::vector<Mat> frames;
    frames.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        frames.push_back(tangent_frame(c.row(i)));
    }
    const Mat& base = c.points();
    const Mat base_gram = base * base.transpose();
    auto f = [&](const Vec& u) { return energy_change(base, base_gram, frames, u, beta); };
    const double f0 = 0.0;
    Mat hess(dim, dim);
    for (Eigen::Index a = 0; a < dim; ++a) {
        Vec u = Vec::Zero(dim);
        u(a) = h;
        const double fp = f(u);
        u(a) = -h;
        const double fm = f(u);
        hess(a, a) = (fp - 2.0 * f0 + fm) / (h * h);
        for (Eigen::Index b = 0; b < a; ++b) {
            Vec w = Vec::Zero(dim);
            w(a) = h;
            w(b) = h;
            const double fpp = f(w);
            w(b) = -h;
            const double fpm = f(w);
            w(a) = -h;
            const double fmm = f(w);
            w(b) = h;
            const double fmp = f(w);
            hess(a, b) = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            hess(b, a) = hess(a, b);
        }
    }
    return hess;
}

LandscapeReport classify_critical_point(const Configuration& c, double beta, double grad_tol, double eig_tol) {
    if (c.d() == 2) {
        return classify_critical_point(circle_angles(c), beta, grad_tol, eig_tol);
    }
    const double gn = gradient_standard(c, beta).norm();
    return classify(gn, hessian_fd(c, beta), beta, grad_tol, eig_tol);
}

LandscapeReport classify_critical_point(const Vec& theta, double beta, double grad_tol, double eig_tol) {
    require_positive_beta(beta, "classify_critical_point");
    return classify(circle_gradient(theta, beta).norm(), circle_hessian(theta, beta), beta, grad_tol, eig_tol);
}

double sphere_monomial_moment(const std::vector<int>& exponents, int d) {
    if (d < 2 || static_cast<int>(exponents.size()) != d) {
        throw DomainError("sphere_monomial_moment: need d >= 2 exponents");
    }
    int total = 0;
    double num = 1.0;
    for (int a : exponents) {
        if (a < 0) {
            throw DomainError("sphere_monomial_moment: negative exponent");
        }
        if (a % 2 != 0) {
            return 0.0;
        }
        total += a;
        num *= double_factorial_odd(a);
    }
    double den = 1.0;
    for (int j = 0; j < total / 2; ++j) {
        den *= d + 2 * j;
    }
    return num / den;
}

DesignTestResult design_test(const Configuration& c, int degree, double design_tol) {
    if (degree < 1) {
        throw DomainError("design_test: degree must be >= 1");
    }
    const int d = static_cast<int>(c.d());
    const Mat& x = c.points();
    DesignTestResult res;
    res.degree = degree;
    std::vector<int> cur(static_cast<std::size_t>(d), 0);
    enumerate_exponents(d, degree, cur, 0, 0, [&](const std::vector<int>& a) {
        double mean = 0.0;
        for (Eigen::Index i = 0; i < c.n(); ++i) {
            double p = 1.0;
            for (int k = 0; k < d; ++k) {
                p *= std::pow(x(i, k), a[static_cast<std::size_t>(k)]);
            }
            mean += p;
        }
        mean /= static_cast<double>(c.n());
        res.max_discrepancy = std::max(res.max_discrepancy, std::abs(mean - sphere_monomial_moment(a, d)));
    });
    res.passed = res.max_discrepancy < design_tol;

    std::vector<double> values;
    const GramMatrix g = gram(c);
    for (Eigen::Index i = 0; i < c.n(); ++i) {
        for (Eigen::Index j = i + 1; j < c.n(); ++j) {
            values.push_back(g(i, j));
        }
    }
    std::sort(values.begin(), values.end());
    for (std::size_t k = 0; k < values.size(); ++k) {
        if (k == 0 || values[k] - values[k - 1] > 1e-9) {
            ++res.distinct_inner_products;
        }
    }
    return res;
}

}  // namespace attnflow

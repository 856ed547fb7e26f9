#include "attnflow/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <boost/multiprecision/cpp_int.hpp>

namespace attnflow {

Configuration::Configuration(Mat points) : points_(std::move(points)) {
    if (points_.rows() < 1 || points_.cols() < 2) {
        throw DomainError("Configuration requires n >= 1 and d >= 2");
    }
    for (Eigen::Index i = 0; i < points_.rows(); ++i) {
        const double nrm = points_.row(i).norm();
        if (!std::isfinite(nrm) || std::abs(nrm - 1.0) > kUnitTol) {
            throw DomainError("Configuration row " + std::to_string(i) + " is not a unit vector (norm " +
                              std::to_string(nrm) + ")");
        }
        points_.row(i) /= nrm;
    }
}

Configuration Configuration::normalized(Mat points) {
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        const double nrm = points.row(i).norm();
        if (!(nrm > 0.0) || !std::isfinite(nrm)) {
            throw DomainError("cannot normalize zero or non-finite row " + std::to_string(i));
        }
        points.row(i) /= nrm;
    }
    return Configuration(std::move(points));
}

double Configuration::max_norm_defect() const {
    return (points_.rowwise().norm().array() - 1.0).abs().maxCoeff();
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(master) ^ (index * 0xd1b54a32d192ed03ULL + 1));
}

Vec project_tangent(const Vec& x, const Vec& y) {
    if (std::abs(x.norm() - 1.0) > kUnitTol) {
        throw DomainError("project_tangent: base point is not a unit vector");
    }
    return y - x.dot(y) * x;
}

Mat project_rows(const Mat& x, const Mat& y) {
    const Vec dots = (x.array() * y.array()).rowwise().sum();
    return y - dots.asDiagonal() * x;
}

Vec retract(const Vec& x, const Vec& v, double h, Retraction mode) {
    const double speed = v.norm();
    if (speed == 0.0 || h == 0.0) {
        return x;
    }
    if (mode == Retraction::Normalize) {
        Vec y = x + h * v;
        return y / y.norm();
    }
    const double angle = h * speed;
    Vec y = std::cos(angle) * x + (std::sin(angle) / speed) * v;
    return y / y.norm();
}

Vec retraction_pullback(const Vec& x, const Vec& u, const Vec& w, Retraction mode) {
    const double r = u.norm();
    if (r == 0.0) {
        return w - x.dot(w) * x;
    }
    if (mode == Retraction::Normalize) {
        const Vec z = x + u;
        const double s = z.norm();
        const Vec y = z / s;
        return s * (w - (w.dot(x) / y.dot(x)) * y);
    }
    // Exp-map chart: radial direction is carried by (-sin r x + cos r u_hat),
    // transverse directions are scaled by sin(r)/r.
    const Vec uhat = u / r;
    const Vec radial = -std::sin(r) * x + std::cos(r) * uhat;
    const double a = w.dot(radial);
    Vec transverse = w - a * radial;
    transverse -= x.dot(transverse) * x;
    transverse -= uhat.dot(transverse) * uhat;
    return a * uhat + (r / std::sin(r)) * transverse;
}

Configuration sample_uniform(Eigen::Index n, Eigen::Index d, Rng& rng) {
    if (n < 1 || d < 2) {
        throw DomainError("sample_uniform requires n >= 1 and d >= 2");
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    Mat pts(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        double nrm = 0.0;
        do {
            for (Eigen::Index k = 0; k < d; ++k) {
                pts(i, k) = normal(rng);
            }
            nrm = pts.row(i).norm();
        } while (nrm == 0.0);
        pts.row(i) /= nrm;
    }
    return Configuration(std::move(pts));
}

Configuration sample_uniform(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
    Rng rng(seed);
    return sample_uniform(n, d, rng);
}

Configuration sample_orthonormal(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
    if (n < 1 || d < 2) {
        throw DomainError("sample_orthonormal requires n >= 1 and d >= 2");
    }
    if (d < n) {
        throw DomainError("sample_orthonormal requires d >= n");
    }
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Mat g(d, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < d; ++i) {
            g(i, j) = normal(rng);
        }
    }
    Eigen::HouseholderQR<Mat> qr(g);
    Mat q = qr.householderQ() * Mat::Identity(d, n);
    const Mat r = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < n; ++j) {
        if (r(j, j) < 0.0) {
            q.col(j) = -q.col(j);
        }
    }
    return Configuration::normalized(q.transpose());
}

GramMatrix gram(const Configuration& c) {
    GramMatrix g = c.points() * c.points().transpose();
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
        g(i, i) = 1.0;
        for (Eigen::Index j = 0; j < i; ++j) {
            const double v = std::clamp(0.5 * (g(i, j) + g(j, i)), -1.0, 1.0);
            g(i, j) = v;
            g(j, i) = v;
        }
    }
    return g;
}

namespace {

// Affine minimizer of |sum mu_k p_k| subject to sum mu_k = 1.
Vec affine_minimizer(const Mat& corral) {
    const Eigen::Index m = corral.rows();
    Mat kkt = Mat::Zero(m + 1, m + 1);
    kkt.topLeftCorner(m, m) = corral * corral.transpose();
    kkt.block(0, m, m, 1).setOnes();
    kkt.block(m, 0, 1, m).setOnes();
    Vec rhs = Vec::Zero(m + 1);
    rhs(m) = 1.0;
    return kkt.fullPivLu().solve(rhs).head(m);
}

}  // namespace

HemisphereWitness hemisphere_witness(const Configuration& c, double tol) {
    const Mat& p = c.points();
    const Eigen::Index n = c.n();
    const int max_iter = static_cast<int>(10 * n * c.d());
    constexpr double eps = 1e-12;

    HemisphereWitness out;
    auto accept = [&](const Vec& x) {
        const double nrm = x.norm();
        const Vec w = x / nrm;
        const double margin = (p * w).minCoeff();
        if (margin > 0.0) {
            out.witness = w;
            out.margin = margin;
            return true;
        }
        return false;
    };

    std::vector<Eigen::Index> corral{0};
    Vec lambda = Vec::Ones(1);
    Vec x = p.row(0).transpose();

    for (int it = 0; it < max_iter; ++it) {
        out.iterations = it + 1;
        out.min_norm = x.norm();
        if (out.min_norm <= tol) {
            return out;
        }
        if (accept(x)) {
            return out;
        }
        Eigen::Index j = 0;
        (p * x).minCoeff(&j);
        const double gap = x.squaredNorm() - p.row(j).dot(x);
        if (gap <= eps || std::find(corral.begin(), corral.end(), j) != corral.end()) {
            // x is the min-norm point up to round-off.
            break;
        }
        corral.push_back(j);
        lambda.conservativeResize(lambda.size() + 1);
        lambda(lambda.size() - 1) = 0.0;

        // Minor cycles: project onto the affine hull, retreat to the hull.
        for (int minor = 0; minor < max_iter; ++minor) {
            Mat pts(static_cast<Eigen::Index>(corral.size()), c.d());
            for (std::size_t k = 0; k < corral.size(); ++k) {
                pts.row(static_cast<Eigen::Index>(k)) = p.row(corral[k]);
            }
            const Vec mu = affine_minimizer(pts);
            if ((mu.array() > eps).all()) {
                lambda = mu;
                x = pts.transpose() * lambda;
                break;
            }
            double theta = 1.0;
            for (Eigen::Index k = 0; k < mu.size(); ++k) {
                if (mu(k) <= eps) {
                    const double denom = lambda(k) - mu(k);
                    if (denom > 0.0) {
                        theta = std::min(theta, lambda(k) / denom);
                    }
                }
            }
            lambda = lambda + theta * (mu - lambda);
            std::vector<Eigen::Index> kept;
            std::vector<double> kept_lambda;
            for (Eigen::Index k = 0; k < lambda.size(); ++k) {
                if (lambda(k) > eps) {
                    kept.push_back(corral[static_cast<std::size_t>(k)]);
                    kept_lambda.push_back(lambda(k));
                }
            }
            if (kept.empty()) {
                kept.push_back(corral.back());
                kept_lambda.push_back(1.0);
            }
            corral = kept;
            lambda = Eigen::Map<Vec>(kept_lambda.data(), static_cast<Eigen::Index>(kept_lambda.size()));
            lambda /= lambda.sum();
            x.setZero();
            for (std::size_t k = 0; k < corral.size(); ++k) {
                x += lambda(static_cast<Eigen::Index>(k)) * p.row(corral[k]).transpose();
            }
        }
        if (it + 1 == max_iter) {
            out.converged = false;
        }
    }
    out.min_norm = x.norm();
    if (out.min_norm > tol) {
        accept(x);
    }
    return out;
}

double wendel_probability(long n, long d) {
    if (n < 1 || d < 1) {
        throw DomainError("wendel_probability requires n >= 1 and d >= 1");
    }
    using boost::multiprecision::cpp_int;
    cpp_int sum = 0;
    cpp_int binom = 1;  // C(n-1, k)
    const long top = std::min(d - 1, n - 1);
    for (long k = 0; k <= top; ++k) {
        sum += binom;
        binom = binom * (n - 1 - k) / (k + 1);
    }
    // Keep the top 64 bits of the numerator; the power of two goes into the exponent.
    const long shift = std::max(0L, static_cast<long>(boost::multiprecision::msb(sum)) - 63);
    const cpp_int leading = sum >> static_cast<unsigned>(shift);
    return static_cast<double>(std::ldexp(static_cast<long double>(leading), static_cast<int>(shift - (n - 1))));
}

bool alpha_clustered(const Configuration& c, double alpha) {
    if (alpha < 0.0 || alpha >= 1.0) {
        throw DomainError("alpha_clustered requires alpha in [0, 1)");
    }
    return gram(c).minCoeff() > alpha;
}

Configuration circle_embed(const Vec& theta) {
    Mat pts(theta.size(), 2);
    pts.col(0) = theta.array().cos();
    pts.col(1) = theta.array().sin();
    return Configuration::normalized(std::move(pts));
}

Vec circle_angles(const Configuration& c) {
    if (c.d() != 2) {
        throw DomainError("circle_angles requires d = 2");
    }
    Vec theta(c.n());
    for (Eigen::Index i = 0; i < c.n(); ++i) {
        theta(i) = std::atan2(c.points()(i, 1), c.points()(i, 0));
    }
    return theta;
}

}  // namespace attnflow

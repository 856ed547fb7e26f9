#include "attnflow/dynamics.hpp"

#include <algorithm>
#include <cmath>

#include <unsupported/Eigen/MatrixFunctions>

namespace attnflow {

namespace {

void check_square(const std::optional<Mat>& m, Eigen::Index d, const char* name) {
    if (m && (m->rows() != d || m->cols() != d)) {
        throw DomainError(std::string("ModelSpec: ") + name + " must be " + std::to_string(d) + "x" +
                          std::to_string(d));
    }
}

// Scores beta * <Q x_i, K x_j> with the identity shortcut.
Mat scores(const Mat& x, const std::optional<Mat>& Q, const std::optional<Mat>& K, double beta) {
    if (!Q && !K) {
        return beta * (x * x.transpose());
    }
    const Mat qx = Q ? Mat(x * Q->transpose()) : x;
    const Mat kx = K ? Mat(x * K->transpose()) : x;
    return beta * (qx * kx.transpose());
}

// Rows y_j -> V y_j.
Mat apply_value(const Mat& y, const std::optional<Mat>& V, int value_sign) {
    if (V) {
        return y * V->transpose();
    }
    return value_sign >= 0 ? y : Mat(-y);
}

}  // namespace

void ModelSpec::validate(Eigen::Index d) const {
    if (!(beta >= 0.0) || !std::isfinite(beta)) {
        throw DomainError("ModelSpec: beta must be finite and >= 0");
    }
    if (value_sign != 1 && value_sign != -1) {
        throw DomainError("ModelSpec: value_sign must be +1 or -1");
    }
    if (noise_sigma < 0.0) {
        throw DomainError("ModelSpec: noise_sigma must be >= 0");
    }
    if (variant != Variant::Angular) {
        check_square(Q, d, "Q");
        check_square(K, d, "K");
        check_square(V, d, "V");
    }
    if (variant == Variant::Multihead) {
        if (heads.empty()) {
            throw DomainError("ModelSpec: multihead requires at least one head");
        }
        for (const auto& h : heads) {
            check_square(h.Q, d, "head Q");
            check_square(h.K, d, "head K");
            check_square(h.V, d, "head V");
        }
    }
}

bool ModelSpec::is_isotropic() const {
    return !Q && !K && !V && variant != Variant::Multihead;
}

StateKind state_kind(Variant v) {
    switch (v) {
        case Variant::Angular:
            return StateKind::Angles;
        case Variant::Hardmax:
        case Variant::EuclideanRescaled:
            return StateKind::Euclidean;
        default:
            return StateKind::Sphere;
    }
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::SA: return "sa";
        case Variant::USA: return "usa";
        case Variant::QKV: return "qkv";
        case Variant::Multihead: return "multihead";
        case Variant::Angular: return "angular";
        case Variant::Hardmax: return "hardmax";
        case Variant::EuclideanRescaled: return "euclidean_rescaled";
    }
    return "unknown";
}

Variant parse_variant(const std::string& s) {
    for (Variant v : {Variant::SA, Variant::USA, Variant::QKV, Variant::Multihead, Variant::Angular,
                      Variant::Hardmax, Variant::EuclideanRescaled}) {
        if (to_string(v) == s) {
            return v;
        }
    }
    throw DomainError("unknown variant '" + s + "'");
}

std::string to_string(TieRule r) {
    return r == TieRule::Average ? "average" : "lowest_index";
}

Mat softmax_rows(const Mat& s) {
    Mat a(s.rows(), s.cols());
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        const double m = s.row(i).maxCoeff();
        a.row(i) = (s.row(i).array() - m).exp();
        a.row(i) /= a.row(i).sum();
    }
    return a;
}

AttentionMatrix attention_matrix(const Mat& x, const ModelSpec& spec) {
    return softmax_rows(scores(x, spec.Q, spec.K, spec.beta));
}

AttentionMatrix attention_matrix(const Configuration& c, const ModelSpec& spec) {
    return attention_matrix(c.points(), spec);
}

Mat velocity_sa(const Mat& x, const ModelSpec& spec) {
    const Mat a = attention_matrix(x, spec);
    return project_rows(x, apply_value(a * x, spec.V, spec.value_sign));
}

Mat velocity_sa(const Configuration& c, const ModelSpec& spec) {
    return velocity_sa(c.points(), spec);
}

Mat velocity_usa(const Mat& x, const ModelSpec& spec) {
    // e^{beta s} = e^{beta} e^{beta (s - 1)}; s <= 1 keeps the exponent bounded.
    const Mat s = scores(x, spec.Q, spec.K, spec.beta);
    const double shift = spec.Q || spec.K ? s.maxCoeff() : spec.beta;
    const Mat w = (s.array() - shift).exp().matrix();
    const double scale = std::exp(shift) / static_cast<double>(x.rows());
    return project_rows(x, apply_value(scale * (w * x), spec.V, spec.value_sign));
}

Mat velocity_usa(const Configuration& c, const ModelSpec& spec) {
    return velocity_usa(c.points(), spec);
}

Mat velocity_multihead(const Mat& x, const ModelSpec& spec) {
    if (spec.heads.empty()) {
        throw DomainError("velocity_multihead: no heads");
    }
    Mat acc = Mat::Zero(x.rows(), x.cols());
    for (const auto& h : spec.heads) {
        const Mat a = softmax_rows(scores(x, h.Q, h.K, spec.beta));
        acc += (a * x) * h.V.transpose();
    }
    return project_rows(x, acc);
}

Mat velocity_multihead(const Configuration& c, const ModelSpec& spec) {
    return velocity_multihead(c.points(), spec);
}

Vec velocity_angular(const Vec& theta, const ModelSpec& spec) {
    const Eigen::Index n = theta.size();
    if (spec.omega && spec.omega->size() != n) {
        throw DomainError("velocity_angular: omega has wrong length");
    }
    Vec out = spec.omega ? *spec.omega : Vec::Zero(n);
    const double coef = spec.Kc / static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double acc = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            const double diff = theta(j) - theta(i);
            if (spec.coupling == Coupling::ExpCos) {
                acc += std::exp(spec.beta * std::cos(diff)) * std::sin(diff);
            } else {
                acc += std::sin(diff);
            }
        }
        out(i) += coef * acc;
    }
    return out;
}

Mat velocity_hardmax(const Mat& z, const ModelSpec& spec) {
    const Mat s = scores(z, spec.Q, spec.K, 1.0);
    const Mat vz = apply_value(z, spec.V, spec.value_sign);
    Mat out(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double m = s.row(i).maxCoeff();
        const double cut = m - spec.tie_tol * std::max(1.0, std::abs(m));
        Eigen::RowVectorXd target = Eigen::RowVectorXd::Zero(z.cols());
        int count = 0;
        for (Eigen::Index j = 0; j < z.rows(); ++j) {
            if (s(i, j) >= cut) {
                target += vz.row(j);
                ++count;
                if (spec.tie_rule == TieRule::LowestIndex) {
                    break;
                }
            }
        }
        out.row(i) = target / count - vz.row(i);
    }
    return out;
}

Mat velocity_euclidean_rescaled(const Mat& z, double t, const ModelSpec& spec) {
    const Eigen::Index d = z.cols();
    const Mat v = spec.V ? *spec.V : Mat(static_cast<double>(spec.value_sign) * Mat::Identity(d, d));
    const double growth = std::abs(t) * v.norm();
    if (growth > 250.0) {
        throw DomainError("velocity_euclidean_rescaled: |t V| = " + std::to_string(growth) +
                          " is too large for a stable matrix exponential; shorten the horizon");
    }
    const Mat etv = (t * v).exp();
    const Mat y = z * etv.transpose();
    const Mat a = softmax_rows(scores(y, spec.Q, spec.K, spec.beta));
    return (a * z - z) * v.transpose();
}

Mat velocity(const Mat& state, double t, const ModelSpec& spec) {
    switch (spec.variant) {
        case Variant::SA:
        case Variant::QKV:
            return velocity_sa(state, spec);
        case Variant::USA:
            return velocity_usa(state, spec);
        case Variant::Multihead:
            return velocity_multihead(state, spec);
        case Variant::Angular:
            return velocity_angular(state.col(0), spec);
        case Variant::Hardmax:
            return velocity_hardmax(state, spec);
        case Variant::EuclideanRescaled:
            return velocity_euclidean_rescaled(state, t, spec);
    }
    throw DomainError("velocity: unknown variant");
}

}  // namespace attnflow

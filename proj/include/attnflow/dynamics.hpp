#pragma once

#include <optional>
#include <string>
#include <vector>

#include "attnflow/geometry.hpp"

namespace attnflow {

enum class Variant { SA, USA, QKV, Multihead, Angular, Hardmax, EuclideanRescaled };
enum class Coupling { ExpCos, Sine };
enum class TieRule { Average, LowestIndex };

/// Where the state of a variant lives.
enum class StateKind { Sphere, Angles, Euclidean };

struct Head {
    Mat Q, K, V;
};

struct ModelSpec {
    Variant variant = Variant::SA;
    double beta = 1.0;
    std::optional<Mat> Q, K, V;
    std::vector<Head> heads;
    Coupling coupling = Coupling::ExpCos;
    double Kc = 1.0;
    std::optional<Vec> omega;
    int value_sign = 1;  // V = value_sign * I when V is absent
    double noise_sigma = 0.0;
    TieRule tie_rule = TieRule::Average;
    double tie_tol = 1e-12;

    /// Throws DomainError if the model is inconsistent with dimension d.
    void validate(Eigen::Index d) const;

    /// True when Q = K = I and V = +-I (explicitly or by absence).
    bool is_isotropic() const;
};

StateKind state_kind(Variant v);
std::string to_string(Variant v);
Variant parse_variant(const std::string& s);
std::string to_string(TieRule r);

using AttentionMatrix = Mat;

/// Row-stochastic softmax of beta * <Q x_i, K x_j>.
AttentionMatrix attention_matrix(const Mat& x, const ModelSpec& spec);
AttentionMatrix attention_matrix(const Configuration& c, const ModelSpec& spec);

/// Softmax of each row of `scores` with row-max subtraction.
Mat softmax_rows(const Mat& scores);

Mat velocity_sa(const Mat& x, const ModelSpec& spec);
Mat velocity_sa(const Configuration& c, const ModelSpec& spec);

Mat velocity_usa(const Mat& x, const ModelSpec& spec);
Mat velocity_usa(const Configuration& c, const ModelSpec& spec);

Mat velocity_multihead(const Mat& x, const ModelSpec& spec);
Mat velocity_multihead(const Configuration& c, const ModelSpec& spec);

Vec velocity_angular(const Vec& theta, const ModelSpec& spec);

Mat velocity_hardmax(const Mat& z, const ModelSpec& spec);

Mat velocity_euclidean_rescaled(const Mat& z, double t, const ModelSpec& spec);

/// Right-hand side of any variant; `state` is n x d (sphere, R^d) or n x 1 (angles).
Mat velocity(const Mat& state, double t, const ModelSpec& spec);

}  // namespace attnflow

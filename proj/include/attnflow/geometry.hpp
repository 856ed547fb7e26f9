#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>

namespace attnflow {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

inline constexpr double kUnitTol = 1e-9;

/// n points on S^{d-1}, one per row. Rows are normalized on construction and
/// rejected if they are not already unit within kUnitTol.
class Configuration {
public:
    explicit Configuration(Mat points);

    /// Normalizes every row; throws on zero rows.
    static Configuration normalized(Mat points);

    const Mat& points() const { return points_; }
    Eigen::Index n() const { return points_.rows(); }
    Eigen::Index d() const { return points_.cols(); }
    Vec row(Eigen::Index i) const { return points_.row(i).transpose(); }

    /// Largest | ||x_i|| - 1 | over rows.
    double max_norm_defect() const;

private:
    Mat points_;
};

using GramMatrix = Mat;

struct HemisphereWitness {
    std::optional<Vec> witness;
    double margin = 0.0;
    double min_norm = 0.0;   // norm of the min-norm point of the convex hull
    int iterations = 0;
    bool converged = true;
};

enum class Retraction { ExpMap, Normalize };

// Deterministic seed stream: splitmix64 of (master, index).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

using Rng = std::mt19937_64;

Vec project_tangent(const Vec& x, const Vec& y);

/// Row-wise P^perp_{x_i} y_i without the unit-norm check.
Mat project_rows(const Mat& x, const Mat& y);

Vec retract(const Vec& x, const Vec& v, double h, Retraction mode = Retraction::ExpMap);

/// Maps a tangent vector w at y = retract(x, u, 1) back to T_x through the
/// inverse differential of the retraction chart at u.
Vec retraction_pullback(const Vec& x, const Vec& u, const Vec& w, Retraction mode);

Configuration sample_uniform(Eigen::Index n, Eigen::Index d, std::uint64_t seed);
Configuration sample_uniform(Eigen::Index n, Eigen::Index d, Rng& rng);
Configuration sample_orthonormal(Eigen::Index n, Eigen::Index d, std::uint64_t seed);

GramMatrix gram(const Configuration& c);

/// Minimum-norm point of conv{x_i} by Wolfe's algorithm; a witness exists
/// iff that point is farther than tol from the origin.
HemisphereWitness hemisphere_witness(const Configuration& c, double tol = 1e-9);

double wendel_probability(long n, long d);

bool alpha_clustered(const Configuration& c, double alpha);

/// Embeds angles as (cos, sin) rows.
Configuration circle_embed(const Vec& theta);

/// Inverse of circle_embed, angles in (-pi, pi].
Vec circle_angles(const Configuration& c);

}  // namespace attnflow

#include "doctest.h"

#include <cmath>
#include <numbers>

#include "attnflow/dynamics.hpp"

using namespace attnflow;

namespace {

Mat random_matrix(Eigen::Index d, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Mat m(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            m(i, j) = g(rng) / std::sqrt(static_cast<double>(d));
        }
    }
    return m;
}

// Straight loop transcription of the normalized field with general (Q, K, V).
Mat naive_sa(const Mat& x, double beta, const Mat& Q, const Mat& K, const Mat& V) {
    const Eigen::Index n = x.rows();
    Mat out(n, x.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vec xi = x.row(i).transpose();
        double z = 0.0;
        Vec acc = Vec::Zero(x.cols());
        for (Eigen::Index j = 0; j < n; ++j) {
            const Vec xj = x.row(j).transpose();
            const double w = std::exp(beta * (Q * xi).dot(K * xj));
            z += w;
            acc += w * (V * xj);
        }
        acc /= z;
        out.row(i) = (acc - acc.dot(xi) * xi).transpose();
    }
    return out;
}

Mat naive_usa(const Mat& x, double beta) {
    const Eigen::Index n = x.rows();
    Mat out(n, x.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vec xi = x.row(i).transpose();
        Vec acc = Vec::Zero(x.cols());
        for (Eigen::Index j = 0; j < n; ++j) {
            const Vec xj = x.row(j).transpose();
            acc += std::exp(beta * xi.dot(xj)) * xj;
        }
        acc /= static_cast<double>(n);
        out.row(i) = (acc - acc.dot(xi) * xi).transpose();
    }
    return out;
}

}  // namespace

TEST_CASE("attention matrix is row stochastic and stable for large beta") {
    const Configuration c = sample_uniform(6, 4, 8);
    ModelSpec spec;
    spec.beta = 1e4;
    const Mat a = attention_matrix(c, spec);
    CHECK(a.allFinite());
    CHECK((a.rowwise().sum() - Vec::Ones(6)).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(a.minCoeff() >= 0.0);
    spec.beta = 0.0;
    CHECK((attention_matrix(c, spec).array() - 1.0 / 6.0).abs().maxCoeff() < 1e-15);
}

TEST_CASE("SA field matches the loop oracle for isotropic and general QKV") {
    const Configuration c = sample_uniform(7, 5, 21);
    ModelSpec spec;
    spec.beta = 2.5;
    const Mat id = Mat::Identity(5, 5);
    CHECK((velocity_sa(c, spec) - naive_sa(c.points(), 2.5, id, id, id)).cwiseAbs().maxCoeff() < 1e-13);

    spec.variant = Variant::QKV;
    spec.Q = random_matrix(5, 1);
    spec.K = random_matrix(5, 2);
    spec.V = random_matrix(5, 3);
    const Mat oracle = naive_sa(c.points(), 2.5, *spec.Q, *spec.K, *spec.V);
    CHECK((velocity(c.points(), 0.0, spec) - oracle).cwiseAbs().maxCoeff() < 1e-13);

    spec = ModelSpec{};
    spec.value_sign = -1;
    CHECK((velocity_sa(c, spec) + naive_sa(c.points(), 1.0, id, id, id)).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("USA field matches the loop oracle") {
    const Configuration c = sample_uniform(5, 3, 4);
    ModelSpec spec;
    spec.variant = Variant::USA;
    for (double beta : {0.0, 1.0, 9.0}) {
        spec.beta = beta;
        const Mat oracle = naive_usa(c.points(), beta);
        CHECK((velocity_usa(c, spec) - oracle).cwiseAbs().maxCoeff() < 1e-12 * std::exp(beta));
    }
}

TEST_CASE("fields are tangent") {
    const Configuration c = sample_uniform(6, 4, 5);
    ModelSpec spec;
    spec.beta = 3.0;
    for (Variant v : {Variant::SA, Variant::USA}) {
        spec.variant = v;
        const Mat f = velocity(c.points(), 0.0, spec);
        CHECK((f.cwiseProduct(c.points())).rowwise().sum().cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("multihead sums heads and reduces to SA for one identity head") {
    const Configuration c = sample_uniform(5, 3, 6);
    const Mat id = Mat::Identity(3, 3);
    ModelSpec mh;
    mh.variant = Variant::Multihead;
    mh.beta = 1.5;
    mh.heads = {{id, id, id}};
    ModelSpec sa;
    sa.beta = 1.5;
    CHECK((velocity_multihead(c, mh) - velocity_sa(c, sa)).cwiseAbs().maxCoeff() < 1e-14);
    const Head h2{random_matrix(3, 7), random_matrix(3, 8), random_matrix(3, 9)};
    mh.heads.push_back(h2);
    const Mat expected = naive_sa(c.points(), 1.5, id, id, id) + naive_sa(c.points(), 1.5, h2.Q, h2.K, h2.V);
    CHECK((velocity_multihead(c, mh) - expected).cwiseAbs().maxCoeff() < 1e-13);
    mh.heads.clear();
    CHECK_THROWS_AS(mh.validate(3), DomainError);
}

TEST_CASE("angular field agrees with the circle-embedded USA field") {
    Vec theta(5);
    theta << 0.3, 1.1, -2.0, 2.9, 0.0;
    ModelSpec ang;
    ang.variant = Variant::Angular;
    ang.beta = 2.0;
    ang.Kc = 1.0;
    const Vec w = velocity_angular(theta, ang);
    ModelSpec usa;
    usa.variant = Variant::USA;
    usa.beta = 2.0;
    const Mat v = velocity_usa(circle_embed(theta), usa);
    // d theta / dt = <v_i, (-sin, cos)> and the USA prefactor drops e^{beta}.
    for (Eigen::Index i = 0; i < 5; ++i) {
        const double tangential = -std::sin(theta(i)) * v(i, 0) + std::cos(theta(i)) * v(i, 1);
        CHECK(w(i) == doctest::Approx(tangential).epsilon(1e-12));
    }
}

TEST_CASE("Kuramoto sine coupling with natural frequencies") {
    Vec theta(2);
    theta << 0.0, 0.5;
    ModelSpec spec;
    spec.variant = Variant::Angular;
    spec.coupling = Coupling::Sine;
    spec.Kc = 2.0;
    spec.omega = Vec::Constant(2, 0.25);
    const Vec w = velocity_angular(theta, spec);
    CHECK(w(0) == doctest::Approx(0.25 + std::sin(0.5)));
    CHECK(w(1) == doctest::Approx(0.25 - std::sin(0.5)));
    spec.omega = Vec::Zero(3);
    CHECK_THROWS_AS(velocity_angular(theta, spec), DomainError);
}

TEST_CASE("hardmax selection example: ties and leaders") {
    Mat z(3, 2);
    z << 1, 1, -1, 1, 0, 0;
    ModelSpec spec;
    spec.variant = Variant::Hardmax;
    Mat v = velocity_hardmax(z, spec);
    CHECK(v.row(0).norm() == 0.0);
    CHECK(v.row(1).norm() == 0.0);
    // z3 sees a three-way tie at the origin; the average points up.
    CHECK(v(2, 0) == doctest::Approx(0.0));
    CHECK(v(2, 1) == doctest::Approx(2.0 / 3.0));
    spec.tie_rule = TieRule::LowestIndex;
    v = velocity_hardmax(z, spec);
    CHECK(v(2, 0) == doctest::Approx(1.0));
    CHECK(v(2, 1) == doctest::Approx(1.0));
}

TEST_CASE("euclidean rescaled field at t = 0 and overflow guard") {
    const Mat z = sample_uniform(4, 3, 3).points() * 2.0;
    ModelSpec spec;
    spec.variant = Variant::EuclideanRescaled;
    spec.beta = 0.0;
    spec.V = Mat::Identity(3, 3);
    // beta = 0: uniform weights, field is mean - z_i.
    const Mat expected = z.colwise().mean().replicate(4, 1) - z;
    CHECK((velocity_euclidean_rescaled(z, 0.0, spec) - expected).cwiseAbs().maxCoeff() < 1e-14);
    CHECK_THROWS_AS(velocity_euclidean_rescaled(z, 1e3, spec), DomainError);
}

TEST_CASE("SA field is permutation equivariant") {
    const Configuration c = sample_uniform(6, 3, 12);
    ModelSpec spec;
    spec.beta = 4.0;
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(6);
    perm.indices() << 3, 0, 5, 1, 4, 2;
    const Mat px = perm * c.points();
    CHECK((velocity_sa(px, spec) - perm * velocity_sa(c, spec)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("variant names round-trip") {
    for (Variant v : {Variant::SA, Variant::USA, Variant::QKV, Variant::Multihead, Variant::Angular, Variant::Hardmax,
                      Variant::EuclideanRescaled}) {
        CHECK(parse_variant(to_string(v)) == v);
    }
    CHECK_THROWS_AS(parse_variant("bogus"), DomainError);
}

TEST_CASE("model validation") {
    ModelSpec spec;
    spec.beta = -1.0;
    CHECK_THROWS_AS(spec.validate(3), DomainError);
    spec.beta = 1.0;
    spec.Q = Mat::Identity(2, 2);
    CHECK_THROWS_AS(spec.validate(3), DomainError);
    CHECK_FALSE(spec.is_isotropic());
    CHECK(ModelSpec{}.is_isotropic());
}

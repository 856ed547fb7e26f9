#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "attnflow/dynamics.hpp"
#include "attnflow/geometry.hpp"
#include "attnflow/integrate.hpp"

namespace attnflow {

/// Disjoint sets with path halving and union by size.
class UnionFind {
public:
    explicit UnionFind(std::size_t n);
    std::size_t find(std::size_t i);
    void unite(std::size_t a, std::size_t b);

private:
    std::vector<std::size_t> parent_;
    std::vector<std::size_t> size_;
};

struct ClusterSummary {
    double time = 0.0;
    double delta = 0.0;
    int count = 0;
    std::vector<int> labels;  // label = smallest particle index of the component
    double max_intra_angle = 0.0;
    double residual = 0.0;  // 1 - min_i <x_i, xbar>, 2 when the mean vanishes
};

struct Plateau {
    int count = 0;
    double t_start = 0.0;
    double t_end = 0.0;
};

struct RateFit {
    double lambda = 0.0;
    double c = 0.0;
    double r2 = 0.0;
    std::pair<double, double> window{0.0, 0.0};
    bool truncated = false;
    bool converged = false;
};

struct Histogram {
    std::vector<double> bin_lo;
    std::vector<double> bin_hi;
    std::vector<long> counts;
    std::vector<double> density;
    long total = 0;
};

struct PhaseGrid {
    std::vector<double> t_grid;
    std::vector<double> beta_grid;
    Mat prob;  // rows: beta, cols: t
    int reps = 0;
    long n = 0;
    long d = 0;
    double delta = 0.0;
    std::uint64_t seed = 0;
};

struct PhaseDiagramParams {
    long n = 32;
    long d = 512;
    double delta = 1e-3;
    std::vector<double> t_grid;
    std::vector<double> beta_grid;
    int reps = 64;
    std::uint64_t master_seed = 0;
    unsigned threads = 0;
    double dt = 0.02;
    /// SA with Q = K = V = I when empty; otherwise the given (Q, K, V) model, beta overwritten per row.
    std::optional<ModelSpec> model;
};

struct DeviationPoint {
    long d = 0;
    double mean = 0.0;
    double stderr_ = 0.0;
};

struct DeviationParams {
    long n = 4;
    double beta = 1.0;
    double t_probe = 0.5;
    std::vector<long> d_list;
    int reps = 50;
    std::uint64_t master_seed = 0;
    unsigned threads = 0;
    Variant variant = Variant::SA;
    bool orthonormal_start = false;
    double dt = 1e-2;
};

struct PairCorrelationParams {
    ModelSpec model;  // ANGULAR, or SA / USA run on the circle
    long n = 8;
    double t_probe = 0.0;
    int reps = 1000;
    int bins = 128;
    std::uint64_t master_seed = 0;
    unsigned threads = 0;
    double dt = 1e-2;
};

ClusterSummary cluster_summary(const Configuration& c, double delta, double time = 0.0);

/// One summary per stored sample; angle states are embedded on the circle.
std::vector<ClusterSummary> cluster_timeline(const Trajectory& traj, double delta);

std::vector<Plateau> metastable_plateaus(const std::vector<ClusterSummary>& timeline, double min_duration);
std::vector<Plateau> metastable_plateaus(const std::vector<double>& times, const std::vector<int>& counts,
                                         double min_duration);

/// Least-squares fit of log(residual) on the window.
RateFit fit_exponential_rate(const std::vector<double>& times, const std::vector<double>& residuals,
                             std::pair<double, double> window);
RateFit fit_exponential_rate(const Trajectory& traj, std::pair<double, double> window);

/// Max over particles of 1 - <x_i, xbar> computed as |x_i - xbar|^2 / 2.
double consensus_residual(const Mat& x);

Histogram gram_histogram(const Configuration& c, int bins);
Histogram gram_histogram(const Trajectory& traj, double t, int bins);

/// Orthonormal-basis reduction: an n x d configuration with d > n is rewritten
/// in coordinates of span{x_i}; inner products are preserved exactly.
Mat reduce_to_span(const Mat& x);

/// Per-row isotropic SA phase diagram on P(<x_1(t), x_2(t)> >= 1 - delta).
PhaseGrid empirical_phase_diagram(const PhaseDiagramParams& p);

std::vector<std::pair<double, double>> phase_curve_infty(long n, const std::vector<double>& beta_grid, double delta,
                                                         Variant variant);

std::vector<DeviationPoint> deviation_vs_dimension(const DeviationParams& p);

/// Density of theta_2 - theta_1 wrapped to [-pi, pi).
Histogram pair_correlation_circle(const PairCorrelationParams& p);

/// Fourier coefficients of e^{beta cos theta}, which equal I_k(beta).
std::vector<double> fourier_coefficients_hbeta(double beta, int k_max);

/// Seeded random (Q, K, V) SA model. qk_preset: identity | ginibre | wigner-sym;
/// value_preset: identity | equalsQK | gaussian-PSD | ginibre. Entries have variance 1/d.
ModelSpec random_qkv_model(const std::string& qk_preset, const std::string& value_preset, long d,
                           std::uint64_t seed);

/// Least-squares slope of log(y) on log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace attnflow

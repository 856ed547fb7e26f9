#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "attnflow/dynamics.hpp"
#include "attnflow/geometry.hpp"

namespace attnflow {

enum class Scheme { RK4Retract, EulerRetract };

struct IntegratorConfig {
    Scheme scheme = Scheme::RK4Retract;
    double dt = 1e-2;
    double t_end = 10.0;
    double sample_every = 1e-1;
    Retraction retraction = Retraction::ExpMap;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
    long max_steps = 200'000'000;
    /// Early stop once the max pairwise distance drops below this (sphere only); 0 disables.
    double stop_tol = 0.0;
    /// Keep full states at every sample; diagnostics are always kept.
    bool record_states = true;

    void validate() const;
};

struct Trajectory {
    StateKind kind = StateKind::Sphere;
    std::vector<double> times;
    std::vector<Mat> states;
    std::vector<double> energies;
    std::vector<double> min_gram;
    std::vector<double> max_offdiag_gram;
    ModelSpec model;
    IntegratorConfig integrator;

    bool monotonicity_checked = false;
    bool energy_violation = false;
    bool stopped_early = false;
    bool error = false;
    std::string error_message;

    const Mat& final_state() const { return states.back(); }
};

struct ScalarCurve {
    std::vector<double> times;
    std::vector<double> values;
    double beta = 0.0;
    long n = 2;
    Variant variant = Variant::SA;

    /// Linear interpolation; clamps outside the sampled range.
    double at(double t) const;
};

/// Energy slack for the monotonicity invariant.
inline constexpr double kEnergySlack = 1e-9;

/// One time step of size h from `state` at time t (deterministic part only).
Mat step_rk4(const Mat& state, double t, double h, const ModelSpec& model, Retraction mode);
Mat step_euler(const Mat& state, double t, double h, const ModelSpec& model, Retraction mode);

/// Scalar energy diagnostic for a state of the given model (NaN for R^d variants).
double state_energy(const Mat& state, const ModelSpec& model);

Trajectory integrate(const Mat& initial, const ModelSpec& model, const IntegratorConfig& cfg);
Trajectory integrate(const Configuration& initial, const ModelSpec& model, const IntegratorConfig& cfg);

/// States at the requested increasing times (times[0] may be 0), RK4 with
/// steps no larger than dt inside each interval. No diagnostics.
std::vector<Mat> integrate_at(const Mat& initial, const ModelSpec& model, const std::vector<double>& times,
                              double dt, Retraction mode = Retraction::ExpMap);

/// Projected Euler-Maruyama with tangent Gaussian increments.
Trajectory integrate_with_noise(const Mat& initial, const ModelSpec& model, const IntegratorConfig& cfg);

/// Right-hand side of the common-inner-product ODE for orthonormal starts.
double gamma_rhs(double gamma, double beta, long n, Variant variant);

ScalarCurve integrate_gamma(double beta, long n, Variant variant, const IntegratorConfig& cfg);

double solve_gamma_hitting_time(double beta, long n, Variant variant, double level, double max_horizon = 1e6);

double theoretical_deviation_bound(double t, double beta, long n, long d, const ScalarCurve& gamma_curve);

}  // namespace attnflow

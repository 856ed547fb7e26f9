#pragma once

#include <string>
#include <vector>

#include "attnflow/dynamics.hpp"
#include "attnflow/geometry.hpp"

namespace attnflow {

enum class Classification { LocalMaxCandidate, StrictSaddle, Inconclusive };

std::string to_string(Classification c);

struct LandscapeReport {
    double grad_norm = 0.0;
    std::vector<double> hessian_eigs;  // ascending
    Classification classification = Classification::Inconclusive;
    double beta = 0.0;
    std::string diagnostic;
};

struct DesignTestResult {
    int degree = 0;
    double max_discrepancy = 0.0;
    bool passed = false;
    int distinct_inner_products = 0;
};

/// Standard: e^{beta s}; Shifted: e^{beta s} - 1. Both carry the 1/(2 beta n^2) prefactor.
enum class EnergyConvention { Standard, Shifted };

inline constexpr double kDefaultEigTol = 1e-7;
inline constexpr double kDefaultGradTol = 1e-9;
inline constexpr double kDefaultDesignTol = 1e-6;

double interaction_energy(const Configuration& c, double beta,
                          EnergyConvention convention = EnergyConvention::Standard);
double energy_e0(const Configuration& c);
double energy_circle(const Vec& theta, double beta);
double energy_kuramoto(const Vec& theta, double Kc);
double config_energy_repulsive(const Configuration& c, double beta);

/// Riemannian gradient of interaction_energy, one tangent row per particle.
/// Defined for beta >= 0 (the formula has no 1/beta).
Mat gradient_standard(const Configuration& c, double beta);

/// max_i || Z_i v_i - n^2 grad_i || for the SA field v.
double modified_metric_check(const Configuration& c, double beta);

/// d/dt interaction_energy along SA or USA with V = I.
double dissipation_rate(const Configuration& c, double beta, Variant variant);

double g_function(double zeta, double beta, int d);
double tau_star(double beta, int d);

/// Analytic Hessian of energy_circle in the angles.
Mat circle_hessian(const Vec& theta, double beta);
Vec circle_gradient(const Vec& theta, double beta);

/// Hessian of interaction_energy in exp-map normal coordinates, n(d-1) square.
Mat hessian_fd(const Configuration& c, double beta, double h = 1e-4);

/// Orthonormal basis of T_x S^{d-1}, one basis vector per column.
Mat tangent_frame(const Vec& x);

LandscapeReport classify_critical_point(const Configuration& c, double beta,
                                        double grad_tol = kDefaultGradTol,
                                        double eig_tol = kDefaultEigTol);
LandscapeReport classify_critical_point(const Vec& theta, double beta,
                                        double grad_tol = kDefaultGradTol,
                                        double eig_tol = kDefaultEigTol);

double sphere_monomial_moment(const std::vector<int>& exponents, int d);

DesignTestResult design_test(const Configuration& c, int degree, double design_tol = kDefaultDesignTol);

}  // namespace attnflow

#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "epscpmg/errors.hpp"

namespace epscpmg {

inline constexpr double kDefaultSmoothingSigmaRad = 6.0 * M_PI / 180.0;

// Closed-form coherence model
//   C(eps) = A eps^2 / ((J/D1)^2 + eps^2 + (D2/D1)^2 eps^4 + (D3/D1)^2 eps^6)
// fitted after convolution with a Gaussian in epsilon.
struct AnalyticFitParams {
  double amplitude = 1.0;
  double j_over_d1 = 0.3;    // rad
  double d2_over_d1 = 0.0;   // rad^-1
  double d3_over_d1 = 0.0;   // rad^-2
  double smoothing_sigma_rad = kDefaultSmoothingSigmaRad;

  void validate() const;
};

// Spin-locking field generated by the rotation offset: eps / (2 tau).
double effective_field(double epsilon_rad, double tau_us);

// Raw (unsmoothed) model value.
double analytic_coherence(double epsilon_rad, const AnalyticFitParams& params);

// Discrete Gaussian convolution on a uniform grid, kernel truncated at
// +/- 4 sigma, reflective boundaries, taps renormalized to unit sum.
Eigen::VectorXd gaussian_smooth(const Eigen::VectorXd& values,
                                double grid_step, double sigma);

// Model curve evaluated on an internal uniform grid, smoothed, then
// interpolated back to the requested epsilon values (ascending not required).
Eigen::VectorXd smoothed_model(const Eigen::VectorXd& epsilon_rad,
                               const AnalyticFitParams& params);

struct CurvePoint {
  double x;       // epsilon (rad) or time (us), depending on the fit
  double value;   // coherence
  double sigma;   // standard error; <= 0 means absent
};

struct AnalyticFitReport {
  AnalyticFitParams params;
  Eigen::Vector4d std_errors;  // A, J/D1, D2/D1, D3/D1
  double chi2 = 0.0;
  double residual_norm = 0.0;
  int points = 0;
  int iterations = 0;
};

// Weighted nonlinear least squares of the smoothed model with the fixed
// multi-start grid J/D1 in {5, 15, 30, 60} degrees.  Throws FitError when
// no start converges or the data are degenerate.
AnalyticFitReport fit_coherence_curve(
    const std::vector<CurvePoint>& data,
    double smoothing_sigma_rad = kDefaultSmoothingSigmaRad);

struct StretchedExpFit {
  double t2_us = 0.0;
  double exponent = 1.0;
  double amplitude = 1.0;
};

struct StretchedExpReport {
  StretchedExpFit fit;
  Eigen::Vector3d std_errors;  // amplitude, T2, n (n slot 0 when fixed)
  double chi2 = 0.0;
  double residual_norm = 0.0;
  int points = 0;
};

// Least squares of amplitude * exp(-(t/T2)^n); n optionally fixed.
StretchedExpReport fit_stretched_exponential(
    const std::vector<CurvePoint>& data,
    std::optional<double> fix_exponent = std::nullopt);

// Late-time spin-temperature coherence M B^2 / tr~[H^2] for
// H = B sum sigma_y + H_dipolar, with the normalized trace
// tr~[H^2] = M (Jbar^2 + B^2) and Jbar^2 = (3/M) sum_{i<j} J_ij^2.
double spin_temperature_coherence(double b_eff,
                                  const Eigen::MatrixXd& pair_couplings);

}  // namespace epscpmg

#include "epscpmg/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace epscpmg {

namespace {

// ---------------------------------------------------------------------------
// Small damped Gauss-Newton (Levenberg-Marquardt) driver.
// Residuals are weighted inside `fn`; the Jacobian is central-difference.
// ---------------------------------------------------------------------------

struct LmOptions {
  int max_iterations = 200;
  double ftol = 1e-14;
  std::function<bool(const Eigen::VectorXd&)> accept =
      [](const Eigen::VectorXd&) { return true; };
  Eigen::VectorXd lower_bounds;  // optional, per parameter
};

struct LmResult {
  Eigen::VectorXd parameters;
  double chi2 = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd jtj;
  bool converged = false;
  int iterations = 0;
};

// Central differences away from the bounds, one-sided at a bound.
Eigen::MatrixXd numeric_jacobian(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& fn,
    const Eigen::VectorXd& p, const Eigen::VectorXd& base,
    const LmOptions& options) {
  Eigen::MatrixXd jac(base.size(), p.size());
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    const double h = std::max(1e-8, 1e-7 * std::abs(p[j]));
    const double lo_bound = options.lower_bounds.size() == p.size()
                                ? options.lower_bounds[j]
                                : -std::numeric_limits<double>::infinity();
    Eigen::VectorXd hi = p;
    hi[j] += h;
    if (p[j] - h >= lo_bound) {
      Eigen::VectorXd lo = p;
      lo[j] -= h;
      jac.col(j) = (fn(hi) - fn(lo)) / (2.0 * h);
    } else {
      jac.col(j) = (fn(hi) - base) / h;
    }
  }
  return jac;
}

LmResult levenberg_marquardt(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& fn,
    Eigen::VectorXd p, const LmOptions& options = {}) {
  LmResult result;
  Eigen::VectorXd residuals = fn(p);
  double chi2 = residuals.squaredNorm();
  double lambda = 1e-3;

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    result.iterations = iter + 1;
    const Eigen::MatrixXd jac = numeric_jacobian(fn, p, residuals, options);
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd grad = jac.transpose() * residuals;
    bool stepped = false;
    for (int tries = 0; tries < 25; ++tries) {
      Eigen::MatrixXd damped = jtj;
      damped.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
      const Eigen::VectorXd step = damped.ldlt().solve(grad);
      const Eigen::VectorXd candidate = p - step;
      if (options.accept(candidate) && candidate.allFinite()) {
        const Eigen::VectorXd cand_res = fn(candidate);
        const double cand_chi2 = cand_res.squaredNorm();
        if (std::isfinite(cand_chi2) && cand_chi2 <= chi2) {
          const double improvement = chi2 - cand_chi2;
          p = candidate;
          residuals = cand_res;
          chi2 = cand_chi2;
          lambda = std::max(lambda * 0.3, 1e-12);
          stepped = true;
          if (improvement <= options.ftol * (1.0 + chi2)) {
            result.converged = true;
          }
          break;
        }
      }
      lambda *= 10.0;
      if (lambda > 1e12) break;
    }
    if (!stepped) {
      // No downhill step found at any damping: local minimum.
      result.converged = true;
      break;
    }
    if (result.converged) break;
  }
  result.parameters = p;
  result.chi2 = chi2;
  const Eigen::MatrixXd jac = numeric_jacobian(fn, p, residuals, options);
  result.jtj = jac.transpose() * jac;
  return result;
}

Eigen::VectorXd parameter_errors(const LmResult& lm, int n_points) {
  const int n_params = static_cast<int>(lm.parameters.size());
  Eigen::VectorXd errors = Eigen::VectorXd::Zero(n_params);
  const int dof = n_points - n_params;
  if (dof <= 0) return errors;
  Eigen::MatrixXd cov = lm.jtj;
  cov.diagonal() += Eigen::VectorXd::Constant(n_params, 1e-300);
  const Eigen::MatrixXd inv =
      cov.ldlt().solve(Eigen::MatrixXd::Identity(n_params, n_params));
  const double scale = lm.chi2 / dof;
  for (int i = 0; i < n_params; ++i) {
    errors[i] = std::sqrt(std::max(0.0, inv(i, i) * scale));
  }
  return errors;
}

double weight_of(const CurvePoint& point) {
  return point.sigma > 0.0 ? 1.0 / (point.sigma * point.sigma) : 1.0;
}

}  // namespace

void AnalyticFitParams::validate() const {
  if (amplitude <= 0.0) throw FitError("amplitude must be positive");
  if (j_over_d1 < 0.0) throw FitError("J/D1 must be >= 0");
  if (smoothing_sigma_rad < 0.0) throw FitError("smoothing sigma must be >= 0");
}

double effective_field(double epsilon_rad, double tau_us) {
  if (tau_us <= 0.0) throw ContractError("tau must be positive");
  return epsilon_rad / (2.0 * tau_us);
}

double analytic_coherence(double epsilon_rad,
                          const AnalyticFitParams& params) {
  const double e2 = epsilon_rad * epsilon_rad;
  const double denom = params.j_over_d1 * params.j_over_d1 + e2 +
                       params.d2_over_d1 * params.d2_over_d1 * e2 * e2 +
                       params.d3_over_d1 * params.d3_over_d1 * e2 * e2 * e2;
  if (denom == 0.0) return 0.0;  // eps = 0 with J/D1 = 0
  return params.amplitude * e2 / denom;
}

Eigen::VectorXd gaussian_smooth(const Eigen::VectorXd& values,
                                double grid_step, double sigma) {
  if (grid_step <= 0.0) throw ContractError("grid step must be positive");
  const Eigen::Index n = values.size();
  if (sigma <= 0.0 || n < 2) return values;
  const int halfwidth =
      std::max(1, static_cast<int>(std::ceil(4.0 * sigma / grid_step)));
  Eigen::VectorXd taps(2 * halfwidth + 1);
  for (int k = -halfwidth; k <= halfwidth; ++k) {
    const double x = k * grid_step / sigma;
    taps[k + halfwidth] = std::exp(-0.5 * x * x);
  }
  taps /= taps.sum();

  auto reflect = [n](Eigen::Index i) {
    while (i < 0 || i >= n) {
      if (i < 0) i = -i;
      if (i >= n) i = 2 * (n - 1) - i;
    }
    return i;
  };

  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int k = -halfwidth; k <= halfwidth; ++k) {
      acc += taps[k + halfwidth] * values[reflect(i + k)];
    }
    out[i] = acc;
  }
  return out;
}

Eigen::VectorXd smoothed_model(const Eigen::VectorXd& epsilon_rad,
                               const AnalyticFitParams& params) {
  if (epsilon_rad.size() == 0) return {};
  if (params.smoothing_sigma_rad <= 0.0) {
    Eigen::VectorXd out(epsilon_rad.size());
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      out[i] = analytic_coherence(epsilon_rad[i], params);
    }
    return out;
  }

  const double sigma = params.smoothing_sigma_rad;
  const double lo = epsilon_rad.minCoeff() - 4.0 * sigma;
  const double hi = epsilon_rad.maxCoeff() + 4.0 * sigma;
  const double step = sigma / 4.0;
  const Eigen::Index n_grid =
      static_cast<Eigen::Index>(std::ceil((hi - lo) / step)) + 1;
  Eigen::VectorXd grid(n_grid), raw(n_grid);
  for (Eigen::Index i = 0; i < n_grid; ++i) {
    grid[i] = lo + i * step;
    raw[i] = analytic_coherence(grid[i], params);
  }
  const Eigen::VectorXd smooth = gaussian_smooth(raw, step, sigma);

  Eigen::VectorXd out(epsilon_rad.size());
  for (Eigen::Index i = 0; i < epsilon_rad.size(); ++i) {
    const double x = (epsilon_rad[i] - lo) / step;
    const Eigen::Index j = std::clamp<Eigen::Index>(
        static_cast<Eigen::Index>(std::floor(x)), 0, n_grid - 2);
    const double frac = x - j;
    out[i] = (1.0 - frac) * smooth[j] + frac * smooth[j + 1];
  }
  return out;
}

AnalyticFitReport fit_coherence_curve(const std::vector<CurvePoint>& data,
                                      double smoothing_sigma_rad) {
  if (data.size() < 8) {
    throw FitError("need at least 8 points for the coherence-curve fit");
  }
  bool has_negative = false, has_positive = false;
  double max_value = 0.0;
  Eigen::VectorXd eps(data.size()), values(data.size()), weights(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    eps[i] = data[i].x;
    values[i] = data[i].value;
    weights[i] = weight_of(data[i]);
    has_negative = has_negative || data[i].x < 0.0;
    has_positive = has_positive || data[i].x > 0.0;
    max_value = std::max(max_value, data[i].value);
  }
  if (!has_negative || !has_positive) {
    throw FitError("data must span both signs of epsilon");
  }
  if (max_value <= 0.0) {
    throw FitError("degenerate data: no positive coherence values");
  }
  const Eigen::VectorXd sqrt_w = weights.cwiseSqrt();

  // The ratios enter the model squared, so fit their squares directly:
  // p = (A, u, v, w) with u = (J/D1)^2, v = (D2/D1)^2, w = (D3/D1)^2.
  auto residual_fn = [&](const Eigen::VectorXd& p) -> Eigen::VectorXd {
    AnalyticFitParams trial;
    trial.amplitude = p[0];
    trial.j_over_d1 = std::sqrt(std::max(0.0, p[1]));
    trial.d2_over_d1 = std::sqrt(std::max(0.0, p[2]));
    trial.d3_over_d1 = std::sqrt(std::max(0.0, p[3]));
    trial.smoothing_sigma_rad = smoothing_sigma_rad;
    const Eigen::VectorXd model = smoothed_model(eps, trial);
    return sqrt_w.cwiseProduct(model - values);
  };

  static const double kStartsDeg[] = {5.0, 15.0, 30.0, 60.0};
  LmOptions options;
  options.accept = [](const Eigen::VectorXd& p) {
    return p[0] > 0.0 && p[1] >= 0.0 && p[2] >= 0.0 && p[3] >= 0.0;
  };
  options.lower_bounds = Eigen::Vector4d(0.0, 0.0, 0.0, 0.0);

  LmResult best;
  int best_iterations = 0;
  for (const double start_deg : kStartsDeg) {
    const double start = start_deg * M_PI / 180.0;
    Eigen::VectorXd p0(4);
    p0 << max_value, start * start, 0.0, 0.0;
    const LmResult lm = levenberg_marquardt(residual_fn, p0, options);
    if (lm.converged && lm.chi2 < best.chi2) {
      best = lm;
      best_iterations = lm.iterations;
    }
  }
  if (!std::isfinite(best.chi2)) {
    throw FitError("coherence-curve fit did not converge from any start");
  }

  AnalyticFitReport report;
  report.params.amplitude = best.parameters[0];
  report.params.j_over_d1 = std::sqrt(std::max(0.0, best.parameters[1]));
  report.params.d2_over_d1 = std::sqrt(std::max(0.0, best.parameters[2]));
  report.params.d3_over_d1 = std::sqrt(std::max(0.0, best.parameters[3]));
  report.params.smoothing_sigma_rad = smoothing_sigma_rad;
  report.chi2 = best.chi2;
  report.residual_norm = std::sqrt(best.chi2);
  report.points = static_cast<int>(data.size());
  report.iterations = best_iterations;
  // Delta method from the squared parameters: sigma_r = sigma_{r^2}/(2 r).
  const Eigen::VectorXd raw_errors = parameter_errors(best, report.points);
  report.std_errors[0] = raw_errors[0];
  const double ratios[3] = {report.params.j_over_d1, report.params.d2_over_d1,
                            report.params.d3_over_d1};
  for (int k = 0; k < 3; ++k) {
    report.std_errors[k + 1] =
        ratios[k] > 1e-12 ? raw_errors[k + 1] / (2.0 * ratios[k])
                          : raw_errors[k + 1];
  }
  if (report.params.amplitude <= 1e-6 * max_value ||
      report.params.amplitude <= 0.0) {
    throw FitError("degenerate fit: amplitude collapsed to zero");
  }
  return report;
}

StretchedExpReport fit_stretched_exponential(
    const std::vector<CurvePoint>& data, std::optional<double> fix_exponent) {
  if (data.size() < 4) {
    throw FitError("need at least 4 points for the decay fit");
  }
  for (const auto& point : data) {
    if (point.x <= 0.0) throw FitError("decay fit requires t > 0");
  }
  std::vector<CurvePoint> sorted = data;
  std::sort(sorted.begin(), sorted.end(),
            [](const CurvePoint& a, const CurvePoint& b) { return a.x < b.x; });

  // Non-decaying data cannot be fit by a decaying envelope.
  double sxy = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0;
  for (const auto& p : sorted) {
    sx += p.x;
    sy += p.value;
    sxy += p.x * p.value;
    sxx += p.x * p.x;
  }
  const double n = static_cast<double>(sorted.size());
  const double slope = (n * sxy - sx * sy) / std::max(n * sxx - sx * sx, 1e-300);
  if (slope >= 0.0) {
    throw FitError("data do not decay; refusing stretched-exponential fit");
  }

  const double amp0 = std::max(sorted.front().value, 1e-12);
  double t2_guess = sorted.back().x * 0.5;
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].value <= amp0 / M_E) {
      t2_guess = sorted[i].x;
      break;
    }
  }

  Eigen::VectorXd sqrt_w(sorted.size()), values(sorted.size()),
      times(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    sqrt_w[i] = std::sqrt(weight_of(sorted[i]));
    values[i] = sorted[i].value;
    times[i] = sorted[i].x;
  }

  const bool fit_exponent = !fix_exponent.has_value();
  auto residual_fn = [&](const Eigen::VectorXd& p) -> Eigen::VectorXd {
    const double amp = p[0];
    const double t2 = p[1];
    const double exponent = fit_exponent ? p[2] : *fix_exponent;
    Eigen::VectorXd res(times.size());
    for (Eigen::Index i = 0; i < times.size(); ++i) {
      const double model = amp * std::exp(-std::pow(times[i] / t2, exponent));
      res[i] = sqrt_w[i] * (model - values[i]);
    }
    return res;
  };

  LmOptions options;
  options.accept = [fit_exponent](const Eigen::VectorXd& p) {
    return p[1] > 0.0 && (!fit_exponent || p[2] > 0.0);
  };
  Eigen::VectorXd p0(fit_exponent ? 3 : 2);
  if (fit_exponent) {
    p0 << amp0, t2_guess, 1.0;
  } else {
    p0 << amp0, t2_guess;
  }
  const LmResult lm = levenberg_marquardt(residual_fn, p0, options);
  if (!lm.converged || !std::isfinite(lm.chi2)) {
    throw FitError("stretched-exponential fit did not converge");
  }

  StretchedExpReport report;
  report.fit.amplitude = lm.parameters[0];
  report.fit.t2_us = lm.parameters[1];
  report.fit.exponent = fit_exponent ? lm.parameters[2] : *fix_exponent;
  report.chi2 = lm.chi2;
  report.residual_norm = std::sqrt(lm.chi2);
  report.points = static_cast<int>(sorted.size());
  const Eigen::VectorXd errors = parameter_errors(lm, report.points);
  report.std_errors.setZero();
  report.std_errors[0] = errors[0];
  report.std_errors[1] = errors[1];
  if (fit_exponent) report.std_errors[2] = errors[2];
  if (report.fit.t2_us <= 0.0 || report.fit.exponent <= 0.0) {
    throw FitError("stretched-exponential fit left the valid domain");
  }
  return report;
}

double spin_temperature_coherence(double b_eff,
                                  const Eigen::MatrixXd& pair_couplings) {
  const int m = static_cast<int>(pair_couplings.rows());
  if (m < 1 || pair_couplings.cols() != m) {
    throw ContractError("pair_couplings must be M x M");
  }
  double sum_j2 = 0.0;
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      sum_j2 += pair_couplings(i, j) * pair_couplings(i, j);
    }
  }
  const double jbar2 = 3.0 * sum_j2 / m;
  const double denom = jbar2 + b_eff * b_eff;
  if (denom == 0.0) return 0.0;
  return b_eff * b_eff / denom;
}

}  // namespace epscpmg

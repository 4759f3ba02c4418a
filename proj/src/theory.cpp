// Copyright 2026 The IST Lab Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#include "istlab/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "istlab/error.hpp"

namespace istlab {

SymMatrix compute_W(const QuadraticProblem& p, const ExpectationReport& report) {
  const Matrix& l = p.L_bar().mat();
  const Matrix& e = report.E_B.mat();
  return SymMatrix(0.5 * (l * e + e * l));
}

SymMatrix compute_W(const QuadraticProblem& p, const SketchKind& kind,
                    const ExpectationPolicy& policy) {
  return compute_W(p, resolve_expectation(kind, p, false, policy));
}

Theta compute_theta(const SymMatrix& w, const SymMatrix& e_blb) {
  if (w.dim() != e_blb.dim()) throw Error(Errc::kDimMismatch, "compute_theta: shapes differ");
  if (!psd_check(w)) return {false, 0.0, "W_bar is not positive semidefinite"};
  const Spectrum sw = eig_sym(w);
  const double top = sw.lambda_max();
  if (top <= 0.0) return {false, 0.0, "W_bar vanishes"};
  const double cut = kRankTol * top;

  std::vector<int> range;
  std::vector<int> null;
  for (int j = 0; j < sw.eigenvalues.size(); ++j) (sw.eigenvalues[j] > cut ? range : null).push_back(j);

  const Matrix& e = e_blb.mat();
  const double e_scale = std::max(e.norm(), std::numeric_limits<double>::min());
  if (!null.empty()) {
    Matrix vn(w.dim(), static_cast<Eigen::Index>(null.size()));
    for (std::size_t c = 0; c < null.size(); ++c) vn.col(static_cast<Eigen::Index>(c)) = sw.eigenvectors.col(null[c]);
    if ((vn.transpose() * e * vn).norm() > kRankTol * e_scale) {
      return {false, 0.0, "E[B L B] is nonzero on the null space of W_bar"};
    }
  }
  Matrix scaled(w.dim(), static_cast<Eigen::Index>(range.size()));
  for (std::size_t c = 0; c < range.size(); ++c) {
    const int j = range[c];
    scaled.col(static_cast<Eigen::Index>(c)) = sw.eigenvectors.col(j) / std::sqrt(sw.eigenvalues[j]);
  }
  const double theta = eig_sym(SymMatrix(scaled.transpose() * e * scaled)).lambda_max();
  if (!(theta > 0.0)) return {false, 0.0, "E[B L B] vanishes"};
  return {true, theta, ""};
}

Theta compute_theta(const QuadraticProblem& p, const SketchKind& kind,
                    const ExpectationPolicy& policy) {
  const ExpectationReport r = resolve_expectation(kind, p, true, policy);
  return compute_theta(compute_W(p, r), *r.E_BLB);
}

double contraction_eigenvalue(const QuadraticProblem& p, const SymMatrix& w) {
  const SymMatrix s = inverse_sqrt(p.L_bar());
  return eig_sym(SymMatrix(s.mat() * w.mat() * s.mat())).lambda_min();
}

namespace {

// Admits gamma up to 1/theta with a relative slack for rounding in theta.
void check_step(double gamma, const Theta& theta) {
  if (!theta.admissible) throw Error(Errc::kThetaInadmissible, theta.reason);
  if (!(gamma > 0.0) || gamma * theta.value > 1.0 + 1e-9) {
    throw Error(Errc::kStepTooLarge, "step size must satisfy 0 < gamma <= 1/theta");
  }
}

double clamp_rho(double rho) { return std::clamp(rho, 0.0, 1.0); }

}  // namespace

InterpolationRates interpolation_rates(const QuadraticProblem& p, const SketchKind& kind,
                                       double gamma, const ExpectationPolicy& policy) {
  const ExpectationReport r = resolve_expectation(kind, p, true, policy);
  const SymMatrix w = compute_W(p, r);
  check_step(gamma, compute_theta(w, *r.E_BLB));
  return {2.0 / gamma, clamp_rho(1.0 - gamma * contraction_eigenvalue(p, w))};
}

namespace {

bool unit_diagonal(const QuadraticProblem& p) {
  for (int i = 0; i < p.n(); ++i) {
    if ((p.D(i).diag().array() != 1.0).any()) return false;
  }
  return true;
}

}  // namespace

bool has_unit_expected_B(const QuadraticProblem& p, const SketchKind& kind) {
  const int n = p.n();
  const int d = p.d();
  switch (kind.tag) {
    case SketchTag::kScaledPermHet:
      return n == d || (n > d && n % d == 0);
    case SketchTag::kScaledPermHomog:
      return n == d && p.homogeneous() && unit_diagonal(p);
    case SketchTag::kPermMultiset:
      return n > d && n % d == 0 && p.homogeneous() && unit_diagonal(p);
    default:
      return false;
  }
}

namespace {

Vector unit_b_fixed_point(const QuadraticProblem& p) {
  const int m = std::min(p.n(), p.d());
  Vector acc = Vector::Zero(p.d());
  for (int i = 0; i < p.n(); ++i) acc += p.b(i).cwiseQuotient(p.D(i).diag().cwiseSqrt());
  return acc / (static_cast<double>(p.n()) * std::sqrt(static_cast<double>(m)));
}

}  // namespace

Vector fixed_point(const QuadraticProblem& p, const SketchKind& kind,
                   const ExpectationPolicy& policy) {
  validate_shape(kind, p.n(), p.d());
  if (has_unit_expected_B(p, kind)) return unit_b_fixed_point(p);
  const ExpectationReport r = resolve_expectation(kind, p, false, policy);
  return pinv_solve(eig_sym(r.E_B), r.E_Cb);
}

Vector bias_h(const QuadraticProblem& p, const SketchKind& kind) {
  validate_shape(kind, p.n(), p.d());
  if (!has_unit_expected_B(p, kind)) {
    throw Error(Errc::kWrongKind, "bias_h needs a sketch with E[B] = I, got " + kind.name());
  }
  return solution(p) - unit_b_fixed_point(p);
}

Vector expected_iterate(const QuadraticProblem& p, const SketchKind& kind, const Vector& x0,
                        double gamma, int k) {
  validate_shape(kind, p.n(), p.d());
  if (!has_unit_expected_B(p, kind)) {
    throw Error(Errc::kWrongKind, "expected_iterate needs a sketch with E[B] = I");
  }
  if (x0.size() != p.d()) throw Error(Errc::kDimMismatch, "expected_iterate: x0 has wrong size");
  if (!(gamma > 0.0) || k < 0) throw Error(Errc::kStepSizeOutOfRange, "expected_iterate: bad gamma or k");
  const double a = std::pow(1.0 - gamma, k);
  return a * x0 + (1.0 - a) * unit_b_fixed_point(p);
}

double step_limit(double beta, double c) { return (1.0 - c - beta) / (beta + 0.5); }

void check_bound_params(const BoundParams& params) {
  if (!(params.c > 0.0 && params.c < 1.0)) {
    throw Error(Errc::kBetaOutOfRange, "c must lie in (0, 1)");
  }
  if (!(params.beta > 0.0) || !(params.beta + params.c < 1.0)) {
    throw Error(Errc::kBetaOutOfRange, "beta must satisfy beta > 0 and beta + c < 1");
  }
  if (!(params.gamma > 0.0) || params.gamma > step_limit(params.beta, params.c)) {
    throw Error(Errc::kStepSizeOutOfRange, "gamma must lie in (0, gamma_{c,beta}]");
  }
}

BoundCurve gen_thm_bound(double h_sqnorm, double sigma2, const BoundParams& params,
                         std::span<const double> f_values) {
  check_bound_params(params);
  if (f_values.size() < 2) throw Error(Errc::kConfigInvalid, "bound curve needs f_0 and f_1");
  const double g = params.gamma;
  const double c = params.c;
  BoundCurve out;
  out.params = params;
  out.h_sqnorm = h_sqnorm;
  out.sigma2 = sigma2;
  out.neighborhood =
      ((1.0 - g) / (c * params.beta) + g / (2.0 * c)) * h_sqnorm + g / (2.0 * c) * sigma2;
  out.values.reserve(f_values.size() - 1);
  for (std::size_t k = 1; k < f_values.size(); ++k) {
    out.values.push_back((f_values[0] - f_values[k]) / (c * g * static_cast<double>(k)) +
                         out.neighborhood);
  }
  for (double v : out.values) {
    if (!std::isfinite(v)) throw Error(Errc::kNonFinite, "bound curve is not finite");
  }
  return out;
}

BoundCurve gen_thm_bound(const QuadraticProblem& p, const BoundParams& params,
                         std::span<const double> f_values, const Sigma2Options& sigma) {
  check_bound_params(params);
  const SketchKind kind = SketchKind::scaled_perm_het();
  const Vector h = bias_h(p, kind);
  const double s2 = heterogeneity_sigma2(p, kind, sigma).value;
  return gen_thm_bound(weighted_sqnorm(h, p.L_bar()), s2, params, f_values);
}

BoundCurve thm2_bound(const QuadraticProblem& p, double gamma, double beta,
                      std::span<const double> f_values, const Sigma2Options& sigma) {
  return gen_thm_bound(p, BoundParams{gamma, beta, 0.5}, f_values, sigma);
}

double thm4_bound(const QuadraticProblem& p_hom, const BoundParams& params, int k, double f0) {
  check_bound_params(params);
  if (!p_hom.homogeneous() || !unit_diagonal(p_hom)) {
    throw Error(Errc::kNotHomogeneous, "thm4_bound needs a preconditioned homogeneous problem");
  }
  const Vector x_star = solution(p_hom);
  const Vector h = x_star - unit_b_fixed_point(p_hom);
  const double f_star = f_val(p_hom, x_star);
  const double g = params.gamma;
  const double c = params.c;
  return std::pow(1.0 - 2.0 * g * c, k) * (f0 - f_star) +
         (1.0 / (2.0 * c)) * ((1.0 - g) / params.beta + g / 2.0) * weighted_sqnorm(h, p_hom.L_bar());
}

double neighborhood_psi(double beta, double gamma) {
  if (!(beta > 0.0)) throw Error(Errc::kBetaOutOfRange, "beta must be positive");
  const double den = 1.0 - gamma / 2.0 - beta * (1.0 - gamma);
  if (!(den > 0.0)) throw Error(Errc::kDenominatorNonpositive, "1 - gamma/2 - beta(1-gamma) <= 0");
  return ((1.0 - gamma) / beta + gamma / 2.0) / den;
}

PsiMinimum minimize_psi(const PsiGrid& grid) {
  if (!(grid.step > 0.0) || !(grid.beta_max > 0.0) || !(grid.gamma_max > 0.0)) {
    throw Error(Errc::kConfigInvalid, "minimize_psi: grid bounds and step must be positive");
  }
  const auto nb = static_cast<long>(std::floor(grid.beta_max / grid.step + 1e-9));
  const auto ng = static_cast<long>(std::floor(grid.gamma_max / grid.step + 1e-9));
  PsiMinimum best{0.0, 0.0, std::numeric_limits<double>::infinity()};
  for (long i = 1; i <= nb; ++i) {
    const double beta = grid.step * static_cast<double>(i);
    for (long j = 1; j <= ng; ++j) {
      const double gamma = grid.step * static_cast<double>(j);
      const double den = 1.0 - gamma / 2.0 - beta * (1.0 - gamma);
      if (!(den > 0.0)) continue;
      const double psi = ((1.0 - gamma) / beta + gamma / 2.0) / den;
      if (psi < best.psi) best = {beta, gamma, psi};
    }
  }
  return best;
}

TheoryCertificate certify(const QuadraticProblem& p, const SketchKind& kind,
                          const CertifyOptions& options) {
  validate_shape(kind, p.n(), p.d());
  TheoryCertificate cert;
  cert.kind = kind;
  const ExpectationReport r = resolve_expectation(kind, p, true, options.policy);
  cert.method = r.method;
  cert.W = compute_W(p, r);
  cert.W_psd = psd_check(cert.W);
  if (r.E_BLB) {
    cert.theta = compute_theta(cert.W, *r.E_BLB);
  } else {
    cert.theta = {false, 0.0, "E[B L B] unavailable"};
  }
  if (!cert.theta.admissible) cert.notes.push_back("theta inadmissible: " + cert.theta.reason);

  if (cert.theta.admissible) {
    cert.gamma_max = 1.0 / cert.theta.value;
    cert.gamma = options.gamma.value_or(*cert.gamma_max);
    if (*cert.gamma * cert.theta.value > 1.0 + 1e-9) cert.notes.push_back("gamma exceeds 1/theta");
  } else if (options.gamma) {
    cert.gamma = options.gamma;
  }

  std::optional<Vector> x_star;
  try {
    x_star = solution(p);
  } catch (const Error& e) {
    cert.notes.push_back(std::string("no unique minimizer: ") + e.what());
  }
  if (cert.gamma && x_star) {
    cert.contraction_rho = clamp_rho(1.0 - *cert.gamma * contraction_eigenvalue(p, cert.W));
  }

  cert.x_inf = has_unit_expected_B(p, kind) ? unit_b_fixed_point(p) : pinv_solve(eig_sym(r.E_B), r.E_Cb);
  if (x_star) {
    cert.bias_h = *x_star - cert.x_inf;
    cert.h_norm_L = std::sqrt(std::max(0.0, weighted_sqnorm(*cert.bias_h, p.L_bar())));
  }

  Sigma2Options so;
  so.x = cert.x_inf;
  so.budget = options.policy.budget;
  so.mc_samples = options.sigma_mc_samples;
  so.mc_seed = options.policy.mc_seed;
  try {
    cert.sigma2 = heterogeneity_sigma2(p, kind, so).value;
  } catch (const Error& e) {
    cert.notes.push_back(std::string("sigma2 unavailable: ") + e.what());
  }
  return cert;
}

namespace {

nlohmann::json vec_json(const Vector& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

template <class T>
nlohmann::json opt_json(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string method_name(ExpectationMethod m) {
  switch (m) {
    case ExpectationMethod::kClosedForm: return "closed_form";
    case ExpectationMethod::kEnumeration: return "enumeration";
    case ExpectationMethod::kMonteCarlo: return "monte_carlo";
  }
  return "closed_form";
}

}  // namespace

nlohmann::json to_json(const TheoryCertificate& cert) {
  nlohmann::json j;
  j["sketch"] = to_json(cert.kind);
  j["theta"] = cert.theta.admissible ? nlohmann::json(cert.theta.value) : nlohmann::json("inadmissible");
  j["gamma_max"] = opt_json(cert.gamma_max);
  j["gamma"] = opt_json(cert.gamma);
  j["rho"] = opt_json(cert.contraction_rho);
  j["h_norm_L"] = opt_json(cert.h_norm_L);
  j["bias_h"] = cert.bias_h ? vec_json(*cert.bias_h) : nlohmann::json(nullptr);
  j["x_inf"] = vec_json(cert.x_inf);
  j["sigma2"] = opt_json(cert.sigma2);
  j["W_psd"] = cert.W_psd;
  nlohmann::json w = nlohmann::json::array();
  for (int r = 0; r < cert.W.dim(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(cert.W.dim()));
    for (int c = 0; c < cert.W.dim(); ++c) row[static_cast<std::size_t>(c)] = cert.W(r, c);
    w.push_back(row);
  }
  j["W"] = w;
  j["expectation"] = method_name(cert.method);
  j["notes"] = cert.notes;
  return j;
}

}  // namespace istlab

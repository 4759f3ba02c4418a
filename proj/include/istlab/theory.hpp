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

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "istlab/estimator.hpp"
#include "istlab/matrix_core.hpp"
#include "istlab/problem.hpp"
#include "istlab/sketch.hpp"

namespace istlab {

// Smallest theta with E[B L_bar B] <= theta W_bar, or the reason none exists.
struct Theta {
  bool admissible = false;
  double value = 0.0;
  std::string reason;
};

// W_bar = 1/2 (L_bar E[B] + E[B] L_bar).
SymMatrix compute_W(const QuadraticProblem& p, const ExpectationReport& report);
SymMatrix compute_W(const QuadraticProblem& p, const SketchKind& kind,
                    const ExpectationPolicy& policy = {});

// Largest generalized eigenvalue of (E[B L_bar B], W_bar) on range(W_bar).
// Inadmissible when W_bar is not PSD or E[B L_bar B] leaks into null(W_bar).
Theta compute_theta(const SymMatrix& w, const SymMatrix& e_blb);
Theta compute_theta(const QuadraticProblem& p, const SketchKind& kind,
                    const ExpectationPolicy& policy = {});

// lambda_min(L_bar^{-1/2} W_bar L_bar^{-1/2}).
double contraction_eigenvalue(const QuadraticProblem& p, const SymMatrix& w);

struct InterpolationRates {
  double gd_bound_coeff = 0.0;  // 2 / gamma
  double contraction_rho = 1.0;
};

// Throws kThetaInadmissible, or kStepTooLarge unless 0 < gamma <= 1/theta.
InterpolationRates interpolation_rates(const QuadraticProblem& p, const SketchKind& kind,
                                       double gamma, const ExpectationPolicy& policy = {});

// True for the kinds with E[B] = I on this problem: ScaledPermHet in the
// n = d and n = q*d layouts, and ScaledPermHomog / PermMultiset on
// homogeneous problems with unit diagonal.
bool has_unit_expected_B(const QuadraticProblem& p, const SketchKind& kind);

// x_inf = (1/sqrt(m)) (1/n) sum_i D_i^{-1/2} b_i with m = min(n, d). Other
// kinds fall back to pinv(E[B]) E[C_bar b].
Vector fixed_point(const QuadraticProblem& p, const SketchKind& kind,
                   const ExpectationPolicy& policy = {});

// h = L_bar^{-1} b_bar - x_inf. Throws kWrongKind unless
// has_unit_expected_B, kSingularMatrix when L_bar is singular.
Vector bias_h(const QuadraticProblem& p, const SketchKind& kind = SketchKind::scaled_perm_het());

// E[x^k] = (1 - gamma)^k x0 + (1 - (1 - gamma)^k) x_inf.
Vector expected_iterate(const QuadraticProblem& p, const SketchKind& kind, const Vector& x0,
                        double gamma, int k);

struct BoundParams {
  double gamma = 0.0;
  double beta = 0.0;
  double c = 0.5;
};

// gamma_{c,beta} = (1 - c - beta) / (beta + 1/2).
double step_limit(double beta, double c);
// Throws kBetaOutOfRange or kStepSizeOutOfRange.
void check_bound_params(const BoundParams& params);

struct BoundCurve {
  BoundParams params;
  std::vector<double> values;  // values[K - 1] is the bound after K steps
  double neighborhood = 0.0;
  double h_sqnorm = 0.0;  // ||h||^2_{L_bar}
  double sigma2 = 0.0;
};

// Right-hand side of the general-c bound for K = 1..f_values.size()-1:
//   (f_0 - f_K)/(c gamma K) + ((1-gamma)/(c beta) + gamma/(2c)) ||h||^2 + gamma/(2c) sigma^2
// f_values[K] is the realized (or averaged) f(x^K).
BoundCurve gen_thm_bound(double h_sqnorm, double sigma2, const BoundParams& params,
                         std::span<const double> f_values);
// Same with h and sigma^2 computed for ScaledPermHet on p.
BoundCurve gen_thm_bound(const QuadraticProblem& p, const BoundParams& params,
                         std::span<const double> f_values, const Sigma2Options& sigma = {});
BoundCurve thm2_bound(const QuadraticProblem& p, double gamma, double beta,
                      std::span<const double> f_values, const Sigma2Options& sigma = {});

// (1 - 2 gamma c)^k (f0 - f*) + (1/(2c)) (beta^{-1}(1-gamma) + gamma/2) ||h||^2
// on a preconditioned homogeneous problem.
double thm4_bound(const QuadraticProblem& p_hom, const BoundParams& params, int k, double f0);

// (beta^{-1}(1-gamma) + gamma/2) / (1 - gamma/2 - beta(1-gamma)).
double neighborhood_psi(double beta, double gamma);

struct PsiGrid {
  double beta_max = 5.0;
  double gamma_max = 1.0;
  double step = 1e-3;
};

struct PsiMinimum {
  double beta = 0.0;
  double gamma = 0.0;
  double psi = 0.0;
};

// Grid argmin of Psi; ties keep the first point in (beta, gamma) order.
PsiMinimum minimize_psi(const PsiGrid& grid = {});

struct CertifyOptions {
  std::optional<double> gamma;  // defaults to 1/theta
  ExpectationPolicy policy;
  std::uint64_t sigma_mc_samples = 0;
};

struct TheoryCertificate {
  SketchKind kind;
  SymMatrix W = SymMatrix::zeros(1);
  bool W_psd = false;
  Theta theta;
  std::optional<double> gamma_max;
  std::optional<double> gamma;
  std::optional<double> contraction_rho;
  std::optional<Vector> bias_h;
  Vector x_inf;
  std::optional<double> h_norm_L;
  std::optional<double> sigma2;
  ExpectationMethod method = ExpectationMethod::kClosedForm;
  std::vector<std::string> notes;
};

TheoryCertificate certify(const QuadraticProblem& p, const SketchKind& kind,
                          const CertifyOptions& options = {});

// {"theta": real | "inadmissible", "rho", "h_norm_L", "x_inf", "sigma2",
//  "W_psd", ...}; unavailable quantities are null.
nlohmann::json to_json(const TheoryCertificate& cert);

}  // namespace istlab

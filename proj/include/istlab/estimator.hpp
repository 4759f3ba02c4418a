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

#include <cstdint>
#include <optional>
#include <string>

#include "istlab/matrix_core.hpp"
#include "istlab/problem.hpp"
#include "istlab/rng.hpp"
#include "istlab/sketch.hpp"

namespace istlab {

enum class EstimatorTag {
  kIST,  // g = (1/n) sum_i C_i (L_i C_i x - b_i)
  kDGD,  // g = (1/n) sum_i (L_i x - b_i)
  kCGD,  // g = (1/n) sum_i C_i (L_i x - b_i)
};

struct EstimatorKind {
  EstimatorTag tag = EstimatorTag::kDGD;
  SketchKind sketch = SketchKind::identity();

  static EstimatorKind ist(SketchKind s) { return {EstimatorTag::kIST, s}; }
  static EstimatorKind dgd() { return {EstimatorTag::kDGD, SketchKind::identity()}; }
  static EstimatorKind cgd(SketchKind s) { return {EstimatorTag::kCGD, s}; }

  std::string name() const;
  bool operator==(const EstimatorKind&) const = default;
};

EstimatorKind parse_estimator(const std::string& name, const SketchKind& sketch);

struct Estimate {
  Vector g;
  std::optional<SketchSample> sample;  // absent for DGD
};

// One draw of the estimator at x. IST and CGD draw a fresh joint sketch from
// rng; DGD consumes no randomness.
Estimate estimate(const EstimatorKind& kind, const QuadraticProblem& p, const Vector& x, Rng& rng);

// IST gradient for a given realization. estimate() uses this, and DGD runs the
// same arithmetic with identity sketches, so DGD and IST-with-identity agree
// bitwise.
Vector ist_gradient(const SketchSample& s, const QuadraticProblem& p, const Vector& x);

// E[g] at x: E[B] x - E[C_bar b] for IST, the true gradient for DGD and for
// CGD with unbiased sketches.
Vector expected_estimate(const EstimatorKind& kind, const QuadraticProblem& p, const Vector& x,
                         const ExpectationPolicy& policy = {});

struct Sigma2Options {
  std::optional<Vector> x;  // evaluation point; zero vector when absent
  std::uint64_t budget = kEnumerationBudget;
  std::uint64_t mc_samples = 0;  // Monte Carlo fallback when enumeration is too large
  std::uint64_t mc_seed = 0;
};

struct Sigma2Result {
  double value = 0.0;
  double std_error = 0.0;  // zero for enumeration
  ExpectationMethod method = ExpectationMethod::kEnumeration;
  std::uint64_t samples = 0;
};

// E || g - E g ||^2_{L_bar} for the IST estimator with `kind` at x. For the
// scaled permutation sketches B is the same in every realization, so the value
// does not depend on x. Throws kTooLarge when enumeration exceeds the budget
// and Monte Carlo is disabled.
Sigma2Result heterogeneity_sigma2(const QuadraticProblem& p, const SketchKind& kind,
                                  const Sigma2Options& options = {});

}  // namespace istlab

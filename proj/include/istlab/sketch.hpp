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
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "istlab/matrix_core.hpp"
#include "istlab/problem.hpp"
#include "istlab/rng.hpp"

namespace istlab {

enum class SketchTag {
  kIdentity,
  kPermQ,            // weight n on q = d/n coordinates per client
  kPermMultiset,     // n = q*d, one coordinate per client, weight sqrt(d)
  kScaledPermHomog,  // as PermQ with weight sqrt(n)
  kScaledPermHet,    // weight sqrt(m / [L_i]_jj), m = min(n, d)
  kRandQ,            // q uniform coordinates per client, weight d/q
  kBernoulli,        // each coordinate kept w.p. p, weight 1/p
};

struct SketchKind {
  SketchTag tag = SketchTag::kIdentity;
  int q = 0;       // RandQ: required. Permutation kinds: optional, checked against the shape.
  double p = 0.0;  // Bernoulli only.

  static SketchKind identity() { return {SketchTag::kIdentity}; }
  static SketchKind perm_q(int q = 0) { return {SketchTag::kPermQ, q}; }
  static SketchKind perm_multiset(int q = 0) { return {SketchTag::kPermMultiset, q}; }
  static SketchKind scaled_perm_homog() { return {SketchTag::kScaledPermHomog}; }
  static SketchKind scaled_perm_het() { return {SketchTag::kScaledPermHet}; }
  static SketchKind rand_q(int q) { return {SketchTag::kRandQ, q}; }
  static SketchKind bernoulli(double p) { return {SketchTag::kBernoulli, 0, p}; }

  std::string name() const;
  bool operator==(const SketchKind&) const = default;
};

// {"kind": "perm_q" | ..., "q": int?, "p": real?}
SketchKind sketch_kind_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SketchKind& kind);
SketchKind parse_sketch_name(const std::string& name, int q = 0, double p = 0.0);

// Throws kIncompatibleShape if `kind` cannot be used with n clients in
// dimension d, or kConfigInvalid for bad q/p parameters.
void validate_shape(const SketchKind& kind, int n, int d);

// How permutation kinds split coordinates: block mode (d = q*n, q coordinates
// per client) or multiset mode (n = q*d, one coordinate per client).
enum class PermLayout { kNone, kBlock, kMultiset };
PermLayout perm_layout(const SketchKind& kind, int n, int d);

struct SketchEntry {
  int index;
  double weight;
};

// One joint realization {C_1, ..., C_n}; C_i = sum_j w_j e_j e_j^T over the
// client's entries (sorted by index).
struct SketchSample {
  SketchKind kind;
  int n = 0;
  int d = 0;
  std::vector<std::vector<SketchEntry>> per_client;
  std::vector<int> permutation;  // permutation kinds only
};

SketchSample sample(const SketchKind& kind, const QuadraticProblem& p, Rng& rng);

// C_i x.
Vector apply(const SketchSample& s, int client, const Vector& x);

// B = (1/n) sum_i C_i L_i C_i for one realization (dense).
SymMatrix realized_B(const SketchSample& s, const QuadraticProblem& p);
// (1/n) sum_i C_i b_i for one realization.
Vector realized_Cb(const SketchSample& s, const QuadraticProblem& p);
// Diagonal of (1/n) sum_i C_i.
Vector mean_sketch_diag(const SketchSample& s);

enum class ExpectationMethod { kClosedForm, kEnumeration, kMonteCarlo };

struct ExpectationReport {
  SymMatrix E_B = SymMatrix::zeros(1);
  std::optional<SymMatrix> E_BLB;  // E[B L_bar B]; absent when no closed form is known
  Vector E_Cb;
  std::vector<Vector> E_C;  // diagonal of E[C_i] per client
  ExpectationMethod method = ExpectationMethod::kClosedForm;
  std::uint64_t samples = 0;  // outcomes enumerated or Monte Carlo draws
  std::optional<Matrix> se_B;   // Monte Carlo standard errors, elementwise
  std::optional<Vector> se_Cb;
};

// Closed-form E[B], E[B L_bar B], E[C_bar b]. Throws kNoClosedForm for
// RandQ/Bernoulli. E_BLB is only filled where it is known in closed form.
ExpectationReport expected_B(const SketchKind& kind, const QuadraticProblem& p);

inline constexpr std::uint64_t kEnumerationBudget = 1'000'000;

// Number of joint outcomes the enumerator visits, saturating at UINT64_MAX.
std::uint64_t outcome_count(const SketchKind& kind, int n, int d);

// Calls visit(sample, probability) for every joint outcome. Throws kTooLarge
// when outcome_count exceeds `budget`.
void for_each_outcome(const SketchKind& kind, const QuadraticProblem& p,
                      const std::function<void(const SketchSample&, double)>& visit,
                      std::uint64_t budget = kEnumerationBudget);

ExpectationReport enumerate_expectation(const SketchKind& kind, const QuadraticProblem& p,
                                        std::uint64_t budget = kEnumerationBudget);

ExpectationReport monte_carlo_expectation(const SketchKind& kind, const QuadraticProblem& p,
                                          std::uint64_t samples, Rng& rng);

struct ExpectationPolicy {
  std::uint64_t budget = kEnumerationBudget;
  std::uint64_t mc_samples = 0;  // 0 disables the Monte Carlo fallback
  std::uint64_t mc_seed = 0;
};

// Closed form when it covers what is asked, then enumeration, then Monte
// Carlo. Throws kNoExpectation when none applies.
ExpectationReport resolve_expectation(const SketchKind& kind, const QuadraticProblem& p,
                                      bool need_blb, const ExpectationPolicy& policy = {});

}  // namespace istlab

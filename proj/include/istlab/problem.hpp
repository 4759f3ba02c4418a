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
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "istlab/matrix_core.hpp"

namespace istlab {

// Distributed quadratic objective
//
//   f(x) = (1/n) sum_i f_i(x),   f_i(x) = 1/2 x^T L_i x - x^T b_i
//
// with cached averages L_bar, b_bar and per-client diagonals D_i = Diag(L_i).
// Immutable; copies share storage.
class QuadraticProblem {
 public:
  QuadraticProblem(std::vector<SymMatrix> l, std::vector<Vector> b,
                   std::optional<std::uint64_t> seed = std::nullopt);

  int n() const { return static_cast<int>(state_->l.size()); }
  int d() const { return state_->l.front().dim(); }

  const SymMatrix& L(int i) const { return state_->l[static_cast<std::size_t>(i)]; }
  const Vector& b(int i) const { return state_->b[static_cast<std::size_t>(i)]; }
  const DiagMatrix& D(int i) const { return state_->diag[static_cast<std::size_t>(i)]; }
  const std::vector<SymMatrix>& L_list() const { return state_->l; }
  const std::vector<Vector>& b_list() const { return state_->b; }

  const SymMatrix& L_bar() const { return state_->l_bar; }
  const Vector& b_bar() const { return state_->b_bar; }

  // All b_i exactly zero.
  bool interpolation() const { return state_->interpolation; }
  // All L_i bitwise equal.
  bool homogeneous() const { return state_->homogeneous; }
  std::optional<std::uint64_t> seed() const { return state_->seed; }

  // Eigen-decomposition of L_bar, computed once on first use (thread-safe).
  const Spectrum& L_bar_spectrum() const;

  bool operator==(const QuadraticProblem& other) const;

 private:
  struct State {
    std::vector<SymMatrix> l;
    std::vector<Vector> b;
    std::vector<DiagMatrix> diag;
    SymMatrix l_bar = SymMatrix::zeros(1);
    Vector b_bar;
    bool interpolation = false;
    bool homogeneous = false;
    std::optional<std::uint64_t> seed;
  };
  struct SpectrumCache {
    std::once_flag once;
    Spectrum spectrum;
  };

  QuadraticProblem(std::shared_ptr<const State> state, std::shared_ptr<SpectrumCache> cache)
      : state_(std::move(state)), cache_(std::move(cache)) {}

  std::shared_ptr<const State> state_;
  std::shared_ptr<SpectrumCache> cache_;

  friend QuadraticProblem set_interpolation(const QuadraticProblem& p);
};

enum class ProblemMode { kHet, kHom, kHetInterp, kHomInterp };

ProblemMode parse_problem_mode(const std::string& text);
std::string to_string(ProblemMode mode);

// L_i = B_i^T B_i and b_i with i.i.d. N(0, 1) entries; client i draws from
// substream (seed, i). Throws kDegenerateEnsemble when
// lambda_min(L_bar) <= 1e-10 * lambda_max(L_bar).
QuadraticProblem gen_heterogeneous(int n, int d, std::uint64_t seed);
// One (L, b) pair drawn as client 0 of gen_heterogeneous, replicated n times.
QuadraticProblem gen_homogeneous(int n, int d, std::uint64_t seed);
QuadraticProblem generate(ProblemMode mode, int n, int d, std::uint64_t seed);

QuadraticProblem set_interpolation(const QuadraticProblem& p);

// Change of variables x~ = D^{1/2} x for a homogeneous problem, D = Diag(L).
struct ProblemTransformRecord {
  enum class Kind { kNone, kHomogeneousDiagPrecondition };
  Kind kind = Kind::kNone;
  DiagMatrix d = DiagMatrix::identity(1);

  Vector forward(const Vector& x) const;
  Vector inverse(const Vector& x_tilde) const;
};

// L~ = D^{-1/2} L D^{-1/2} and c~_i = D^{-1/2} b_i on every client.
// Throws kNotHomogeneous or kNonPositiveDiagonal.
std::pair<QuadraticProblem, ProblemTransformRecord> precondition_homogeneous(
    const QuadraticProblem& p);

Vector grad(const QuadraticProblem& p, const Vector& x);
double f_val(const QuadraticProblem& p, const Vector& x);
double f_i_val(const QuadraticProblem& p, int i, const Vector& x);

// x* = L_bar^{-1} b_bar. Throws kSingularMatrix unless
// lambda_min(L_bar) > kRankTol * lambda_max(L_bar).
Vector solution(const QuadraticProblem& p);

// f(x) - f(x*) evaluated as 1/2 ||x - x*||^2_{L_bar}, which is exact for
// quadratics and does not cancel catastrophically near the optimum.
double f_gap(const QuadraticProblem& p, const Vector& x, const Vector& x_star);

nlohmann::json to_json(const QuadraticProblem& p);
// Validates shapes and symmetry (1e-12 relative) before symmetrizing.
QuadraticProblem problem_from_json(const nlohmann::json& j);

void save_problem(const QuadraticProblem& p, const std::filesystem::path& path);
QuadraticProblem load_problem(const std::filesystem::path& path);

}  // namespace istlab

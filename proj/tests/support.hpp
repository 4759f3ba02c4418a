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
#include <vector>

#include "istlab/matrix_core.hpp"
#include "istlab/problem.hpp"
#include "istlab/rng.hpp"
#include "istlab/sketch.hpp"

namespace istlab::testing {

inline Vector gaussian(int d, Rng& rng) {
  Vector v(d);
  for (int j = 0; j < d; ++j) v[j] = rng.normal();
  return v;
}

inline SymMatrix random_sym(int d, Rng& rng) {
  Matrix m(d, d);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) m(r, c) = rng.normal();
  return SymMatrix(m);
}

// G^T G + shift I.
inline SymMatrix random_pd(int d, Rng& rng, double shift = 0.1) {
  Matrix g(d, d);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) g(r, c) = rng.normal();
  return SymMatrix(g.transpose() * g + shift * Matrix::Identity(d, d));
}

template <class Derived>
double max_abs(const Eigen::MatrixBase<Derived>& m) {
  return m.cwiseAbs().maxCoeff();
}

// Dense C_i built straight from the entry list.
inline Matrix dense_sketch(const SketchSample& s, int client) {
  Matrix c = Matrix::Zero(s.d, s.d);
  for (const auto& e : s.per_client[static_cast<std::size_t>(client)]) c(e.index, e.index) += e.weight;
  return c;
}

// (1/n) sum_i C_i L_i C_i with dense products.
inline Matrix dense_B(const SketchSample& s, const QuadraticProblem& p) {
  Matrix b = Matrix::Zero(p.d(), p.d());
  for (int i = 0; i < p.n(); ++i) {
    const Matrix c = dense_sketch(s, i);
    b += c * p.L(i).mat() * c;
  }
  return b / p.n();
}

inline Vector dense_Cb(const SketchSample& s, const QuadraticProblem& p) {
  Vector v = Vector::Zero(p.d());
  for (int i = 0; i < p.n(); ++i) v += dense_sketch(s, i) * p.b(i);
  return v / p.n();
}

inline QuadraticProblem homogeneous_problem(const SymMatrix& l, const Vector& b, int n) {
  return QuadraticProblem(std::vector<SymMatrix>(static_cast<std::size_t>(n), l),
                          std::vector<Vector>(static_cast<std::size_t>(n), b));
}

}  // namespace istlab::testing

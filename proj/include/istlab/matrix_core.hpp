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

#include <Eigen/Dense>

namespace istlab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Tolerances shared by the dense numerics.
inline constexpr double kEigTol = 1e-9;
inline constexpr double kPsdTol = 1e-9;
// Eigenvalues below kRankTol * lambda_max are treated as zero by the
// pseudo-inverse routines.
inline constexpr double kRankTol = 1e-10;

// Dense symmetric matrix. The stored entries are (M + M^T) / 2 of whatever
// was passed in, so entries(i, j) == entries(j, i) holds bitwise.
class SymMatrix {
 public:
  explicit SymMatrix(const Matrix& m);

  static SymMatrix identity(int dim);
  static SymMatrix zeros(int dim);

  int dim() const { return static_cast<int>(m_.rows()); }
  const Matrix& mat() const { return m_; }
  double operator()(int i, int j) const { return m_(i, j); }

  bool operator==(const SymMatrix& other) const { return m_ == other.m_; }

 private:
  Matrix m_;
};

// Diagonal matrix stored as its diagonal.
class DiagMatrix {
 public:
  explicit DiagMatrix(Vector diag);

  static DiagMatrix identity(int dim);

  int dim() const { return static_cast<int>(d_.size()); }
  const Vector& diag() const { return d_; }
  double operator[](int i) const { return d_[i]; }

  SymMatrix to_sym() const;

  bool operator==(const DiagMatrix& other) const { return d_ == other.d_; }

 private:
  Vector d_;
};

struct Spectrum {
  Vector eigenvalues;   // ascending
  Matrix eigenvectors;  // orthonormal columns

  double lambda_min() const { return eigenvalues[0]; }
  double lambda_max() const { return eigenvalues[eigenvalues.size() - 1]; }
  Matrix reconstruct() const;
};

// Throws kNonFinite on NaN/Inf entries.
Spectrum eig_sym(const SymMatrix& m);

// x^T M x.
double weighted_sqnorm(const Vector& x, const SymMatrix& m);

// true iff lambda_min(M) >= -tol * max(1, spectral radius of M).
bool psd_check(const SymMatrix& m, double tol = kPsdTol);

// D^{-1/2} L D^{-1/2}. With D == Diag(L) the result has an exactly unit
// diagonal.
SymMatrix precondition(const SymMatrix& l, const DiagMatrix& d);

DiagMatrix diag_of(const SymMatrix& m);

// Spectral functions. Eigenvalues below kRankTol * |lambda|_max are dropped,
// which makes these pseudo-inverses on singular input.
SymMatrix pinv(const SymMatrix& m);
SymMatrix pinv(const Spectrum& spectrum);
Vector pinv_solve(const Spectrum& spectrum, const Vector& rhs);
// M^{-1/2} for M positive definite; throws kSingularMatrix otherwise.
SymMatrix inverse_sqrt(const SymMatrix& m);

void require_finite(const Matrix& m, const char* what);
void require_finite(const Vector& v, const char* what);

}  // namespace istlab

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

#include "istlab/matrix_core.hpp"

#include <cmath>
#include <string>

#include "istlab/error.hpp"

namespace istlab {

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw Error(Errc::kNonFinite, std::string(what) + " has NaN/Inf entries");
}

void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw Error(Errc::kNonFinite, std::string(what) + " has NaN/Inf entries");
}

SymMatrix::SymMatrix(const Matrix& m) {
  if (m.rows() != m.cols() || m.rows() < 1) {
    throw Error(Errc::kDimMismatch, "symmetric matrix must be square with dim >= 1, got " +
                                        std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
  m_ = 0.5 * (m + m.transpose());
}

SymMatrix SymMatrix::identity(int dim) { return SymMatrix(Matrix::Identity(dim, dim)); }

SymMatrix SymMatrix::zeros(int dim) { return SymMatrix(Matrix::Zero(dim, dim)); }

DiagMatrix::DiagMatrix(Vector diag) : d_(std::move(diag)) {
  if (d_.size() < 1) throw Error(Errc::kDimMismatch, "diagonal matrix must have dim >= 1");
}

DiagMatrix DiagMatrix::identity(int dim) { return DiagMatrix(Vector::Ones(dim)); }

SymMatrix DiagMatrix::to_sym() const { return SymMatrix(d_.asDiagonal().toDenseMatrix()); }

Matrix Spectrum::reconstruct() const {
  return eigenvectors * eigenvalues.asDiagonal() * eigenvectors.transpose();
}

Spectrum eig_sym(const SymMatrix& m) {
  require_finite(m.mat(), "eig_sym input");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m.mat());
  if (solver.info() != Eigen::Success) {
    throw Error(Errc::kNonFinite, "symmetric eigensolver did not converge");
  }
  return Spectrum{solver.eigenvalues(), solver.eigenvectors()};
}

double weighted_sqnorm(const Vector& x, const SymMatrix& m) {
  if (x.size() != m.dim()) {
    throw Error(Errc::kDimMismatch, "weighted_sqnorm: vector has size " +
                                        std::to_string(x.size()) + ", matrix dim " +
                                        std::to_string(m.dim()));
  }
  return x.dot(m.mat() * x);
}

bool psd_check(const SymMatrix& m, double tol) {
  if (tol < 0) throw Error(Errc::kConfigInvalid, "psd_check tolerance must be >= 0");
  const Spectrum s = eig_sym(m);
  const double radius = std::max(std::abs(s.lambda_min()), std::abs(s.lambda_max()));
  return s.lambda_min() >= -tol * std::max(1.0, radius);
}

SymMatrix precondition(const SymMatrix& l, const DiagMatrix& d) {
  if (l.dim() != d.dim()) throw Error(Errc::kDimMismatch, "precondition: dimension mismatch");
  for (int j = 0; j < d.dim(); ++j) {
    if (!(d[j] > 0)) {
      throw Error(Errc::kNonPositiveDiagonal,
                  "precondition: diagonal entry " + std::to_string(j) + " is not positive");
    }
  }
  const int n = l.dim();
  Matrix out(n, n);
  // sqrt(fl(a * a)) == a for positive normal a, so the diagonal of
  // precondition(L, Diag(L)) is exactly 1.
  for (int c = 0; c < n; ++c) {
    for (int r = 0; r < n; ++r) out(r, c) = l(r, c) / std::sqrt(d[r] * d[c]);
  }
  return SymMatrix(out);
}

DiagMatrix diag_of(const SymMatrix& m) { return DiagMatrix(m.mat().diagonal()); }

namespace {

double cutoff(const Spectrum& s) {
  const double radius = std::max(std::abs(s.lambda_min()), std::abs(s.lambda_max()));
  return kRankTol * radius;
}

}  // namespace

SymMatrix pinv(const Spectrum& s) {
  const double tol = cutoff(s);
  Vector inv(s.eigenvalues.size());
  for (Eigen::Index i = 0; i < inv.size(); ++i) {
    const double lam = s.eigenvalues[i];
    inv[i] = std::abs(lam) > tol ? 1.0 / lam : 0.0;
  }
  return SymMatrix(s.eigenvectors * inv.asDiagonal() * s.eigenvectors.transpose());
}

SymMatrix pinv(const SymMatrix& m) { return pinv(eig_sym(m)); }

Vector pinv_solve(const Spectrum& s, const Vector& rhs) {
  if (rhs.size() != s.eigenvalues.size()) throw Error(Errc::kDimMismatch, "pinv_solve: size");
  const double tol = cutoff(s);
  Vector coeff = s.eigenvectors.transpose() * rhs;
  for (Eigen::Index i = 0; i < coeff.size(); ++i) {
    const double lam = s.eigenvalues[i];
    coeff[i] = std::abs(lam) > tol ? coeff[i] / lam : 0.0;
  }
  return s.eigenvectors * coeff;
}

SymMatrix inverse_sqrt(const SymMatrix& m) {
  const Spectrum s = eig_sym(m);
  if (!(s.lambda_min() > cutoff(s))) {
    throw Error(Errc::kSingularMatrix, "inverse_sqrt: matrix is not positive definite");
  }
  const Vector scale = s.eigenvalues.cwiseSqrt().cwiseInverse();
  return SymMatrix(s.eigenvectors * scale.asDiagonal() * s.eigenvectors.transpose());
}

}  // namespace istlab

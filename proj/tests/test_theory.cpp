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

#include <cmath>

#include <gtest/gtest.h>

#include "istlab/error.hpp"
#include "support.hpp"

namespace istlab {
namespace {

using testing::max_abs;

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::kConfigInvalid;
}

QuadraticProblem remark_fixture() {
  return load_problem(std::string(ISTLAB_FIXTURE_DIR) + "/remark_2d.json");
}

TEST(ComputeW, Examples) {
  const QuadraticProblem p = gen_heterogeneous(3, 5, 1);
  const Matrix l = p.L_bar().mat();
  EXPECT_LE(max_abs(compute_W(p, SketchKind::identity()).mat() - l * l), 1e-12 * max_abs(l * l));
  const QuadraticProblem sq = gen_heterogeneous(4, 4, 1);
  EXPECT_LE(max_abs(compute_W(sq, SketchKind::scaled_perm_het()).mat() - sq.L_bar().mat()), 1e-15);

  // Perm-1 on the homogeneous 2D fixture: E[B] = n Diag(L) = 2 I, so W is
  // twice L = [[1, 1.5], [1.5, 1]].
  const SymMatrix w = compute_W(remark_fixture(), SketchKind::perm_q());
  Matrix want(2, 2);
  want << 2, 3, 3, 2;
  EXPECT_LE(max_abs(w.mat() - want), 1e-15);
  EXPECT_NEAR(w.mat().determinant() / 4, -1.25, 1e-12);
  EXPECT_FALSE(psd_check(w));
}

TEST(ComputeW, PsdCounterexampleWithPositiveDefiniteL) {
  // a = 1, b = 4, c = 1.8: L is PD but c > 2 sqrt(ab)/(a+b), so W is not.
  const QuadraticProblem p = load_problem(std::string(ISTLAB_FIXTURE_DIR) + "/remark_2d_psd.json");
  EXPECT_TRUE(psd_check(p.L_bar()));
  EXPECT_FALSE(psd_check(compute_W(p, SketchKind::perm_q())));
  EXPECT_FALSE(compute_theta(p, SketchKind::perm_q()).admissible);
}

TEST(ComputeTheta, Examples) {
  const QuadraticProblem p = gen_heterogeneous(3, 5, 2);
  const Theta id = compute_theta(p, SketchKind::identity());
  ASSERT_TRUE(id.admissible);
  EXPECT_NEAR(id.value, p.L_bar_spectrum().lambda_max(), 1e-9 * id.value);
  const Theta het = compute_theta(gen_heterogeneous(4, 4, 3), SketchKind::scaled_perm_het());
  ASSERT_TRUE(het.admissible);
  EXPECT_NEAR(het.value, 1.0, 1e-12);
  EXPECT_FALSE(compute_theta(remark_fixture(), SketchKind::perm_q()).admissible);
}

TEST(ComputeTheta, IsTheSmallestAdmissibleConstant) {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const QuadraticProblem p = gen_heterogeneous(3, 3, seed);
    for (const SketchKind& k : {SketchKind::perm_q(), SketchKind::rand_q(2), SketchKind::bernoulli(0.5),
                                SketchKind::identity(), SketchKind::scaled_perm_homog()}) {
      const ExpectationReport r = resolve_expectation(k, p, true);
      const SymMatrix w = compute_W(p, r);
      const Theta t = compute_theta(w, *r.E_BLB);
      if (!t.admissible) continue;
      const double top = eig_sym(*r.E_BLB).lambda_max();
      EXPECT_GE(eig_sym(SymMatrix(t.value * w.mat() - r.E_BLB->mat())).lambda_min(), -1e-9 * top) << k.name();
      EXPECT_LT(eig_sym(SymMatrix((1 - 1e-6) * t.value * w.mat() - r.E_BLB->mat())).lambda_min(), 0.0)
          << k.name();
    }
  }
}

TEST(ComputeTheta, LeakIntoNullSpaceIsInadmissible) {
  Matrix w = Matrix::Zero(2, 2);
  w(0, 0) = 1;
  Matrix e = Matrix::Zero(2, 2);
  e(1, 1) = 1;
  EXPECT_FALSE(compute_theta(SymMatrix(w), SymMatrix(e)).admissible);
  e(1, 1) = 0;
  e(0, 0) = 3;
  const Theta t = compute_theta(SymMatrix(w), SymMatrix(e));
  ASSERT_TRUE(t.admissible);
  EXPECT_NEAR(t.value, 3.0, 1e-15);
}

TEST(InterpolationRates, Examples) {
  const QuadraticProblem p = set_interpolation(gen_heterogeneous(4, 4, 5));
  const InterpolationRates one = interpolation_rates(p, SketchKind::scaled_perm_het(), 1.0);
  EXPECT_NEAR(one.contraction_rho, 0.0, 1e-12);
  EXPECT_EQ(one.gd_bound_coeff, 2.0);

  const Spectrum& s = p.L_bar_spectrum();
  const InterpolationRates gd = interpolation_rates(p, SketchKind::identity(), 1.0 / s.lambda_max());
  EXPECT_NEAR(gd.contraction_rho, 1.0 - s.lambda_min() / s.lambda_max(), 1e-10);

  EXPECT_NEAR(interpolation_rates(p, SketchKind::scaled_perm_het(), 1e-9).contraction_rho, 1.0, 1e-8);
  EXPECT_EQ(code_of([&] { interpolation_rates(p, SketchKind::scaled_perm_het(), 1.5); }), Errc::kStepTooLarge);
  EXPECT_EQ(code_of([&] { interpolation_rates(p, SketchKind::scaled_perm_het(), 0.0); }), Errc::kStepTooLarge);
  EXPECT_EQ(code_of([] { interpolation_rates(remark_fixture(), SketchKind::perm_q(), 0.1); }),
            Errc::kThetaInadmissible);
}

TEST(BiasH, IdenticalClients) {
  const Vector b = Eigen::Vector4d(1, -2, 0.5, 3);
  const QuadraticProblem p = testing::homogeneous_problem(SymMatrix::identity(4), b, 4);
  EXPECT_LE(max_abs(bias_h(p) - b / 2), 1e-15);
}

TEST(BiasH, HomogeneousFixedPoint) {
  const QuadraticProblem p =
      testing::homogeneous_problem(SymMatrix::identity(4), Eigen::Vector4d(2, 2, 2, 2), 4);
  EXPECT_LE(max_abs(fixed_point(p, SketchKind::scaled_perm_homog()) - Vector::Ones(4)), 1e-15);
}

TEST(BiasH, EquicorrelationEigenvectorHasZeroBias) {
  const int n = 9;
  const double alpha = (std::sqrt(n) - 1) / (n - 1);
  const Matrix l = (1 - alpha) * Matrix::Identity(n, n) + alpha * Matrix::Ones(n, n);
  const QuadraticProblem p = testing::homogeneous_problem(SymMatrix(l), Vector::Ones(n), n);
  EXPECT_LE(bias_h(p, SketchKind::scaled_perm_homog()).norm(), 1e-12);
  EXPECT_LE(bias_h(p, SketchKind::scaled_perm_het()).norm(), 1e-12);
}

TEST(BiasH, SolutionMinusFixedPoint) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    for (auto [n, d] : {std::pair{5, 5}, std::pair{8, 4}}) {
      const QuadraticProblem p = gen_heterogeneous(n, d, seed);
      const Vector lhs = solution(p) - fixed_point(p, SketchKind::scaled_perm_het());
      EXPECT_LE(max_abs(lhs - bias_h(p)), 1e-10 * (1 + max_abs(lhs)));
    }
  }
}

TEST(BiasH, Errors) {
  const QuadraticProblem p = gen_heterogeneous(3, 3, 1);
  EXPECT_EQ(code_of([&] { bias_h(p, SketchKind::perm_q()); }), Errc::kWrongKind);
  EXPECT_EQ(code_of([&] { bias_h(gen_heterogeneous(2, 4, 1)); }), Errc::kWrongKind);
  EXPECT_EQ(code_of([&] { bias_h(p, SketchKind::scaled_perm_homog()); }), Errc::kWrongKind);
  EXPECT_EQ(code_of([] { bias_h(remark_fixture(), SketchKind::scaled_perm_het()); }), Errc::kSingularMatrix);
}

TEST(FixedPoint, GeneralKindsSolveTheMeanEquation) {
  const QuadraticProblem p = gen_heterogeneous(3, 3, 4);
  for (const SketchKind& k : {SketchKind::perm_q(), SketchKind::rand_q(2), SketchKind::identity()}) {
    const ExpectationReport r = resolve_expectation(k, p, false);
    const Vector x = fixed_point(p, k);
    EXPECT_LE(max_abs(r.E_B.mat() * x - r.E_Cb), 1e-10 * (1 + max_abs(r.E_Cb))) << k.name();
  }
  EXPECT_LE(max_abs(fixed_point(p, SketchKind::identity()) - solution(p)), 1e-10);
}

TEST(ExpectedIterate, Examples) {
  const QuadraticProblem p = gen_heterogeneous(4, 4, 6);
  const SketchKind k = SketchKind::scaled_perm_het();
  const Vector x0 = Eigen::Vector4d(1, 2, 3, 4);
  EXPECT_EQ(expected_iterate(p, k, x0, 0.5, 0), x0);
  const Vector x_inf = fixed_point(p, k);
  EXPECT_LE((expected_iterate(p, k, x0, 0.5, 30) - x_inf).norm(), std::pow(0.5, 30) * (x0 - x_inf).norm() + 1e-15);
  EXPECT_LE(max_abs(expected_iterate(p, k, x0, 1.0, 1) - x_inf), 0.0);
  EXPECT_EQ(code_of([&] { expected_iterate(p, SketchKind::perm_q(), x0, 0.5, 1); }), Errc::kWrongKind);
}

TEST(ExpectedIterate, MatchesSimulatedMean) {
  const QuadraticProblem p = gen_heterogeneous(4, 4, 7);
  const EstimatorKind est = EstimatorKind::ist(SketchKind::scaled_perm_het());
  const Vector x0 = Eigen::Vector4d(1, -1, 2, 0);
  const int reps = 10000;
  const int k_max = 10;
  Vector sum = Vector::Zero(4);
  Vector sum_sq = Vector::Zero(4);
  Rng rng(42);
  for (int r = 0; r < reps; ++r) {
    Vector x = x0;
    for (int k = 0; k < k_max; ++k) x -= 0.5 * estimate(est, p, x, rng).g;
    sum += x;
    sum_sq += x.cwiseProduct(x);
  }
  const Vector mean = sum / reps;
  const Vector se = ((sum_sq / reps - mean.cwiseProduct(mean)) / reps).cwiseMax(0.0).cwiseSqrt();
  const Vector want = expected_iterate(p, est.sketch, x0, 0.5, k_max);
  for (int j = 0; j < 4; ++j) EXPECT_LE(std::abs(mean[j] - want[j]), 5 * se[j] + 1e-12) << j;
}

TEST(BoundParams, StepLimit) {
  EXPECT_NEAR(step_limit(0.25, 0.5), 1.0 / 3.0, 1e-15);
  EXPECT_LT(step_limit(1e-9, 0.5), 1.0);
  EXPECT_EQ(code_of([] { check_bound_params({1.0, 1e-6, 0.5}); }), Errc::kStepSizeOutOfRange);
  EXPECT_EQ(code_of([] { check_bound_params({0.1, 0.5, 0.5}); }), Errc::kBetaOutOfRange);
  EXPECT_EQ(code_of([] { check_bound_params({0.1, 0.0, 0.5}); }), Errc::kBetaOutOfRange);
  EXPECT_EQ(code_of([] { check_bound_params({0.1, 0.1, 1.0}); }), Errc::kBetaOutOfRange);
  EXPECT_NO_THROW(check_bound_params({1.0 / 3.0, 0.25, 0.5}));
}

TEST(GenThmBound, InterpolationReducesToDescentTerm) {
  const QuadraticProblem p = set_interpolation(gen_heterogeneous(4, 4, 2));
  const std::vector<double> f = {3.0, 1.0, 0.5, 0.0};
  const BoundCurve c = thm2_bound(p, 0.5, 0.1, f);
  EXPECT_EQ(c.neighborhood, 0.0);
  ASSERT_EQ(c.values.size(), 3u);
  for (std::size_t k = 1; k <= 3; ++k) EXPECT_NEAR(c.values[k - 1], 2 * (3.0 - f[k]) / (0.5 * k), 1e-14);
}

TEST(GenThmBound, CoefficientsOfHalfCase) {
  const std::vector<double> f = {2.0, 1.5};
  const double h = 0.7;
  const double s2 = 0.3;
  const double g = 0.25;
  const double b = 0.2;
  const BoundCurve c = gen_thm_bound(h, s2, {g, b, 0.5}, f);
  EXPECT_NEAR(c.values[0], 2 * 0.5 / g + (2 * (1 - g) / b + g) * h + g * s2, 1e-14);
  EXPECT_EQ(code_of([&] { gen_thm_bound(h, s2, {1.0, b, 0.5}, f); }), Errc::kStepSizeOutOfRange);
}

TEST(Thm4Bound, DecaysToNeighborhood) {
  const QuadraticProblem p = precondition_homogeneous(gen_homogeneous(4, 4, 3)).first;
  const BoundParams bp{0.5, 0.2, 0.25};
  const Vector xs = solution(p);
  const Vector h = xs - fixed_point(p, SketchKind::scaled_perm_homog());
  const double neigh = (1 / (2 * bp.c)) * ((1 - bp.gamma) / bp.beta + bp.gamma / 2) * weighted_sqnorm(h, p.L_bar());
  const double f0 = f_val(p, Vector::Zero(4)) + 1.0;
  EXPECT_NEAR(thm4_bound(p, bp, 0, f0), f0 - f_val(p, xs) + neigh, 1e-12 * (1 + std::abs(f0)));
  EXPECT_NEAR(thm4_bound(p, bp, 2000, f0), neigh, 1e-12);
  EXPECT_EQ(code_of([] { thm4_bound(gen_heterogeneous(3, 3, 1), {0.5, 0.2, 0.25}, 1, 0.0); }),
            Errc::kNotHomogeneous);
}

TEST(Psi, Examples) {
  for (double beta : {0.01, 0.5, 2.0, 4.9}) EXPECT_EQ(neighborhood_psi(beta, 1.0), 1.0);
  EXPECT_EQ(code_of([] { neighborhood_psi(5.0, 0.1); }), Errc::kDenominatorNonpositive);
  EXPECT_EQ(code_of([] { neighborhood_psi(0.0, 0.5); }), Errc::kBetaOutOfRange);
}

TEST(Psi, GridMinimumIsOneAtFullStep) {
  const PsiMinimum m = minimize_psi();
  EXPECT_EQ(m.gamma, 1.0);
  EXPECT_EQ(m.psi, 1.0);
  EXPECT_GT(m.beta, 0.0);
  // Coarser grids never go below one either.
  for (double step : {0.1, 0.05, 0.01}) EXPECT_GE(minimize_psi({5.0, 1.0, step}).psi, 1.0);
}

TEST(Certify, ScaledHeterogeneousCertificate) {
  const QuadraticProblem p = gen_heterogeneous(4, 4, 9);
  const TheoryCertificate c = certify(p, SketchKind::scaled_perm_het());
  ASSERT_TRUE(c.theta.admissible);
  EXPECT_NEAR(c.theta.value, 1.0, 1e-12);
  EXPECT_TRUE(c.W_psd);
  ASSERT_TRUE(c.contraction_rho.has_value());
  EXPECT_NEAR(*c.contraction_rho, 0.0, 1e-12);
  EXPECT_LE(max_abs(*c.bias_h - bias_h(p)), 1e-10);
  EXPECT_NEAR(*c.h_norm_L, std::sqrt(weighted_sqnorm(bias_h(p), p.L_bar())), 1e-10);
  EXPECT_NEAR(*c.sigma2, heterogeneity_sigma2(p, SketchKind::scaled_perm_het()).value, 1e-12);

  const nlohmann::json j = to_json(c);
  for (const char* key : {"theta", "rho", "h_norm_L", "x_inf", "sigma2", "W_psd"}) EXPECT_TRUE(j.contains(key));
  EXPECT_TRUE(j["theta"].is_number());
}

TEST(Certify, InterpolationHasNoBias) {
  const TheoryCertificate c = certify(set_interpolation(gen_heterogeneous(3, 3, 2)), SketchKind::scaled_perm_het());
  EXPECT_EQ(*c.h_norm_L, 0.0);
  EXPECT_EQ(*c.sigma2, 0.0);
}

TEST(Certify, RemarkFixtureIsInadmissible) {
  const nlohmann::json j = to_json(certify(remark_fixture(), SketchKind::perm_q()));
  EXPECT_EQ(j["theta"], "inadmissible");
  EXPECT_EQ(j["W_psd"], false);
  EXPECT_TRUE(j["rho"].is_null());
}

TEST(Certify, IdentityThetaIsLargestEigenvalue) {
  const QuadraticProblem p = gen_heterogeneous(3, 6, 4);
  const TheoryCertificate c = certify(p, SketchKind::identity());
  EXPECT_NEAR(c.theta.value, p.L_bar_spectrum().lambda_max(), 1e-9 * c.theta.value);
  EXPECT_LE(*c.h_norm_L, 1e-8);
}

// Realized average of ||grad f||^2 in the L^{-1} W L^{-1} norm against
// 2 (f(x^0) - f(x^K)) / (gamma K) for the deterministic recursions.
TEST(TheoremOne, DescentBoundHoldsOnDeterministicRecursions) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const QuadraticProblem p = set_interpolation(gen_heterogeneous(5, 5, seed));
    for (const SketchKind& k : {SketchKind::identity(), SketchKind::scaled_perm_het()}) {
      const ExpectationReport r = resolve_expectation(k, p, true);
      const SymMatrix w = compute_W(p, r);
      const Theta t = compute_theta(w, *r.E_BLB);
      ASSERT_TRUE(t.admissible);
      const double gamma = 1.0 / t.value;
      const Matrix l_inv = pinv(p.L_bar()).mat();
      const SymMatrix norm(l_inv * w.mat() * l_inv);
      Rng rng(seed);
      Vector x = testing::gaussian(5, rng);
      const double f0 = f_val(p, x);
      const int K = 50;
      double acc = 0;
      for (int step = 0; step < K; ++step) {
        acc += weighted_sqnorm(grad(p, x), norm);
        x -= gamma * estimate(EstimatorKind::ist(k), p, x, rng).g;
      }
      EXPECT_LE(acc / K, 2 * (f0 - f_val(p, x)) / (gamma * K) + 1e-8) << k.name();
    }
  }
}

}  // namespace
}  // namespace istlab

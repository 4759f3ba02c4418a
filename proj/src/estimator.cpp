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

#include "istlab/estimator.hpp"

#include <algorithm>
#include <cmath>

#include "istlab/error.hpp"

namespace istlab {

std::string EstimatorKind::name() const {
  switch (tag) {
    case EstimatorTag::kIST: return "ist";
    case EstimatorTag::kDGD: return "dgd";
    case EstimatorTag::kCGD: return "cgd";
  }
  return "dgd";
}

EstimatorKind parse_estimator(const std::string& name, const SketchKind& sketch) {
  if (name == "ist") return EstimatorKind::ist(sketch);
  if (name == "dgd") return EstimatorKind::dgd();
  if (name == "cgd") return EstimatorKind::cgd(sketch);
  throw Error(Errc::kConfigInvalid, "unknown estimator '" + name + "'");
}

namespace {

// g[a] += w_a * (sum_c L_ac w_c x_c - b_a) over the client's coordinates.
void accumulate_submodel(const Matrix& l, const Vector& b, const std::vector<SketchEntry>& entries,
                         const Vector& x, Vector& g) {
  for (const auto& a : entries) {
    double s = 0.0;
    // L is stored symmetric, so reading column a keeps the access contiguous.
    for (const auto& c : entries) s += l(c.index, a.index) * (c.weight * x[c.index]);
    g[a.index] += a.weight * (s - b[a.index]);
  }
}

std::vector<SketchEntry> full_support(int d) {
  std::vector<SketchEntry> all(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) all[static_cast<std::size_t>(j)] = {j, 1.0};
  return all;
}

void check_x(const QuadraticProblem& p, const Vector& x) {
  if (x.size() != p.d()) throw Error(Errc::kDimMismatch, "estimator: x has wrong size");
}

}  // namespace

Vector ist_gradient(const SketchSample& s, const QuadraticProblem& p, const Vector& x) {
  check_x(p, x);
  Vector g = Vector::Zero(p.d());
  for (int i = 0; i < p.n(); ++i) {
    accumulate_submodel(p.L(i).mat(), p.b(i), s.per_client[static_cast<std::size_t>(i)], x, g);
  }
  return g / static_cast<double>(p.n());
}

Estimate estimate(const EstimatorKind& kind, const QuadraticProblem& p, const Vector& x, Rng& rng) {
  check_x(p, x);
  switch (kind.tag) {
    case EstimatorTag::kDGD: {
      const auto all = full_support(p.d());
      Vector g = Vector::Zero(p.d());
      for (int i = 0; i < p.n(); ++i) accumulate_submodel(p.L(i).mat(), p.b(i), all, x, g);
      return Estimate{g / static_cast<double>(p.n()), std::nullopt};
    }
    case EstimatorTag::kIST: {
      SketchSample s = sample(kind.sketch, p, rng);
      Vector g = ist_gradient(s, p, x);
      return Estimate{std::move(g), std::move(s)};
    }
    case EstimatorTag::kCGD: {
      SketchSample s = sample(kind.sketch, p, rng);
      Vector g = Vector::Zero(p.d());
      for (int i = 0; i < p.n(); ++i) {
        const Vector local = p.L(i).mat() * x - p.b(i);
        for (const auto& e : s.per_client[static_cast<std::size_t>(i)]) {
          g[e.index] += e.weight * local[e.index];
        }
      }
      return Estimate{g / static_cast<double>(p.n()), std::move(s)};
    }
  }
  throw Error(Errc::kConfigInvalid, "unknown estimator");
}

Vector expected_estimate(const EstimatorKind& kind, const QuadraticProblem& p, const Vector& x,
                         const ExpectationPolicy& policy) {
  check_x(p, x);
  if (kind.tag == EstimatorTag::kDGD) return grad(p, x);
  validate_shape(kind.sketch, p.n(), p.d());
  if (kind.tag == EstimatorTag::kCGD) {
    switch (kind.sketch.tag) {
      case SketchTag::kIdentity:
      case SketchTag::kPermQ:
      case SketchTag::kRandQ:
      case SketchTag::kBernoulli:
        return grad(p, x);
      default:
        break;
    }
  }
  ExpectationReport r;
  try {
    r = resolve_expectation(kind.sketch, p, false, policy);
  } catch (const Error& e) {
    if (e.code() == Errc::kNoExpectation) throw Error(Errc::kNoClosedForm, e.what());
    throw;
  }
  if (kind.tag == EstimatorTag::kIST) return r.E_B.mat() * x - r.E_Cb;

  Vector g = Vector::Zero(p.d());
  for (int i = 0; i < p.n(); ++i) {
    g += r.E_C[static_cast<std::size_t>(i)].cwiseProduct(p.L(i).mat() * x - p.b(i));
  }
  return g / static_cast<double>(p.n());
}

Sigma2Result heterogeneity_sigma2(const QuadraticProblem& p, const SketchKind& kind,
                                  const Sigma2Options& options) {
  const Vector x = options.x ? *options.x : Vector::Zero(p.d());
  check_x(p, x);
  const SymMatrix& l_bar = p.L_bar();

  if (outcome_count(kind, p.n(), p.d()) <= options.budget) {
    Vector mean = Vector::Zero(p.d());
    for_each_outcome(
        kind, p, [&](const SketchSample& s, double prob) { mean += prob * ist_gradient(s, p, x); },
        options.budget);
    Sigma2Result out;
    for_each_outcome(
        kind, p,
        [&](const SketchSample& s, double prob) {
          out.value += prob * weighted_sqnorm(ist_gradient(s, p, x) - mean, l_bar);
          ++out.samples;
        },
        options.budget);
    out.method = ExpectationMethod::kEnumeration;
    return out;
  }
  if (options.mc_samples < 2) {
    throw Error(Errc::kTooLarge, "sigma^2 enumeration for " + kind.name() +
                                     " exceeds the budget; enable Monte Carlo");
  }

  // Two passes over the same stream: sample mean first, then the spread of
  // the squared deviations.
  const std::uint64_t count = options.mc_samples;
  Vector mean = Vector::Zero(p.d());
  {
    Rng rng(options.mc_seed);
    for (std::uint64_t t = 0; t < count; ++t) mean += ist_gradient(sample(kind, p, rng), p, x);
    mean /= static_cast<double>(count);
  }
  Rng rng(options.mc_seed);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::uint64_t t = 0; t < count; ++t) {
    const double z = weighted_sqnorm(ist_gradient(sample(kind, p, rng), p, x) - mean, l_bar);
    sum += z;
    sum_sq += z * z;
  }
  const auto c = static_cast<double>(count);
  Sigma2Result out;
  // Unbiased variance of g: divide by count - 1.
  out.value = sum / (c - 1.0);
  const double mean_z = sum / c;
  const double var_z = std::max(0.0, (sum_sq / c - mean_z * mean_z) * c / (c - 1.0));
  out.std_error = std::sqrt(var_z / c) * c / (c - 1.0);
  out.method = ExpectationMethod::kMonteCarlo;
  out.samples = count;
  return out;
}

}  // namespace istlab

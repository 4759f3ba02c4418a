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

#include "istlab/runner.hpp"

#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "istlab/error.hpp"
#include "istlab/theory.hpp"
#include "support.hpp"

namespace istlab {
namespace {

using testing::max_abs;

RunConfig base_config(const QuadraticProblem& p, EstimatorKind est, double gamma, int K, int repeats = 1) {
  RunConfig cfg;
  cfg.problem.source = p;
  cfg.estimator = est;
  cfg.schedule = StepSchedule::constant(gamma);
  cfg.K = K;
  cfg.seed = 17;
  cfg.repeats = repeats;
  return cfg;
}

TEST(StepSchedule, ConstantAndStaircase) {
  EXPECT_EQ(StepSchedule::constant(0.3).at(12345), 0.3);
  const StepSchedule s = StepSchedule::staircase(1.0, 10.0, 1000);
  EXPECT_EQ(s.at(0), 1.0);
  EXPECT_EQ(s.at(999), 1.0);
  EXPECT_NEAR(s.at(1000), 0.1, 1e-16);
  EXPECT_NEAR(s.at(2500), 0.01, 1e-17);
  EXPECT_THROW(StepSchedule::constant(0.0).validate(), Error);
  EXPECT_THROW(StepSchedule::staircase(1.0, 1.0, 10).validate(), Error);
  EXPECT_THROW(StepSchedule::staircase(1.0, 2.0, 0).validate(), Error);
}

TEST(Run, RowCountsAndZeroHorizon) {
  const QuadraticProblem p = gen_heterogeneous(3, 3, 1);
  RunConfig cfg = base_config(p, EstimatorKind::dgd(), 0.01, 7, 3);
  cfg.metrics = {Metric::kFVal, Metric::kGradSq};
  const Trace t = run(cfg);
  ASSERT_EQ(t.values.size(), 3u);
  for (const auto& rep : t.values) {
    ASSERT_EQ(rep.size(), 2u);
    for (const auto& series : rep) EXPECT_EQ(series.size(), 8u);
  }
  cfg.K = 0;
  const Trace z = run(cfg);
  for (const auto& rep : z.values) EXPECT_EQ(rep[0].size(), 1u);
  EXPECT_EQ(z.values[0][0][0], f_val(p, z.x0));
}

TEST(Run, DeterministicAcrossThreadCounts) {
  const QuadraticProblem p = gen_heterogeneous(4, 8, 2);
  RunConfig cfg = base_config(p, EstimatorKind::ist(SketchKind::perm_q()), 0.02, 40, 6);
  cfg.metrics = {Metric::kFGapRelLog, Metric::kDistToXinf, Metric::kSubmodelLossAvg};
  cfg.threads = 1;
  const Trace one = run(cfg);
  cfg.threads = 3;
  const Trace three = run(cfg);
  EXPECT_TRUE(one == three);
  EXPECT_TRUE(run(cfg) == three);
  EXPECT_FALSE(one.values[0] == one.values[1]);
}

TEST(Run, DgdContractsOnInterpolationProblem) {
  const QuadraticProblem p = set_interpolation(gen_heterogeneous(4, 10, 3));
  const Spectrum& s = p.L_bar_spectrum();
  RunConfig cfg = base_config(p, EstimatorKind::dgd(), 1.0 / s.lambda_max(), 60);
  cfg.metrics = {Metric::kDistLToXstar};
  const Trace t = run(cfg);
  const auto& d = t.series(0, Metric::kDistLToXstar);
  const double rho = 1 - s.lambda_min() / s.lambda_max();
  for (std::size_t k = 1; k < d.size(); ++k) EXPECT_LE(d[k], rho * d[k - 1] * (1 + 1e-12));
}

TEST(Run, ScaledHeterogeneousConvergesInOneStep) {
  const QuadraticProblem p = set_interpolation(gen_heterogeneous(6, 6, 4));
  RunConfig cfg = base_config(p, EstimatorKind::ist(SketchKind::scaled_perm_het()), 1.0, 3, 4);
  cfg.metrics = {Metric::kFGap};
  const Trace t = run(cfg);
  for (int r = 0; r < 4; ++r) {
    const auto& g = t.series(r, Metric::kFGap);
    EXPECT_LE(g[1], 1e-16 * g[0]);
  }
}

TEST(Run, HomogeneousScaledSketchDecaysGeometrically) {
  const QuadraticProblem p = precondition_homogeneous(gen_homogeneous(6, 6, 5)).first;
  RunConfig cfg = base_config(p, EstimatorKind::ist(SketchKind::scaled_perm_homog()), 0.3, 25, 3);
  cfg.metrics = {Metric::kDistToXinf};
  const Trace t = run(cfg);
  const auto& d = t.series(0, Metric::kDistToXinf);
  for (std::size_t k = 0; k < d.size(); ++k) {
    const double want = std::pow(0.7, static_cast<double>(k)) * d[0];
    EXPECT_NEAR(d[k], want, 1e-10 * want);
  }
  EXPECT_EQ(t.values[0], t.values[1]);
  EXPECT_EQ(t.values[1], t.values[2]);
}

TEST(Run, DgdEqualsIdentityIstBitwise) {
  const QuadraticProblem p = gen_heterogeneous(3, 5, 6);
  RunConfig a = base_config(p, EstimatorKind::dgd(), 0.05, 30, 2);
  a.metrics = {Metric::kFVal, Metric::kGradSq};
  a.keep_iterates = true;
  RunConfig b = a;
  b.estimator = EstimatorKind::ist(SketchKind::identity());
  EXPECT_TRUE(run(a) == run(b));
}

TEST(Run, SubmodelLossUnderDgdIsTheObjective) {
  const QuadraticProblem p = gen_heterogeneous(3, 4, 6);
  RunConfig cfg = base_config(p, EstimatorKind::dgd(), 0.05, 5);
  cfg.metrics = {Metric::kSubmodelLossAvg, Metric::kFVal};
  const Trace t = run(cfg);
  for (int k = 0; k <= 5; ++k) {
    EXPECT_NEAR(t.values[0][0][static_cast<std::size_t>(k)], t.values[0][1][static_cast<std::size_t>(k)],
                1e-10 * (1 + std::abs(t.values[0][1][static_cast<std::size_t>(k)])));
  }
}

TEST(Run, DivergenceIsMarkedAndRowsStop) {
  const QuadraticProblem p = gen_heterogeneous(3, 4, 7);
  RunConfig cfg = base_config(p, EstimatorKind::dgd(), 50.0 / p.L_bar_spectrum().lambda_max(), 500, 2);
  cfg.metrics = {Metric::kFVal};
  const Trace t = run(cfg);
  for (int r = 0; r < 2; ++r) {
    ASSERT_TRUE(t.diverged_at[static_cast<std::size_t>(r)].has_value());
    const int k = *t.diverged_at[static_cast<std::size_t>(r)];
    EXPECT_LT(k, 500);
    EXPECT_EQ(t.series(r, Metric::kFVal).size(), static_cast<std::size_t>(k));
    for (double v : t.series(r, Metric::kFVal)) EXPECT_TRUE(std::isfinite(v));
  }
  const TraceAggregate a = aggregate(t);
  EXPECT_EQ(a.count[0].back(), 0);
}

TEST(Run, MeanIterateFollowsExpectedRecursion) {
  const QuadraticProblem p = gen_heterogeneous(4, 4, 8);
  RunConfig cfg = base_config(p, EstimatorKind::ist(SketchKind::scaled_perm_het()), 0.5, 8, 4000);
  cfg.metrics = {Metric::kFVal};
  cfg.keep_iterates = true;
  const Trace t = run(cfg);
  for (int k = 0; k <= 8; ++k) {
    Vector sum = Vector::Zero(4);
    Vector sq = Vector::Zero(4);
    for (const auto& it : t.iterates) {
      sum += it[static_cast<std::size_t>(k)];
      sq += it[static_cast<std::size_t>(k)].cwiseProduct(it[static_cast<std::size_t>(k)]);
    }
    const Vector mean = sum / 4000.0;
    const Vector se = ((sq / 4000.0 - mean.cwiseProduct(mean)) / 4000.0).cwiseMax(0.0).cwiseSqrt();
    const Vector want = expected_iterate(p, cfg.estimator.sketch, t.x0, 0.5, k);
    for (int j = 0; j < 4; ++j) EXPECT_LE(std::abs(mean[j] - want[j]), 5 * se[j] + 1e-12) << k << "," << j;
  }
}

TEST(Run, SharedInitialPointAndPolicies) {
  const QuadraticProblem p = gen_heterogeneous(2, 3, 1);
  RunConfig cfg = base_config(p, EstimatorKind::dgd(), 0.1, 1);
  const Vector g = initial_point(cfg, 3);
  EXPECT_EQ(initial_point(cfg, 3), g);
  cfg.x0.seed = 5;
  EXPECT_NE(initial_point(cfg, 3), g);
  cfg.x0.kind = X0Policy::Kind::kZeros;
  EXPECT_EQ(initial_point(cfg, 3), Vector::Zero(3));
  cfg.x0.kind = X0Policy::Kind::kGiven;
  cfg.x0.given = Vector::Ones(2);
  EXPECT_THROW(initial_point(cfg, 3), Error);
}

TEST(Run, RejectsInvalidConfig) {
  const QuadraticProblem p = gen_heterogeneous(2, 3, 1);
  RunConfig cfg = base_config(p, EstimatorKind::dgd(), 0.1, 1);
  cfg.repeats = 0;
  EXPECT_THROW(run(cfg), Error);
  cfg.repeats = 1;
  cfg.K = -1;
  EXPECT_THROW(run(cfg), Error);
  cfg.K = 1;
  cfg.estimator = EstimatorKind::ist(SketchKind::perm_q());
  try {
    run(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kIncompatibleShape);
  }
}

TEST(Sweep, SingletonEqualsRun) {
  const QuadraticProblem p = gen_heterogeneous(3, 6, 2);
  RunConfig cfg = base_config(p, EstimatorKind::ist(SketchKind::scaled_perm_het()), 0.4, 20, 3);
  cfg.metrics = {Metric::kFGap};
  const std::vector<Trace> s = sweep(cfg, {0.4});
  ASSERT_EQ(s.size(), 1u);
  EXPECT_TRUE(s[0] == run(cfg));
  const std::vector<Trace> three = sweep(cfg, {0.2, 0.5, 0.9});
  EXPECT_EQ(three[0].x0, three[2].x0);
  EXPECT_THROW(sweep(cfg, {}), Error);
}

TEST(Plateau, StatisticsOnKnownSeries) {
  Trace t;
  t.metrics = {Metric::kFGap};
  t.K = 10;
  t.repeats = 1;
  t.values = {{{10, 8, 6, 4, 3, 2, 1.5, 1.2, 1.1, 1.0, 1.0}}};
  t.diverged_at = {std::nullopt};
  t.final_f = {0};
  EXPECT_EQ(plateau_level(t, Metric::kFGap), 1.0);
  EXPECT_EQ(iterations_to_plateau(t, Metric::kFGap), 5);
}

TEST(Config, JsonRoundTripReproducesTrace) {
  const QuadraticProblem p = gen_heterogeneous(3, 3, 3);
  RunConfig cfg = base_config(p, EstimatorKind::ist(SketchKind::rand_q(2)), 0.1, 10, 2);
  cfg.schedule = StepSchedule::staircase(0.2, 2.0, 3);
  cfg.metrics = {Metric::kFGapRelLog, Metric::kGradSqLinv};
  const RunConfig back = run_config_from_json(nlohmann::json::parse(to_json(cfg).dump()));
  EXPECT_EQ(back.schedule, cfg.schedule);
  EXPECT_EQ(back.estimator, cfg.estimator);
  EXPECT_TRUE(run(back) == run(cfg));

  RunConfig gen;
  gen.problem.source = GeneratorSpec{ProblemMode::kHom, 4, 4, 9, true};
  gen.estimator = EstimatorKind::ist(SketchKind::scaled_perm_homog());
  gen.schedule = StepSchedule::constant(0.5);
  gen.K = 5;
  gen.x0.kind = X0Policy::Kind::kGiven;
  gen.x0.given = Eigen::Vector4d(0.1, 0.2, 0.3, 1.0 / 3.0);
  EXPECT_TRUE(run(run_config_from_json(nlohmann::json::parse(to_json(gen).dump()))) == run(gen));
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  nlohmann::json j = {{"problem", {{"generate", {{"mode", "het"}, {"n", 2}, {"d", 2}, {"seed", 1}}}}},
                      {"estimator", "ist"},
                      {"sketch", "scaled_perm_het"},
                      {"schedule", {{"kind", "constant"}, {"gamma", 0.5}}},
                      {"K", 3},
                      {"seed", 1}};
  EXPECT_NO_THROW(run_config_from_json(j));
  auto bad = j;
  bad["extra"] = 1;
  EXPECT_THROW(run_config_from_json(bad), Error);
  bad = j;
  bad["schedule"]["gamma"] = -1;
  EXPECT_THROW(run_config_from_json(bad), Error);
  bad = j;
  bad["metrics"] = {"nope"};
  EXPECT_THROW(run_config_from_json(bad), Error);
  bad = j;
  bad["estimator"] = "sgd";
  EXPECT_THROW(run_config_from_json(bad), Error);
  bad = j;
  bad.erase("K");
  EXPECT_THROW(run_config_from_json(bad), Error);
}

TEST(TraceIo, CsvAndJsonRoundTrip) {
  const QuadraticProblem p = gen_heterogeneous(3, 3, 3);
  RunConfig cfg = base_config(p, EstimatorKind::ist(SketchKind::perm_q()), 0.05, 12, 3);
  cfg.metrics = {Metric::kFGapRelLog, Metric::kGradSq, Metric::kDistLToXstar};
  const Trace t = run(cfg);

  std::stringstream csv;
  write_trace_csv(t, csv);
  const Trace back = read_trace_csv(csv);
  EXPECT_EQ(back.metrics, t.metrics);
  EXPECT_EQ(back.values, t.values);
  EXPECT_EQ(back.K, t.K);
  EXPECT_EQ(back.repeats, t.repeats);

  const Trace js = trace_from_json(nlohmann::json::parse(trace_to_json(t).dump()));
  EXPECT_TRUE(js == t);

  std::stringstream bad("repeat,k,metric,value\n");
  EXPECT_THROW(read_trace_csv(bad), Error);
}

}  // namespace
}  // namespace istlab

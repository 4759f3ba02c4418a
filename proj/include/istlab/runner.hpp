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
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "istlab/estimator.hpp"
#include "istlab/matrix_core.hpp"
#include "istlab/problem.hpp"
#include "istlab/sketch.hpp"

namespace istlab {

struct StepSchedule {
  enum class Kind { kConstant, kStaircase };
  Kind kind = Kind::kConstant;
  double gamma0 = 0.1;
  double divide_by = 10.0;  // staircase only
  int period = 1000;        // staircase only

  static StepSchedule constant(double gamma) { return {Kind::kConstant, gamma}; }
  static StepSchedule staircase(double gamma0, double divide_by, int period) {
    return {Kind::kStaircase, gamma0, divide_by, period};
  }

  // gamma_k; the staircase divides by divide_by every `period` iterations.
  double at(int k) const;
  void validate() const;
  bool operator==(const StepSchedule&) const = default;
};

enum class Metric {
  kFGapRelLog,       // log10((f(x^k) - f*) / (f(x^0) - f*))
  kGradSq,           // ||grad f(x^k)||^2
  kGradSqLinv,       // ||grad f(x^k)||^2_{L_bar^{-1}}
  kDistLToXstar,     // ||x^k - x*||^2_{L_bar}
  kDistToXinf,       // ||x^k - x_inf||
  kSubmodelLossAvg,  // (1/n) sum_i f_i(C_i x^k), C_i from round k
  kFVal,             // f(x^k)
  kFGap,             // f(x^k) - f*
};

std::string to_string(Metric m);
Metric parse_metric(const std::string& name);

struct GeneratorSpec {
  ProblemMode mode = ProblemMode::kHet;
  int n = 1;
  int d = 1;
  std::uint64_t seed = 0;
  bool precondition = false;  // apply homogeneous diagonal preconditioning
  bool operator==(const GeneratorSpec&) const = default;
};

struct ProblemSource {
  std::variant<GeneratorSpec, std::filesystem::path, QuadraticProblem> source = GeneratorSpec{};
};

QuadraticProblem resolve_problem(const ProblemSource& src);

struct X0Policy {
  enum class Kind { kGaussian, kZeros, kGiven };
  Kind kind = Kind::kGaussian;
  std::optional<std::uint64_t> seed;  // gaussian; defaults to a substream of the run seed
  Vector given;
};

struct RunConfig {
  ProblemSource problem;
  EstimatorKind estimator = EstimatorKind::dgd();
  StepSchedule schedule;
  int K = 1;
  std::uint64_t seed = 0;
  int repeats = 1;
  X0Policy x0;
  std::vector<Metric> metrics{Metric::kFGapRelLog};
  bool keep_iterates = false;  // store every x^k in the trace
  ExpectationPolicy expectation;
  unsigned threads = 0;  // 0: default_thread_count()

  void validate() const;
};

struct Trace {
  std::vector<Metric> metrics;
  int K = 0;
  int repeats = 0;
  // values[r][m][k] for k = 0 .. last recorded iteration of repeat r.
  std::vector<std::vector<std::vector<double>>> values;
  std::vector<std::optional<int>> diverged_at;
  std::vector<double> final_f;                  // f at the last recorded iterate
  std::vector<std::vector<Vector>> iterates;    // [r][k], only with keep_iterates
  Vector x0;

  int metric_index(Metric m) const;
  const std::vector<double>& series(int repeat, Metric m) const;
  bool operator==(const Trace&) const;
};

struct TraceAggregate {
  // [m][k] over the repeats that reached k; std is the sample deviation.
  std::vector<std::vector<double>> mean;
  std::vector<std::vector<double>> std;
  std::vector<std::vector<int>> count;
};

TraceAggregate aggregate(const Trace& t);

// Fixed point of E[x^k] for the configured estimator: x* for DGD and CGD,
// pinv(E[B]) E[C_bar b] for IST.
Vector estimator_fixed_point(const QuadraticProblem& p, const EstimatorKind& kind,
                             const ExpectationPolicy& policy = {});

Vector initial_point(const RunConfig& cfg, int d);

// x^{k+1} = x^k - gamma_k g^k. Repeat r draws from substream (seed, r); x^0 is
// shared across repeats. A repeat stops when any metric or |x| exceeds 1e100
// and records diverged_at.
Trace run(const RunConfig& cfg);
Trace run(const RunConfig& cfg, const QuadraticProblem& p);

// One trace per gamma with the schedule's gamma0 replaced; problem and x^0 are
// shared.
std::vector<Trace> sweep(const RunConfig& base, const std::vector<double>& gammas);

// Mean of `metric` over the last `fraction` of iterations, averaged over
// repeats.
double plateau_level(const Trace& t, Metric metric, double fraction = 0.1);
// First k whose repeat-averaged metric is at most factor * plateau.
int iterations_to_plateau(const Trace& t, Metric metric, double factor = 2.0,
                          double fraction = 0.1);

nlohmann::json to_json(const RunConfig& cfg);
// Rejects unknown keys. `base_dir` resolves relative problem paths.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

// Long format: repeat,k,metric_name,value.
void write_trace_csv(const Trace& t, std::ostream& out);
Trace read_trace_csv(std::istream& in);
nlohmann::json trace_to_json(const Trace& t);
Trace trace_from_json(const nlohmann::json& j);

}  // namespace istlab

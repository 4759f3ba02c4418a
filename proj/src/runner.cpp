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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "istlab/error.hpp"
#include "istlab/parallel.hpp"
#include "istlab/rng.hpp"
#include "istlab/theory.hpp"

namespace istlab {

namespace {

constexpr double kDivergence = 1e100;

[[noreturn]] void bad_config(const std::string& what) { throw Error(Errc::kConfigInvalid, what); }

}  // namespace

double StepSchedule::at(int k) const {
  if (kind == Kind::kConstant) return gamma0;
  return gamma0 / std::pow(divide_by, k / period);
}

void StepSchedule::validate() const {
  if (!(gamma0 > 0.0) || !std::isfinite(gamma0)) bad_config("step size must be positive");
  if (kind == Kind::kStaircase) {
    if (!(divide_by > 1.0)) bad_config("staircase divide_by must exceed 1");
    if (period < 1) bad_config("staircase period must be at least 1");
  }
}

std::string to_string(Metric m) {
  switch (m) {
    case Metric::kFGapRelLog: return "f_gap_rel_log";
    case Metric::kGradSq: return "grad_sq";
    case Metric::kGradSqLinv: return "grad_sq_Linv";
    case Metric::kDistLToXstar: return "dist_L_to_xstar";
    case Metric::kDistToXinf: return "dist_to_xinf";
    case Metric::kSubmodelLossAvg: return "submodel_loss_avg";
    case Metric::kFVal: return "f_val";
    case Metric::kFGap: return "f_gap";
  }
  return "f_val";
}

Metric parse_metric(const std::string& name) {
  for (Metric m : {Metric::kFGapRelLog, Metric::kGradSq, Metric::kGradSqLinv, Metric::kDistLToXstar,
                   Metric::kDistToXinf, Metric::kSubmodelLossAvg, Metric::kFVal, Metric::kFGap}) {
    if (to_string(m) == name) return m;
  }
  bad_config("unknown metric '" + name + "'");
}

QuadraticProblem resolve_problem(const ProblemSource& src) {
  if (const auto* g = std::get_if<GeneratorSpec>(&src.source)) {
    QuadraticProblem p = generate(g->mode, g->n, g->d, g->seed);
    if (g->precondition) p = precondition_homogeneous(p).first;
    return p;
  }
  if (const auto* path = std::get_if<std::filesystem::path>(&src.source)) return load_problem(*path);
  return std::get<QuadraticProblem>(src.source);
}

void RunConfig::validate() const {
  schedule.validate();
  if (K < 0) bad_config("K must be nonnegative");
  if (repeats < 1) bad_config("repeats must be at least 1");
  if (metrics.empty()) bad_config("at least one metric is required");
}

int Trace::metric_index(Metric m) const {
  const auto it = std::find(metrics.begin(), metrics.end(), m);
  if (it == metrics.end()) throw Error(Errc::kConfigInvalid, "metric " + to_string(m) + " not recorded");
  return static_cast<int>(it - metrics.begin());
}

const std::vector<double>& Trace::series(int repeat, Metric m) const {
  return values.at(static_cast<std::size_t>(repeat)).at(static_cast<std::size_t>(metric_index(m)));
}

bool Trace::operator==(const Trace& o) const {
  if (metrics != o.metrics || K != o.K || repeats != o.repeats || values != o.values ||
      diverged_at != o.diverged_at || final_f != o.final_f || x0 != o.x0 ||
      iterates.size() != o.iterates.size()) {
    return false;
  }
  for (std::size_t r = 0; r < iterates.size(); ++r) {
    if (iterates[r].size() != o.iterates[r].size()) return false;
    for (std::size_t k = 0; k < iterates[r].size(); ++k) {
      if (iterates[r][k] != o.iterates[r][k]) return false;
    }
  }
  return true;
}

TraceAggregate aggregate(const Trace& t) {
  TraceAggregate a;
  const std::size_t nm = t.metrics.size();
  const auto len = static_cast<std::size_t>(t.K) + 1;
  a.mean.assign(nm, std::vector<double>(len, 0.0));
  a.std.assign(nm, std::vector<double>(len, 0.0));
  a.count.assign(nm, std::vector<int>(len, 0));
  for (std::size_t m = 0; m < nm; ++m) {
    for (std::size_t k = 0; k < len; ++k) {
      double sum = 0.0;
      int cnt = 0;
      for (const auto& rep : t.values) {
        if (k < rep[m].size()) {
          sum += rep[m][k];
          ++cnt;
        }
      }
      const double mean = cnt > 0 ? sum / cnt : std::numeric_limits<double>::quiet_NaN();
      double ss = 0.0;
      for (const auto& rep : t.values) {
        if (k < rep[m].size()) ss += (rep[m][k] - mean) * (rep[m][k] - mean);
      }
      a.mean[m][k] = mean;
      a.std[m][k] = cnt > 1 ? std::sqrt(ss / (cnt - 1)) : 0.0;
      a.count[m][k] = cnt;
    }
  }
  return a;
}

Vector estimator_fixed_point(const QuadraticProblem& p, const EstimatorKind& kind,
                             const ExpectationPolicy& policy) {
  if (kind.tag == EstimatorTag::kIST) return fixed_point(p, kind.sketch, policy);
  return solution(p);
}

Vector initial_point(const RunConfig& cfg, int d) {
  switch (cfg.x0.kind) {
    case X0Policy::Kind::kZeros:
      return Vector::Zero(d);
    case X0Policy::Kind::kGiven:
      if (cfg.x0.given.size() != d) throw Error(Errc::kDimMismatch, "given x0 has wrong size");
      return cfg.x0.given;
    case X0Policy::Kind::kGaussian: {
      Rng rng(cfg.x0.seed ? *cfg.x0.seed : substream_seed(cfg.seed, kStreamX0));
      Vector x(d);
      for (int j = 0; j < d; ++j) x[j] = rng.normal();
      return x;
    }
  }
  return Vector::Zero(d);
}

namespace {

struct RunContext {
  const QuadraticProblem& p;
  const RunConfig& cfg;
  std::optional<Vector> x_star;
  std::optional<Vector> x_inf;
  bool need_sample_at_end = false;
};

bool uses(const RunConfig& cfg, std::initializer_list<Metric> ms) {
  for (Metric m : ms) {
    if (std::find(cfg.metrics.begin(), cfg.metrics.end(), m) != cfg.metrics.end()) return true;
  }
  return false;
}

double submodel_loss(const QuadraticProblem& p, const std::optional<SketchSample>& s,
                     const Vector& x) {
  double acc = 0.0;
  for (int i = 0; i < p.n(); ++i) acc += f_i_val(p, i, s ? apply(*s, i, x) : x);
  return acc / p.n();
}

double metric_value(const RunContext& ctx, Metric m, const Vector& x, double gap0,
                    const std::optional<SketchSample>& s) {
  const QuadraticProblem& p = ctx.p;
  switch (m) {
    case Metric::kFGapRelLog: {
      constexpr double tiny = std::numeric_limits<double>::min();
      const double gap = f_gap(p, x, *ctx.x_star);
      return std::log10(std::max(gap, tiny) / std::max(gap0, tiny));
    }
    case Metric::kGradSq:
      return grad(p, x).squaredNorm();
    case Metric::kGradSqLinv: {
      const Vector g = grad(p, x);
      return g.dot(pinv_solve(p.L_bar_spectrum(), g));
    }
    case Metric::kDistLToXstar:
      return weighted_sqnorm(x - *ctx.x_star, p.L_bar());
    case Metric::kDistToXinf:
      return (x - *ctx.x_inf).norm();
    case Metric::kSubmodelLossAvg:
      return submodel_loss(p, s, x);
    case Metric::kFVal:
      return f_val(p, x);
    case Metric::kFGap:
      return f_gap(p, x, *ctx.x_star);
  }
  return 0.0;
}

bool out_of_bounds(double v) { return !std::isfinite(v) || std::abs(v) > kDivergence; }

void run_repeat(const RunContext& ctx, const Vector& x0, int r, Trace& t) {
  const auto& cfg = ctx.cfg;
  const QuadraticProblem& p = ctx.p;
  const auto ri = static_cast<std::size_t>(r);
  Rng rng(substream_seed(substream_seed(cfg.seed, kStreamRepeat), static_cast<std::uint64_t>(r)));
  auto& rows = t.values[ri];
  rows.assign(cfg.metrics.size(), {});
  for (auto& row : rows) row.reserve(static_cast<std::size_t>(cfg.K) + 1);

  const double gap0 = ctx.x_star ? f_gap(p, x0, *ctx.x_star) : 0.0;
  Vector x = x0;
  Vector last = x0;
  for (int k = 0; k <= cfg.K; ++k) {
    if (out_of_bounds(x.cwiseAbs().maxCoeff())) {
      t.diverged_at[ri] = k;
      break;
    }
    std::optional<Estimate> e;
    std::optional<SketchSample> s;
    if (k < cfg.K) {
      e = estimate(cfg.estimator, p, x, rng);
      s = e->sample;
    } else if (ctx.need_sample_at_end && cfg.estimator.tag != EstimatorTag::kDGD) {
      s = sample(cfg.estimator.sketch, p, rng);
    }
    std::vector<double> vals(cfg.metrics.size());
    bool bad = false;
    for (std::size_t m = 0; m < cfg.metrics.size(); ++m) {
      vals[m] = metric_value(ctx, cfg.metrics[m], x, gap0, s);
      bad = bad || out_of_bounds(vals[m]);
    }
    if (bad) {
      t.diverged_at[ri] = k;
      break;
    }
    for (std::size_t m = 0; m < vals.size(); ++m) rows[m].push_back(vals[m]);
    if (cfg.keep_iterates) t.iterates[ri].push_back(x);
    last = x;
    if (e) x -= cfg.schedule.at(k) * e->g;
  }
  t.final_f[ri] = f_val(p, last);
}

}  // namespace

Trace run(const RunConfig& cfg, const QuadraticProblem& p) {
  cfg.validate();
  if (cfg.estimator.tag != EstimatorTag::kDGD) validate_shape(cfg.estimator.sketch, p.n(), p.d());

  RunContext ctx{p, cfg, std::nullopt, std::nullopt, false};
  if (uses(cfg, {Metric::kFGapRelLog, Metric::kDistLToXstar, Metric::kFGap})) {
    ctx.x_star = solution(p);
  }
  if (uses(cfg, {Metric::kDistToXinf})) {
    ctx.x_inf = estimator_fixed_point(p, cfg.estimator, cfg.expectation);
  }
  ctx.need_sample_at_end = uses(cfg, {Metric::kSubmodelLossAvg});

  Trace t;
  t.metrics = cfg.metrics;
  t.K = cfg.K;
  t.repeats = cfg.repeats;
  const auto reps = static_cast<std::size_t>(cfg.repeats);
  t.values.resize(reps);
  t.diverged_at.assign(reps, std::nullopt);
  t.final_f.assign(reps, 0.0);
  if (cfg.keep_iterates) t.iterates.resize(reps);
  t.x0 = initial_point(cfg, p.d());

  parallel_for(
      reps, [&](std::size_t r) { run_repeat(ctx, t.x0, static_cast<int>(r), t); }, cfg.threads);
  return t;
}

Trace run(const RunConfig& cfg) { return run(cfg, resolve_problem(cfg.problem)); }

std::vector<Trace> sweep(const RunConfig& base, const std::vector<double>& gammas) {
  if (gammas.empty()) bad_config("sweep needs at least one step size");
  const QuadraticProblem p = resolve_problem(base.problem);
  RunConfig cfg = base;
  // Pin x0 so every point of the sweep starts from the same vector.
  cfg.x0.given = initial_point(base, p.d());
  cfg.x0.kind = X0Policy::Kind::kGiven;
  std::vector<Trace> out;
  out.reserve(gammas.size());
  for (double g : gammas) {
    cfg.schedule.gamma0 = g;
    out.push_back(run(cfg, p));
  }
  return out;
}

double plateau_level(const Trace& t, Metric metric, double fraction) {
  const int m = t.metric_index(metric);
  const TraceAggregate a = aggregate(t);
  const auto& mean = a.mean[static_cast<std::size_t>(m)];
  const int len = t.K + 1;
  const int tail = std::max(1, static_cast<int>(std::floor(fraction * t.K)));
  double sum = 0.0;
  for (int k = len - tail; k < len; ++k) sum += mean[static_cast<std::size_t>(k)];
  return sum / tail;
}

int iterations_to_plateau(const Trace& t, Metric metric, double factor, double fraction) {
  const double level = plateau_level(t, metric, fraction);
  const TraceAggregate a = aggregate(t);
  const auto& mean = a.mean[static_cast<std::size_t>(t.metric_index(metric))];
  for (std::size_t k = 0; k < mean.size(); ++k) {
    if (mean[k] <= factor * level) return static_cast<int>(k);
  }
  return t.K;
}

// ---------------------------------------------------------------------------
// Config serialization.

namespace {

nlohmann::json vec_json(const Vector& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

Vector json_vec(const nlohmann::json& j, const char* what) {
  if (!j.is_array()) bad_config(std::string(what) + " must be an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) {
    if (!j[k].is_number()) bad_config(std::string(what) + " must be an array of numbers");
    v[static_cast<Eigen::Index>(k)] = j[k].get<double>();
  }
  return v;
}

void only_keys(const nlohmann::json& j, std::initializer_list<const char*> keys, const char* where) {
  if (!j.is_object()) bad_config(std::string(where) + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; })) {
      bad_config("unknown key '" + key + "' in " + where);
    }
  }
}

template <class T>
T get_as(const nlohmann::json& j, const char* key, const char* where) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    bad_config(std::string(where) + ": missing or invalid '" + key + "'");
  }
}

}  // namespace

nlohmann::json to_json(const RunConfig& cfg) {
  nlohmann::json j;
  if (const auto* g = std::get_if<GeneratorSpec>(&cfg.problem.source)) {
    j["problem"] = {{"generate",
                     {{"mode", to_string(g->mode)},
                      {"n", g->n},
                      {"d", g->d},
                      {"seed", g->seed},
                      {"precondition", g->precondition}}}};
  } else if (const auto* path = std::get_if<std::filesystem::path>(&cfg.problem.source)) {
    j["problem"] = path->string();
  } else {
    j["problem"] = {{"inline", to_json(std::get<QuadraticProblem>(cfg.problem.source))}};
  }
  j["estimator"] = cfg.estimator.name();
  j["sketch"] = to_json(cfg.estimator.sketch);
  if (cfg.schedule.kind == StepSchedule::Kind::kConstant) {
    j["schedule"] = {{"kind", "constant"}, {"gamma", cfg.schedule.gamma0}};
  } else {
    j["schedule"] = {{"kind", "staircase"},
                     {"gamma0", cfg.schedule.gamma0},
                     {"divide_by", cfg.schedule.divide_by},
                     {"period", cfg.schedule.period}};
  }
  j["K"] = cfg.K;
  j["seed"] = cfg.seed;
  j["repeats"] = cfg.repeats;
  std::vector<std::string> ms;
  for (Metric m : cfg.metrics) ms.push_back(to_string(m));
  j["metrics"] = ms;
  switch (cfg.x0.kind) {
    case X0Policy::Kind::kZeros:
      j["x0"] = {{"kind", "zeros"}};
      break;
    case X0Policy::Kind::kGiven:
      j["x0"] = {{"kind", "given"}, {"value", vec_json(cfg.x0.given)}};
      break;
    case X0Policy::Kind::kGaussian:
      j["x0"] = {{"kind", "gaussian"}};
      if (cfg.x0.seed) j["x0"]["seed"] = *cfg.x0.seed;
      break;
  }
  j["expectation"] = {{"budget", cfg.expectation.budget},
                      {"mc_samples", cfg.expectation.mc_samples},
                      {"mc_seed", cfg.expectation.mc_seed}};
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  only_keys(j,
            {"problem", "estimator", "sketch", "schedule", "K", "seed", "repeats", "metrics", "x0",
             "expectation"},
            "experiment");
  RunConfig cfg;

  if (!j.contains("problem")) bad_config("experiment: missing 'problem'");
  const auto& pj = j["problem"];
  if (pj.is_string()) {
    std::filesystem::path path = pj.get<std::string>();
    if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
    cfg.problem.source = path;
  } else if (pj.is_object() && pj.contains("generate")) {
    only_keys(pj, {"generate"}, "problem");
    const auto& g = pj["generate"];
    only_keys(g, {"mode", "n", "d", "seed", "precondition"}, "problem.generate");
    GeneratorSpec spec;
    spec.mode = parse_problem_mode(get_as<std::string>(g, "mode", "problem.generate"));
    spec.n = get_as<int>(g, "n", "problem.generate");
    spec.d = get_as<int>(g, "d", "problem.generate");
    spec.seed = get_as<std::uint64_t>(g, "seed", "problem.generate");
    if (g.contains("precondition")) spec.precondition = get_as<bool>(g, "precondition", "problem.generate");
    cfg.problem.source = spec;
  } else if (pj.is_object() && pj.contains("inline")) {
    only_keys(pj, {"inline"}, "problem");
    try {
      cfg.problem.source = problem_from_json(pj["inline"]);
    } catch (const Error& e) {
      bad_config(std::string("problem.inline: ") + e.what());
    }
  } else {
    bad_config("problem must be a path, {\"generate\": ...} or {\"inline\": ...}");
  }

  SketchKind sk = SketchKind::identity();
  if (j.contains("sketch")) {
    try {
      sk = sketch_kind_from_json(j["sketch"]);
    } catch (const Error& e) {
      bad_config(std::string("sketch: ") + e.what());
    }
  }
  cfg.estimator = parse_estimator(get_as<std::string>(j, "estimator", "experiment"), sk);

  if (!j.contains("schedule")) bad_config("experiment: missing 'schedule'");
  const auto& sj = j["schedule"];
  const auto kind = get_as<std::string>(sj, "kind", "schedule");
  if (kind == "constant") {
    only_keys(sj, {"kind", "gamma"}, "schedule");
    cfg.schedule = StepSchedule::constant(get_as<double>(sj, "gamma", "schedule"));
  } else if (kind == "staircase") {
    only_keys(sj, {"kind", "gamma0", "divide_by", "period"}, "schedule");
    cfg.schedule = StepSchedule::staircase(get_as<double>(sj, "gamma0", "schedule"),
                                           get_as<double>(sj, "divide_by", "schedule"),
                                           get_as<int>(sj, "period", "schedule"));
  } else {
    bad_config("schedule kind must be 'constant' or 'staircase'");
  }

  cfg.K = get_as<int>(j, "K", "experiment");
  cfg.seed = get_as<std::uint64_t>(j, "seed", "experiment");
  cfg.repeats = j.contains("repeats") ? get_as<int>(j, "repeats", "experiment") : 1;
  if (j.contains("metrics")) {
    cfg.metrics.clear();
    for (const auto& m : get_as<std::vector<std::string>>(j, "metrics", "experiment")) {
      cfg.metrics.push_back(parse_metric(m));
    }
  }
  if (j.contains("x0")) {
    const auto& xj = j["x0"];
    const std::string k = xj.is_string() ? xj.get<std::string>() : get_as<std::string>(xj, "kind", "x0");
    if (xj.is_object()) only_keys(xj, {"kind", "seed", "value"}, "x0");
    if (k == "zeros") {
      cfg.x0.kind = X0Policy::Kind::kZeros;
    } else if (k == "gaussian") {
      cfg.x0.kind = X0Policy::Kind::kGaussian;
      if (xj.is_object() && xj.contains("seed")) cfg.x0.seed = get_as<std::uint64_t>(xj, "seed", "x0");
    } else if (k == "given") {
      if (!xj.is_object() || !xj.contains("value")) bad_config("x0: 'given' needs 'value'");
      cfg.x0.kind = X0Policy::Kind::kGiven;
      cfg.x0.given = json_vec(xj["value"], "x0.value");
    } else {
      bad_config("x0 kind must be gaussian, zeros or given");
    }
  }
  if (j.contains("expectation")) {
    const auto& ej = j["expectation"];
    only_keys(ej, {"budget", "mc_samples", "mc_seed"}, "expectation");
    if (ej.contains("budget")) cfg.expectation.budget = get_as<std::uint64_t>(ej, "budget", "expectation");
    if (ej.contains("mc_samples")) {
      cfg.expectation.mc_samples = get_as<std::uint64_t>(ej, "mc_samples", "expectation");
    }
    if (ej.contains("mc_seed")) cfg.expectation.mc_seed = get_as<std::uint64_t>(ej, "mc_seed", "expectation");
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Trace IO.

void write_trace_csv(const Trace& t, std::ostream& out) {
  out << "repeat,k,metric_name,value\n";
  char buf[64];
  for (std::size_t r = 0; r < t.values.size(); ++r) {
    const auto& rows = t.values[r];
    const std::size_t len = rows.empty() ? 0 : rows.front().size();
    for (std::size_t k = 0; k < len; ++k) {
      for (std::size_t m = 0; m < rows.size(); ++m) {
        std::snprintf(buf, sizeof buf, "%.17g", rows[m][k]);
        out << r << ',' << k << ',' << to_string(t.metrics[m]) << ',' << buf << '\n';
      }
    }
  }
}

Trace read_trace_csv(std::istream& in) {
  auto fail = [](const std::string& what) -> void { throw Error(Errc::kParseError, "trace csv: " + what); };
  std::string line;
  if (!std::getline(in, line) || line != "repeat,k,metric_name,value") fail("bad header");
  Trace t;
  std::map<std::pair<int, Metric>, std::vector<double>> cells;
  int max_r = -1;
  int max_k = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string r_s, k_s, m_s, v_s;
    if (!std::getline(ss, r_s, ',') || !std::getline(ss, k_s, ',') || !std::getline(ss, m_s, ',') ||
        !std::getline(ss, v_s)) {
      fail("malformed row '" + line + "'");
    }
    int r = 0;
    int k = 0;
    double v = 0.0;
    try {
      r = std::stoi(r_s);
      k = std::stoi(k_s);
      v = std::stod(v_s);
    } catch (const std::exception&) {
      fail("malformed row '" + line + "'");
    }
    Metric m = Metric::kFVal;
    try {
      m = parse_metric(m_s);
    } catch (const Error&) {
      fail("unknown metric '" + m_s + "'");
    }
    if (r < 0 || k < 0) fail("negative index");
    if (std::find(t.metrics.begin(), t.metrics.end(), m) == t.metrics.end()) t.metrics.push_back(m);
    auto& col = cells[{r, m}];
    if (static_cast<int>(col.size()) != k) fail("rows out of order");
    col.push_back(v);
    max_r = std::max(max_r, r);
    max_k = std::max(max_k, k);
  }
  t.repeats = max_r + 1;
  t.K = std::max(max_k, 0);
  t.values.resize(static_cast<std::size_t>(t.repeats));
  t.diverged_at.assign(static_cast<std::size_t>(t.repeats), std::nullopt);
  for (int r = 0; r < t.repeats; ++r) {
    for (Metric m : t.metrics) t.values[static_cast<std::size_t>(r)].push_back(cells[{r, m}]);
  }
  return t;
}

nlohmann::json trace_to_json(const Trace& t) {
  nlohmann::json j;
  std::vector<std::string> ms;
  for (Metric m : t.metrics) ms.push_back(to_string(m));
  j["metrics"] = ms;
  j["K"] = t.K;
  j["repeats"] = t.repeats;
  j["x0"] = vec_json(t.x0);
  nlohmann::json reps = nlohmann::json::array();
  for (std::size_t r = 0; r < t.values.size(); ++r) {
    nlohmann::json rep;
    nlohmann::json vals;
    for (std::size_t m = 0; m < t.metrics.size(); ++m) vals[ms[m]] = t.values[r][m];
    rep["values"] = vals;
    rep["diverged_at"] = t.diverged_at[r] ? nlohmann::json(*t.diverged_at[r]) : nlohmann::json(nullptr);
    rep["final_f"] = t.final_f[r];
    reps.push_back(rep);
  }
  j["runs"] = reps;
  const TraceAggregate a = aggregate(t);
  nlohmann::json agg;
  for (std::size_t m = 0; m < t.metrics.size(); ++m) {
    agg[ms[m]] = {{"mean", a.mean[m]}, {"std", a.std[m]}};
  }
  j["aggregate"] = agg;
  return j;
}

Trace trace_from_json(const nlohmann::json& j) {
  try {
    Trace t;
    for (const auto& m : j.at("metrics")) t.metrics.push_back(parse_metric(m.get<std::string>()));
    t.K = j.at("K").get<int>();
    t.repeats = j.at("repeats").get<int>();
    t.x0 = json_vec(j.at("x0"), "x0");
    for (const auto& rep : j.at("runs")) {
      std::vector<std::vector<double>> rows;
      for (Metric m : t.metrics) rows.push_back(rep.at("values").at(to_string(m)).get<std::vector<double>>());
      t.values.push_back(std::move(rows));
      const auto& div = rep.at("diverged_at");
      t.diverged_at.push_back(div.is_null() ? std::nullopt : std::optional<int>(div.get<int>()));
      t.final_f.push_back(rep.at("final_f").get<double>());
    }
    if (static_cast<int>(t.values.size()) != t.repeats) throw Error(Errc::kParseError, "trace json: run count");
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kParseError, std::string("trace json: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::kParseError) throw;
    throw Error(Errc::kParseError, std::string("trace json: ") + e.what());
  }
}

}  // namespace istlab

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

#include "istlab/cli.hpp"

#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "istlab/error.hpp"
#include "istlab/problem.hpp"
#include "istlab/runner.hpp"
#include "istlab/sketch.hpp"
#include "istlab/theory.hpp"

#ifndef ISTLAB_VERSION
#define ISTLAB_VERSION "0.0.0"
#endif

namespace istlab {

std::string_view version() { return ISTLAB_VERSION; }

namespace {

namespace fs = std::filesystem;

std::mutex io_mutex;

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::kConfigInvalid:
    case Errc::kParseError:
    case Errc::kIoError:
      return kExitUsage;
    case Errc::kDegenerateEnsemble:
      return kExitGeneration;
    case Errc::kIncompatibleShape:
      return kExitShape;
    default:
      return kExitFailure;
  }
}

struct OutputSpec {
  std::string format = "csv";
  fs::path path;
};

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(Errc::kConfigInvalid, "bad number '" + item + "' in list");
    }
  }
  if (out.empty()) throw Error(Errc::kConfigInvalid, "empty list");
  return out;
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIoError, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kParseError, path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(Errc::kIoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(Errc::kIoError, "write failed for " + path.string());
}

// Splits an experiment file into the run config and its "output" block.
std::pair<RunConfig, OutputSpec> load_experiment(const fs::path& path) {
  nlohmann::json j = read_json(path);
  if (!j.is_object()) throw Error(Errc::kConfigInvalid, "experiment file must be a JSON object");
  OutputSpec out;
  if (j.contains("output")) {
    const auto& o = j["output"];
    if (!o.is_object()) throw Error(Errc::kConfigInvalid, "output must be an object");
    for (const auto& [key, _] : o.items()) {
      if (key != "format" && key != "path") throw Error(Errc::kConfigInvalid, "unknown key '" + key + "' in output");
    }
    if (o.contains("format")) out.format = o["format"].get<std::string>();
    if (o.contains("path")) {
      out.path = o["path"].get<std::string>();
      if (out.path.is_relative()) out.path = path.parent_path() / out.path;
    }
    j.erase("output");
  }
  return {run_config_from_json(j, path.parent_path()), out};
}

void write_trace(const Trace& t, const RunConfig& cfg, const OutputSpec& spec,
                 const std::string& command) {
  std::ostringstream body;
  if (spec.format == "csv") {
    write_trace_csv(t, body);
  } else {
    body << trace_to_json(t).dump(1) << '\n';
  }
  write_text(spec.path, body.str());

  nlohmann::json meta;
  meta["version"] = std::string(version());
  meta["command"] = command;
  meta["config"] = to_json(cfg);
  meta["output"] = {{"format", spec.format}, {"path", spec.path.filename().string()}};
  nlohmann::json div = nlohmann::json::array();
  for (const auto& d : t.diverged_at) div.push_back(d ? nlohmann::json(*d) : nlohmann::json(nullptr));
  meta["diverged_at"] = div;
  meta["final_f"] = t.final_f;
  write_text(fs::path(spec.path.string() + ".meta.json"), meta.dump(1) + "\n");
}

void report_divergence(const Trace& t, std::ostream& err) {
  for (std::size_t r = 0; r < t.diverged_at.size(); ++r) {
    if (t.diverged_at[r]) {
      std::lock_guard<std::mutex> lock(io_mutex);
      err << "repeat " << r << " diverged at k=" << *t.diverged_at[r] << '\n';
    }
  }
}

fs::path sweep_path(const fs::path& base, double gamma) {
  std::ostringstream tag;
  tag << "_g" << gamma;
  return base.parent_path() / (base.stem().string() + tag.str() + base.extension().string());
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Independent subnetwork training simulator for distributed quadratics", "istlab"};
  app.set_version_flag("--version", std::string(version()));
  app.require_subcommand(1);

  int n = 0;
  int d = 0;
  std::uint64_t seed = 0;
  std::string mode = "het";
  std::string gen_out;
  bool gen_precondition = false;
  auto* gen = app.add_subcommand("gen", "Generate a random quadratic problem");
  gen->add_option("--n", n, "Number of clients")->required()->check(CLI::PositiveNumber);
  gen->add_option("--d", d, "Dimension")->required()->check(CLI::PositiveNumber);
  gen->add_option("--seed", seed, "Generator seed")->required();
  gen->add_option("--mode", mode, "het | hom | het-interp | hom-interp")
      ->check(CLI::IsMember({"het", "hom", "het-interp", "hom-interp"}));
  gen->add_option("--out", gen_out, "Output problem file")->required();
  gen->add_flag("--precondition", gen_precondition, "Apply diagonal preconditioning (homogeneous only)");

  std::string problem_path;
  std::string sketch_name;
  int sketch_q = 0;
  double sketch_p = 0.0;
  double theory_gamma = 0.0;
  std::uint64_t mc_samples = 0;
  std::uint64_t mc_seed = 0;
  auto* theory = app.add_subcommand("theory", "Print a convergence certificate as JSON");
  theory->add_option("--problem", problem_path, "Problem file")->required();
  theory->add_option("--sketch", sketch_name, "Sketch kind")->required();
  theory->add_option("--q", sketch_q, "Coordinates per client (rand_q, permutation kinds)");
  theory->add_option("--p", sketch_p, "Keep probability (bernoulli)");
  auto* gamma_opt = theory->add_option("--gamma", theory_gamma, "Step size for the contraction factor");
  theory->add_option("--mc-samples", mc_samples, "Monte Carlo fallback sample count");
  theory->add_option("--mc-seed", mc_seed, "Monte Carlo seed");

  std::string config_path;
  std::string out_override;
  std::string format_override;
  auto* run_cmd = app.add_subcommand("run", "Run an experiment file");
  run_cmd->add_option("--config", config_path, "Experiment file")->required();
  run_cmd->add_option("--out", out_override, "Trace path (overrides the experiment file)");
  run_cmd->add_option("--format", format_override, "csv | json")->check(CLI::IsMember({"csv", "json"}));

  std::string gammas_text;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run an experiment file over a list of step sizes");
  sweep_cmd->add_option("--config", config_path, "Experiment file")->required();
  sweep_cmd->add_option("--gammas", gammas_text, "Comma-separated step sizes")->required();
  sweep_cmd->add_option("--out", out_override, "Trace path prefix");
  sweep_cmd->add_option("--format", format_override, "csv | json")->check(CLI::IsMember({"csv", "json"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) {
      QuadraticProblem p = generate(parse_problem_mode(mode), n, d, seed);
      if (gen_precondition) p = precondition_homogeneous(p).first;
      save_problem(p, gen_out);
      const Spectrum& s = p.L_bar_spectrum();
      out << std::setprecision(17) << "lambda_min " << s.lambda_min() << "\nlambda_max "
          << s.lambda_max() << '\n';
      return kExitOk;
    }
    if (*theory) {
      const QuadraticProblem p = load_problem(problem_path);
      const SketchKind kind = parse_sketch_name(sketch_name, sketch_q, sketch_p);
      CertifyOptions opts;
      if (gamma_opt->count() > 0) opts.gamma = theory_gamma;
      opts.policy.mc_samples = mc_samples;
      opts.policy.mc_seed = mc_seed;
      opts.sigma_mc_samples = mc_samples;
      out << to_json(certify(p, kind, opts)).dump(1) << '\n';
      return kExitOk;
    }

    auto [cfg, spec] = load_experiment(config_path);
    if (!out_override.empty()) spec.path = out_override;
    if (!format_override.empty()) spec.format = format_override;
    if (spec.format != "csv" && spec.format != "json") {
      throw Error(Errc::kConfigInvalid, "output format must be csv or json");
    }
    if (spec.path.empty()) {
      spec.path = fs::path(config_path).replace_extension(spec.format == "csv" ? ".trace.csv" : ".trace.json");
    }

    if (*run_cmd) {
      const Trace t = run(cfg);
      write_trace(t, cfg, spec, "run");
      report_divergence(t, err);
      out << spec.path.string() << '\n';
      return kExitOk;
    }
    if (*sweep_cmd) {
      const std::vector<double> gammas = parse_list(gammas_text);
      const std::vector<Trace> traces = sweep(cfg, gammas);
      RunConfig pinned = cfg;
      pinned.x0.kind = X0Policy::Kind::kGiven;
      pinned.x0.given = traces.front().x0;
      for (std::size_t g = 0; g < gammas.size(); ++g) {
        pinned.schedule.gamma0 = gammas[g];
        OutputSpec point = spec;
        point.path = sweep_path(spec.path, gammas[g]);
        write_trace(traces[g], pinned, point, "sweep");
        report_divergence(traces[g], err);
        out << point.path.string() << '\n';
      }
      return kExitOk;
    }
  } catch (const Error& e) {
    std::lock_guard<std::mutex> lock(io_mutex);
    err << "error [" << errc_name(e.code()) << "]: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::lock_guard<std::mutex> lock(io_mutex);
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace istlab

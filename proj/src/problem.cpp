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

#include "istlab/problem.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "istlab/error.hpp"
#include "istlab/parallel.hpp"
#include "istlab/rng.hpp"

namespace istlab {

QuadraticProblem::QuadraticProblem(std::vector<SymMatrix> l, std::vector<Vector> b,
                                   std::optional<std::uint64_t> seed) {
  if (l.empty()) throw Error(Errc::kDimMismatch, "problem needs at least one client");
  if (l.size() != b.size()) {
    throw Error(Errc::kDimMismatch, "problem has " + std::to_string(l.size()) +
                                        " matrices but " + std::to_string(b.size()) +
                                        " linear terms");
  }
  const int d = l.front().dim();
  for (std::size_t i = 0; i < l.size(); ++i) {
    if (l[i].dim() != d || b[i].size() != d) {
      throw Error(Errc::kDimMismatch, "client " + std::to_string(i) + " has inconsistent shape");
    }
    require_finite(l[i].mat(), "L_i");
    require_finite(b[i], "b_i");
  }

  auto state = std::make_shared<State>();
  const double inv_n = 1.0 / static_cast<double>(l.size());
  Matrix l_sum = Matrix::Zero(d, d);
  Vector b_sum = Vector::Zero(d);
  bool interp = true;
  bool homog = true;
  for (std::size_t i = 0; i < l.size(); ++i) {
    l_sum += l[i].mat();
    b_sum += b[i];
    state->diag.push_back(diag_of(l[i]));
    if ((b[i].array() != 0.0).any()) interp = false;
    if (i > 0 && !(l[i] == l[0])) homog = false;
  }
  state->l_bar = SymMatrix(l_sum * inv_n);
  state->b_bar = b_sum * inv_n;
  state->interpolation = interp;
  state->homogeneous = homog;
  state->seed = seed;
  state->l = std::move(l);
  state->b = std::move(b);
  state_ = std::move(state);
  cache_ = std::make_shared<SpectrumCache>();
}

const Spectrum& QuadraticProblem::L_bar_spectrum() const {
  std::call_once(cache_->once, [this] { cache_->spectrum = eig_sym(state_->l_bar); });
  return cache_->spectrum;
}

bool QuadraticProblem::operator==(const QuadraticProblem& other) const {
  if (n() != other.n() || d() != other.d() || seed() != other.seed()) return false;
  for (int i = 0; i < n(); ++i) {
    if (!(L(i) == other.L(i)) || b(i) != other.b(i)) return false;
  }
  return true;
}

ProblemMode parse_problem_mode(const std::string& text) {
  if (text == "het") return ProblemMode::kHet;
  if (text == "hom") return ProblemMode::kHom;
  if (text == "het-interp") return ProblemMode::kHetInterp;
  if (text == "hom-interp") return ProblemMode::kHomInterp;
  throw Error(Errc::kConfigInvalid, "unknown problem mode '" + text + "'");
}

std::string to_string(ProblemMode mode) {
  switch (mode) {
    case ProblemMode::kHet: return "het";
    case ProblemMode::kHom: return "hom";
    case ProblemMode::kHetInterp: return "het-interp";
    case ProblemMode::kHomInterp: return "hom-interp";
  }
  return "het";
}

namespace {

struct ClientDraw {
  SymMatrix l = SymMatrix::zeros(1);
  Vector b;
};

ClientDraw draw_client(int d, std::uint64_t seed, int index) {
  Rng rng(substream_seed(substream_seed(seed, kStreamProblem), static_cast<std::uint64_t>(index)));
  Matrix factor(d, d);
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < d; ++c) factor(r, c) = rng.normal();
  }
  Vector b(d);
  for (int j = 0; j < d; ++j) b[j] = rng.normal();
  Matrix gram = Matrix::Zero(d, d);
  gram.selfadjointView<Eigen::Lower>().rankUpdate(factor.transpose());
  gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
  return ClientDraw{SymMatrix(gram), std::move(b)};
}

void check_shape(int n, int d) {
  if (n < 1 || d < 1) {
    throw Error(Errc::kConfigInvalid, "need n >= 1 and d >= 1, got n=" + std::to_string(n) +
                                          " d=" + std::to_string(d));
  }
}

void check_nondegenerate(const QuadraticProblem& p) {
  const Spectrum& s = p.L_bar_spectrum();
  if (!(s.lambda_min() > 1e-10 * s.lambda_max())) {
    std::ostringstream msg;
    msg << "lambda_min(L_bar) = " << s.lambda_min() << " vs lambda_max = " << s.lambda_max();
    throw Error(Errc::kDegenerateEnsemble, msg.str());
  }
}

}  // namespace

QuadraticProblem gen_heterogeneous(int n, int d, std::uint64_t seed) {
  check_shape(n, d);
  std::vector<ClientDraw> draws(static_cast<std::size_t>(n));
  parallel_for(draws.size(), [&](std::size_t i) {
    draws[i] = draw_client(d, seed, static_cast<int>(i));
  });
  std::vector<SymMatrix> l;
  std::vector<Vector> b;
  for (auto& draw : draws) {
    l.push_back(std::move(draw.l));
    b.push_back(std::move(draw.b));
  }
  QuadraticProblem p(std::move(l), std::move(b), seed);
  check_nondegenerate(p);
  return p;
}

QuadraticProblem gen_homogeneous(int n, int d, std::uint64_t seed) {
  check_shape(n, d);
  const ClientDraw draw = draw_client(d, seed, 0);
  QuadraticProblem p(std::vector<SymMatrix>(static_cast<std::size_t>(n), draw.l),
                     std::vector<Vector>(static_cast<std::size_t>(n), draw.b), seed);
  check_nondegenerate(p);
  return p;
}

QuadraticProblem generate(ProblemMode mode, int n, int d, std::uint64_t seed) {
  switch (mode) {
    case ProblemMode::kHet: return gen_heterogeneous(n, d, seed);
    case ProblemMode::kHom: return gen_homogeneous(n, d, seed);
    case ProblemMode::kHetInterp: return set_interpolation(gen_heterogeneous(n, d, seed));
    case ProblemMode::kHomInterp: return set_interpolation(gen_homogeneous(n, d, seed));
  }
  throw Error(Errc::kConfigInvalid, "unknown problem mode");
}

QuadraticProblem set_interpolation(const QuadraticProblem& p) {
  auto state = std::make_shared<QuadraticProblem::State>(*p.state_);
  for (auto& b : state->b) b.setZero();
  state->b_bar.setZero();
  state->interpolation = true;
  // L_bar is unchanged, so the spectrum cache is shared.
  return QuadraticProblem(std::move(state), p.cache_);
}

Vector ProblemTransformRecord::forward(const Vector& x) const {
  if (kind == Kind::kNone) return x;
  if (x.size() != d.dim()) throw Error(Errc::kDimMismatch, "transform: size");
  return d.diag().cwiseSqrt().cwiseProduct(x);
}

Vector ProblemTransformRecord::inverse(const Vector& x_tilde) const {
  if (kind == Kind::kNone) return x_tilde;
  if (x_tilde.size() != d.dim()) throw Error(Errc::kDimMismatch, "transform: size");
  return x_tilde.cwiseQuotient(d.diag().cwiseSqrt());
}

std::pair<QuadraticProblem, ProblemTransformRecord> precondition_homogeneous(
    const QuadraticProblem& p) {
  if (!p.homogeneous()) {
    throw Error(Errc::kNotHomogeneous, "diagonal preconditioning needs identical L_i");
  }
  const DiagMatrix& diag = p.D(0);
  const SymMatrix l_tilde = precondition(p.L(0), diag);
  const Vector inv_sqrt = diag.diag().cwiseSqrt().cwiseInverse();
  std::vector<Vector> c;
  for (const auto& b : p.b_list()) c.push_back(inv_sqrt.cwiseProduct(b));
  QuadraticProblem out(std::vector<SymMatrix>(static_cast<std::size_t>(p.n()), l_tilde),
                       std::move(c), p.seed());
  ProblemTransformRecord record{ProblemTransformRecord::Kind::kHomogeneousDiagPrecondition, diag};
  return {std::move(out), std::move(record)};
}

namespace {

void check_dim(const QuadraticProblem& p, const Vector& x, const char* what) {
  if (x.size() != p.d()) {
    throw Error(Errc::kDimMismatch, std::string(what) + ": vector has size " +
                                        std::to_string(x.size()) + ", problem d=" +
                                        std::to_string(p.d()));
  }
}

}  // namespace

Vector grad(const QuadraticProblem& p, const Vector& x) {
  check_dim(p, x, "grad");
  return p.L_bar().mat() * x - p.b_bar();
}

double f_val(const QuadraticProblem& p, const Vector& x) {
  check_dim(p, x, "f_val");
  return 0.5 * x.dot(p.L_bar().mat() * x) - x.dot(p.b_bar());
}

double f_i_val(const QuadraticProblem& p, int i, const Vector& x) {
  check_dim(p, x, "f_i_val");
  if (i < 0 || i >= p.n()) throw Error(Errc::kDimMismatch, "f_i_val: client index out of range");
  return 0.5 * x.dot(p.L(i).mat() * x) - x.dot(p.b(i));
}

Vector solution(const QuadraticProblem& p) {
  const Spectrum& s = p.L_bar_spectrum();
  if (!(s.lambda_min() > kRankTol * std::abs(s.lambda_max()))) {
    throw Error(Errc::kSingularMatrix, "L_bar is not positive definite");
  }
  if (p.interpolation()) return Vector::Zero(p.d());
  return pinv_solve(s, p.b_bar());
}

double f_gap(const QuadraticProblem& p, const Vector& x, const Vector& x_star) {
  check_dim(p, x, "f_gap");
  return std::max(0.0, 0.5 * weighted_sqnorm(x - x_star, p.L_bar()));
}

nlohmann::json to_json(const QuadraticProblem& p) {
  nlohmann::json j;
  j["n"] = p.n();
  j["d"] = p.d();
  const int d = p.d();
  nlohmann::json ls = nlohmann::json::array();
  nlohmann::json bs = nlohmann::json::array();
  for (int i = 0; i < p.n(); ++i) {
    std::vector<double> flat(static_cast<std::size_t>(d) * d);
    for (int r = 0; r < d; ++r) {
      for (int c = 0; c < d; ++c) flat[static_cast<std::size_t>(r) * d + c] = p.L(i)(r, c);
    }
    ls.push_back(std::move(flat));
    bs.push_back(std::vector<double>(p.b(i).data(), p.b(i).data() + d));
  }
  j["L"] = std::move(ls);
  j["b"] = std::move(bs);
  if (p.seed()) {
    j["seed"] = *p.seed();
  } else {
    j["seed"] = nullptr;
  }
  return j;
}

namespace {

[[noreturn]] void bad_file(const std::string& what) { throw Error(Errc::kParseError, what); }

double number_at(const nlohmann::json& arr, std::size_t k, const char* what) {
  const auto& v = arr.at(k);
  if (!v.is_number()) bad_file(std::string(what) + " must contain numbers");
  return v.get<double>();
}

}  // namespace

QuadraticProblem problem_from_json(const nlohmann::json& j) {
  if (!j.is_object()) bad_file("problem file must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (key != "n" && key != "d" && key != "L" && key != "b" && key != "seed") {
      bad_file("unknown key '" + key + "' in problem file");
    }
  }
  if (!j.contains("n") || !j["n"].is_number_integer()) bad_file("'n' must be an integer");
  if (!j.contains("d") || !j["d"].is_number_integer()) bad_file("'d' must be an integer");
  const int n = j["n"].get<int>();
  const int d = j["d"].get<int>();
  if (n < 1 || d < 1) bad_file("'n' and 'd' must be positive");
  if (!j.contains("L") || !j["L"].is_array() || j["L"].size() != static_cast<std::size_t>(n)) {
    bad_file("'L' must be an array of n flattened matrices");
  }
  if (!j.contains("b") || !j["b"].is_array() || j["b"].size() != static_cast<std::size_t>(n)) {
    bad_file("'b' must be an array of n vectors");
  }

  std::vector<SymMatrix> ls;
  std::vector<Vector> bs;
  for (int i = 0; i < n; ++i) {
    const auto& flat = j["L"][static_cast<std::size_t>(i)];
    if (!flat.is_array() || flat.size() != static_cast<std::size_t>(d) * d) {
      bad_file("L[" + std::to_string(i) + "] must hold d*d numbers");
    }
    Matrix m(d, d);
    for (int r = 0; r < d; ++r) {
      for (int c = 0; c < d; ++c) {
        m(r, c) = number_at(flat, static_cast<std::size_t>(r) * d + c, "L");
      }
    }
    for (int r = 0; r < d; ++r) {
      for (int c = r + 1; c < d; ++c) {
        const double scale = std::max({1.0, std::abs(m(r, c)), std::abs(m(c, r))});
        if (std::abs(m(r, c) - m(c, r)) > 1e-12 * scale) {
          bad_file("L[" + std::to_string(i) + "] is not symmetric at (" + std::to_string(r) +
                   ", " + std::to_string(c) + ")");
        }
      }
    }
    ls.emplace_back(m);

    const auto& bv = j["b"][static_cast<std::size_t>(i)];
    if (!bv.is_array() || bv.size() != static_cast<std::size_t>(d)) {
      bad_file("b[" + std::to_string(i) + "] must hold d numbers");
    }
    Vector b(d);
    for (int k = 0; k < d; ++k) b[k] = number_at(bv, static_cast<std::size_t>(k), "b");
    bs.push_back(std::move(b));
  }

  std::optional<std::uint64_t> seed;
  if (j.contains("seed") && !j["seed"].is_null()) {
    if (!j["seed"].is_number_integer()) bad_file("'seed' must be an integer or null");
    seed = j["seed"].get<std::uint64_t>();
  }
  return QuadraticProblem(std::move(ls), std::move(bs), seed);
}

void save_problem(const QuadraticProblem& p, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::kIoError, "cannot open " + path.string() + " for writing");
  out << to_json(p).dump() << '\n';
  if (!out) throw Error(Errc::kIoError, "write to " + path.string() + " failed");
}

QuadraticProblem load_problem(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIoError, "cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kParseError, path.string() + ": " + e.what());
  }
  return problem_from_json(j);
}

}  // namespace istlab

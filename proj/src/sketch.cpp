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

#include "istlab/sketch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "istlab/error.hpp"

namespace istlab {

std::string SketchKind::name() const {
  switch (tag) {
    case SketchTag::kIdentity: return "identity";
    case SketchTag::kPermQ: return "perm_q";
    case SketchTag::kPermMultiset: return "perm_multiset";
    case SketchTag::kScaledPermHomog: return "scaled_perm_homog";
    case SketchTag::kScaledPermHet: return "scaled_perm_het";
    case SketchTag::kRandQ: return "rand_q";
    case SketchTag::kBernoulli: return "bernoulli";
  }
  return "identity";
}

SketchKind parse_sketch_name(const std::string& name, int q, double p) {
  SketchKind kind;
  if (name == "identity") {
    kind.tag = SketchTag::kIdentity;
  } else if (name == "perm_q") {
    kind.tag = SketchTag::kPermQ;
  } else if (name == "perm_multiset") {
    kind.tag = SketchTag::kPermMultiset;
  } else if (name == "scaled_perm_homog") {
    kind.tag = SketchTag::kScaledPermHomog;
  } else if (name == "scaled_perm_het") {
    kind.tag = SketchTag::kScaledPermHet;
  } else if (name == "rand_q") {
    kind.tag = SketchTag::kRandQ;
  } else if (name == "bernoulli") {
    kind.tag = SketchTag::kBernoulli;
  } else {
    throw Error(Errc::kConfigInvalid, "unknown sketch kind '" + name + "'");
  }
  kind.q = q;
  kind.p = p;
  if (kind.tag == SketchTag::kRandQ && q < 1) {
    throw Error(Errc::kConfigInvalid, "rand_q needs an integer q >= 1");
  }
  if (kind.tag == SketchTag::kBernoulli && !(p > 0.0 && p <= 1.0)) {
    throw Error(Errc::kConfigInvalid, "bernoulli needs 0 < p <= 1");
  }
  if (q < 0) throw Error(Errc::kConfigInvalid, "q must be positive");
  return kind;
}

SketchKind sketch_kind_from_json(const nlohmann::json& j) {
  if (j.is_string()) return parse_sketch_name(j.get<std::string>());
  if (!j.is_object()) throw Error(Errc::kConfigInvalid, "sketch must be an object or a name");
  for (const auto& [key, _] : j.items()) {
    if (key != "kind" && key != "q" && key != "p") {
      throw Error(Errc::kConfigInvalid, "unknown key '" + key + "' in sketch");
    }
  }
  if (!j.contains("kind") || !j["kind"].is_string()) {
    throw Error(Errc::kConfigInvalid, "sketch needs a string 'kind'");
  }
  int q = 0;
  double p = 0.0;
  if (j.contains("q")) {
    if (!j["q"].is_number_integer()) throw Error(Errc::kConfigInvalid, "sketch 'q' must be an integer");
    q = j["q"].get<int>();
  }
  if (j.contains("p")) {
    if (!j["p"].is_number()) throw Error(Errc::kConfigInvalid, "sketch 'p' must be a number");
    p = j["p"].get<double>();
  }
  return parse_sketch_name(j["kind"].get<std::string>(), q, p);
}

nlohmann::json to_json(const SketchKind& kind) {
  nlohmann::json j{{"kind", kind.name()}};
  if (kind.q > 0) j["q"] = kind.q;
  if (kind.tag == SketchTag::kBernoulli) j["p"] = kind.p;
  return j;
}

namespace {

[[noreturn]] void shape_error(const SketchKind& kind, int n, int d, const char* why) {
  throw Error(Errc::kIncompatibleShape, kind.name() + " with n=" + std::to_string(n) +
                                            ", d=" + std::to_string(d) + ": " + why);
}

}  // namespace

void validate_shape(const SketchKind& kind, int n, int d) {
  if (n < 1 || d < 1) shape_error(kind, n, d, "empty problem");
  switch (kind.tag) {
    case SketchTag::kIdentity:
      return;
    case SketchTag::kPermQ:
    case SketchTag::kScaledPermHomog:
      if (d % n != 0) shape_error(kind, n, d, "requires d = q*n");
      if (kind.q > 0 && kind.q != d / n) shape_error(kind, n, d, "q does not equal d/n");
      return;
    case SketchTag::kPermMultiset:
      if (n % d != 0) shape_error(kind, n, d, "requires n = q*d");
      if (kind.q > 0 && kind.q != n / d) shape_error(kind, n, d, "q does not equal n/d");
      return;
    case SketchTag::kScaledPermHet:
      if (d % n != 0 && n % d != 0) shape_error(kind, n, d, "requires d = q*n or n = q*d");
      return;
    case SketchTag::kRandQ:
      if (kind.q < 1 || kind.q > d) shape_error(kind, n, d, "requires 1 <= q <= d");
      return;
    case SketchTag::kBernoulli:
      if (!(kind.p > 0.0 && kind.p <= 1.0)) {
        throw Error(Errc::kConfigInvalid, "bernoulli needs 0 < p <= 1");
      }
      return;
  }
}

PermLayout perm_layout(const SketchKind& kind, int n, int d) {
  switch (kind.tag) {
    case SketchTag::kPermQ:
    case SketchTag::kScaledPermHomog:
      return PermLayout::kBlock;
    case SketchTag::kPermMultiset:
      return PermLayout::kMultiset;
    case SketchTag::kScaledPermHet:
      return d % n == 0 ? PermLayout::kBlock : PermLayout::kMultiset;
    default:
      return PermLayout::kNone;
  }
}

namespace {

void require_positive_diagonals(const QuadraticProblem& p) {
  for (int i = 0; i < p.n(); ++i) {
    for (int j = 0; j < p.d(); ++j) {
      if (!(p.D(i)[j] > 0)) {
        throw Error(Errc::kNonPositiveDiagonal, "scaled_perm_het needs [L_" + std::to_string(i) +
                                                    "]_{" + std::to_string(j) + "," +
                                                    std::to_string(j) + "} > 0");
      }
    }
  }
}

// Weight of coordinate j in client i's sketch for the permutation kinds.
double perm_weight(const SketchKind& kind, const QuadraticProblem& p, int i, int j) {
  const int n = p.n();
  const int d = p.d();
  switch (kind.tag) {
    case SketchTag::kPermQ: return static_cast<double>(n);
    case SketchTag::kScaledPermHomog: return std::sqrt(static_cast<double>(n));
    case SketchTag::kPermMultiset: return std::sqrt(static_cast<double>(d));
    case SketchTag::kScaledPermHet:
      return std::sqrt(static_cast<double>(std::min(n, d)) / p.D(i)[j]);
    default: return 1.0;
  }
}

std::vector<int> multiset_base(int n, int d) {
  const int q = n / d;
  std::vector<int> arr(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) arr[static_cast<std::size_t>(k)] = k / q;
  return arr;
}

// Builds the sample described by an arrangement: a permutation of [d] in
// block mode, or an arrangement of the multiset {0^q, ..., (d-1)^q} in
// multiset mode.
SketchSample from_arrangement(const SketchKind& kind, const QuadraticProblem& p,
                              std::vector<int> arrangement) {
  const int n = p.n();
  const int d = p.d();
  SketchSample s{kind, n, d, std::vector<std::vector<SketchEntry>>(static_cast<std::size_t>(n)), {}};
  if (perm_layout(kind, n, d) == PermLayout::kBlock) {
    const int q = d / n;
    for (int i = 0; i < n; ++i) {
      auto& entries = s.per_client[static_cast<std::size_t>(i)];
      for (int k = q * i; k < q * (i + 1); ++k) {
        const int j = arrangement[static_cast<std::size_t>(k)];
        entries.push_back({j, perm_weight(kind, p, i, j)});
      }
      std::sort(entries.begin(), entries.end(),
                [](const SketchEntry& a, const SketchEntry& b) { return a.index < b.index; });
    }
  } else {
    for (int i = 0; i < n; ++i) {
      const int j = arrangement[static_cast<std::size_t>(i)];
      s.per_client[static_cast<std::size_t>(i)].push_back({j, perm_weight(kind, p, i, j)});
    }
  }
  s.permutation = std::move(arrangement);
  return s;
}

void fisher_yates(std::vector<int>& arr, Rng& rng) {
  for (std::size_t i = arr.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_below(i));
    std::swap(arr[i - 1], arr[j]);
  }
}

SketchSample identity_sample(const SketchKind& kind, int n, int d) {
  std::vector<SketchEntry> all(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) all[static_cast<std::size_t>(j)] = {j, 1.0};
  return SketchSample{kind, n, d,
                      std::vector<std::vector<SketchEntry>>(static_cast<std::size_t>(n), all), {}};
}

std::vector<SketchEntry> subset_entries(const std::vector<int>& subset, double weight) {
  std::vector<SketchEntry> out;
  out.reserve(subset.size());
  for (int j : subset) out.push_back({j, weight});
  std::sort(out.begin(), out.end(),
            [](const SketchEntry& a, const SketchEntry& b) { return a.index < b.index; });
  return out;
}

}  // namespace

SketchSample sample(const SketchKind& kind, const QuadraticProblem& p, Rng& rng) {
  const int n = p.n();
  const int d = p.d();
  validate_shape(kind, n, d);
  if (kind.tag == SketchTag::kScaledPermHet) require_positive_diagonals(p);

  switch (kind.tag) {
    case SketchTag::kIdentity:
      return identity_sample(kind, n, d);
    case SketchTag::kPermQ:
    case SketchTag::kScaledPermHomog:
    case SketchTag::kPermMultiset:
    case SketchTag::kScaledPermHet: {
      std::vector<int> arr;
      if (perm_layout(kind, n, d) == PermLayout::kBlock) {
        arr.resize(static_cast<std::size_t>(d));
        std::iota(arr.begin(), arr.end(), 0);
      } else {
        arr = multiset_base(n, d);
      }
      fisher_yates(arr, rng);
      return from_arrangement(kind, p, std::move(arr));
    }
    case SketchTag::kRandQ: {
      SketchSample s{kind, n, d, {}, {}};
      const double weight = static_cast<double>(d) / kind.q;
      std::vector<int> pool(static_cast<std::size_t>(d));
      for (int i = 0; i < n; ++i) {
        std::iota(pool.begin(), pool.end(), 0);
        // Partial Fisher-Yates: the first q slots form a uniform q-subset.
        for (int k = 0; k < kind.q; ++k) {
          const auto r = static_cast<std::size_t>(
              k + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(d - k))));
          std::swap(pool[static_cast<std::size_t>(k)], pool[r]);
        }
        s.per_client.push_back(subset_entries(
            std::vector<int>(pool.begin(), pool.begin() + kind.q), weight));
      }
      return s;
    }
    case SketchTag::kBernoulli: {
      SketchSample s{kind, n, d, {}, {}};
      const double weight = 1.0 / kind.p;
      for (int i = 0; i < n; ++i) {
        std::vector<SketchEntry> entries;
        for (int j = 0; j < d; ++j) {
          if (rng.uniform01() < kind.p) entries.push_back({j, weight});
        }
        s.per_client.push_back(std::move(entries));
      }
      return s;
    }
  }
  throw Error(Errc::kConfigInvalid, "unknown sketch kind");
}

Vector apply(const SketchSample& s, int client, const Vector& x) {
  if (x.size() != s.d) throw Error(Errc::kDimMismatch, "apply: vector size does not match d");
  if (client < 0 || client >= s.n) throw Error(Errc::kDimMismatch, "apply: client out of range");
  Vector out = Vector::Zero(s.d);
  for (const auto& e : s.per_client[static_cast<std::size_t>(client)]) {
    out[e.index] = e.weight * x[e.index];
  }
  return out;
}

SymMatrix realized_B(const SketchSample& s, const QuadraticProblem& p) {
  Matrix b = Matrix::Zero(s.d, s.d);
  for (int i = 0; i < s.n; ++i) {
    const auto& entries = s.per_client[static_cast<std::size_t>(i)];
    const Matrix& l = p.L(i).mat();
    for (const auto& a : entries) {
      for (const auto& c : entries) b(a.index, c.index) += a.weight * c.weight * l(a.index, c.index);
    }
  }
  return SymMatrix(b / static_cast<double>(s.n));
}

Vector realized_Cb(const SketchSample& s, const QuadraticProblem& p) {
  Vector out = Vector::Zero(s.d);
  for (int i = 0; i < s.n; ++i) {
    for (const auto& e : s.per_client[static_cast<std::size_t>(i)]) {
      out[e.index] += e.weight * p.b(i)[e.index];
    }
  }
  return out / static_cast<double>(s.n);
}

Vector mean_sketch_diag(const SketchSample& s) {
  Vector out = Vector::Zero(s.d);
  for (const auto& entries : s.per_client) {
    for (const auto& e : entries) out[e.index] += e.weight;
  }
  return out / static_cast<double>(s.n);
}

// ---------------------------------------------------------------------------
// Closed-form expectations
// ---------------------------------------------------------------------------

namespace {

Vector e_cb_from(const std::vector<Vector>& e_c, const QuadraticProblem& p) {
  Vector out = Vector::Zero(p.d());
  for (int i = 0; i < p.n(); ++i) out += e_c[static_cast<std::size_t>(i)].cwiseProduct(p.b(i));
  return out / static_cast<double>(p.n());
}

}  // namespace

ExpectationReport expected_B(const SketchKind& kind, const QuadraticProblem& p) {
  const int n = p.n();
  const int d = p.d();
  validate_shape(kind, n, d);
  const Matrix& l_bar = p.L_bar().mat();
  ExpectationReport r;
  r.method = ExpectationMethod::kClosedForm;

  if (kind.tag == SketchTag::kIdentity) {
    r.E_B = p.L_bar();
    r.E_BLB = SymMatrix(l_bar * l_bar * l_bar);
    r.E_C.assign(static_cast<std::size_t>(n), Vector::Ones(d));
    r.E_Cb = p.b_bar();
    return r;
  }
  if (kind.tag == SketchTag::kRandQ || kind.tag == SketchTag::kBernoulli) {
    throw Error(Errc::kNoClosedForm, kind.name() + " has no closed-form expectation here");
  }
  if (kind.tag == SketchTag::kScaledPermHet) require_positive_diagonals(p);

  const PermLayout layout = perm_layout(kind, n, d);
  const auto dn = static_cast<double>(d);
  r.E_C.resize(static_cast<std::size_t>(n));
  Matrix e_b = Matrix::Zero(d, d);

  if (layout == PermLayout::kBlock) {
    const int q = d / n;
    // P(j in S_i) and P(j, l in S_i) for j != l.
    const double p1 = q / dn;
    const double p2 = d > 1 ? (q * (q - 1.0)) / (dn * (dn - 1.0)) : 0.0;
    for (int i = 0; i < n; ++i) {
      Vector w(d);
      for (int j = 0; j < d; ++j) w[j] = perm_weight(kind, p, i, j);
      r.E_C[static_cast<std::size_t>(i)] = w * p1;
      const Matrix& li = p.L(i).mat();
      for (int c = 0; c < d; ++c) {
        for (int a = 0; a < d; ++a) {
          e_b(a, c) += w[a] * w[c] * li(a, c) * (a == c ? p1 : p2);
        }
      }
    }
  } else {
    for (int i = 0; i < n; ++i) {
      Vector w(d);
      for (int j = 0; j < d; ++j) w[j] = perm_weight(kind, p, i, j);
      r.E_C[static_cast<std::size_t>(i)] = w / dn;
      for (int j = 0; j < d; ++j) e_b(j, j) += w[j] * w[j] * p.L(i)(j, j) / dn;
    }
  }
  e_b /= static_cast<double>(n);
  r.E_Cb = e_cb_from(r.E_C, p);

  // With one coordinate per client the scaled heterogeneous sketch gives
  // C_i L_i C_i = m e_j e_j^T, so B = I in every realization.
  const bool one_coord_per_client = layout == PermLayout::kMultiset || d == n;
  if (kind.tag == SketchTag::kScaledPermHet && one_coord_per_client) {
    r.E_B = SymMatrix::identity(d);
    r.E_BLB = p.L_bar();
    return r;
  }
  r.E_B = SymMatrix(e_b);

  if (layout == PermLayout::kBlock && d == n) {
    // B is diagonal with B_aa = beta_{i}(a) for the client i holding a.
    Matrix beta(n, d);
    for (int i = 0; i < n; ++i) {
      for (int a = 0; a < d; ++a) {
        const double w = perm_weight(kind, p, i, a);
        beta(i, a) = w * w * p.L(i)(a, a) / n;
      }
    }
    const Vector col_sum = beta.colwise().sum().transpose();
    const Matrix cross = beta.transpose() * beta;  // sum_i beta_i(a) beta_i(b)
    Matrix second(d, d);
    for (int b = 0; b < d; ++b) {
      for (int a = 0; a < d; ++a) {
        if (a == b) {
          second(a, b) = cross(a, a) / n;
        } else {
          second(a, b) = (col_sum[a] * col_sum[b] - cross(a, b)) / (n * (n - 1.0));
        }
      }
    }
    r.E_BLB = SymMatrix(l_bar.cwiseProduct(second));
  } else if (layout == PermLayout::kMultiset && kind.tag == SketchTag::kPermMultiset &&
             p.homogeneous()) {
    // Every coordinate is held by exactly q clients: B = Diag(L) always.
    const Matrix diag = p.D(0).diag().asDiagonal();
    r.E_BLB = SymMatrix(diag * l_bar * diag);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Enumeration
// ---------------------------------------------------------------------------

namespace {

std::uint64_t sat_mul(std::uint64_t a, std::uint64_t b) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) {
    return std::numeric_limits<std::uint64_t>::max();
  }
  return a * b;
}

std::uint64_t factorial(int k) {
  std::uint64_t out = 1;
  for (int i = 2; i <= k; ++i) out = sat_mul(out, static_cast<std::uint64_t>(i));
  return out;
}

std::uint64_t binomial(int n, int k) {
  std::uint64_t out = 1;
  for (int i = 1; i <= k; ++i) {
    const std::uint64_t next = sat_mul(out, static_cast<std::uint64_t>(n - k + i));
    if (next == std::numeric_limits<std::uint64_t>::max()) return next;
    out = next / static_cast<std::uint64_t>(i);
  }
  return out;
}

std::uint64_t sat_pow(std::uint64_t base, int exp) {
  std::uint64_t out = 1;
  for (int i = 0; i < exp; ++i) out = sat_mul(out, base);
  return out;
}

// Multiset permutation count n! / (q!)^d, computed without overflow for the
// sizes the enumerator accepts.
std::uint64_t multiset_count(int n, int d) {
  const int q = n / d;
  std::uint64_t out = 1;
  int remaining = n;
  for (int j = 0; j < d; ++j) {
    out = sat_mul(out, binomial(remaining, q));
    remaining -= q;
  }
  return out;
}

std::vector<std::vector<int>> all_subsets(int d, int q) {
  std::vector<std::vector<int>> out;
  std::vector<int> idx(static_cast<std::size_t>(q));
  std::iota(idx.begin(), idx.end(), 0);
  for (;;) {
    out.push_back(idx);
    int k = q - 1;
    while (k >= 0 && idx[static_cast<std::size_t>(k)] == d - q + k) --k;
    if (k < 0) break;
    ++idx[static_cast<std::size_t>(k)];
    for (int m = k + 1; m < q; ++m) {
      idx[static_cast<std::size_t>(m)] = idx[static_cast<std::size_t>(m - 1)] + 1;
    }
  }
  return out;
}

}  // namespace

std::uint64_t outcome_count(const SketchKind& kind, int n, int d) {
  validate_shape(kind, n, d);
  switch (kind.tag) {
    case SketchTag::kIdentity: return 1;
    case SketchTag::kRandQ: return sat_pow(binomial(d, kind.q), n);
    case SketchTag::kBernoulli:
      return static_cast<std::uint64_t>(n) * d >= 64 ? std::numeric_limits<std::uint64_t>::max()
                                                     : (std::uint64_t{1} << (n * d));
    default:
      return perm_layout(kind, n, d) == PermLayout::kBlock ? factorial(d) : multiset_count(n, d);
  }
}

void for_each_outcome(const SketchKind& kind, const QuadraticProblem& p,
                      const std::function<void(const SketchSample&, double)>& visit,
                      std::uint64_t budget) {
  const int n = p.n();
  const int d = p.d();
  const std::uint64_t count = outcome_count(kind, n, d);
  if (count > budget) {
    throw Error(Errc::kTooLarge, kind.name() + " with n=" + std::to_string(n) + ", d=" +
                                     std::to_string(d) + " has more than " +
                                     std::to_string(budget) + " joint outcomes");
  }
  if (kind.tag == SketchTag::kScaledPermHet) require_positive_diagonals(p);

  switch (kind.tag) {
    case SketchTag::kIdentity:
      visit(identity_sample(kind, n, d), 1.0);
      return;
    case SketchTag::kRandQ: {
      const auto subsets = all_subsets(d, kind.q);
      const double weight = static_cast<double>(d) / kind.q;
      const double prob = 1.0 / static_cast<double>(count);
      std::vector<std::size_t> odometer(static_cast<std::size_t>(n), 0);
      for (;;) {
        SketchSample s{kind, n, d, {}, {}};
        for (int i = 0; i < n; ++i) {
          s.per_client.push_back(subset_entries(subsets[odometer[static_cast<std::size_t>(i)]], weight));
        }
        visit(s, prob);
        int k = n - 1;
        while (k >= 0 && ++odometer[static_cast<std::size_t>(k)] == subsets.size()) {
          odometer[static_cast<std::size_t>(k)] = 0;
          --k;
        }
        if (k < 0) return;
      }
    }
    case SketchTag::kBernoulli: {
      const double weight = 1.0 / kind.p;
      for (std::uint64_t mask = 0; mask < count; ++mask) {
        SketchSample s{kind, n, d, {}, {}};
        double prob = 1.0;
        for (int i = 0; i < n; ++i) {
          std::vector<SketchEntry> entries;
          for (int j = 0; j < d; ++j) {
            if ((mask >> (i * d + j)) & 1U) {
              entries.push_back({j, weight});
              prob *= kind.p;
            } else {
              prob *= 1.0 - kind.p;
            }
          }
          s.per_client.push_back(std::move(entries));
        }
        if (prob > 0.0) visit(s, prob);
      }
      return;
    }
    default: {
      std::vector<int> arr;
      if (perm_layout(kind, n, d) == PermLayout::kBlock) {
        arr.resize(static_cast<std::size_t>(d));
        std::iota(arr.begin(), arr.end(), 0);
      } else {
        arr = multiset_base(n, d);
      }
      // Every distinct arrangement is equally likely under Fisher-Yates.
      const double prob = 1.0 / static_cast<double>(count);
      do {
        visit(from_arrangement(kind, p, arr), prob);
      } while (std::next_permutation(arr.begin(), arr.end()));
      return;
    }
  }
}

ExpectationReport enumerate_expectation(const SketchKind& kind, const QuadraticProblem& p,
                                        std::uint64_t budget) {
  const int n = p.n();
  const int d = p.d();
  const Matrix& l_bar = p.L_bar().mat();
  Matrix e_b = Matrix::Zero(d, d);
  Matrix e_blb = Matrix::Zero(d, d);
  Vector e_cb = Vector::Zero(d);
  std::vector<Vector> e_c(static_cast<std::size_t>(n), Vector::Zero(d));
  std::uint64_t visited = 0;

  for_each_outcome(
      kind, p,
      [&](const SketchSample& s, double prob) {
        const Matrix b = realized_B(s, p).mat();
        e_b += prob * b;
        e_blb += prob * (b * l_bar * b);
        e_cb += prob * realized_Cb(s, p);
        for (int i = 0; i < n; ++i) {
          for (const auto& e : s.per_client[static_cast<std::size_t>(i)]) {
            e_c[static_cast<std::size_t>(i)][e.index] += prob * e.weight;
          }
        }
        ++visited;
      },
      budget);

  ExpectationReport r;
  r.E_B = SymMatrix(e_b);
  r.E_BLB = SymMatrix(e_blb);
  r.E_Cb = std::move(e_cb);
  r.E_C = std::move(e_c);
  r.method = ExpectationMethod::kEnumeration;
  r.samples = visited;
  return r;
}

ExpectationReport monte_carlo_expectation(const SketchKind& kind, const QuadraticProblem& p,
                                          std::uint64_t samples, Rng& rng) {
  if (samples < 1) throw Error(Errc::kConfigInvalid, "Monte Carlo needs at least one sample");
  const int n = p.n();
  const int d = p.d();
  const Matrix& l_bar = p.L_bar().mat();
  // Welford updates for B and C_bar b; plain running means for the rest.
  Matrix mean_b = Matrix::Zero(d, d);
  Matrix m2_b = Matrix::Zero(d, d);
  Vector mean_cb = Vector::Zero(d);
  Vector m2_cb = Vector::Zero(d);
  Matrix mean_blb = Matrix::Zero(d, d);
  std::vector<Vector> mean_c(static_cast<std::size_t>(n), Vector::Zero(d));

  for (std::uint64_t t = 1; t <= samples; ++t) {
    const SketchSample s = sample(kind, p, rng);
    const Matrix b = realized_B(s, p).mat();
    const Vector cb = realized_Cb(s, p);
    const double inv_t = 1.0 / static_cast<double>(t);

    const Matrix delta_b = b - mean_b;
    mean_b += delta_b * inv_t;
    m2_b += delta_b.cwiseProduct(b - mean_b);
    const Vector delta_cb = cb - mean_cb;
    mean_cb += delta_cb * inv_t;
    m2_cb += delta_cb.cwiseProduct(cb - mean_cb);
    mean_blb += (b * l_bar * b - mean_blb) * inv_t;
    for (int i = 0; i < n; ++i) {
      Vector ci = Vector::Zero(d);
      for (const auto& e : s.per_client[static_cast<std::size_t>(i)]) ci[e.index] = e.weight;
      mean_c[static_cast<std::size_t>(i)] += (ci - mean_c[static_cast<std::size_t>(i)]) * inv_t;
    }
  }

  ExpectationReport r;
  r.E_B = SymMatrix(mean_b);
  r.E_BLB = SymMatrix(mean_blb);
  r.E_Cb = mean_cb;
  r.E_C = std::move(mean_c);
  r.method = ExpectationMethod::kMonteCarlo;
  r.samples = samples;
  const auto count = static_cast<double>(samples);
  if (samples > 1) {
    r.se_B = (m2_b / (count - 1.0) / count).cwiseSqrt();
    r.se_Cb = (m2_cb / (count - 1.0) / count).cwiseSqrt();
  } else {
    r.se_B = Matrix::Zero(d, d);
    r.se_Cb = Vector::Zero(d);
  }
  return r;
}

ExpectationReport resolve_expectation(const SketchKind& kind, const QuadraticProblem& p,
                                      bool need_blb, const ExpectationPolicy& policy) {
  try {
    ExpectationReport closed = expected_B(kind, p);
    if (!need_blb || closed.E_BLB) return closed;
  } catch (const Error& e) {
    if (e.code() != Errc::kNoClosedForm) throw;
  }
  if (outcome_count(kind, p.n(), p.d()) <= policy.budget) {
    return enumerate_expectation(kind, p, policy.budget);
  }
  if (policy.mc_samples > 0) {
    Rng rng(policy.mc_seed);
    return monte_carlo_expectation(kind, p, policy.mc_samples, rng);
  }
  throw Error(Errc::kNoExpectation, "no closed form for " + kind.name() +
                                        ", enumeration too large, and Monte Carlo disabled");
}

}  // namespace istlab

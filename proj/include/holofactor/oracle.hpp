// Copyright (c) 2026, The holofactor Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Ground truth: query synthesis and exhaustive search over all M^F bindings.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "holofactor/rng.hpp"
#include "holofactor/vsa.hpp"

namespace holofactor {

/// Refusal of an oversized exhaustive search.
class BudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct QueryInstance {
  Hypervector product;
  std::vector<std::size_t> truth;
  std::vector<std::uint64_t> codebook_seeds;
  double corruption = 0.0;  // fraction of sign-flipped elements
};

/// Binds the selected codevectors and flips round(corruption * D) distinct,
/// uniformly chosen elements.
inline QueryInstance make_query(std::span<const Codebook> codebooks, std::span<const std::size_t> truth,
                                double corruption, Rng& rng) {
  if (codebooks.empty() || truth.size() != codebooks.size()) {
    throw std::invalid_argument("make_query: need one truth index per codebook");
  }
  if (!(corruption >= 0.0 && corruption <= 0.5)) {
    throw std::invalid_argument("make_query: corruption must lie in [0, 0.5]");
  }
  const std::size_t dim = codebooks.front().dim();
  std::vector<std::int8_t> p(dim, 1);
  QueryInstance q;
  for (std::size_t f = 0; f < codebooks.size(); ++f) {
    if (truth[f] >= codebooks[f].size()) {
      throw std::invalid_argument("make_query: index " + std::to_string(truth[f]) +
                                  " out of range for factor " + std::to_string(f));
    }
    detail::require_same_dim(codebooks[f].dim(), dim, "make_query");
    const auto r = codebooks[f].row(truth[f]);
    for (std::size_t d = 0; d < dim; ++d) p[d] = static_cast<std::int8_t>(p[d] * r[d]);
    q.codebook_seeds.push_back(codebooks[f].seed());
  }
  const auto flips = static_cast<std::size_t>(std::llround(corruption * static_cast<double>(dim)));
  if (flips > 0) {
    // Partial Fisher-Yates picks `flips` distinct positions.
    std::vector<std::size_t> idx(dim);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t k = 0; k < flips; ++k) {
      const std::size_t j = k + static_cast<std::size_t>(rng.below(dim - k));
      std::swap(idx[k], idx[j]);
      p[idx[k]] = static_cast<std::int8_t>(-p[idx[k]]);
    }
  }
  q.product = Hypervector(std::move(p));
  q.truth.assign(truth.begin(), truth.end());
  q.corruption = corruption;
  return q;
}

/// Uniform random truth indices followed by make_query.
inline QueryInstance random_query(std::span<const Codebook> codebooks, double corruption, Rng& rng) {
  std::vector<std::size_t> truth;
  for (const auto& cb : codebooks) truth.push_back(static_cast<std::size_t>(rng.below(cb.size())));
  return make_query(codebooks, truth, corruption, rng);
}

struct BruteForceResult {
  std::vector<std::size_t> indices;
  double similarity = 0.0;
  std::uint64_t op_count = 0;  // one D-dimensional dot product per combination
};

inline constexpr std::uint64_t kDefaultBruteForceBudget = 1ULL << 24U;

/// argmax over all M^F combinations of similarity(p, bind(combination)); ties
/// go to the lexicographically smallest index tuple.
inline BruteForceResult brute_force(const Hypervector& p, std::span<const Codebook> codebooks,
                                    std::uint64_t budget = kDefaultBruteForceBudget) {
  if (codebooks.empty()) throw std::invalid_argument("brute_force: no codebooks");
  const std::size_t dim = p.dim();
  unsigned __int128 total = 1;
  for (const auto& cb : codebooks) {
    detail::require_same_dim(cb.dim(), dim, "brute_force");
    total *= cb.size();
    if (total > budget) {
      throw BudgetError("brute_force: search space exceeds budget of " + std::to_string(budget) +
                        " combinations");
    }
  }
  const std::size_t nf = codebooks.size();
  const std::size_t words = detail::words_for(dim);
  std::vector<std::uint64_t> pp(words);
  detail::pack_signs(p.elements(), pp);

  // partial[k] = bits(p) ^ bits(x^1_{i1}) ^ ... ^ bits(x^k_{ik}); binding is XOR on sign bits.
  std::vector<std::vector<std::uint64_t>> partial(nf + 1, std::vector<std::uint64_t>(words));
  partial[0] = pp;
  std::vector<std::size_t> idx(nf, 0);
  BruteForceResult best;
  best.similarity = -2.0;
  std::uint64_t ops = 0;

  auto refresh = [&](std::size_t from) {
    for (std::size_t k = from; k < nf; ++k) {
      const auto r = codebooks[k].packed_row(idx[k]);
      for (std::size_t w = 0; w < words; ++w) partial[k + 1][w] = partial[k][w] ^ r[w];
    }
  };
  refresh(0);
  while (true) {
    std::int64_t mismatches = 0;
    for (std::size_t w = 0; w < words; ++w) mismatches += std::popcount(partial[nf][w]);
    const double sim = static_cast<double>(static_cast<std::int64_t>(dim) - 2 * mismatches) /
                       static_cast<double>(dim);
    ++ops;
    if (sim > best.similarity) {
      best.similarity = sim;
      best.indices = idx;
    }
    // odometer increment, last factor fastest
    std::size_t k = nf;
    while (k > 0) {
      --k;
      if (++idx[k] < codebooks[k].size()) break;
      idx[k] = 0;
      if (k == 0) {
        best.op_count = ops;
        return best;
      }
    }
    refresh(k);
  }
}

}  // namespace holofactor

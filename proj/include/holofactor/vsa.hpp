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

// Bipolar hypervector algebra.
//
// Elements are stored as int8 values in {-1, +1}. Codebooks additionally keep a
// sign-bit packing of every row (bit set <=> element is -1) so that the exact
// similarity search reduces to XOR + popcount:
//
//   <x, c> = D - 2 * popcount(bits(x) ^ bits(c))
//
// The packing is an internal detail; every public result is expressed in ±1 /
// normalized-cosine units and matches the scalar definitions exactly.

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "holofactor/rng.hpp"

namespace holofactor {

using SimilarityVector = std::vector<double>;

class Hypervector {
 public:
  Hypervector() = default;

  explicit Hypervector(std::vector<std::int8_t> elements) : elements_(std::move(elements)) {
    if (elements_.empty()) {
      throw std::invalid_argument("hypervector: dimension must be positive");
    }
    for (const auto e : elements_) {
      if (e != 1 && e != -1) {
        throw std::invalid_argument("hypervector: elements must be -1 or +1");
      }
    }
  }

  Hypervector(std::initializer_list<int> elements)
      : Hypervector(std::vector<std::int8_t>(elements.begin(), elements.end())) {}

  static Hypervector ones(std::size_t dim) {
    return Hypervector(std::vector<std::int8_t>(dim, 1));
  }

  static Hypervector random(std::size_t dim, Rng& rng) {
    std::vector<std::int8_t> e(dim);
    for (auto& v : e) v = rng.coin() ? 1 : -1;
    return Hypervector(std::move(e));
  }

  std::size_t dim() const noexcept { return elements_.size(); }
  std::int8_t operator[](std::size_t i) const { return elements_[i]; }
  std::span<const std::int8_t> elements() const noexcept { return elements_; }

  Hypervector operator-() const {
    auto e = elements_;
    for (auto& v : e) v = static_cast<std::int8_t>(-v);
    return Hypervector(std::move(e));
  }

  friend bool operator==(const Hypervector&, const Hypervector&) = default;

 private:
  std::vector<std::int8_t> elements_;
};

namespace detail {

inline void require_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (" +
                                std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

constexpr std::size_t words_for(std::size_t dim) noexcept { return (dim + 63) / 64; }

inline void pack_signs(std::span<const std::int8_t> x, std::span<std::uint64_t> out) {
  std::fill(out.begin(), out.end(), 0ULL);
  for (std::size_t d = 0; d < x.size(); ++d) {
    if (x[d] < 0) out[d / 64] |= (1ULL << (d % 64));
  }
}

inline std::int64_t packed_dot(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b,
                               std::size_t dim) noexcept {
  std::int64_t mismatches = 0;
  for (std::size_t w = 0; w < a.size(); ++w) mismatches += std::popcount(a[w] ^ b[w]);
  return static_cast<std::int64_t>(dim) - 2 * mismatches;
}

}  // namespace detail

/// M codevectors of a shared dimension D for one factor.
class Codebook {
 public:
  Codebook() = default;

  Codebook(std::vector<Hypervector> vectors, std::size_t label = 0, std::uint64_t seed = 0)
      : label_(label), seed_(seed) {
    if (vectors.empty()) throw std::invalid_argument("codebook: needs at least one codevector");
    size_ = vectors.size();
    dim_ = vectors.front().dim();
    words_ = detail::words_for(dim_);
    elements_.resize(size_ * dim_);
    packed_.resize(size_ * words_);
    for (std::size_t i = 0; i < size_; ++i) {
      detail::require_same_dim(vectors[i].dim(), dim_, "codebook");
      std::copy(vectors[i].elements().begin(), vectors[i].elements().end(),
                elements_.begin() + static_cast<std::ptrdiff_t>(i * dim_));
      detail::pack_signs(row(i), std::span<std::uint64_t>(packed_).subspan(i * words_, words_));
    }
  }

  std::size_t size() const noexcept { return size_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t label() const noexcept { return label_; }
  std::uint64_t seed() const noexcept { return seed_; }

  std::span<const std::int8_t> row(std::size_t i) const {
    return std::span<const std::int8_t>(elements_).subspan(i * dim_, dim_);
  }
  std::span<const std::uint64_t> packed_row(std::size_t i) const {
    return std::span<const std::uint64_t>(packed_).subspan(i * words_, words_);
  }
  Hypervector vector(std::size_t i) const {
    auto r = row(i);
    return Hypervector(std::vector<std::int8_t>(r.begin(), r.end()));
  }
  std::vector<Hypervector> vectors() const {
    std::vector<Hypervector> out;
    out.reserve(size_);
    for (std::size_t i = 0; i < size_; ++i) out.push_back(vector(i));
    return out;
  }

  friend bool operator==(const Codebook& a, const Codebook& b) {
    return a.size_ == b.size_ && a.dim_ == b.dim_ && a.elements_ == b.elements_;
  }

 private:
  std::size_t size_ = 0;
  std::size_t dim_ = 0;
  std::size_t words_ = 0;
  std::size_t label_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<std::int8_t> elements_;
  std::vector<std::uint64_t> packed_;
};

/// M i.i.d. uniform ±1 codevectors of dimension D, reproducible from `seed`.
inline Codebook random_codebook(std::size_t m, std::size_t d, std::uint64_t seed,
                                std::size_t label = 0) {
  if (m == 0 || d == 0) throw std::invalid_argument("random_codebook: M and D must be positive");
  Rng rng(seed);
  std::vector<Hypervector> vectors;
  vectors.reserve(m);
  for (std::size_t i = 0; i < m; ++i) vectors.push_back(Hypervector::random(d, rng));
  return Codebook(std::move(vectors), label, seed);
}

inline Hypervector bind(std::span<const Hypervector> xs) {
  if (xs.empty()) throw std::invalid_argument("bind: empty input");
  std::vector<std::int8_t> out(xs.front().elements().begin(), xs.front().elements().end());
  for (std::size_t k = 1; k < xs.size(); ++k) {
    detail::require_same_dim(xs[k].dim(), out.size(), "bind");
    const auto e = xs[k].elements();
    for (std::size_t d = 0; d < out.size(); ++d) out[d] = static_cast<std::int8_t>(out[d] * e[d]);
  }
  return Hypervector(std::move(out));
}

inline Hypervector bind(std::initializer_list<Hypervector> xs) {
  return bind(std::span<const Hypervector>(xs.begin(), xs.size()));
}

/// Self-inverse in bipolar space: unbind(bind(a, b), a) == b.
inline Hypervector unbind(const Hypervector& p, const Hypervector& x) { return bind({p, x}); }

/// Sign of the element-wise sum; zero sums become a fair ±1 draw from `rng`.
inline Hypervector bundle(std::span<const Hypervector> xs, Rng& rng) {
  if (xs.empty()) throw std::invalid_argument("bundle: empty input");
  const std::size_t dim = xs.front().dim();
  std::vector<int> sum(dim, 0);
  for (const auto& x : xs) {
    detail::require_same_dim(x.dim(), dim, "bundle");
    for (std::size_t d = 0; d < dim; ++d) sum[d] += x[d];
  }
  std::vector<std::int8_t> out(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    if (sum[d] > 0) {
      out[d] = 1;
    } else if (sum[d] < 0) {
      out[d] = -1;
    } else {
      out[d] = rng.coin() ? 1 : -1;
    }
  }
  return Hypervector(std::move(out));
}

/// Cosine similarity <a, b> / D.
inline double similarity(const Hypervector& a, const Hypervector& b) {
  detail::require_same_dim(a.dim(), b.dim(), "similarity");
  std::int64_t dot = 0;
  for (std::size_t d = 0; d < a.dim(); ++d) dot += a[d] * b[d];
  return static_cast<double>(dot) / static_cast<double>(a.dim());
}

/// Exact similarity of `x` against every codevector.
inline SimilarityVector mvm(const Codebook& cb, const Hypervector& x) {
  detail::require_same_dim(x.dim(), cb.dim(), "mvm");
  std::vector<std::uint64_t> packed(detail::words_for(x.dim()));
  detail::pack_signs(x.elements(), packed);
  SimilarityVector out(cb.size());
  for (std::size_t i = 0; i < cb.size(); ++i) {
    const auto dot = detail::packed_dot(packed, cb.packed_row(i), cb.dim());
    out[i] = static_cast<double>(dot) / static_cast<double>(cb.dim());
  }
  return out;
}

/// Pre-sign projection out[d] = sum_i w[i] * cb[i][d].
inline std::vector<double> transposed_mvm(const Codebook& cb, std::span<const double> w) {
  if (w.size() != cb.size()) {
    throw std::invalid_argument("transposed_mvm: weight length " + std::to_string(w.size()) +
                                " != codebook size " + std::to_string(cb.size()));
  }
  std::vector<double> out(cb.dim(), 0.0);
  for (std::size_t i = 0; i < cb.size(); ++i) {
    if (w[i] == 0.0) continue;
    const auto r = cb.row(i);
    for (std::size_t d = 0; d < out.size(); ++d) out[d] += w[i] * r[d];
  }
  return out;
}

/// Element-wise sign; exact zeros become a fair ±1 draw from `rng`.
template <typename Real>
inline Hypervector bipolarize(std::span<const Real> v, Rng& rng) {
  std::vector<std::int8_t> out(v.size());
  for (std::size_t d = 0; d < v.size(); ++d) {
    if (v[d] > 0) {
      out[d] = 1;
    } else if (v[d] < 0) {
      out[d] = -1;
    } else {
      out[d] = rng.coin() ? 1 : -1;
    }
  }
  return Hypervector(std::move(out));
}

inline Hypervector bipolarize(const std::vector<double>& v, Rng& rng) {
  return bipolarize(std::span<const double>(v), rng);
}

/// Rotate right by k (mod D): [a, b, c, d] shifted by 1 is [d, a, b, c].
template <typename T>
inline void rotate_right(std::span<const T> in, std::span<T> out, std::ptrdiff_t k) {
  const auto n = static_cast<std::ptrdiff_t>(in.size());
  const std::ptrdiff_t s = ((k % n) + n) % n;
  for (std::ptrdiff_t d = 0; d < n; ++d) out[static_cast<std::size_t>((d + s) % n)] = in[static_cast<std::size_t>(d)];
}

inline Hypervector circular_shift(const Hypervector& x, std::ptrdiff_t k) {
  std::vector<std::int8_t> out(x.dim());
  rotate_right<std::int8_t>(x.elements(), out, k);
  return Hypervector(std::move(out));
}

/// Index of the largest value; ties resolve to the lowest index.
inline std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace holofactor

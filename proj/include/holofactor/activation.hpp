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

// Activations applied between the similarity search and the projection.
//
// The sparse activations keep only "winning" similarities. A fixed threshold T
// approximates a top-K selection: random similarities are modelled as
// N(0, 1/D), so the threshold that lets K of M values through on average is
// the (1 - K/M) quantile of that distribution.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

#include "holofactor/vsa.hpp"

namespace holofactor {

enum class ActivationKind { identity, top_k, threshold };

inline const char* to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::identity: return "identity";
    case ActivationKind::top_k: return "top_k";
    case ActivationKind::threshold: return "threshold";
  }
  return "?";
}

inline ActivationKind activation_kind_from_string(const std::string& s) {
  if (s == "identity") return ActivationKind::identity;
  if (s == "top_k" || s == "topk") return ActivationKind::top_k;
  if (s == "threshold") return ActivationKind::threshold;
  throw std::invalid_argument("unknown activation kind '" + s + "'");
}

struct ActivationSpec {
  ActivationKind kind = ActivationKind::identity;
  double k = 1.0;  // expected activated count; integral for top_k
  double t = 0.0;  // normalized similarity threshold

  static ActivationSpec identity() { return {}; }
  static ActivationSpec top_k(std::size_t k) {
    return {ActivationKind::top_k, static_cast<double>(k), 0.0};
  }
  static ActivationSpec threshold(double t) { return {ActivationKind::threshold, 0.0, t}; }

  void validate() const {
    if (kind == ActivationKind::top_k && (k < 1.0 || std::floor(k) != k)) {
      throw std::invalid_argument("top_k activation needs an integer K >= 1");
    }
    if (kind == ActivationKind::threshold && !std::isfinite(t)) {
      throw std::invalid_argument("threshold activation needs a finite T");
    }
  }

  friend bool operator==(const ActivationSpec&, const ActivationSpec&) = default;
};

inline SimilarityVector identity(std::span<const double> a) { return {a.begin(), a.end()}; }

/// Keeps the K largest strictly positive entries; ties at rank K go to the
/// lowest index.
inline SimilarityVector top_k(std::span<const double> a, std::size_t k) {
  SimilarityVector out(a.size(), 0.0);
  std::vector<std::size_t> positive;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > 0.0) positive.push_back(i);
  }
  const std::size_t keep = std::min(k, positive.size());
  std::partial_sort(positive.begin(), positive.begin() + static_cast<std::ptrdiff_t>(keep),
                    positive.end(), [&](std::size_t x, std::size_t y) {
                      return a[x] > a[y] || (a[x] == a[y] && x < y);
                    });
  for (std::size_t j = 0; j < keep; ++j) out[positive[j]] = a[positive[j]];
  return out;
}

/// Keeps entries strictly above T.
inline SimilarityVector threshold(std::span<const double> a, double t) {
  SimilarityVector out(a.size(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > t) out[i] = a[i];
  }
  return out;
}

/// In-place variant used by the factorizer loop.
inline void apply_activation(const ActivationSpec& spec, std::span<const double> in,
                             std::span<double> out) {
  switch (spec.kind) {
    case ActivationKind::identity:
      std::copy(in.begin(), in.end(), out.begin());
      return;
    case ActivationKind::threshold:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > spec.t ? in[i] : 0.0;
      return;
    case ActivationKind::top_k: {
      const auto r = top_k(in, static_cast<std::size_t>(spec.k));
      std::copy(r.begin(), r.end(), out.begin());
      return;
    }
  }
}

inline SimilarityVector activate(const ActivationSpec& spec, std::span<const double> a) {
  SimilarityVector out(a.size());
  apply_activation(spec, a, out);
  return out;
}

/// Standard normal CDF.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Standard normal quantile, Phi^{-1}(p).
inline double inverse_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("inverse_normal_cdf: p must lie in (0, 1)");
  }
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

/// Threshold that, for random similarities ~ N(0, 1/D), lets K of M values
/// through on average.
inline double k_to_threshold(double k, std::size_t m, std::size_t d) {
  if (!(k > 0.0) || !(k < static_cast<double>(m))) {
    throw std::invalid_argument("k_to_threshold: need 0 < K < M (K=" + std::to_string(k) +
                                ", M=" + std::to_string(m) + ")");
  }
  if (d == 0) throw std::invalid_argument("k_to_threshold: D must be positive");
  return inverse_normal_cdf(1.0 - k / static_cast<double>(m)) / std::sqrt(static_cast<double>(d));
}

/// Inverse of k_to_threshold: expected number of N(0, 1/D) values above T.
inline double threshold_to_k(double t, std::size_t m, std::size_t d) {
  return static_cast<double>(m) * (1.0 - normal_cdf(t * std::sqrt(static_cast<double>(d))));
}

}  // namespace holofactor

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

// Stochastic matrix-vector multiply backends.
//
//  * exact              noise-free similarity search and projection
//  * additive_gaussian  exact result + i.i.d. N(0, sigma_out^2) on every output
//                       (M sources on the similarity vector, D on the projection)
//  * pcm                phase-change-memory crossbar. Each bipolar weight is
//                       stored on one device of a differential pair:
//
//      G_T0 = G_tar + n_p                    n_p  ~ N(0, sigma_p^2), frozen
//      G(t) = G_T0 (t / T0)^(-nu_dev) + n_r  nu_dev ~ N(nu, sigma_nu^2), frozen
//                                            n_r  ~ N(0, sigma_r^2), every read
//
//    and the effective weight of a cell is (G_pos(t) - G_neg(t)) / G_tar.
//
// PCM similarities are divided by G_tar * D, so every backend reports
// normalized cosine units and thresholds carry over between backends.
//
// Read noise enters every output linearly, so for the hot loop it is applied as
// one aggregated Gaussian per output with the exact same distribution as the
// per-device sum (ReadNoiseModel::aggregated). ReadNoiseModel::per_device
// samples every device on every read and serves as the reference path.

#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "holofactor/rng.hpp"
#include "holofactor/vsa.hpp"

namespace holofactor {

/// Device model parameters. Defaults are the values fitted on 65,536 devices.
struct PcmParams {
  double g_tar_us = 5.0;
  double t0_s = 60.0;
  double sigma_p_us = 1.1636;
  double sigma_r_us = 0.3951;
  double sigma_nu = 0.0907;
  double nu = 0.0428;

  void validate() const {
    if (!(g_tar_us > 0.0)) throw std::invalid_argument("pcm: g_tar_us must be positive");
    if (!(t0_s > 0.0)) throw std::invalid_argument("pcm: t0_s must be positive");
    if (sigma_p_us < 0.0 || sigma_r_us < 0.0 || sigma_nu < 0.0) {
      throw std::invalid_argument("pcm: standard deviations must be non-negative");
    }
  }

  /// Median drift factor (t / T0)^(-nu).
  double drift_factor(double t_s) const { return std::pow(t_s / t0_s, -nu); }

  friend bool operator==(const PcmParams&, const PcmParams&) = default;
};

/// Base parameters with sigma_p and sigma_r multiplied by `scale`. The read to
/// programming ratio is preserved; the drift distribution is untouched.
inline PcmParams scaled_pcm_params(double scale, const PcmParams& base = {}) {
  if (scale < 0.0) throw std::invalid_argument("scaled_pcm_params: scale must be >= 0");
  PcmParams p = base;
  p.sigma_p_us *= scale;
  p.sigma_r_us *= scale;
  return p;
}

/// Aggregated conductance noise of a programmed device at read time t, in uS:
/// the spread of G(t) around its median-drift value G_tar (t/T0)^(-nu) when
/// drift variability is excluded,
///
///   sigma_total = sqrt((sigma_p (t/T0)^(-nu))^2 + sigma_r^2).
///
/// It is linear in the sweep scale, which is what the noise sweeps use as axis.
inline double aggregated_sigma(const PcmParams& p, double read_time_s) {
  const double prog = p.sigma_p_us * p.drift_factor(read_time_s);
  return std::sqrt(prog * prog + p.sigma_r_us * p.sigma_r_us);
}

/// Scale for scaled_pcm_params that yields the requested aggregated sigma.
inline double scale_for_aggregated_sigma(double sigma_total_us, const PcmParams& base,
                                         double read_time_s) {
  const double unit = aggregated_sigma(base, read_time_s);
  if (!(unit > 0.0)) throw std::invalid_argument("scale_for_aggregated_sigma: zero base noise");
  return sigma_total_us / unit;
}

enum class ReadNoiseModel { aggregated, per_device };

struct ExactNoise {
  friend bool operator==(const ExactNoise&, const ExactNoise&) = default;
};

struct AdditiveGaussianNoise {
  double sigma_out = 0.0;  // normalized similarity units
  friend bool operator==(const AdditiveGaussianNoise&, const AdditiveGaussianNoise&) = default;
};

struct PcmNoise {
  PcmParams params{};
  double read_time_s = 3600.0;
  // true: one programmed array backs both directions; false: the projection
  // uses an independently programmed array (two crossbars).
  bool shared_array = false;
  ReadNoiseModel read_model = ReadNoiseModel::aggregated;
  friend bool operator==(const PcmNoise&, const PcmNoise&) = default;
};

using NoiseBackend = std::variant<ExactNoise, AdditiveGaussianNoise, PcmNoise>;

inline void validate(const NoiseBackend& backend) {
  if (const auto* a = std::get_if<AdditiveGaussianNoise>(&backend)) {
    if (!(a->sigma_out >= 0.0)) throw std::invalid_argument("additive noise: sigma_out must be >= 0");
  } else if (const auto* p = std::get_if<PcmNoise>(&backend)) {
    p->params.validate();
    if (!(p->read_time_s >= p->params.t0_s)) {
      throw std::invalid_argument("pcm: read_time_s must be >= t0_s");
    }
  }
}

/// Dense row-major real matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

/// Post-programming device state of one crossbar holding an M x D codebook.
/// Immutable once programmed.
class ProgrammedArray {
 public:
  ProgrammedArray(std::size_t rows, std::size_t cols, PcmParams params, std::vector<std::int8_t> signs,
                  std::vector<double> g_t0, std::vector<double> exponents)
      : rows_(rows), cols_(cols), params_(params), signs_(std::move(signs)),
        g_t0_(std::move(g_t0)), exponents_(std::move(exponents)) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  const PcmParams& params() const noexcept { return params_; }

  std::int8_t weight(std::size_t i, std::size_t d) const { return signs_[i * cols_ + d]; }
  /// Conductance of the programmed device of cell (i, d).
  double programmed_g_t0(std::size_t i, std::size_t d) const { return g_t0_[i * cols_ + d]; }
  double g_t0_positive(std::size_t i, std::size_t d) const {
    return weight(i, d) > 0 ? programmed_g_t0(i, d) : 0.0;
  }
  double g_t0_negative(std::size_t i, std::size_t d) const {
    return weight(i, d) < 0 ? programmed_g_t0(i, d) : 0.0;
  }
  double drift_exponent(std::size_t i, std::size_t d) const { return exponents_[i * cols_ + d]; }

  /// Drifted conductance of the programmed device without read noise.
  double drifted(std::size_t i, std::size_t d, double t_s) const {
    const std::size_t k = i * cols_ + d;
    return g_t0_[k] * std::pow(t_s / params_.t0_s, -exponents_[k]);
  }

  /// Noise-free part of the effective weight at time t: sign * G_T0 * drift / G_tar.
  Matrix static_weights(double t_s) const {
    Matrix w(rows_, cols_);
    for (std::size_t i = 0; i < rows_; ++i) {
      for (std::size_t d = 0; d < cols_; ++d) {
        w(i, d) = weight(i, d) * drifted(i, d, t_s) / params_.g_tar_us;
      }
    }
    return w;
  }

 private:
  std::size_t rows_;
  std::size_t cols_;
  PcmParams params_;
  std::vector<std::int8_t> signs_;
  std::vector<double> g_t0_;
  std::vector<double> exponents_;
};

/// Programs every cell of `cb`: the device on the weight's side gets
/// G_tar + N(0, sigma_p^2) (clamped at 0), the other side stays at 0; each
/// programmed device draws its drift exponent from N(nu, sigma_nu^2).
inline ProgrammedArray program_array(const Codebook& cb, const PcmParams& params, Rng& rng) {
  params.validate();
  const std::size_t n = cb.size() * cb.dim();
  std::vector<std::int8_t> signs(n);
  std::vector<double> g(n);
  std::vector<double> e(n);
  for (std::size_t i = 0; i < cb.size(); ++i) {
    const auto r = cb.row(i);
    for (std::size_t d = 0; d < cb.dim(); ++d) {
      const std::size_t k = i * cb.dim() + d;
      signs[k] = r[d];
      double gk = params.g_tar_us;
      if (params.sigma_p_us > 0.0) gk += params.sigma_p_us * rng.normal();
      g[k] = gk < 0.0 ? 0.0 : gk;
      e[k] = params.nu;
      if (params.sigma_nu > 0.0) e[k] += params.sigma_nu * rng.normal();
    }
  }
  return ProgrammedArray(cb.size(), cb.dim(), params, std::move(signs), std::move(g), std::move(e));
}

/// Effective weights (G_pos(t) - G_neg(t)) / G_tar with fresh read noise on
/// every programmed device. Unprogrammed devices read as exactly 0.
inline Matrix read_effective_weights(const ProgrammedArray& arr, double t_s, Rng& rng) {
  const auto& p = arr.params();
  if (!(t_s >= p.t0_s)) throw std::invalid_argument("read_effective_weights: t must be >= T0");
  Matrix w(arr.rows(), arr.cols());
  for (std::size_t i = 0; i < arr.rows(); ++i) {
    for (std::size_t d = 0; d < arr.cols(); ++d) {
      double g = arr.drifted(i, d, t_s);
      if (p.sigma_r_us > 0.0) g += p.sigma_r_us * rng.normal();
      w(i, d) = arr.weight(i, d) * g / p.g_tar_us;
    }
  }
  return w;
}

/// One crossbar pair serving the similarity search (MVM) and projection
/// (transposed MVM) of one codebook. Holds only immutable state, so a single
/// instance can be shared by concurrent trials that own their Rng.
class Crossbar {
 public:
  static Crossbar exact(const Codebook& cb) { return Crossbar(cb, Kind::exact, 0.0); }

  static Crossbar additive(const Codebook& cb, double sigma_out) {
    if (!(sigma_out >= 0.0)) throw std::invalid_argument("additive noise: sigma_out must be >= 0");
    return Crossbar(cb, Kind::additive, sigma_out);
  }

  /// `similarity_array` backs the MVM, `projection_array` the transposed MVM
  /// (pass the same array twice for a single shared crossbar).
  static Crossbar pcm(std::shared_ptr<const ProgrammedArray> similarity_array,
                      std::shared_ptr<const ProgrammedArray> projection_array, double read_time_s,
                      ReadNoiseModel model = ReadNoiseModel::aggregated) {
    if (similarity_array->rows() != projection_array->rows() ||
        similarity_array->cols() != projection_array->cols()) {
      throw std::invalid_argument("crossbar: array shapes differ");
    }
    const auto& p = similarity_array->params();
    if (!(read_time_s >= p.t0_s)) throw std::invalid_argument("crossbar: read time must be >= T0");
    Crossbar c;
    c.kind_ = Kind::pcm;
    c.size_ = similarity_array->rows();
    c.dim_ = similarity_array->cols();
    c.read_time_s_ = read_time_s;
    c.model_ = model;
    c.fwd_ = similarity_array;
    c.bwd_ = projection_array;
    const Matrix fw = similarity_array->static_weights(read_time_s);
    c.fwd_t_.resize(c.size_ * c.dim_);
    for (std::size_t i = 0; i < c.size_; ++i) {
      for (std::size_t d = 0; d < c.dim_; ++d) c.fwd_t_[d * c.size_ + i] = static_cast<float>(fw(i, d));
    }
    c.bwd_rows_ = projection_array->static_weights(read_time_s).data;
    c.fwd_read_sigma_ = p.sigma_r_us / p.g_tar_us;
    c.bwd_read_sigma_ = projection_array->params().sigma_r_us / projection_array->params().g_tar_us;
    return c;
  }

  std::size_t size() const noexcept { return size_; }
  std::size_t dim() const noexcept { return dim_; }

  /// Normalized similarities of bipolar `x` against all stored codevectors.
  void similarities(std::span<const std::int8_t> x, std::span<double> out, Rng& rng) const {
    detail::require_same_dim(x.size(), dim_, "mvm");
    detail::require_same_dim(out.size(), size_, "mvm output");
    const double inv_d = 1.0 / static_cast<double>(dim_);
    switch (kind_) {
      case Kind::exact:
      case Kind::additive: {
        thread_local std::vector<std::uint64_t> packed_x;
        packed_x.resize(detail::words_for(dim_));
        detail::pack_signs(x, packed_x);
        for (std::size_t i = 0; i < size_; ++i) {
          const auto dot = detail::packed_dot(packed_x, packed_row(i), dim_);
          out[i] = static_cast<double>(dot) / static_cast<double>(dim_);
        }
        if (kind_ == Kind::additive && sigma_out_ > 0.0) {
          for (auto& v : out) v += sigma_out_ * rng.normal();
        }
        return;
      }
      case Kind::pcm: {
        if (model_ == ReadNoiseModel::per_device) {
          const Matrix w = read_effective_weights(*fwd_, read_time_s_, rng);
          for (std::size_t i = 0; i < size_; ++i) {
            double acc = 0.0;
            for (std::size_t d = 0; d < dim_; ++d) acc += x[d] * w(i, d);
            out[i] = acc * inv_d;
          }
          return;
        }
        thread_local std::vector<float> scratch;
        scratch.assign(size_, 0.0F);
        float* __restrict acc = scratch.data();
        for (std::size_t d = 0; d < dim_; ++d) {
          const float* __restrict col = fwd_t_.data() + d * size_;
          const auto sign = static_cast<float>(x[d]);
          for (std::size_t i = 0; i < size_; ++i) acc[i] += sign * col[i];
        }
        for (std::size_t i = 0; i < size_; ++i) out[i] = static_cast<double>(acc[i]) * inv_d;
        if (fwd_read_sigma_ > 0.0) {
          // sum_d x_d n_r / (G_tar D) with x_d = ±1 over D programmed devices
          const double s = fwd_read_sigma_ / std::sqrt(static_cast<double>(dim_));
          for (auto& v : out) v += s * rng.normal();
        }
        return;
      }
    }
  }

  /// Pre-sign projection sum_i w[i] * weight[i][d].
  void project(std::span<const double> w, std::span<double> out, Rng& rng) const {
    if (w.size() != size_) throw std::invalid_argument("transposed mvm: weight length mismatch");
    detail::require_same_dim(out.size(), dim_, "transposed mvm output");
    std::fill(out.begin(), out.end(), 0.0);
    if (kind_ == Kind::pcm && model_ == ReadNoiseModel::per_device) {
      const Matrix m = read_effective_weights(*bwd_, read_time_s_, rng);
      for (std::size_t i = 0; i < size_; ++i) {
        if (w[i] == 0.0) continue;
        for (std::size_t d = 0; d < dim_; ++d) out[d] += w[i] * m(i, d);
      }
      return;
    }
    double* o = out.data();
    double norm2 = 0.0;
    for (std::size_t i = 0; i < size_; ++i) {
      if (w[i] == 0.0) continue;
      const double wi = w[i];
      norm2 += wi * wi;
      const double* row = bwd_rows_.data() + i * dim_;
      for (std::size_t d = 0; d < dim_; ++d) o[d] += wi * row[d];
    }
    if (kind_ == Kind::additive && sigma_out_ > 0.0) {
      for (auto& v : out) v += sigma_out_ * rng.normal();
    } else if (kind_ == Kind::pcm && bwd_read_sigma_ > 0.0) {
      // sum_i w_i n_r / G_tar over the M programmed devices of column d
      const double s = bwd_read_sigma_ * std::sqrt(norm2);
      for (auto& v : out) v += s * rng.normal();
    }
  }

 private:
  enum class Kind { exact, additive, pcm };

  Crossbar() = default;

  Crossbar(const Codebook& cb, Kind kind, double sigma_out)
      : kind_(kind), size_(cb.size()), dim_(cb.dim()), sigma_out_(sigma_out) {
    words_ = detail::words_for(dim_);
    packed_.resize(size_ * words_);
    bwd_rows_.resize(size_ * dim_);
    for (std::size_t i = 0; i < size_; ++i) {
      const auto pr = cb.packed_row(i);
      std::copy(pr.begin(), pr.end(), packed_.begin() + static_cast<std::ptrdiff_t>(i * words_));
      const auto r = cb.row(i);
      for (std::size_t d = 0; d < dim_; ++d) bwd_rows_[i * dim_ + d] = r[d];
    }
  }

  std::span<const std::uint64_t> packed_row(std::size_t i) const {
    return std::span<const std::uint64_t>(packed_).subspan(i * words_, words_);
  }

  Kind kind_ = Kind::exact;
  std::size_t size_ = 0;
  std::size_t dim_ = 0;
  std::size_t words_ = 0;
  double sigma_out_ = 0.0;
  double read_time_s_ = 0.0;
  double fwd_read_sigma_ = 0.0;
  double bwd_read_sigma_ = 0.0;
  ReadNoiseModel model_ = ReadNoiseModel::aggregated;
  std::vector<std::uint64_t> packed_;
  std::vector<float> fwd_t_;      // D x M, column d holds weight[.][d]
  std::vector<double> bwd_rows_;  // M x D
  std::shared_ptr<const ProgrammedArray> fwd_;
  std::shared_ptr<const ProgrammedArray> bwd_;
};

/// Programs the arrays a backend needs for `cb` and wraps them in a Crossbar.
/// Programming consumes `programming_rng` only; reads use the caller's stream.
inline Crossbar make_crossbar(const Codebook& cb, const NoiseBackend& backend, Rng& programming_rng) {
  validate(backend);
  if (std::holds_alternative<ExactNoise>(backend)) return Crossbar::exact(cb);
  if (const auto* a = std::get_if<AdditiveGaussianNoise>(&backend)) {
    return Crossbar::additive(cb, a->sigma_out);
  }
  const auto& p = std::get<PcmNoise>(backend);
  auto fwd = std::make_shared<const ProgrammedArray>(program_array(cb, p.params, programming_rng));
  std::shared_ptr<const ProgrammedArray> bwd = fwd;
  if (!p.shared_array) {
    bwd = std::make_shared<const ProgrammedArray>(program_array(cb, p.params, programming_rng));
  }
  return Crossbar::pcm(std::move(fwd), std::move(bwd), p.read_time_s, p.read_model);
}

/// Similarity search through a codebook-backed backend (exact or additive).
inline SimilarityVector noisy_mvm(const Codebook& cb, const Hypervector& x, const NoiseBackend& backend,
                                  Rng& rng) {
  if (std::holds_alternative<PcmNoise>(backend)) {
    throw std::invalid_argument("noisy_mvm: pcm backend needs a programmed array");
  }
  Rng unused(0);
  const Crossbar c = make_crossbar(cb, backend, unused);
  SimilarityVector out(cb.size());
  c.similarities(x.elements(), out, rng);
  return out;
}

/// Similarity search on a programmed array with per-device read noise.
inline SimilarityVector noisy_mvm(const ProgrammedArray& arr, const Hypervector& x, double read_time_s,
                                  Rng& rng) {
  detail::require_same_dim(x.dim(), arr.cols(), "noisy_mvm");
  const Matrix w = read_effective_weights(arr, read_time_s, rng);
  SimilarityVector out(arr.rows(), 0.0);
  for (std::size_t i = 0; i < arr.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t d = 0; d < arr.cols(); ++d) acc += x[d] * w(i, d);
    out[i] = acc / static_cast<double>(arr.cols());
  }
  return out;
}

inline std::vector<double> noisy_transposed_mvm(const Codebook& cb, std::span<const double> w,
                                                const NoiseBackend& backend, Rng& rng) {
  if (std::holds_alternative<PcmNoise>(backend)) {
    throw std::invalid_argument("noisy_transposed_mvm: pcm backend needs a programmed array");
  }
  Rng unused(0);
  const Crossbar c = make_crossbar(cb, backend, unused);
  std::vector<double> out(cb.dim());
  c.project(w, out, rng);
  return out;
}

inline std::vector<double> noisy_transposed_mvm(const ProgrammedArray& arr, std::span<const double> w,
                                                double read_time_s, Rng& rng) {
  if (w.size() != arr.rows()) throw std::invalid_argument("noisy_transposed_mvm: length mismatch");
  const Matrix m = read_effective_weights(arr, read_time_s, rng);
  std::vector<double> out(arr.cols(), 0.0);
  for (std::size_t i = 0; i < arr.rows(); ++i) {
    if (w[i] == 0.0) continue;
    for (std::size_t d = 0; d < arr.cols(); ++d) out[d] += w[i] * m(i, d);
  }
  return out;
}

}  // namespace holofactor

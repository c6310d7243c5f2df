// Copyright 2026 The iwmm Authors.
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

#ifndef IWMM_AFFINE_ADAPT_HPP
#define IWMM_AFFINE_ADAPT_HPP

#include <iwmm/errors.hpp>
#include <iwmm/estimators.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <utility>
#include <vector>

/**
 * \file
 * \brief Importance-weighted moment-matching affine transforms and their Jacobian bookkeeping.
 *
 * Every map has the form `x -> A (x - c) + t`, where `c` is the unweighted sample mean the map
 * was built around and `t` the weighted mean it moves the sample to. `A` is the identity
 * (T1), a positive diagonal (T2) or `L_w L^{-1}` for lower-triangular Cholesky factors
 * (T3). Inverting a map swaps the roles of the two centers and the two scales.
 */

namespace iwmm {

enum class TransformKind { translation, diagonal, full };

/// Where the weighted marginal variance of T2 is centered.
enum class VarianceCentering {
  unweighted_mean,  ///< around the plain sample mean, as the T2 formula is printed
  weighted_mean,    ///< around the weighted mean, for sensitivity checks
};

/// Invertible affine map with cached log |det J|.
class AffineMap {
 public:
  AffineMap() = default;

  static AffineMap identity(Eigen::Index dim) {
    return translation(Eigen::VectorXd::Zero(dim));
  }

  /// x -> x + shift.
  static AffineMap translation(const Eigen::VectorXd& shift) {
    return translation_about(Eigen::VectorXd::Zero(shift.size()), shift);
  }

  /// x -> x - center + target.
  static AffineMap translation_about(Eigen::VectorXd center, Eigen::VectorXd target) {
    check_same_dim(center, target);
    AffineMap m;
    m.kind_ = TransformKind::translation;
    m.center_ = std::move(center);
    m.target_ = std::move(target);
    return m;
  }

  /// x -> scale o x + shift.
  static AffineMap diagonal(const Eigen::VectorXd& scale, const Eigen::VectorXd& shift) {
    return diagonal_about(scale, Eigen::VectorXd::Zero(shift.size()), shift);
  }

  /// x -> scale o (x - center) + target.
  static AffineMap diagonal_about(Eigen::VectorXd scale, Eigen::VectorXd center,
                                  Eigen::VectorXd target) {
    check_same_dim(center, target);
    check_same_dim(scale, target);
    if (!scale.allFinite() || (scale.array() <= 0.0).any()) {
      throw std::invalid_argument("diagonal scale must be finite and strictly positive");
    }
    AffineMap m;
    m.kind_ = TransformKind::diagonal;
    m.log_det_ = scale.array().log().sum();
    m.scale_ = std::move(scale);
    m.center_ = std::move(center);
    m.target_ = std::move(target);
    return m;
  }

  /// x -> L_target L_source^{-1} (x - center) + target.
  static AffineMap full(Eigen::MatrixXd target_factor, Eigen::MatrixXd source_factor,
                        Eigen::VectorXd center, Eigen::VectorXd target) {
    check_same_dim(center, target);
    const Eigen::Index D = center.size();
    for (const auto* f : {&target_factor, &source_factor}) {
      if (f->rows() != D || f->cols() != D) {
        throw std::invalid_argument("triangular factor has the wrong shape");
      }
      if (!f->allFinite() || (f->diagonal().array() <= 0.0).any()) {
        throw std::invalid_argument("triangular factor needs a strictly positive diagonal");
      }
    }
    AffineMap m;
    m.kind_ = TransformKind::full;
    m.target_factor_ = target_factor.triangularView<Eigen::Lower>();
    m.source_factor_ = source_factor.triangularView<Eigen::Lower>();
    m.log_det_ = m.target_factor_.diagonal().array().log().sum() -
                 m.source_factor_.diagonal().array().log().sum();
    m.center_ = std::move(center);
    m.target_ = std::move(target);
    return m;
  }

  [[nodiscard]] TransformKind kind() const { return kind_; }
  [[nodiscard]] Eigen::Index dim() const { return center_.size(); }
  [[nodiscard]] double log_det_jacobian() const { return log_det_; }
  [[nodiscard]] const Eigen::VectorXd& center() const { return center_; }
  [[nodiscard]] const Eigen::VectorXd& target() const { return target_; }
  [[nodiscard]] const Eigen::VectorXd& scale() const { return scale_; }
  [[nodiscard]] const Eigen::MatrixXd& target_factor() const { return target_factor_; }
  [[nodiscard]] const Eigen::MatrixXd& source_factor() const { return source_factor_; }

  /// Applies the map to every row of `draws`.
  [[nodiscard]] DrawMatrix apply(const DrawMatrix& draws) const {
    if (draws.cols() != dim()) {
      throw std::invalid_argument("draw dimension does not match the transform");
    }
    DrawMatrix centered = draws.rowwise() - center_.transpose();
    switch (kind_) {
      case TransformKind::translation:
        break;
      case TransformKind::diagonal:
        centered = centered.array().rowwise() * scale_.transpose().array();
        break;
      case TransformKind::full: {
        // rows: z^T -> (L_t L_s^{-1} z)^T
        Eigen::MatrixXd zt = centered.transpose();
        source_factor_.triangularView<Eigen::Lower>().solveInPlace(zt);
        centered = (target_factor_.triangularView<Eigen::Lower>() * zt).transpose();
        break;
      }
    }
    return centered.rowwise() + target_.transpose();
  }

  [[nodiscard]] AffineMap inverse() const {
    AffineMap m = *this;
    std::swap(m.center_, m.target_);
    m.log_det_ = -log_det_;
    if (kind_ == TransformKind::diagonal) {
      m.scale_ = scale_.cwiseInverse();
    } else if (kind_ == TransformKind::full) {
      std::swap(m.target_factor_, m.source_factor_);
    }
    return m;
  }

  /// The matrix A of x -> A x + b.
  [[nodiscard]] Eigen::MatrixXd linear() const {
    const Eigen::Index D = dim();
    switch (kind_) {
      case TransformKind::translation:
        return Eigen::MatrixXd::Identity(D, D);
      case TransformKind::diagonal:
        return scale_.asDiagonal();
      case TransformKind::full: {
        Eigen::MatrixXd inv = Eigen::MatrixXd::Identity(D, D);
        source_factor_.triangularView<Eigen::Lower>().solveInPlace(inv);
        return target_factor_.triangularView<Eigen::Lower>() * inv;
      }
    }
    return {};
  }

  /// The vector b of x -> A x + b.
  [[nodiscard]] Eigen::VectorXd offset() const { return target_ - linear() * center_; }

 private:
  static void check_same_dim(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size() || a.size() == 0) {
      throw std::invalid_argument("transform vectors must share a positive dimension");
    }
  }

  TransformKind kind_ = TransformKind::translation;
  Eigen::VectorXd center_;
  Eigen::VectorXd target_;
  Eigen::VectorXd scale_;
  Eigen::MatrixXd target_factor_;
  Eigen::MatrixXd source_factor_;
  double log_det_ = 0.0;
};

/// Ordered composition T_m o ... o T_1 of affine maps (maps[0] is applied first).
class TransformChain {
 public:
  TransformChain() = default;
  explicit TransformChain(std::vector<AffineMap> maps) {
    for (auto& m : maps) {
      push_back(std::move(m));
    }
  }

  void push_back(AffineMap map) {
    if (!maps_.empty() && map.dim() != maps_.front().dim()) {
      throw std::invalid_argument("transform chain members must share a dimension");
    }
    total_log_det_ += map.log_det_jacobian();
    maps_.push_back(std::move(map));
  }

  /// Appends every map of `other` after the maps of this chain.
  void append(const TransformChain& other) {
    for (const auto& m : other.maps()) {
      push_back(m);
    }
  }

  [[nodiscard]] const std::vector<AffineMap>& maps() const { return maps_; }
  [[nodiscard]] std::size_t size() const { return maps_.size(); }
  [[nodiscard]] bool empty() const { return maps_.empty(); }
  [[nodiscard]] double total_log_det() const { return total_log_det_; }

 private:
  std::vector<AffineMap> maps_;
  double total_log_det_ = 0.0;
};

inline DrawMatrix apply(const AffineMap& map, const DrawMatrix& draws) { return map.apply(draws); }

inline DrawMatrix apply(const TransformChain& chain, const DrawMatrix& draws) {
  DrawMatrix out = draws;
  for (const auto& m : chain.maps()) {
    out = m.apply(out);
  }
  return out;
}

inline AffineMap invert(const AffineMap& map) { return map.inverse(); }

/// Reversed chain of inverted members; its total log-determinant is negated.
inline TransformChain invert(const TransformChain& chain) {
  TransformChain out;
  for (auto it = chain.maps().rbegin(); it != chain.maps().rend(); ++it) {
    out.push_back(it->inverse());
  }
  return out;
}

/// log g_T at transformed draws from log g at their preimages: log g - log |det J|.
inline Eigen::VectorXd implicit_log_density(const Eigen::VectorXd& base_log_g_at_preimage,
                                            const TransformChain& chain) {
  return base_log_g_at_preimage.array() - chain.total_log_det();
}

// -- weighted moments -------------------------------------------------------------------------

namespace detail {

inline Eigen::VectorXd moment_weights(const DrawMatrix& draws, const LogWeightVector& w) {
  if (w.size() != draws.rows()) {
    throw std::invalid_argument("weight vector length does not match the number of draws");
  }
  return w.self_normalized_abs();
}

inline void require_two_positive(const Eigen::VectorXd& wbar) {
  if ((wbar.array() > 0.0).count() < 2) {
    throw DegenerateSampleError("weighted moments need at least two draws with positive weight");
  }
}

}  // namespace detail

/// Column means.
inline Eigen::VectorXd sample_mean(const DrawMatrix& draws) {
  return draws.colwise().mean().transpose();
}

/// Column variances with divisor S.
inline Eigen::VectorXd sample_marginal_variance(const DrawMatrix& draws) {
  const DrawMatrix c = draws.rowwise() - draws.colwise().mean();
  return c.array().square().colwise().mean().transpose();
}

/// Covariance with divisor S.
inline Eigen::MatrixXd sample_covariance(const DrawMatrix& draws) {
  const DrawMatrix c = draws.rowwise() - draws.colwise().mean();
  return (c.transpose() * c) / static_cast<double>(draws.rows());
}

/// Self-normalized weighted mean using absolute weights.
inline Eigen::VectorXd weighted_mean(const DrawMatrix& draws, const LogWeightVector& w) {
  const Eigen::VectorXd wbar = detail::moment_weights(draws, w);
  return draws.transpose() * wbar;
}

/// Self-normalized weighted second central moment per coordinate.
/**
 * With the default centering the squares are taken around the unweighted mean, which makes
 * the T2 transform match exactly this quantity.
 */
inline Eigen::VectorXd weighted_marginal_variance(
    const DrawMatrix& draws, const LogWeightVector& w,
    VarianceCentering centering = VarianceCentering::unweighted_mean) {
  const Eigen::VectorXd wbar = detail::moment_weights(draws, w);
  detail::require_two_positive(wbar);
  const Eigen::VectorXd center = centering == VarianceCentering::unweighted_mean
                                     ? sample_mean(draws)
                                     : Eigen::VectorXd(draws.transpose() * wbar);
  const DrawMatrix c = draws.rowwise() - center.transpose();
  return c.array().square().matrix().transpose() * wbar;
}

/// Self-normalized weighted covariance around the weighted mean.
inline Eigen::MatrixXd weighted_covariance(const DrawMatrix& draws, const LogWeightVector& w) {
  const Eigen::VectorXd wbar = detail::moment_weights(draws, w);
  detail::require_two_positive(wbar);
  const Eigen::VectorXd mean = draws.transpose() * wbar;
  const DrawMatrix c = draws.rowwise() - mean.transpose();
  Eigen::MatrixXd cov = c.transpose() * wbar.asDiagonal() * c;
  return 0.5 * (cov + cov.transpose());
}

/// Lower Cholesky factor of `cov`, retrying with growing diagonal jitter.
/**
 * Jitter starts at 1e-10 trace / D and grows tenfold over at most three retries. Throws
 * TransformUnavailable when every attempt fails.
 */
inline Eigen::MatrixXd jittered_cholesky(const Eigen::MatrixXd& cov) {
  const Eigen::Index D = cov.rows();
  if (!cov.allFinite()) {
    throw TransformUnavailable("covariance has non-finite entries");
  }
  auto attempt = [&](const Eigen::MatrixXd& m, Eigen::MatrixXd& out) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) {
      return false;
    }
    out = llt.matrixL();
    return (out.diagonal().array() > 0.0).all() && out.allFinite();
  };
  Eigen::MatrixXd L;
  if (attempt(cov, L)) {
    return L;
  }
  double jitter = 1e-10 * cov.trace() / static_cast<double>(D);
  if (!(jitter > 0.0)) {
    throw TransformUnavailable("covariance has a non-positive trace");
  }
  for (int retry = 0; retry < 3; ++retry, jitter *= 10.0) {
    Eigen::MatrixXd m = cov;
    m.diagonal().array() += jitter;
    if (attempt(m, L)) {
      return L;
    }
  }
  throw TransformUnavailable("covariance is not positive definite within the jitter budget");
}

struct TransformOptions {
  VarianceCentering variance_centering = VarianceCentering::unweighted_mean;
};

/// Builds T1 (level 1), T2 (level 2) or T3 (level 3) from draws and weights.
/**
 * Weights enter through their absolute self-normalized values. Throws TransformUnavailable
 * when the requested moments cannot be formed.
 */
inline AffineMap build_transform(int level, const DrawMatrix& draws, const LogWeightVector& w,
                                 const TransformOptions& opts = {}) {
  const Eigen::VectorXd mean = sample_mean(draws);
  Eigen::VectorXd wmean;
  try {
    wmean = weighted_mean(draws, w);
  } catch (const DegenerateSampleError& e) {
    throw TransformUnavailable(e.what());
  }
  switch (level) {
    case 1:
      return AffineMap::translation_about(mean, wmean);
    case 2: {
      Eigen::VectorXd wvar;
      try {
        wvar = weighted_marginal_variance(draws, w, opts.variance_centering);
      } catch (const DegenerateSampleError& e) {
        throw TransformUnavailable(e.what());
      }
      const Eigen::VectorXd var = sample_marginal_variance(draws);
      if ((var.array() <= 0.0).any() || (wvar.array() <= 0.0).any() || !wvar.allFinite()) {
        throw TransformUnavailable("marginal variance is zero in some coordinate");
      }
      return AffineMap::diagonal_about((wvar.array() / var.array()).sqrt(), mean, wmean);
    }
    case 3: {
      Eigen::MatrixXd wcov;
      try {
        wcov = weighted_covariance(draws, w);
      } catch (const DegenerateSampleError& e) {
        throw TransformUnavailable(e.what());
      }
      const Eigen::MatrixXd L = jittered_cholesky(sample_covariance(draws));
      const Eigen::MatrixXd Lw = jittered_cholesky(wcov);
      return AffineMap::full(Lw, L, mean, wmean);
    }
    default:
      throw std::invalid_argument("transform level must be 1, 2 or 3");
  }
}

}  // namespace iwmm

#endif  // IWMM_AFFINE_ADAPT_HPP

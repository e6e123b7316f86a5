#pragma once

// Truncated SVD, projection onto the tangent space of the rank-r manifold,
// and the structured rank-r projection that only needs an SVD of a small
// (at most 2r x 2r) core block.

#include "rpca/types.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <string>

namespace rpca {

/// Rank-r factorization U * diag(sigma) * V^T with orthonormal U, V and
/// non-increasing, nonnegative sigma.
struct RankRBasis {
  DenseMatrix U;
  Vector sigma;
  DenseMatrix V;

  Index rank() const { return sigma.size(); }

  DenseMatrix reconstruct() const { return U * sigma.asDiagonal() * V.transpose(); }
};

/// Factors of the tangent-space projection at a basis (U, V):
///   P_T(A) = [U Q1] * core * [V Q2]^T,  core = [[U^T A V, R2^T], [R1, 0]]
/// where Q1 R1 = (I - U U^T) A V  and  Q2 R2 = (I - V V^T) A^T U.
/// Q1 is orthogonal to U and Q2 to V even when R1 or R2 vanish.
struct TangentFactors {
  DenseMatrix Q1;  // d1 x k1, k1 = min(r, d1 - r)
  DenseMatrix R1;  // k1 x r, upper triangular
  DenseMatrix Q2;  // d2 x k2
  DenseMatrix R2;  // k2 x r, upper triangular
  DenseMatrix core;
};

struct TangentProjection {
  DenseMatrix matrix;
  TangentFactors factors;
};

/// Output of the structured projection: the new basis plus the full spectrum
/// of the core, which is the spectrum of P_T(A) itself.
struct CoreProjection {
  RankRBasis basis;
  Vector core_spectrum;
};

namespace detail {

inline void check_rank(const DenseMatrix& a, Index r, const char* what) {
  if (r < 1 || r > std::min(a.rows(), a.cols())) {
    throw Error(std::string(what) + ": rank " + std::to_string(r) + " out of range for " +
                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " matrix");
  }
}

// Orthonormal complement factor of X against an orthonormal U: returns (Q, R)
// with Q^T U = 0 and Q R = (I - U U^T) X. Computed by Householder QR of the
// augmented block [U X], so Q stays orthonormal when X is rank deficient.
inline void complement_qr(const DenseMatrix& U, const DenseMatrix& X, DenseMatrix& Q,
                          DenseMatrix& R) {
  const Index d = U.rows();
  const Index r = U.cols();
  const Index k = std::min(X.cols(), d - r);
  if (k <= 0) {
    Q.resize(d, 0);
    R.resize(0, X.cols());
    return;
  }
  DenseMatrix block(d, r + X.cols());
  block << U, X;
  Eigen::HouseholderQR<DenseMatrix> qr(block);
  const DenseMatrix thin = qr.householderQ() * DenseMatrix::Identity(d, r + k);
  Q = thin.rightCols(k);
  R = qr.matrixQR().block(r, r, k, X.cols()).triangularView<Eigen::Upper>();
}

}  // namespace detail

inline RankRBasis truncated_svd(const DenseMatrix& a, Index r) {
  detail::check_rank(a, r, "truncated_svd");
  Eigen::BDCSVD<DenseMatrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  RankRBasis out{svd.matrixU().leftCols(r), svd.singularValues().head(r),
                 svd.matrixV().leftCols(r)};
  if (!out.U.allFinite() || !out.V.allFinite() || !out.sigma.allFinite()) {
    throw Error("truncated_svd: non-finite result");
  }
  return out;
}

/// Best rank-r approximation (the H_r operator).
inline DenseMatrix rank_projection(const DenseMatrix& a, Index r) {
  return truncated_svd(a, r).reconstruct();
}

/// Leading `upto` singular values, non-increasing.
inline Vector singular_values(const DenseMatrix& a, Index upto) {
  detail::check_rank(a, upto, "singular_values");
  Eigen::BDCSVD<DenseMatrix> svd(a);
  return svd.singularValues().head(upto);
}

inline double largest_singular_value(const DenseMatrix& a) { return singular_values(a, 1)(0); }

/// Factors of P_T(A) without forming the dense d1 x d2 result. O(d1 d2 r).
inline TangentFactors tangent_factors(const DenseMatrix& a, const RankRBasis& basis) {
  const DenseMatrix& U = basis.U;
  const DenseMatrix& V = basis.V;
  if (U.rows() != a.rows() || V.rows() != a.cols() || U.cols() != V.cols()) {
    throw Error("tangent_projection: basis " + std::to_string(U.rows()) + "x" +
                std::to_string(U.cols()) + " / " + std::to_string(V.rows()) + "x" +
                std::to_string(V.cols()) + " incompatible with " + std::to_string(a.rows()) +
                "x" + std::to_string(a.cols()) + " matrix");
  }
  const Index r = U.cols();
  const DenseMatrix AV = a * V;
  const DenseMatrix AtU = a.transpose() * U;
  const DenseMatrix B = U.transpose() * AV;

  TangentFactors f;
  detail::complement_qr(U, AV - U * B, f.Q1, f.R1);
  detail::complement_qr(V, AtU - V * B.transpose(), f.Q2, f.R2);

  const Index k1 = f.Q1.cols();
  const Index k2 = f.Q2.cols();
  f.core = DenseMatrix::Zero(r + k1, r + k2);
  f.core.topLeftCorner(r, r) = B;
  f.core.topRightCorner(r, k2) = f.R2.transpose();
  f.core.bottomLeftCorner(k1, r) = f.R1;
  return f;
}

/// Projection onto the tangent space at `basis`, assembled from the factors.
inline TangentProjection tangent_projection(const DenseMatrix& a, const RankRBasis& basis) {
  TangentProjection out{DenseMatrix(), tangent_factors(a, basis)};
  const auto& f = out.factors;
  DenseMatrix left(a.rows(), basis.U.cols() + f.Q1.cols());
  left << basis.U, f.Q1;
  DenseMatrix right(a.cols(), basis.V.cols() + f.Q2.cols());
  right << basis.V, f.Q2;
  out.matrix = left * f.core * right.transpose();
  return out;
}

/// H_r(P_T(A)) from the SVD of the core only.
inline CoreProjection project_core(const TangentFactors& f, const RankRBasis& basis, Index r) {
  const Index n = basis.U.cols();
  if (f.core.rows() != n + f.Q1.cols() || f.core.cols() != n + f.Q2.cols() ||
      f.Q1.rows() != basis.U.rows() || f.Q2.rows() != basis.V.rows()) {
    throw Error("structured_rank_projection: inconsistent factor dimensions");
  }
  if (r < 1 || r > std::min(f.core.rows(), f.core.cols())) {
    throw Error("structured_rank_projection: rank " + std::to_string(r) + " out of range");
  }
  Eigen::JacobiSVD<DenseMatrix> svd(f.core, Eigen::ComputeFullU | Eigen::ComputeFullV);
  CoreProjection out;
  out.core_spectrum = svd.singularValues();
  out.basis.sigma = out.core_spectrum.head(r);
  out.basis.U = basis.U * svd.matrixU().topLeftCorner(n, r) +
                f.Q1 * svd.matrixU().bottomLeftCorner(f.Q1.cols(), r);
  out.basis.V = basis.V * svd.matrixV().topLeftCorner(n, r) +
                f.Q2 * svd.matrixV().bottomLeftCorner(f.Q2.cols(), r);
  return out;
}

inline RankRBasis structured_rank_projection(const TangentFactors& f, const RankRBasis& basis,
                                             Index r) {
  return project_core(f, basis, r).basis;
}

}  // namespace rpca

#pragma once

// Accelerated alternating projections for robust PCA: M = L + S with
// rank(L) <= r and S sparse.
//
//   init:  zeta_-1 = beta_init * s1(M)          S_-1 = T(M; zeta_-1)
//          L_0 = H_r(M - S_-1)                   zeta_0 = beta * s1(M - S_-1)
//          S_0 = T(M - L_0; zeta_0)
//   step:  P = P_T(M - S_k)                      L_{k+1} = H_r(P)
//          zeta_{k+1} = beta * (s_{r+1}(P) + gamma^(k+1) * s1(P))
//          S_{k+1} = T(M - L_{k+1}; zeta_{k+1})
//
// The classical method uses hard thresholding for T; the unrolled network
// (unrolled.hpp) runs the same engine with firm thresholding.

#include "rpca/linalg.hpp"
#include "rpca/shrinkage.hpp"
#include "rpca/types.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace rpca {

/// 1 / (2 * (d1*d2)^(1/4)).
inline double default_beta(Index d1, Index d2) {
  return 1.0 / (2.0 * std::pow(static_cast<double>(d1) * static_cast<double>(d2), 0.25));
}

struct SolverConfig {
  Index r = 1;
  double epsilon = 1e-6;
  double beta = 0.0;
  double beta_init = 0.0;
  double gamma = 0.7;
  int max_iters = 50;

  /// beta = beta_init = default_beta(d1, d2), gamma = 0.7, 50 iterations.
  static SolverConfig defaults_for(Index d1, Index d2, Index r) {
    SolverConfig cfg;
    cfg.r = r;
    cfg.beta = default_beta(d1, d2);
    cfg.beta_init = cfg.beta;
    return cfg;
  }

  void validate() const {
    if (r < 1) throw Error("solver: rank must be >= 1");
    if (!(epsilon > 0.0)) throw Error("solver: epsilon must be > 0");
    if (!(beta > 0.0) || !(beta_init > 0.0)) throw Error("solver: beta and beta_init must be > 0");
    if (!(gamma > 0.0 && gamma < 1.0)) throw Error("solver: gamma must lie in (0, 1)");
    if (max_iters < 1) throw Error("solver: max_iters must be >= 1");
  }
};

struct DecompositionState {
  DenseMatrix L;
  DenseMatrix S;
  RankRBasis basis;  // reconstructs L
  int k = 0;
  double residual = 0.0;  // ||M - L - S||_F / ||M||_F, 0 for M = 0
  double zeta = 0.0;      // threshold that produced S
};

struct SolveResult {
  DecompositionState state;
  std::vector<double> residuals;   // index k holds the residual of iterate k
  std::vector<double> thresholds;  // zeta_k, same indexing
  bool converged = false;
};

inline double relative_residual(const DenseMatrix& M, const DenseMatrix& L, const DenseMatrix& S) {
  const double norm = M.norm();
  if (norm == 0.0) return 0.0;
  return (M - L - S).norm() / norm;
}

/// The part of the initialization that depends only on (M, r, beta_init) and
/// the thresholding operator. Cached across forward passes when training.
struct InitPrefix {
  RankRBasis basis;           // of L_0
  DenseMatrix L;              // L_0
  double sigma1_deflated = 0; // s1(M - S_-1)
};

namespace detail {

inline void check_finite(const DenseMatrix& m, int iteration, const char* what) {
  if (!m.allFinite()) throw NumericalError(iteration, std::string(what) + " is not finite");
}

inline InitPrefix init_prefix(const DenseMatrix& M, Index r, double beta_init,
                              const Thresholder& thr) {
  if (r < 1 || r > std::min(M.rows(), M.cols())) {
    throw Error("rank " + std::to_string(r) + " out of range for " + std::to_string(M.rows()) +
                "x" + std::to_string(M.cols()) + " input");
  }
  const double zeta_m1 = beta_init * largest_singular_value(M);
  const DenseMatrix deflated = M - thr.apply(M, zeta_m1);
  // One thin SVD gives both H_r(M - S_-1) and s1(M - S_-1).
  InitPrefix out;
  out.basis = truncated_svd(deflated, r);
  out.sigma1_deflated = out.basis.sigma(0);
  out.L = out.basis.reconstruct();
  check_finite(out.L, -1, "L_0");
  return out;
}

inline DecompositionState finish_init(const InitPrefix& prefix, const DenseMatrix& M, double beta,
                                      const Thresholder& thr) {
  DecompositionState st;
  st.basis = prefix.basis;
  st.L = prefix.L;
  st.zeta = beta * prefix.sigma1_deflated;
  st.S = thr.apply(M - st.L, st.zeta);
  st.k = 0;
  st.residual = relative_residual(M, st.L, st.S);
  return st;
}

inline DecompositionState step(const DecompositionState& st, const DenseMatrix& M, double beta,
                               double gamma, const Thresholder& thr) {
  const Index r = st.basis.rank();
  const int next = st.k + 1;
  const TangentFactors factors = tangent_factors(M - st.S, st.basis);
  CoreProjection proj = project_core(factors, st.basis, r);

  DecompositionState out;
  out.basis = std::move(proj.basis);
  out.L = out.basis.reconstruct();
  check_finite(out.L, next, "L");
  const Vector& spectrum = proj.core_spectrum;
  const double s1 = spectrum(0);
  const double s_next = spectrum.size() > r ? spectrum(r) : 0.0;
  out.zeta = beta * (s_next + std::pow(gamma, next) * s1);
  out.S = thr.apply(M - out.L, out.zeta);
  out.k = next;
  out.residual = relative_residual(M, out.L, out.S);
  return out;
}

}  // namespace detail

inline DecompositionState initialize(const DenseMatrix& M, const SolverConfig& cfg) {
  cfg.validate();
  const Thresholder hard{Shrinkage::hard};
  return detail::finish_init(detail::init_prefix(M, cfg.r, cfg.beta_init, hard), M, cfg.beta,
                             hard);
}

inline DecompositionState iterate(const DecompositionState& state, const DenseMatrix& M,
                                  const SolverConfig& cfg) {
  require_same_shape(state.L, M, "iterate");
  return detail::step(state, M, cfg.beta, cfg.gamma, Thresholder{Shrinkage::hard});
}

/// Runs until the relative residual drops below epsilon or max_iters
/// iterations were taken. Non-convergence is reported, not thrown.
inline SolveResult solve(const DenseMatrix& M, const SolverConfig& cfg) {
  SolveResult out;
  out.state = initialize(M, cfg);
  out.residuals.push_back(out.state.residual);
  out.thresholds.push_back(out.state.zeta);
  while (out.state.residual >= cfg.epsilon && out.state.k < cfg.max_iters) {
    out.state = iterate(out.state, M, cfg);
    out.residuals.push_back(out.state.residual);
    out.thresholds.push_back(out.state.zeta);
  }
  out.converged = out.state.residual < cfg.epsilon;
  return out;
}

}  // namespace rpca

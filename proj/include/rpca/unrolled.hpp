#pragma once

// Fixed-depth unrolled accelerated alternating projections. Every layer shares
// a single (beta, gamma) pair and every thresholding step, initialization
// included, uses the firm (MCP proximal) operator with fixed concavity.

#include "rpca/solver.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace rpca {

struct UnrolledParams {
  static constexpr double kBetaMin = 1e-6;
  static constexpr double kBetaMax = 1.0;
  static constexpr double kGammaMin = 0.05;
  static constexpr double kGammaMax = 0.99;

  double beta = 0.0;
  double gamma = 0.7;
  double upsilon = 1.05;
  int layers = 50;
  double beta_init = 0.0;
  Shrinkage shrinkage = Shrinkage::firm;

  static UnrolledParams defaults_for(Index d1, Index d2) {
    UnrolledParams p;
    p.beta = default_beta(d1, d2);
    p.beta_init = p.beta;
    return p;
  }

  Thresholder thresholder() const { return Thresholder{shrinkage, upsilon}; }

  void validate() const {
    if (!(beta >= kBetaMin && beta <= kBetaMax))
      throw Error("unrolled: beta " + std::to_string(beta) + " outside [1e-6, 1]");
    if (!(gamma >= kGammaMin && gamma <= kGammaMax))
      throw Error("unrolled: gamma " + std::to_string(gamma) + " outside [0.05, 0.99]");
    if (!(upsilon > 1.0)) throw Error("unrolled: upsilon must be > 1");
    if (layers < 0) throw Error("unrolled: layer count must be >= 0");
    if (!(beta_init > 0.0)) throw Error("unrolled: beta_init must be > 0");
  }
};

struct ForwardResult {
  DenseMatrix L;
  DenseMatrix S;
  RankRBasis basis;
  std::vector<double> residuals;  // initialization, then one entry per layer
};

/// Input with its parameter-independent initialization precomputed. The
/// prefix depends on beta_init, upsilon and the shrinkage kind, which stay
/// fixed while (beta, gamma) are trained.
class PreparedInput {
 public:
  PreparedInput(DenseMatrix M, Index r, const UnrolledParams& p)
      : M_(std::move(M)),
        r_(r),
        beta_init_(p.beta_init),
        thr_(p.thresholder()),
        prefix_(detail::init_prefix(M_, r, p.beta_init, thr_)) {}

  const DenseMatrix& matrix() const { return M_; }
  Index rank() const { return r_; }

  bool compatible_with(const UnrolledParams& p) const {
    return p.beta_init == beta_init_ && p.shrinkage == thr_.kind && p.upsilon == thr_.upsilon;
  }

  ForwardResult forward(const UnrolledParams& p) const {
    p.validate();
    if (!compatible_with(p)) {
      throw Error("forward: parameters differ from those the input was prepared with");
    }
    DecompositionState st = detail::finish_init(prefix_, M_, p.beta, thr_);
    ForwardResult out;
    out.residuals.reserve(static_cast<std::size_t>(p.layers) + 1);
    out.residuals.push_back(st.residual);
    for (int layer = 0; layer < p.layers; ++layer) {
      st = detail::step(st, M_, p.beta, p.gamma, thr_);
      out.residuals.push_back(st.residual);
    }
    out.L = std::move(st.L);
    out.S = std::move(st.S);
    out.basis = std::move(st.basis);
    return out;
  }

 private:
  DenseMatrix M_;
  Index r_;
  double beta_init_;
  Thresholder thr_;
  InitPrefix prefix_;
};

inline ForwardResult forward(const DenseMatrix& M, Index r, const UnrolledParams& p) {
  p.validate();
  return PreparedInput(M, r, p).forward(p);
}

enum class Equivalence { match, mismatch, skipped };

inline std::string_view to_string(Equivalence e) {
  switch (e) {
    case Equivalence::match: return "match";
    case Equivalence::mismatch: return "mismatch";
    case Equivalence::skipped: return "skipped";
  }
  return "?";
}

/// Compares the firm-threshold network against the hard-threshold solver run
/// for the same number of iterations without early stopping. Skipped when any
/// thresholded entry of the solver path falls inside the band [zeta,
/// upsilon*zeta], where the two operators legitimately differ.
inline Equivalence forward_equivalence_check(const DenseMatrix& M, Index r,
                                             const UnrolledParams& p, double tol = 1e-6) {
  p.validate();
  auto in_band = [&](const DenseMatrix& x, double zeta) {
    const double hi = p.upsilon * zeta;
    return (x.array().abs() >= zeta && x.array().abs() <= hi).any();
  };

  SolverConfig cfg;
  cfg.r = r;
  cfg.beta = p.beta;
  cfg.beta_init = p.beta_init;
  cfg.gamma = p.gamma;
  cfg.max_iters = std::max(p.layers, 1);

  const double zeta_m1 = p.beta_init * largest_singular_value(M);
  if (zeta_m1 > 0.0 && in_band(M, zeta_m1)) return Equivalence::skipped;
  DecompositionState st = initialize(M, cfg);
  if (st.zeta > 0.0 && in_band(M - st.L, st.zeta)) return Equivalence::skipped;
  for (int layer = 0; layer < p.layers; ++layer) {
    st = iterate(st, M, cfg);
    if (st.zeta > 0.0 && in_band(M - st.L, st.zeta)) return Equivalence::skipped;
  }

  UnrolledParams firm = p;
  firm.shrinkage = Shrinkage::firm;
  const ForwardResult net = forward(M, r, firm);
  const double dl = (net.L - st.L).cwiseAbs().maxCoeff();
  const double ds = (net.S - st.S).cwiseAbs().maxCoeff();
  return dl <= tol && ds <= tol ? Equivalence::match : Equivalence::mismatch;
}

}  // namespace rpca

#pragma once

// Elementwise thresholding: hard (prox of l0), soft (prox of l1) and firm
// (prox of the minimax concave penalty).

#include "rpca/types.hpp"

#include <cassert>
#include <cmath>
#include <string>
#include <string_view>

namespace rpca {

enum class Shrinkage { hard, soft, firm };

inline std::string_view to_string(Shrinkage s) {
  switch (s) {
    case Shrinkage::hard: return "hard";
    case Shrinkage::soft: return "soft";
    case Shrinkage::firm: return "firm";
  }
  return "?";
}

inline Shrinkage parse_shrinkage(std::string_view name) {
  if (name == "hard") return Shrinkage::hard;
  if (name == "soft") return Shrinkage::soft;
  if (name == "firm") return Shrinkage::firm;
  throw Error("unknown shrinkage '" + std::string(name) + "' (expected hard, soft or firm)");
}

/// Minimax concave penalty parameters: threshold zeta and concavity upsilon.
struct McpParams {
  double zeta = 0.0;
  double upsilon = 1.05;

  void validate() const {
    if (!(zeta >= 0.0) || !std::isfinite(zeta)) throw Error("MCP threshold must be >= 0");
    if (!(upsilon > 1.0) || !std::isfinite(upsilon)) throw Error("MCP concavity must be > 1");
  }
};

/// x when |x| > zeta, otherwise 0. |x| == zeta maps to 0.
inline double hard_threshold(double x, double zeta) noexcept {
  assert(zeta >= 0.0);
  return std::abs(x) > zeta ? x : 0.0;
}

inline double soft_threshold(double x, double zeta) noexcept {
  assert(zeta >= 0.0);
  const double m = std::abs(x) - zeta;
  return m > 0.0 ? std::copysign(m, x) : 0.0;
}

inline double mcp_penalty(double x, const McpParams& p) noexcept {
  const double a = std::abs(x);
  if (a > p.upsilon * p.zeta) return 0.5 * p.upsilon * p.zeta * p.zeta;
  return p.zeta * a - x * x / (2.0 * p.upsilon);
}

/// sign(x) * min(upsilon * max(|x| - zeta, 0) / (upsilon - 1), |x|).
/// Identity on |x| >= upsilon*zeta (boundary included), zero on |x| <= zeta.
inline double firm_threshold(double x, const McpParams& p) noexcept {
  const double a = std::abs(x);
  if (a >= p.upsilon * p.zeta) return x;
  if (a <= p.zeta) return 0.0;
  const double ramp = p.upsilon * (a - p.zeta) / (p.upsilon - 1.0);
  return std::copysign(std::min(ramp, a), x);
}

/// A thresholding operator with its concavity bound in; `zeta` varies per call.
struct Thresholder {
  Shrinkage kind = Shrinkage::hard;
  double upsilon = 1.05;

  double operator()(double x, double zeta) const noexcept {
    switch (kind) {
      case Shrinkage::hard: return hard_threshold(x, zeta);
      case Shrinkage::soft: return soft_threshold(x, zeta);
      case Shrinkage::firm: return firm_threshold(x, McpParams{zeta, upsilon});
    }
    return x;
  }

  DenseMatrix apply(const DenseMatrix& m, double zeta) const {
    if (!(zeta >= 0.0)) throw Error("threshold must be >= 0, got " + std::to_string(zeta));
    if (kind == Shrinkage::firm) McpParams{zeta, upsilon}.validate();
    return m.unaryExpr([this, zeta](double x) { return (*this)(x, zeta); });
  }
};

inline DenseMatrix apply_elementwise(const DenseMatrix& m, Shrinkage kind, double zeta,
                                     double upsilon = 1.05) {
  return Thresholder{kind, upsilon}.apply(m, zeta);
}

}  // namespace rpca

#pragma once

// Synthetic (L*, S*, M*) generation.
//
// L* = U V^T with U, V in R^{d x r} i.i.d. standard normal. S* has a support
// drawn uniformly without replacement under a per-row and per-column cap of
// floor(alpha*d) nonzeros, with values i.i.d. uniform on
// [-c*m, c*m], m = mean |L*_ij| of the generated L*.
//
// Reproducibility: the engine is std::mt19937_64, whose output sequence is
// fixed by the standard. The distributions on top of it are implemented here
// (53-bit uniforms, Box-Muller normals, rejection-sampled integers) because
// the <random> distributions are implementation-defined. Sample i of a
// dataset with seed s is drawn from a fresh engine seeded with
// splitmix64(s + i).

#include "rpca/types.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace rpca {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), unbiased.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 == 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

struct SynthCase {
  Index d = 250;
  Index r = 2;
  double alpha = 0.1;
  double c = 1.0;
  std::uint64_t seed = 0;

  Index cap() const { return static_cast<Index>(std::floor(alpha * static_cast<double>(d) + 1e-9)); }
};

/// The four reference settings: (alpha, c) in {(0.1,1), (0.3,1), (0.01,1), (0.1,10)},
/// all at d = 250, r = 2.
inline SynthCase case_preset(int id, std::uint64_t seed = 0) {
  SynthCase sc;
  sc.seed = seed;
  switch (id) {
    case 1: sc.alpha = 0.1; sc.c = 1.0; break;
    case 2: sc.alpha = 0.3; sc.c = 1.0; break;
    case 3: sc.alpha = 0.01; sc.c = 1.0; break;
    case 4: sc.alpha = 0.1; sc.c = 10.0; break;
    default: throw Error("unknown case " + std::to_string(id) + " (expected 1-4)");
  }
  return sc;
}

struct SynthTriple {
  DenseMatrix L_star;
  DenseMatrix S_star;
  DenseMatrix M_star;
  std::vector<std::pair<Index, Index>> support;  // sorted row-major
};

/// U V^T. U is filled column by column, then V. r = 0 gives the zero matrix.
inline DenseMatrix gen_low_rank(Index d, Index r, Rng& rng) {
  if (r < 0 || r > d) throw Error("gen_low_rank: rank out of range");
  if (r == 0) return DenseMatrix::Zero(d, d);
  DenseMatrix U(d, r), V(d, r);
  for (Index j = 0; j < r; ++j)
    for (Index i = 0; i < d; ++i) U(i, j) = rng.normal();
  for (Index j = 0; j < r; ++j)
    for (Index i = 0; i < d; ++i) V(i, j) = rng.normal();
  return U * V.transpose();
}

struct SparsePart {
  DenseMatrix S;
  std::vector<std::pair<Index, Index>> support;
};

/// Support: cells are visited in a uniformly random order and accepted while
/// their row and column are below the cap, which is the same as repeatedly
/// drawing uniformly among the still-feasible cells. This fills every row to
/// the cap whenever the greedy pass allows. Values are then drawn for the
/// support in row-major order.
inline SparsePart gen_sparse(Index d, double alpha, double c, const DenseMatrix& L_star, Rng& rng) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error("gen_sparse: alpha must lie in (0, 1]");
  if (!(c > 0.0)) throw Error("gen_sparse: amplitude c must be > 0");
  const double mean_abs = L_star.cwiseAbs().mean();
  if (!(mean_abs > 0.0)) throw Error("gen_sparse: L* is zero");
  const Index cap = static_cast<Index>(std::floor(alpha * static_cast<double>(d) + 1e-9));
  if (cap < 1) {
    throw Error("gen_sparse: infeasible sparsity cap floor(alpha*d) = 0 for alpha = " +
                std::to_string(alpha) + ", d = " + std::to_string(d));
  }

  const std::size_t cells = static_cast<std::size_t>(d * d);
  std::vector<std::uint32_t> order(cells);
  for (std::size_t i = 0; i < cells; ++i) order[i] = static_cast<std::uint32_t>(i);
  for (std::size_t i = cells - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

  std::vector<Index> row_count(static_cast<std::size_t>(d), 0);
  std::vector<Index> col_count(static_cast<std::size_t>(d), 0);
  const std::size_t target = static_cast<std::size_t>(cap * d);
  std::vector<char> mask(cells, 0);
  std::size_t accepted = 0;
  for (std::size_t n = 0; n < cells && accepted < target; ++n) {
    const Index i = order[n] / d;
    const Index j = order[n] % d;
    if (row_count[i] < cap && col_count[j] < cap) {
      mask[order[n]] = 1;
      ++row_count[i];
      ++col_count[j];
      ++accepted;
    }
  }

  SparsePart out{DenseMatrix::Zero(d, d), {}};
  out.support.reserve(accepted);
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < d; ++j) {
      if (!mask[static_cast<std::size_t>(i * d + j)]) continue;
      double base;
      do {
        base = (2.0 * rng.uniform() - 1.0) * mean_abs;
      } while (base == 0.0);
      out.S(i, j) = base * c;
      out.support.emplace_back(i, j);
    }
  }
  return out;
}

inline SynthTriple gen_case(const SynthCase& sc) {
  if (sc.d < 1 || sc.r < 1 || sc.r > sc.d) throw Error("gen_case: invalid dimensions");
  Rng rng(sc.seed);
  SynthTriple t;
  t.L_star = gen_low_rank(sc.d, sc.r, rng);
  SparsePart sp = gen_sparse(sc.d, sc.alpha, sc.c, t.L_star, rng);
  t.S_star = std::move(sp.S);
  t.support = std::move(sp.support);
  t.M_star = t.L_star + t.S_star;
  return t;
}

struct SynthDataset {
  std::vector<SynthTriple> train;
  std::vector<SynthTriple> test;
};

/// Sample i is gen_case with seed case.seed + i; the first `train` samples
/// form the training split.
inline SynthDataset gen_dataset(const SynthCase& sc, std::size_t total, std::size_t train) {
  if (train > total) throw Error("gen_dataset: train split larger than total");
  SynthDataset ds;
  for (std::size_t i = 0; i < total; ++i) {
    SynthCase sub = sc;
    sub.seed = sc.seed + i;
    (i < train ? ds.train : ds.test).push_back(gen_case(sub));
  }
  return ds;
}

}  // namespace rpca

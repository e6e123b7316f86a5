#pragma once

// Learning the shared (beta, gamma) of the unrolled network by projected
// gradient descent on
//
//   f(beta, gamma) = sum_q  ||L_q - L_target_q||^2 / ||L_target_q||^2
//                         + ||S_q - S_target_q||^2 / ||S_target_q||^2
//
// with (L_q, S_q) the network output on M_q. Gradients are central finite
// differences over the two scalars (four forward sweeps per gradient).

#include "rpca/parallel.hpp"
#include "rpca/synth.hpp"
#include "rpca/unrolled.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rpca {

struct TrainSample {
  DenseMatrix M;
  DenseMatrix L_target;
  DenseMatrix S_target;
};

/// ||X_hat - X||_F^2 / ||X||_F^2.
inline double relative_loss(const DenseMatrix& X_hat, const DenseMatrix& X) {
  require_same_shape(X_hat, X, "relative_loss");
  const double denom = X.squaredNorm();
  if (denom == 0.0) throw Error("undefined relative loss: target has zero norm");
  return (X_hat - X).squaredNorm() / denom;
}

/// Training inputs with their initialization prefixes cached.
class TrainingSet {
 public:
  TrainingSet(std::span<const TrainSample> data, Index r, const UnrolledParams& p,
              unsigned workers = 1)
      : r_(r), workers_(workers) {
    if (data.empty()) throw Error("training set is empty");
    for (std::size_t q = 0; q < data.size(); ++q) {
      require_same_shape(data[q].M, data[q].L_target, "training sample");
      require_same_shape(data[q].M, data[q].S_target, "training sample");
      if (data[q].L_target.squaredNorm() == 0.0 || data[q].S_target.squaredNorm() == 0.0) {
        throw Error("sample " + std::to_string(q) +
                    ": undefined relative loss: target has zero norm");
      }
    }
    inputs_.resize(data.size());
    parallel_for(data.size(), workers_, [&](std::size_t q) {
      try {
        inputs_[q].emplace(data[q].M, r, p);
      } catch (const Error& e) {
        throw Error("sample " + std::to_string(q) + ": " + e.what());
      }
    });
    for (const auto& s : data) targets_.push_back({s.L_target, s.S_target});
  }

  std::size_t size() const { return inputs_.size(); }
  Index rank() const { return r_; }

  double sample_loss(const UnrolledParams& p, std::size_t q) const {
    try {
      const ForwardResult out = inputs_[q]->forward(p);
      return relative_loss(out.L, targets_[q].first) + relative_loss(out.S, targets_[q].second);
    } catch (const Error& e) {
      throw Error("sample " + std::to_string(q) + ": " + e.what());
    }
  }

  /// Sum of per-sample losses, reduced in index order.
  double objective(const UnrolledParams& p) const {
    std::vector<double> losses(size());
    parallel_for(size(), workers_, [&](std::size_t q) { losses[q] = sample_loss(p, q); });
    double sum = 0.0;
    for (double l : losses) sum += l;
    return sum;
  }

 private:
  Index r_;
  unsigned workers_;
  std::vector<std::optional<PreparedInput>> inputs_;
  std::vector<std::pair<DenseMatrix, DenseMatrix>> targets_;
};

inline double objective(const UnrolledParams& p, std::span<const TrainSample> data, Index r) {
  return TrainingSet(data, r, p).objective(p);
}

struct FdGradient {
  double d_beta = 0.0;
  double d_gamma = 0.0;
  bool one_sided_beta = false;
  bool one_sided_gamma = false;
};

namespace detail {

// Derivative along one coordinate with relative step h = fd_step * x,
// falling back to a one-sided difference at the box edges.
template <class F>
double fd_partial(F&& f, UnrolledParams p, double UnrolledParams::*field, double lo, double hi,
                  double fd_step, bool& one_sided) {
  const double x = p.*field;
  const double h = fd_step * std::abs(x);
  const bool up = x + h <= hi;
  const bool down = x - h >= lo;
  one_sided = !(up && down);
  auto at = [&](double v) {
    p.*field = v;
    return f(p);
  };
  if (up && down) return (at(x + h) - at(x - h)) / (2.0 * h);
  if (up) return (at(x + h) - at(x)) / h;
  if (down) return (at(x) - at(x - h)) / h;
  throw Error("fd_gradient: step does not fit inside the parameter box");
}

}  // namespace detail

/// Central differences of an arbitrary objective over (beta, gamma).
template <class F>
FdGradient fd_gradient(F&& f, const UnrolledParams& p, double fd_step) {
  if (!(fd_step > 0.0 && fd_step < 0.1)) throw Error("fd_step must lie in (0, 0.1)");
  FdGradient g;
  g.d_beta = detail::fd_partial(f, p, &UnrolledParams::beta, UnrolledParams::kBetaMin,
                                UnrolledParams::kBetaMax, fd_step, g.one_sided_beta);
  g.d_gamma = detail::fd_partial(f, p, &UnrolledParams::gamma, UnrolledParams::kGammaMin,
                                 UnrolledParams::kGammaMax, fd_step, g.one_sided_gamma);
  return g;
}

inline FdGradient fd_gradient(const UnrolledParams& p, const TrainingSet& set, double fd_step) {
  return fd_gradient([&](const UnrolledParams& q) { return set.objective(q); }, p, fd_step);
}

inline FdGradient fd_gradient(const UnrolledParams& p, std::span<const TrainSample> data, Index r,
                              double fd_step) {
  return fd_gradient(p, TrainingSet(data, r, p), fd_step);
}

enum class BatchMode { full, per_sample };
enum class Optimizer { gd, adam };

struct TrainConfig {
  int epochs = 8;
  double lr_beta = 1e-3;
  double lr_gamma = 1e-2;
  double fd_step = 1e-3;
  Index r = 1;
  BatchMode batch = BatchMode::full;
  Optimizer optimizer = Optimizer::adam;
  std::uint64_t seed = 0;
  unsigned workers = 1;

  void validate() const {
    if (epochs < 1) throw Error("train: epochs must be >= 1");
    if (!(lr_beta >= 0.0) || !(lr_gamma >= 0.0)) throw Error("train: learning rates must be >= 0");
    if (!(fd_step > 0.0 && fd_step < 0.1)) throw Error("train: fd_step must lie in (0, 0.1)");
    if (r < 1) throw Error("train: rank must be >= 1");
  }
};

struct TrainReport {
  std::vector<double> losses;  // objective after each epoch's updates
  double initial_loss = 0.0;
  double initial_beta = 0.0, initial_gamma = 0.0;
  double final_beta = 0.0, final_gamma = 0.0;
  std::vector<std::pair<double, double>> trajectory;  // (beta, gamma) after each update
  int one_sided_steps = 0;
  double wall_seconds = 0.0;

  nlohmann::json to_json() const {
    nlohmann::json traj = nlohmann::json::array();
    for (const auto& [b, g] : trajectory) traj.push_back({{"beta", b}, {"gamma", g}});
    return {{"schema", "rpca.train_report/1"},
            {"initial", {{"beta", initial_beta}, {"gamma", initial_gamma}}},
            {"final", {{"beta", final_beta}, {"gamma", final_gamma}}},
            {"initial_loss", initial_loss},
            {"epoch_losses", losses},
            {"trajectory", traj},
            {"one_sided_steps", one_sided_steps},
            {"wall_seconds", wall_seconds}};
  }
};

/// Projected gradient descent. Each update steps against the gradient of the
/// mean per-sample loss (the objective divided by the number of samples it
/// covers), then clamps (beta, gamma) into the parameter box.
inline TrainReport train(std::span<const TrainSample> data, const TrainConfig& cfg,
                         const UnrolledParams& init) {
  cfg.validate();
  init.validate();
  if (init.shrinkage == Shrinkage::hard) {
    throw Error("train: hard thresholding is not subdifferentiable and cannot be trained");
  }
  const auto t0 = std::chrono::steady_clock::now();
  const TrainingSet set(data, cfg.r, init, cfg.workers);

  TrainReport rep;
  UnrolledParams p = init;
  rep.initial_beta = p.beta;
  rep.initial_gamma = p.gamma;
  rep.initial_loss = set.objective(p);

  // Adam moments; unused by plain gradient descent.
  double m_beta = 0.0, v_beta = 0.0, m_gamma = 0.0, v_gamma = 0.0;
  int steps = 0;
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-30;
  auto update = [&](const FdGradient& g, double scale) {
    const double gb = g.d_beta * scale;
    const double gg = g.d_gamma * scale;
    double step_beta = gb, step_gamma = gg;
    if (cfg.optimizer == Optimizer::adam) {
      ++steps;
      m_beta = b1 * m_beta + (1 - b1) * gb;
      v_beta = b2 * v_beta + (1 - b2) * gb * gb;
      m_gamma = b1 * m_gamma + (1 - b1) * gg;
      v_gamma = b2 * v_gamma + (1 - b2) * gg * gg;
      const double c1 = 1 - std::pow(b1, steps);
      const double c2 = 1 - std::pow(b2, steps);
      step_beta = (m_beta / c1) / (std::sqrt(v_beta / c2) + eps);
      step_gamma = (m_gamma / c1) / (std::sqrt(v_gamma / c2) + eps);
      if (v_beta == 0.0) step_beta = 0.0;
      if (v_gamma == 0.0) step_gamma = 0.0;
    }
    p.beta = std::clamp(p.beta - cfg.lr_beta * step_beta, UnrolledParams::kBetaMin,
                        UnrolledParams::kBetaMax);
    p.gamma = std::clamp(p.gamma - cfg.lr_gamma * step_gamma, UnrolledParams::kGammaMin,
                         UnrolledParams::kGammaMax);
    rep.one_sided_steps += (g.one_sided_beta || g.one_sided_gamma) ? 1 : 0;
    rep.trajectory.emplace_back(p.beta, p.gamma);
  };

  Rng rng(cfg.seed);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.batch == BatchMode::full) {
      update(fd_gradient(p, set, cfg.fd_step), 1.0 / static_cast<double>(set.size()));
    } else {
      std::vector<std::size_t> order(set.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
      for (std::size_t q : order) {
        update(fd_gradient([&](const UnrolledParams& x) { return set.sample_loss(x, q); }, p,
                           cfg.fd_step),
               1.0);
      }
    }
    rep.losses.push_back(set.objective(p));
  }
  rep.final_beta = p.beta;
  rep.final_gamma = p.gamma;
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace rpca

// Acceptance suite. Prints one PASS/FAIL line per criterion, followed by the
// measurements behind it, and exits non-zero if any criterion fails.
//
//   acceptance [--work-dir DIR] [--only 1,5,6]

#include "../support/synthetic_faces.hpp"
#include "rpca/experiments.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <set>

using namespace rpca;

namespace {

struct Outcome {
  int id = 0;
  std::string title;
  bool pass = false;
  std::string summary;
  std::vector<std::string> details;
};

Outcome outcome(int id, std::string title) {
  Outcome o;
  o.id = id;
  o.title = std::move(title);
  return o;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double elapsed(std::chrono::steady_clock::time_point t0) { return seconds_since(t0); }

// ---------------------------------------------------------------------------

Outcome classical_convergence() {
  Outcome o = outcome(1, "classical solver convergence on 20 Case-1 instances");
  int ok = 0;
  double worst_time = 0.0;
  int worst_k = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const SynthTriple t = gen_case(case_preset(1, 1000 + s));
    const auto t0 = std::chrono::steady_clock::now();
    const SolveResult res = solve(t.M_star, SolverConfig::defaults_for(250, 250, 2));
    const double secs = elapsed(t0);
    const double em = eps_M(t.M_star, res.state.L, res.state.S);
    worst_time = std::max(worst_time, secs);
    worst_k = std::max(worst_k, res.state.k);
    if (em < 1e-6 && res.state.k <= 50) ++ok;
    o.details.push_back(fmt("seed %llu: k=%d eps_M=%.3e %.2fs", static_cast<unsigned long long>(1000 + s),
                            res.state.k, em, secs));
  }
  o.pass = ok >= 18 && worst_time < 5.0;
  o.summary = fmt("%d/20 reached eps_M < 1e-6 within 50 iterations (need 18); max k=%d; max %.2fs per instance (limit 5s)",
                  ok, worst_k, worst_time);
  return o;
}

// ---------------------------------------------------------------------------
// Shared training runs for criteria 2, 3 and 4.

struct CaseRun {
  int case_id = 0;
  SynthDataset data;
  TrainOutcome firm;
  double seconds = 0.0;
};

TrainJob default_job(Shrinkage shrinkage) {
  TrainJob job;
  job.train.r = 2;
  job.train.workers = default_workers();
  job.init.shrinkage = shrinkage;
  return job;
}

std::map<int, CaseRun>& case_runs() {
  static std::map<int, CaseRun> runs;
  return runs;
}

CaseRun& run_case(int id) {
  auto& runs = case_runs();
  auto it = runs.find(id);
  if (it != runs.end()) return it->second;
  CaseRun run;
  run.case_id = id;
  run.data = gen_dataset(case_preset(id, 100000ull * static_cast<std::uint64_t>(id)), 300, 180);
  const auto t0 = std::chrono::steady_clock::now();
  run.firm = train_on(run.data.train, default_job(Shrinkage::firm));
  run.seconds = elapsed(t0);
  std::cerr << fmt("  [case %d trained in %.0fs: beta %.4f -> %.4f, gamma %.3f -> %.3f]\n", id,
                   run.seconds, run.firm.report.initial_beta, run.firm.params.beta,
                   run.firm.report.initial_gamma, run.firm.params.gamma);
  return runs.emplace(id, std::move(run)).first->second;
}

EvalResult& accaltproj_case1() {
  static std::optional<EvalResult> res;
  if (!res) res = evaluate_method(run_case(1).data.test, 2, {"accaltproj", Method::accaltproj, {}}, 0.0, default_workers(), 1);
  return *res;
}

EvalResult& unrolled_case1() {
  static std::optional<EvalResult> res;
  if (!res) res = evaluate_method(run_case(1).data.test, 2, {"unrolled", Method::unrolled, run_case(1).firm.params}, 0.0, default_workers(), 1);
  return *res;
}

Outcome unrolled_improves() {
  Outcome o = outcome(2, "trained unrolled network beats AccAltProj on Case-1 test errors");
  const EvalResult& acc = accaltproj_case1();
  const EvalResult& net = unrolled_case1();
  const auto aL = acc.summary("eps_L"), aS = acc.summary("eps_S");
  const auto nL = net.summary("eps_L"), nS = net.summary("eps_S");
  o.pass = nL.mean < aL.mean && nS.mean < aS.mean;
  o.summary = fmt("mean eps_L %.3e vs %.3e (%.2fx), mean eps_S %.3e vs %.3e (%.2fx), unrolled vs AccAltProj",
                  nL.mean, aL.mean, aL.mean / nL.mean, nS.mean, aS.mean, aS.mean / nS.mean);
  for (const auto* r : {&acc, &net}) {
    std::string line = r->label + ":";
    for (const auto& m : metric_names()) {
      const auto s = r->summary(m);
      line += fmt(" %s=%.3e+-%.1e", m.c_str(), s.mean, s.std);
    }
    o.details.push_back(line + fmt(" (%zu unconverged)", r->unconverged));
  }
  return o;
}

Outcome learned_ranges() {
  Outcome o = outcome(3, "learned parameter ranges on Cases 1-4 plus fast mode");
  bool all = true;
  std::string parts;
  for (int id = 1; id <= 4; ++id) {
    const CaseRun& run = run_case(id);
    const double b0 = run.firm.report.initial_beta;
    const double ratio = run.firm.params.beta / b0;
    const double g = run.firm.params.gamma;
    const bool g_ok = g >= 0.70 && g <= 0.85;
    const bool b_ok = ratio >= 1.2 && ratio <= 3.0;
    const bool t_ok = run.seconds <= 15 * 60;
    all = all && g_ok && b_ok && t_ok;
    parts += fmt("case %d: gamma=%.3f%s beta=%.4f (%.2fx)%s; ", id, g, g_ok ? "" : "[out]",
                 run.firm.params.beta, ratio, b_ok ? "" : "[out]");
    o.details.push_back(fmt("case %d: gamma %.4f, beta %.5f = %.3fx init, %.0fs, %zu unconverged targets, losses %.3e -> %.3e",
                            id, g, run.firm.params.beta, ratio, run.seconds,
                            run.firm.unconverged_targets, run.firm.report.initial_loss,
                            run.firm.report.losses.back()));
  }
  // Fast mode: d = 64, 40 training samples.
  SynthCase fast = case_preset(1, 777);
  fast.d = 64;
  const SynthDataset ds = gen_dataset(fast, 40, 40);
  const auto t0 = std::chrono::steady_clock::now();
  const TrainOutcome fo = train_on(ds.train, default_job(Shrinkage::firm));
  const double fsecs = elapsed(t0);
  const bool fast_ok = fo.params.gamma >= 0.70 && fo.params.gamma <= 0.85 && fsecs < 120.0;
  all = all && fast_ok;
  o.details.push_back(fmt("fast mode d=64 Q=40: gamma %.4f, beta %.5f = %.3fx init, %.1fs", fo.params.gamma,
                          fo.params.beta, fo.params.beta / fo.report.initial_beta, fsecs));
  parts += fmt("fast: gamma=%.3f in %.0fs", fo.params.gamma, fsecs);
  o.pass = all;
  o.summary = parts + " (need gamma in [0.70,0.85], beta in [1.2,3.0]x init)";
  return o;
}

Outcome soft_ablation() {
  Outcome o = outcome(4, "soft-threshold network has >= 10x the support error of the firm network");
  CaseRun& run = run_case(1);
  const auto t0 = std::chrono::steady_clock::now();
  const TrainOutcome soft = train_on(run.data.train, default_job(Shrinkage::soft));
  const double secs = elapsed(t0);
  const EvalResult soft_eval = evaluate_method(run.data.test, 2, {"unrolled-soft", Method::unrolled, soft.params}, 0.0, default_workers(), 1);
  const EvalResult& firm_eval = unrolled_case1();
  const double s = soft_eval.summary("eps_supp").mean;
  const double f = firm_eval.summary("eps_supp").mean;
  o.pass = s > f && s >= 10.0 * f;
  o.summary = fmt("mean eps_supp soft %.3e vs firm %.3e", s, f);
  o.details.push_back(fmt("soft training: gamma %.4f, beta %.5f (%.0fs)", soft.params.gamma, soft.params.beta, secs));
  for (const auto* r : {&firm_eval, &soft_eval}) {
    std::string line = r->label + ":";
    for (const auto& m : metric_names()) line += fmt(" %s=%.3e", m.c_str(), r->summary(m).mean);
    o.details.push_back(line);
  }
  return o;
}

// ---------------------------------------------------------------------------

Outcome prox_oracle() {
  Outcome o = outcome(5, "firm threshold is the MCP proximal map; soft and hard limits");
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(5);
  double worst_prox = 0.0, worst_soft = 0.0, worst_hard = 0.0;
  constexpr double step = 1e-4;
  for (int trial = 0; trial < 10000; ++trial) {
    const double x = (2.0 * rng.uniform() - 1.0) * 3.0;
    const McpParams p{2.0 * rng.uniform(), 1.0 + 9.0 * (1.0 - rng.uniform())};
    // Grid over [-2|x|, 2|x|]; t = 0 is a grid point.
    const long n = static_cast<long>(std::ceil(2.0 * std::abs(x) / step));
    double best_t = 0.0, best = 0.5 * x * x;
    for (long i = -n; i <= n; ++i) {
      const double t = static_cast<double>(i) * step;
      const double v = 0.5 * (t - x) * (t - x) + mcp_penalty(t, p);
      if (v < best) {
        best = v;
        best_t = t;
      }
    }
    worst_prox = std::max(worst_prox, std::abs(firm_threshold(x, p) - best_t));

    const double zeta = p.zeta;
    worst_soft = std::max(worst_soft, std::abs(firm_threshold(x, {zeta, 1e6}) - soft_threshold(x, zeta)));
    const double ups = 1.0 + 1e-6;
    if (!(std::abs(x) >= zeta && std::abs(x) <= ups * zeta)) {
      worst_hard = std::max(worst_hard, std::abs(firm_threshold(x, {zeta, ups}) - hard_threshold(x, zeta)));
    }
  }
  const double secs = elapsed(t0);
  o.pass = worst_prox <= 1e-3 && worst_soft <= 1e-4 && worst_hard <= 1e-4 && secs < 10.0;
  o.summary = fmt("max |firm - grid argmin| %.2e (tol 1e-3), soft limit %.2e, hard limit %.2e (tol 1e-4), %.2fs",
                  worst_prox, worst_soft, worst_hard, secs);
  return o;
}

Outcome tangent_oracle() {
  Outcome o = outcome(6, "tangent projection and structured rank-r projection oracles");
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(6);
  auto randn = [&](Index r, Index c) {
    DenseMatrix m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
  };
  auto orth = [&](Index r, Index c) {
    Eigen::HouseholderQR<DenseMatrix> qr(randn(r, c));
    return DenseMatrix(qr.householderQ() * DenseMatrix::Identity(r, c));
  };
  double worst_proj = 0.0, worst_struct = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Index r = 1 + static_cast<Index>(rng.below(4));
    const Index d1 = r + static_cast<Index>(rng.below(static_cast<std::uint64_t>(21 - r)));
    const Index d2 = r + static_cast<Index>(rng.below(static_cast<std::uint64_t>(21 - r)));
    RankRBasis b{orth(d1, r), Vector::LinSpaced(r, static_cast<double>(r), 1.0), orth(d2, r)};
    const DenseMatrix A = randn(d1, d2);
    const TangentProjection p = tangent_projection(A, b);
    const DenseMatrix PU = b.U * b.U.transpose(), PV = b.V * b.V.transpose();
    const DenseMatrix dense = PU * A + A * PV - PU * A * PV;
    worst_proj = std::max(worst_proj, (p.matrix - dense).norm());

    const RankRBasis fast = structured_rank_projection(p.factors, b, r);
    Eigen::JacobiSVD<DenseMatrix> svd(dense, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const DenseMatrix dense_rank = svd.matrixU().leftCols(r) * svd.singularValues().head(r).asDiagonal() *
                                   svd.matrixV().leftCols(r).transpose();
    worst_struct = std::max({worst_struct, (fast.reconstruct() - dense_rank).norm(),
                             (fast.sigma - svd.singularValues().head(r)).norm()});
  }
  const double secs = elapsed(t0);
  o.pass = worst_proj <= 1e-10 && worst_struct <= 1e-9 && secs < 5.0;
  o.summary = fmt("max projector error %.2e (tol 1e-10), max structured-path error %.2e (tol 1e-9), %.2fs",
                  worst_proj, worst_struct, secs);
  return o;
}

Outcome equivalence() {
  Outcome o = outcome(7, "unrolled network with upsilon -> 1+ reproduces the classical iterates");
  int match = 0, mismatch = 0, skipped = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    SynthCase sc = case_preset(1, 5000 + s);
    sc.d = 20;
    const SynthTriple t = gen_case(sc);
    UnrolledParams p = UnrolledParams::defaults_for(20, 20);
    p.upsilon = 1.0 + 1e-9;
    p.layers = 20;
    switch (forward_equivalence_check(t.M_star, 2, p)) {
      case Equivalence::match: ++match; break;
      case Equivalence::mismatch: ++mismatch; break;
      case Equivalence::skipped: ++skipped; break;
    }
  }
  o.pass = match == 20;
  o.summary = fmt("%d match, %d mismatch, %d skipped of 20 (need 20 matches)", match, mismatch, skipped);
  return o;
}

// Eleven images with no low-rank structure: per-image stripes plus noise.
std::vector<fs::path> write_texture_images(const fs::path& dir) {
  fs::create_directories(dir);
  Rng rng(9);
  std::vector<fs::path> paths;
  for (int k = 0; k < 11; ++k) {
    DenseMatrix px(243, 320);
    for (Index i = 0; i < px.rows(); ++i) {
      for (Index j = 0; j < px.cols(); ++j) {
        const double v = 128.0 + 60.0 * std::sin(0.05 * static_cast<double>(i * (k + 1))) *
                                     std::cos(0.03 * static_cast<double>(j) + k) +
                         20.0 * rng.normal();
        px(i, j) = std::clamp(std::round(v), 0.0, 255.0);
      }
    }
    paths.push_back(dir / fmt("tex%02d.pgm", k));
    write_pgm(px, paths.back());
  }
  return paths;
}

Outcome faces(const fs::path& work) {
  Outcome o = outcome(8, "face pipeline on 11-image sets of 243x320");
  const SolverConfig cfg = SolverConfig::defaults_for(243 * 320, 11, 1);
  const std::vector<std::pair<std::string, std::vector<fs::path>>> sets{
      {"rank-1 plus sparse", rpca::testing::write_synthetic_faces(work / "faces", 11, 243, 320, 8)},
      {"noisy", rpca::testing::write_synthetic_faces(work / "faces_noisy", 11, 243, 320, 8, 2.0)},
      {"texture", write_texture_images(work / "faces_texture")}};
  bool all = true;
  double worst_ratio = 0.0, worst_eps = 0.0;
  for (std::size_t n = 0; n < sets.size(); ++n) {
    const auto& [name, paths] = sets[n];
    const FacesResult acc = run_faces(paths, Method::accaltproj, cfg, {}, work / fmt("faces_out%zu", n));
    const bool shape_ok = acc.M.rows() == 77760 && acc.M.cols() == 11;
    const bool ok = shape_ok && acc.sigma2_over_sigma1 <= 1e-8 && acc.eps_M <= 1e-3;
    all = all && ok;
    worst_ratio = std::max(worst_ratio, acc.sigma2_over_sigma1);
    worst_eps = std::max(worst_eps, acc.eps_M);
    o.details.push_back(fmt("%s: %s sigma2/sigma1 %.2e, eps_M %.2e, accaltproj %.3fs (%d iterations)",
                            name.c_str(), ok ? "ok" : "FAIL", acc.sigma2_over_sigma1, acc.eps_M,
                            acc.decomposition.seconds, acc.decomposition.iterations));
  }
  const FacesResult net = run_faces(sets[0].second, Method::unrolled, cfg, {}, work / "faces_unrolled");
  o.details.push_back(fmt("timing (information only): unrolled K=%d %.3fs on the first set, eps_M %.2e",
                          UnrolledParams{}.layers, net.decomposition.seconds, net.eps_M));
  o.pass = all;
  o.summary = fmt("%zu sets of 77760x11: max sigma2/sigma1 of L %.2e (tol 1e-8), max eps_M %.2e (tol 1e-3)",
                  sets.size(), worst_ratio, worst_eps);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance suite"};
  std::string work = "acceptance_work";
  std::vector<int> only;
  app.add_option("--work-dir", work, "scratch directory");
  app.add_option("--only", only, "criteria to run")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  const std::set<int> selected(only.begin(), only.end());
  auto wanted = [&](int id) { return selected.empty() || selected.count(id) > 0; };
  fs::create_directories(work);

  std::vector<Outcome> outcomes;
  auto run = [&](int id, auto&& fn) {
    if (!wanted(id)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.id = id;
      o.title = "criterion " + std::to_string(id);
      o.summary = std::string("error: ") + e.what();
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << o.id << ": " << o.title << " -- "
              << o.summary << fmt(" [%.0fs]", elapsed(t0)) << "\n";
    for (const auto& d : o.details) std::cout << "        " << d << "\n";
    std::cout.flush();
    outcomes.push_back(std::move(o));
  };

  run(1, classical_convergence);
  run(5, prox_oracle);
  run(6, tangent_oracle);
  run(7, equivalence);
  run(8, [&] { return faces(work); });
  run(3, learned_ranges);
  run(2, unrolled_improves);
  run(4, soft_ablation);

  json summary = json::array();
  int failed = 0;
  for (const auto& o : outcomes) {
    summary.push_back({{"criterion", o.id}, {"pass", o.pass}, {"summary", o.summary}, {"details", o.details}});
    failed += o.pass ? 0 : 1;
  }
  write_json(summary, fs::path(work) / "acceptance_results.json");
  std::cout << (outcomes.size() - static_cast<std::size_t>(failed)) << "/" << outcomes.size()
            << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}

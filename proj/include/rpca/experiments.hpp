#pragma once

// Experiment commands shared by the command-line tool and the acceptance
// suite: dataset directories, training targets, decomposition runs,
// aggregate evaluation and the face pipeline. Every command writes a
// manifest.json next to its outputs.
//
// Dataset layout:
//   <dir>/manifest.json                 case fields, seed, split sizes
//   <dir>/{train,test}/<NNNNNN>/{M,L,S}.bin

#include "rpca/matrix_store.hpp"
#include "rpca/metrics.hpp"
#include "rpca/parallel.hpp"
#include "rpca/solver.hpp"
#include "rpca/synth.hpp"
#include "rpca/trainer.hpp"
#include "rpca/unrolled.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace rpca {

inline constexpr const char* kToolVersion = "1.0.0";

namespace fs = std::filesystem;
using nlohmann::json;

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

inline void write_json(const json& doc, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

struct ExperimentManifest {
  std::string command;
  json config = json::object();
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> artifacts;
  std::map<std::string, double> wall_seconds;
  std::vector<std::string> argv;

  json to_json() const {
    return {{"schema", "rpca.manifest/1"}, {"command", command},       {"tool_version", kToolVersion},
            {"argv", argv},                {"config", config},         {"seeds", seeds},
            {"artifacts", artifacts},      {"wall_seconds", wall_seconds}};
  }

  void write(const fs::path& path) const { write_json(to_json(), path); }
};

// ---------------------------------------------------------------------------
// Parameter files

inline json params_to_json(const UnrolledParams& p) {
  return {{"beta", p.beta},       {"gamma", p.gamma},          {"upsilon", p.upsilon},
          {"layers", p.layers},   {"beta_init", p.beta_init}, {"shrinkage", std::string(to_string(p.shrinkage))}};
}

inline UnrolledParams params_from_json(const json& j) {
  try {
    UnrolledParams p;
    p.beta = j.at("beta").get<double>();
    p.gamma = j.at("gamma").get<double>();
    p.upsilon = j.value("upsilon", 1.05);
    p.layers = j.value("layers", 50);
    p.beta_init = j.value("beta_init", p.beta);
    p.shrinkage = parse_shrinkage(j.value("shrinkage", std::string("firm")));
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw Error(std::string("invalid parameter file: ") + e.what());
  }
}

/// Accepts either a bare parameter object or a training output with a
/// "params" member.
inline UnrolledParams load_params(const fs::path& path) {
  const json j = read_json(path);
  return params_from_json(j.contains("params") ? j.at("params") : j);
}

// ---------------------------------------------------------------------------
// Datasets

struct DatasetInfo {
  fs::path dir;
  SynthCase synth;
  int case_id = 0;  // 0 for explicit (d, r, alpha, c)
  std::size_t total = 0;
  std::size_t train = 0;

  std::size_t test() const { return total - train; }

  fs::path sample_dir(bool train_split, std::size_t i) const {
    char name[16];
    std::snprintf(name, sizeof name, "%06zu", i);
    return dir / (train_split ? "train" : "test") / name;
  }
};

struct GenConfig {
  SynthCase synth;
  int case_id = 0;
  std::size_t total = 300;
  std::size_t train = 180;
  unsigned workers = 1;
};

inline json synth_to_json(const SynthCase& sc, int case_id) {
  return {{"case", case_id}, {"d", sc.d},   {"r", sc.r},
          {"alpha", sc.alpha}, {"c", sc.c}, {"seed", sc.seed}};
}

/// Generates a dataset and writes it under `dir`. Sample i of the combined
/// sequence uses seed synth.seed + i; train samples come first.
inline DatasetInfo write_dataset(const GenConfig& cfg, const fs::path& dir,
                                 std::vector<std::string> argv = {}) {
  if (cfg.train > cfg.total) throw Error("gen: train split larger than total");
  if (cfg.total == 0) throw Error("gen: total must be >= 1");
  const auto t0 = std::chrono::steady_clock::now();
  DatasetInfo info{dir, cfg.synth, cfg.case_id, cfg.total, cfg.train};
  fs::create_directories(dir);

  parallel_for(cfg.total, cfg.workers, [&](std::size_t i) {
    SynthCase sc = cfg.synth;
    sc.seed = cfg.synth.seed + i;
    const SynthTriple t = gen_case(sc);
    const bool tr = i < cfg.train;
    const fs::path sd = info.sample_dir(tr, tr ? i : i - cfg.train);
    fs::create_directories(sd);
    save_matrix(t.M_star, sd / "M.bin");
    save_matrix(t.L_star, sd / "L.bin");
    save_matrix(t.S_star, sd / "S.bin");
  });

  ExperimentManifest m;
  m.command = "gen";
  m.argv = std::move(argv);
  m.config = synth_to_json(cfg.synth, cfg.case_id);
  m.config["total"] = cfg.total;
  m.config["train"] = cfg.train;
  for (std::size_t i = 0; i < cfg.total; ++i) {
    m.seeds.push_back(cfg.synth.seed + i);
    const bool tr = i < cfg.train;
    const fs::path sd = fs::relative(info.sample_dir(tr, tr ? i : i - cfg.train), dir);
    for (const char* f : {"M.bin", "L.bin", "S.bin"}) m.artifacts.push_back((sd / f).generic_string());
  }
  m.wall_seconds["total"] = seconds_since(t0);
  m.write(dir / "manifest.json");
  return info;
}

inline DatasetInfo read_dataset_info(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  if (!fs::exists(mpath)) throw Error("not a dataset directory (no manifest.json): " + dir.string());
  const json m = read_json(mpath);
  try {
    if (m.at("command") != "gen") throw Error("manifest was not written by gen: " + mpath.string());
    const json& c = m.at("config");
    DatasetInfo info;
    info.dir = dir;
    info.case_id = c.at("case").get<int>();
    info.synth.d = c.at("d").get<Index>();
    info.synth.r = c.at("r").get<Index>();
    info.synth.alpha = c.at("alpha").get<double>();
    info.synth.c = c.at("c").get<double>();
    info.synth.seed = c.at("seed").get<std::uint64_t>();
    info.total = c.at("total").get<std::size_t>();
    info.train = c.at("train").get<std::size_t>();
    return info;
  } catch (const json::exception& e) {
    throw Error(mpath.string() + ": " + e.what());
  }
}

inline SynthTriple load_sample(const DatasetInfo& info, bool train_split, std::size_t i) {
  const fs::path sd = info.sample_dir(train_split, i);
  SynthTriple t;
  t.M_star = load_matrix(sd / "M.bin");
  t.L_star = load_matrix(sd / "L.bin");
  t.S_star = load_matrix(sd / "S.bin");
  return t;
}

inline std::vector<SynthTriple> load_split(const DatasetInfo& info, bool train_split) {
  std::vector<SynthTriple> out(train_split ? info.train : info.test());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = load_sample(info, train_split, i);
  return out;
}

// ---------------------------------------------------------------------------
// Training targets

enum class TargetMode { ground_truth, from_solver };

inline TargetMode parse_target_mode(std::string_view s) {
  if (s == "ground-truth") return TargetMode::ground_truth;
  if (s == "from-solver") return TargetMode::from_solver;
  throw Error("unknown target mode '" + std::string(s) + "' (expected ground-truth or from-solver)");
}

inline std::string_view to_string(TargetMode m) {
  return m == TargetMode::ground_truth ? "ground-truth" : "from-solver";
}

struct TargetConfig {
  TargetMode mode = TargetMode::from_solver;
  double tolerance = 1e-8;
  int max_iters = 200;
};

struct TargetSet {
  std::vector<TrainSample> samples;
  std::size_t unconverged = 0;  // solver runs that hit max_iters
};

/// Pairs each input with its training target: the generating (L*, S*), or
/// the AccAltProj decomposition at a tight tolerance.
inline TargetSet make_targets(const std::vector<SynthTriple>& triples, Index r,
                              const TargetConfig& tc, unsigned workers = 1) {
  TargetSet out;
  out.samples.resize(triples.size());
  std::vector<char> ok(triples.size(), 1);
  parallel_for(triples.size(), workers, [&](std::size_t q) {
    const SynthTriple& t = triples[q];
    if (tc.mode == TargetMode::ground_truth) {
      out.samples[q] = {t.M_star, t.L_star, t.S_star};
      return;
    }
    SolverConfig cfg = SolverConfig::defaults_for(t.M_star.rows(), t.M_star.cols(), r);
    cfg.epsilon = tc.tolerance;
    cfg.max_iters = tc.max_iters;
    SolveResult res = solve(t.M_star, cfg);
    ok[q] = res.converged ? 1 : 0;
    out.samples[q] = {t.M_star, std::move(res.state.L), std::move(res.state.S)};
  });
  out.unconverged = static_cast<std::size_t>(std::count(ok.begin(), ok.end(), 0));
  return out;
}

// ---------------------------------------------------------------------------
// Decomposition

enum class Method { accaltproj, unrolled };

inline Method parse_method(std::string_view s) {
  if (s == "accaltproj") return Method::accaltproj;
  if (s == "unrolled") return Method::unrolled;
  throw Error("unknown method '" + std::string(s) + "' (expected accaltproj or unrolled)");
}

inline std::string_view to_string(Method m) {
  return m == Method::accaltproj ? "accaltproj" : "unrolled";
}

struct Decomposition {
  DenseMatrix L;
  DenseMatrix S;
  RankRBasis basis;
  std::vector<double> residuals;
  bool converged = true;  // always true for the fixed-depth network
  int iterations = 0;
  double seconds = 0.0;
};

inline Decomposition decompose(const DenseMatrix& M, Method method, const SolverConfig& solver,
                               const UnrolledParams& net) {
  const auto t0 = std::chrono::steady_clock::now();
  Decomposition d;
  if (method == Method::accaltproj) {
    SolveResult res = solve(M, solver);
    d.L = std::move(res.state.L);
    d.S = std::move(res.state.S);
    d.basis = std::move(res.state.basis);
    d.residuals = std::move(res.residuals);
    d.converged = res.converged;
    d.iterations = res.state.k;
  } else {
    ForwardResult res = forward(M, solver.r, net);
    d.L = std::move(res.L);
    d.S = std::move(res.S);
    d.basis = std::move(res.basis);
    d.residuals = std::move(res.residuals);
    d.iterations = net.layers;
  }
  d.seconds = seconds_since(t0);
  return d;
}

// ---------------------------------------------------------------------------
// Training

struct TrainJob {
  TrainConfig train;
  TargetConfig targets;
  UnrolledParams init;  // beta/beta_init of 0 mean "default for the data size"
};

struct TrainOutcome {
  UnrolledParams params;
  TrainReport report;
  std::size_t unconverged_targets = 0;
  double target_seconds = 0.0;

  json to_json() const {
    return {{"schema", "rpca.train/1"},
            {"params", params_to_json(params)},
            {"report", report.to_json()},
            {"unconverged_targets", unconverged_targets},
            {"target_seconds", target_seconds}};
  }
};

inline UnrolledParams resolve_defaults(UnrolledParams p, Index d1, Index d2) {
  if (p.beta == 0.0) p.beta = default_beta(d1, d2);
  if (p.beta_init == 0.0) p.beta_init = default_beta(d1, d2);
  return p;
}

inline TrainOutcome train_on(const std::vector<SynthTriple>& triples, const TrainJob& job) {
  if (triples.empty()) throw Error("train: empty training split");
  job.train.validate();
  const auto t0 = std::chrono::steady_clock::now();
  TargetSet targets = make_targets(triples, job.train.r, job.targets, job.train.workers);
  TrainOutcome out;
  out.unconverged_targets = targets.unconverged;
  out.target_seconds = seconds_since(t0);
  const DenseMatrix& M0 = triples.front().M_star;
  const UnrolledParams init = resolve_defaults(job.init, M0.rows(), M0.cols());
  out.report = train(targets.samples, job.train, init);
  out.params = init;
  out.params.beta = out.report.final_beta;
  out.params.gamma = out.report.final_gamma;
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalMethod {
  std::string label;  // written to the "method" column
  Method method = Method::accaltproj;
  UnrolledParams params;
};

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1), 0 for n = 1
};

inline MetricSummary summarize(const std::vector<double>& xs) {
  MetricSummary s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

struct EvalResult {
  std::string label;
  std::vector<MetricsReport> samples;
  std::size_t unconverged = 0;
  double seconds = 0.0;

  MetricSummary summary(const std::string& metric) const {
    std::vector<double> xs;
    xs.reserve(samples.size());
    for (const auto& m : samples) {
      if (metric == "eps_L") xs.push_back(m.eps_L);
      else if (metric == "eps_S") xs.push_back(m.eps_S);
      else if (metric == "eps_M") xs.push_back(m.eps_M);
      else if (metric == "eps_supp") xs.push_back(m.eps_supp);
      else throw Error("unknown metric " + metric);
    }
    return summarize(xs);
  }
};

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"eps_L", "eps_S", "eps_M", "eps_supp"};
  return names;
}

inline EvalResult evaluate_method(const std::vector<SynthTriple>& test, Index r,
                                  const EvalMethod& em, double supp_tol = 0.0,
                                  unsigned workers = 1, int case_id = 0) {
  if (test.empty()) throw Error("eval: empty test split");
  const auto t0 = std::chrono::steady_clock::now();
  EvalResult out;
  out.label = em.label;
  out.samples.resize(test.size());
  std::vector<char> ok(test.size(), 1);
  parallel_for(test.size(), workers, [&](std::size_t i) {
    const SynthTriple& t = test[i];
    const SolverConfig cfg = SolverConfig::defaults_for(t.M_star.rows(), t.M_star.cols(), r);
    const Decomposition d = decompose(t.M_star, em.method, cfg, em.params);
    ok[i] = d.converged ? 1 : 0;
    MetricsReport rep = evaluate(t.L_star, t.S_star, t.M_star, d.L, d.S, supp_tol);
    rep.tags["method"] = em.label;
    rep.tags["case"] = std::to_string(case_id);
    rep.tags["seed"] = std::to_string(i);
    out.samples[i] = std::move(rep);
  });
  out.unconverged = static_cast<std::size_t>(std::count(ok.begin(), ok.end(), 0));
  out.seconds = seconds_since(t0);
  return out;
}

/// Aggregate CSV, one row per (method, metric).
inline std::string eval_csv_header() { return "method,metric,mean,std,n"; }

inline std::string eval_csv(const std::vector<EvalResult>& results) {
  std::string out = eval_csv_header() + "\n";
  char buf[64];
  for (const auto& r : results) {
    for (const auto& name : metric_names()) {
      const MetricSummary s = r.summary(name);
      out += r.label + "," + name + ",";
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,", s.mean, s.std);
      out += buf;
      out += std::to_string(r.samples.size()) + "\n";
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Faces

struct FacesResult {
  DenseMatrix M;
  Decomposition decomposition;
  Index height = 0;
  Index width = 0;
  double eps_M = 0.0;
  double sigma2_over_sigma1 = 0.0;  // of the low-rank output
  std::vector<std::string> written;
};

inline std::vector<fs::path> list_pgm(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".pgm") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw Error("no .pgm images in " + dir.string());
  return out;
}

/// Stacks the images, decomposes the stack and writes L.bin, S.bin plus
/// per-image low_rank/ and sparse/ PGMs under out_dir. PGMs are clamped to
/// [0, 255]; the matrices are not.
inline FacesResult run_faces(const std::vector<fs::path>& images, Method method,
                             const SolverConfig& solver, UnrolledParams net,
                             const fs::path& out_dir) {
  if (images.empty()) throw Error("faces: no images");
  FacesResult res;
  std::vector<GrayImage> loaded;
  for (const auto& p : images) loaded.push_back(read_pgm(p));
  res.height = loaded.front().height();
  res.width = loaded.front().width();
  try {
    res.M = stack_images(loaded);
  } catch (const Error& e) {
    throw Error(std::string(e.what()) + " (dimension mismatch)");
  }
  net = resolve_defaults(net, res.M.rows(), res.M.cols());
  res.decomposition = decompose(res.M, method, solver, net);
  const Decomposition& d = res.decomposition;
  const double mnorm = res.M.norm();
  res.eps_M = mnorm == 0.0 ? 0.0 : (res.M - d.L - d.S).norm() / mnorm;
  const Vector sv = d.L.jacobiSvd().singularValues();
  res.sigma2_over_sigma1 = sv.size() > 1 && sv(0) > 0.0 ? sv(1) / sv(0) : 0.0;

  fs::create_directories(out_dir / "low_rank");
  fs::create_directories(out_dir / "sparse");
  save_matrix(d.L, out_dir / "L.bin");
  save_matrix(d.S, out_dir / "S.bin");
  res.written = {"L.bin", "S.bin"};
  for (std::size_t k = 0; k < images.size(); ++k) {
    const Index j = static_cast<Index>(k);
    const std::string name = images[k].stem().string() + ".pgm";
    write_pgm(column_to_image(d.L.col(j), res.height, res.width), out_dir / "low_rank" / name);
    write_pgm(column_to_image(d.S.col(j), res.height, res.width), out_dir / "sparse" / name);
    res.written.push_back("low_rank/" + name);
    res.written.push_back("sparse/" + name);
  }
  return res;
}

}  // namespace rpca

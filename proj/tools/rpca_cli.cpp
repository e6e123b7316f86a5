// rpca: generation, decomposition, training, evaluation and the face
// pipeline from the command line.
//
// Exit codes: 0 success, 1 solver did not converge (outputs still written),
// 2 usage or input error.

#include "rpca/experiments.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <sstream>

namespace {

using namespace rpca;

constexpr int kExitOk = 0;
constexpr int kExitNotConverged = 1;
constexpr int kExitUsage = 2;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

fs::path sidecar_manifest(const fs::path& out) {
  return out.parent_path() / (out.filename().string() + ".manifest.json");
}

json solver_to_json(const SolverConfig& c) {
  return {{"r", c.r},         {"epsilon", c.epsilon}, {"beta", c.beta},
          {"beta_init", c.beta_init}, {"gamma", c.gamma}, {"max_iters", c.max_iters}};
}

// Network and solver knobs shared by decompose and faces.
struct MethodFlags {
  std::string method = "accaltproj";
  std::string params_path;
  double beta = 0, gamma = 0, beta_init = 0, upsilon = 0, epsilon = 0;
  int layers = 0, max_iters = 0;
  std::string shrinkage;
  CLI::Option *o_beta{}, *o_gamma{}, *o_beta_init{}, *o_upsilon{}, *o_layers{}, *o_shrinkage{},
      *o_epsilon{}, *o_max_iters{};

  void attach(CLI::App* app) {
    app->add_option("--method", method, "accaltproj or unrolled")
        ->check(CLI::IsMember({"accaltproj", "unrolled"}))
        ->capture_default_str();
    app->add_option("--params", params_path, "trained parameter JSON (unrolled)");
    o_beta = app->add_option("--beta", beta, "threshold scale");
    o_gamma = app->add_option("--gamma", gamma, "threshold decay");
    o_beta_init = app->add_option("--beta-init", beta_init, "initial threshold scale");
    o_upsilon = app->add_option("--upsilon", upsilon, "firm-threshold concavity (unrolled)");
    o_layers = app->add_option("--layers", layers, "network depth K (unrolled)");
    o_shrinkage = app->add_option("--shrinkage", shrinkage, "firm, soft or hard (unrolled)")
                      ->check(CLI::IsMember({"firm", "soft", "hard"}));
    o_epsilon = app->add_option("--epsilon", epsilon, "stopping tolerance (accaltproj)");
    o_max_iters = app->add_option("--max-iters", max_iters, "iteration cap (accaltproj)");
  }

  SolverConfig solver(Index d1, Index d2, Index r) const {
    SolverConfig c = SolverConfig::defaults_for(d1, d2, r);
    if (o_beta->count()) c.beta = beta;
    if (o_gamma->count()) c.gamma = gamma;
    c.beta_init = o_beta_init->count() ? beta_init : c.beta;
    if (o_epsilon->count()) c.epsilon = epsilon;
    if (o_max_iters->count()) c.max_iters = max_iters;
    c.validate();
    return c;
  }

  UnrolledParams net(Index d1, Index d2) const {
    UnrolledParams p = params_path.empty() ? UnrolledParams::defaults_for(d1, d2)
                                           : load_params(params_path);
    if (o_beta->count()) p.beta = beta;
    if (o_gamma->count()) p.gamma = gamma;
    if (o_beta_init->count()) p.beta_init = beta_init;
    if (o_upsilon->count()) p.upsilon = upsilon;
    if (o_layers->count()) p.layers = layers;
    if (o_shrinkage->count()) p.shrinkage = parse_shrinkage(shrinkage);
    p.validate();
    return p;
  }
};

json decomposition_json(const Decomposition& d, Method m) {
  return {{"method", std::string(to_string(m))}, {"converged", d.converged},
          {"iterations", d.iterations},          {"residuals", d.residuals},
          {"seconds", d.seconds}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust PCA by accelerated alternating projections and its unrolled network"};
  app.require_subcommand(1);
  app.footer(
      "Exit codes: 0 success, 1 solver did not converge (outputs written), 2 usage or input error.\n"
      "Worker count defaults to $RPCA_WORKERS, else the number of hardware threads.");
  unsigned jobs = default_workers();
  app.add_option("-j,--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  const std::vector<std::string> args(argv, argv + argc);

  // gen ---------------------------------------------------------------------
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  int gen_case = 0;
  SynthCase gen_sc;
  std::size_t gen_total = 300, gen_train = 180;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  auto* o_case = gen->add_option("--case", gen_case, "preset 1-4: (alpha,c) = (0.1,1) (0.3,1) (0.01,1) (0.1,10)");
  auto* o_d = gen->add_option("--d", gen_sc.d, "dimension")->capture_default_str();
  auto* o_r = gen->add_option("--r", gen_sc.r, "rank")->capture_default_str();
  auto* o_alpha = gen->add_option("--alpha", gen_sc.alpha, "sparsity fraction")->capture_default_str();
  auto* o_c = gen->add_option("--c", gen_sc.c, "sparse amplitude multiplier")->capture_default_str();
  for (auto* o : {o_d, o_r, o_alpha, o_c}) o_case->excludes(o);
  gen->add_option("--total", gen_total, "number of samples")->capture_default_str();
  gen->add_option("--train", gen_train, "training samples (the rest are test)")->capture_default_str();
  gen->add_option("--seed", gen_seed, "base seed; sample i uses seed + i")->capture_default_str();
  gen->add_option("-o,--out", gen_out, "output directory")->required();

  // decompose ---------------------------------------------------------------
  auto* dec = app.add_subcommand("decompose", "decompose one matrix file (.bin or .csv)");
  std::string dec_in, dec_out, dec_truth;
  Index dec_rank = 0;
  double dec_supp_tol = 0.0;
  MethodFlags dec_flags;
  dec->add_option("matrix", dec_in, "input matrix")->required();
  dec->add_option("-r,--rank", dec_rank, "target rank")->required()->check(CLI::PositiveNumber);
  dec_flags.attach(dec);
  dec->add_option("--truth-dir", dec_truth, "directory with L.bin and S.bin for error metrics");
  dec->add_option("--supp-tol", dec_supp_tol, "zero tolerance for the support error")->capture_default_str();
  dec->add_option("-o,--out", dec_out, "output directory")->required();

  // train -------------------------------------------------------------------
  auto* tr = app.add_subcommand("train", "learn (beta, gamma) of the unrolled network");
  std::string tr_data, tr_out, tr_targets = "from-solver", tr_batch = "full", tr_opt = "adam",
                       tr_shrink = "firm";
  TrainJob job;
  double tr_lr = 0.0;
  Index tr_rank = 0;
  tr->add_option("dataset", tr_data, "dataset directory written by gen")->required();
  tr->add_option("--layers", job.init.layers, "network depth K")->capture_default_str();
  tr->add_option("--epochs", job.train.epochs, "training epochs")->capture_default_str();
  auto* o_lr = tr->add_option("--lr", tr_lr, "learning rate for both parameters");
  auto* o_lrb = tr->add_option("--lr-beta", job.train.lr_beta, "learning rate for beta")->capture_default_str();
  auto* o_lrg = tr->add_option("--lr-gamma", job.train.lr_gamma, "learning rate for gamma")->capture_default_str();
  o_lr->excludes(o_lrb)->excludes(o_lrg);
  tr->add_option("--fd-step", job.train.fd_step, "relative finite-difference step")->capture_default_str();
  tr->add_option("--targets", tr_targets, "ground-truth or from-solver")
      ->check(CLI::IsMember({"ground-truth", "from-solver"}))
      ->capture_default_str();
  tr->add_option("--target-tol", job.targets.tolerance, "solver tolerance for from-solver targets")
      ->capture_default_str();
  tr->add_option("--batch", tr_batch, "full or per-sample")
      ->check(CLI::IsMember({"full", "per-sample"}))
      ->capture_default_str();
  tr->add_option("--optimizer", tr_opt, "adam or gd")->check(CLI::IsMember({"adam", "gd"}))->capture_default_str();
  tr->add_option("--shrinkage", tr_shrink, "firm or soft (hard is not trainable)")
      ->check(CLI::IsMember({"firm", "soft", "hard"}))
      ->capture_default_str();
  tr->add_option("--upsilon", job.init.upsilon, "firm-threshold concavity")->capture_default_str();
  tr->add_option("--rank", tr_rank, "target rank (default: the dataset's)");
  tr->add_option("--seed", job.train.seed, "shuffle seed for per-sample batches")->capture_default_str();
  tr->add_option("-o,--out", tr_out, "output JSON")->required();

  // eval --------------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "aggregate errors on a dataset's test split");
  ev->footer(
      "Output CSV columns: method,metric,mean,std,n (std is the n-1 sample deviation).\n"
      "Per-sample CSV columns: " + MetricsReport::csv_header());
  std::string ev_data, ev_out, ev_methods = "accaltproj,unrolled", ev_params, ev_shrink, ev_per_sample;
  double ev_supp_tol = 0.0;
  ev->add_option("dataset", ev_data, "dataset directory written by gen")->required();
  ev->add_option("--methods", ev_methods, "comma-separated: accaltproj, unrolled")->capture_default_str();
  ev->add_option("--params", ev_params, "trained parameter JSON for unrolled");
  auto* o_ev_shrink = ev->add_option("--shrinkage", ev_shrink, "override the unrolled shrinkage")
                          ->check(CLI::IsMember({"firm", "soft", "hard"}));
  ev->add_option("--supp-tol", ev_supp_tol, "zero tolerance for the support error")->capture_default_str();
  ev->add_option("--per-sample", ev_per_sample, "also write per-sample metrics CSV");
  ev->add_option("-o,--out", ev_out, "output CSV")->required();

  // faces -------------------------------------------------------------------
  auto* fc = app.add_subcommand("faces", "decompose a stack of PGM images");
  std::vector<std::string> fc_inputs;
  std::string fc_out;
  Index fc_rank = 1;
  MethodFlags fc_flags;
  fc->add_option("images", fc_inputs, "a directory of .pgm files, or .pgm files")->required();
  fc->add_option("-r,--rank", fc_rank, "target rank")->capture_default_str()->check(CLI::PositiveNumber);
  fc_flags.attach(fc);
  fc->add_option("-o,--out", fc_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentManifest man;
    man.argv = args;

    if (*gen) {
      GenConfig cfg;
      if (o_case->count()) {
        cfg.synth = case_preset(gen_case, gen_seed);
        cfg.case_id = gen_case;
      } else {
        cfg.synth = gen_sc;
        cfg.synth.seed = gen_seed;
      }
      cfg.total = gen_total;
      cfg.train = gen_train;
      cfg.workers = jobs;
      const DatasetInfo info = write_dataset(cfg, gen_out, args);
      std::cout << "wrote " << info.total << " samples (" << info.train << " train, " << info.test()
                << " test) to " << gen_out << "\n";
      return kExitOk;
    }

    if (*dec) {
      const DenseMatrix M = load_matrix(dec_in);
      const Method method = parse_method(dec_flags.method);
      const SolverConfig scfg = dec_flags.solver(M.rows(), M.cols(), dec_rank);
      const UnrolledParams net = dec_flags.net(M.rows(), M.cols());
      const Decomposition d = decompose(M, method, scfg, net);
      fs::create_directories(dec_out);
      save_matrix(d.L, fs::path(dec_out) / "L.bin");
      save_matrix(d.S, fs::path(dec_out) / "S.bin");
      json report = decomposition_json(d, method);
      report["schema"] = "rpca.decompose/1";
      if (!dec_truth.empty()) {
        const DenseMatrix L_star = load_matrix(fs::path(dec_truth) / "L.bin");
        const DenseMatrix S_star = load_matrix(fs::path(dec_truth) / "S.bin");
        MetricsReport m = evaluate(L_star, S_star, M, d.L, d.S, dec_supp_tol);
        m.tags["method"] = std::string(to_string(method));
        report["metrics"] = m.to_json();
      } else {
        const double n = M.norm();
        report["eps_M"] = n == 0.0 ? 0.0 : (M - d.L - d.S).norm() / n;
      }
      write_json(report, fs::path(dec_out) / "report.json");
      man.command = "decompose";
      man.config = {{"input", dec_in}, {"rank", dec_rank}, {"truth_dir", dec_truth}, {"supp_tol", dec_supp_tol}};
      man.config[method == Method::accaltproj ? "solver" : "params"] =
          method == Method::accaltproj ? solver_to_json(scfg) : params_to_json(net);
      man.artifacts = {"L.bin", "S.bin", "report.json"};
      man.wall_seconds["total"] = seconds_since(t0);
      man.write(fs::path(dec_out) / "manifest.json");
      std::cout << report.dump(2) << "\n";
      return d.converged ? kExitOk : kExitNotConverged;
    }

    if (*tr) {
      job.train.validate();
      const DatasetInfo info = read_dataset_info(tr_data);
      if (o_lr->count()) job.train.lr_beta = job.train.lr_gamma = tr_lr;
      job.train.r = tr_rank > 0 ? tr_rank : info.synth.r;
      job.train.batch = tr_batch == "full" ? BatchMode::full : BatchMode::per_sample;
      job.train.optimizer = tr_opt == "adam" ? Optimizer::adam : Optimizer::gd;
      job.train.workers = jobs;
      job.targets.mode = parse_target_mode(tr_targets);
      job.init.shrinkage = parse_shrinkage(tr_shrink);
      job.train.validate();
      if (job.init.shrinkage == Shrinkage::hard) {
        throw Error("train: hard thresholding is not subdifferentiable and cannot be trained");
      }
      if (info.train == 0) throw Error("train: dataset has an empty training split");
      const TrainOutcome out = train_on(load_split(info, true), job);
      write_json(out.to_json(), tr_out);
      man.command = "train";
      man.config = {{"dataset", tr_data},
                    {"rank", job.train.r},
                    {"epochs", job.train.epochs},
                    {"lr_beta", job.train.lr_beta},
                    {"lr_gamma", job.train.lr_gamma},
                    {"fd_step", job.train.fd_step},
                    {"batch", tr_batch},
                    {"optimizer", tr_opt},
                    {"targets", tr_targets},
                    {"target_tol", job.targets.tolerance},
                    {"target_max_iters", job.targets.max_iters},
                    {"init", params_to_json(resolve_defaults(job.init, info.synth.d, info.synth.d))}};
      man.seeds = {job.train.seed};
      man.artifacts = {tr_out};
      man.wall_seconds["targets"] = out.target_seconds;
      man.wall_seconds["train"] = out.report.wall_seconds;
      man.wall_seconds["total"] = seconds_since(t0);
      man.write(sidecar_manifest(tr_out));
      std::cout << "beta " << out.report.initial_beta << " -> " << out.params.beta << ", gamma "
                << out.report.initial_gamma << " -> " << out.params.gamma << "\n";
      return kExitOk;
    }

    if (*ev) {
      const DatasetInfo info = read_dataset_info(ev_data);
      if (info.test() == 0) throw Error("eval: empty test split");
      std::vector<EvalMethod> methods;
      for (const auto& name : split_list(ev_methods)) {
        EvalMethod em;
        em.label = name;
        em.method = parse_method(name);
        if (em.method == Method::unrolled) {
          if (ev_params.empty()) throw Error("eval: missing trained params for unrolled (--params)");
          em.params = load_params(ev_params);
          if (o_ev_shrink->count()) em.params.shrinkage = parse_shrinkage(ev_shrink);
          if (em.params.shrinkage != Shrinkage::firm) em.label += "-" + std::string(to_string(em.params.shrinkage));
        }
        methods.push_back(em);
      }
      if (methods.empty()) throw Error("eval: no methods given");
      const auto test = load_split(info, false);
      std::vector<EvalResult> results;
      for (const auto& em : methods) {
        results.push_back(evaluate_method(test, info.synth.r, em, ev_supp_tol, jobs, info.case_id));
      }
      const std::string csv = eval_csv(results);
      {
        if (fs::path(ev_out).has_parent_path()) fs::create_directories(fs::path(ev_out).parent_path());
        std::ofstream out(ev_out);
        if (!out) throw Error("cannot write " + ev_out);
        out << csv;
      }
      if (!ev_per_sample.empty()) {
        std::ofstream out(ev_per_sample);
        if (!out) throw Error("cannot write " + ev_per_sample);
        out << MetricsReport::csv_header() << "\n";
        for (const auto& r : results)
          for (const auto& m : r.samples) out << m.csv_row() << "\n";
      }
      man.command = "eval";
      man.config = {{"dataset", ev_data}, {"methods", ev_methods}, {"supp_tol", ev_supp_tol}};
      for (const auto& em : methods) {
        if (em.method == Method::unrolled) man.config["params"] = params_to_json(em.params);
      }
      man.artifacts = {ev_out};
      if (!ev_per_sample.empty()) man.artifacts.push_back(ev_per_sample);
      for (const auto& r : results) man.wall_seconds[r.label] = r.seconds;
      man.wall_seconds["total"] = seconds_since(t0);
      man.write(sidecar_manifest(ev_out));
      std::cout << csv;
      std::size_t unconverged = 0;
      for (const auto& r : results) unconverged += r.unconverged;
      return unconverged == 0 ? kExitOk : kExitNotConverged;
    }

    if (*fc) {
      std::vector<fs::path> images;
      if (fc_inputs.size() == 1 && fs::is_directory(fc_inputs.front())) {
        images = list_pgm(fc_inputs.front());
      } else {
        for (const auto& s : fc_inputs) images.emplace_back(s);
      }
      const Method method = parse_method(fc_flags.method);
      // The stack is (height*width) x count; read one header for the shape.
      const GrayImage first = read_pgm(images.front());
      const Index d1 = first.height() * first.width();
      const Index d2 = static_cast<Index>(images.size());
      const SolverConfig scfg = fc_flags.solver(d1, d2, fc_rank);
      const UnrolledParams net = fc_flags.net(d1, d2);
      const FacesResult res = run_faces(images, method, scfg, net, fc_out);
      json report = decomposition_json(res.decomposition, method);
      report["schema"] = "rpca.faces/1";
      report["height"] = res.height;
      report["width"] = res.width;
      report["count"] = images.size();
      report["eps_M"] = res.eps_M;
      report["sigma2_over_sigma1"] = res.sigma2_over_sigma1;
      report.erase("residuals");
      write_json(report, fs::path(fc_out) / "report.json");
      man.command = "faces";
      man.config = {{"rank", fc_rank}};
      man.config[method == Method::accaltproj ? "solver" : "params"] =
          method == Method::accaltproj ? solver_to_json(scfg) : params_to_json(net);
      for (const auto& p : images) man.config["images"].push_back(p.string());
      man.artifacts = res.written;
      man.artifacts.push_back("report.json");
      man.wall_seconds["decompose"] = res.decomposition.seconds;
      man.wall_seconds["total"] = seconds_since(t0);
      man.write(fs::path(fc_out) / "manifest.json");
      std::cout << report.dump(2) << "\n";
      return res.decomposition.converged ? kExitOk : kExitNotConverged;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

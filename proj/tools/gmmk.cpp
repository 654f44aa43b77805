// Command-line front end: simulate, fit, predict, bench-precond, spectrum.
// Exit codes: 0 success, 1 numerical failure, 2 usage/schema error.

#include <CLI11.hpp>

#include <gmmk/io.hpp>
#include <gmmk/optimizer.hpp>
#include <gmmk/prediction.hpp>
#include <gmmk/simulate.hpp>
#include <gmmk/slq.hpp>
#include <gmmk/spectral.hpp>

#include <chrono>
#include <iostream>

namespace {

using namespace gmmk;

constexpr int kExitNumerical = 1;
constexpr int kExitUsage = 2;

LikelihoodKind parse_likelihood(const std::string& name) {
  if (name == "gaussian") return LikelihoodKind::GaussianIdentity;
  if (name == "bernoulli") return LikelihoodKind::BernoulliLogit;
  throw CLI::ValidationError("--likelihood", "unknown likelihood: " + name);
}

struct CommonModelOptions {
  std::string response = "y";
  std::vector<std::string> covariates;
  std::vector<std::string> groups;
  std::string likelihood = "gaussian";

  void attach(CLI::App* cmd) {
    cmd->add_option("--response", response, "response column name");
    cmd->add_option("--covariates", covariates,
                    "fixed-effect columns (intercept is implicit)")
        ->delimiter(',');
    cmd->add_option("--groups", groups, "grouping factor columns")
        ->delimiter(',')
        ->required();
    cmd->add_option("--likelihood", likelihood, "gaussian | bernoulli")
        ->check(CLI::IsMember({"gaussian", "bernoulli"}));
  }
  ModelColumns columns() const { return {response, covariates, groups}; }
};

struct KrylovOptions {
  std::string backend = "krylov";
  std::string precond = "ssor";
  index_t t = 50;
  index_t rank = 50;
  double cg_tol = 1e-2;
  double cg_tol_predict = 1e-3;
  index_t cg_max_iter = 1000;
  std::uint64_t seed = 0;

  void attach(CLI::App* cmd, bool with_backend = true) {
    if (with_backend) {
      cmd->add_option("--backend", backend, "krylov | cholesky")
          ->check(CLI::IsMember({"krylov", "cholesky"}));
    }
    cmd->add_option("--precond", precond,
                    "ssor | zic | diagonal | pivoted_cholesky | lanczos | none");
    cmd->add_option("-t,--num-probes", t, "probe vectors for SLQ/STE");
    cmd->add_option("--rank", rank, "rank of the low-rank preconditioners");
    cmd->add_option("--cg-tol", cg_tol, "CG tolerance for likelihood solves");
    cmd->add_option("--cg-tol-predict", cg_tol_predict,
                    "CG tolerance for prediction solves");
    cmd->add_option("--cg-max-iter", cg_max_iter, "CG iteration cap");
    cmd->add_option("--seed", seed, "probe seed (sample average approximation)")
        ->required();
  }
  KrylovConfig config() const {
    KrylovConfig cfg;
    cfg.precond = parse_precond_kind(precond);
    cfg.num_probes = t;
    cfg.lowrank_rank = rank;
    cfg.cg_tol = cg_tol;
    cfg.cg_tol_predict = cg_tol_predict;
    cfg.cg_max_iter = cg_max_iter;
    cfg.probe_seed = seed;
    return cfg;
  }
};

int cmd_simulate(const std::string& out_csv, const std::string& truth_path,
                 SimConfig cfg, const std::string& test_csv) {
  SimData sim = simulate_dataset(cfg);
  write_dataset_csv(out_csv, sim.train.y, sim.train.X, sim.train.group_labels);
  if (!test_csv.empty() && cfg.n_test > 0) {
    write_dataset_csv(test_csv, sim.y_test, sim.X_test, sim.test_labels);
  }
  if (!truth_path.empty()) {
    write_truth_json(truth_path, cfg, sim.truth, cfg.m_k);
  }
  return 0;
}

int cmd_fit(const std::string& data_path, const std::string& out_path,
            const CommonModelOptions& model, const KrylovOptions& kopts,
            const OptimizerConfig& ocfg) {
  CsvTable table = read_csv(data_path);
  GroupedDesign data = design_from_table(table, model.columns());
  const LikelihoodKind kind = parse_likelihood(model.likelihood);
  FitResult fit = gmmk::fit(data, kind, default_init(data, kind),
                            parse_backend(kopts.backend), kopts.config(), ocfg);
  write_fit_json(out_path, fit, model.columns());
  std::cout << "nll " << format_double(fit.final_nll()) << " after "
            << fit.iterations << " iterations (" << fit.convergence_reason << ", "
            << format_double(fit.wall_seconds) << " s)\n";
  return 0;
}

int cmd_predict(const std::string& train_path, const std::string& test_path,
                const std::string& fit_path, const std::string& out_path,
                const std::string& method, index_t s, index_t rank,
                std::uint64_t seed, index_t gh_points, double cg_tol_predict) {
  ModelColumns cols;
  FitResult fit = read_fit_json(fit_path, &cols);
  fit.krylov.cg_tol_predict = cg_tol_predict;
  CsvTable train_table = read_csv(train_path);
  GroupedDesign data = design_from_table(train_table, cols);

  CsvTable test_table = read_csv(test_path);
  const index_t n_p = test_table.num_rows();
  den_mat_t X_p(n_p, static_cast<index_t>(cols.covariates.size()) + 1);
  X_p.col(0).setOnes();
  for (std::size_t j = 0; j < cols.covariates.size(); ++j) {
    X_p.col(j + 1) = test_table.numeric_column(cols.covariates[j]);
  }
  std::vector<std::vector<std::string>> labels_p;
  for (const auto& g : cols.groups) {
    labels_p.push_back(test_table.columns[test_table.column_index(g)]);
  }
  PredictionSpec spec = build_prediction_spec(data.re, std::move(X_p), labels_p);

  const Backend backend =
      method == "cholesky" ? Backend::Cholesky : Backend::Krylov;
  LatentState state = make_latent_state(data, fit.params, fit.likelihood, backend,
                                        fit.krylov);
  PredictiveDist dist;
  if (method == "algorithm1") {
    dist = predict_var_stochastic_diag(spec, data, state, s, fit.krylov, seed);
  } else if (method == "algorithm2") {
    dist = predict_cov_sim_normal(spec, data, state, s, fit.krylov, seed, false);
  } else if (method == "algorithm2-diag") {
    dist = predict_cov_sim_normal(spec, data, state, s, fit.krylov, seed, true);
  } else if (method == "algorithm3") {
    dist = predict_cov_sim_psi(spec, data, state, s, fit.krylov, seed);
  } else if (method == "lanczos") {
    dist = predict_var_lanczos(spec, data, state, rank);
  } else if (method == "cholesky") {
    dist = chol_predict(spec, data, state);
  } else {
    throw CLI::ValidationError("--method", "unknown method: " + method);
  }
  predict_response(dist, fit.likelihood, fit.params.sigma2, gh_points);
  write_predictions_csv(out_path, dist, fit.likelihood);
  std::cout << "wrote " << n_p << " predictions (" << dist.method;
  if (dist.clamped > 0) std::cout << ", " << dist.clamped << " variances clamped";
  std::cout << ")\n";
  return 0;
}

int cmd_bench_precond(const std::string& data_path, const std::string& out_path,
                      const CommonModelOptions& model,
                      const std::vector<std::string>& precond_names, index_t reps,
                      index_t t, double cg_tol, std::uint64_t seed,
                      const vec_t& sigma2_re_in, double sigma2, bool with_cholesky) {
  CsvTable table = read_csv(data_path);
  GroupedDesign data = design_from_table(table, model.columns());
  const LikelihoodKind kind = parse_likelihood(model.likelihood);
  ModelParams params;
  params.sigma2_re = sigma2_re_in.size() > 0
                         ? sigma2_re_in
                         : vec_t::Constant(data.re.num_factors, 0.25);
  if (params.sigma2_re.size() != data.re.num_factors) {
    throw SchemaError("--sigma2-re needs one value per grouping factor");
  }
  params.sigma2 = sigma2;
  params.beta = vec_t::Zero(data.X.cols());

  std::vector<std::string> header{"preconditioner", "mean_nll", "sd_nll",
                                  "mean_seconds"};
  std::vector<std::vector<std::string>> columns(4);

  // the mode (and so W) is shared across preconditioners and re-seeds
  ModeState mode;
  KrylovConfig base_cfg;
  base_cfg.num_probes = t;
  base_cfg.cg_tol = cg_tol;
  base_cfg.probe_seed = seed;
  if (kind != LikelihoodKind::GaussianIdentity) {
    mode = find_mode(data, params, kind, Backend::Krylov, base_cfg);
  }

  for (const auto& name : precond_names) {
    KrylovConfig cfg = base_cfg;
    cfg.precond = parse_precond_kind(name);
    vec_t nlls(reps);
    double seconds = 0.0;
    for (index_t r = 0; r < reps; ++r) {
      cfg.probe_seed = seed + 1000003ULL * r;
      const auto t0 = std::chrono::steady_clock::now();
      NLLBundle bundle =
          kind == LikelihoodKind::GaussianIdentity
              ? gaussian_nll(data, params, Backend::Krylov, cfg, false)
              : laplace_nll(data, params, kind, mode, Backend::Krylov, cfg, false);
      seconds +=
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      nlls[r] = bundle.nll;
    }
    const double mean = nlls.mean();
    const double sd =
        reps > 1 ? std::sqrt((nlls.array() - mean).square().sum() / (reps - 1)) : 0.0;
    columns[0].push_back(name);
    columns[1].push_back(format_double(mean));
    columns[2].push_back(format_double(sd));
    columns[3].push_back(format_double(seconds / reps));
  }

  if (with_cholesky) {
    const auto t0 = std::chrono::steady_clock::now();
    NLLBundle exact =
        kind == LikelihoodKind::GaussianIdentity
            ? gaussian_nll(data, params, Backend::Cholesky, base_cfg, false)
            : laplace_nll(data, params, kind, mode, Backend::Cholesky, base_cfg,
                          false);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    columns[0].push_back("cholesky");
    columns[1].push_back(format_double(exact.nll));
    columns[2].push_back(format_double(0.0));
    columns[3].push_back(format_double(secs));
  }
  write_csv(out_path, header, columns);
  return 0;
}

int cmd_spectrum(const std::string& data_path, const std::string& out_path,
                 const CommonModelOptions& model, const vec_t& sigma2_re_in,
                 double sigma2, bool full_spectrum, index_t dim_cap) {
  CsvTable table = read_csv(data_path);
  GroupedDesign data = design_from_table(table, model.columns());
  const LikelihoodKind kind = parse_likelihood(model.likelihood);
  ModelParams params;
  params.sigma2_re = sigma2_re_in.size() > 0
                         ? sigma2_re_in
                         : vec_t::Constant(data.re.num_factors, 0.25);
  if (params.sigma2_re.size() != data.re.num_factors) {
    throw SchemaError("--sigma2-re needs one value per grouping factor");
  }
  params.sigma2 = sigma2;
  params.beta = vec_t::Zero(data.X.cols());

  vec_t W;
  if (kind == LikelihoodKind::GaussianIdentity) {
    W = vec_t::Constant(data.num_obs(), 1.0 / params.sigma2);
  } else {
    KrylovConfig cfg;
    ModeState mode = find_mode(data, params, kind, Backend::Krylov, cfg);
    W = mode.derivs.W();
  }
  const vec_t sig_inv = params.sigma_inv_diag(data.re.levels_per_factor);
  NormalMatrix nm = assemble_normal_matrix(data.Z, W, sig_inv);
  auto P_ssor = make_preconditioner(PrecondKind::SSOR, nm);
  auto P_diag = make_preconditioner(PrecondKind::Diagonal, nm);
  auto P_none = make_preconditioner(PrecondKind::None, nm);
  std::vector<SpectralReport> spectra{
      preconditioned_spectrum(nm, *P_ssor, dim_cap),
      preconditioned_spectrum(nm, *P_diag, dim_cap),
      preconditioned_spectrum(nm, *P_none, dim_cap)};
  DesignInfo design = analyze_design(data.Z, kind == LikelihoodKind::GaussianIdentity);
  TheoremReport theorems = theorem_bound_report(spectra[0], spectra[1], spectra[2],
                                                nm, data.Z, params, design);
  write_spectral_json(out_path, spectra, theorems, full_spectrum);
  for (const auto& c : theorems.checks) {
    std::cout << verdict_name(c.verdict) << "  " << c.name << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generalized mixed effects models with crossed random effects:\n"
               "matrix-free estimation and prediction with an exact reference"};
  app.require_subcommand(1);
  app.fallthrough();  // app-level flags like --config work after the subcommand
  app.set_config("--config", "", "read options from an INI/TOML file");
  app.get_formatter()->column_width(34);

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "generate a synthetic dataset");
  sim_cmd->configurable();
  std::string sim_out = "data.csv", sim_truth, sim_test;
  SimConfig sim_cfg;
  std::vector<index_t> sim_m = {100, 100};
  std::string sim_lik = "gaussian", sim_design = "balanced";
  std::vector<double> sim_sigma2_re;
  sim_cmd->add_option("--out", sim_out, "output dataset CSV")->required();
  sim_cmd->add_option("--truth", sim_truth, "output truth JSON");
  sim_cmd->add_option("--test-out", sim_test, "output test CSV (with --n-test)");
  sim_cmd->add_option("--n", sim_cfg.n, "training rows");
  sim_cmd->add_option("--n-test", sim_cfg.n_test, "test rows");
  sim_cmd->add_option("--m", sim_m, "levels per factor")->delimiter(',');
  sim_cmd->add_option("--sigma2", sim_cfg.sigma2, "error variance");
  sim_cmd->add_option("--sigma2-re", sim_sigma2_re, "variance per factor")
      ->delimiter(',');
  sim_cmd->add_option("--likelihood", sim_lik, "gaussian | bernoulli")
      ->check(CLI::IsMember({"gaussian", "bernoulli"}));
  sim_cmd->add_option("--design", sim_design, "balanced | biregular | unbalanced")
      ->check(CLI::IsMember({"balanced", "biregular", "unbalanced"}));
  sim_cmd->add_option("--covariates", sim_cfg.n_covariates, "covariate count");
  sim_cmd->add_option("--seed", sim_cfg.seed, "simulation seed")->required();

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "estimate model parameters");
  fit_cmd->configurable();
  std::string fit_data, fit_out = "fit.json";
  CommonModelOptions fit_model;
  KrylovOptions fit_kopts;
  OptimizerConfig fit_ocfg;
  fit_cmd->add_option("--data", fit_data, "training CSV")->required();
  fit_cmd->add_option("--out", fit_out, "output fit JSON");
  fit_model.attach(fit_cmd);
  fit_kopts.attach(fit_cmd);
  fit_cmd->add_option("--max-iters", fit_ocfg.max_iters, "optimizer iteration cap");
  fit_cmd->add_option("--grad-tol", fit_ocfg.grad_tol, "gradient tolerance");
  fit_cmd->add_flag("--fisher-scoring", fit_ocfg.fisher_scoring,
                    "Fisher-scoring steps for the Gaussian variance parameters");

  // predict
  auto* pred_cmd = app.add_subcommand("predict", "posterior predictive summaries");
  pred_cmd->configurable();
  std::string pred_train, pred_test, pred_fit, pred_out = "predictions.csv";
  std::string pred_method = "algorithm1";
  index_t pred_s = 1000, pred_rank = 50, pred_gh = 20;
  std::uint64_t pred_seed = 0;
  double pred_cg_tol = 1e-3;
  pred_cmd->add_option("--train", pred_train, "training CSV")->required();
  pred_cmd->add_option("--test", pred_test, "prediction rows CSV")->required();
  pred_cmd->add_option("--fit", pred_fit, "fit JSON")->required();
  pred_cmd->add_option("--out", pred_out, "output predictions CSV");
  pred_cmd
      ->add_option("--method", pred_method,
                   "algorithm1 | algorithm2 | algorithm2-diag | algorithm3 | "
                   "lanczos | cholesky")
      ->check(CLI::IsMember({"algorithm1", "algorithm2", "algorithm2-diag",
                             "algorithm3", "lanczos", "cholesky"}));
  pred_cmd->add_option("-s,--samples", pred_s, "simulation samples");
  pred_cmd->add_option("--rank", pred_rank, "Lanczos rank");
  pred_cmd->add_option("--gh-points", pred_gh, "Gauss-Hermite nodes");
  pred_cmd->add_option("--cg-tol-predict", pred_cg_tol, "CG tolerance");
  pred_cmd->add_option("--seed", pred_seed, "sampling seed")->required();

  // bench-precond
  auto* bench_cmd =
      app.add_subcommand("bench-precond", "re-evaluate the nll per preconditioner");
  bench_cmd->configurable();
  std::string bench_data, bench_out = "bench.csv";
  CommonModelOptions bench_model;
  std::vector<std::string> bench_preconds{"ssor", "zic", "diagonal", "none"};
  index_t bench_reps = 30, bench_t = 50;
  double bench_cg_tol = 1e-2, bench_sigma2 = 0.25;
  std::vector<double> bench_sigma2_re;
  std::uint64_t bench_seed = 0;
  bool bench_with_chol = false;
  bench_cmd->add_option("--data", bench_data, "dataset CSV")->required();
  bench_cmd->add_option("--out", bench_out, "output table CSV");
  bench_model.attach(bench_cmd);
  bench_cmd->add_option("--preconds", bench_preconds, "preconditioners to compare")
      ->delimiter(',');
  bench_cmd->add_option("--reps", bench_reps, "re-seeded evaluations");
  bench_cmd->add_option("-t,--num-probes", bench_t, "probe vectors");
  bench_cmd->add_option("--cg-tol", bench_cg_tol, "CG tolerance");
  bench_cmd->add_option("--sigma2", bench_sigma2, "error variance");
  bench_cmd->add_option("--sigma2-re", bench_sigma2_re, "variance per factor")
      ->delimiter(',');
  bench_cmd->add_flag("--with-cholesky", bench_with_chol,
                      "append the exact Cholesky reference row");
  bench_cmd->add_option("--seed", bench_seed, "probe seed")->required();

  // spectrum
  auto* spec_cmd =
      app.add_subcommand("spectrum", "preconditioned spectra and bound checks");
  spec_cmd->configurable();
  std::string spec_data, spec_out = "spectrum.json";
  CommonModelOptions spec_model;
  std::vector<double> spec_sigma2_re;
  double spec_sigma2 = 0.25;
  bool spec_full = false;
  index_t spec_cap = 2000;
  spec_cmd->add_option("--data", spec_data, "dataset CSV")->required();
  spec_cmd->add_option("--out", spec_out, "output report JSON");
  spec_model.attach(spec_cmd);
  spec_cmd->add_option("--sigma2", spec_sigma2, "error variance");
  spec_cmd->add_option("--sigma2-re", spec_sigma2_re, "variance per factor")
      ->delimiter(',');
  spec_cmd->add_flag("--full-spectrum", spec_full, "emit all eigenvalues");
  spec_cmd->add_option("--dim-cap", spec_cap, "dense eigendecomposition cap");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (sim_cmd->parsed()) {
      sim_cfg.m_k = sim_m;
      sim_cfg.likelihood = parse_likelihood(sim_lik);
      sim_cfg.design = parse_design_kind(sim_design);
      if (!sim_sigma2_re.empty()) {
        sim_cfg.sigma2_re =
            Eigen::Map<const vec_t>(sim_sigma2_re.data(), sim_sigma2_re.size());
      }
      return cmd_simulate(sim_out, sim_truth, sim_cfg, sim_test);
    }
    if (fit_cmd->parsed()) {
      return cmd_fit(fit_data, fit_out, fit_model, fit_kopts, fit_ocfg);
    }
    if (pred_cmd->parsed()) {
      return cmd_predict(pred_train, pred_test, pred_fit, pred_out, pred_method,
                         pred_s, pred_rank, pred_seed, pred_gh, pred_cg_tol);
    }
    if (bench_cmd->parsed()) {
      vec_t s2re;
      if (!bench_sigma2_re.empty()) {
        s2re = Eigen::Map<const vec_t>(bench_sigma2_re.data(), bench_sigma2_re.size());
      }
      return cmd_bench_precond(bench_data, bench_out, bench_model, bench_preconds,
                               bench_reps, bench_t, bench_cg_tol, bench_seed, s2re,
                               bench_sigma2, bench_with_chol);
    }
    if (spec_cmd->parsed()) {
      vec_t s2re;
      if (!spec_sigma2_re.empty()) {
        s2re = Eigen::Map<const vec_t>(spec_sigma2_re.data(), spec_sigma2_re.size());
      }
      return cmd_spectrum(spec_data, spec_out, spec_model, s2re, spec_sigma2,
                          spec_full, spec_cap);
    }
  } catch (const SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
  return 0;
}

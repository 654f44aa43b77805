#include <gmmk/io.hpp>

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace gmmk {

using nlohmann::json;

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

index_t CsvTable::column_index(const std::string& name) const {
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == name) return static_cast<index_t>(j);
  }
  throw SchemaError("column not found: " + name);
}

vec_t CsvTable::numeric_column(const std::string& name) const {
  const auto& col = columns[column_index(name)];
  vec_t v(col.size());
  for (std::size_t i = 0; i < col.size(); ++i) {
    try {
      std::size_t pos = 0;
      v[i] = std::stod(col[i], &pos);
      if (pos != col[i].size()) throw std::invalid_argument(col[i]);
    } catch (const std::exception&) {
      throw SchemaError("column " + name + ", line " + std::to_string(i + 2) +
                        ": not a number: '" + col[i] + "'");
    }
  }
  return v;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open file: " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::stringstream hs(line);
  std::string cell;
  while (std::getline(hs, cell, ',')) t.header.push_back(cell);
  t.columns.resize(t.header.size());
  index_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::size_t j = 0;
    while (std::getline(ls, cell, ',')) {
      if (j >= t.columns.size()) {
        throw SchemaError("line " + std::to_string(lineno) + ": too many fields");
      }
      t.columns[j++].push_back(cell);
    }
    // trailing empty cell ("a,b,")
    if (j == t.columns.size() - 1 && !line.empty() && line.back() == ',') {
      t.columns[j++].push_back("");
    }
    if (j != t.columns.size()) {
      throw SchemaError("line " + std::to_string(lineno) + ": expected " +
                        std::to_string(t.columns.size()) + " fields, got " +
                        std::to_string(j));
    }
  }
  return t;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& columns) {
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot write file: " + path);
  for (std::size_t j = 0; j < header.size(); ++j) {
    out << (j ? "," : "") << header[j];
  }
  out << "\n";
  const std::size_t rows = columns.empty() ? 0 : columns[0].size();
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < columns.size(); ++j) {
      out << (j ? "," : "") << columns[j][i];
    }
    out << "\n";
  }
}

GroupedDesign design_from_table(const CsvTable& table, const ModelColumns& cols) {
  const index_t n = table.num_rows();
  if (n == 0) throw SchemaError("dataset has no rows");
  vec_t y = table.numeric_column(cols.response);
  den_mat_t X(n, static_cast<index_t>(cols.covariates.size()) + 1);
  X.col(0).setOnes();
  for (std::size_t j = 0; j < cols.covariates.size(); ++j) {
    X.col(j + 1) = table.numeric_column(cols.covariates[j]);
  }
  std::vector<std::vector<std::string>> labels;
  for (const auto& g : cols.groups) {
    labels.push_back(table.columns[table.column_index(g)]);
  }
  return make_grouped_design(std::move(y), std::move(X), std::move(labels));
}

void write_dataset_csv(const std::string& path, const vec_t& y, const den_mat_t& X,
                       const std::vector<std::vector<std::string>>& labels) {
  std::vector<std::string> header{"y"};
  std::vector<std::vector<std::string>> columns;
  std::vector<std::string> ycol;
  for (index_t i = 0; i < y.size(); ++i) ycol.push_back(format_double(y[i]));
  columns.push_back(std::move(ycol));
  for (index_t j = 1; j < X.cols(); ++j) {  // col 0 is the implicit intercept
    header.push_back("x" + std::to_string(j));
    std::vector<std::string> col;
    for (index_t i = 0; i < X.rows(); ++i) col.push_back(format_double(X(i, j)));
    columns.push_back(std::move(col));
  }
  for (std::size_t k = 0; k < labels.size(); ++k) {
    header.push_back("g" + std::to_string(k + 1));
    columns.push_back(labels[k]);
  }
  write_csv(path, header, columns);
}

namespace {

json vec_to_json(const vec_t& v) {
  json arr = json::array();
  for (index_t i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

vec_t json_to_vec(const json& arr) {
  vec_t v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v[i] = arr[i].get<double>();
  return v;
}

}  // namespace

void write_truth_json(const std::string& path, const SimConfig& cfg,
                      const SimTruth& truth, const std::vector<index_t>& m_k) {
  json j;
  j["seed"] = cfg.seed;
  j["likelihood"] = cfg.likelihood == LikelihoodKind::GaussianIdentity ? "gaussian"
                                                                       : "bernoulli";
  j["design"] = design_kind_name(cfg.design);
  j["n"] = cfg.n;
  j["n_test"] = cfg.n_test;
  j["m_k"] = m_k;
  j["sigma2"] = truth.sigma2;
  j["sigma2_re"] = vec_to_json(truth.sigma2_re);
  j["beta"] = vec_to_json(truth.beta);
  j["b"] = vec_to_json(truth.b);
  j["test_latent_re"] = vec_to_json(truth.test_latent_re);
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot write file: " + path);
  out << j.dump(2) << "\n";
}

void write_fit_json(const std::string& path, const FitResult& fit,
                    const ModelColumns& cols) {
  json j;
  j["likelihood"] = fit.likelihood == LikelihoodKind::GaussianIdentity
                        ? "gaussian"
                        : "bernoulli";
  j["backend"] = backend_name(fit.backend);
  j["preconditioner"] = precond_kind_name(fit.krylov.precond);
  j["probe_seed"] = fit.krylov.probe_seed;
  j["num_probes"] = fit.krylov.num_probes;
  j["estimates"]["sigma2_re"] = vec_to_json(fit.params.sigma2_re);
  j["estimates"]["sigma2"] = fit.params.sigma2;
  j["estimates"]["beta"] = vec_to_json(fit.params.beta);
  if (fit.std_errors_sigma2.size() > 0) {
    j["std_errors_sigma2"] = vec_to_json(fit.std_errors_sigma2);
  }
  j["fisher_singular"] = fit.fisher_singular;
  j["nll_trace"] = vec_to_json(
      Eigen::Map<const vec_t>(fit.nll_trace.data(), fit.nll_trace.size()));
  j["iterations"] = fit.iterations;
  j["convergence_reason"] = fit.convergence_reason;
  j["nll_evaluations"] = fit.nll_evaluations;
  j["wall_seconds"] = fit.wall_seconds;
  j["zic_fallback"] = fit.zic_fallback;
  j["model"]["response"] = cols.response;
  j["model"]["covariates"] = cols.covariates;
  j["model"]["groups"] = cols.groups;
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot write file: " + path);
  out << j.dump(2) << "\n";
}

FitResult read_fit_json(const std::string& path, ModelColumns* cols) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw SchemaError("invalid fit JSON: " + std::string(e.what()));
  }
  FitResult fit;
  fit.likelihood = j.at("likelihood") == "gaussian" ? LikelihoodKind::GaussianIdentity
                                                    : LikelihoodKind::BernoulliLogit;
  fit.backend = parse_backend(j.at("backend"));
  fit.krylov.precond = parse_precond_kind(j.at("preconditioner"));
  fit.krylov.probe_seed = j.at("probe_seed").get<std::uint64_t>();
  fit.krylov.num_probes = j.at("num_probes").get<index_t>();
  fit.params.sigma2_re = json_to_vec(j.at("estimates").at("sigma2_re"));
  fit.params.sigma2 = j.at("estimates").at("sigma2").get<double>();
  fit.params.beta = json_to_vec(j.at("estimates").at("beta"));
  if (j.contains("std_errors_sigma2")) {
    fit.std_errors_sigma2 = json_to_vec(j.at("std_errors_sigma2"));
  }
  const vec_t trace = json_to_vec(j.at("nll_trace"));
  fit.nll_trace.assign(trace.data(), trace.data() + trace.size());
  fit.iterations = j.at("iterations").get<index_t>();
  fit.convergence_reason = j.at("convergence_reason");
  if (cols != nullptr) {
    cols->response = j.at("model").at("response");
    cols->covariates = j.at("model").at("covariates").get<std::vector<std::string>>();
    cols->groups = j.at("model").at("groups").get<std::vector<std::string>>();
  }
  return fit;
}

void write_predictions_csv(const std::string& path, const PredictiveDist& dist,
                           LikelihoodKind kind) {
  std::vector<std::string> header{"row", "omega", "var_latent"};
  std::vector<std::vector<std::string>> columns(3);
  const index_t n_p = dist.omega.size();
  for (index_t i = 0; i < n_p; ++i) {
    columns[0].push_back(std::to_string(i));
    columns[1].push_back(format_double(dist.omega[i]));
    columns[2].push_back(format_double(dist.var_latent[i]));
  }
  if (kind == LikelihoodKind::GaussianIdentity) {
    header.push_back("response_mean");
    header.push_back("response_var");
    columns.emplace_back();
    columns.emplace_back();
    for (index_t i = 0; i < n_p; ++i) {
      columns[3].push_back(format_double(dist.response_mean[i]));
      columns[4].push_back(format_double(dist.response_var[i]));
    }
  } else {
    header.push_back("prob_one");
    columns.emplace_back();
    for (index_t i = 0; i < n_p; ++i) {
      columns[3].push_back(format_double(dist.response_mean[i]));
    }
  }
  write_csv(path, header, columns);
}

void write_spectral_json(const std::string& path,
                         const std::vector<SpectralReport>& spectra,
                         const TheoremReport& theorems, bool full_spectrum) {
  json j;
  j["design"]["n"] = theorems.design.n;
  j["design"]["m_k"] = theorems.design.m_k;
  j["design"]["d_k"] = vec_to_json(theorems.design.d_k);
  j["design"]["balanced"] = theorems.design.balanced;
  j["design"]["cooccur_at_most_once"] = theorems.design.cooccur_at_most_once;
  j["spectra"] = json::array();
  for (const auto& s : spectra) {
    json js;
    js["preconditioner"] = precond_kind_name(s.kind);
    js["lambda_max"] = s.lambda_max;
    js["lambda_2"] = s.lambda_2;
    js["lambda_m_minus_1"] = s.lambda_m_minus_1;
    js["lambda_min"] = s.lambda_min;
    js["kappa"] = s.kappa;
    js["kappa_eff_m1_1"] = s.kappa_eff_m1_1;
    js["kappa_eff_m1_2"] = s.kappa_eff_m1_2;
    if (full_spectrum) js["eigenvalues"] = vec_to_json(s.eigenvalues);
    j["spectra"].push_back(js);
  }
  j["checks"] = json::array();
  for (const auto& c : theorems.checks) {
    json jc;
    jc["name"] = c.name;
    jc["verdict"] = verdict_name(c.verdict);
    jc["lhs"] = c.lhs;
    jc["rhs"] = c.rhs;
    if (!c.detail.empty()) jc["detail"] = c.detail;
    j["checks"].push_back(jc);
  }
  j["all_passed"] = theorems.all_passed();
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot write file: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace gmmk

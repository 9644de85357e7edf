#include "commands.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"
#include "loal/bootstrap.hpp"
#include "loal/errors.hpp"
#include "loal/loal.hpp"
#include "loal/rng.hpp"
#include "loal/simulation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct CommonOpts {
  std::string out_dir = ".";
  std::string config_path;
  std::uint64_t seed = 1;
  int threads = 1;
};

// ---------------------------------------------------------------------------
// Config handling
// ---------------------------------------------------------------------------

loal::TermFactor parse_factor(const std::string& token, int stage,
                              const loal::LongitudinalDataset& data) {
  loal::TermFactor f;
  std::string body = token;
  f.power = 1;
  if (auto caret = body.find('^'); caret != std::string::npos) {
    f.power = std::stoi(body.substr(caret + 1));
    body = body.substr(0, caret);
  }
  int block = -1;
  if (auto at = body.find('@'); at != std::string::npos) {
    block = std::stoi(body.substr(at + 1));
    body = body.substr(0, at);
  }
  if (body.size() > 1 && body[0] == 'A' &&
      body.find_first_not_of("0123456789", 1) == std::string::npos) {
    f.kind = loal::TermFactor::Kind::treatment;
    f.k = std::stoi(body.substr(1));
    return f;
  }
  f.kind = loal::TermFactor::Kind::covariate;
  int found_block = -1, found_k = -1, hits = 0;
  for (int b = 0; b <= std::min(stage, data.n_blocks() - 1); ++b) {
    if (block >= 0 && b != block) continue;
    for (int k = 0; k < data.block_size(b); ++k)
      if (data.block_names[b][k] == body) {
        found_block = b;
        found_k = k;
        ++hits;
      }
  }
  if (hits == 0)
    throw loal::ValidationError("q_spec: unknown covariate '" + body + "' at stage " +
                                std::to_string(stage));
  if (hits > 1)
    throw loal::ValidationError("q_spec: covariate '" + body +
                                "' is ambiguous; qualify it as name@block");
  f.block = found_block;
  f.k = found_k;
  return f;
}

loal::QSpec parse_qspec(const json& j, const loal::LongitudinalDataset& data) {
  loal::QSpec spec = loal::default_main_terms_spec(data);
  if (j.contains("family")) {
    const std::string fam = j["family"].get<std::string>();
    if (fam == "logistic")
      spec.family = loal::QSpec::Family::logistic;
    else if (fam != "linear")
      throw loal::ValidationError("q_spec.family must be linear or logistic");
  }
  spec.y_lo = j.value("y_lo", 0.0);
  spec.y_hi = j.value("y_hi", 1.0);
  if (j.contains("stages")) {
    const auto& stages = j["stages"];
    if (!stages.is_array() || stages.size() != spec.stages.size())
      throw loal::ValidationError("q_spec.stages must list one stage per block");
    for (size_t s = 0; s < stages.size(); ++s) {
      loal::StageSpec stage;
      for (const auto& term_str : stages[s]) {
        loal::Term term;
        std::stringstream ss(term_str.get<std::string>());
        std::string token;
        while (std::getline(ss, token, ':'))
          term.factors.push_back(parse_factor(token, static_cast<int>(s), data));
        stage.terms.push_back(std::move(term));
      }
      spec.stages[s] = std::move(stage);
    }
  }
  return spec;
}

loal::LoalConfig parse_loal_config(const json& j, const loal::LongitudinalDataset* data) {
  loal::LoalConfig cfg;
  cfg.gamma = j.value("gamma", cfg.gamma);
  cfg.gamma1 = j.value("gamma1", cfg.gamma1);
  if (j.contains("gamma1_grid"))
    cfg.gamma1_grid = j["gamma1_grid"].get<std::vector<double>>();
  cfg.n_lambda = j.value("n_lambda", cfg.n_lambda);
  cfg.lambda_min_ratio = j.value("lambda_min_ratio", cfg.lambda_min_ratio);
  cfg.n_lambda1 = j.value("n_lambda1", cfg.n_lambda1);
  cfg.fuse = j.value("fuse", cfg.fuse);
  cfg.use_censoring = j.value("use_censoring", cfg.use_censoring);
  cfg.joint_grid_full = j.value("joint_grid_full", cfg.joint_grid_full);
  cfg.protect_baseline_modifier =
      j.value("protect_baseline_modifier", cfg.protect_baseline_modifier);
  if (j.contains("graph")) {
    const std::string g = j["graph"].get<std::string>();
    if (g == "clique")
      cfg.graph_kind = loal::GraphKind::clique;
    else if (g == "chain")
      cfg.graph_kind = loal::GraphKind::chain;
    else if (g == "lagged_clique")
      cfg.graph_kind = loal::GraphKind::lagged_clique;
    else
      throw loal::ValidationError("config.graph must be clique|chain|lagged_clique");
  }
  if (j.contains("working_se")) {
    const std::string se = j["working_se"].get<std::string>();
    if (se == "robust")
      cfg.working_se = loal::WorkingSe::robust;
    else if (se != "model")
      throw loal::ValidationError("config.working_se must be model or robust");
  }
  if (j.contains("q_spec")) {
    if (!data)
      throw loal::ValidationError("q_spec in config requires an input dataset");
    cfg.qspec = parse_qspec(j["q_spec"], *data);
  }
  return cfg;
}

json loal_config_to_json(const loal::LoalConfig& cfg) {
  json j;
  j["gamma"] = cfg.gamma;
  j["gamma1"] = cfg.gamma1;
  if (!cfg.gamma1_grid.empty()) j["gamma1_grid"] = cfg.gamma1_grid;
  j["n_lambda"] = cfg.n_lambda;
  j["lambda_min_ratio"] = cfg.lambda_min_ratio;
  j["n_lambda1"] = cfg.n_lambda1;
  j["fuse"] = cfg.fuse;
  j["use_censoring"] = cfg.use_censoring;
  j["joint_grid_full"] = cfg.joint_grid_full;
  j["protect_baseline_modifier"] = cfg.protect_baseline_modifier;
  j["graph"] = cfg.graph_kind == loal::GraphKind::clique       ? "clique"
               : cfg.graph_kind == loal::GraphKind::chain      ? "chain"
                                                               : "lagged_clique";
  j["working_se"] = cfg.working_se == loal::WorkingSe::robust ? "robust" : "model";
  return j;
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw loal::ValidationError("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw loal::ValidationError(std::string("bad config JSON: ") + e.what());
  }
  return j;
}

void write_file(const fs::path& path, const std::string& contents) {
  std::ofstream out(path);
  if (!out) throw loal::ValidationError("cannot write " + path.string());
  out << contents;
}

void write_manifest(const fs::path& dir, const std::string& command, json resolved) {
  resolved["command"] = command;
  resolved["version"] = kVersion;
  write_file(dir / "manifest.json", resolved.dump(2) + "\n");
}

std::string fmt(double v, int prec = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
  return buf;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

int cmd_simulate(const CommonOpts& common, const loal::ScenarioConfig& scenario,
                 std::vector<std::string> estimators, int reps) {
  const json config_json = load_config(common.config_path);
  loal::LoalConfig cfg = parse_loal_config(config_json, nullptr);
  if (estimators.empty())
    estimators = {"gcomp", "iptw_full", "iptw_oracle_select",
                  "iptw_oracle_select_fuse", "iptw_loal", "iptw_fused_loal"};

  const loal::MetricsTable table =
      loal::run_monte_carlo(scenario, estimators, reps, cfg, common.threads);

  fs::create_directories(common.out_dir);
  const fs::path dir(common.out_dir);
  write_file(dir / "metrics.csv", table.to_csv());
  write_file(dir / "metrics.md", table.to_markdown());
  write_file(dir / "selection.csv", table.selection_to_csv());

  json manifest;
  manifest["scenario"] = scenario.scenario;
  manifest["n"] = scenario.n;
  manifest["reps"] = reps;
  manifest["seed"] = scenario.seed;
  manifest["nu0"] = scenario.nu0;
  manifest["nuI"] = scenario.nuI;
  manifest["estimators"] = estimators;
  manifest["threads"] = common.threads;
  manifest["loal"] = loal_config_to_json(cfg);
  write_manifest(dir, "simulate", manifest);
  std::cout << table.to_markdown();
  return 0;
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

std::string diag_row(const loal::WeightDiagnostics& d) {
  std::ostringstream os;
  os << fmt(d.minv) << "," << fmt(d.q10) << "," << fmt(d.q25) << "," << fmt(d.q50)
     << "," << fmt(d.q75) << "," << fmt(d.q90) << "," << fmt(d.maxv);
  return os.str();
}

void write_coefficient_table(const fs::path& path, const loal::PooledDesign& design,
                             const loal::PropensityFit& fit, bool censoring_model) {
  const auto& columns = censoring_model ? fit.columns_c : fit.columns_a;
  const auto& support = censoring_model ? fit.support_c : fit.support_a;
  const auto& groups = censoring_model ? fit.fuse_group_c : fit.fuse_group_a;
  const Eigen::VectorXd& coefs = censoring_model ? fit.theta : fit.alpha;

  // Rows: one per (variable, source block); columns: model times.
  std::vector<std::pair<std::string, int>> rows;  // (label, block)
  std::map<std::pair<std::string, int>, std::map<int, int>> cells;  // -> tau -> col
  for (size_t j = 0; j < columns.size(); ++j) {
    const loal::CoefIndex& idx = columns[j];
    std::string label;
    if (idx.is_intercept())
      label = "(intercept)";
    else if (idx.is_treatment())
      label = "A" + std::to_string(idx.k);
    else
      label = design.source_names[j] + "@t" + std::to_string(idx.block);
    const int block = idx.is_intercept() ? -1 : (idx.is_treatment() ? 1000 + idx.k : idx.block);
    const auto key = std::make_pair(label, block);
    if (!cells.count(key)) rows.push_back(key);
    cells[key][idx.tau] = static_cast<int>(j);
  }
  std::ostringstream os;
  os << "variable";
  for (int t : design.model_times) os << ",time" << t;
  os << "\n";
  for (const auto& key : rows) {
    os << key.first;
    for (int t : design.model_times) {
      os << ",";
      auto it = cells[key].find(t);
      if (it == cells[key].end()) {
        os << "NA";
      } else if (!support[it->second]) {
        // blank: not selected
      } else {
        os << fmt(coefs(it->second));
        if (groups[it->second] >= 0) os << " [g" << groups[it->second] << "]";
      }
    }
    os << "\n";
  }
  write_file(path, os.str());
}

int cmd_estimate(const CommonOpts& common, const std::string& data_path,
                 const std::string& schema_path, std::vector<std::string> estimators,
                 bool msm_interaction) {
  const loal::LongitudinalDataset data = loal::read_long_csv(data_path, schema_path);
  const json config_json = load_config(common.config_path);
  loal::LoalConfig cfg = parse_loal_config(config_json, &data);
  const std::string weights_mode = config_json.value("weights", "unstabilized");
  if (weights_mode != "unstabilized" && weights_mode != "stabilized")
    throw loal::ValidationError("config.weights must be unstabilized or stabilized");
  const bool stab_w = weights_mode == "stabilized";
  if (estimators.empty()) estimators = {"iptw_full", "iptw_loal", "iptw_fused_loal"};

  const loal::MsmSpec msm =
      loal::MsmSpec::basic(data.baseline_modifier >= 0, msm_interaction);
  const loal::PatternSpace patterns = loal::enumerate_patterns(
      data.T, data.monotone_treatment ? loal::PatternSpace::Kind::monotone_initiation
                                      : loal::PatternSpace::Kind::full);

  fs::create_directories(common.out_dir);
  const fs::path dir(common.out_dir);

  std::ostringstream est_csv, weights_csv;
  est_csv << "estimator";
  const std::vector<std::string> term_names = {"intercept", "modifier", "cum",
                                               "modifier_x_cum"};
  for (int j = 0; j < msm.size(); ++j)
    est_csv << "," << term_names[static_cast<int>(msm.terms[j])] << ",se_"
            << term_names[static_cast<int>(msm.terms[j])];
  est_csv << "\n";
  weights_csv << "estimator,quantity,min,q10,q25,q50,q75,q90,max\n";
  std::ostringstream est_md;
  est_md << "| Method |";
  for (int j = 0; j < msm.size(); ++j)
    est_md << " " << term_names[static_cast<int>(msm.terms[j])] << " |";
  est_md << "\n|---|";
  for (int j = 0; j < msm.size(); ++j) est_md << "---|";
  est_md << "\n";

  std::optional<loal::PipelineResult> pipeline;
  auto get_pipeline = [&]() -> const loal::PipelineResult& {
    if (!pipeline) {
      loal::LoalConfig c = cfg;
      c.fuse = true;
      pipeline = loal::run_loal_pipeline(data, c);
    }
    return *pipeline;
  };

  const loal::PooledDesign design_a = loal::build_pooled_treatment_design(data);

  for (const std::string& name : estimators) {
    loal::MsmEstimate est;
    const loal::PropensityFit* fit = nullptr;
    loal::PropensityFit fit_storage;
    if (name == "gcomp") {
      loal::QSpec qspec = cfg.qspec.stages.empty() ? loal::default_main_terms_spec(data)
                                                   : cfg.qspec;
      const loal::QSequence qs = loal::estimate_q_sequence(data, patterns, qspec);
      est = loal::g_computation(data, qs, msm);
    } else if (name == "iptw_full") {
      fit_storage = loal::full_propensity_fit(data);
      fit = &fit_storage;
      est = loal::fit_msm_iptw(
          data, loal::compute_cumulative_weights(data, fit_storage, stab_w), msm);
    } else if (name == "iptw_loal" || name == "iptw_fused_loal") {
      const loal::PipelineResult& res = get_pipeline();
      const loal::PropensityFit& f =
          name == "iptw_loal" ? res.loal : res.fit;
      fit = &f;
      est = loal::fit_msm_iptw(
          data, loal::compute_cumulative_weights(data, f, stab_w), msm);
    } else {
      throw loal::ValidationError("unknown estimator '" + name +
                                  "' (expected gcomp|iptw_full|iptw_loal|iptw_fused_loal)");
    }
    est.estimator = name;
    est_csv << name;
    est_md << "| " << name << " |";
    for (int j = 0; j < msm.size(); ++j) {
      est_csv << "," << fmt(est.mu(j)) << "," << fmt(est.se(j));
      est_md << " " << fmt(est.mu(j), 4) << "(" << fmt(est.se(j), 4) << ") |";
    }
    est_csv << "\n";
    est_md << "\n";
    if (est.has_weight_diag) {
      weights_csv << name << ",cumulative_treatment_probability,"
                  << diag_row(est.treat_prob_diag) << "\n";
      weights_csv << name << ",weight," << diag_row(est.weight_diag) << "\n";
    }
    if (fit && (name == "iptw_loal" || name == "iptw_fused_loal")) {
      write_coefficient_table(dir / (name + "_treatment_coefficients.csv"), design_a,
                              *fit, false);
      if (fit->has_censoring) {
        const loal::PooledDesign design_c = loal::build_pooled_censoring_design(data);
        write_coefficient_table(dir / (name + "_censoring_coefficients.csv"), design_c,
                                *fit, true);
      }
    }
  }
  write_file(dir / "estimates.csv", est_csv.str());
  write_file(dir / "estimates.md", est_md.str());
  write_file(dir / "weights.csv", weights_csv.str());

  if (pipeline) {
    std::ostringstream bal;
    bal << "lambda_a,lambda_c,M,N,disqualified\n";
    for (const auto& rep : pipeline->reports)
      bal << fmt(rep.lambda_a) << "," << fmt(rep.lambda_c) << "," << fmt(rep.M) << ","
          << fmt(rep.N) << "," << (rep.disqualified ? 1 : 0) << "\n";
    write_file(dir / "balance.csv", bal.str());
  }

  json manifest;
  manifest["data"] = data_path;
  manifest["schema"] = schema_path;
  manifest["estimators"] = estimators;
  manifest["msm_interaction"] = msm_interaction;
  manifest["weights"] = weights_mode;
  manifest["loal"] = loal_config_to_json(cfg);
  if (pipeline) {
    manifest["selected_lambda_a"] = pipeline->lambda_a;
    manifest["selected_lambda_c"] = pipeline->lambda_c;
    manifest["n_selected_treatment"] = pipeline->loal.n_selected_a();
    manifest["n_selected_censoring"] = pipeline->loal.n_selected_c();
  }
  write_manifest(dir, "estimate", manifest);
  std::cout << est_md.str();
  return 0;
}

// ---------------------------------------------------------------------------
// bootstrap
// ---------------------------------------------------------------------------

int cmd_bootstrap(const CommonOpts& common, const std::string& data_path,
                  const std::string& schema_path, const loal::ScenarioConfig& scenario,
                  bool use_scenario, const std::string& estimator,
                  const std::string& method, double q, int K, int B, int reps) {
  const json config_json = load_config(common.config_path);

  auto make_estimator = [&](const loal::MsmSpec& msm) -> loal::DataEstimator {
    if (estimator == "iptw_loal" || estimator == "iptw_fused_loal") {
      return [msm, estimator, config_json](const loal::LongitudinalDataset& d) {
        loal::LoalConfig c = parse_loal_config(config_json, &d);
        c.fuse = estimator == "iptw_fused_loal";
        const loal::PipelineResult res = loal::run_loal_pipeline(d, c);
        return loal::fit_msm_iptw(
                   d, loal::compute_cumulative_weights(d, res.fit, false), msm)
            .mu;
      };
    }
    if (estimator == "iptw_full") {
      return [msm](const loal::LongitudinalDataset& d) {
        const loal::PropensityFit fit = loal::full_propensity_fit(d);
        return loal::fit_msm_iptw(
                   d, loal::compute_cumulative_weights(d, fit, false), msm)
            .mu;
      };
    }
    if (estimator == "gcomp") {
      return [msm](const loal::LongitudinalDataset& d) {
        const loal::PatternSpace pats = loal::enumerate_patterns(
            d.T, d.monotone_treatment ? loal::PatternSpace::Kind::monotone_initiation
                                      : loal::PatternSpace::Kind::full);
        const loal::QSequence qs =
            loal::estimate_q_sequence(d, pats, loal::default_main_terms_spec(d));
        return loal::g_computation(d, qs, msm).mu;
      };
    }
    throw loal::ValidationError("unknown bootstrap estimator '" + estimator + "'");
  };

  fs::create_directories(common.out_dir);
  const fs::path dir(common.out_dir);

  json manifest;
  manifest["estimator"] = estimator;
  manifest["method"] = method;
  manifest["q"] = q;
  manifest["K"] = K;
  manifest["B"] = B;
  manifest["seed"] = common.seed;

  if (use_scenario && reps > 0) {
    // Coverage summary over scenario replicates.
    int cover_count[2][4] = {};
    double width_sum[2][4] = {};
    int done = 0;
    int n_par = 0;
    for (int r = 0; r < reps; ++r) {
      loal::ScenarioConfig rc = scenario;
      rc.seed = scenario.seed + 0x9E3779B97F4A7C15ull * (r + 1);
      const loal::ScenarioDraw draw = loal::generate(rc);
      loal::LoalConfig dummy = parse_loal_config(config_json, &draw.data);
      loal::QSpec qspec = dummy.qspec.stages.empty()
                              ? loal::scenario_qspec(scenario.scenario, draw.data)
                              : dummy.qspec;
      const loal::MsmSpec msm = draw.truth.msm;
      auto est_with_spec = [&](const loal::LongitudinalDataset& d) {
        loal::LoalConfig c = parse_loal_config(config_json, &d);
        c.qspec = qspec;
        c.fuse = estimator == "iptw_fused_loal";
        if (estimator == "gcomp") {
          const loal::PatternSpace pats =
              loal::enumerate_patterns(d.T, loal::PatternSpace::Kind::full);
          return loal::g_computation(d, loal::estimate_q_sequence(d, pats, c.qspec), msm)
              .mu;
        }
        loal::PropensityFit fit;
        if (estimator == "iptw_full") {
          fit = loal::full_propensity_fit(d);
        } else {
          fit = loal::run_loal_pipeline(d, c).fit;
        }
        return loal::fit_msm_iptw(
                   d, loal::compute_cumulative_weights(d, fit, false), msm)
            .mu;
      };
      n_par = static_cast<int>(draw.truth.mu.size());
      try {
        for (int m = 0; m < 2; ++m) {
          if (method != "both" && ((m == 0) != (method == "mn"))) continue;
          const loal::BootstrapResult res =
              m == 0 ? loal::m_out_of_n_ci(draw.data, est_with_spec, q, K, B,
                                           common.seed + r)
                     : loal::naive_bootstrap_ci(draw.data, est_with_spec, B,
                                                common.seed + r);
          for (int p = 0; p < n_par; ++p) {
            if (res.lo(p) <= draw.truth.mu(p) && draw.truth.mu(p) <= res.hi(p))
              cover_count[m][p] += 1;
            width_sum[m][p] += res.hi(p) - res.lo(p);
          }
        }
        ++done;
      } catch (const std::exception& e) {
        std::cerr << "replicate " << r << " failed: " << e.what() << "\n";
      }
    }
    if (done == 0) throw loal::NumericError("bootstrap coverage: every replicate failed");
    std::ostringstream os;
    os << "method,parameter,coverage,mean_width,replicates\n";
    for (int m = 0; m < 2; ++m) {
      if (method != "both" && ((m == 0) != (method == "mn"))) continue;
      for (int p = 0; p < n_par; ++p)
        os << (m == 0 ? "mn" : "naive") << ",mu" << p << ","
           << fmt(static_cast<double>(cover_count[m][p]) / done) << ","
           << fmt(width_sum[m][p] / done) << "," << done << "\n";
    }
    write_file(dir / "coverage.csv", os.str());
    manifest["scenario"] = scenario.scenario;
    manifest["n"] = scenario.n;
    manifest["reps"] = reps;
    write_manifest(dir, "bootstrap", manifest);
    std::cout << os.str();
    return 0;
  }

  loal::LongitudinalDataset data;
  if (use_scenario) {
    data = loal::generate(scenario).data;
    manifest["scenario"] = scenario.scenario;
    manifest["n"] = scenario.n;
  } else {
    data = loal::read_long_csv(data_path, schema_path);
    manifest["data"] = data_path;
    manifest["schema"] = schema_path;
  }
  const loal::MsmSpec msm = loal::MsmSpec::basic(data.baseline_modifier >= 0, false);
  const loal::DataEstimator est = make_estimator(msm);
  const loal::BootstrapResult res =
      method == "naive" ? loal::naive_bootstrap_ci(data, est, B, common.seed)
                        : loal::m_out_of_n_ci(data, est, q, K, B, common.seed);
  std::ostringstream os;
  os << "parameter,estimate,lo,hi,m_star,epsilon\n";
  for (int p = 0; p < res.mu_hat.size(); ++p)
    os << "mu" << p << "," << fmt(res.mu_hat(p)) << "," << fmt(res.lo(p)) << ","
       << fmt(res.hi(p)) << "," << res.m_star[p] << "," << fmt(res.epsilon(p)) << "\n";
  write_file(dir / "ci.csv", os.str());
  write_manifest(dir, "bootstrap", manifest);
  std::cout << os.str();
  return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Longitudinal outcome-adaptive LASSO treatment-model selection, "
               "fusion, and MSM estimation"};
  app.require_subcommand(1);

  CommonOpts common;
  loal::ScenarioConfig scenario;
  std::string estimators_arg, data_path, schema_path;
  int reps = 100;
  bool list_scenarios = false, msm_interaction = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--out", common.out_dir, "output directory");
    cmd->add_option("--config", common.config_path, "JSON run configuration");
    cmd->add_option("--seed", common.seed, "master seed");
    cmd->add_option("--threads", common.threads, "worker threads");
  };

  CLI::App* sim = app.add_subcommand("simulate", "run a Monte Carlo experiment");
  add_common(sim);
  sim->add_option("--scenario", scenario.scenario, "1a|1b|1c|2|3|sweep");
  sim->add_option("--n", scenario.n, "sample size per replicate");
  sim->add_option("--reps", reps, "number of replicates");
  sim->add_option("--nu0", scenario.nu0, "sweep intercept");
  sim->add_option("--nuI", scenario.nuI, "sweep instrument coefficient");
  sim->add_option("--estimators", estimators_arg, "comma-separated estimator list");
  sim->add_flag("--list-scenarios", list_scenarios, "print scenario names and exit");

  CLI::App* est = app.add_subcommand("estimate", "analyze a long-format CSV dataset");
  add_common(est);
  est->add_option("--data", data_path, "long-format CSV");
  est->add_option("--schema", schema_path, "JSON schema sidecar");
  est->add_option("--estimators", estimators_arg, "comma-separated estimator list");
  est->add_flag("--msm-interaction", msm_interaction,
                "include modifier x cum(a) in the MSM");

  CLI::App* boot = app.add_subcommand("bootstrap", "confidence intervals by resampling");
  add_common(boot);
  std::string method = "mn", boot_estimator = "iptw_loal";
  double q = 0.95;
  int K = 14, B = 200;
  int boot_reps = 0;
  boot->add_option("--data", data_path, "long-format CSV");
  boot->add_option("--schema", schema_path, "JSON schema sidecar");
  boot->add_option("--scenario", scenario.scenario, "scenario instead of a dataset");
  boot->add_option("--n", scenario.n, "scenario sample size");
  boot->add_option("--reps", boot_reps, "scenario replicates for a coverage summary");
  boot->add_option("--estimator", boot_estimator, "estimator to resample");
  boot->add_option("--method", method, "mn|naive|both");
  boot->add_option("--q", q, "subsample decay rate");
  boot->add_option("--K", K, "number of subsample levels");
  boot->add_option("--B", B, "bootstrap draws per level");

  bool scenario_given = false;
  try {
    app.parse(argc, argv);
    scenario_given = boot->count("--scenario") > 0;
    scenario.seed = common.seed;

    if (sim->parsed()) {
      if (list_scenarios) {
        for (const auto& s : loal::scenario_names()) std::cout << s << "\n";
        return 0;
      }
      std::vector<std::string> estimators;
      std::stringstream ss(estimators_arg);
      std::string tok;
      while (std::getline(ss, tok, ','))
        if (!tok.empty()) estimators.push_back(tok);
      return cmd_simulate(common, scenario, estimators, reps);
    }
    if (est->parsed()) {
      if (data_path.empty() || schema_path.empty())
        throw loal::ValidationError("estimate requires --data and --schema");
      std::vector<std::string> estimators;
      std::stringstream ss(estimators_arg);
      std::string tok;
      while (std::getline(ss, tok, ','))
        if (!tok.empty()) estimators.push_back(tok);
      return cmd_estimate(common, data_path, schema_path, estimators, msm_interaction);
    }
    if (boot->parsed()) {
      if (!scenario_given && (data_path.empty() || schema_path.empty()))
        throw loal::ValidationError("bootstrap requires --data/--schema or --scenario");
      if (method != "mn" && method != "naive" && method != "both")
        throw loal::ValidationError("--method must be mn, naive, or both");
      return cmd_bootstrap(common, data_path, schema_path, scenario, scenario_given,
                           boot_estimator, method, q, K, B, boot_reps);
    }
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const loal::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const loal::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

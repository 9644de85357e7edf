#include "loal/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <sstream>
#include <thread>

#include "loal/errors.hpp"
#include "loal/glm.hpp"
#include "loal/rng.hpp"

namespace loal {

namespace {

constexpr std::uint64_t kScenarioStream = 0x5c3a01;

void standardize_block(Eigen::MatrixXd& block) {
  for (int k = 0; k < block.cols(); ++k) {
    const double m = block.col(k).mean();
    const double s = std::sqrt((block.col(k).array() - m).square().sum() / block.rows());
    block.col(k) = (block.col(k).array() - m) / (s > 0 ? s : 1.0);
  }
}

ScenarioDraw scenario1_impl(int n, char variant, std::uint64_t seed, double nu0,
                            double nuI) {
  if (n < 1) throw ValidationError("scenario: n must be >= 1");
  CounterRng rng(seed, kScenarioStream);
  Eigen::VectorXd c0(n), i0(n), c1(n), i1(n), y(n);
  Eigen::MatrixXi a(n, 2);
  Eigen::MatrixXd g(n, 2);
  for (int i = 0; i < n; ++i) c0(i) = rng.normal();
  for (int i = 0; i < n; ++i) i0(i) = rng.normal();
  for (int i = 0; i < n; ++i) {
    const double p = expit(nu0 + 1.515 * c0(i) + nuI * i0(i));
    a(i, 0) = rng.bernoulli(p);
    g(i, 0) = a(i, 0) ? p : 1.0 - p;
  }
  for (int i = 0; i < n; ++i) c1(i) = c0(i) + a(i, 0) + rng.normal();
  for (int i = 0; i < n; ++i) i1(i) = c0(i) + rng.normal();
  for (int i = 0; i < n; ++i) {
    const double p = expit(-0.5 + 0.5 * c0(i) + 0.25 * c1(i) + 0.5 * a(i, 0) + i1(i));
    a(i, 1) = rng.bernoulli(p);
    g(i, 1) = a(i, 1) ? p : 1.0 - p;
  }
  for (int i = 0; i < n; ++i) {
    double mean = -1.5 + 0.5 * c0(i) + 0.5 * a(i, 0) + c1(i) + a(i, 1);
    if (variant == 'b') mean += 2.5 * c0(i) * c1(i);
    if (variant == 'c') mean += 2.5 * a(i, 0) * c1(i) * c1(i);
    y(i) = mean + 0.5 * rng.normal();
  }

  ScenarioDraw draw;
  draw.data.n = n;
  draw.data.T = 1;
  draw.data.covariates.resize(2);
  draw.data.covariates[0].resize(n, 2);
  draw.data.covariates[0].col(0) = c0;
  draw.data.covariates[0].col(1) = i0;
  draw.data.covariates[1].resize(n, 2);
  draw.data.covariates[1].col(0) = c1;
  draw.data.covariates[1].col(1) = i1;
  draw.data.block_names = {{"C0", "I0"}, {"C1", "I1"}};
  draw.data.treatments = a;
  draw.data.censoring.resize(n, 0);
  draw.data.outcome = y;
  draw.data.baseline_modifier = 0;
  standardize_block(draw.data.covariates[0]);
  standardize_block(draw.data.covariates[1]);

  draw.true_g = g;
  draw.truth.msm = MsmSpec::basic(true);
  draw.truth.mu.resize(3);
  switch (variant) {
    case 'a': draw.truth.mu << -1.5, 1.5, 1.25; break;
    case 'b': draw.truth.mu << 1.0, 2.75, 1.25; break;
    case 'c': draw.truth.mu << -1.5, 4.0, 5.0; break;
    default: throw ValidationError("scenario 1 variant must be a, b, or c");
  }
  draw.truth.oracle.support_a = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}};
  draw.truth.oracle.fuse_groups_a = {{{0, 0, 0}, {1, 0, 0}}};
  return draw;
}

}  // namespace

ScenarioDraw generate_scenario1(int n, char variant, std::uint64_t seed) {
  return scenario1_impl(n, variant, seed, 0.0, 1.0);
}

ScenarioDraw generate_positivity_sweep(int n, double nu0, double nuI,
                                       std::uint64_t seed) {
  return scenario1_impl(n, 'a', seed, nu0, nuI);
}

ScenarioDraw generate_scenario2(int n, std::uint64_t seed) {
  if (n < 1) throw ValidationError("scenario: n must be >= 1");
  const int p0 = 20, p1 = 10;
  CounterRng rng(seed, kScenarioStream);
  Eigen::MatrixXd L0(n, p0), L1(n, p1);
  for (int k = 0; k < p0; ++k)
    for (int i = 0; i < n; ++i) L0(i, k) = rng.normal();
  // Column order: C0_1 C0_2 P0_1 P0_2 I0_1 I0_2 S0_1..S0_14.
  Eigen::MatrixXi a(n, 2);
  Eigen::MatrixXd g(n, 2);
  for (int i = 0; i < n; ++i) {
    const double p = expit(L0(i, 0) + L0(i, 1) + L0(i, 4) + L0(i, 5));
    a(i, 0) = rng.bernoulli(p);
    g(i, 0) = a(i, 0) ? p : 1.0 - p;
  }
  // Each time-1 covariate is driven by its corresponding time-0 covariate.
  for (int i = 0; i < n; ++i) {
    const double a0 = a(i, 0);
    L1(i, 0) = 0.5 * L0(i, 0) + 0.5 * a0 + rng.normal();   // C1_1
    L1(i, 1) = 0.2 * L0(i, 1) - a0 + rng.normal();          // C1_2
    L1(i, 2) = 0.5 * L0(i, 2) + 0.5 * a0 + rng.normal();   // P1_1
    L1(i, 3) = 0.2 * L0(i, 3) - a0 + rng.normal();          // P1_2
    L1(i, 4) = -0.5 * a0 + rng.normal();                     // I1_1
    L1(i, 5) = a0 + rng.normal();                            // I1_2
    for (int k = 0; k < 4; ++k)
      L1(i, 6 + k) = 0.5 * L0(i, 6 + k) + 0.2 * a0 + rng.normal();  // S1_k
  }
  for (int i = 0; i < n; ++i) {
    const double p = expit(1.026 * L0(i, 0) + 0.987 * L0(i, 1) + 0.5 * a(i, 0) +
                           L1(i, 0) + L1(i, 1) + L1(i, 4) + L1(i, 5));
    a(i, 1) = rng.bernoulli(p);
    g(i, 1) = a(i, 1) ? p : 1.0 - p;
  }
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    const double mean = 1.0 + 0.6 * (L0(i, 0) + L0(i, 1) + L0(i, 2) + L0(i, 3)) +
                        0.6 * (L1(i, 0) + L1(i, 1) + L1(i, 2) + L1(i, 3)) +
                        0.5 * a(i, 0) + a(i, 1);
    y(i) = mean + rng.normal();
  }

  ScenarioDraw draw;
  draw.data.n = n;
  draw.data.T = 1;
  draw.data.covariates = {L0, L1};
  std::vector<std::string> names0, names1;
  auto push = [](std::vector<std::string>& v, const std::string& stem, int count,
                 int time) {
    for (int j = 1; j <= count; ++j)
      v.push_back(stem + std::to_string(time) + "_" + std::to_string(j));
  };
  push(names0, "C", 2, 0);
  push(names0, "P", 2, 0);
  push(names0, "I", 2, 0);
  push(names0, "S", 14, 0);
  push(names1, "C", 2, 1);
  push(names1, "P", 2, 1);
  push(names1, "I", 2, 1);
  push(names1, "S", 4, 1);
  draw.data.block_names = {names0, names1};
  draw.data.treatments = a;
  draw.data.censoring.resize(n, 0);
  draw.data.outcome = y;
  draw.data.baseline_modifier = 0;

  draw.true_g = g;
  draw.truth.msm = MsmSpec::basic(true);
  draw.truth.mu.resize(3);
  draw.truth.mu << 1.00, 0.88, 0.45;
  for (int k = 0; k < 4; ++k) {
    draw.truth.oracle.support_a.push_back({0, 0, k});
    draw.truth.oracle.support_a.push_back({1, 0, k});
    draw.truth.oracle.support_a.push_back({1, 1, k});
    draw.truth.oracle.fuse_groups_a.push_back({{0, 0, k}, {1, 0, k}});
  }
  return draw;
}

ScenarioDraw generate_scenario3(int n, std::uint64_t seed) {
  if (n < 1) throw ValidationError("scenario: n must be >= 1");
  const int p0 = 20, T = 4;
  CounterRng rng(seed, kScenarioStream);
  // Compound-symmetric covariance 0.192 + 0.448 I via a shared factor.
  const double a_common = std::sqrt(0.192), b_own = std::sqrt(0.448);
  Eigen::MatrixXd L0(n, p0);
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    for (int k = 0; k < p0; ++k) L0(i, k) = a_common * z + b_own * rng.normal();
  }
  // Order: C1 C2 P1 P2 I1 I2 S1..S14.
  const double cfs[5][5] = {
      // c1, c2, i1, i2, a_prev
      {0.5, 1.0, -0.5, -0.5, 0.0},
      {0.542, 1.075, -0.545, -0.545, -0.5},
      {0.568, 1.142, -0.565, -0.569, -0.5},
      {0.615, 1.23, -0.61, -0.61, -0.5},
      {0.66, 1.322, -0.655, -0.655, -0.5},
  };
  Eigen::MatrixXi a(n, T + 1);
  Eigen::MatrixXd g(n, T + 1);
  for (int t = 0; t <= T; ++t) {
    for (int i = 0; i < n; ++i) {
      double eta = cfs[t][0] * L0(i, 0) + cfs[t][1] * L0(i, 1) +
                   cfs[t][2] * L0(i, 4) + cfs[t][3] * L0(i, 5);
      if (t > 0) eta += cfs[t][4] * a(i, t - 1);
      const double p = expit(eta);
      a(i, t) = rng.bernoulli(p);
      g(i, t) = a(i, t) ? p : 1.0 - p;
    }
  }
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    double mean = 0.6 * (L0(i, 0) + L0(i, 1) + L0(i, 2) + L0(i, 3));
    for (int t = 0; t <= T; ++t) mean += 0.5 * a(i, t);
    y(i) = mean + rng.normal();
  }

  ScenarioDraw draw;
  draw.data.n = n;
  draw.data.T = T;
  draw.data.covariates.resize(T + 1);
  draw.data.covariates[0] = L0;
  draw.data.block_names.resize(T + 1);
  std::vector<std::string> names;
  for (const char* stem : {"C", "P", "I"})
    for (int j = 1; j <= 2; ++j) names.push_back(std::string(stem) + std::to_string(j));
  for (int j = 1; j <= 14; ++j) names.push_back("S" + std::to_string(j));
  draw.data.block_names[0] = names;
  for (int t = 1; t <= T; ++t) {
    draw.data.covariates[t].resize(n, 0);
    draw.data.block_names[t] = {};
  }
  draw.data.treatments = a;
  draw.data.censoring.resize(n, 0);
  draw.data.outcome = y;
  draw.data.baseline_modifier = 0;

  draw.true_g = g;
  draw.truth.msm = MsmSpec::basic(true);
  draw.truth.mu.resize(3);
  draw.truth.mu << 0.0, 1.14, 0.5;
  for (int k = 0; k < 4; ++k) {
    std::vector<CoefIndex> group;
    for (int t = 0; t <= T; ++t) {
      draw.truth.oracle.support_a.push_back({t, 0, k});
      group.push_back({t, 0, k});
    }
    draw.truth.oracle.fuse_groups_a.push_back(group);
  }
  return draw;
}

LongitudinalDataset generate_panel_shaped(int n, std::uint64_t seed) {
  // T = 4 (five initiation decisions), blocks 0..5, censoring at 1..5.
  const int T = 4, blocks = 6, n_base = 8, n_tv = 6;
  CounterRng rng(seed, kScenarioStream + 1);
  LongitudinalDataset data;
  data.n = n;
  data.T = T;
  data.monotone_treatment = true;
  data.covariates.resize(blocks);
  data.block_names.resize(blocks);
  data.treatments = Eigen::MatrixXi::Zero(n, T + 1);
  data.censoring = Eigen::MatrixXi::Zero(n, blocks - 1);
  data.outcome = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
  data.baseline_modifier = 0;

  const std::vector<std::string> base_names = {"Sex",      "MotherEdu", "SingleParent",
                                               "French",   "BornAbroad", "SelfEsteem",
                                               "Impulsive", "Novelty"};
  const std::vector<std::string> tv_names = {"Dep",     "TeamSport", "FamStress",
                                             "OthStress", "WorWeight", "EverSmoke"};
  data.block_names[0] = base_names;
  for (const auto& s : tv_names) data.block_names[0].push_back(s);
  for (int t = 1; t < blocks; ++t) data.block_names[t] = tv_names;

  data.covariates[0].resize(n, n_base + n_tv);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < 5; ++k) data.covariates[0](i, k) = rng.bernoulli(0.5);
    for (int k = 5; k < n_base + n_tv; ++k) data.covariates[0](i, k) = rng.normal();
  }
  for (int t = 1; t < blocks; ++t)
    data.covariates[t] = Eigen::MatrixXd::Constant(
        n, n_tv, std::numeric_limits<double>::quiet_NaN());

  for (int i = 0; i < n; ++i) {
    const double sex = data.covariates[0](i, 0);
    Eigen::VectorXd tv(n_tv);
    for (int k = 0; k < n_tv; ++k) tv(k) = data.covariates[0](i, n_base + k);
    int treated = 0;
    bool censored = false;
    // Time 0 treatment decision.
    {
      const double p = expit(-2.0 + 0.3 * sex + 0.5 * tv(0) + 0.3 * tv(5));
      treated = rng.bernoulli(p);
      data.treatments(i, 0) = treated;
    }
    for (int t = 1; t < blocks; ++t) {
      if (censored) {
        data.censoring(i, t - 1) = 1;
        continue;
      }
      // Covariates at t are measured before the censoring indicator.
      for (int k = 0; k < n_tv; ++k)
        tv(k) = 0.6 * tv(k) + 0.2 * treated + 0.1 * sex + rng.normal();
      data.covariates[t].row(i) = tv;
      const double pc = expit(-2.8 + 0.25 * tv(0) - 0.2 * sex + 0.3 * treated);
      if (rng.bernoulli(pc)) {
        censored = true;
        data.censoring(i, t - 1) = 1;
        if (t <= T) data.treatments(i, t) = treated;
        continue;
      }
      if (t <= T) {
        if (!treated) {
          const double p = expit(-2.0 + 0.3 * sex + 0.5 * tv(0) + 0.3 * tv(5));
          treated = rng.bernoulli(p);
        }
        data.treatments(i, t) = treated;
      }
    }
    if (!censored) {
      double cum = 0.0;
      for (int t = 0; t <= T; ++t) cum += data.treatments(i, t);
      data.outcome(i) = 10.0 + 2.0 * sex + 1.2 * tv(0) + 0.8 * cum -
                        0.4 * sex * cum + 2.0 * rng.normal();
    }
  }
  data.validate();
  return data;
}

ScenarioDraw generate(const ScenarioConfig& config) {
  if (config.scenario == "1a") return generate_scenario1(config.n, 'a', config.seed);
  if (config.scenario == "1b") return generate_scenario1(config.n, 'b', config.seed);
  if (config.scenario == "1c") return generate_scenario1(config.n, 'c', config.seed);
  if (config.scenario == "2") return generate_scenario2(config.n, config.seed);
  if (config.scenario == "3") return generate_scenario3(config.n, config.seed);
  if (config.scenario == "sweep")
    return generate_positivity_sweep(config.n, config.nu0, config.nuI, config.seed);
  throw ValidationError("unknown scenario '" + config.scenario + "'");
}

std::vector<std::string> scenario_names() {
  return {"1a", "1b", "1c", "2", "3", "sweep"};
}

QSpec scenario_qspec(const std::string& scenario, const LongitudinalDataset& data) {
  QSpec spec = default_main_terms_spec(data);
  if (scenario == "1a" || scenario == "1b" || scenario == "1c" ||
      scenario == "sweep") {
    // Baseline stage also carries the C0*A0 interaction and squared I0.
    StageSpec& s0 = spec.stages[0];
    s0.terms.push_back({{{TermFactor::Kind::covariate, 0, 0, 1},
                         {TermFactor::Kind::treatment, 0, 0, 1}}});
    s0.terms.push_back({{{TermFactor::Kind::covariate, 0, 1, 2}}});
  }
  return spec;
}

std::vector<std::string> estimator_names() {
  return {"gcomp", "iptw_truth", "iptw_full", "iptw_oracle_select",
          "iptw_oracle_select_fuse", "iptw_loal", "iptw_fused_loal",
          "oracle_fused_lasso"};
}

EstimatorOutput run_estimator(const std::string& name, const ScenarioDraw& draw,
                              const LoalConfig& cfg) {
  const LongitudinalDataset& data = draw.data;
  EstimatorOutput out;

  // Unstabilized weights: the benchmark truths are the equal-pattern-mass
  // projections of the counterfactual means, which is exactly what inverse
  // products of the treatment probabilities target.
  auto iptw_from_fit = [&](const PropensityFit& fit) {
    const CumulativeWeights w = compute_cumulative_weights(data, fit, false);
    MsmEstimate est = fit_msm_iptw(data, w, draw.truth.msm);
    return est;
  };

  if (name == "gcomp") {
    const PatternSpace patterns = enumerate_patterns(
        data.T, data.monotone_treatment ? PatternSpace::Kind::monotone_initiation
                                        : PatternSpace::Kind::full);
    const QSequence qseq = estimate_q_sequence(data, patterns, cfg.qspec);
    out.est = g_computation(data, qseq, draw.truth.msm);
    out.est.estimator = name;
    return out;
  }
  if (name == "iptw_truth") {
    CumulativeWeights w;
    w.weights.resize(data.n);
    w.treat_prob.resize(data.n);
    w.cens_prob = Eigen::VectorXd::Ones(data.n);
    w.usable.assign(data.n, true);
    for (int i = 0; i < data.n; ++i) {
      double prob = 1.0;
      for (int t = 0; t <= data.T; ++t) prob *= draw.true_g(i, t);
      w.treat_prob(i) = prob;
      w.weights(i) = 1.0 / prob;
    }
    out.est = fit_msm_iptw(data, w, draw.truth.msm);
    out.est.estimator = name;
    return out;
  }
  if (name == "iptw_full") {
    const PropensityFit fit = full_propensity_fit(data);
    out.est = iptw_from_fit(fit);
    out.est.estimator = name;
    out.fit = fit;
    return out;
  }
  if (name == "iptw_oracle_select" || name == "iptw_oracle_select_fuse") {
    const PropensityFit fit =
        oracle_fit(data, draw.truth.oracle, name == "iptw_oracle_select_fuse");
    out.est = iptw_from_fit(fit);
    out.est.estimator = name;
    out.fit = fit;
    return out;
  }
  if (name == "oracle_fused_lasso") {
    const PropensityFit sel = oracle_fit(data, draw.truth.oracle, false);
    const PropensityFit fit = fuse_step(data, sel, cfg);
    out.est = iptw_from_fit(fit);
    out.est.estimator = name;
    out.fit = fit;
    return out;
  }
  if (name == "iptw_loal" || name == "iptw_fused_loal") {
    LoalConfig c = cfg;
    c.fuse = name == "iptw_fused_loal";
    const PipelineResult res = run_loal_pipeline(data, c);
    out.est = iptw_from_fit(res.fit);
    out.est.estimator = name;
    out.fit = res.fit;
    return out;
  }
  throw ValidationError("unknown estimator '" + name + "'");
}

namespace {

struct RepResult {
  std::vector<Eigen::VectorXd> mu;         // per estimator (empty on failure)
  std::vector<bool> ok;
  std::vector<std::optional<PropensityFit>> fits;
};

}  // namespace

MetricsTable run_monte_carlo(const ScenarioConfig& config,
                             const std::vector<std::string>& estimators, int reps,
                             const LoalConfig& loal_cfg, int threads) {
  if (reps < 1) throw ValidationError("run_monte_carlo: reps must be >= 1");
  MetricsTable table;
  table.estimators = estimators;
  table.reps = reps;
  table.n = config.n;

  std::vector<RepResult> results(reps);
  std::atomic<int> next(0);
  auto worker = [&]() {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= reps) return;
      ScenarioConfig rep_cfg = config;
      rep_cfg.seed = config.seed + 0x9E3779B97F4A7C15ull * (r + 1);
      const ScenarioDraw draw = generate(rep_cfg);
      LoalConfig cfg = loal_cfg;
      if (cfg.qspec.stages.empty())
        cfg.qspec = scenario_qspec(config.scenario, draw.data);
      RepResult& out = results[r];
      out.mu.resize(estimators.size());
      out.ok.resize(estimators.size(), false);
      out.fits.resize(estimators.size());
      for (size_t e = 0; e < estimators.size(); ++e) {
        try {
          EstimatorOutput eo = run_estimator(estimators[e], draw, cfg);
          out.mu[e] = eo.est.mu;
          out.ok[e] = eo.est.ok;
          out.fits[e] = std::move(eo.fit);
        } catch (const std::exception&) {
          out.ok[e] = false;
        }
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  // Reference draw for truth and design labels.
  ScenarioConfig ref_cfg = config;
  ref_cfg.seed = config.seed + 0x9E3779B97F4A7C15ull;
  const ScenarioDraw ref = generate(ref_cfg);
  const Eigen::VectorXd& mu_true = ref.truth.mu;
  const int n_par = static_cast<int>(mu_true.size());
  table.param_names = {"mu0", "mu1", "mu2", "mu3"};
  table.param_names.resize(n_par);

  const int n_est = static_cast<int>(estimators.size());
  table.sqrt_n_abs_bias = Eigen::MatrixXd::Zero(n_est, n_par);
  table.n_mse = Eigen::MatrixXd::Zero(n_est, n_par);
  table.n_var = Eigen::MatrixXd::Zero(n_est, n_par);
  table.failures.assign(n_est, 0);
  for (int e = 0; e < n_est; ++e) {
    std::vector<Eigen::VectorXd> ests;
    for (int r = 0; r < reps; ++r) {
      if (results[r].ok[e] && results[r].mu[e].size() == n_par)
        ests.push_back(results[r].mu[e]);
      else
        ++table.failures[e];
    }
    if (ests.empty()) continue;
    for (int j = 0; j < n_par; ++j) {
      double mean = 0.0;
      for (const auto& m : ests) mean += m(j);
      mean /= ests.size();
      double mse = 0.0, var = 0.0;
      for (const auto& m : ests) {
        mse += (m(j) - mu_true(j)) * (m(j) - mu_true(j));
        var += (m(j) - mean) * (m(j) - mean);
      }
      mse /= ests.size();
      var /= ests.size();
      table.sqrt_n_abs_bias(e, j) = std::sqrt(config.n) * std::abs(mean - mu_true(j));
      table.n_mse(e, j) = config.n * mse;
      table.n_var(e, j) = config.n * var;
    }
  }

  // Selection and fusion proportions for the selecting estimators.
  const PooledDesign ref_design = build_pooled_treatment_design(ref.data);
  const PenaltyGraph ref_graph = make_fusion_graph(ref_design, loal_cfg.graph_kind);
  for (int e = 0; e < n_est; ++e) {
    bool any = false;
    for (int r = 0; r < reps; ++r) any = any || results[r].fits[e].has_value();
    if (!any) continue;
    std::map<int, int> sel_count;
    std::map<int, std::pair<int, int>> fuse_count;  // edge -> (fused, both nonzero)
    int used = 0;
    for (int r = 0; r < reps; ++r) {
      if (!results[r].fits[e]) continue;
      const PropensityFit& fit = *results[r].fits[e];
      if (fit.support_a.size() != static_cast<size_t>(ref_design.cols())) continue;
      ++used;
      for (int j = 0; j < ref_design.cols(); ++j)
        if (ref_design.columns[j].is_covariate() && fit.support_a[j] &&
            fit.alpha(j) != 0.0)
          sel_count[j] += 1;
      for (size_t ed = 0; ed < ref_graph.edges.size(); ++ed) {
        const auto& [u, v] = ref_graph.edges[ed];
        const bool both = fit.support_a[u] && fit.support_a[v] &&
                          fit.alpha(u) != 0.0 && fit.alpha(v) != 0.0;
        const bool fused = both && fit.fuse_group_a[u] >= 0 &&
                           fit.fuse_group_a[u] == fit.fuse_group_a[v];
        auto& fc = fuse_count[static_cast<int>(ed)];
        fc.first += fused;
        fc.second += both;
      }
    }
    if (used == 0) continue;
    for (int j = 0; j < ref_design.cols(); ++j) {
      if (!ref_design.columns[j].is_covariate()) continue;
      MetricsTable::Selection s;
      s.estimator = estimators[e];
      s.column = ref_design.source_names[j];
      s.tau = ref_design.columns[j].tau;
      s.proportion = static_cast<double>(sel_count[j]) / used;
      table.selection.push_back(s);
    }
    for (size_t ed = 0; ed < ref_graph.edges.size(); ++ed) {
      const auto& [u, v] = ref_graph.edges[ed];
      MetricsTable::Fusion f;
      f.estimator = estimators[e];
      f.column = ref_design.source_names[u];
      f.tau_a = ref_design.columns[u].tau;
      f.tau_b = ref_design.columns[v].tau;
      const auto& fc = fuse_count[static_cast<int>(ed)];
      f.fused_nonzero = static_cast<double>(fc.first) / used;
      f.fused_given_selected =
          fc.second > 0 ? static_cast<double>(fc.first) / fc.second : 0.0;
      table.fusion.push_back(f);
    }
  }
  return table;
}

std::string MetricsTable::to_csv() const {
  std::ostringstream os;
  os << "estimator";
  for (const auto& p : param_names)
    os << ",sqrt_n_abs_bias_" << p << ",n_mse_" << p << ",n_var_" << p;
  os << ",failures,reps,n\n";
  for (size_t e = 0; e < estimators.size(); ++e) {
    os << estimators[e];
    for (int j = 0; j < sqrt_n_abs_bias.cols(); ++j)
      os << "," << sqrt_n_abs_bias(e, j) << "," << n_mse(e, j) << "," << n_var(e, j);
    os << "," << failures[e] << "," << reps << "," << n << "\n";
  }
  return os.str();
}

std::string MetricsTable::to_markdown() const {
  std::ostringstream os;
  os << "| Method |";
  for (const auto& p : param_names) os << " " << p << " |";
  os << "\n|---|";
  for (size_t j = 0; j < param_names.size(); ++j) os << "---|";
  os << "\n";
  os.setf(std::ios::fixed);
  for (size_t e = 0; e < estimators.size(); ++e) {
    os << "| " << estimators[e] << " |";
    for (int j = 0; j < sqrt_n_abs_bias.cols(); ++j) {
      os.precision(1);
      os << " " << sqrt_n_abs_bias(e, j) << "(";
      os.precision(0);
      os << n_mse(e, j) << ") |";
    }
    os << "\n";
  }
  return os.str();
}

std::string MetricsTable::selection_to_csv() const {
  std::ostringstream os;
  os << "estimator,kind,column,tau_a,tau_b,value,extra\n";
  for (const auto& s : selection)
    os << s.estimator << ",selection," << s.column << "," << s.tau << ",,"
       << s.proportion << ",\n";
  for (const auto& f : fusion)
    os << f.estimator << ",fusion," << f.column << "," << f.tau_a << "," << f.tau_b
       << "," << f.fused_nonzero << "," << f.fused_given_selected << "\n";
  return os.str();
}

}  // namespace loal

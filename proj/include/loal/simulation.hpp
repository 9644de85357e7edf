#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "loal/estimators.hpp"
#include "loal/loal.hpp"

namespace loal {

struct ScenarioTruth {
  Eigen::VectorXd mu;
  OracleSpec oracle;
  MsmSpec msm;
};

struct ScenarioDraw {
  LongitudinalDataset data;
  ScenarioTruth truth;
  Eigen::MatrixXd true_g;  // n x (T+1): P(A_t = observed a_t | history)
};

ScenarioDraw generate_scenario1(int n, char variant, std::uint64_t seed);
ScenarioDraw generate_scenario2(int n, std::uint64_t seed);
ScenarioDraw generate_scenario3(int n, std::uint64_t seed);
// Scenario 1(a) with logit P(A_0=1) = nu0 + 1.515 C_0 + nuI * I_0.
ScenarioDraw generate_positivity_sweep(int n, double nu0, double nuI,
                                       std::uint64_t seed);
// Smoke-test data in the application shape: monotone treatment, censoring,
// a trailing covariate block, 8 baseline + 6 time-varying covariates.
LongitudinalDataset generate_panel_shaped(int n, std::uint64_t seed);

struct ScenarioConfig {
  std::string scenario = "1a";  // 1a|1b|1c|2|3|sweep
  int n = 500;
  std::uint64_t seed = 1;
  double nu0 = 0.0, nuI = 1.0;
};

ScenarioDraw generate(const ScenarioConfig& config);
std::vector<std::string> scenario_names();

// Stage specs used in the experiments: main terms everywhere, plus the
// baseline-stage interaction and squared-instrument terms for scenario 1.
QSpec scenario_qspec(const std::string& scenario, const LongitudinalDataset& data);

struct EstimatorOutput {
  MsmEstimate est;
  std::optional<PropensityFit> fit;
};

// Names: gcomp, iptw_truth, iptw_full, iptw_oracle_select,
// iptw_oracle_select_fuse, iptw_loal, iptw_fused_loal, oracle_fused_lasso.
EstimatorOutput run_estimator(const std::string& name, const ScenarioDraw& draw,
                              const LoalConfig& cfg);
std::vector<std::string> estimator_names();

struct MetricsTable {
  std::vector<std::string> estimators;
  std::vector<std::string> param_names;
  Eigen::MatrixXd sqrt_n_abs_bias;  // estimators x params
  Eigen::MatrixXd n_mse;
  Eigen::MatrixXd n_var;
  std::vector<int> failures;  // per estimator, excluded from the averages
  int reps = 0;
  int n = 0;

  struct Selection {
    std::string estimator;
    std::string column;
    int tau = 0;
    double proportion = 0.0;
  };
  std::vector<Selection> selection;

  struct Fusion {
    std::string estimator;
    std::string column;
    int tau_a = 0, tau_b = 0;
    double fused_nonzero = 0.0;        // fused and nonzero, over all reps
    double fused_given_selected = 0.0; // conditional on both selected nonzero
  };
  std::vector<Fusion> fusion;

  std::string to_csv() const;
  std::string to_markdown() const;
  std::string selection_to_csv() const;
};

MetricsTable run_monte_carlo(const ScenarioConfig& config,
                             const std::vector<std::string>& estimators, int reps,
                             const LoalConfig& loal_cfg, int threads = 1);

}  // namespace loal

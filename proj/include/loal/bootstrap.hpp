#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "loal/dataset.hpp"

namespace loal {

// Estimator under resampling: throws on failure.
using DataEstimator = std::function<Eigen::VectorXd(const LongitudinalDataset&)>;

struct BootstrapLayer {
  int m = 0;
  Eigen::MatrixXd estimates;  // B x P, NaN rows for failed draws
  Eigen::VectorXd variance;   // per parameter, over successful draws
  int failures = 0;
};

struct BootstrapResult {
  Eigen::VectorXd mu_hat;             // full-sample estimate
  std::vector<BootstrapLayer> layers; // m_j = floor(q^j n), j = 0..K
  std::vector<int> m_star;            // selected subsample size per parameter
  Eigen::VectorXd epsilon;            // estimated rate exponent per parameter
  Eigen::VectorXd lo, hi;             // 95% Wald limits
  std::vector<std::vector<double>> ks;  // per parameter, ECDF distances j->j+1
  double q = 0.95;
  int K = 14;
  int B = 200;
  std::string method;
};

// Subsample-with-replacement bootstrap: m_j = floor(q^j n); the working m is
// chosen where successive sqrt(m)-centered bootstrap ECDFs stabilize
// (minimal Kolmogorov-Smirnov distance, ties to the larger m); the rate
// exponent comes from regressing log variance on -2 log m (with intercept);
// the interval is mu_hat +/- 1.96 (m*/n)^eps sqrt(var*).
BootstrapResult m_out_of_n_ci(const LongitudinalDataset& data,
                              const DataEstimator& estimator, double q, int K, int B,
                              std::uint64_t seed);

// Full-size resampling comparator with a Wald interval around mu_hat.
BootstrapResult naive_bootstrap_ci(const LongitudinalDataset& data,
                                   const DataEstimator& estimator, int B,
                                   std::uint64_t seed);

// Exact two-sample Kolmogorov-Smirnov distance (over the pooled points).
double ks_distance(std::vector<double> a, std::vector<double> b);

}  // namespace loal

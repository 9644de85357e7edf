#include "loal/bootstrap.hpp"

#include <algorithm>
#include <cmath>

#include "loal/errors.hpp"
#include "loal/rng.hpp"

namespace loal {

double ks_distance(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const size_t na = a.size(), nb = b.size();
  size_t i = 0, j = 0;
  double d = 0.0;
  while (i < na || j < nb) {
    const double v = (j >= nb || (i < na && a[i] <= b[j])) ? a[i] : b[j];
    while (i < na && a[i] <= v) ++i;
    while (j < nb && b[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na -
                             static_cast<double>(j) / nb));
  }
  return d;
}

namespace {

constexpr std::uint64_t kBootstrapTag = 0xB007;

BootstrapLayer run_layer(const LongitudinalDataset& data, const DataEstimator& est,
                         int m, int B, int P, std::uint64_t seed, int layer_id) {
  BootstrapLayer layer;
  layer.m = m;
  layer.estimates = Eigen::MatrixXd::Constant(
      B, P, std::numeric_limits<double>::quiet_NaN());
  CounterRng base(seed, kBootstrapTag);
  std::vector<int> idx(m);
  for (int b = 0; b < B; ++b) {
    CounterRng rng = base.substream(static_cast<std::uint64_t>(layer_id) * 1000003u +
                                    static_cast<std::uint64_t>(b));
    for (int k = 0; k < m; ++k)
      idx[k] = static_cast<int>(rng.below(static_cast<std::uint64_t>(data.n)));
    try {
      const Eigen::VectorXd mu = est(data.subset(idx));
      if (mu.size() == P) layer.estimates.row(b) = mu;
      else ++layer.failures;
    } catch (const std::exception&) {
      ++layer.failures;
    }
  }
  layer.variance = Eigen::VectorXd::Zero(P);
  const int good = B - layer.failures;
  if (good >= 2) {
    for (int p = 0; p < P; ++p) {
      double mean = 0.0;
      int cnt = 0;
      for (int b = 0; b < B; ++b)
        if (std::isfinite(layer.estimates(b, p))) {
          mean += layer.estimates(b, p);
          ++cnt;
        }
      mean /= cnt;
      double var = 0.0;
      for (int b = 0; b < B; ++b)
        if (std::isfinite(layer.estimates(b, p)))
          var += (layer.estimates(b, p) - mean) * (layer.estimates(b, p) - mean);
      layer.variance(p) = var / (cnt - 1);
    }
  }
  return layer;
}

}  // namespace

BootstrapResult m_out_of_n_ci(const LongitudinalDataset& data,
                              const DataEstimator& estimator, double q, int K, int B,
                              std::uint64_t seed) {
  if (!(q > 0.0 && q < 1.0)) throw ValidationError("m_out_of_n_ci: q must be in (0,1)");
  if (K < 1 || B < 2) throw ValidationError("m_out_of_n_ci: need K >= 1 and B >= 2");
  const double m_min = std::pow(q, K) * data.n;
  if (m_min < 30.0)
    throw ValidationError("m_out_of_n_ci: smallest subsample too small (n q^K = " +
                          std::to_string(m_min) + " < 30)");

  BootstrapResult out;
  out.q = q;
  out.K = K;
  out.B = B;
  out.method = "mn";
  out.mu_hat = estimator(data);
  const int P = static_cast<int>(out.mu_hat.size());

  for (int j = 0; j <= K; ++j) {
    const int m = static_cast<int>(std::floor(std::pow(q, j) * data.n));
    BootstrapLayer layer = run_layer(data, estimator, m, B, P, seed, j);
    if (layer.failures > 0.2 * B)
      throw NumericError("m_out_of_n_ci: estimator failed on " +
                         std::to_string(layer.failures) + "/" + std::to_string(B) +
                         " draws at m = " + std::to_string(m));
    out.layers.push_back(std::move(layer));
  }

  out.m_star.assign(P, data.n);
  out.epsilon = Eigen::VectorXd::Zero(P);
  out.lo.resize(P);
  out.hi.resize(P);
  out.ks.assign(P, {});
  for (int p = 0; p < P; ++p) {
    // Kolmogorov-Smirnov distances between successive centered ECDFs.
    int best_j = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int j = 0; j < K; ++j) {
      auto centered = [&](const BootstrapLayer& layer) {
        std::vector<double> v;
        const double root_m = std::sqrt(static_cast<double>(layer.m));
        for (int b = 0; b < B; ++b)
          if (std::isfinite(layer.estimates(b, p)))
            v.push_back(root_m * (layer.estimates(b, p) - out.mu_hat(p)));
        return v;
      };
      const double d = ks_distance(centered(out.layers[j]), centered(out.layers[j + 1]));
      out.ks[p].push_back(d);
      if (d < best_d) {  // ties resolve to the larger m (earlier j)
        best_d = d;
        best_j = j;
      }
    }
    out.m_star[p] = out.layers[best_j].m;

    // Rate exponent: slope of log variance on -2 log m.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int cnt = 0;
    for (int j = 0; j <= K; ++j) {
      const double v = out.layers[j].variance(p);
      if (!(v > 0.0)) continue;
      const double x = -2.0 * std::log(static_cast<double>(out.layers[j].m));
      const double y = std::log(v);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
      ++cnt;
    }
    double eps = 0.0;
    if (cnt >= 2) {
      const double denom = cnt * sxx - sx * sx;
      if (std::abs(denom) > 0) eps = (cnt * sxy - sx * sy) / denom;
    }
    out.epsilon(p) = eps;

    const double var_star = out.layers[best_j].variance(p);
    const double scale =
        std::pow(static_cast<double>(out.m_star[p]) / data.n, eps) *
        std::sqrt(std::max(var_star, 0.0));
    out.lo(p) = out.mu_hat(p) - 1.96 * scale;
    out.hi(p) = out.mu_hat(p) + 1.96 * scale;
  }
  return out;
}

BootstrapResult naive_bootstrap_ci(const LongitudinalDataset& data,
                                   const DataEstimator& estimator, int B,
                                   std::uint64_t seed) {
  if (B < 2) throw ValidationError("naive_bootstrap_ci: need B >= 2");
  BootstrapResult out;
  out.q = 1.0;
  out.K = 0;
  out.B = B;
  out.method = "naive";
  out.mu_hat = estimator(data);
  const int P = static_cast<int>(out.mu_hat.size());
  BootstrapLayer layer = run_layer(data, estimator, data.n, B, P, seed, 0);
  if (layer.failures > 0.2 * B)
    throw NumericError("naive_bootstrap_ci: estimator failed on " +
                       std::to_string(layer.failures) + "/" + std::to_string(B) +
                       " draws");
  out.m_star.assign(P, data.n);
  out.epsilon = Eigen::VectorXd::Zero(P);
  out.lo.resize(P);
  out.hi.resize(P);
  for (int p = 0; p < P; ++p) {
    const double sd = std::sqrt(std::max(layer.variance(p), 0.0));
    out.lo(p) = out.mu_hat(p) - 1.96 * sd;
    out.hi(p) = out.mu_hat(p) + 1.96 * sd;
  }
  out.layers.push_back(std::move(layer));
  return out;
}

}  // namespace loal

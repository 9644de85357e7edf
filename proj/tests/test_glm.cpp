#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "loal/errors.hpp"
#include "loal/glm.hpp"
#include "loal/rng.hpp"

using namespace loal;

TEST_CASE("wls constant fit") {
  Eigen::MatrixXd X(3, 1);
  X << 1, 1, 1;
  Eigen::VectorXd y(3);
  y << 2, 2, 2;
  const GlmFit fit = fit_linear_wls(X, y, Eigen::VectorXd::Ones(3));
  CHECK(fit.coefficients(0) == doctest::Approx(2.0));
}

TEST_CASE("wls matches the closed form (XtWX)^-1 XtWy") {
  Eigen::MatrixXd X(4, 2);
  X << 1, 0.5, 1, -1.0, 1, 2.0, 1, 0.0;
  Eigen::VectorXd y(4);
  y << 1.0, -0.5, 3.0, 0.2;
  Eigen::VectorXd w(4);
  w << 1.0, 2.0, 0.5, 1.5;
  const Eigen::MatrixXd XtWX = X.transpose() * w.asDiagonal() * X;
  const Eigen::VectorXd XtWy = X.transpose() * w.asDiagonal() * y;
  const Eigen::VectorXd expect = XtWX.inverse() * XtWy;
  const GlmFit fit = fit_linear_wls(X, y, w);
  CHECK(fit.coefficients(0) == doctest::Approx(expect(0)).epsilon(1e-10));
  CHECK(fit.coefficients(1) == doctest::Approx(expect(1)).epsilon(1e-10));

  // Residuals are W-orthogonal to the columns.
  const Eigen::VectorXd r = y - X * fit.coefficients;
  CHECK((X.transpose() * w.asDiagonal() * r).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("zero-weight rows are ignored") {
  Eigen::MatrixXd X(5, 2);
  X << 1, 0.5, 1, -1.0, 1, 2.0, 1, 0.0, 1, 9.0;
  Eigen::VectorXd y(5);
  y << 1.0, -0.5, 3.0, 0.2, 100.0;
  Eigen::VectorXd w(5);
  w << 1, 1, 1, 1, 0;
  const GlmFit full = fit_linear_wls(X, y, w);
  const GlmFit sub = fit_linear_wls(X.topRows(4), y.head(4), w.head(4));
  CHECK(full.coefficients(0) == doctest::Approx(sub.coefficients(0)).epsilon(1e-12));
  CHECK(full.coefficients(1) == doctest::Approx(sub.coefficients(1)).epsilon(1e-12));
}

TEST_CASE("singular design names offending columns") {
  Eigen::MatrixXd X(4, 3);
  X << 1, 2, 4, 1, -1, -2, 1, 0.5, 1, 1, 3, 6;  // col2 = 2 * col1
  Eigen::VectorXd y(4);
  y << 1, 2, 3, 4;
  CHECK_THROWS_AS(fit_linear_wls(X, y, Eigen::VectorXd::Ones(4)), NumericError);
}

TEST_CASE("logistic intercept-only closed forms") {
  Eigen::MatrixXd X(4, 1);
  X << 1, 1, 1, 1;
  Eigen::VectorXd y(4);
  y << 0, 1, 0, 1;
  GlmFit fit = fit_logistic(X, y, Eigen::VectorXd::Ones(4));
  CHECK(fit.converged);
  CHECK(fit.coefficients(0) == doctest::Approx(0.0).epsilon(1e-7));

  y << 0, 0, 0, 1;  // mean 0.25 -> logit = log(1/3)
  fit = fit_logistic(X, y, Eigen::VectorXd::Ones(4));
  CHECK(fit.coefficients(0) == doctest::Approx(std::log(1.0 / 3.0)).epsilon(1e-7));
}

TEST_CASE("logistic matches a dense likelihood grid search") {
  Eigen::MatrixXd X(8, 2);
  X << 1, -1.2, 1, -0.7, 1, -0.3, 1, 0.1, 1, 0.4, 1, 0.9, 1, 1.3, 1, 1.8;
  Eigen::VectorXd y(8);
  y << 0, 0, 1, 0, 1, 0, 1, 1;
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(8);
  const GlmFit fit = fit_logistic(X, y, w);

  auto loglik = [&](double b0, double b1) {
    double ll = 0;
    for (int i = 0; i < 8; ++i) {
      const double eta = b0 + b1 * X(i, 1);
      ll += y(i) * eta - std::log1p(std::exp(eta));
    }
    return ll;
  };
  double best0 = 0, best1 = 0, best = -1e300;
  for (double b0 = -3; b0 <= 3; b0 += 1e-3)
    for (double b1 = -1; b1 <= 4; b1 += 1e-2) {
      const double ll = loglik(b0, b1);
      if (ll > best) {
        best = ll;
        best0 = b0;
        best1 = b1;
      }
    }
  CHECK(fit.coefficients(0) == doctest::Approx(best0).epsilon(0).scale(1).epsilon(1e-4 * 40));
  CHECK(std::abs(fit.coefficients(0) - best0) < 1e-2);
  CHECK(std::abs(fit.coefficients(1) - best1) < 1e-2);
  CHECK(fit.log_likelihood >= best - 1e-6);
}

TEST_CASE("weight/replication equivalence") {
  CounterRng rng(5, 0);
  const int n = 60;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1;
    X(i, 1) = rng.normal();
    y(i) = rng.bernoulli(expit(0.3 + 0.8 * X(i, 1)));
  }
  // Duplicate every row with half weight.
  Eigen::MatrixXd X2(2 * n, 2);
  Eigen::VectorXd y2(2 * n), w2(2 * n);
  for (int i = 0; i < n; ++i) {
    X2.row(2 * i) = X.row(i);
    X2.row(2 * i + 1) = X.row(i);
    y2(2 * i) = y(i);
    y2(2 * i + 1) = y(i);
    w2(2 * i) = 0.5;
    w2(2 * i + 1) = 0.5;
  }
  const GlmFit a = fit_logistic(X, y, Eigen::VectorXd::Ones(n));
  const GlmFit b = fit_logistic(X2, y2, w2);
  CHECK(a.coefficients(0) == doctest::Approx(b.coefficients(0)).epsilon(1e-8));
  CHECK(a.coefficients(1) == doctest::Approx(b.coefficients(1)).epsilon(1e-8));
}

TEST_CASE("fixed-zero mask holds coefficients at zero") {
  CounterRng rng(6, 0);
  const int n = 50;
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1;
    X(i, 1) = rng.normal();
    X(i, 2) = rng.normal();
    y(i) = rng.bernoulli(expit(0.5 * X(i, 1)));
  }
  const GlmFit fit = fit_logistic(X, y, Eigen::VectorXd::Ones(n), {false, false, true});
  CHECK(fit.coefficients(2) == 0.0);
  const GlmFit sub = fit_logistic(X.leftCols(2), y, Eigen::VectorXd::Ones(n));
  CHECK(fit.coefficients(1) == doctest::Approx(sub.coefficients(1)).epsilon(1e-9));
}

TEST_CASE("separation raises a numeric error") {
  Eigen::MatrixXd X(6, 2);
  X << 1, -2, 1, -1, 1, -0.5, 1, 0.5, 1, 1, 1, 2;
  Eigen::VectorXd y(6);
  y << 0, 0, 0, 1, 1, 1;  // perfectly separated on column 1
  CHECK_THROWS_AS(fit_logistic(X, y, Eigen::VectorXd::Ones(6)), NumericError);
}

TEST_CASE("sandwich on a hand-computed 3-point WLS case") {
  Eigen::MatrixXd X(3, 1);
  X << 1, 1, 1;
  Eigen::VectorXd y(3);
  y << 1.0, 2.0, 4.0;
  Eigen::VectorXd w(3);
  w << 1.0, 1.0, 2.0;
  const GlmFit fit = fit_linear_wls(X, y, w);
  // beta = (1 + 2 + 8) / 4 = 2.75; residuals: -1.75, -0.75, 1.25.
  CHECK(fit.coefficients(0) == doctest::Approx(2.75));
  // A = sum w = 4; B = sum (w r)^2 = 1.75^2 + 0.75^2 + 2.5^2 = 9.875.
  // se = sqrt(9.875) / 4.
  const Eigen::VectorXd se = sandwich_se(X, y, w, fit);
  CHECK(se(0) == doctest::Approx(std::sqrt(9.875) / 4.0).epsilon(1e-12));
}

TEST_CASE("sandwich is invariant to weight scaling") {
  CounterRng rng(8, 0);
  const int n = 40;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1;
    X(i, 1) = rng.normal();
    y(i) = 1.0 + 0.5 * X(i, 1) + 0.3 * rng.normal();
  }
  const GlmFit f1 = fit_linear_wls(X, y, Eigen::VectorXd::Ones(n));
  const GlmFit f2 = fit_linear_wls(X, y, Eigen::VectorXd::Constant(n, 3.7));
  const Eigen::VectorXd s1 = sandwich_se(X, y, Eigen::VectorXd::Ones(n), f1);
  const Eigen::VectorXd s2 = sandwich_se(X, y, Eigen::VectorXd::Constant(n, 3.7), f2);
  CHECK(s1(0) == doctest::Approx(s2(0)).epsilon(1e-10));
  CHECK(s1(1) == doctest::Approx(s2(1)).epsilon(1e-10));
}

TEST_CASE("sandwich approximates the model SE under homoskedasticity") {
  CounterRng rng(11, 0);
  const int n = 20000;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1;
    X(i, 1) = rng.normal();
    y(i) = 2.0 - 1.0 * X(i, 1) + rng.normal();
  }
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  const GlmFit fit = fit_linear_wls(X, y, w);
  const Eigen::VectorXd sw = sandwich_se(X, y, w, fit);
  // Model-based: sigma^2 (X'X)^-1.
  const Eigen::VectorXd r = y - X * fit.coefficients;
  const double s2 = r.squaredNorm() / (n - 2);
  const Eigen::MatrixXd cov = s2 * (X.transpose() * X).inverse();
  for (int j = 0; j < 2; ++j)
    CHECK(std::abs(sw(j) / std::sqrt(cov(j, j)) - 1.0) < 0.1);
}

TEST_CASE("clustered sandwich differs when clusters are correlated") {
  CounterRng rng(13, 0);
  const int n_cluster = 200, reps = 4;
  const int n = n_cluster * reps;
  Eigen::MatrixXd X(n, 1);
  Eigen::VectorXd y(n);
  std::vector<int> cluster(n);
  int r = 0;
  for (int c = 0; c < n_cluster; ++c) {
    const double u = rng.normal();
    for (int k = 0; k < reps; ++k, ++r) {
      X(r, 0) = 1;
      y(r) = 1.0 + u + 0.1 * rng.normal();
      cluster[r] = c;
    }
  }
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  const GlmFit fit = fit_linear_wls(X, y, w);
  const Eigen::VectorXd se_iid = sandwich_se(X, y, w, fit);
  const Eigen::VectorXd se_cl = sandwich_se(X, y, w, fit, cluster);
  CHECK(se_cl(0) > 1.5 * se_iid(0));
}

TEST_CASE("IRLS accepts quasi-binomial responses in [0,1]") {
  Eigen::MatrixXd X(5, 1);
  X << 1, 1, 1, 1, 1;
  Eigen::VectorXd y(5);
  y << 0.2, 0.4, 0.5, 0.3, 0.6;
  const GlmFit fit = fit_logistic(X, y, Eigen::VectorXd::Ones(5));
  const double mean = y.mean();
  CHECK(fit.coefficients(0) == doctest::Approx(std::log(mean / (1 - mean))).epsilon(1e-6));
}

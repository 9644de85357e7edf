#include "loal/outcome_models.hpp"

#include <algorithm>
#include <cmath>

#include "loal/errors.hpp"
#include "loal/glm.hpp"

namespace loal {

std::string Term::label(const LongitudinalDataset& data) const {
  std::string s;
  for (const auto& f : factors) {
    if (!s.empty()) s += ":";
    if (f.kind == TermFactor::Kind::treatment)
      s += "A" + std::to_string(f.k);
    else
      s += data.block_names[f.block][f.k];
    if (f.power != 1) s += "^" + std::to_string(f.power);
  }
  return s;
}

QSpec default_main_terms_spec(const LongitudinalDataset& data) {
  QSpec spec;
  const int S = data.n_blocks();
  spec.stages.resize(S);
  for (int s = 0; s < S; ++s) {
    for (int b = 0; b <= s; ++b)
      for (int k = 0; k < data.block_size(b); ++k)
        spec.stages[s].terms.push_back({{{TermFactor::Kind::covariate, b, k, 1}}});
    for (int t = 0; t <= std::min(s, data.T); ++t)
      spec.stages[s].terms.push_back({{{TermFactor::Kind::treatment, 0, t, 1}}});
  }
  return spec;
}

namespace {

double term_value(const LongitudinalDataset& data, const Term& term, int i,
                  const std::vector<int>* pattern) {
  double v = 1.0;
  for (const auto& f : term.factors) {
    double x;
    if (f.kind == TermFactor::Kind::treatment)
      x = pattern ? static_cast<double>((*pattern)[f.k])
                  : static_cast<double>(data.treatments(i, f.k));
    else
      x = data.covariates[f.block](i, f.k);
    for (int q = 0; q < f.power; ++q) v *= x;
  }
  return v;
}

Eigen::MatrixXd stage_design(const LongitudinalDataset& data, const StageSpec& stage,
                             const std::vector<int>& rows,
                             const std::vector<int>* pattern) {
  const int n = static_cast<int>(rows.size());
  const int p = static_cast<int>(stage.terms.size()) + 1;
  Eigen::MatrixXd X(n, p);
  X.col(0).setOnes();
  for (int j = 0; j < p - 1; ++j)
    for (int r = 0; r < n; ++r)
      X(r, j + 1) = term_value(data, stage.terms[j], rows[r], pattern);
  return X;
}

void check_stage_spec(const LongitudinalDataset& data, const QSpec& spec) {
  const int S = data.n_blocks();
  if (static_cast<int>(spec.stages.size()) != S)
    throw ValidationError("q_spec must declare one stage per covariate block");
  for (int s = 0; s < S; ++s)
    for (const auto& term : spec.stages[s].terms)
      for (const auto& f : term.factors) {
        if (f.kind == TermFactor::Kind::covariate) {
          if (f.block > s || f.block < 0 || f.k < 0 || f.k >= data.block_size(f.block))
            throw ValidationError("q_spec stage " + std::to_string(s) +
                                  " uses an out-of-scope covariate");
        } else if (f.k < 0 || f.k > std::min(s, data.T)) {
          throw ValidationError("q_spec stage " + std::to_string(s) +
                                " uses an out-of-scope treatment");
        }
      }
}

}  // namespace

QSequence estimate_q_sequence(const LongitudinalDataset& data,
                              const PatternSpace& patterns, const QSpec& spec) {
  data.validate();
  check_stage_spec(data, spec);
  const int S = data.n_blocks();
  const int P = patterns.size();
  for (const auto& pat : patterns.patterns)
    if (static_cast<int>(pat.size()) != data.T + 1)
      throw ValidationError("pattern length must be T+1");

  const bool logistic = spec.family == QSpec::Family::logistic;
  const double lo = spec.y_lo, span = spec.y_hi - spec.y_lo;
  if (logistic && span <= 0)
    throw ValidationError("logistic q family requires y_lo < y_hi");

  QSequence qs;
  qs.patterns = patterns;
  qs.qhat.assign(S, Eigen::MatrixXd::Constant(data.n, P,
                                              std::numeric_limits<double>::quiet_NaN()));
  qs.risk.resize(S);
  for (int s = 0; s < S; ++s)
    for (int i = 0; i < data.n; ++i)
      if (data.censored_by(i, s) == 0) qs.risk[s].push_back(i);

  for (int s = S - 1; s >= 0; --s) {
    const bool top = s == S - 1;
    // The response lives on the next stage's risk set.
    const std::vector<int>& fit_rows = top ? qs.risk[s] : qs.risk[s + 1];
    const std::vector<int>& pred_rows = qs.risk[s];
    if (fit_rows.empty())
      throw NumericError("empty risk set at stage " + std::to_string(s));
    const Eigen::MatrixXd X_fit = stage_design(data, spec.stages[s], fit_rows, nullptr);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(X_fit.rows());

    auto fit_and_predict = [&](const Eigen::VectorXd& resp, int pat) {
      GlmFit fit;
      try {
        if (logistic) {
          Eigen::VectorXd yb = (resp.array() - lo) / span;
          if (yb.minCoeff() < -1e-9 || yb.maxCoeff() > 1.0 + 1e-9)
            throw ValidationError("outcome outside declared bounds for logistic q");
          fit = fit_logistic(X_fit, yb.cwiseMax(0.0).cwiseMin(1.0), ones);
        } else {
          fit = fit_linear_wls(X_fit, resp, ones);
        }
      } catch (const NumericError& e) {
        throw NumericError("stage " + std::to_string(s) + " regression failed: " +
                           e.what());
      }
      const Eigen::MatrixXd X_pred =
          stage_design(data, spec.stages[s], pred_rows, &patterns.patterns[pat]);
      Eigen::VectorXd pred = fit.predict_response(X_pred);
      if (logistic) pred = (pred.array() * span + lo).matrix();
      for (size_t r = 0; r < pred_rows.size(); ++r)
        qs.qhat[s](pred_rows[r], pat) = pred(r);
    };

    if (top) {
      Eigen::VectorXd y(fit_rows.size());
      for (size_t r = 0; r < fit_rows.size(); ++r) y(r) = data.outcome(fit_rows[r]);
      // One fit; pattern only alters the prediction design.
      GlmFit fit;
      if (logistic) {
        Eigen::VectorXd yb = (y.array() - lo) / span;
        if (yb.minCoeff() < -1e-9 || yb.maxCoeff() > 1.0 + 1e-9)
          throw ValidationError("outcome outside declared bounds for logistic q");
        fit = fit_logistic(X_fit, yb.cwiseMax(0.0).cwiseMin(1.0), ones);
      } else {
        fit = fit_linear_wls(X_fit, y, ones);
      }
      for (int pat = 0; pat < P; ++pat) {
        const Eigen::MatrixXd X_pred =
            stage_design(data, spec.stages[s], pred_rows, &patterns.patterns[pat]);
        Eigen::VectorXd pred = fit.predict_response(X_pred);
        if (logistic) pred = (pred.array() * span + lo).matrix();
        for (size_t r = 0; r < pred_rows.size(); ++r)
          qs.qhat[s](pred_rows[r], pat) = pred(r);
      }
    } else {
      for (int pat = 0; pat < P; ++pat) {
        Eigen::VectorXd resp(fit_rows.size());
        for (size_t r = 0; r < fit_rows.size(); ++r)
          resp(r) = qs.qhat[s + 1](fit_rows[r], pat);
        fit_and_predict(resp, pat);
      }
    }
  }
  return qs;
}

const WorkingBetaEntry* WorkingBeta::find(const CoefIndex& idx) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), idx,
                             [](const WorkingBetaEntry& e, const CoefIndex& i) {
                               return e.idx < i;
                             });
  if (it == entries.end() || !(it->idx == idx)) return nullptr;
  return &*it;
}

std::vector<WorkingBetaEntry> fit_working_structural(const LongitudinalDataset& data,
                                                     const QSequence& qseq, int tau,
                                                     WorkingSe se_kind) {
  const int S = data.n_blocks();
  if (tau < 0 || tau >= S)
    throw ValidationError("fit_working_structural: tau out of range");

  // Regressor layout: intercept, covariate main terms through block tau,
  // then pattern treatments (past ones; through the current time under
  // monotone coding, mirroring the intention-to-treat working models).
  struct Col {
    CoefIndex idx;
  };
  std::vector<Col> cols;
  cols.push_back({{tau, -1, 0}});
  for (int b = 0; b <= tau; ++b)
    for (int k = 0; k < data.block_size(b); ++k) cols.push_back({{tau, b, k}});
  const int last_a = data.monotone_treatment ? std::min(tau, data.T)
                                             : std::min(tau - 1, data.T);
  for (int t = 0; t <= last_a; ++t) cols.push_back({{tau, tau + 1, t}});
  const int K = static_cast<int>(cols.size());

  const std::vector<int>& rows = qseq.risk[tau];
  const int P = qseq.patterns.size();
  const long n_rows = static_cast<long>(rows.size()) * P;
  if (n_rows <= K)
    throw NumericError("fit_working_structural: too few stacked rows at tau " +
                       std::to_string(tau));

  Eigen::MatrixXd XtX = Eigen::MatrixXd::Zero(K, K);
  Eigen::VectorXd Xty = Eigen::VectorXd::Zero(K);
  Eigen::VectorXd x(K);
  auto fill_row = [&](int i, int pat) {
    for (int j = 0; j < K; ++j) {
      const CoefIndex& idx = cols[j].idx;
      if (idx.is_intercept())
        x(j) = 1.0;
      else if (idx.is_treatment())
        x(j) = qseq.patterns.patterns[pat][idx.k];
      else
        x(j) = data.covariates[idx.block](i, idx.k);
    }
  };
  for (int i : rows) {
    for (int pat = 0; pat < P; ++pat) {
      fill_row(i, pat);
      const double y = qseq.qhat[tau](i, pat);
      XtX.selfadjointView<Eigen::Lower>().rankUpdate(x);
      Xty += x * y;
    }
  }
  XtX = XtX.selfadjointView<Eigen::Lower>();

  Eigen::LDLT<Eigen::MatrixXd> ldlt(XtX);
  Eigen::VectorXd beta = ldlt.solve(Xty);
  if (ldlt.info() != Eigen::Success ||
      (XtX * beta - Xty).cwiseAbs().maxCoeff() >
          1e-6 * (Xty.cwiseAbs().maxCoeff() + 1.0))
    throw NumericError("singular stacked design at tau " + std::to_string(tau));

  // Second pass: residual variance and (optionally) clustered meat.
  double rss = 0.0;
  Eigen::MatrixXd meat;
  Eigen::VectorXd subj_sum;
  if (se_kind == WorkingSe::robust) {
    meat = Eigen::MatrixXd::Zero(K, K);
    subj_sum = Eigen::VectorXd::Zero(K);
  }
  for (int i : rows) {
    if (se_kind == WorkingSe::robust) subj_sum.setZero();
    for (int pat = 0; pat < P; ++pat) {
      fill_row(i, pat);
      const double r = qseq.qhat[tau](i, pat) - x.dot(beta);
      rss += r * r;
      if (se_kind == WorkingSe::robust) subj_sum += r * x;
    }
    if (se_kind == WorkingSe::robust)
      meat.selfadjointView<Eigen::Lower>().rankUpdate(subj_sum);
  }

  Eigen::VectorXd se(K);
  if (se_kind == WorkingSe::model_based) {
    const double sigma2 = rss / static_cast<double>(n_rows - K);
    const Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(K, K)) * sigma2;
    for (int j = 0; j < K; ++j) se(j) = std::sqrt(std::max(cov(j, j), 0.0));
  } else {
    meat = meat.selfadjointView<Eigen::Lower>();
    const Eigen::MatrixXd vb = ldlt.solve(ldlt.solve(meat).transpose());
    for (int j = 0; j < K; ++j) se(j) = std::sqrt(std::max(vb(j, j), 0.0));
  }

  std::vector<WorkingBetaEntry> out;
  for (int j = 0; j < K; ++j) {
    WorkingBetaEntry e;
    e.idx = cols[j].idx;
    e.beta = beta(j);
    e.se = se(j);
    e.shrinkable = e.idx.is_covariate();
    out.push_back(e);
  }
  return out;
}

WorkingBeta fit_working_structural_all(const LongitudinalDataset& data,
                                       const QSequence& qseq, WorkingSe se_kind) {
  WorkingBeta wb;
  for (int tau = 0; tau < data.n_blocks(); ++tau) {
    auto rows = fit_working_structural(data, qseq, tau, se_kind);
    wb.entries.insert(wb.entries.end(), rows.begin(), rows.end());
  }
  std::sort(wb.entries.begin(), wb.entries.end(),
            [](const WorkingBetaEntry& a, const WorkingBetaEntry& b) {
              return a.idx < b.idx;
            });
  return wb;
}

}  // namespace loal

#include "loal/design.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "loal/errors.hpp"

namespace loal {

int PooledDesign::col_of(const CoefIndex& idx) const {
  auto it = std::lower_bound(columns.begin(), columns.end(), idx);
  if (it == columns.end() || !(*it == idx)) return -1;
  return static_cast<int>(it - columns.begin());
}

namespace {

struct ColumnPlan {
  std::vector<CoefIndex> columns;
  std::vector<std::string> names;
  std::vector<std::string> source;
  std::vector<bool> unpenalized;
};

void add_model_columns(const LongitudinalDataset& data, int tau, bool with_treatments,
                       int first_treatment, ColumnPlan& plan) {
  plan.columns.push_back({tau, -1, 0});
  plan.names.push_back("t" + std::to_string(tau) + ":(intercept)");
  plan.source.push_back("");
  plan.unpenalized.push_back(true);
  for (int b = 0; b <= tau; ++b) {
    for (int k = 0; k < data.block_size(b); ++k) {
      plan.columns.push_back({tau, b, k});
      plan.names.push_back("t" + std::to_string(tau) + ":" + data.block_names[b][k]);
      plan.source.push_back(data.block_names[b][k]);
      plan.unpenalized.push_back(false);
    }
  }
  if (with_treatments) {
    const int last = std::min(tau - 1, data.T);
    for (int k = first_treatment; k <= last; ++k) {
      plan.columns.push_back({tau, tau + 1, k});
      plan.names.push_back("t" + std::to_string(tau) + ":A" + std::to_string(k));
      plan.source.push_back("");
      plan.unpenalized.push_back(true);
    }
  }
}

PooledDesign assemble(const LongitudinalDataset& data, PooledDesign::Kind kind,
                      const std::vector<int>& model_times, const ColumnPlan& plan,
                      const std::vector<std::vector<int>>& risk_sets) {
  PooledDesign design;
  design.kind = kind;
  design.model_times = model_times;
  design.columns = plan.columns;
  design.column_names = plan.names;
  design.source_names = plan.source;
  design.unpenalized = plan.unpenalized;

  int n_rows = 0;
  for (const auto& rs : risk_sets) n_rows += static_cast<int>(rs.size());
  const int n_cols = static_cast<int>(plan.columns.size());
  design.X = Eigen::MatrixXd::Zero(n_rows, n_cols);
  design.y.resize(n_rows);
  design.row_time.resize(n_rows);
  design.row_subject.resize(n_rows);

  int r = 0;
  for (size_t m = 0; m < model_times.size(); ++m) {
    const int tau = model_times[m];
    for (int i : risk_sets[m]) {
      design.row_time[r] = tau;
      design.row_subject[r] = i;
      if (kind == PooledDesign::Kind::treatment)
        design.y(r) = data.treatments(i, tau);
      else
        design.y(r) = data.censoring(i, tau - 1);
      for (int c = 0; c < n_cols; ++c) {
        const CoefIndex& idx = plan.columns[c];
        if (idx.tau != tau) continue;
        double v;
        if (idx.is_intercept()) {
          v = 1.0;
        } else if (idx.is_treatment()) {
          v = data.treatments(i, idx.k);
        } else {
          v = data.covariates[idx.block](i, idx.k);
          if (!std::isfinite(v))
            throw ValidationError("NaN covariate " + design.column_names[c] +
                                  " in the time-" + std::to_string(tau) + " risk set");
        }
        design.X(r, c) = v;
      }
      ++r;
    }
  }
  return design;
}

}  // namespace

PooledDesign build_pooled_treatment_design(const LongitudinalDataset& data) {
  data.validate();
  std::vector<int> model_times;
  std::vector<std::vector<int>> risk_sets;
  ColumnPlan plan;
  for (int tau = 0; tau <= data.T; ++tau) {
    model_times.push_back(tau);
    std::vector<int> rs;
    for (int i = 0; i < data.n; ++i)
      if (data.in_treatment_risk_set(i, tau)) rs.push_back(i);
    risk_sets.push_back(std::move(rs));
    // Under monotone treatment the model conditions on A_{tau-1} = 0, so
    // past-treatment columns are identically zero and dropped.
    add_model_columns(data, tau, !data.monotone_treatment, 0, plan);
  }
  return assemble(data, PooledDesign::Kind::treatment, model_times, plan, risk_sets);
}

PooledDesign build_pooled_censoring_design(const LongitudinalDataset& data) {
  data.validate();
  if (!data.has_censoring())
    throw ValidationError("censoring design requested but dataset has no censoring");
  std::vector<int> model_times;
  std::vector<std::vector<int>> risk_sets;
  ColumnPlan plan;
  for (int tau = 1; tau <= data.censoring_times(); ++tau) {
    model_times.push_back(tau);
    std::vector<int> rs;
    for (int i = 0; i < data.n; ++i)
      if (data.in_censoring_risk_set(i, tau)) rs.push_back(i);
    risk_sets.push_back(std::move(rs));
    add_model_columns(data, tau, true, 0, plan);
  }
  return assemble(data, PooledDesign::Kind::censoring, model_times, plan, risk_sets);
}

PenaltyGraph make_fusion_graph(const PooledDesign& design, GraphKind kind) {
  // Blocks in which each covariate name appears; names seen past block 0 are
  // time-varying and fuse by lag, names confined to block 0 fuse as baseline.
  std::map<std::string, std::vector<int>> blocks_of;
  for (int c = 0; c < design.cols(); ++c) {
    if (design.unpenalized[c] || !design.columns[c].is_covariate()) continue;
    auto& blocks = blocks_of[design.source_names[c]];
    if (std::find(blocks.begin(), blocks.end(), design.columns[c].block) ==
        blocks.end())
      blocks.push_back(design.columns[c].block);
  }

  // Grouping key: covariates eligible to share a coefficient.
  std::map<std::pair<std::string, int>, std::vector<int>> groups;
  for (int c = 0; c < design.cols(); ++c) {
    if (design.unpenalized[c] || !design.columns[c].is_covariate()) continue;
    const CoefIndex& idx = design.columns[c];
    const std::string& name = design.source_names[c];
    int key;
    if (kind == GraphKind::lagged_clique) {
      const bool baseline_only = blocks_of[name].size() == 1 && blocks_of[name][0] == 0;
      key = baseline_only ? -1 : idx.tau - idx.block;  // -1 tags baseline cliques
    } else {
      key = idx.block;  // same variable at the same source time
    }
    groups[{name, key}].push_back(c);
  }

  PenaltyGraph graph;
  for (auto& [key, cols] : groups) {
    std::sort(cols.begin(), cols.end(), [&](int a, int b) {
      return design.columns[a].tau < design.columns[b].tau;
    });
    if (kind == GraphKind::chain) {
      for (size_t i = 0; i + 1 < cols.size(); ++i)
        graph.edges.emplace_back(cols[i], cols[i + 1]);
    } else {
      for (size_t i = 0; i < cols.size(); ++i)
        for (size_t j = i + 1; j < cols.size(); ++j)
          graph.edges.emplace_back(cols[i], cols[j]);
    }
  }
  std::sort(graph.edges.begin(), graph.edges.end());
  return graph;
}

PatternSpace enumerate_patterns(int T, PatternSpace::Kind kind) {
  if (T < 0) throw ValidationError("enumerate_patterns: T must be >= 0");
  PatternSpace space;
  space.kind = kind;
  const int len = T + 1;
  if (kind == PatternSpace::Kind::full) {
    const std::size_t count = std::size_t{1} << len;
    for (std::size_t v = 0; v < count; ++v) {
      std::vector<int> pat(len);
      for (int t = 0; t < len; ++t) pat[t] = static_cast<int>((v >> (T - t)) & 1);
      space.patterns.push_back(std::move(pat));
    }
  } else {
    // Lexicographic: never treated, then initiation at T, T-1, ..., 0.
    space.patterns.push_back(std::vector<int>(len, 0));
    for (int s = T; s >= 0; --s) {
      std::vector<int> pat(len, 0);
      for (int t = s; t < len; ++t) pat[t] = 1;
      space.patterns.push_back(std::move(pat));
    }
  }
  return space;
}

}  // namespace loal

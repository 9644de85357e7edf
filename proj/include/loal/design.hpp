#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "loal/dataset.hpp"

namespace loal {

// Index of a coefficient in a pooled (time-stratified) model:
//   tau   -- which per-time model,
//   block -- -1 for the intercept, 0..tau for a covariate block,
//            tau + 1 for past-treatment terms,
//   k     -- column within the block (treatment time for treatment terms).
struct CoefIndex {
  int tau = 0;
  int block = 0;
  int k = 0;

  bool is_intercept() const { return block < 0; }
  bool is_treatment() const { return block == tau + 1; }
  bool is_covariate() const { return block >= 0 && block <= tau; }

  friend bool operator==(const CoefIndex&, const CoefIndex&) = default;
  friend auto operator<=>(const CoefIndex& a, const CoefIndex& b) {
    if (auto c = a.tau <=> b.tau; c != 0) return c;
    if (auto c = a.block <=> b.block; c != 0) return c;
    return a.k <=> b.k;
  }
};

// Expanded design for a pooled logistic model: rows for model time tau carry
// only the tau-indexed columns (all other columns are exactly zero).
struct PooledDesign {
  enum class Kind { treatment, censoring };

  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<int> row_time;
  std::vector<int> row_subject;
  std::vector<CoefIndex> columns;         // sorted ascending (tau, block, k)
  std::vector<std::string> column_names;  // "t<tau>:<name>"
  std::vector<bool> unpenalized;          // intercepts and treatment terms
  Kind kind = Kind::treatment;
  std::vector<int> model_times;           // taus present, ascending

  int rows() const { return static_cast<int>(X.rows()); }
  int cols() const { return static_cast<int>(X.cols()); }
  int col_of(const CoefIndex& idx) const;  // -1 if absent

  // Name of the source covariate for a covariate column ("" otherwise).
  const std::string& covariate_name(int col) const { return source_names[col]; }
  std::vector<std::string> source_names;  // per column; block variable name
};

PooledDesign build_pooled_treatment_design(const LongitudinalDataset& data);
PooledDesign build_pooled_censoring_design(const LongitudinalDataset& data);

// Undirected fusion graph over penalizable design columns.
struct PenaltyGraph {
  std::vector<std::pair<int, int>> edges;  // column indices, first < second
};

enum class GraphKind { clique, chain, lagged_clique };

PenaltyGraph make_fusion_graph(const PooledDesign& design, GraphKind kind);

// The set of treatment patterns the counterfactual mean is evaluated over.
struct PatternSpace {
  enum class Kind { full, monotone_initiation };
  std::vector<std::vector<int>> patterns;  // each of length T+1
  Kind kind = Kind::full;

  int size() const { return static_cast<int>(patterns.size()); }
};

PatternSpace enumerate_patterns(int T, PatternSpace::Kind kind);

}  // namespace loal

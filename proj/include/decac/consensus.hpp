#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "decac/common.hpp"
#include "decac/rng.hpp"

namespace decac::consensus {

/// Undirected communication graph over N agents; self loops are implicit.
class CommGraph {
 public:
  explicit CommGraph(std::size_t n) : n_(n) {}
  CommGraph(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges);

  std::size_t size() const { return n_; }
  void add_edge(std::size_t i, std::size_t j);
  bool has_edge(std::size_t i, std::size_t j) const;
  std::size_t degree(std::size_t i) const;
  bool connected() const;
  const std::set<std::pair<std::size_t, std::size_t>>& edges() const { return edges_; }

  static CommGraph ring(std::size_t n);
  static CommGraph star(std::size_t n);
  static CommGraph complete(std::size_t n);
  /// G(n, p), redrawn until connected (at most 1000 attempts).
  static CommGraph erdos(std::size_t n, double p, Rng& rng);

 private:
  std::size_t n_;
  std::set<std::pair<std::size_t, std::size_t>> edges_;  // stored with first < second
};

/// Parses `ring`, `star`, `complete`, `erdos(p)` or `edges([[0,1],[1,2]])`.
CommGraph graph_from_spec(const std::string& spec, std::size_t n, Rng& rng);

struct ConsensusMatrix {
  Matrix weights;    // N x N
  double eta = 0.0;  // certified floor
};

struct ValidationReport {
  std::optional<double> eta;            // set when no violation
  std::vector<std::string> violations;  // human-readable, empty when valid
  bool ok() const { return violations.empty(); }
};

inline constexpr double kStochasticTolerance = 1e-12;

/// Checks row/column sums, sparsity against the graph, nonnegativity, and
/// a positive floor on the diagonal and on every edge.
ValidationReport validate(const Matrix& a, const CommGraph& graph);

/// A_ij = 1 / (1 + max(deg i, deg j)) on edges, diagonal takes the rest.
/// ConfigError on a disconnected graph.
ConsensusMatrix build_metropolis(const CommGraph& graph);

/// Loads a CSV matrix and requires it to pass validate().
ConsensusMatrix load_matrix_csv(const std::filesystem::path& path, const CommGraph& graph);

/// A^rounds V by repeated left multiplication. rounds == 0 returns V.
Matrix gossip(const Matrix& a, const Matrix& v, std::size_t rounds);
inline Matrix gossip(const ConsensusMatrix& a, const Matrix& v, std::size_t rounds) {
  return gossip(a.weights, v, rounds);
}

/// A^t by repeated left multiplication (A * (A * ... )).
Matrix matrix_power(const Matrix& a, std::size_t t);

/// max_i ||V_i - mean row||_2
double disagreement(const Matrix& v);

/// Second largest singular value of A.
double second_singular_value(const Matrix& a);

struct DecayMeasurement {
  std::vector<double> disagreement;  // index t = after t rounds
  double asymptotic_ratio = 0.0;     // geometric mean per-round ratio over the tail
  bool non_increasing = true;
};

/// Runs `rounds` gossip steps on V0 and measures the consensus decay.
DecayMeasurement measure_decay(const Matrix& a, const Matrix& v0, std::size_t rounds);

}  // namespace decac::consensus

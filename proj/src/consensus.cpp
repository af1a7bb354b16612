#include "decac/consensus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <sstream>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "decac/simd.hpp"

namespace decac::consensus {

CommGraph::CommGraph(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges)
    : n_(n) {
  for (const auto& [i, j] : edges) add_edge(i, j);
}

void CommGraph::add_edge(std::size_t i, std::size_t j) {
  if (i >= n_ || j >= n_) throw ConfigError("graph edge references a missing node");
  if (i == j) return;
  edges_.insert({std::min(i, j), std::max(i, j)});
}

bool CommGraph::has_edge(std::size_t i, std::size_t j) const {
  return edges_.count({std::min(i, j), std::max(i, j)}) > 0;
}

std::size_t CommGraph::degree(std::size_t i) const {
  std::size_t d = 0;
  for (const auto& [a, b] : edges_) d += (a == i || b == i) ? 1 : 0;
  return d;
}

bool CommGraph::connected() const {
  if (n_ == 0) return false;
  std::vector<std::vector<std::size_t>> adj(n_);
  for (const auto& [a, b] : edges_) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<bool> seen(n_, false);
  std::queue<std::size_t> q;
  seen[0] = true;
  q.push(0);
  std::size_t count = 1;
  while (!q.empty()) {
    const std::size_t u = q.front();
    q.pop();
    for (std::size_t v : adj[u]) {
      if (!seen[v]) {
        seen[v] = true;
        ++count;
        q.push(v);
      }
    }
  }
  return count == n_;
}

CommGraph CommGraph::ring(std::size_t n) {
  CommGraph g(n);
  if (n == 2) g.add_edge(0, 1);
  if (n >= 3) {
    for (std::size_t i = 0; i < n; ++i) g.add_edge(i, (i + 1) % n);
  }
  return g;
}

CommGraph CommGraph::star(std::size_t n) {
  CommGraph g(n);
  for (std::size_t i = 1; i < n; ++i) g.add_edge(0, i);
  return g;
}

CommGraph CommGraph::complete(std::size_t n) {
  CommGraph g(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) g.add_edge(i, j);
  }
  return g;
}

CommGraph CommGraph::erdos(std::size_t n, double p, Rng& rng) {
  if (!(p > 0.0 && p <= 1.0)) throw ConfigError("erdos: p must lie in (0,1]");
  for (int attempt = 0; attempt < 1000; ++attempt) {
    CommGraph g(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (rng.uniform() < p) g.add_edge(i, j);
      }
    }
    if (g.connected()) return g;
  }
  throw ConfigError("erdos: no connected graph drawn in 1000 attempts");
}

CommGraph graph_from_spec(const std::string& spec, std::size_t n, Rng& rng) {
  auto arg = [&spec](const std::string& head) {
    if (spec.rfind(head + "(", 0) != 0 || spec.back() != ')') return std::optional<std::string>{};
    return std::optional<std::string>{spec.substr(head.size() + 1, spec.size() - head.size() - 2)};
  };
  if (spec == "ring") return CommGraph::ring(n);
  if (spec == "star") return CommGraph::star(n);
  if (spec == "complete") return CommGraph::complete(n);
  if (auto p = arg("erdos")) {
    try {
      return CommGraph::erdos(n, std::stod(*p), rng);
    } catch (const std::logic_error&) {
      throw ConfigError("topology: bad erdos probability '" + *p + "'");
    }
  }
  if (auto e = arg("edges")) {
    CommGraph g(n);
    try {
      for (const auto& edge : nlohmann::json::parse(*e)) {
        g.add_edge(edge.at(0).get<std::size_t>(), edge.at(1).get<std::size_t>());
      }
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("topology: edges(...) must hold a JSON list of pairs");
    }
    return g;
  }
  throw ConfigError("topology: unknown spec '" + spec + "'");
}

ValidationReport validate(const Matrix& a, const CommGraph& graph) {
  ValidationReport rep;
  const std::size_t n = graph.size();
  if (a.rows() != n || a.cols() != n) {
    rep.violations.push_back("shape: expected " + std::to_string(n) + "x" + std::to_string(n));
    return rep;
  }
  double floor = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    double col = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row += a(i, j);
      col += a(j, i);
      const double v = a(i, j);
      if (!(v >= 0.0)) {
        rep.violations.push_back("negative entry A(" + std::to_string(i) + "," + std::to_string(j) + ")");
      }
      if (i != j && !graph.has_edge(i, j) && v != 0.0) {
        rep.violations.push_back("sparsity: A(" + std::to_string(i) + "," + std::to_string(j) +
                                 ") nonzero off the graph");
      }
      if (i == j || graph.has_edge(i, j)) floor = std::min(floor, v);
    }
    if (std::abs(row - 1.0) > kStochasticTolerance) {
      rep.violations.push_back("row " + std::to_string(i) + " sums to " + std::to_string(row));
    }
    if (std::abs(col - 1.0) > kStochasticTolerance) {
      rep.violations.push_back("column " + std::to_string(i) + " sums to " + std::to_string(col));
    }
  }
  if (!(floor > 0.0)) {
    rep.violations.push_back("floor: a diagonal or edge entry is not positive (eta = 0)");
  }
  if (rep.ok()) rep.eta = floor;
  return rep;
}

ConsensusMatrix build_metropolis(const CommGraph& graph) {
  if (!graph.connected()) throw ConfigError("consensus: communication graph is disconnected");
  const std::size_t n = graph.size();
  ConsensusMatrix out;
  out.weights = Matrix(n, n);
  std::vector<std::size_t> deg(n);
  for (std::size_t i = 0; i < n; ++i) deg[i] = graph.degree(i);
  for (const auto& [i, j] : graph.edges()) {
    const double w = 1.0 / (1.0 + static_cast<double>(std::max(deg[i], deg[j])));
    out.weights(i, j) = w;
    out.weights(j, i) = w;
  }
  for (std::size_t i = 0; i < n; ++i) {
    double off = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) off += out.weights(i, j);
    }
    out.weights(i, i) = 1.0 - off;
  }
  const ValidationReport rep = validate(out.weights, graph);
  if (!rep.ok()) throw InternalError("metropolis matrix failed validation: " + rep.violations.front());
  out.eta = *rep.eta;
  return out;
}

ConsensusMatrix load_matrix_csv(const std::filesystem::path& path, const CommGraph& graph) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open consensus matrix " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::logic_error&) {
        throw ConfigError("consensus matrix: bad number '" + cell + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  Matrix a(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != a.cols()) throw ConfigError("consensus matrix: ragged rows");
    for (std::size_t j = 0; j < a.cols(); ++j) a(i, j) = rows[i][j];
  }
  const ValidationReport rep = validate(a, graph);
  if (!rep.ok()) throw ConfigError("consensus matrix " + path.string() + ": " + rep.violations.front());
  return {a, *rep.eta};
}

namespace {

Matrix left_multiply(const Matrix& a, const Matrix& v) {
  const auto& k = simd::kernels();
  Matrix out(v.rows(), v.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double w = a(i, j);
      if (w != 0.0) k.axpy(w, v.row(j).data(), dst.data(), dst.size());
    }
  }
  return out;
}

}  // namespace

Matrix gossip(const Matrix& a, const Matrix& v, std::size_t rounds) {
  if (a.rows() != a.cols() || a.cols() != v.rows()) throw StructuralError("gossip: dimension mismatch");
  Matrix cur = v;
  for (std::size_t t = 0; t < rounds; ++t) cur = left_multiply(a, cur);
  return cur;
}

Matrix matrix_power(const Matrix& a, std::size_t t) {
  if (a.rows() != a.cols()) throw StructuralError("matrix_power: matrix must be square");
  Matrix id(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) id(i, i) = 1.0;
  return gossip(a, id, t);
}

double disagreement(const Matrix& v) {
  if (v.rows() == 0) return 0.0;
  std::vector<double> mean(v.cols(), 0.0);
  for (std::size_t i = 0; i < v.rows(); ++i) {
    for (std::size_t c = 0; c < v.cols(); ++c) mean[c] += v(i, c);
  }
  for (double& m : mean) m /= static_cast<double>(v.rows());
  double worst = 0.0;
  for (std::size_t i = 0; i < v.rows(); ++i) {
    const double d = std::sqrt(simd::kernels().dist_sq(v.row(i).data(), mean.data(), v.cols()));
    worst = std::max(worst, d);
  }
  return worst;
}

double second_singular_value(const Matrix& a) {
  Eigen::MatrixXd m(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) m(i, j) = a(i, j);
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  return s.size() > 1 ? s(1) : 0.0;
}

DecayMeasurement measure_decay(const Matrix& a, const Matrix& v0, std::size_t rounds) {
  DecayMeasurement out;
  Matrix cur = v0;
  out.disagreement.push_back(disagreement(cur));
  for (std::size_t t = 0; t < rounds; ++t) {
    cur = left_multiply(a, cur);
    out.disagreement.push_back(disagreement(cur));
  }
  const double d0 = out.disagreement.front();
  const double noise = 1e-12 * std::max(d0, 1e-300);
  for (std::size_t t = 0; t + 1 < out.disagreement.size(); ++t) {
    if (out.disagreement[t] <= noise) break;
    if (out.disagreement[t + 1] > out.disagreement[t] * (1.0 + 1e-9) + 1e-15) out.non_increasing = false;
  }
  // Tail ratio: geometric mean over the last (up to) 10 rounds still above the noise floor.
  std::size_t last = 0;
  while (last + 1 < out.disagreement.size() && out.disagreement[last + 1] > noise) ++last;
  if (last == 0) {
    out.asymptotic_ratio = (out.disagreement.size() > 1 && d0 > 0.0) ? out.disagreement[1] / d0 : 0.0;
    return out;
  }
  const std::size_t first = last > 10 ? last - 10 : 0;
  out.asymptotic_ratio = std::pow(out.disagreement[last] / out.disagreement[first],
                                  1.0 / static_cast<double>(last - first));
  return out;
}

}  // namespace decac::consensus

#include <cmath>
#include <filesystem>
#include <fstream>

#include "decac/consensus.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace decac;
using consensus::CommGraph;

TEST_CASE("metropolis weights are doubly stochastic on the graph") {
  Rng rng(1);
  for (const std::string spec : {"ring", "star", "complete", "erdos(0.4)"}) {
    for (std::size_t n : {2, 3, 5, 8}) {
      const auto g = consensus::graph_from_spec(spec, n, rng);
      const auto a = consensus::build_metropolis(g);
      const auto rep = consensus::validate(a.weights, g);
      CHECK(rep.ok());
      CHECK(a.eta > 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          if (i != j && !g.has_edge(i, j)) CHECK(a.weights(i, j) == 0.0);
        }
      }
    }
  }
}

TEST_CASE("validation names the violation") {
  const auto g = CommGraph::ring(4);
  Matrix a(4, 4, 0.25);
  const auto rep = consensus::validate(a, g);
  CHECK_FALSE(rep.ok());
  Matrix b = consensus::build_metropolis(g).weights;
  b(0, 0) += 0.1;
  CHECK_FALSE(consensus::validate(b, g).ok());
}

TEST_CASE("disconnected graph is rejected") {
  CommGraph g(4);
  g.add_edge(0, 1);
  g.add_edge(2, 3);
  CHECK_FALSE(g.connected());
  CHECK_THROWS_AS(consensus::build_metropolis(g), ConfigError);
}

TEST_CASE("gossip identities") {
  Rng rng(2);
  Matrix v(2, 3);
  for (double& x : v.values()) x = rng.normal(0.0, 1.0);
  const auto a = consensus::build_metropolis(CommGraph::complete(2)).weights;
  CHECK(consensus::gossip(a, v, 0) == v);
  const auto once = consensus::gossip(a, v, 1);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(once(0, c) == doctest::Approx((v(0, c) + v(1, c)) / 2).epsilon(1e-15));
    CHECK(once(1, c) == doctest::Approx((v(0, c) + v(1, c)) / 2).epsilon(1e-15));
  }
}

TEST_CASE("gossip preserves the mean and contracts disagreement") {
  Rng rng(3);
  const auto a = consensus::build_metropolis(CommGraph::ring(6)).weights;
  Matrix v(6, 4);
  for (double& x : v.values()) x = rng.normal(0.0, 1.0);
  const auto g = consensus::gossip(a, v, 30);
  for (std::size_t c = 0; c < 4; ++c) {
    double m0 = 0.0, m1 = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
      m0 += v(i, c);
      m1 += g(i, c);
    }
    CHECK(m1 == doctest::Approx(m0).epsilon(1e-12));
  }
  CHECK(consensus::disagreement(g) < consensus::disagreement(v));
  const auto decay = consensus::measure_decay(a, v, 40);
  CHECK(decay.non_increasing);
  CHECK(decay.asymptotic_ratio <= consensus::second_singular_value(a) + 1e-6);
}

TEST_CASE("matrix powers stay doubly stochastic") {
  const auto a = consensus::build_metropolis(CommGraph::star(5)).weights;
  const auto p = consensus::matrix_power(a, 100);
  for (std::size_t i = 0; i < 5; ++i) {
    double row = 0.0, col = 0.0;
    for (std::size_t j = 0; j < 5; ++j) {
      row += p(i, j);
      col += p(j, i);
    }
    CHECK(std::abs(row - 1.0) < 1e-10);
    CHECK(std::abs(col - 1.0) < 1e-10);
  }
}

TEST_CASE("graph spec parsing") {
  Rng rng(4);
  const auto g = consensus::graph_from_spec("edges([[0,1],[1,2]])", 3, rng);
  CHECK(g.has_edge(0, 1));
  CHECK(g.has_edge(2, 1));
  CHECK_FALSE(g.has_edge(0, 2));
  CHECK_THROWS_AS(consensus::graph_from_spec("hexagon", 3, rng), ConfigError);
  CHECK(CommGraph::ring(2).edges().size() == 1);
}

TEST_CASE("csv matrices load and validate") {
  const auto path = std::filesystem::temp_directory_path() / "decac_test_matrix.csv";
  {
    std::ofstream f(path);
    f << "0.5,0.5\n0.5,0.5\n";
  }
  const auto a = consensus::load_matrix_csv(path, CommGraph::complete(2));
  CHECK(a.weights(0, 1) == 0.5);
  {
    std::ofstream f(path);
    f << "0.9,0.5\n0.1,0.5\n";
  }
  CHECK_THROWS_AS(consensus::load_matrix_csv(path, CommGraph::complete(2)), ConfigError);
  std::filesystem::remove(path);
}

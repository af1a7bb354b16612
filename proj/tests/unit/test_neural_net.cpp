#include <cmath>
#include <filesystem>

#include "decac/neural_net.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace decac;

namespace {

// Dense reference forward pass written directly from the layer formula.
double reference_value(const nn::FCNet& net, const nn::HiddenStack& w, const std::vector<double>& x) {
  const std::size_t m = net.width;
  std::vector<double> h(m, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < net.input_dim; ++c) h[r] += net.input_map(r, c) * x[c];
  }
  for (std::size_t l = 0; l < net.depth; ++l) {
    const auto layer = w.layer(l);
    std::vector<double> next(m, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
      double z = 0.0;
      for (std::size_t c = 0; c < m; ++c) z += layer[r * m + c] * h[c];
      next[r] = std::max(z, 0.0) / std::sqrt(static_cast<double>(m));
    }
    h = next;
  }
  double y = 0.0;
  for (std::size_t c = 0; c < m; ++c) y += net.head(0, c) * h[c];
  return y;
}

}  // namespace

TEST_CASE("init_net draws shapes and keeps W(0)") {
  const auto net = nn::init_net(6, 3, 4, 2, 42);
  CHECK(net.input_map.rows() == 6);
  CHECK(net.input_map.cols() == 4);
  CHECK(net.hidden.size() == 3 * 36);
  CHECK(net.head.rows() == 2);
  CHECK(net.hidden == net.initial);
  CHECK(nn::init_net(6, 3, 4, 2, 42).hidden == net.hidden);
  CHECK_THROWS_AS(nn::init_net(0, 3, 4, 1, 1), ConfigError);
}

TEST_CASE("init variances are close to 2 for H and W and 1 for b") {
  const auto net = nn::init_net(60, 4, 50, 60, 7);
  auto var = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s / static_cast<double>(v.size());
  };
  CHECK(var(net.input_map.values()) == doctest::Approx(2.0).epsilon(0.05));
  CHECK(var(net.hidden.values()) == doctest::Approx(2.0).epsilon(0.05));
  CHECK(var(net.head.values()) == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("forward matches a dense reference implementation") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto net = nn::init_net(5, 1 + trial % 4, 7, 1, 100 + trial);
    const auto x = testing::unit_input(7, rng);
    CHECK(nn::forward_value(net, x) ==
          doctest::Approx(reference_value(net, net.hidden, x.dense())).epsilon(1e-12));
  }
}

TEST_CASE("all-dead ReLUs give zero output") {
  auto net = nn::init_net(4, 2, 3, 1, 1);
  for (double& v : net.hidden.values()) v = -std::abs(v) - 1.0;
  for (double& v : net.input_map.values()) v = std::abs(v);
  const std::vector<double> x{1.0, 0.0, 0.0};
  CHECK(nn::forward_value(net, SparseVec::from_dense(x)) == 0.0);
}

TEST_CASE("forward rejects bad inputs") {
  const auto net = nn::init_net(4, 2, 3, 1, 1);
  CHECK_THROWS_AS(nn::forward_value(net, SparseVec::from_dense(std::vector<double>{1.0, 1.0, 0.0})),
                  DomainError);
  CHECK_THROWS_AS(nn::forward_value(net, SparseVec::from_dense(std::vector<double>{1.0, 0.0})),
                  StructuralError);
}

TEST_CASE("grad_w matches central finite differences") {
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t m = 3 + rng.below(5), depth = 1 + rng.below(3), d = 2 + rng.below(4);
    auto net = nn::init_net(m, depth, d, 1, 500 + trial);
    const auto x = testing::unit_input(d, rng);
    const auto g = nn::grad_w(net, x, 0);
    const auto [v, g2] = nn::value_and_grad(net, net.hidden, x);
    CHECK(v == nn::forward_value(net, x));
    CHECK(g2 == g);
    double err = 0.0, scale = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double orig = net.hidden.values()[k];
      net.hidden.values()[k] = orig + 1e-6;
      const double up = reference_value(net, net.hidden, x.dense());
      net.hidden.values()[k] = orig - 1e-6;
      const double down = reference_value(net, net.hidden, x.dense());
      net.hidden.values()[k] = orig;
      const double fd = (up - down) / 2e-6;
      err = std::max(err, std::abs(fd - g.values()[k]));
      scale = std::max(scale, std::abs(fd));
    }
    if (scale > 0) CHECK(err / scale < 1e-5);
  }
}

TEST_CASE("full gradient covers H and b") {
  Rng rng(12);
  auto net = nn::init_net(4, 2, 3, 1, 9);
  const auto x = testing::unit_input(3, rng);
  const std::vector<double> cot{1.0};
  const auto full = nn::grad_full(net, x, cot);
  // b enters linearly: dy/db = x^(D)
  const auto tr = nn::forward_trace(net, x);
  for (std::size_t c = 0; c < 4; ++c) CHECK(full.head(0, c) == doctest::Approx(tr.activations.back()[c]));
  for (std::size_t k = 0; k < net.input_map.size(); ++k) {
    const double orig = net.input_map.values()[k];
    net.input_map.values()[k] = orig + 1e-6;
    const double up = nn::forward_value(net, x);
    net.input_map.values()[k] = orig - 1e-6;
    const double down = nn::forward_value(net, x);
    net.input_map.values()[k] = orig;
    CHECK(full.input_map.values()[k] == doctest::Approx((up - down) / 2e-6).epsilon(1e-5));
  }
}

TEST_CASE("projection: idempotent, feasible, identity inside the ball") {
  Rng rng(13);
  nn::HiddenStack w0(3, 2, testing::gaussian(18, rng)), far(3, 2), near(3, 2);
  for (std::size_t k = 0; k < 18; ++k) {
    far.values()[k] = w0.values()[k] + rng.normal(0.0, 5.0);
    near.values()[k] = w0.values()[k] + 1e-3;
  }
  const auto p = nn::project_ball(far, w0, 1.0);
  CHECK(nn::project_ball(p, w0, 1.0) == p);
  for (std::size_t h = 0; h < 2; ++h) CHECK(nn::layer_distance(p, w0, h) <= 1.0 + 1e-9);
  CHECK(nn::project_ball(near, w0, 1.0) == near);
  auto q = far;
  CHECK(nn::project_ball_inplace(q, w0, 1.0));
  CHECK(q == p);
  CHECK_FALSE(nn::project_ball_inplace(q, w0, 1.0));
  CHECK_THROWS_AS(nn::project_ball(far, w0, 0.0), ConfigError);
}

TEST_CASE("softmax is stable and sums to one") {
  const std::vector<double> big{1000.0, 1001.0, 999.0};
  const auto p = nn::softmax(big);
  CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0));
  CHECK(p[1] > p[0]);
}

TEST_CASE("score equals the gradient of log pi") {
  Rng rng(14);
  auto actor = nn::init_net(4, 2, 5, 3, 21);
  const auto x = testing::unit_input(5, rng);
  for (std::size_t a = 0; a < 3; ++a) {
    for (bool all : {false, true}) {
      const auto psi = nn::score(actor, x, a, {all, false});
      auto theta = nn::trainable_params(actor, all);
      REQUIRE(psi.size() == theta.size());
      for (std::size_t k = 0; k < theta.size(); k += 3) {
        auto t = theta;
        t[k] += 1e-6;
        nn::set_trainable_params(actor, t, all);
        const double up = std::log(nn::policy_probs(actor, x)[a]);
        t[k] -= 2e-6;
        nn::set_trainable_params(actor, t, all);
        const double down = std::log(nn::policy_probs(actor, x)[a]);
        nn::set_trainable_params(actor, theta, all);
        CHECK(psi[k] == doctest::Approx((up - down) / 2e-6).epsilon(1e-5));
      }
    }
  }
  CHECK_THROWS_AS(nn::score(actor, x, 3), DomainError);
  const auto capped = nn::score(actor, x, 0, {false, true});
  CHECK(norm2(capped) <= 1.0 + 1e-12);
}

TEST_CASE("add_to_trainable moves by alpha * direction") {
  auto net = nn::init_net(3, 2, 2, 2, 5);
  const auto before = nn::trainable_params(net, false);
  std::vector<double> d(before.size(), 0.0);
  d[4] = 2.0;
  nn::add_to_trainable(net, 0.25, d, false);
  const auto after = nn::trainable_params(net, false);
  CHECK(after[4] == before[4] + 0.5);
  CHECK(after[3] == before[3]);
  const auto h = nn::frozen_hash(net);
  CHECK(h == nn::frozen_hash(nn::init_net(3, 2, 2, 2, 5)));
}

TEST_CASE("checkpoint round trip") {
  auto net = nn::init_net(4, 3, 5, 2, 77);
  net.hidden.values()[0] += 1.0;
  const auto path = std::filesystem::temp_directory_path() / "decac_test_ckpt.bin";
  nn::save_checkpoint(path, net, "abc");
  const auto back = nn::load_checkpoint(path);
  CHECK(back.hidden == net.hidden);
  CHECK(back.initial == net.initial);
  CHECK(back.input_map == net.input_map);
  CHECK(back.head == net.head);
  CHECK(back.seed == 77);
  CHECK(std::filesystem::exists(path.string() + ".json"));
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".json");
}

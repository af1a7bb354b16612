#pragma once

// Fully connected ReLU network with a frozen input map H, a trainable
// hidden stack W = (W^(1), ..., W^(D)) and a frozen output head b:
//
//   x^(0) = H x,   x^(h) = ReLU(W^(h) x^(h-1)) / sqrt(m),   y = b x^(D).
//
// A value head has one row in b; a policy head has one row per local action
// and is followed by a softmax.
//
// Flattening order (used by gossip, norms, checkpoints and the actor's
// parameter vector): layer-major over W^(1..D), row-major inside a layer.
// When the full parameter set is trainable, H (row-major) and then b
// (row-major) follow the hidden stack.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "decac/common.hpp"

namespace decac::nn {

/// D square m x m layers stored contiguously in flattening order.
class HiddenStack {
 public:
  HiddenStack() = default;
  HiddenStack(std::size_t width, std::size_t depth, double fill = 0.0)
      : width_(width), depth_(depth), values_(width * width * depth, fill) {}
  /// Wraps a flat vector; StructuralError if its length is not D*m*m.
  HiddenStack(std::size_t width, std::size_t depth, std::span<const double> flat)
      : width_(width), depth_(depth), values_(flat.begin(), flat.end()) {
    if (values_.size() != width * width * depth) throw StructuralError("hidden stack: bad length");
  }

  std::size_t width() const { return width_; }
  std::size_t depth() const { return depth_; }
  std::size_t size() const { return values_.size(); }
  std::size_t layer_size() const { return width_ * width_; }

  std::span<double> layer(std::size_t h) { return {values_.data() + h * layer_size(), layer_size()}; }
  std::span<const double> layer(std::size_t h) const {
    return {values_.data() + h * layer_size(), layer_size()};
  }
  std::span<double> flat() { return values_; }
  std::span<const double> flat() const { return values_; }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool same_shape(const HiddenStack& o) const { return width_ == o.width_ && depth_ == o.depth_; }
  bool operator==(const HiddenStack&) const = default;

 private:
  std::size_t width_ = 0;
  std::size_t depth_ = 0;
  std::vector<double> values_;
};

/// Gradient of a scalar network output w.r.t. the hidden stack.
using NetGradient = HiddenStack;

struct FCNet {
  std::size_t width = 0;      // m
  std::size_t depth = 0;      // D
  std::size_t input_dim = 0;  // d
  std::size_t head_rows = 0;  // 1 for a value head, |A^i| for a policy head
  std::uint64_t seed = 0;

  Matrix input_map;     // H, m x d, frozen
  HiddenStack hidden;   // W, trainable
  HiddenStack initial;  // W(0), centre of the projection ball
  Matrix head;          // b, head_rows x m, frozen
};

/// H and W^(h) entries ~ N(0, 2), b entries ~ N(0, 1), drawn in the order
/// H, W^(1..D), b from a single stream seeded with `seed`.
FCNet init_net(std::size_t width, std::size_t depth, std::size_t input_dim,
               std::size_t head_rows, std::uint64_t seed);

struct ForwardTrace {
  std::vector<std::vector<double>> activations;  // x^(0), ..., x^(D)
  std::vector<std::vector<double>> preacts;      // W^(h) x^(h-1), h = 1..D
  std::vector<double> outputs;                   // b x^(D)
};

inline constexpr double kUnitNormTolerance = 1e-9;

/// Forward pass with an explicit hidden stack (agents share H, b and W(0)
/// but own their W). Throws StructuralError on dimension mismatch and
/// DomainError when x is not unit norm.
ForwardTrace forward_trace(const FCNet& net, const HiddenStack& hidden, const SparseVec& x);
inline ForwardTrace forward_trace(const FCNet& net, const SparseVec& x) {
  return forward_trace(net, net.hidden, x);
}

std::vector<double> forward(const FCNet& net, const HiddenStack& hidden, const SparseVec& x);
inline std::vector<double> forward(const FCNet& net, const SparseVec& x) {
  return forward(net, net.hidden, x);
}
double forward_value(const FCNet& net, const HiddenStack& hidden, const SparseVec& x);
inline double forward_value(const FCNet& net, const SparseVec& x) {
  return forward_value(net, net.hidden, x);
}

/// Reverse-mode gradient of `sum_r cotangent[r] * output[r]` w.r.t. W.
/// ReLU derivative at exactly zero is taken as zero.
NetGradient grad_w_cotangent(const FCNet& net, const HiddenStack& hidden, const SparseVec& x,
                             std::span<const double> cotangent);
NetGradient grad_w(const FCNet& net, const HiddenStack& hidden, const SparseVec& x,
                   std::size_t head_row);
inline NetGradient grad_w(const FCNet& net, const SparseVec& x, std::size_t head_row) {
  return grad_w(net, net.hidden, x, head_row);
}

/// Single-row output value together with its gradient w.r.t. W.
std::pair<double, NetGradient> value_and_grad(const FCNet& net, const HiddenStack& hidden,
                                              const SparseVec& x);

struct FullGradient {
  NetGradient hidden;
  Matrix input_map;  // d/dH
  Matrix head;       // d/db
};
FullGradient grad_full(const FCNet& net, const SparseVec& x, std::span<const double> cotangent);

/// Per-layer Euclidean projection onto {W : ||W^(h) - W0^(h)||_F <= radius}.
/// Throws ConfigError when radius <= 0.
HiddenStack project_ball(const HiddenStack& w, const HiddenStack& w0, double radius);
/// In-place variant; returns true if any layer was outside the ball.
bool project_ball_inplace(HiddenStack& w, const HiddenStack& w0, double radius);
double layer_distance(const HiddenStack& w, const HiddenStack& w0, std::size_t h);

std::vector<double> softmax(std::span<const double> logits);
std::vector<double> policy_probs(const FCNet& actor, const SparseVec& state_features);

struct ScoreOptions {
  bool train_all = false;  // include H and b in the parameter vector
  bool cap_norm = false;   // rescale so that ||psi|| <= 1
};

/// Gradient of log pi(a|s) w.r.t. the actor's trainable parameters,
/// flattened in the documented order. DomainError if pi(a|s) == 0.
std::vector<double> score(const FCNet& actor, const SparseVec& state_features, std::size_t action,
                          const ScoreOptions& opts = {});

std::size_t trainable_size(const FCNet& net, bool train_all);
std::vector<double> trainable_params(const FCNet& net, bool train_all);
void set_trainable_params(FCNet& net, std::span<const double> theta, bool train_all);
/// theta += alpha * direction
void add_to_trainable(FCNet& net, double alpha, std::span<const double> direction, bool train_all);

/// FNV-1a over the bytes of H and b.
std::uint64_t frozen_hash(const FCNet& net);

// Checkpoint layout (little-endian):
//   char[8]  "DECACNET"
//   u32      format version (1)
//   u64      m, D, d, head_rows, seed
//   f64[]    H (m*d), W(0) (D*m*m), W (D*m*m), b (head_rows*m), flattening order
// A JSON sidecar `<path>.json` carries the dimensions and the config hash.
void save_checkpoint(const std::filesystem::path& path, const FCNet& net,
                     const std::string& config_hash);
FCNet load_checkpoint(const std::filesystem::path& path);

}  // namespace decac::nn

#include "decac/neural_net.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "decac/rng.hpp"
#include "decac/simd.hpp"

namespace decac::nn {

namespace {

void check_input(const FCNet& net, const HiddenStack& hidden, const SparseVec& x) {
  if (x.dim != net.input_dim) {
    throw StructuralError("input dimension " + std::to_string(x.dim) + " != network input_dim " +
                          std::to_string(net.input_dim));
  }
  if (hidden.width() != net.width || hidden.depth() != net.depth) {
    throw StructuralError("hidden stack shape does not match network");
  }
  if (x.index.size() != x.value.size()) throw StructuralError("malformed sparse input");
  const double n = x.norm();
  if (!(std::abs(n - 1.0) <= kUnitNormTolerance)) {
    throw DomainError("network input must have unit norm, got " + std::to_string(n));
  }
}

void check_cotangent(const FCNet& net, std::span<const double> g) {
  if (g.size() != net.head_rows) throw StructuralError("cotangent length != head rows");
}

// x^(0) = H x for a sparse x.
std::vector<double> apply_input_map(const FCNet& net, const SparseVec& x) {
  std::vector<double> out(net.width, 0.0);
  for (std::size_t k = 0; k < x.index.size(); ++k) {
    const std::size_t j = x.index[k];
    if (j >= net.input_dim) throw StructuralError("sparse index out of range");
    const double v = x.value[k];
    for (std::size_t i = 0; i < net.width; ++i) out[i] += net.input_map(i, j) * v;
  }
  return out;
}

// dL/dx^(0) after back-propagating the cotangent; fills grad when non-null.
std::vector<double> backprop(const FCNet& net, const HiddenStack& hidden, const ForwardTrace& tr,
                             std::span<const double> cotangent, NetGradient* grad) {
  const auto& k = simd::kernels();
  const std::size_t m = net.width;
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m));

  std::vector<double> upstream(m);
  k.gemv_t(net.head.data(), net.head_rows, m, cotangent.data(), upstream.data());

  std::vector<double> dz(m);
  std::vector<double> next(m);
  for (std::size_t h = net.depth; h-- > 0;) {
    const auto& z = tr.preacts[h];
    for (std::size_t i = 0; i < m; ++i) dz[i] = z[i] > 0.0 ? upstream[i] * inv_sqrt_m : 0.0;
    if (grad != nullptr) {
      k.ger(1.0, dz.data(), tr.activations[h].data(), grad->layer(h).data(), m, m);
    }
    k.gemv_t(hidden.layer(h).data(), m, m, dz.data(), next.data());
    upstream.swap(next);
  }
  return upstream;
}

void put_u32(std::ostream& os, std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap32(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_u64(std::ostream& os, std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap64(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_f64s(std::ostream& os, std::span<const double> xs) {
  for (double d : xs) put_u64(os, std::bit_cast<std::uint64_t>(d));
}
std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap32(v);
  return v;
}
std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap64(v);
  return v;
}
void get_f64s(std::istream& is, std::span<double> xs) {
  for (double& d : xs) d = std::bit_cast<double>(get_u64(is));
}

constexpr double kBallSlack = 1e-12;

constexpr char kMagic[8] = {'D', 'E', 'C', 'A', 'C', 'N', 'E', 'T'};

}  // namespace

FCNet init_net(std::size_t width, std::size_t depth, std::size_t input_dim, std::size_t head_rows,
               std::uint64_t seed) {
  if (width == 0 || depth == 0 || input_dim == 0 || head_rows == 0) {
    throw ConfigError("network dimensions must be positive");
  }
  FCNet net;
  net.width = width;
  net.depth = depth;
  net.input_dim = input_dim;
  net.head_rows = head_rows;
  net.seed = seed;
  net.input_map = Matrix(width, input_dim);
  net.hidden = HiddenStack(width, depth);
  net.head = Matrix(head_rows, width);

  Rng rng(seed);
  const double sd2 = std::sqrt(2.0);
  for (double& v : net.input_map.values()) v = rng.normal(0.0, sd2);
  for (double& v : net.hidden.values()) v = rng.normal(0.0, sd2);
  for (double& v : net.head.values()) v = rng.normal(0.0, 1.0);
  net.initial = net.hidden;
  return net;
}

ForwardTrace forward_trace(const FCNet& net, const HiddenStack& hidden, const SparseVec& x) {
  check_input(net, hidden, x);
  const auto& k = simd::kernels();
  const std::size_t m = net.width;
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m));

  ForwardTrace tr;
  tr.activations.reserve(net.depth + 1);
  tr.preacts.reserve(net.depth);
  tr.activations.push_back(apply_input_map(net, x));
  for (std::size_t h = 0; h < net.depth; ++h) {
    std::vector<double> z(m);
    k.gemv(hidden.layer(h).data(), m, m, tr.activations.back().data(), z.data());
    std::vector<double> a(m);
    k.relu_scale(z.data(), inv_sqrt_m, a.data(), m);
    tr.preacts.push_back(std::move(z));
    tr.activations.push_back(std::move(a));
  }
  tr.outputs.resize(net.head_rows);
  k.gemv(net.head.data(), net.head_rows, m, tr.activations.back().data(), tr.outputs.data());
  return tr;
}

std::vector<double> forward(const FCNet& net, const HiddenStack& hidden, const SparseVec& x) {
  return forward_trace(net, hidden, x).outputs;
}

double forward_value(const FCNet& net, const HiddenStack& hidden, const SparseVec& x) {
  if (net.head_rows != 1) throw StructuralError("forward_value needs a single-row head");
  return forward_trace(net, hidden, x).outputs[0];
}

NetGradient grad_w_cotangent(const FCNet& net, const HiddenStack& hidden, const SparseVec& x,
                             std::span<const double> cotangent) {
  check_cotangent(net, cotangent);
  const ForwardTrace tr = forward_trace(net, hidden, x);
  NetGradient grad(net.width, net.depth);
  backprop(net, hidden, tr, cotangent, &grad);
  return grad;
}

NetGradient grad_w(const FCNet& net, const HiddenStack& hidden, const SparseVec& x,
                   std::size_t head_row) {
  if (head_row >= net.head_rows) throw StructuralError("head row out of range");
  std::vector<double> g(net.head_rows, 0.0);
  g[head_row] = 1.0;
  return grad_w_cotangent(net, hidden, x, g);
}

std::pair<double, NetGradient> value_and_grad(const FCNet& net, const HiddenStack& hidden,
                                              const SparseVec& x) {
  if (net.head_rows != 1) throw StructuralError("value_and_grad needs a single-row head");
  const ForwardTrace tr = forward_trace(net, hidden, x);
  NetGradient grad(net.width, net.depth);
  const double one = 1.0;
  backprop(net, hidden, tr, {&one, 1}, &grad);
  return {tr.outputs[0], std::move(grad)};
}

FullGradient grad_full(const FCNet& net, const SparseVec& x, std::span<const double> cotangent) {
  check_cotangent(net, cotangent);
  const ForwardTrace tr = forward_trace(net, net.hidden, x);
  FullGradient out;
  out.hidden = NetGradient(net.width, net.depth);
  const std::vector<double> d_x0 = backprop(net, net.hidden, tr, cotangent, &out.hidden);

  out.input_map = Matrix(net.width, net.input_dim);
  for (std::size_t k = 0; k < x.index.size(); ++k) {
    const std::size_t j = x.index[k];
    for (std::size_t i = 0; i < net.width; ++i) out.input_map(i, j) += d_x0[i] * x.value[k];
  }
  out.head = Matrix(net.head_rows, net.width);
  simd::kernels().ger(1.0, cotangent.data(), tr.activations.back().data(), out.head.data(),
                      net.head_rows, net.width);
  return out;
}

double layer_distance(const HiddenStack& w, const HiddenStack& w0, std::size_t h) {
  const auto a = w.layer(h);
  const auto b = w0.layer(h);
  return std::sqrt(simd::kernels().dist_sq(a.data(), b.data(), a.size()));
}

bool project_ball_inplace(HiddenStack& w, const HiddenStack& w0, double radius) {
  if (!(radius > 0.0)) throw ConfigError("projection radius must be positive");
  if (!w.same_shape(w0)) throw StructuralError("projection: shape mismatch");
  bool hit = false;
  for (std::size_t h = 0; h < w.depth(); ++h) {
    const double dist = layer_distance(w, w0, h);
    // Points rescaled onto the sphere land within rounding of the radius;
    // the slack keeps the projection idempotent.
    if (dist <= radius * (1.0 + kBallSlack)) continue;
    hit = true;
    auto layer = w.layer(h);
    const auto centre = w0.layer(h);
    const double s = radius / dist;
    for (std::size_t i = 0; i < layer.size(); ++i) layer[i] = centre[i] + s * (layer[i] - centre[i]);
  }
  return hit;
}

HiddenStack project_ball(const HiddenStack& w, const HiddenStack& w0, double radius) {
  HiddenStack out = w;
  project_ball_inplace(out, w0, radius);
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

std::vector<double> policy_probs(const FCNet& actor, const SparseVec& state_features) {
  return softmax(forward(actor, state_features));
}

std::vector<double> score(const FCNet& actor, const SparseVec& state_features, std::size_t action,
                          const ScoreOptions& opts) {
  if (action >= actor.head_rows) throw DomainError("action index out of range");
  const ForwardTrace tr = forward_trace(actor, actor.hidden, state_features);
  const std::vector<double> probs = softmax(tr.outputs);
  if (!(probs[action] > 0.0)) throw DomainError("score of a zero-probability action");

  // d log pi(a|s) / d logits = e_a - pi
  std::vector<double> cot(probs.size());
  for (std::size_t r = 0; r < probs.size(); ++r) cot[r] = (r == action ? 1.0 : 0.0) - probs[r];

  std::vector<double> psi;
  psi.reserve(trainable_size(actor, opts.train_all));
  if (!opts.train_all) {
    NetGradient g(actor.width, actor.depth);
    backprop(actor, actor.hidden, tr, cot, &g);
    psi = std::move(g.values());
  } else {
    const FullGradient g = grad_full(actor, state_features, cot);
    psi.insert(psi.end(), g.hidden.values().begin(), g.hidden.values().end());
    psi.insert(psi.end(), g.input_map.values().begin(), g.input_map.values().end());
    psi.insert(psi.end(), g.head.values().begin(), g.head.values().end());
  }
  if (opts.cap_norm) {
    const double n = norm2(psi);
    if (n > 1.0) simd::kernels().scal(1.0 / n, psi.data(), psi.size());
  }
  return psi;
}

std::size_t trainable_size(const FCNet& net, bool train_all) {
  std::size_t n = net.hidden.size();
  if (train_all) n += net.input_map.size() + net.head.size();
  return n;
}

std::vector<double> trainable_params(const FCNet& net, bool train_all) {
  std::vector<double> theta(net.hidden.values());
  if (train_all) {
    theta.insert(theta.end(), net.input_map.values().begin(), net.input_map.values().end());
    theta.insert(theta.end(), net.head.values().begin(), net.head.values().end());
  }
  return theta;
}

void set_trainable_params(FCNet& net, std::span<const double> theta, bool train_all) {
  if (theta.size() != trainable_size(net, train_all)) {
    throw StructuralError("parameter vector length mismatch");
  }
  auto it = theta.begin();
  std::copy_n(it, net.hidden.size(), net.hidden.values().begin());
  it += static_cast<std::ptrdiff_t>(net.hidden.size());
  if (train_all) {
    std::copy_n(it, net.input_map.size(), net.input_map.values().begin());
    it += static_cast<std::ptrdiff_t>(net.input_map.size());
    std::copy_n(it, net.head.size(), net.head.values().begin());
  }
}

void add_to_trainable(FCNet& net, double alpha, std::span<const double> direction,
                      bool train_all) {
  if (direction.size() != trainable_size(net, train_all)) {
    throw StructuralError("direction length mismatch");
  }
  const auto& k = simd::kernels();
  const double* d = direction.data();
  k.axpy(alpha, d, net.hidden.values().data(), net.hidden.size());
  if (train_all) {
    d += net.hidden.size();
    k.axpy(alpha, d, net.input_map.data(), net.input_map.size());
    d += net.input_map.size();
    k.axpy(alpha, d, net.head.data(), net.head.size());
  }
}

std::uint64_t frozen_hash(const FCNet& net) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const std::vector<double>& xs) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(xs.data());
    for (std::size_t i = 0; i < xs.size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  feed(net.input_map.values());
  feed(net.head.values());
  return h;
}

void save_checkpoint(const std::filesystem::path& path, const FCNet& net,
                     const std::string& config_hash) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write checkpoint " + path.string());
  os.write(kMagic, sizeof kMagic);
  put_u32(os, 1);
  put_u64(os, net.width);
  put_u64(os, net.depth);
  put_u64(os, net.input_dim);
  put_u64(os, net.head_rows);
  put_u64(os, net.seed);
  put_f64s(os, net.input_map.values());
  put_f64s(os, net.initial.values());
  put_f64s(os, net.hidden.values());
  put_f64s(os, net.head.values());

  nlohmann::json side = {{"format", "decac-net"},
                         {"version", 1},
                         {"width", net.width},
                         {"depth", net.depth},
                         {"input_dim", net.input_dim},
                         {"head_rows", net.head_rows},
                         {"seed", net.seed},
                         {"config_hash", config_hash}};
  std::ofstream js(path.string() + ".json");
  js << side.dump(2) << '\n';
}

FCNet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint " + path.string());
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw StructuralError("not a network checkpoint: " + path.string());
  }
  if (get_u32(is) != 1) throw StructuralError("unsupported checkpoint version");
  FCNet net;
  net.width = get_u64(is);
  net.depth = get_u64(is);
  net.input_dim = get_u64(is);
  net.head_rows = get_u64(is);
  net.seed = get_u64(is);
  net.input_map = Matrix(net.width, net.input_dim);
  net.initial = HiddenStack(net.width, net.depth);
  net.hidden = HiddenStack(net.width, net.depth);
  net.head = Matrix(net.head_rows, net.width);
  get_f64s(is, net.input_map.values());
  get_f64s(is, net.initial.values());
  get_f64s(is, net.hidden.values());
  get_f64s(is, net.head.values());
  if (!is) throw StructuralError("truncated checkpoint: " + path.string());
  return net;
}

}  // namespace decac::nn

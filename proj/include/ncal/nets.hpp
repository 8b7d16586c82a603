#pragma once
// Feedforward ReLU regression networks, the weighted square-loss oracle (SGD),
// clipping and approximate-Lipschitz filtering, and sizing formulas.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ncal/core.hpp"
#include "ncal/rng.hpp"

namespace ncal {

// Parameter count of the two-ReLU clamp stage: 2x(1 weight + 1 bias) into the
// hidden pair, then 2 weights + 1 bias out.
inline constexpr std::size_t kClampParams = 7;

struct MlpArchitecture {
  std::vector<std::size_t> layer_widths;  // d, hidden..., 1
  bool clipped = false;

  std::size_t input_dim() const { return layer_widths.front(); }

  std::size_t base_params() const {
    std::size_t n = 0;
    for (std::size_t l = 1; l < layer_widths.size(); ++l) n += layer_widths[l - 1] * layer_widths[l] + layer_widths[l];
    return n;
  }
  std::size_t total_params() const { return base_params() + (clipped ? kClampParams : 0); }
  std::size_t depth() const { return layer_widths.size() - 1 + (clipped ? 2 : 0); }

  void validate() const {
    if (layer_widths.size() < 2) throw std::invalid_argument("MlpArchitecture: need input and output widths");
    if (layer_widths.back() != 1) throw std::invalid_argument("MlpArchitecture: output width must be 1");
    for (auto w : layer_widths)
      if (w == 0) throw std::invalid_argument("MlpArchitecture: zero width");
  }

  bool operator==(const MlpArchitecture&) const = default;
};

inline void to_json(nlohmann::json& j, const MlpArchitecture& a) {
  j = nlohmann::json{{"layer_widths", a.layer_widths}, {"clipped", a.clipped},
                     {"total_params", a.total_params()}, {"depth", a.depth()}};
}
inline void from_json(const nlohmann::json& j, MlpArchitecture& a) {
  j.at("layer_widths").get_to(a.layer_widths);
  a.clipped = j.value("clipped", false);
  a.validate();
}

struct Mlp {
  MlpArchitecture arch;
  std::vector<double> weights;  // per layer: W (out x in, row-major) then b; clamp stage last

  // Output of the unclipped base network.
  double raw(const Point& x) const {
    if (x.size() != arch.input_dim()) throw std::invalid_argument("Mlp: input dimension mismatch");
    std::vector<double> a(x), z;
    std::size_t off = 0;
    const std::size_t n_layers = arch.layer_widths.size() - 1;
    for (std::size_t l = 0; l < n_layers; ++l) {
      const std::size_t in = arch.layer_widths[l], out = arch.layer_widths[l + 1];
      z.assign(out, 0.0);
      const double* W = weights.data() + off;
      const double* b = W + in * out;
      for (std::size_t o = 0; o < out; ++o) {
        double s = b[o];
        for (std::size_t i = 0; i < in; ++i) s += W[o * in + i] * a[i];
        z[o] = (l + 1 < n_layers) ? relu(s) : s;
      }
      off += in * out + out;
      a.swap(z);
    }
    return a[0];
  }

  // Clamp stage evaluated as a real layer: v0 ReLU(w0 r + b0) + v1 ReLU(w1 r + b1) + c.
  double clamp_stage(double r) const {
    const double* p = weights.data() + arch.base_params();
    const double h0 = relu(p[0] * r + p[2]);
    const double h1 = relu(p[1] * r + p[3]);
    return p[4] * h0 + p[5] * h1 + p[6];
  }

  double operator()(const Point& x) const {
    const double r = raw(x);
    return arch.clipped ? clamp_stage(r) : r;
  }
};

inline double forward(const Mlp& net, const Point& x) { return net(x); }

inline RealFn as_function(Mlp net) {
  return [n = std::move(net)](const Point& x) { return n(x); };
}

inline Mlp zero_mlp(const MlpArchitecture& arch) {
  arch.validate();
  Mlp m{arch, std::vector<double>(arch.total_params(), 0.0)};
  if (arch.clipped) {
    const std::size_t o = arch.base_params();
    const double clamp[kClampParams] = {1.0, 1.0, 0.0, -1.0, 1.0, -1.0, 0.0};
    std::copy(std::begin(clamp), std::end(clamp), m.weights.begin() + static_cast<std::ptrdiff_t>(o));
  }
  return m;
}

// Appends ReLU(f) - ReLU(f - 1), which equals clamp(f, 0, 1).
inline Mlp clip_network(const Mlp& net) {
  if (net.arch.clipped) throw std::invalid_argument("clip_network: network already clipped");
  Mlp out = net;
  out.arch.clipped = true;
  const double clamp[kClampParams] = {1.0, 1.0, 0.0, -1.0, 1.0, -1.0, 0.0};
  out.weights.insert(out.weights.end(), std::begin(clamp), std::end(clamp));
  return out;
}

struct WeightedExample {
  double weight = 1.0;
  Point x;
  double target = 0.0;
};

struct OracleConfig {
  std::size_t steps = 2000;
  double learning_rate = 0.05;
  std::size_t batch_size = 16;
  std::size_t restarts = 2;
  double init_scale = 0.5;
  std::uint64_t seed = 0;
  std::size_t eval_every = 50;  // full-loss evaluations for best-iterate tracking

  void validate() const {
    if (steps == 0 || batch_size == 0 || restarts == 0 || eval_every == 0)
      throw std::invalid_argument("OracleConfig: steps, batch_size, restarts, eval_every must be positive");
    if (!(learning_rate > 0.0) || !(init_scale > 0.0))
      throw std::invalid_argument("OracleConfig: learning_rate and init_scale must be positive");
  }
};

inline void to_json(nlohmann::json& j, const OracleConfig& c) {
  j = nlohmann::json{{"steps", c.steps},           {"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
                     {"restarts", c.restarts},     {"init_scale", c.init_scale},       {"seed", c.seed},
                     {"eval_every", c.eval_every}};
}
inline void from_json(const nlohmann::json& j, OracleConfig& c) {
  OracleConfig d;
  c.steps = j.value("steps", d.steps);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.restarts = j.value("restarts", d.restarts);
  c.init_scale = j.value("init_scale", d.init_scale);
  c.seed = j.value("seed", d.seed);
  c.eval_every = j.value("eval_every", d.eval_every);
}

inline Mlp random_mlp(const MlpArchitecture& arch, double init_scale, Stream& rng) {
  Mlp m = zero_mlp(arch);
  for (std::size_t i = 0; i < arch.base_params(); ++i) m.weights[i] = rng.uniform(-init_scale, init_scale);
  return m;
}

inline double weighted_sq_loss(const Mlp& net, const std::vector<WeightedExample>& ex) {
  double s = 0.0;
  for (const auto& e : ex) {
    const double r = net(e.x) - e.target;
    s += e.weight * r * r;
  }
  return s;
}

namespace detail {

// Accumulates d/dw of weight * (out - target)^2 into grad (base parameters only).
// The clamp stage passes the gradient straight through, so a saturated output
// can still be pulled back into [0, 1].
inline void backprop(const Mlp& net, const WeightedExample& e, std::vector<double>& grad) {
  const auto& widths = net.arch.layer_widths;
  const std::size_t n_layers = widths.size() - 1;
  std::vector<std::vector<double>> acts(n_layers + 1);
  acts[0] = e.x;
  std::size_t off = 0;
  std::vector<std::size_t> offsets(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const std::size_t in = widths[l], out = widths[l + 1];
    offsets[l] = off;
    const double* W = net.weights.data() + off;
    const double* b = W + in * out;
    acts[l + 1].assign(out, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      double s = b[o];
      for (std::size_t i = 0; i < in; ++i) s += W[o * in + i] * acts[l][i];
      acts[l + 1][o] = (l + 1 < n_layers) ? relu(s) : s;
    }
    off += in * out + out;
  }
  const double r = acts[n_layers][0];
  const double out = net.arch.clipped ? net.clamp_stage(r) : r;
  std::vector<double> delta{2.0 * e.weight * (out - e.target)};
  for (std::size_t l = n_layers; l-- > 0;) {
    const std::size_t in = widths[l], outw = widths[l + 1];
    double* gW = grad.data() + offsets[l];
    double* gb = gW + in * outw;
    const double* W = net.weights.data() + offsets[l];
    std::vector<double> prev(in, 0.0);
    for (std::size_t o = 0; o < outw; ++o) {
      gb[o] += delta[o];
      for (std::size_t i = 0; i < in; ++i) {
        gW[o * in + i] += delta[o] * acts[l][i];
        prev[i] += delta[o] * W[o * in + i];
      }
    }
    if (l > 0)
      for (std::size_t i = 0; i < in; ++i)
        if (acts[l][i] <= 0.0) prev[i] = 0.0;
    delta.swap(prev);
  }
}

}  // namespace detail

// Best-of-restarts minibatch SGD on sum_i w_i (f(x_i) - y_i)^2. Each restart
// tracks its best full-objective iterate, so the result is never worse than the
// restart-0 initialization.
inline Mlp fit_weighted_sq(const MlpArchitecture& arch, const std::vector<WeightedExample>& examples,
                           const OracleConfig& cfg) {
  cfg.validate();
  arch.validate();
  for (const auto& e : examples)
    if (!(e.weight >= 0.0)) throw std::invalid_argument("fit_weighted_sq: negative weight");

  const Stream base(cfg.seed);
  Stream init0 = base.split(0);
  Mlp best = random_mlp(arch, cfg.init_scale, init0);
  if (examples.empty()) return best;

  double total_w = 0.0;
  for (const auto& e : examples) total_w += e.weight;
  if (total_w <= 0.0) return best;
  // Sample examples proportionally to weight; the stochastic gradient is then
  // unbiased for the objective divided by total_w.
  std::vector<double> cum;
  cum.reserve(examples.size());
  double acc = 0.0;
  for (const auto& e : examples) cum.push_back(acc += e.weight);

  double best_loss = weighted_sq_loss(best, examples);
  if (!std::isfinite(best_loss)) throw std::runtime_error("fit_weighted_sq: non-finite loss at initialization");

  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    Stream init = base.split(2 * r);
    Stream batches = base.split(2 * r + 1);
    Mlp net = random_mlp(arch, cfg.init_scale, init);
    Mlp run_best = net;
    double run_best_loss = weighted_sq_loss(net, examples);
    std::vector<double> grad(arch.base_params());
    for (std::size_t step = 1; step <= cfg.steps; ++step) {
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = 0; k < cfg.batch_size; ++k) {
        const double u = batches.uniform() * total_w;
        auto it = std::upper_bound(cum.begin(), cum.end(), u);
        const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(it - cum.begin()), examples.size() - 1);
        WeightedExample unit = examples[i];
        unit.weight = 1.0;
        detail::backprop(net, unit, grad);
      }
      const double scale = cfg.learning_rate / static_cast<double>(cfg.batch_size);
      for (std::size_t p = 0; p < grad.size(); ++p) net.weights[p] -= scale * grad[p];
      if (step % cfg.eval_every == 0 || step == cfg.steps) {
        const double loss = weighted_sq_loss(net, examples);
        if (!std::isfinite(loss)) throw std::runtime_error("fit_weighted_sq: non-finite loss (learning rate too large?)");
        if (loss < run_best_loss) {
          run_best_loss = loss;
          run_best = net;
        }
      }
    }
    if (run_best_loss < best_loss) {
      best_loss = run_best_loss;
      best = std::move(run_best);
    }
  }
  return best;
}

// Filter test at tolerance 2 kappa: |f(x) - f(x')| <= L ||x - x'|| + 2 kappa on every pair.
inline bool approx_lipschitz_ok(const RealFn& f, double L, double kappa,
                                const std::vector<std::pair<Point, Point>>& probe_pairs) {
  if (probe_pairs.empty()) throw std::invalid_argument("approx_lipschitz_ok: no probe pairs");
  for (const auto& [a, b] : probe_pairs)
    if (std::abs(f(a) - f(b)) > L * distance(a, b) + 2.0 * kappa) return false;
  return true;
}

// Consecutive pairs of a probe list, plus its first and last point.
inline std::vector<std::pair<Point, Point>> probe_pairs_from(const std::vector<Point>& pts) {
  std::vector<std::pair<Point, Point>> pairs;
  for (std::size_t i = 1; i < pts.size(); ++i) pairs.emplace_back(pts[i - 1], pts[i]);
  if (pts.size() > 2) pairs.emplace_back(pts.front(), pts.back());
  return pairs;
}

struct SizedArchitecture {
  MlpArchitecture arch;
  std::uint64_t W = 0;  // parameter budget from the formula
  std::uint64_t L = 0;  // hidden-layer count from the formula
};

// L hidden layers of equal width k, with k the smallest width whose total
// parameter count reaches W.
inline MlpArchitecture uniform_arch(std::size_t d, std::uint64_t W, std::uint64_t L) {
  if (L == 0) throw std::invalid_argument("uniform_arch: need at least one hidden layer");
  for (std::size_t k = 1;; ++k) {
    MlpArchitecture a;
    a.layer_widths.push_back(d);
    for (std::uint64_t l = 0; l < L; ++l) a.layer_widths.push_back(k);
    a.layer_widths.push_back(1);
    if (a.total_params() >= W) return a;
  }
}

inline SizedArchitecture size_sobolev_arch(double kappa, unsigned alpha, std::size_t d, double c_W = 1.0,
                                           double c_L = 1.0) {
  if (!(kappa > 0.0 && kappa < 1.0)) throw std::invalid_argument("size_sobolev_arch: kappa must be in (0, 1)");
  if (alpha == 0 || d == 0) throw std::invalid_argument("size_sobolev_arch: alpha and d must be >= 1");
  const double lg = std::log2(1.0 / kappa);
  SizedArchitecture s;
  s.W = ceil_tol(c_W * std::pow(kappa, -static_cast<double>(d) / alpha) * lg);
  s.L = std::max<std::uint64_t>(1, ceil_tol(c_L * lg));
  s.arch = uniform_arch(d, s.W, s.L);
  return s;
}

inline std::uint64_t size_rbv2_arch(double kappa, std::size_t d, double c_K = 1.0) {
  if (!(kappa > 0.0 && kappa < 1.0)) throw std::invalid_argument("size_rbv2_arch: kappa must be in (0, 1)");
  const double dd = static_cast<double>(d);
  return ceil_tol(c_K * std::pow(kappa, -2.0 * dd / (dd + 3.0)));
}

// Shared form of the VC and pseudo-dimension bounds: ceil(c W L log2 W).
inline std::uint64_t capacity_bound(std::uint64_t W, std::uint64_t L, double c = 1.0) {
  if (W < 2) throw std::invalid_argument("capacity_bound: W must be >= 2");
  if (L < 1) throw std::invalid_argument("capacity_bound: L must be >= 1");
  return ceil_tol(c * static_cast<double>(W) * static_cast<double>(L) * std::log2(static_cast<double>(W)));
}

// Checkpoint: one line of JSON (architecture, count), then the weights as
// little-endian IEEE-754 doubles.
inline void save_checkpoint(std::ostream& os, const Mlp& net) {
  nlohmann::json h{{"arch", net.arch}, {"count", net.weights.size()}, {"format", "f64le"}};
  os << h.dump() << '\n';
  for (double w : net.weights) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(w);
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
    os.write(reinterpret_cast<const char*>(buf), 8);
  }
  if (!os) throw std::runtime_error("save_checkpoint: write failed");
}

inline Mlp load_checkpoint(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("load_checkpoint: missing header");
  const auto h = nlohmann::json::parse(line);
  Mlp net;
  net.arch = h.at("arch").get<MlpArchitecture>();
  const auto count = h.at("count").get<std::size_t>();
  if (count != net.arch.total_params()) throw std::runtime_error("load_checkpoint: weight count mismatch");
  net.weights.resize(count);
  for (auto& w : net.weights) {
    unsigned char buf[8];
    if (!is.read(reinterpret_cast<char*>(buf), 8)) throw std::runtime_error("load_checkpoint: truncated weights");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    w = std::bit_cast<double>(bits);
  }
  return net;
}

}  // namespace ncal

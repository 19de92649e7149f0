#include "lpforge/toytrain.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace lpforge::toytrain {

namespace {

constexpr uint64_t kClassMeanSeed = 0x6c70666f726765ULL;  // fixed, not run seed
constexpr char kCheckpointMagic[8] = {'L', 'P', 'F', 'O', 'R', 'G', 'E', '\0'};
constexpr uint32_t kCheckpointVersion = 1;

double next_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double next_normal(std::mt19937_64& rng) {
  double u1 = next_uniform(rng);
  while (u1 <= 0.0) u1 = next_uniform(rng);
  const double u2 = next_uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

void shuffle_indices(std::vector<int>& idx, std::mt19937_64& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::swap(idx[i - 1], idx[rng() % i]);
  }
}

std::vector<double> softmax(std::span<const double> z, double temperature) {
  std::vector<double> p(z.size());
  double zmax = -1e300;
  for (const double v : z) zmax = std::max(zmax, v / temperature);
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] / temperature - zmax);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

void fake_quantize_acts(std::vector<double>& v, int bits) {
  if (bits == quant::kFullPrecisionBits) return;
  for (double& x : v) x = quant::fake_quantize_activation(x, bits);
}

std::vector<double> fake_quantize_weights_vec(const std::vector<double>& w, int bits) {
  std::vector<double> out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    out[i] = quant::fake_quantize_weight(w[i], bits);
  }
  return out;
}

int64_t param_count(const netspec::Layer& layer, const netspec::LayerShape& shape) {
  (void)layer;
  return shape.params;
}

}  // namespace

void ToyNet::bind_shapes() {
  shapes = netspec::infer_shapes(topology);
  if (params.size() != topology.layers.size()) {
    throw std::invalid_argument("parameter list does not match topology length");
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto expected = static_cast<std::size_t>(param_count(topology.layers[i], shapes[i]));
    if (params[i].size() != expected) {
      throw std::invalid_argument("parameter tensor size mismatch at layer " +
                                  std::to_string(i));
    }
  }
}

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1) throw std::invalid_argument("epochs and batch_size must be >= 1");
  if (learning_rate <= 0.0 || momentum < 0.0) throw std::invalid_argument("invalid optimizer settings");
  if (alpha < 0.0 || beta < 0.0) throw std::invalid_argument("loss weights must be non-negative");
  if (temperature <= 0.0) throw std::invalid_argument("temperature must be positive");
  if (width_factor < 1.0) throw std::invalid_argument("width_factor must be >= 1");
  if (dataset.classes < 2) throw std::invalid_argument("dataset needs at least 2 classes");
  if (dataset.samples_per_class < 2 || dataset.h < 1 || dataset.w < 1 || dataset.c < 1) {
    throw std::invalid_argument("degenerate dataset spec");
  }
  if (dataset.sigma < 0.0) throw std::invalid_argument("sigma must be >= 0");
  quant::QuantSpec{weight_bits, act_bits}.validate();
}

int TrainHistory::epochs_to_threshold(double threshold) const {
  for (std::size_t i = 0; i < eval_accuracy.size(); ++i) {
    if (eval_accuracy[i] >= threshold) return static_cast<int>(i) + 1;
  }
  return static_cast<int>(eval_accuracy.size()) + 1;
}

Scheme scheme_from_string(const std::string& s) {
  if (s == "baseline") return Scheme::kBaseline;
  if (s == "low_precision") return Scheme::kLowPrecision;
  if (s == "wrpn") return Scheme::kWrpn;
  if (s == "apprentice") return Scheme::kApprentice;
  if (s == "wrpn_apprentice") return Scheme::kWrpnApprentice;
  throw std::invalid_argument("unknown scheme '" + s + "'");
}

std::string scheme_to_string(Scheme s) {
  switch (s) {
    case Scheme::kBaseline: return "baseline";
    case Scheme::kLowPrecision: return "low_precision";
    case Scheme::kWrpn: return "wrpn";
    case Scheme::kApprentice: return "apprentice";
    case Scheme::kWrpnApprentice: return "wrpn_apprentice";
  }
  throw std::logic_error("unreachable scheme");
}

Dataset make_dataset(const DatasetSpec& spec, uint64_t seed) {
  if (spec.classes < 2) throw std::invalid_argument("dataset needs at least 2 classes");
  if (spec.samples_per_class < 1 || spec.h < 1 || spec.w < 1 || spec.c < 1) {
    throw std::invalid_argument("degenerate dataset spec");
  }
  const std::size_t dim = static_cast<std::size_t>(spec.h) * spec.w * spec.c;

  // Class means are a fixed property of the spec so every seed sees the
  // same task, only different noise and splits.
  std::mt19937_64 mean_rng(kClassMeanSeed + spec.classes * 1315423911ULL + dim);
  std::vector<std::vector<double>> means(spec.classes, std::vector<double>(dim));
  for (auto& m : means) {
    for (double& v : m) v = 0.15 + 0.7 * next_uniform(mean_rng);
  }

  Dataset data;
  data.spec = spec;
  std::mt19937_64 rng(seed);
  for (int cls = 0; cls < spec.classes; ++cls) {
    for (int s = 0; s < spec.samples_per_class; ++s) {
      std::vector<double> img(dim);
      for (std::size_t i = 0; i < dim; ++i) {
        img[i] = means[cls][i] + spec.sigma * next_normal(rng);
      }
      data.images.push_back(std::move(img));
      data.labels.push_back(cls);
    }
  }

  std::vector<int> idx(data.images.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 split_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  shuffle_indices(idx, split_rng);
  const std::size_t train_n = idx.size() * 8 / 10;
  data.train_idx.assign(idx.begin(), idx.begin() + train_n);
  data.eval_idx.assign(idx.begin() + train_n, idx.end());
  return data;
}

netspec::NetworkSpec default_topology(const DatasetSpec& spec) {
  netspec::NetworkSpec topo;
  topo.name = "toynet";
  topo.layers.push_back(netspec::InputLayer{spec.h, spec.w, spec.c});
  topo.layers.push_back(netspec::ConvLayer{"c1", 8, 3, 3, 1, 1});
  topo.layers.push_back(netspec::ReluLayer{});
  topo.layers.push_back(netspec::PoolLayer{netspec::PoolKind::kMax, 2, 2});
  topo.layers.push_back(netspec::FcLayer{"out", spec.classes});
  return topo;
}

ToyNet init_net(const netspec::NetworkSpec& topology, const quant::QuantSpec& q,
                double width_factor, uint64_t seed) {
  q.validate();
  ToyNet net;
  net.topology = topology;
  net.qspec = q;
  net.width_factor = width_factor;
  net.shapes = netspec::infer_shapes(topology);
  net.params.resize(topology.layers.size());
  std::mt19937_64 rng(seed * 0x2545f4914f6cdd1dULL + 0x1234);
  for (std::size_t i = 0; i < topology.layers.size(); ++i) {
    const int64_t count = net.shapes[i].params;
    if (count == 0) continue;
    int64_t fan_in = 1;
    if (const auto* conv = std::get_if<netspec::ConvLayer>(&topology.layers[i])) {
      fan_in = static_cast<int64_t>(conv->kh) * conv->kw * net.shapes[i].in.c;
    } else {
      fan_in = net.shapes[i].in.elements();
    }
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    net.params[i].resize(count);
    for (double& w : net.params[i]) {
      w = limit * (2.0 * next_uniform(rng) - 1.0);
    }
  }
  return net;
}

std::vector<double> forward(const ToyNet& net, std::span<const double> input,
                            ForwardCache* cache) {
  const auto& shapes = net.shapes;
  if (shapes.empty()) throw std::invalid_argument("net has no bound shapes");
  if (static_cast<int64_t>(input.size()) != shapes.front().out.elements()) {
    throw std::invalid_argument("input size does not match topology input shape");
  }
  if (cache) {
    cache->layers.assign(net.topology.layers.size(), LayerCache{});
  }

  std::vector<double> cur(input.begin(), input.end());
  for (std::size_t i = 0; i < net.topology.layers.size(); ++i) {
    const netspec::Layer& layer = net.topology.layers[i];
    const netspec::Shape in_s = shapes[i].in;
    const netspec::Shape out_s = shapes[i].out;

    if (std::holds_alternative<netspec::InputLayer>(layer)) {
      continue;
    }
    if (const auto* conv = std::get_if<netspec::ConvLayer>(&layer)) {
      std::vector<double> a = cur;
      fake_quantize_acts(a, net.qspec.act_bits);
      std::vector<double> wq = fake_quantize_weights_vec(net.params[i], net.qspec.weight_bits);
      std::vector<double> out(out_s.elements(), 0.0);
      const int in_c = in_s.c;
      const int out_c = out_s.c;
      for (int oy = 0; oy < out_s.h; ++oy) {
        for (int ox = 0; ox < out_s.w; ++ox) {
          for (int ky = 0; ky < conv->kh; ++ky) {
            const int iy = oy * conv->stride + ky - conv->pad;
            if (iy < 0 || iy >= in_s.h) continue;
            for (int kx = 0; kx < conv->kw; ++kx) {
              const int ix = ox * conv->stride + kx - conv->pad;
              if (ix < 0 || ix >= in_s.w) continue;
              for (int ci = 0; ci < in_c; ++ci) {
                const double av = a[(static_cast<std::size_t>(iy) * in_s.w + ix) * in_c + ci];
                if (av == 0.0) continue;
                const std::size_t wbase =
                    ((static_cast<std::size_t>(ky) * conv->kw + kx) * in_c + ci) * out_c;
                const std::size_t obase =
                    (static_cast<std::size_t>(oy) * out_s.w + ox) * out_c;
                for (int f = 0; f < out_c; ++f) {
                  out[obase + f] += av * wq[wbase + f];
                }
              }
            }
          }
        }
      }
      if (cache) {
        auto& lc = cache->layers[i];
        lc.in_raw = std::move(cur);
        lc.in_q = std::move(a);
        lc.w_q = std::move(wq);
      }
      cur = std::move(out);
    } else if (std::holds_alternative<netspec::FcLayer>(layer)) {
      std::vector<double> a = cur;
      fake_quantize_acts(a, net.qspec.act_bits);
      std::vector<double> wq = fake_quantize_weights_vec(net.params[i], net.qspec.weight_bits);
      const int64_t in_n = in_s.elements();
      const int out_n = out_s.c;
      std::vector<double> out(out_n, 0.0);
      for (int64_t j = 0; j < in_n; ++j) {
        const double av = a[j];
        if (av == 0.0) continue;
        const std::size_t wbase = static_cast<std::size_t>(j) * out_n;
        for (int o = 0; o < out_n; ++o) out[o] += av * wq[wbase + o];
      }
      if (cache) {
        auto& lc = cache->layers[i];
        lc.in_raw = std::move(cur);
        lc.in_q = std::move(a);
        lc.w_q = std::move(wq);
      }
      cur = std::move(out);
    } else if (std::holds_alternative<netspec::ReluLayer>(layer)) {
      if (cache) cache->layers[i].in_raw = cur;
      for (double& v : cur) v = std::max(0.0, v);
    } else {
      const auto& pool = std::get<netspec::PoolLayer>(layer);
      std::vector<double> out(out_s.elements(), 0.0);
      std::vector<int> argmax;
      if (pool.kind == netspec::PoolKind::kGlobal) {
        const double inv = 1.0 / (static_cast<double>(in_s.h) * in_s.w);
        for (int ci = 0; ci < in_s.c; ++ci) {
          double sum = 0.0;
          for (int y = 0; y < in_s.h; ++y) {
            for (int x = 0; x < in_s.w; ++x) {
              sum += cur[(static_cast<std::size_t>(y) * in_s.w + x) * in_s.c + ci];
            }
          }
          out[ci] = sum * inv;
        }
      } else {
        const bool is_max = pool.kind == netspec::PoolKind::kMax;
        if (is_max) argmax.assign(out.size(), -1);
        const double inv = 1.0 / (static_cast<double>(pool.k) * pool.k);
        for (int oy = 0; oy < out_s.h; ++oy) {
          for (int ox = 0; ox < out_s.w; ++ox) {
            for (int ci = 0; ci < in_s.c; ++ci) {
              const std::size_t oidx =
                  (static_cast<std::size_t>(oy) * out_s.w + ox) * out_s.c + ci;
              double best = -1e300;
              double sum = 0.0;
              for (int ky = 0; ky < pool.k; ++ky) {
                for (int kx = 0; kx < pool.k; ++kx) {
                  const int iy = oy * pool.stride + ky;
                  const int ix = ox * pool.stride + kx;
                  const std::size_t iidx =
                      (static_cast<std::size_t>(iy) * in_s.w + ix) * in_s.c + ci;
                  const double v = cur[iidx];
                  sum += v;
                  if (v > best) {
                    best = v;
                    if (is_max) argmax[oidx] = static_cast<int>(iidx);
                  }
                }
              }
              out[oidx] = is_max ? best : sum * inv;
            }
          }
        }
      }
      if (cache) {
        cache->layers[i].in_raw = std::move(cur);
        cache->layers[i].argmax = std::move(argmax);
      }
      cur = std::move(out);
    }
  }
  if (cache) cache->logits = cur;
  return cur;
}

std::vector<std::vector<double>> backward(const ToyNet& net,
                                          const ForwardCache& cache,
                                          std::span<const double> dlogits) {
  const auto& shapes = net.shapes;
  if (cache.layers.size() != net.topology.layers.size()) {
    throw std::invalid_argument("stale cache: layer count mismatch");
  }
  if (static_cast<int64_t>(dlogits.size()) != shapes.back().out.elements()) {
    throw std::invalid_argument("dlogits size does not match logits shape");
  }

  std::vector<std::vector<double>> grads(net.params.size());
  for (std::size_t i = 0; i < grads.size(); ++i) grads[i].assign(net.params[i].size(), 0.0);

  const bool quant_w = !net.qspec.weights_passthrough();
  const bool quant_a = !net.qspec.acts_passthrough();

  std::vector<double> dcur(dlogits.begin(), dlogits.end());
  for (std::size_t ii = net.topology.layers.size(); ii-- > 0;) {
    const netspec::Layer& layer = net.topology.layers[ii];
    const netspec::Shape in_s = shapes[ii].in;
    const netspec::Shape out_s = shapes[ii].out;
    const LayerCache& lc = cache.layers[ii];

    if (std::holds_alternative<netspec::InputLayer>(layer)) {
      continue;
    }
    if (const auto* conv = std::get_if<netspec::ConvLayer>(&layer)) {
      if (lc.in_q.size() != static_cast<std::size_t>(in_s.elements())) {
        throw std::invalid_argument("stale cache at conv layer " + conv->name);
      }
      std::vector<double> din_q(in_s.elements(), 0.0);
      std::vector<double>& dw_q = grads[ii];  // accumulate in place, mask after
      const int in_c = in_s.c;
      const int out_c = out_s.c;
      for (int oy = 0; oy < out_s.h; ++oy) {
        for (int ox = 0; ox < out_s.w; ++ox) {
          const std::size_t obase = (static_cast<std::size_t>(oy) * out_s.w + ox) * out_c;
          for (int ky = 0; ky < conv->kh; ++ky) {
            const int iy = oy * conv->stride + ky - conv->pad;
            if (iy < 0 || iy >= in_s.h) continue;
            for (int kx = 0; kx < conv->kw; ++kx) {
              const int ix = ox * conv->stride + kx - conv->pad;
              if (ix < 0 || ix >= in_s.w) continue;
              for (int ci = 0; ci < in_c; ++ci) {
                const std::size_t iidx =
                    (static_cast<std::size_t>(iy) * in_s.w + ix) * in_c + ci;
                const std::size_t wbase =
                    ((static_cast<std::size_t>(ky) * conv->kw + kx) * in_c + ci) * out_c;
                const double av = lc.in_q[iidx];
                double di = 0.0;
                for (int f = 0; f < out_c; ++f) {
                  const double dz = dcur[obase + f];
                  dw_q[wbase + f] += av * dz;
                  di += lc.w_q[wbase + f] * dz;
                }
                din_q[iidx] += di;
              }
            }
          }
        }
      }
      if (quant_w) {
        grads[ii] = quant::ste_grad(grads[ii], net.params[ii], -1.0, 1.0);
      }
      dcur = quant_a ? quant::ste_grad(din_q, lc.in_raw, 0.0, 1.0) : std::move(din_q);
    } else if (std::holds_alternative<netspec::FcLayer>(layer)) {
      const int64_t in_n = in_s.elements();
      const int out_n = out_s.c;
      std::vector<double> din_q(in_n, 0.0);
      for (int64_t j = 0; j < in_n; ++j) {
        const std::size_t wbase = static_cast<std::size_t>(j) * out_n;
        const double av = lc.in_q[j];
        double di = 0.0;
        for (int o = 0; o < out_n; ++o) {
          const double dz = dcur[o];
          grads[ii][wbase + o] += av * dz;
          di += lc.w_q[wbase + o] * dz;
        }
        din_q[j] = di;
      }
      if (quant_w) {
        grads[ii] = quant::ste_grad(grads[ii], net.params[ii], -1.0, 1.0);
      }
      dcur = quant_a ? quant::ste_grad(din_q, lc.in_raw, 0.0, 1.0) : std::move(din_q);
    } else if (std::holds_alternative<netspec::ReluLayer>(layer)) {
      for (std::size_t j = 0; j < dcur.size(); ++j) {
        if (lc.in_raw[j] <= 0.0) dcur[j] = 0.0;
      }
    } else {
      const auto& pool = std::get<netspec::PoolLayer>(layer);
      std::vector<double> din(in_s.elements(), 0.0);
      if (pool.kind == netspec::PoolKind::kGlobal) {
        const double inv = 1.0 / (static_cast<double>(in_s.h) * in_s.w);
        for (int ci = 0; ci < in_s.c; ++ci) {
          const double d = dcur[ci] * inv;
          for (int y = 0; y < in_s.h; ++y) {
            for (int x = 0; x < in_s.w; ++x) {
              din[(static_cast<std::size_t>(y) * in_s.w + x) * in_s.c + ci] += d;
            }
          }
        }
      } else if (pool.kind == netspec::PoolKind::kMax) {
        for (std::size_t o = 0; o < dcur.size(); ++o) {
          din[lc.argmax[o]] += dcur[o];
        }
      } else {
        const double inv = 1.0 / (static_cast<double>(pool.k) * pool.k);
        for (int oy = 0; oy < out_s.h; ++oy) {
          for (int ox = 0; ox < out_s.w; ++ox) {
            for (int ci = 0; ci < in_s.c; ++ci) {
              const double d =
                  dcur[(static_cast<std::size_t>(oy) * out_s.w + ox) * out_s.c + ci] * inv;
              for (int ky = 0; ky < pool.k; ++ky) {
                for (int kx = 0; kx < pool.k; ++kx) {
                  const int iy = oy * pool.stride + ky;
                  const int ix = ox * pool.stride + kx;
                  din[(static_cast<std::size_t>(iy) * in_s.w + ix) * in_s.c + ci] += d;
                }
              }
            }
          }
        }
      }
      dcur = std::move(din);
    }
  }
  return grads;
}

DistillResult distill_loss(std::span<const double> student_logits,
                           std::span<const double> teacher_logits, int label,
                           double alpha, double beta, double temperature) {
  if (student_logits.size() != teacher_logits.size()) {
    throw std::invalid_argument("distill_loss: logit shape mismatch");
  }
  if (temperature <= 0.0) {
    throw std::invalid_argument("distill_loss: temperature must be positive");
  }
  if (label < 0 || label >= static_cast<int>(student_logits.size())) {
    throw std::invalid_argument("distill_loss: label out of range");
  }
  const auto p_s = softmax(student_logits, 1.0);
  const auto p_s_t = softmax(student_logits, temperature);
  const auto p_t_t = softmax(teacher_logits, temperature);

  DistillResult res;
  res.loss = alpha * -std::log(std::max(p_s[label], 1e-300));
  for (std::size_t i = 0; i < p_t_t.size(); ++i) {
    res.loss += beta * -p_t_t[i] * std::log(std::max(p_s_t[i], 1e-300));
  }
  res.dlogits.resize(student_logits.size());
  for (std::size_t i = 0; i < res.dlogits.size(); ++i) {
    const double hard = p_s[i] - (static_cast<int>(i) == label ? 1.0 : 0.0);
    const double soft = (p_s_t[i] - p_t_t[i]) / temperature;
    res.dlogits[i] = alpha * hard + beta * soft;
  }
  return res;
}

DistillResult ce_loss(std::span<const double> logits, int label) {
  if (label < 0 || label >= static_cast<int>(logits.size())) {
    throw std::invalid_argument("ce_loss: label out of range");
  }
  const auto p = softmax(logits, 1.0);
  DistillResult res;
  res.loss = -std::log(std::max(p[label], 1e-300));
  res.dlogits.resize(logits.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    res.dlogits[i] = p[i] - (static_cast<int>(i) == label ? 1.0 : 0.0);
  }
  return res;
}

double eval_accuracy(const ToyNet& net, const Dataset& data) {
  if (data.eval_idx.empty()) return 0.0;
  int correct = 0;
  for (const int idx : data.eval_idx) {
    const auto logits = forward(net, data.images[idx]);
    const auto best = std::max_element(logits.begin(), logits.end());
    if (static_cast<int>(best - logits.begin()) == data.labels[idx]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.eval_idx.size());
}

namespace {

std::pair<ToyNet, TrainHistory> run_training(const TrainConfig& config,
                                             const netspec::NetworkSpec& topology,
                                             const quant::QuantSpec& qspec,
                                             double width_factor,
                                             const ToyNet* teacher) {
  const Dataset data = make_dataset(config.dataset, config.seed);
  ToyNet net = init_net(topology, qspec, width_factor, config.seed);

  std::vector<std::vector<double>> velocity(net.params.size());
  for (std::size_t i = 0; i < velocity.size(); ++i) {
    velocity[i].assign(net.params[i].size(), 0.0);
  }

  TrainHistory history;
  std::mt19937_64 shuffle_rng(config.seed ^ 0xd1b54a32d192ed03ULL);
  std::vector<int> order = data.train_idx;
  const int decay_epoch = (3 * config.epochs) / 4;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr =
        config.learning_rate * (epoch >= decay_epoch ? 0.1 : 1.0);
    shuffle_indices(order, shuffle_rng);

    double loss_sum = 0.0;
    int loss_count = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(),
                                       start + static_cast<std::size_t>(config.batch_size));
      std::vector<std::vector<double>> batch_grads(net.params.size());
      for (std::size_t i = 0; i < batch_grads.size(); ++i) {
        batch_grads[i].assign(net.params[i].size(), 0.0);
      }
      for (std::size_t s = start; s < end; ++s) {
        const int idx = order[s];
        ForwardCache cache;
        const auto logits = forward(net, data.images[idx], &cache);
        DistillResult loss;
        if (teacher) {
          const auto t_logits = forward(*teacher, data.images[idx]);
          loss = distill_loss(logits, t_logits, data.labels[idx], config.alpha,
                              config.beta, config.temperature);
        } else {
          loss = ce_loss(logits, data.labels[idx]);
        }
        loss_sum += loss.loss;
        ++loss_count;
        const auto grads = backward(net, cache, loss.dlogits);
        for (std::size_t i = 0; i < grads.size(); ++i) {
          for (std::size_t j = 0; j < grads[i].size(); ++j) {
            batch_grads[i][j] += grads[i][j];
          }
        }
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t i = 0; i < net.params.size(); ++i) {
        for (std::size_t j = 0; j < net.params[i].size(); ++j) {
          const double g = batch_grads[i][j] * inv;
          velocity[i][j] = config.momentum * velocity[i][j] - lr * g;
          net.params[i][j] += velocity[i][j];
        }
      }
    }
    history.train_loss.push_back(loss_count ? loss_sum / loss_count : 0.0);
    history.eval_accuracy.push_back(eval_accuracy(net, data));
  }
  return {std::move(net), std::move(history)};
}

}  // namespace

std::pair<ToyNet, TrainHistory> train(const TrainConfig& config, Scheme scheme,
                                      const ToyNet* teacher) {
  config.validate();
  const bool widened = scheme == Scheme::kWrpn || scheme == Scheme::kWrpnApprentice;
  const bool distilled =
      scheme == Scheme::kApprentice || scheme == Scheme::kWrpnApprentice;
  if (distilled) {
    if (!teacher) {
      throw std::invalid_argument("apprentice schemes require a trained teacher");
    }
    if (!teacher->qspec.weights_passthrough() || !teacher->qspec.acts_passthrough()) {
      throw std::invalid_argument("teacher must be full-precision (32, 32)");
    }
  }
  netspec::NetworkSpec topology = default_topology(config.dataset);
  double width = 1.0;
  if (widened) {
    topology = netspec::widen(topology, config.width_factor, config.widen_fraction);
    width = config.width_factor;
  }
  const quant::QuantSpec qspec =
      scheme == Scheme::kBaseline
          ? quant::QuantSpec{32, 32}
          : quant::QuantSpec{config.weight_bits, config.act_bits};
  return run_training(config, topology, qspec, width, distilled ? teacher : nullptr);
}

std::pair<ToyNet, TrainHistory> train_teacher(const TrainConfig& config) {
  config.validate();
  netspec::NetworkSpec topology =
      netspec::widen(default_topology(config.dataset), config.width_factor, 1.0);
  return run_training(config, topology, quant::QuantSpec{32, 32},
                      config.width_factor, nullptr);
}

std::string history_jsonl(const TrainHistory& history) {
  std::ostringstream out;
  for (std::size_t i = 0; i < history.train_loss.size(); ++i) {
    nlohmann::ordered_json j;
    j["epoch"] = i + 1;
    j["train_loss"] = history.train_loss[i];
    j["eval_accuracy"] = history.eval_accuracy[i];
    out << j.dump() << '\n';
  }
  return out.str();
}

namespace {

template <typename T>
void write_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(const ToyNet& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_raw(out, kCheckpointVersion);
  const std::string topo = netspec::emit_topology(net.topology);
  write_raw(out, static_cast<uint32_t>(topo.size()));
  out.write(topo.data(), static_cast<std::streamsize>(topo.size()));
  write_raw(out, static_cast<int32_t>(net.qspec.weight_bits));
  write_raw(out, static_cast<int32_t>(net.qspec.act_bits));
  write_raw(out, net.width_factor);
  write_raw(out, static_cast<uint32_t>(net.params.size()));
  for (const auto& p : net.params) {
    write_raw(out, static_cast<uint64_t>(p.size()));
    out.write(reinterpret_cast<const char*>(p.data()),
              static_cast<std::streamsize>(p.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

ToyNet load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("bad checkpoint magic: " + path);
  }
  const auto version = read_raw<uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  const auto topo_len = read_raw<uint32_t>(in);
  std::string topo(topo_len, '\0');
  in.read(topo.data(), topo_len);
  if (!in) throw std::runtime_error("truncated checkpoint");

  ToyNet net;
  net.topology = netspec::parse_topology(topo);
  net.qspec.weight_bits = read_raw<int32_t>(in);
  net.qspec.act_bits = read_raw<int32_t>(in);
  net.qspec.validate();
  net.width_factor = read_raw<double>(in);
  const auto layer_count = read_raw<uint32_t>(in);
  if (layer_count != net.topology.layers.size()) {
    throw std::runtime_error("checkpoint layer count does not match topology");
  }
  net.params.resize(layer_count);
  for (auto& p : net.params) {
    const auto count = read_raw<uint64_t>(in);
    p.resize(count);
    in.read(reinterpret_cast<char*>(p.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw std::runtime_error("truncated checkpoint tensor data");
  }
  net.bind_shapes();
  return net;
}

}  // namespace lpforge::toytrain

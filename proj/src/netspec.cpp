#include "lpforge/netspec.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <json.hpp>

namespace lpforge::netspec {

namespace {

std::string layer_label(const Layer& layer) {
  return std::visit(
      [](const auto& l) -> std::string {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, InputLayer>) {
          return "input";
        } else if constexpr (std::is_same_v<T, ConvLayer>) {
          return "conv:" + l.name;
        } else if constexpr (std::is_same_v<T, FcLayer>) {
          return "fc:" + l.name;
        } else if constexpr (std::is_same_v<T, ReluLayer>) {
          return "relu";
        } else {
          return "pool";
        }
      },
      layer);
}

int64_t bits_to_bytes(int64_t count, int bits) {
  return (count * bits + 7) / 8;
}

struct KeyValues {
  std::map<std::string, std::string> kv;
  int line;

  std::string take(const std::string& key, bool required,
                   const std::string& fallback = "") {
    auto it = kv.find(key);
    if (it == kv.end()) {
      if (required) throw ParseError(line, "missing required key '" + key + "'");
      return fallback;
    }
    std::string v = it->second;
    kv.erase(it);
    return v;
  }

  void finish(const std::string& keyword) {
    if (!kv.empty()) {
      throw ParseError(line, "unknown key '" + kv.begin()->first + "' for '" +
                                 keyword + "'");
    }
  }
};

int parse_int(const std::string& s, int line, const std::string& what) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(line, "expected integer for " + what + ", got '" + s + "'");
  }
}

int parse_positive(const std::string& s, int line, const std::string& what) {
  const int v = parse_int(s, line, what);
  if (v < 1) throw ParseError(line, what + " must be >= 1, got " + s);
  return v;
}

}  // namespace

std::vector<LayerShape> infer_shapes(const NetworkSpec& spec) {
  if (spec.layers.empty() || !std::holds_alternative<InputLayer>(spec.layers.front())) {
    throw std::invalid_argument("topology must start with an input layer");
  }
  std::vector<LayerShape> out;
  out.reserve(spec.layers.size());
  Shape cur{};
  bool flattened = false;
  for (std::size_t idx = 0; idx < spec.layers.size(); ++idx) {
    const Layer& layer = spec.layers[idx];
    LayerShape ls;
    ls.in = cur;
    if (const auto* in = std::get_if<InputLayer>(&layer)) {
      if (idx != 0) throw std::invalid_argument("input layer must be first");
      cur = {in->h, in->w, in->c};
      ls.in = cur;
      ls.out = cur;
    } else if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
      if (flattened) {
        throw std::invalid_argument("conv layer '" + conv->name +
                                    "' after fc flattening");
      }
      const int ph = cur.h + 2 * conv->pad;
      const int pw = cur.w + 2 * conv->pad;
      if (conv->kh > ph || conv->kw > pw) {
        throw std::invalid_argument("conv layer '" + conv->name + "': kernel " +
                                    std::to_string(conv->kh) + "x" +
                                    std::to_string(conv->kw) +
                                    " exceeds padded map " + std::to_string(ph) +
                                    "x" + std::to_string(pw));
      }
      ls.out = {(ph - conv->kh) / conv->stride + 1,
                (pw - conv->kw) / conv->stride + 1, conv->out_channels};
      ls.params = static_cast<int64_t>(conv->kh) * conv->kw * cur.c * conv->out_channels;
      ls.fmas = ls.out.elements() * conv->kh * conv->kw * cur.c;
      cur = ls.out;
    } else if (const auto* fc = std::get_if<FcLayer>(&layer)) {
      const int64_t in_features = cur.elements();
      ls.out = {1, 1, fc->out_features};
      ls.params = in_features * fc->out_features;
      ls.fmas = ls.params;
      cur = ls.out;
      flattened = true;
    } else if (std::holds_alternative<ReluLayer>(layer)) {
      ls.out = cur;
    } else {
      const auto& pool = std::get<PoolLayer>(layer);
      if (flattened) throw std::invalid_argument("pool layer after fc flattening");
      if (pool.kind == PoolKind::kGlobal) {
        ls.out = {1, 1, cur.c};
      } else {
        if (pool.k > cur.h || pool.k > cur.w) {
          throw std::invalid_argument("pool window " + std::to_string(pool.k) +
                                      " exceeds map " + std::to_string(cur.h) +
                                      "x" + std::to_string(cur.w));
        }
        ls.out = {(cur.h - pool.k) / pool.stride + 1,
                  (cur.w - pool.k) / pool.stride + 1, cur.c};
      }
      cur = ls.out;
    }
    if (ls.out.h < 1 || ls.out.w < 1 || ls.out.c < 1) {
      throw std::invalid_argument("layer " + layer_label(layer) +
                                  " produces an empty output shape");
    }
    out.push_back(ls);
  }
  return out;
}

NetworkSpec parse_topology(const std::string& text, const std::string& name) {
  NetworkSpec spec;
  spec.name = name;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    std::istringstream ls(raw);
    std::string keyword;
    if (!(ls >> keyword)) continue;

    if (keyword == "input") {
      int h, w, c;
      if (!(ls >> h >> w >> c)) {
        throw ParseError(line_no, "input expects 'input H W C'");
      }
      std::string extra;
      if (ls >> extra) throw ParseError(line_no, "trailing token '" + extra + "'");
      if (h < 1 || w < 1 || c < 1) throw ParseError(line_no, "input dims must be >= 1");
      spec.layers.push_back(InputLayer{h, w, c});
      continue;
    }

    KeyValues args{{}, line_no};
    std::string tok;
    while (ls >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos || eq == 0) {
        throw ParseError(line_no, "expected key=value, got '" + tok + "'");
      }
      args.kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }

    if (keyword == "conv") {
      ConvLayer conv;
      conv.name = args.take("name", true);
      conv.out_channels = parse_positive(args.take("out", true), line_no, "out");
      conv.kh = conv.kw = parse_positive(args.take("k", true), line_no, "k");
      conv.stride = parse_positive(args.take("stride", false, "1"), line_no, "stride");
      const int pad = parse_int(args.take("pad", false, "0"), line_no, "pad");
      if (pad < 0) throw ParseError(line_no, "pad must be >= 0");
      conv.pad = pad;
      args.finish("conv");
      spec.layers.push_back(conv);
    } else if (keyword == "fc") {
      FcLayer fc;
      fc.name = args.take("name", true);
      fc.out_features = parse_positive(args.take("out", true), line_no, "out");
      args.finish("fc");
      spec.layers.push_back(fc);
    } else if (keyword == "relu") {
      args.finish("relu");
      spec.layers.push_back(ReluLayer{});
    } else if (keyword == "pool") {
      PoolLayer pool;
      const std::string type = args.take("type", true);
      if (type == "max") {
        pool.kind = PoolKind::kMax;
      } else if (type == "avg") {
        pool.kind = PoolKind::kAvg;
      } else if (type == "global") {
        pool.kind = PoolKind::kGlobal;
      } else {
        throw ParseError(line_no, "pool type must be max|avg|global, got '" + type + "'");
      }
      pool.k = parse_positive(args.take("k", false, "2"), line_no, "k");
      pool.stride = parse_positive(args.take("stride", false, "2"), line_no, "stride");
      args.finish("pool");
      spec.layers.push_back(pool);
    } else {
      throw ParseError(line_no, "unknown layer keyword '" + keyword + "'");
    }
  }
  if (spec.layers.empty() || !std::holds_alternative<InputLayer>(spec.layers.front())) {
    throw ParseError(1, "topology must start with an 'input H W C' line");
  }
  infer_shapes(spec);  // validate geometry up front
  return spec;
}

std::string emit_topology(const NetworkSpec& spec) {
  std::ostringstream out;
  for (const Layer& layer : spec.layers) {
    if (const auto* in = std::get_if<InputLayer>(&layer)) {
      out << "input " << in->h << ' ' << in->w << ' ' << in->c << '\n';
    } else if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
      out << "conv name=" << conv->name << " out=" << conv->out_channels
          << " k=" << conv->kh << " stride=" << conv->stride
          << " pad=" << conv->pad << '\n';
    } else if (const auto* fc = std::get_if<FcLayer>(&layer)) {
      out << "fc name=" << fc->name << " out=" << fc->out_features << '\n';
    } else if (std::holds_alternative<ReluLayer>(layer)) {
      out << "relu\n";
    } else {
      const auto& pool = std::get<PoolLayer>(layer);
      out << "pool type=";
      switch (pool.kind) {
        case PoolKind::kMax: out << "max"; break;
        case PoolKind::kAvg: out << "avg"; break;
        case PoolKind::kGlobal: out << "global"; break;
      }
      if (pool.kind != PoolKind::kGlobal) {
        out << " k=" << pool.k << " stride=" << pool.stride;
      }
      out << '\n';
    }
  }
  return out.str();
}

NetworkSpec resnet_cifar(int n) {
  if (n < 1) throw std::invalid_argument("resnet_cifar requires n >= 1");
  NetworkSpec spec;
  spec.name = "resnet-" + std::to_string(6 * n + 2);
  spec.layers.push_back(InputLayer{32, 32, 3});
  spec.layers.push_back(ConvLayer{"stem", 16, 3, 3, 1, 1});
  spec.layers.push_back(ReluLayer{});
  for (int stage = 0; stage < 3; ++stage) {
    const int filters = 16 << stage;
    for (int i = 0; i < 2 * n; ++i) {
      const int stride = (stage > 0 && i == 0) ? 2 : 1;
      const std::string name =
          "s" + std::to_string(stage + 1) + "_c" + std::to_string(i + 1);
      spec.layers.push_back(ConvLayer{name, filters, 3, 3, stride, 1});
      spec.layers.push_back(ReluLayer{});
    }
  }
  spec.layers.push_back(PoolLayer{PoolKind::kGlobal, 2, 2});
  spec.layers.push_back(FcLayer{"fc", 10});
  return spec;
}

NetworkSpec widen(const NetworkSpec& spec, double factor, double fraction) {
  if (factor < 1.0) throw std::invalid_argument("widen factor must be >= 1");
  if (!(fraction > 0.0) || fraction > 1.0) {
    throw std::invalid_argument("widen fraction must be in (0, 1]");
  }
  int conv_count = 0;
  for (const Layer& l : spec.layers) {
    if (std::holds_alternative<ConvLayer>(l)) ++conv_count;
  }
  const int to_widen = static_cast<int>(std::ceil(fraction * conv_count));
  NetworkSpec out = spec;
  int seen = 0;
  for (Layer& l : out.layers) {
    if (auto* conv = std::get_if<ConvLayer>(&l)) {
      if (seen < to_widen) {
        conv->out_channels =
            static_cast<int>(std::llround(conv->out_channels * factor));
      }
      ++seen;
    }
  }
  infer_shapes(out);
  return out;
}

FootprintReport footprint(const NetworkSpec& spec, int batch, FootprintMode mode,
                          const quant::QuantSpec& q) {
  if (batch < 1) throw std::invalid_argument("batch must be >= 1");
  q.validate();
  const auto shapes = infer_shapes(spec);

  FootprintReport rep;
  rep.batch = batch;
  rep.mode = mode;
  std::size_t peak_idx = 0;
  int64_t peak_live = -1;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    LayerFootprint lf;
    lf.label = layer_label(spec.layers[i]);
    lf.weight_bytes = bits_to_bytes(shapes[i].params, q.weight_bits);
    if (mode == FootprintMode::kTraining) {
      // All maps retained for backprop, one per batch element.
      lf.activation_bytes =
          batch * bits_to_bytes(shapes[i].out.elements(), q.act_bits);
    } else {
      // Live set candidate: the layer's double-buffered input+output.
      const int64_t live = batch * bits_to_bytes(shapes[i].in.elements() +
                                                     shapes[i].out.elements(),
                                                 q.act_bits);
      if (i > 0 && live > peak_live) {
        peak_live = live;
        peak_idx = i;
      }
      lf.activation_bytes = 0;  // attributed below to the peak layer only
    }
    rep.per_layer.push_back(lf);
  }
  if (mode == FootprintMode::kInference && peak_live >= 0) {
    rep.per_layer[peak_idx].activation_bytes = peak_live;
  }
  for (const auto& lf : rep.per_layer) {
    rep.weight_bytes += lf.weight_bytes;
    rep.activation_bytes += lf.activation_bytes;
  }
  return rep;
}

CostReport compute_cost(const NetworkSpec& spec, const quant::QuantSpec& q) {
  q.validate();
  const auto shapes = infer_shapes(spec);
  CostReport rep;
  const int64_t bit_width = q.act_bits + q.weight_bits;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (shapes[i].fmas == 0) continue;
    LayerCost lc;
    lc.label = layer_label(spec.layers[i]);
    lc.fmas = shapes[i].fmas;
    lc.cost = lc.fmas * bit_width;
    rep.total_fmas += lc.fmas;
    rep.cost += lc.cost;
    rep.per_layer.push_back(lc);
  }
  return rep;
}

std::string footprint_json(const FootprintReport& r, const NetworkSpec& spec) {
  nlohmann::ordered_json j;
  j["network"] = spec.name;
  j["mode"] = r.mode == FootprintMode::kTraining ? "training" : "inference";
  j["batch"] = r.batch;
  j["weight_bytes"] = r.weight_bytes;
  j["activation_bytes"] = r.activation_bytes;
  auto layers = nlohmann::ordered_json::array();
  for (const auto& lf : r.per_layer) {
    layers.push_back({{"layer", lf.label},
                      {"weight_bytes", lf.weight_bytes},
                      {"activation_bytes", lf.activation_bytes}});
  }
  j["per_layer"] = layers;
  return j.dump();
}

std::string footprint_table(const FootprintReport& r) {
  std::ostringstream out;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%-16s %16s %16s\n", "layer", "weight_bytes",
                "activation_bytes");
  out << buf;
  for (const auto& lf : r.per_layer) {
    std::snprintf(buf, sizeof(buf), "%-16s %16lld %16lld\n", lf.label.c_str(),
                  static_cast<long long>(lf.weight_bytes),
                  static_cast<long long>(lf.activation_bytes));
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "%-16s %16lld %16lld\n", "total",
                static_cast<long long>(r.weight_bytes),
                static_cast<long long>(r.activation_bytes));
  out << buf;
  return out.str();
}

std::string cost_json(const CostReport& r, const NetworkSpec& spec) {
  nlohmann::ordered_json j;
  j["network"] = spec.name;
  j["total_fmas"] = r.total_fmas;
  j["cost"] = r.cost;
  auto layers = nlohmann::ordered_json::array();
  for (const auto& lc : r.per_layer) {
    layers.push_back({{"layer", lc.label}, {"fmas", lc.fmas}, {"cost", lc.cost}});
  }
  j["per_layer"] = layers;
  return j.dump();
}

std::string cost_table(const CostReport& r) {
  std::ostringstream out;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%-16s %16s %20s\n", "layer", "fmas", "cost");
  out << buf;
  for (const auto& lc : r.per_layer) {
    std::snprintf(buf, sizeof(buf), "%-16s %16lld %20lld\n", lc.label.c_str(),
                  static_cast<long long>(lc.fmas),
                  static_cast<long long>(lc.cost));
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "%-16s %16lld %20lld\n", "total",
                static_cast<long long>(r.total_fmas),
                static_cast<long long>(r.cost));
  out << buf;
  return out.str();
}

}  // namespace lpforge::netspec

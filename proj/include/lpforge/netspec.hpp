#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "lpforge/quant.hpp"

namespace lpforge::netspec {

struct InputLayer {
  int h = 0;
  int w = 0;
  int c = 0;
};

struct ConvLayer {
  std::string name;
  int out_channels = 0;
  int kh = 0;
  int kw = 0;
  int stride = 1;
  int pad = 0;
};

struct FcLayer {
  std::string name;
  int out_features = 0;
};

struct ReluLayer {};

enum class PoolKind { kMax, kAvg, kGlobal };

struct PoolLayer {
  PoolKind kind = PoolKind::kMax;
  int k = 2;
  int stride = 2;
};

using Layer = std::variant<InputLayer, ConvLayer, FcLayer, ReluLayer, PoolLayer>;

struct NetworkSpec {
  std::string name;
  std::vector<Layer> layers;
};

/// Running shape during inference over the layer chain. FC layers flatten;
/// after that h = w = 1 and c = features.
struct Shape {
  int h = 0;
  int w = 0;
  int c = 0;
  int64_t elements() const { return static_cast<int64_t>(h) * w * c; }
};

struct LayerShape {
  Shape in;
  Shape out;
  int64_t params = 0;  // 0 for parameter-free layers
  int64_t fmas = 0;    // 0 for non-conv/fc layers
};

// Shape inference over the chain; validates geometry and in-channel
// inference. One entry per layer, aligned with spec.layers.
std::vector<LayerShape> infer_shapes(const NetworkSpec& spec);

struct ParseError : std::runtime_error {
  int line;
  ParseError(int line_, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line_) + ": " + msg),
        line(line_) {}
};

// Line-based grammar, '#' comments:
//   input H W C
//   conv name=<id> out=<int> k=<int> [stride=<int>] [pad=<int>]
//   fc name=<id> out=<int>
//   relu
//   pool type=max|avg|global [k=<int>] [stride=<int>]
NetworkSpec parse_topology(const std::string& text, const std::string& name = "net");

// Inverse of parse_topology up to whitespace; re-parsing round-trips.
std::string emit_topology(const NetworkSpec& spec);

// CIFAR-style ResNet chain with 6n+2 weighted layers: 3x3x16 stem, then
// 2n convs per stage at 16/32/64 filters on 32/16/8 maps, global average
// pool, fc to 10 classes. Residual adds are not modeled.
NetworkSpec resnet_cifar(int n);

// Widen the first ceil(fraction * #conv) conv layers by `factor`
// (out_channels rounded); downstream in-channels re-infer, fc untouched.
NetworkSpec widen(const NetworkSpec& spec, double factor, double fraction);

enum class FootprintMode { kTraining, kInference };

struct LayerFootprint {
  std::string label;
  int64_t weight_bytes = 0;
  int64_t activation_bytes = 0;
};

struct FootprintReport {
  int64_t weight_bytes = 0;
  int64_t activation_bytes = 0;
  int batch = 1;
  FootprintMode mode = FootprintMode::kInference;
  std::vector<LayerFootprint> per_layer;
};

// Weight bytes from parameter counts at weight_bits; activation bytes are
// all retained maps (training) or the largest input+output live set
// (inference), both scaled by batch and act_bits.
FootprintReport footprint(const NetworkSpec& spec, int batch, FootprintMode mode,
                          const quant::QuantSpec& q);

struct LayerCost {
  std::string label;
  int64_t fmas = 0;
  int64_t cost = 0;
};

struct CostReport {
  int64_t total_fmas = 0;
  int64_t cost = 0;  // sum of fmas * (act_bits + weight_bits)
  std::vector<LayerCost> per_layer;
};

// Per-image compute cost: fmas(conv) = out_h*out_w*out_c*kh*kw*in_c,
// fmas(fc) = in*out, each weighted by (act_bits + weight_bits).
CostReport compute_cost(const NetworkSpec& spec, const quant::QuantSpec& q);

std::string footprint_json(const FootprintReport& r, const NetworkSpec& spec);
std::string footprint_table(const FootprintReport& r);
std::string cost_json(const CostReport& r, const NetworkSpec& spec);
std::string cost_table(const CostReport& r);

}  // namespace lpforge::netspec

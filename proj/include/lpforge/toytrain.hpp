#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lpforge/netspec.hpp"
#include "lpforge/quant.hpp"

namespace lpforge::toytrain {

/// Small sequential CNN over a netspec chain restricted to
/// {input, conv, relu, pool, fc}. Parameters are bias-free weight tensors,
/// one per conv/fc layer (empty vectors for parameter-free layers).
struct ToyNet {
  netspec::NetworkSpec topology;
  quant::QuantSpec qspec;
  double width_factor = 1.0;
  std::vector<std::vector<double>> params;
  std::vector<netspec::LayerShape> shapes;  // cached inference over topology

  void bind_shapes();  // recompute `shapes` and validate parameter sizes
};

struct DatasetSpec {
  int classes = 10;
  int samples_per_class = 200;
  int h = 8;
  int w = 8;
  int c = 1;
  double sigma = 0.25;
};

/// Gaussian-blob classification set. Class means are fixed constants of the
/// spec (independent of seed); the seed drives sampling and the 80/20 split.
struct Dataset {
  DatasetSpec spec;
  std::vector<std::vector<double>> images;
  std::vector<int> labels;
  std::vector<int> train_idx;
  std::vector<int> eval_idx;
};

Dataset make_dataset(const DatasetSpec& spec, uint64_t seed);

struct TrainConfig {
  int epochs = 40;
  int batch_size = 32;
  double learning_rate = 0.1;
  double momentum = 0.9;
  uint64_t seed = 1;
  DatasetSpec dataset;
  double alpha = 1.0;        // hard-label loss weight
  double beta = 0.75;        // distillation term weight
  double temperature = 2.0;  // softening of both logit sets in the soft term
  double width_factor = 2.0;     // wrpn widening factor
  double widen_fraction = 1.0;   // wrpn widened-layer fraction
  int weight_bits = 2;
  int act_bits = 8;

  void validate() const;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> eval_accuracy;

  // Smallest 1-based epoch whose eval accuracy reaches `threshold`;
  // epochs + 1 when never reached.
  int epochs_to_threshold(double threshold) const;
};

enum class Scheme { kBaseline, kLowPrecision, kWrpn, kApprentice, kWrpnApprentice };

Scheme scheme_from_string(const std::string& s);
std::string scheme_to_string(Scheme s);

struct LayerCache {
  std::vector<double> in_raw;  // layer input before activation quantization
  std::vector<double> in_q;    // fake-quantized input (conv/fc only)
  std::vector<double> w_q;     // fake-quantized weights (conv/fc only)
  std::vector<int> argmax;     // max-pool routing
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  std::vector<double> logits;
};

// Single-sample forward with quantizers active per net.qspec; the cache
// retains pre-quantization values for the STE backward.
std::vector<double> forward(const ToyNet& net, std::span<const double> input,
                            ForwardCache* cache = nullptr);

// Backprop through the cached forward; quantizer sites apply the clipped
// STE with the quantizer clamp ranges. Returns per-layer weight gradients.
std::vector<std::vector<double>> backward(const ToyNet& net,
                                          const ForwardCache& cache,
                                          std::span<const double> dlogits);

struct DistillResult {
  double loss = 0.0;
  std::vector<double> dlogits;  // d loss / d student logits
};

// L = alpha * CE(label, softmax(z_s)) + beta * CE(softmax(z_t/T), softmax(z_s/T)).
// The teacher logits are constants; no gradient flows to them.
DistillResult distill_loss(std::span<const double> student_logits,
                           std::span<const double> teacher_logits, int label,
                           double alpha, double beta, double temperature);

// Plain cross-entropy, the beta = 0 special case.
DistillResult ce_loss(std::span<const double> logits, int label);

// Default topology for the synthetic task: conv 8x3x3 (pad 1), relu,
// 2x2 max pool, fc to the class count.
netspec::NetworkSpec default_topology(const DatasetSpec& spec);

// Fan-in-scaled uniform init, limit = sqrt(6 / fan_in), seeded.
ToyNet init_net(const netspec::NetworkSpec& topology, const quant::QuantSpec& q,
                double width_factor, uint64_t seed);

// Seeded SGD-with-momentum run of one scheme. wrpn schemes widen the
// topology before initialization; apprentice schemes require a trained
// full-precision teacher and keep it frozen.
std::pair<ToyNet, TrainHistory> train(const TrainConfig& config, Scheme scheme,
                                      const ToyNet* teacher = nullptr);

// Full-precision teacher at the configured width factor.
std::pair<ToyNet, TrainHistory> train_teacher(const TrainConfig& config);

double eval_accuracy(const ToyNet& net, const Dataset& data);

std::string history_jsonl(const TrainHistory& history);

// Versioned binary checkpoint: magic, version, topology text, QuantSpec,
// per-layer dims plus little-endian f64 data.
void save_checkpoint(const ToyNet& net, const std::string& path);
ToyNet load_checkpoint(const std::string& path);

}  // namespace lpforge::toytrain

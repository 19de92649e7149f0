#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace lpforge::quant {

inline constexpr int kFullPrecisionBits = 32;

/// Precision pair for the two GEMM operands. 32 bits on either side means
/// full-precision passthrough for that operand.
struct QuantSpec {
  int weight_bits = 32;
  int act_bits = 32;

  void validate() const;
  bool weights_passthrough() const { return weight_bits == kFullPrecisionBits; }
  bool acts_passthrough() const { return act_bits == kFullPrecisionBits; }
};

/// Signed symmetric codes in [-(2^(bits-1)-1), 2^(bits-1)-1] with
/// scale = 1/(2^(bits-1)-1). For bits == 32 the tensor is a passthrough:
/// `raw` holds the untouched values and `codes` is empty.
struct QuantizedWeights {
  std::vector<int32_t> codes;
  double scale = 1.0;
  int bits = 32;
  std::vector<double> raw;

  bool passthrough() const { return bits == kFullPrecisionBits; }
  std::size_t size() const { return passthrough() ? raw.size() : codes.size(); }
};

/// Unsigned codes in [0, 2^bits - 1] with scale = 1/(2^bits - 1).
struct QuantizedActivations {
  std::vector<uint32_t> codes;
  double scale = 1.0;
  int bits = 32;
  std::vector<double> raw;

  bool passthrough() const { return bits == kFullPrecisionBits; }
  std::size_t size() const { return passthrough() ? raw.size() : codes.size(); }
};

// Symmetric uniform quantizer over clamp range [-1, 1], ties rounded half
// away from zero. bits must be in [2, 32]; 32 is passthrough.
QuantizedWeights quantize_weights(std::span<const double> w, int bits);

// Uniform quantizer over clamp range [0, 1], ties half away from zero.
QuantizedActivations quantize_activations(std::span<const double> a, int bits);

std::vector<double> dequantize(const QuantizedWeights& q);
std::vector<double> dequantize(const QuantizedActivations& q);

// Scalar fake-quant helpers used by the training forward pass.
double fake_quantize_weight(double w, int bits);
double fake_quantize_activation(double a, int bits);

// Clipped straight-through estimator: passes `upstream` where the
// pre-quantization input lies inside [lo, hi], zero elsewhere.
std::vector<double> ste_grad(std::span<const double> upstream,
                             std::span<const double> prequant_input,
                             double lo, double hi);

}  // namespace lpforge::quant

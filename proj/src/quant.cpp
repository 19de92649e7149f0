#include "lpforge/quant.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace lpforge::quant {

namespace {

void check_bits(int bits) {
  if (bits < 2 || bits > 32) {
    throw std::invalid_argument("quantizer bits must be in [2, 32], got " +
                                std::to_string(bits));
  }
}

void check_finite(double x, std::size_t i) {
  if (std::isnan(x)) {
    throw std::invalid_argument("NaN input element at index " +
                                std::to_string(i));
  }
}

}  // namespace

void QuantSpec::validate() const {
  check_bits(weight_bits);
  check_bits(act_bits);
}

QuantizedWeights quantize_weights(std::span<const double> w, int bits) {
  check_bits(bits);
  QuantizedWeights out;
  out.bits = bits;
  if (bits == kFullPrecisionBits) {
    out.raw.assign(w.begin(), w.end());
    for (std::size_t i = 0; i < out.raw.size(); ++i) check_finite(out.raw[i], i);
    return out;
  }
  const double levels = std::ldexp(1.0, bits - 1) - 1.0;  // 2^(bits-1) - 1
  out.scale = 1.0 / levels;
  out.codes.reserve(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    check_finite(w[i], i);
    const double clamped = std::clamp(w[i], -1.0, 1.0);
    // std::round ties away from zero.
    out.codes.push_back(static_cast<int32_t>(std::round(clamped * levels)));
  }
  return out;
}

QuantizedActivations quantize_activations(std::span<const double> a, int bits) {
  check_bits(bits);
  QuantizedActivations out;
  out.bits = bits;
  if (bits == kFullPrecisionBits) {
    out.raw.assign(a.begin(), a.end());
    for (std::size_t i = 0; i < out.raw.size(); ++i) check_finite(out.raw[i], i);
    return out;
  }
  const double levels = std::ldexp(1.0, bits) - 1.0;  // 2^bits - 1
  out.scale = 1.0 / levels;
  out.codes.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    check_finite(a[i], i);
    const double clamped = std::clamp(a[i], 0.0, 1.0);
    out.codes.push_back(static_cast<uint32_t>(std::round(clamped * levels)));
  }
  return out;
}

std::vector<double> dequantize(const QuantizedWeights& q) {
  if (q.passthrough()) return q.raw;
  std::vector<double> out(q.codes.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = q.codes[i] * q.scale;
  return out;
}

std::vector<double> dequantize(const QuantizedActivations& q) {
  if (q.passthrough()) return q.raw;
  std::vector<double> out(q.codes.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = q.codes[i] * q.scale;
  return out;
}

double fake_quantize_weight(double w, int bits) {
  if (bits == kFullPrecisionBits) return w;
  const double levels = std::ldexp(1.0, bits - 1) - 1.0;
  return std::round(std::clamp(w, -1.0, 1.0) * levels) / levels;
}

double fake_quantize_activation(double a, int bits) {
  if (bits == kFullPrecisionBits) return a;
  const double levels = std::ldexp(1.0, bits) - 1.0;
  return std::round(std::clamp(a, 0.0, 1.0) * levels) / levels;
}

std::vector<double> ste_grad(std::span<const double> upstream,
                             std::span<const double> prequant_input,
                             double lo, double hi) {
  if (upstream.size() != prequant_input.size()) {
    throw std::invalid_argument("ste_grad shape mismatch: " +
                                std::to_string(upstream.size()) + " vs " +
                                std::to_string(prequant_input.size()));
  }
  if (!(lo < hi)) {
    throw std::invalid_argument("ste_grad requires lo < hi");
  }
  std::vector<double> out(upstream.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = prequant_input[i];
    out[i] = (x >= lo && x <= hi) ? upstream[i] : 0.0;
  }
  return out;
}

}  // namespace lpforge::quant

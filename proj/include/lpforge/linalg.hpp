#pragma once

#include <cstdint>
#include <vector>

#include "lpforge/quant.hpp"

namespace lpforge::linalg {

/// Row-major double matrix, the full-precision reference operand.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}
  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

/// M x K row-major 8-bit unsigned activation codes (the A operand).
struct ActivationMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<uint8_t> data;

  ActivationMatrix() = default;
  ActivationMatrix(int m, int k)
      : rows(m), cols(k), data(static_cast<std::size_t>(m) * k, 0) {}
  uint8_t at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  uint8_t& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
};

/// K x N ternary weight codes (the B operand), bit-packed column-major:
/// 16 two-bit fields per 32-bit word, field i of a word at bits [2i, 2i+1].
/// Encoding: 01 -> +1, 00 -> 0, 11 -> -1; pattern 10 is invalid.
struct PackedTernaryMatrix {
  int rows = 0;  // K
  int cols = 0;  // N
  std::vector<uint32_t> words;

  static constexpr int kCodesPerWord = 16;
  int words_per_col() const { return (rows + kCodesPerWord - 1) / kCodesPerWord; }
  // Decoded code at (k, n); throws on the 10 pattern.
  int code_at(int k, int n) const;
};

/// M x N 32-bit signed accumulators, row-major.
struct AccMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<int32_t> data;

  AccMatrix() = default;
  AccMatrix(int m, int n)
      : rows(m), cols(n), data(static_cast<std::size_t>(m) * n, 0) {}
  int32_t at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  int32_t& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
};

/// Signed integer code matrix, the unpacked ternary form.
struct CodeMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<int32_t> data;

  CodeMatrix() = default;
  CodeMatrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0) {}
  int32_t at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  int32_t& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
};

// Largest K for which |acc| <= K*255 fits a 32-bit accumulator.
inline constexpr int kMaxGemmDepth = 1 << 23;

PackedTernaryMatrix pack_ternary(const CodeMatrix& codes);
CodeMatrix unpack_ternary(const PackedTernaryMatrix& p);

// Multiplier-free 8b x 2b GEMM: each inner step selects +A, 0 or -A by the
// sign of the B code. Bit-exact against the integer multiply oracle.
// Worker count > 1 partitions output rows; results are bit-identical.
AccMatrix gemm_ternary(const ActivationMatrix& a, const PackedTernaryMatrix& b,
                       int workers = 1);

// Integer multiply-accumulate oracle over unpacked codes.
AccMatrix gemm_int_oracle(const ActivationMatrix& a, const CodeMatrix& b);

// Plain triple-loop double-precision product.
Mat gemm_ref(const Mat& a, const Mat& b);

struct Tensor3 {
  int h = 0;
  int w = 0;
  int c = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(int h_, int w_, int c_)
      : h(h_), w(w_), c(c_), data(static_cast<std::size_t>(h_) * w_ * c_, 0.0) {}
  double at(int y, int x, int ch) const {
    return data[(static_cast<std::size_t>(y) * w + x) * c + ch];
  }
  double& at(int y, int x, int ch) {
    return data[(static_cast<std::size_t>(y) * w + x) * c + ch];
  }
};

struct ConvGeometry {
  int out_h = 0;
  int out_w = 0;
};

ConvGeometry conv_out_dims(int h, int w, int kh, int kw, int stride, int pad);

// Lower an H x W x C tensor to a matrix whose row r is the receptive field
// of output pixel r in (kh, kw, C) order; padding contributes zeros.
Mat im2col(const Tensor3& input, int kh, int kw, int stride, int pad);

/// Weights for conv lowering: kh x kw x C x F, channel-major per tap, F fastest.
struct ConvWeights {
  int kh = 0;
  int kw = 0;
  int in_c = 0;
  int out_c = 0;
  std::vector<double> data;

  ConvWeights() = default;
  ConvWeights(int kh_, int kw_, int c_, int f_)
      : kh(kh_), kw(kw_), in_c(c_), out_c(f_),
        data(static_cast<std::size_t>(kh_) * kw_ * c_ * f_, 0.0) {}
  double at(int y, int x, int ci, int f) const {
    return data[((static_cast<std::size_t>(y) * kw + x) * in_c + ci) * out_c + f];
  }
  double& at(int y, int x, int ci, int f) {
    return data[((static_cast<std::size_t>(y) * kw + x) * in_c + ci) * out_c + f];
  }
};

// Quantized convolution via im2col + integer GEMM, dequantized with the
// product of the operand scales. Returns out_h x out_w x F.
Tensor3 conv2d_lowprec(const Tensor3& input, const ConvWeights& weights,
                       const quant::QuantSpec& spec, int stride, int pad);

}  // namespace lpforge::linalg

#include "lpforge/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <thread>

namespace lpforge::linalg {

namespace {

uint32_t encode_ternary(int32_t code) {
  switch (code) {
    case 1:
      return 0b01;
    case 0:
      return 0b00;
    case -1:
      return 0b11;
    default:
      return 0b10;  // caller rejects before packing
  }
}

int decode_ternary(uint32_t field, int k, int n) {
  switch (field) {
    case 0b01:
      return 1;
    case 0b00:
      return 0;
    case 0b11:
      return -1;
    default:
      throw std::runtime_error("corrupted packed ternary field 10 at (" +
                               std::to_string(k) + ", " + std::to_string(n) + ")");
  }
}

void check_gemm_dims(int a_cols, int b_rows, int k) {
  if (a_cols != b_rows) {
    throw std::invalid_argument("gemm dimension mismatch: A cols " +
                                std::to_string(a_cols) + " vs B rows " +
                                std::to_string(b_rows));
  }
  if (k > kMaxGemmDepth) {
    throw std::invalid_argument("gemm depth K=" + std::to_string(k) +
                                " exceeds the 32-bit accumulator bound");
  }
}

}  // namespace

int PackedTernaryMatrix::code_at(int k, int n) const {
  const int word = k / kCodesPerWord;
  const int field = k % kCodesPerWord;
  const uint32_t bits =
      (words[static_cast<std::size_t>(n) * words_per_col() + word] >> (2 * field)) & 0b11u;
  return decode_ternary(bits, k, n);
}

PackedTernaryMatrix pack_ternary(const CodeMatrix& codes) {
  PackedTernaryMatrix p;
  p.rows = codes.rows;
  p.cols = codes.cols;
  const int wpc = p.words_per_col();
  p.words.assign(static_cast<std::size_t>(wpc) * codes.cols, 0u);
  for (int n = 0; n < codes.cols; ++n) {
    for (int k = 0; k < codes.rows; ++k) {
      const int32_t c = codes.at(k, n);
      if (c < -1 || c > 1) {
        throw std::invalid_argument("pack_ternary: code " + std::to_string(c) +
                                    " outside {-1,0,1} at (" + std::to_string(k) +
                                    ", " + std::to_string(n) + ")");
      }
      const int word = k / PackedTernaryMatrix::kCodesPerWord;
      const int field = k % PackedTernaryMatrix::kCodesPerWord;
      p.words[static_cast<std::size_t>(n) * wpc + word] |=
          encode_ternary(c) << (2 * field);
    }
  }
  return p;
}

CodeMatrix unpack_ternary(const PackedTernaryMatrix& p) {
  CodeMatrix out(p.rows, p.cols);
  for (int n = 0; n < p.cols; ++n) {
    for (int k = 0; k < p.rows; ++k) {
      out.at(k, n) = p.code_at(k, n);
    }
  }
  return out;
}

AccMatrix gemm_ternary(const ActivationMatrix& a, const PackedTernaryMatrix& b,
                       int workers) {
  check_gemm_dims(a.cols, b.rows, a.cols);
  const int m = a.rows;
  const int n = b.cols;
  const int k = a.cols;
  AccMatrix c(m, n);

  auto run_rows = [&](int row_begin, int row_end) {
    for (int i = row_begin; i < row_end; ++i) {
      for (int j = 0; j < n; ++j) {
        int32_t acc = 0;
        for (int kk = 0; kk < k; ++kk) {
          const int code = b.code_at(kk, j);
          const int32_t act = a.at(i, kk);
          // Sign-select: append A, zero, or negate A. No multiply.
          if (code > 0) {
            acc += act;
          } else if (code < 0) {
            acc -= act;
          }
        }
        c.at(i, j) = acc;
      }
    }
  };

  if (workers <= 1 || m <= 1) {
    run_rows(0, m);
    return c;
  }
  const int count = std::min(workers, m);
  std::vector<std::thread> pool;
  pool.reserve(count);
  const int chunk = (m + count - 1) / count;
  for (int t = 0; t < count; ++t) {
    const int lo = t * chunk;
    const int hi = std::min(m, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back(run_rows, lo, hi);
  }
  for (auto& th : pool) th.join();
  return c;
}

AccMatrix gemm_int_oracle(const ActivationMatrix& a, const CodeMatrix& b) {
  check_gemm_dims(a.cols, b.rows, a.cols);
  AccMatrix c(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int j = 0; j < b.cols; ++j) {
      int32_t acc = 0;
      for (int k = 0; k < a.cols; ++k) {
        acc += static_cast<int32_t>(a.at(i, k)) * b.at(k, j);
      }
      c.at(i, j) = acc;
    }
  }
  return c;
}

Mat gemm_ref(const Mat& a, const Mat& b) {
  if (a.cols != b.rows) {
    throw std::invalid_argument("gemm_ref dimension mismatch");
  }
  Mat c(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int j = 0; j < b.cols; ++j) {
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) {
        acc += a.at(i, k) * b.at(k, j);
      }
      c.at(i, j) = acc;
    }
  }
  return c;
}

ConvGeometry conv_out_dims(int h, int w, int kh, int kw, int stride, int pad) {
  if (kh < 1 || kw < 1 || stride < 1 || pad < 0) {
    throw std::invalid_argument("invalid convolution geometry parameters");
  }
  if (kh > h + 2 * pad || kw > w + 2 * pad) {
    throw std::invalid_argument("kernel " + std::to_string(kh) + "x" +
                                std::to_string(kw) + " exceeds padded input " +
                                std::to_string(h + 2 * pad) + "x" +
                                std::to_string(w + 2 * pad));
  }
  return {(h + 2 * pad - kh) / stride + 1, (w + 2 * pad - kw) / stride + 1};
}

Mat im2col(const Tensor3& input, int kh, int kw, int stride, int pad) {
  const auto geo = conv_out_dims(input.h, input.w, kh, kw, stride, pad);
  Mat out(geo.out_h * geo.out_w, kh * kw * input.c);
  int row = 0;
  for (int oy = 0; oy < geo.out_h; ++oy) {
    for (int ox = 0; ox < geo.out_w; ++ox, ++row) {
      int col = 0;
      for (int ky = 0; ky < kh; ++ky) {
        for (int kx = 0; kx < kw; ++kx) {
          const int iy = oy * stride + ky - pad;
          const int ix = ox * stride + kx - pad;
          for (int ci = 0; ci < input.c; ++ci, ++col) {
            if (iy >= 0 && iy < input.h && ix >= 0 && ix < input.w) {
              out.at(row, col) = input.at(iy, ix, ci);
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor3 conv2d_lowprec(const Tensor3& input, const ConvWeights& weights,
                       const quant::QuantSpec& spec, int stride, int pad) {
  spec.validate();
  if (weights.in_c != input.c) {
    throw std::invalid_argument("conv2d_lowprec: weight in_channels " +
                                std::to_string(weights.in_c) +
                                " does not match input channels " +
                                std::to_string(input.c));
  }
  const auto geo = conv_out_dims(input.h, input.w, weights.kh, weights.kw, stride, pad);

  const auto qa = quant::quantize_activations(input.data, spec.act_bits);
  Tensor3 deq_input(input.h, input.w, input.c);
  deq_input.data = quant::dequantize(qa);

  const auto qw = quant::quantize_weights(weights.data, spec.weight_bits);
  const int k_dim = weights.kh * weights.kw * weights.in_c;

  Tensor3 result(geo.out_h, geo.out_w, weights.out_c);

  if (!spec.acts_passthrough() && !spec.weights_passthrough()) {
    // Integer path: im2col the quantized activation codes.
    const Mat cols = im2col(deq_input, weights.kh, weights.kw, stride, pad);
    const double a_levels = 1.0 / qa.scale;

    CodeMatrix bcodes(k_dim, weights.out_c);
    for (int k = 0; k < k_dim; ++k) {
      for (int f = 0; f < weights.out_c; ++f) {
        bcodes.at(k, f) = qw.codes[static_cast<std::size_t>(k) * weights.out_c + f];
      }
    }

    if (spec.act_bits <= 8) {  // codes fit the 8-bit operand type
      ActivationMatrix acodes(cols.rows, cols.cols);
      for (std::size_t i = 0; i < cols.data.size(); ++i) {
        acodes.data[i] = static_cast<uint8_t>(std::lround(cols.data[i] * a_levels));
      }
      AccMatrix acc = spec.weight_bits == 2
                          ? gemm_ternary(acodes, pack_ternary(bcodes))
                          : gemm_int_oracle(acodes, bcodes);
      const double out_scale = qa.scale * qw.scale;
      for (std::size_t i = 0; i < acc.data.size(); ++i) {
        result.data[i] = acc.data[i] * out_scale;
      }
      return result;
    }
    // Wider activation codes do not fit the 8-bit operand type; fall through
    // to the float path on dequantized operands (exact at desk sizes).
  }

  Mat cols = im2col(deq_input, weights.kh, weights.kw, stride, pad);
  Mat wmat(k_dim, weights.out_c);
  const auto deq_w = quant::dequantize(qw);
  wmat.data = deq_w;
  const Mat prod = gemm_ref(cols, wmat);
  result.data = prod.data;
  return result;
}

}  // namespace lpforge::linalg

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "lpforge/quant.hpp"

using namespace lpforge::quant;

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

}  // namespace

TEST_CASE("weight quantizer matches hand-evaluated codes") {
  const std::vector<double> w{0.3, 0.6, -0.5};
  const auto q = quantize_weights(w, 2);
  CHECK(q.codes == std::vector<int32_t>{0, 1, -1});
  CHECK(q.scale == 1.0);

  const std::vector<double> endpoints{1.0, -1.0, 0.0};
  CHECK(quantize_weights(endpoints, 2).codes == std::vector<int32_t>{1, -1, 0});

  const std::vector<double> half{0.5};
  const auto q4 = quantize_weights(half, 4);
  CHECK(q4.codes == std::vector<int32_t>{4});
  CHECK(q4.scale == doctest::Approx(1.0 / 7.0));
  CHECK(dequantize(q4)[0] == doctest::Approx(4.0 / 7.0));
}

TEST_CASE("activation quantizer endpoints, ties and clamping") {
  const std::vector<double> ends{0.0, 1.0};
  CHECK(quantize_activations(ends, 8).codes == std::vector<uint32_t>{0, 255});

  const std::vector<double> half{0.5};
  CHECK(quantize_activations(half, 8).codes == std::vector<uint32_t>{128});

  const std::vector<double> outside{-0.7, 2.0};
  CHECK(quantize_activations(outside, 8).codes == std::vector<uint32_t>{0, 255});
}

TEST_CASE("invalid bits and NaN inputs are rejected") {
  const std::vector<double> w{0.1};
  CHECK_THROWS_AS(quantize_weights(w, 1), std::invalid_argument);
  CHECK_THROWS_AS(quantize_weights(w, 33), std::invalid_argument);
  CHECK_THROWS_AS(quantize_activations(w, 0), std::invalid_argument);

  const std::vector<double> bad{0.1, std::nan("")};
  CHECK_THROWS_WITH_AS(quantize_weights(bad, 2), doctest::Contains("index 1"),
                       std::invalid_argument);
  CHECK_THROWS_AS(quantize_activations(bad, 8), std::invalid_argument);
}

TEST_CASE("bits=32 is passthrough") {
  const std::vector<double> w{0.123456, -3.5, 7.0};
  const auto q = quantize_weights(w, 32);
  CHECK(q.passthrough());
  CHECK(dequantize(q) == w);
  const auto qa = quantize_activations(w, 32);
  CHECK(dequantize(qa) == w);
}

TEST_CASE("dequantize values and round-trip idempotence") {
  const std::vector<double> w{0.9, -0.2, 0.4, -0.9};
  for (int bits : {2, 3, 4, 8}) {
    const auto q = quantize_weights(w, bits);
    const auto deq = dequantize(q);
    const auto q2 = quantize_weights(deq, bits);
    CHECK(q2.codes == q.codes);
  }
  const QuantizedActivations qa{{128}, 1.0 / 255.0, 8, {}};
  CHECK(dequantize(qa)[0] == doctest::Approx(128.0 / 255.0));
}

TEST_CASE("round-trip error bound and grid membership") {
  std::mt19937_64 rng(7);
  for (int bits : {2, 4, 8}) {
    std::vector<double> x(500);
    for (double& v : x) v = uniform(rng, -2.0, 2.0);
    const auto q = quantize_weights(x, bits);
    const auto deq = dequantize(q);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double clamped = std::clamp(x[i], -1.0, 1.0);
      CHECK(std::abs(clamped - deq[i]) <= q.scale / 2 + 1e-12);
      CHECK(deq[i] == doctest::Approx(q.codes[i] * q.scale));
    }
  }
}

TEST_CASE("2-bit weights emit only {-1,0,1} over fuzzed reals") {
  std::mt19937_64 rng(42);
  std::vector<double> x(1u << 16);
  for (double& v : x) v = uniform(rng, -100.0, 100.0);
  const auto q = quantize_weights(x, 2);
  for (const int32_t c : q.codes) {
    CHECK(c >= -1);
    CHECK(c <= 1);
  }
}

TEST_CASE("quantizer codes are monotone in the input") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const double x = uniform(rng, -1.5, 1.5);
    const double y = uniform(rng, -1.5, 1.5);
    const double lo = std::min(x, y);
    const double hi = std::max(x, y);
    const std::vector<double> pair{lo, hi};
    const auto qw = quantize_weights(pair, 3);
    CHECK(qw.codes[0] <= qw.codes[1]);
    const auto qa = quantize_activations(pair, 4);
    CHECK(qa.codes[0] <= qa.codes[1]);
  }
}

TEST_CASE("symmetric code range excludes the most negative code") {
  for (int bits : {2, 3, 4, 8}) {
    const int32_t max_code = (1 << (bits - 1)) - 1;
    std::vector<double> x{-1e9, 1e9};
    const auto q = quantize_weights(x, bits);
    CHECK(q.codes[0] == -max_code);
    CHECK(q.codes[1] == max_code);
  }
}

TEST_CASE("ste_grad hand cases") {
  const std::vector<double> up1{2.0, 3.0};
  const std::vector<double> in1{0.5, 1.5};
  CHECK(ste_grad(up1, in1, 0.0, 1.0) == std::vector<double>{2.0, 0.0});

  const std::vector<double> up2{1.0};
  const std::vector<double> in2{-1.0};
  CHECK(ste_grad(up2, in2, -1.0, 1.0) == std::vector<double>{1.0});

  const std::vector<double> up3{5.0, -5.0};
  const std::vector<double> in3{-2.0, 2.0};
  CHECK(ste_grad(up3, in3, -1.0, 1.0) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("ste_grad equals the brute-force indicator mask") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> up(64), in(64);
    for (double& v : up) v = uniform(rng, -4.0, 4.0);
    for (double& v : in) v = uniform(rng, -2.0, 2.0);
    const auto out = ste_grad(up, in, -1.0, 1.0);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double expected = (in[i] >= -1.0 && in[i] <= 1.0) ? up[i] : 0.0;
      CHECK(out[i] == expected);
    }
  }
}

TEST_CASE("ste_grad rejects shape mismatch") {
  const std::vector<double> a{1.0, 2.0};
  const std::vector<double> b{1.0};
  CHECK_THROWS_AS(ste_grad(a, b, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(ste_grad(a, a, 1.0, 1.0), std::invalid_argument);
}

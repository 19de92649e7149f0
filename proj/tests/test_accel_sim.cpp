#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include <json.hpp>

#include "lpforge/accel_sim.hpp"

using namespace lpforge::accel;
using lpforge::linalg::ActivationMatrix;
using lpforge::linalg::CodeMatrix;
using lpforge::linalg::gemm_ternary;
using lpforge::linalg::pack_ternary;

namespace {

CodeMatrix random_ternary(int k, int n, std::mt19937_64& rng) {
  CodeMatrix m(k, n);
  for (auto& v : m.data) v = static_cast<int32_t>(rng() % 3) - 1;
  return m;
}

ActivationMatrix random_acts(int m, int k, std::mt19937_64& rng) {
  ActivationMatrix a(m, k);
  for (auto& v : a.data) v = static_cast<uint8_t>(rng() % 256);
  return a;
}

}  // namespace

TEST_CASE("pe_step is a sign mux with add/sub") {
  CHECK(pe_step(200, -1, 10) == -190);
  CHECK(pe_step(255, 0, 7) == 7);
  CHECK(pe_step(1, 1, 0) == 1);
}

TEST_CASE("schedule_tiles cycle model") {
  const ArrayConfig cfg;
  const auto s1 = schedule_tiles(8, 8, 16, cfg);
  CHECK(s1.tiles.size() == 1);
  CHECK(s1.total_cycles == 38);

  ArrayConfig tiny;
  tiny.rows = tiny.cols = 1;
  const auto s2 = schedule_tiles(1, 1, 1, tiny);
  CHECK(s2.tiles.size() == 1);
  CHECK(s2.total_cycles == 2);

  const auto s3 = schedule_tiles(9, 8, 8, cfg);
  CHECK(s3.tiles.size() == 2);
  CHECK(s3.total_cycles == 60);
}

TEST_CASE("array config validation") {
  ArrayConfig bad;
  bad.rows = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  ArrayConfig neg;
  neg.area_ratio = 0.0;
  CHECK_THROWS_AS(neg.validate(), std::invalid_argument);
  CHECK_THROWS_AS(schedule_tiles(0, 1, 1, ArrayConfig{}), std::invalid_argument);
}

TEST_CASE("simulate is bit-exact against gemm_ternary") {
  std::mt19937_64 rng(2024);
  const ArrayConfig cfg;
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 1 + static_cast<int>(rng() % 24);
    const int n = 1 + static_cast<int>(rng() % 24);
    const int k = 1 + static_cast<int>(rng() % 24);
    const auto a = random_acts(m, k, rng);
    const auto b = pack_ternary(random_ternary(k, n, rng));
    const auto res = simulate(a, b, cfg);
    const auto oracle = gemm_ternary(a, b);
    CHECK(res.output.data == oracle.data);
    CHECK(res.macs == static_cast<int64_t>(m) * n * k);
    CHECK(res.pe_utilization <= 1.0);
  }
}

TEST_CASE("simulate utilization for the 8x8x8 pinned case") {
  std::mt19937_64 rng(1);
  const auto a = random_acts(8, 8, rng);
  const auto b = pack_ternary(random_ternary(8, 8, rng));
  const auto res = simulate(a, b, ArrayConfig{});
  CHECK(res.cycles == 30);
  CHECK(res.pe_utilization == doctest::Approx(512.0 / (30.0 * 64.0)));
}

TEST_CASE("cycle count is data-independent") {
  std::mt19937_64 rng(6);
  const auto a1 = random_acts(13, 21, rng);
  const auto a2 = random_acts(13, 21, rng);
  const auto b1 = pack_ternary(random_ternary(21, 9, rng));
  const auto zero = pack_ternary(CodeMatrix(21, 9));
  const ArrayConfig cfg;
  const auto r1 = simulate(a1, b1, cfg);
  const auto r2 = simulate(a2, zero, cfg);
  CHECK(r1.cycles == r2.cycles);
  for (const int32_t v : r2.output.data) CHECK(v == 0);
}

TEST_CASE("cycles are monotone in each dimension") {
  const ArrayConfig cfg;
  auto cycles = [&](int m, int n, int k) {
    return schedule_tiles(m, n, k, cfg).total_cycles;
  };
  for (int m = 1; m <= 20; m += 4) {
    for (int n = 1; n <= 20; n += 4) {
      for (int k = 1; k <= 20; k += 4) {
        CHECK(cycles(m + 1, n, k) >= cycles(m, n, k));
        CHECK(cycles(m, n + 1, k) >= cycles(m, n, k));
        CHECK(cycles(m, n, k + 1) >= cycles(m, n, k));
      }
    }
  }
}

TEST_CASE("utilization approaches 1 for deep K on a full tile") {
  std::mt19937_64 rng(8);
  const ArrayConfig cfg;
  const int k = 200;
  const auto a = random_acts(cfg.rows, k, rng);
  const auto b = pack_ternary(random_ternary(k, cfg.cols, rng));
  const auto res = simulate(a, b, cfg);
  CHECK(res.pe_utilization >= 0.9);
}

TEST_CASE("json report carries the documented fields") {
  std::mt19937_64 rng(4);
  const auto a = random_acts(8, 16, rng);
  const auto b = pack_ternary(random_ternary(16, 8, rng));
  const ArrayConfig cfg;
  const auto res = simulate(a, b, cfg);
  const auto j = nlohmann::json::parse(report_json(res, 8, 8, 16, cfg));
  CHECK(j["m"] == 8);
  CHECK(j["k"] == 16);
  CHECK(j["tiles"] == 1);
  CHECK(j["cycles"] == 38);
  CHECK(j["macs"] == 1024);
  CHECK(j["reported_area_ratio"] == 15.0);
  CHECK(j["reported_power_ratio"] == 12.0);
  CHECK(j["utilization"] == doctest::Approx(1024.0 / (38.0 * 64.0)));
}

TEST_CASE("simulate rejects mismatched operands") {
  const ActivationMatrix a(4, 5);
  const auto b = pack_ternary(CodeMatrix(6, 3));
  CHECK_THROWS_AS(simulate(a, b, ArrayConfig{}), std::invalid_argument);
}

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lpforge/linalg.hpp"

namespace lpforge::accel {

/// Systolic array shape plus the reported silicon ratios. The ratios are
/// echoed into reports verbatim; nothing is computed from them.
struct ArrayConfig {
  int rows = 8;
  int cols = 8;
  double area_ratio = 15.0;
  double power_ratio = 12.0;

  void validate() const;
};

struct Tile {
  int row0 = 0;
  int col0 = 0;
  int rows = 0;
  int cols = 0;
  int64_t cycles = 0;
};

struct TileSchedule {
  std::vector<Tile> tiles;
  int64_t total_cycles = 0;
  int64_t cycles_per_tile = 0;
};

struct SimResult {
  linalg::AccMatrix output;
  int64_t cycles = 0;
  int64_t macs = 0;
  double pe_utilization = 0.0;
  int64_t tiles = 0;
};

// One PE update: sign mux plus add/sub, never a multiply.
int32_t pe_step(uint8_t a, int b, int32_t acc);

// Output-stationary schedule. Per-tile cycles:
// K (stream) + (R-1) + (Cc-1) (skewed fill) + R (column-serial drain).
// Data-independent: a function of (M, N, K, cfg) only.
TileSchedule schedule_tiles(int m, int n, int k, const ArrayConfig& cfg);

// Bit-exact functional simulation over the schedule; output equals
// gemm_ternary(a, b) and cycles equal the schedule total.
SimResult simulate(const linalg::ActivationMatrix& a,
                   const linalg::PackedTernaryMatrix& b, const ArrayConfig& cfg);

// JSON report: {m, n, k, tiles, cycles, macs, utilization,
// reported_area_ratio, reported_power_ratio}.
std::string report_json(const SimResult& result, int m, int n, int k,
                        const ArrayConfig& cfg);

}  // namespace lpforge::accel

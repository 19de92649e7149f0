#include "lpforge/accel_sim.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace lpforge::accel {

void ArrayConfig::validate() const {
  if (rows < 1 || cols < 1) {
    throw std::invalid_argument("array must have at least 1 row and 1 column");
  }
  if (area_ratio <= 0.0 || power_ratio <= 0.0) {
    throw std::invalid_argument("reported ratios must be strictly positive");
  }
}

int32_t pe_step(uint8_t a, int b, int32_t acc) {
  // Sign mux on the 2-bit weight selects +A / 0 / -A.
  if (b > 0) return acc + a;
  if (b < 0) return acc - a;
  return acc;
}

TileSchedule schedule_tiles(int m, int n, int k, const ArrayConfig& cfg) {
  cfg.validate();
  if (m < 1 || n < 1 || k < 1) {
    throw std::invalid_argument("schedule_tiles requires M, N, K >= 1");
  }
  TileSchedule sched;
  sched.cycles_per_tile =
      static_cast<int64_t>(k) + (cfg.rows - 1) + (cfg.cols - 1) + cfg.rows;
  for (int r0 = 0; r0 < m; r0 += cfg.rows) {
    for (int c0 = 0; c0 < n; c0 += cfg.cols) {
      Tile t;
      t.row0 = r0;
      t.col0 = c0;
      t.rows = std::min(cfg.rows, m - r0);
      t.cols = std::min(cfg.cols, n - c0);
      t.cycles = sched.cycles_per_tile;
      sched.tiles.push_back(t);
    }
  }
  sched.total_cycles = sched.cycles_per_tile * static_cast<int64_t>(sched.tiles.size());
  return sched;
}

SimResult simulate(const linalg::ActivationMatrix& a,
                   const linalg::PackedTernaryMatrix& b, const ArrayConfig& cfg) {
  if (a.cols != b.rows) {
    throw std::invalid_argument("simulate dimension mismatch: A cols " +
                                std::to_string(a.cols) + " vs B rows " +
                                std::to_string(b.rows));
  }
  if (a.cols > linalg::kMaxGemmDepth) {
    throw std::invalid_argument("simulate: K exceeds the accumulator bound");
  }
  const int m = a.rows;
  const int n = b.cols;
  const int k = a.cols;
  const auto sched = schedule_tiles(m, n, k, cfg);

  SimResult res;
  res.output = linalg::AccMatrix(m, n);
  res.cycles = sched.total_cycles;
  res.tiles = static_cast<int64_t>(sched.tiles.size());
  res.macs = static_cast<int64_t>(m) * n * k;
  res.pe_utilization = static_cast<double>(res.macs) /
                       (static_cast<double>(res.cycles) * cfg.rows * cfg.cols);

  // Output-stationary pass per tile: every PE owns one accumulator and sees
  // the full K-deep operand streams. The skew only shifts arrival times, so
  // the functional state walk streams k in order.
  std::vector<int32_t> acc(static_cast<std::size_t>(cfg.rows) * cfg.cols);
  for (const Tile& t : sched.tiles) {
    std::fill(acc.begin(), acc.end(), 0);
    for (int kk = 0; kk < k; ++kk) {
      for (int r = 0; r < t.rows; ++r) {
        const uint8_t a_val = a.at(t.row0 + r, kk);
        for (int c = 0; c < t.cols; ++c) {
          auto& cell = acc[static_cast<std::size_t>(r) * cfg.cols + c];
          cell = pe_step(a_val, b.code_at(kk, t.col0 + c), cell);
        }
      }
    }
    for (int r = 0; r < t.rows; ++r) {
      for (int c = 0; c < t.cols; ++c) {
        res.output.at(t.row0 + r, t.col0 + c) =
            acc[static_cast<std::size_t>(r) * cfg.cols + c];
      }
    }
  }
  return res;
}

std::string report_json(const SimResult& result, int m, int n, int k,
                        const ArrayConfig& cfg) {
  nlohmann::ordered_json j;
  j["m"] = m;
  j["n"] = n;
  j["k"] = k;
  j["tiles"] = result.tiles;
  j["cycles"] = result.cycles;
  j["macs"] = result.macs;
  j["utilization"] = result.pe_utilization;
  j["reported_area_ratio"] = cfg.area_ratio;
  j["reported_power_ratio"] = cfg.power_ratio;
  return j.dump();
}

}  // namespace lpforge::accel

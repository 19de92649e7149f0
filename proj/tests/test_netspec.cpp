#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>

#include "lpforge/netspec.hpp"

using namespace lpforge::netspec;
using lpforge::quant::QuantSpec;

namespace {

std::string read_asset(const std::string& name) {
  std::ifstream in(std::string(LPFORGE_ASSETS_DIR) + "/" + name);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int count_convs(const NetworkSpec& spec) {
  int n = 0;
  for (const auto& l : spec.layers) {
    if (std::holds_alternative<ConvLayer>(l)) ++n;
  }
  return n;
}

int weighted_layers(const NetworkSpec& spec) {
  int n = 0;
  for (const auto& l : spec.layers) {
    if (std::holds_alternative<ConvLayer>(l) || std::holds_alternative<FcLayer>(l)) ++n;
  }
  return n;
}

}  // namespace

TEST_CASE("parse_topology on the grammar example") {
  const auto spec = parse_topology(
      "input 32 32 3\nconv name=c1 out=16 k=3 stride=1 pad=1\nrelu\nfc name=f out=10");
  REQUIRE(spec.layers.size() == 4);
  const auto shapes = infer_shapes(spec);
  CHECK(shapes[1].in.c == 3);  // in_channels inferred
  CHECK(shapes[1].out.c == 16);
  CHECK(shapes[3].out.c == 10);
  CHECK(shapes[3].params == 32 * 32 * 16 * 10);
}

TEST_CASE("parser error paths") {
  CHECK_THROWS_WITH_AS(parse_topology("conv name=c out=4 k=3"),
                       doctest::Contains("input"), ParseError);
  CHECK_THROWS_WITH_AS(
      parse_topology("input 2 2 1\nconv name=c out=4 k=5"),
      doctest::Contains("'c'"), std::invalid_argument);
  CHECK_THROWS_AS(parse_topology("input 8 8 1\nconv name=c out=4"), ParseError);
  CHECK_THROWS_AS(parse_topology("input 8 8 1\nconv name=c out=4 k=3 bogus=1"),
                  ParseError);
  CHECK_THROWS_AS(parse_topology("input 8 8 1\nwhat k=1"), ParseError);
  CHECK_THROWS_AS(parse_topology("input 8 8 1\npool type=median"), ParseError);
  try {
    parse_topology("input 8 8 1\nconv name=c out=x k=3");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 2);
  }
}

TEST_CASE("comments and blank lines are ignored") {
  const auto spec = parse_topology("# header\ninput 8 8 1\n\nrelu # trailing\n");
  CHECK(spec.layers.size() == 2);
}

TEST_CASE("emitted topology round-trips") {
  const auto spec = resnet_cifar(3);
  const auto reparsed = parse_topology(emit_topology(spec), spec.name);
  REQUIRE(reparsed.layers.size() == spec.layers.size());
  CHECK(emit_topology(reparsed) == emit_topology(spec));
  const auto s1 = infer_shapes(spec);
  const auto s2 = infer_shapes(reparsed);
  for (std::size_t i = 0; i < s1.size(); ++i) {
    CHECK(s1[i].params == s2[i].params);
    CHECK(s1[i].fmas == s2[i].fmas);
  }
}

TEST_CASE("resnet_cifar layer counts and stage structure") {
  CHECK(weighted_layers(resnet_cifar(7)) == 44);
  CHECK(weighted_layers(resnet_cifar(9)) == 56);

  const auto r8 = resnet_cifar(1);
  CHECK(weighted_layers(r8) == 8);
  const auto shapes = infer_shapes(r8);
  // Stage maps 32/16/8 with filters 16/32/64.
  std::vector<std::pair<int, int>> conv_dims;
  for (std::size_t i = 0; i < r8.layers.size(); ++i) {
    if (std::holds_alternative<ConvLayer>(r8.layers[i])) {
      conv_dims.push_back({shapes[i].out.h, shapes[i].out.c});
    }
  }
  REQUIRE(conv_dims.size() == 7);
  CHECK(conv_dims[0] == std::pair<int, int>{32, 16});
  CHECK(conv_dims[2] == std::pair<int, int>{32, 16});
  CHECK(conv_dims[3] == std::pair<int, int>{16, 32});
  CHECK(conv_dims[5] == std::pair<int, int>{8, 64});
  CHECK_THROWS_AS(resnet_cifar(0), std::invalid_argument);
}

TEST_CASE("widen doubles the selected prefix of conv layers") {
  const auto base = resnet_cifar(7);
  const auto full = widen(base, 2.0, 1.0);
  const auto bs = infer_shapes(base);
  const auto fs = infer_shapes(full);
  for (std::size_t i = 0; i < base.layers.size(); ++i) {
    if (std::holds_alternative<ConvLayer>(base.layers[i])) {
      CHECK(fs[i].out.c == 2 * bs[i].out.c);
    }
  }

  const auto partial = widen(base, 2.0, 0.3);
  int widened = 0;
  for (std::size_t i = 0; i < base.layers.size(); ++i) {
    if (std::holds_alternative<ConvLayer>(base.layers[i])) {
      const auto& b = std::get<ConvLayer>(base.layers[i]);
      const auto& p = std::get<ConvLayer>(partial.layers[i]);
      if (p.out_channels != b.out_channels) ++widened;
    }
  }
  CHECK(widened == 13);  // ceil(0.3 * 43) conv layers (stem + 42 stage convs)

  const auto identity = widen(base, 1.0, 1.0);
  CHECK(emit_topology(identity) == emit_topology(base));
  CHECK_THROWS_AS(widen(base, 0.5, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(widen(base, 2.0, 0.0), std::invalid_argument);
}

TEST_CASE("footprint single-layer weight arithmetic") {
  const auto spec = parse_topology(
      "input 16 16 16\nconv name=c out=32 k=3 pad=1");
  const auto fp32 = footprint(spec, 1, FootprintMode::kInference, QuantSpec{32, 32});
  CHECK(fp32.weight_bytes == 4608 * 4);
  const auto w2 = footprint(spec, 1, FootprintMode::kInference, QuantSpec{2, 32});
  CHECK(w2.weight_bytes == 1152);
}

TEST_CASE("footprint totals equal the breakdown and scale with batch") {
  const auto spec = resnet_cifar(3);
  for (const auto mode : {FootprintMode::kTraining, FootprintMode::kInference}) {
    const auto rep = footprint(spec, 4, mode, QuantSpec{8, 8});
    int64_t w = 0, a = 0;
    for (const auto& lf : rep.per_layer) {
      w += lf.weight_bytes;
      a += lf.activation_bytes;
    }
    CHECK(w == rep.weight_bytes);
    CHECK(a == rep.activation_bytes);
  }
  const auto b1 = footprint(spec, 1, FootprintMode::kTraining, QuantSpec{32, 32});
  const auto b8 = footprint(spec, 8, FootprintMode::kTraining, QuantSpec{32, 32});
  CHECK(b8.activation_bytes == 8 * b1.activation_bytes);
  CHECK(b8.weight_bytes == b1.weight_bytes);
}

TEST_CASE("bundled specs reproduce the qualitative footprint orderings") {
  {
    const auto spec = parse_topology(read_asset("resnet50.net"), "resnet50");
    const auto train32 = footprint(spec, 32, FootprintMode::kTraining, QuantSpec{32, 32});
    CHECK(train32.activation_bytes > train32.weight_bytes);
    const auto infer1 = footprint(spec, 1, FootprintMode::kInference, QuantSpec{32, 32});
    CHECK(infer1.weight_bytes > infer1.activation_bytes);
  }

  for (const char* asset : {"resnet50.net", "alexnet.net", "r44.net"}) {
    const auto spec = parse_topology(read_asset(asset), asset);
    // Crossover: some batch makes training activations dominate.
    bool crossed = false;
    for (int batch = 1; batch <= 4096 && !crossed; batch *= 2) {
      const auto rep = footprint(spec, batch, FootprintMode::kTraining, QuantSpec{32, 32});
      crossed = rep.activation_bytes > rep.weight_bytes;
    }
    CHECK(crossed);
  }
}

TEST_CASE("compute_cost hand case and footnote weighting") {
  const auto spec = parse_topology("input 32 32 16\nconv name=c out=16 k=3 pad=1");
  const auto full = compute_cost(spec, QuantSpec{32, 32});
  CHECK(full.total_fmas == 2359296);
  CHECK(full.cost == 2359296LL * 64);
  const auto low = compute_cost(spec, QuantSpec{2, 8});
  CHECK(low.total_fmas == 2359296);
  CHECK(low.cost == 2359296LL * 10);
}

TEST_CASE("compute_cost is additive and widening squares interior fmas") {
  const auto chain = parse_topology(
      "input 16 16 4\n"
      "conv name=a out=8 k=3 pad=1\n"
      "conv name=b out=8 k=3 pad=1\n"
      "conv name=c out=8 k=3 pad=1");
  const auto base = compute_cost(chain, QuantSpec{32, 32});
  int64_t sum = 0;
  for (const auto& lc : base.per_layer) sum += lc.cost;
  CHECK(sum == base.cost);

  // Widening all layers multiplies the middle conv's FMAs by factor^2:
  // its producer widens its in_channels and itself widens out_channels.
  const auto wide = compute_cost(widen(chain, 2.0, 1.0), QuantSpec{32, 32});
  CHECK(wide.per_layer[1].fmas == 4 * base.per_layer[1].fmas);
}

TEST_CASE("widened low-precision cost beats the fp32 baseline") {
  for (const int n : {7, 9}) {
    const auto base = resnet_cifar(n);
    const auto wide = widen(base, 2.0, 1.0);
    const auto base_cost = compute_cost(base, QuantSpec{32, 32});
    const auto wide_cost = compute_cost(wide, QuantSpec{2, 8});
    const double ratio = static_cast<double>(wide_cost.cost) /
                         static_cast<double>(base_cost.cost);
    CHECK(ratio < 1.0);
  }
}

TEST_CASE("report serializers emit stable fields") {
  const auto spec = resnet_cifar(1);
  const auto rep = footprint(spec, 2, FootprintMode::kTraining, QuantSpec{2, 8});
  const auto json_text = footprint_json(rep, spec);
  CHECK(json_text.find("\"weight_bytes\"") != std::string::npos);
  CHECK(footprint_table(rep).find("total") != std::string::npos);

  const auto cost = compute_cost(spec, QuantSpec{2, 8});
  CHECK(cost_json(cost, spec).find("\"total_fmas\"") != std::string::npos);
  CHECK(cost_table(cost).find("total") != std::string::npos);
}

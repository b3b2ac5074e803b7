#include <catch_amalgamated.hpp>

#include "rcnoc/config.hpp"

using namespace rcnoc;

TEST_CASE("minimal config expands to full defaults", "[config]") {
  SimConfig cfg = parse_config_text(R"({"scheme": {"kind": "RC"}})");
  CHECK(cfg.scheme.kind == Scheme::Rc);
  CHECK(cfg.scheme.rc_capacity == 4);
  CHECK(cfg.topology.chiplets.size() == 5);
  CHECK(cfg.topology.chiplets[0].vc_count == 2);
  CHECK(cfg.topology.chiplets[0].vc_depth == 4);
  CHECK(cfg.traffic.packet_flits == 8);
  auto topo = build_soc(cfg.topology);
  CHECK(topo->node_count == 68);
  CHECK(topo->router_count == 84);
}

TEST_CASE("vcsep requires even vc_count", "[config]") {
  try {
    parse_config_text(R"({
      "scheme": {"kind": "VCSEP"},
      "topology": {"chiplets": [
        {"name": "a", "width": 4, "height": 4, "vc_count": 3},
        {"name": "b", "width": 4, "height": 4, "vc_count": 3}
      ]}
    })");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("vc_count must be even") != std::string::npos);
  }
}

TEST_CASE("rc_capacity zero is rejected", "[config]") {
  CHECK_THROWS_AS(parse_config_text(R"({"scheme": {"kind": "RC", "rc_capacity": 0}})"),
                  ConfigError);
}

TEST_CASE("unknown keys are rejected with their path", "[config]") {
  try {
    parse_config_text(R"({"traffic": {"ratee": 0.2}})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("traffic.ratee") != std::string::npos);
    CHECK(std::string(e.what()).find("unknown key") != std::string::npos);
  }
}

TEST_CASE("chiplet count shorthand replicates specs", "[config]") {
  SimConfig cfg = parse_config_text(R"({
    "topology": {"chiplets": [
      {"name": "gpu", "width": 4, "height": 4, "count": 4},
      {"name": "cpu", "width": 2, "height": 2}
    ]}
  })");
  REQUIRE(cfg.topology.chiplets.size() == 5);
  CHECK(cfg.topology.chiplets[0].name == "gpu0");
  CHECK(cfg.topology.chiplets[3].name == "gpu3");
  CHECK(cfg.topology.chiplets[4].name == "cpu");
  // default 2x2 boundaries are all four nodes
  CHECK(cfg.topology.chiplets[4].boundary_routers == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("serialize(load(x)) is idempotent after normalization", "[config]") {
  SimConfig cfg = parse_config_text(R"({
    "scheme": {"kind": "ITB", "itb_capacity": 2},
    "traffic": {"rate": 0.25, "pattern": "BIT_COMPLEMENT"}
  })");
  std::string one = serialize_config(cfg);
  SimConfig cfg2 = parse_config_text(one);
  std::string two = serialize_config(cfg2);
  CHECK(one == two);
}

TEST_CASE("overrides follow dotted paths", "[config]") {
  SimConfig cfg = parse_config_text(
      R"({
        "traffic": {"rate": 0.1},
        "topology": {"chiplets": [
          {"name": "gpu", "width": 4, "height": 4, "count": 2},
          {"name": "cpu", "width": 2, "height": 2}
        ]}
      })",
      {"traffic.rate=0.3", "scheme.kind=\"MTR\"", "topology.chiplets.0.vc_count=4"});
  CHECK(cfg.traffic.rate == Catch::Approx(0.3));
  CHECK(cfg.scheme.kind == Scheme::Mtr);
  // the override hits the first declared spec, which replicates into gpu0/gpu1
  CHECK(cfg.topology.chiplets[0].vc_count == 4);
  CHECK(cfg.topology.chiplets[1].vc_count == 4);
  CHECK(cfg.topology.chiplets[2].vc_count == 2);
}

TEST_CASE("tsv_map round trips through chiplet names", "[config]") {
  SimConfig cfg = parse_config_text(R"({
    "topology": {
      "chiplets": [
        {"name": "a", "width": 4, "height": 4, "boundaries": [2, 14]},
        {"name": "b", "width": 4, "height": 4, "boundaries": [1, 13]}
      ],
      "interposer": {"width": 2, "height": 2},
      "tsv_map": {"a.2": 0, "a.14": 2, "b.1": 1, "b.13": 3}
    }
  })");
  auto topo = build_soc(cfg.topology);
  CHECK(topo->tsv_interposer(0, 2) == topo->interposer_router(0));
  CHECK(topo->tsv_interposer(1, 13) == topo->interposer_router(3));
  std::string s1 = serialize_config(cfg);
  SimConfig cfg2 = parse_config_text(s1);
  CHECK(serialize_config(cfg2) == s1);
}

TEST_CASE("bad values report key paths", "[config]") {
  CHECK_THROWS_AS(parse_config_text(R"({"scheme": {"kind": "BOGUS"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"traffic": {"rate": 1.5}})"), ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"traffic": {"packet_flits": 0}})"), ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"(not json)"), Json::parse_error);
}

#pragma once

#include <string>

#include "rcnoc/config.hpp"

namespace rcnoc::test {

// Two 4x4 chiplets bridged by a 2x2 interposer. Chiplet c0 has boundaries
// {2,14} on its left-facing column, c1 has {1,13}; TSVs pin c0 to the left
// interposer column and c1 to the right.
inline SimConfig twin_chiplet_config() {
  SimConfig cfg;
  cfg.topology.chiplets.clear();
  ChipletSpec c0;
  c0.name = "c0";
  c0.width = c0.height = 4;
  c0.boundary_routers = {2, 14};
  ChipletSpec c1 = c0;
  c1.name = "c1";
  c1.boundary_routers = {1, 13};
  cfg.topology.chiplets = {c0, c1};
  cfg.topology.interposer.width = 2;
  cfg.topology.interposer.height = 2;
  cfg.topology.tsv_map[{0, 2}] = 0;
  cfg.topology.tsv_map[{0, 14}] = 2;
  cfg.topology.tsv_map[{1, 1}] = 1;
  cfg.topology.tsv_map[{1, 13}] = 3;
  cfg.scheme.kind = Scheme::None;
  return cfg;
}

inline SimConfig default_soc_config(Scheme s = Scheme::Rc) {
  SimConfig cfg;
  cfg.topology = default_topology();
  cfg.scheme.kind = s;
  return cfg;
}

}  // namespace rcnoc::test

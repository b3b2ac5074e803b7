#pragma once

#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rcnoc/types.hpp"

namespace rcnoc {

struct TrafficSpec {
  TrafficPattern pattern = TrafficPattern::UniformRandom;
  double rate = 0.1;      // flits/node/cycle
  int packet_flits = 8;   // flits per data packet
  uint64_t seed = 1;
  Cycle warmup = 10000;
  Cycle measure = 100000;
  Cycle drain_max = 2000000;
  std::string scenario_file;  // when set, replaces the synthetic pattern
};

// One deterministic stream per node so node-count changes do not perturb
// other nodes' draws.
inline std::mt19937_64 node_rng(uint64_t master_seed, NodeId node) {
  return std::mt19937_64(splitmix64(master_seed * 0x9e3779b97f4a7c15ull + 0x1000 + node));
}

// Library distributions are implementation-defined; these keep draws
// bit-stable across standard libraries.
inline double rng_u01(std::mt19937_64& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; }

inline uint32_t rng_below(std::mt19937_64& g, uint32_t n) {
  uint64_t x, r;
  do {
    x = g();
    r = x % n;
  } while (x - r > UINT64_MAX - (n - 1));
  return static_cast<uint32_t>(r);
}

inline bool bernoulli(double p, std::mt19937_64& g) { return rng_u01(g) < p; }

// One Bernoulli trial per node per cycle at p = rate / packet_flits.
inline bool injection_fires(const TrafficSpec& spec, std::mt19937_64& g) {
  return bernoulli(spec.rate / spec.packet_flits, g);
}

inline int id_bits(int node_count) {
  int b = 0;
  while ((1 << b) < node_count) ++b;
  return b == 0 ? 1 : b;
}

// Destination patterns over canonical node ids. Permutations act on the id's
// bit string of width ceil(log2 node_count), fold modulo node_count, and remap
// self-destinations to (dst+1) mod node_count.
inline NodeId gen_destination(TrafficPattern pattern, NodeId src, int node_count,
                              std::mt19937_64& rng) {
  if (node_count < 2) return src;
  if (pattern == TrafficPattern::UniformRandom) {
    int d = static_cast<int>(rng_below(rng, static_cast<uint32_t>(node_count - 1)));
    return d >= src ? d + 1 : d;
  }
  const int bits = id_bits(node_count);
  const uint32_t mask = (bits >= 32) ? 0xffffffffu : ((1u << bits) - 1);
  uint32_t s = static_cast<uint32_t>(src);
  uint32_t d = 0;
  switch (pattern) {
    case TrafficPattern::BitComplement:
      d = (~s) & mask;
      break;
    case TrafficPattern::Transpose: {
      int half = bits / 2;
      uint32_t lo = s & ((1u << half) - 1);
      uint32_t hi = s >> (bits - half);
      uint32_t mid = (s >> half) & ((1u << (bits - 2 * half)) - 1);
      d = (lo << (bits - half)) | (mid << half) | hi;
      break;
    }
    case TrafficPattern::BitReverse: {
      for (int i = 0; i < bits; ++i)
        if (s & (1u << i)) d |= 1u << (bits - 1 - i);
      break;
    }
    case TrafficPattern::Shuffle:
      d = ((s << 1) | (s >> (bits - 1))) & mask;
      break;
    case TrafficPattern::Tornado:
      d = (s + static_cast<uint32_t>((node_count + 1) / 2 - 1)) % node_count;
      break;
    case TrafficPattern::Neighbor:
      d = (s + 1) % node_count;
      break;
    default:
      break;
  }
  d %= static_cast<uint32_t>(node_count);
  if (static_cast<NodeId>(d) == src) d = (d + 1) % node_count;
  return static_cast<NodeId>(d);
}

// Adversarial replay record: inject `count` packets src->dst, one per cycle,
// starting at start_cycle.
struct ScenarioEntry {
  NodeId src = 0;
  NodeId dst = 0;
  Cycle start_cycle = 0;
  int count = 1;
};

inline std::vector<ScenarioEntry> parse_scenario(std::istream& in) {
  std::vector<ScenarioEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t h = line.find('#');
    if (h != std::string::npos) line.erase(h);
    bool blank = true;
    for (char c : line)
      if (!isspace(static_cast<unsigned char>(c))) blank = false;
    if (blank) continue;
    for (char& c : line)
      if (c == ',') c = ' ';
    std::istringstream ls(line);
    ScenarioEntry e;
    if (!(ls >> e.src >> e.dst >> e.start_cycle >> e.count))
      throw std::runtime_error("scenario line " + std::to_string(lineno) +
                               ": expected src,dst,start_cycle,count");
    out.push_back(e);
  }
  return out;
}

inline std::vector<ScenarioEntry> load_scenario(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open scenario file: " + path);
  return parse_scenario(f);
}

}  // namespace rcnoc

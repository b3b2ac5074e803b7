#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace rcnoc {

using NodeId = int32_t;    // canonical chiplet-node id, [0, node_count)
using RouterId = int32_t;  // chiplet routers first (same order as nodes), then interposer
using PacketId = uint32_t;
using Cycle = int64_t;

inline constexpr PacketId kNoPacket = 0xffffffffu;
inline constexpr RouterId kNoRouter = -1;

enum class PortKind : uint8_t { North = 0, South = 1, East = 2, West = 3, Local = 4, Tsv = 5 };

enum class RoutingPolicy : uint8_t { Xy, Yx, AdaptiveXyYx };
enum class Scheme : uint8_t { None, Rc, Mtr, VcSep, Itb };
enum class TrafficPattern : uint8_t {
  UniformRandom,
  BitComplement,
  Transpose,
  BitReverse,
  Shuffle,
  Tornado,
  Neighbor
};
enum class FlitKind : uint8_t { Head, Body, Tail, HeadTail };
enum class PacketClass : uint8_t { Control, Data };
enum class Verdict : uint8_t { Live, Deadlock, Starvation };

struct Flit {
  PacketId packet = kNoPacket;
  FlitKind kind = FlitKind::Head;
  uint16_t seq = 0;

  bool is_head() const { return kind == FlitKind::Head || kind == FlitKind::HeadTail; }
  bool is_tail() const { return kind == FlitKind::Tail || kind == FlitKind::HeadTail; }
};

// Half-open VC index range [lo, hi) on a downstream input port.
struct VcRange {
  uint8_t lo = 0;
  uint8_t hi = 0;
  bool contains(int v) const { return v >= lo && v < hi; }
  int size() const { return hi - lo; }
};

// Unrecoverable engine invariant violation (credit underflow, VC overflow,
// double crossbar grant, RCB admission without a free fifo, ...).
struct HardFault : std::runtime_error {
  explicit HardFault(const std::string& msg) : std::runtime_error(msg) {}
};

inline void engine_check(bool ok, const char* msg) {
  if (!ok) throw HardFault(msg);
}

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::None: return "NONE";
    case Scheme::Rc: return "RC";
    case Scheme::Mtr: return "MTR";
    case Scheme::VcSep: return "VCSEP";
    case Scheme::Itb: return "ITB";
  }
  return "?";
}

inline const char* to_string(TrafficPattern p) {
  switch (p) {
    case TrafficPattern::UniformRandom: return "UNIFORM_RANDOM";
    case TrafficPattern::BitComplement: return "BIT_COMPLEMENT";
    case TrafficPattern::Transpose: return "TRANSPOSE";
    case TrafficPattern::BitReverse: return "BIT_REVERSE";
    case TrafficPattern::Shuffle: return "SHUFFLE";
    case TrafficPattern::Tornado: return "TORNADO";
    case TrafficPattern::Neighbor: return "NEIGHBOR";
  }
  return "?";
}

inline const char* to_string(RoutingPolicy p) {
  switch (p) {
    case RoutingPolicy::Xy: return "XY";
    case RoutingPolicy::Yx: return "YX";
    case RoutingPolicy::AdaptiveXyYx: return "ADAPTIVE_XY_YX";
  }
  return "?";
}

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Live: return "LIVE";
    case Verdict::Deadlock: return "DEADLOCK";
    case Verdict::Starvation: return "STARVATION";
  }
  return "?";
}

inline const char* to_string(PortKind k) {
  switch (k) {
    case PortKind::North: return "N";
    case PortKind::South: return "S";
    case PortKind::East: return "E";
    case PortKind::West: return "W";
    case PortKind::Local: return "LOCAL";
    case PortKind::Tsv: return "TSV";
  }
  return "?";
}

inline bool parse_enum(const std::string& s, Scheme& out) {
  for (Scheme v : {Scheme::None, Scheme::Rc, Scheme::Mtr, Scheme::VcSep, Scheme::Itb})
    if (s == to_string(v)) { out = v; return true; }
  return false;
}

inline bool parse_enum(const std::string& s, TrafficPattern& out) {
  for (TrafficPattern v :
       {TrafficPattern::UniformRandom, TrafficPattern::BitComplement, TrafficPattern::Transpose,
        TrafficPattern::BitReverse, TrafficPattern::Shuffle, TrafficPattern::Tornado,
        TrafficPattern::Neighbor})
    if (s == to_string(v)) { out = v; return true; }
  return false;
}

inline bool parse_enum(const std::string& s, RoutingPolicy& out) {
  for (RoutingPolicy v : {RoutingPolicy::Xy, RoutingPolicy::Yx, RoutingPolicy::AdaptiveXyYx})
    if (s == to_string(v)) { out = v; return true; }
  return false;
}

inline bool parse_enum(const std::string& s, PortKind& out) {
  for (PortKind v : {PortKind::North, PortKind::South, PortKind::East, PortKind::West,
                     PortKind::Local, PortKind::Tsv})
    if (s == to_string(v)) { out = v; return true; }
  return false;
}

}  // namespace rcnoc

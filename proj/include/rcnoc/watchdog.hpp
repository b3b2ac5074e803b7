#pragma once

#include <map>
#include <string>
#include <vector>

#include "rcnoc/baselines.hpp"
#include "rcnoc/network.hpp"

namespace rcnoc {

// Wait-for graph over occupied resources: input VCs holding a blocked packet
// and rc_buffer fifos waiting on TSV credits. A granted move emits no edge.
struct WaitForGraph {
  struct Vertex {
    RouterId router = kNoRouter;
    int port = -1;   // -1 marks an rc_buffer fifo
    int vc = -1;     // fifo index for rc_buffer vertices
    PacketId owner = kNoPacket;
    Cycle last_move = 0;
  };
  std::vector<Vertex> v;
  std::vector<std::vector<int>> adj;
  std::map<uint64_t, int> index;

  static uint64_t key(RouterId r, int port, int vc) {
    return (static_cast<uint64_t>(static_cast<uint32_t>(r)) << 16) |
           (static_cast<uint64_t>(static_cast<uint16_t>(port + 1)) << 8) |
           static_cast<uint64_t>(static_cast<uint8_t>(vc));
  }

  int vertex(RouterId r, int port, int vc, PacketId owner, Cycle last_move) {
    uint64_t k = key(r, port, vc);
    auto it = index.find(k);
    if (it != index.end()) return it->second;
    int id = static_cast<int>(v.size());
    index.emplace(k, id);
    v.push_back({r, port, vc, owner, last_move});
    adj.emplace_back();
    return id;
  }

  std::string name(const SocTopology& topo, int id) const {
    const Vertex& vx = v[static_cast<size_t>(id)];
    if (vx.port < 0)
      return topo.router_name(vx.router) + ".rcb[" + std::to_string(vx.vc) + "]";
    const RouterInfo& ri = topo.routers[static_cast<size_t>(vx.router)];
    return topo.router_name(vx.router) + "." +
           to_string(ri.ports[static_cast<size_t>(vx.port)].kind) + ".vc" +
           std::to_string(vx.vc);
  }
};

// Builds the current wait-for relation from pipeline state. `stagnant_for`
// keeps only vertices whose holder has not moved a flit for that many cycles
// (0 keeps everything).
inline WaitForGraph snapshot_wfg(const Network& net, Cycle stagnant_for = 0) {
  WaitForGraph g;
  const SocTopology& topo = *net.topo;
  const Cycle now = net.now;
  auto stale = [&](Cycle last_move) { return now - last_move >= stagnant_for; };

  // pass 1: vertices for every occupied (and stagnant-enough) resource
  for (RouterId r = 0; r < topo.router_count; ++r) {
    const Network::RouterSt& rs = net.routers[static_cast<size_t>(r)];
    for (size_t port = 0; port < rs.in.size(); ++port)
      for (size_t vc = 0; vc < rs.in[port].size(); ++vc) {
        const Network::InVc& ivc = rs.in[port][vc];
        if (ivc.count > 0 && stale(ivc.last_move))
          g.vertex(r, static_cast<int>(port), static_cast<int>(vc), ivc.owner, ivc.last_move);
      }
  }
  for (size_t i = 0; i < net.rcbs.size(); ++i) {
    const RcBuffer& rcb = net.rcbs[i];
    RouterId br = net.rcb_router[i];
    for (size_t f = 0; f < rcb.fifos.size(); ++f)
      if (rcb.fifos[f].owner != kNoPacket && rcb.fifos[f].count > 0 &&
          stale(rcb.fifos[f].last_move))
        g.vertex(br, -1, static_cast<int>(f), rcb.fifos[f].owner, rcb.fifos[f].last_move);
  }

  // pass 2: edges from blocked heads to the occupied resources they request
  for (RouterId r = 0; r < topo.router_count; ++r) {
    const Network::RouterSt& rs = net.routers[static_cast<size_t>(r)];
    for (size_t port = 0; port < rs.in.size(); ++port) {
      for (size_t vc = 0; vc < rs.in[port].size(); ++vc) {
        const Network::InVc& ivc = rs.in[port][vc];
        if (ivc.count == 0 || !stale(ivc.last_move)) continue;
        auto it = g.index.find(WaitForGraph::key(r, static_cast<int>(port), static_cast<int>(vc)));
        if (it == g.index.end()) continue;
        const int self = it->second;
        if (ivc.st == Network::VcState::VaWait) {
          const Network::OutPort& op = rs.out[static_cast<size_t>(ivc.out_port)];
          if (op.is_sink || op.to_rcb) continue;  // sinks and the RCB always drain
          for (int dv = ivc.range.lo; dv < ivc.range.hi; ++dv) {
            auto jt = g.index.find(WaitForGraph::key(op.peer, op.peer_port, dv));
            if (jt != g.index.end()) g.adj[static_cast<size_t>(self)].push_back(jt->second);
          }
        } else if (ivc.st == Network::VcState::Active) {
          const Network::OutPort& op = rs.out[static_cast<size_t>(ivc.out_port)];
          if (op.is_sink) continue;
          if (op.st_in_port == static_cast<int>(port) && op.st_in_vc == static_cast<int>(vc))
            continue;  // granted, moving next cycle
          if (op.to_rcb) continue;
          auto jt = g.index.find(WaitForGraph::key(op.peer, op.peer_port, ivc.out_vc));
          if (jt != g.index.end()) g.adj[static_cast<size_t>(self)].push_back(jt->second);
        }
      }
    }
  }
  for (size_t i = 0; i < net.rcbs.size(); ++i) {
    const RcBuffer& rcb = net.rcbs[i];
    RouterId br = net.rcb_router[i];
    for (size_t f = 0; f < rcb.fifos.size(); ++f) {
      const RcBuffer::Fifo& q = rcb.fifos[f];
      if (q.owner == kNoPacket || q.count == 0 || !stale(q.last_move)) continue;
      auto it = g.index.find(WaitForGraph::key(br, -1, static_cast<int>(f)));
      if (it == g.index.end()) continue;
      const int self = it->second;
      auto link = [&](int dv) {
        auto jt = g.index.find(WaitForGraph::key(rcb.tsv_peer, rcb.tsv_peer_port, dv));
        if (jt != g.index.end()) g.adj[static_cast<size_t>(self)].push_back(jt->second);
      };
      if (!q.has_vc) {
        for (size_t dv = 0; dv < rcb.down.size(); ++dv) link(static_cast<int>(dv));
      } else if (rcb.down[static_cast<size_t>(q.vc)].credits <= 0) {
        link(q.vc);
      }
    }
  }
  return g;
}

struct WatchdogVerdict {
  Verdict verdict = Verdict::Live;
  std::vector<std::string> cycle_channels;  // resource names of a deadlocked cycle
  PacketId starved_packet = kNoPacket;
  Cycle at_cycle = -1;
};

// Deadlock oracle: a cycle among resources whose holders have all been
// motionless for the persistence window is a deadlock; a long-stalled packet
// without such a cycle is starvation.
class Watchdog {
 public:
  Cycle window = 10000;
  Cycle starvation_window = 50000;

  WatchdogVerdict check(const Network& net) {
    WatchdogVerdict out;
    out.at_cycle = net.now;
    WaitForGraph g = snapshot_wfg(net, window);
    std::vector<int> cyc = find_cycle(g.adj);
    if (!cyc.empty()) {
      out.verdict = Verdict::Deadlock;
      for (int v : cyc) out.cycle_channels.push_back(g.name(*net.topo, v));
      return out;
    }
    // starvation: an in-network packet or an ITB custody entry stuck too long
    for (RouterId r = 0; r < net.topo->router_count; ++r) {
      const Network::RouterSt& rs = net.routers[static_cast<size_t>(r)];
      for (const auto& port : rs.in)
        for (const Network::InVc& vc : port)
          if (vc.count > 0 && net.now - vc.last_move >= starvation_window) {
            out.verdict = Verdict::Starvation;
            out.starved_packet = vc.owner;
            return out;
          }
    }
    for (const Network::NiSt& ni : net.nis) {
      for (const auto& [id, cu] : ni.custody) {
        if (net.now - cu.since >= starvation_window) {
          out.verdict = Verdict::Starvation;
          out.starved_packet = id;
          return out;
        }
      }
    }
    return out;
  }
};

}  // namespace rcnoc

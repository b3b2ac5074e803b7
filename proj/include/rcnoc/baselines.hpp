#pragma once

#include <array>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "rcnoc/topology.hpp"

namespace rcnoc {

// ---------------------------------------------------------------------------
// VC separation

// Outbound-leg packets (source chiplet + interposer) take the first half of
// the VCs; inbound-leg and intra-chiplet packets take the second half.
inline VcRange vcsep_vc_range(bool inter_chiplet, bool at_dest_chiplet, int vc_count) {
  uint8_t half = static_cast<uint8_t>(vc_count / 2);
  if (inter_chiplet && !at_dest_chiplet) return {0, half};
  return {half, static_cast<uint8_t>(vc_count)};
}

// ---------------------------------------------------------------------------
// Turn restrictions

enum class Leg : uint8_t { Outbound, Inbound, Transit, Intra };

struct TurnRestrictionSet {
  // key = router * 36 + in_kind * 6 + out_kind; interposer turns live in
  // `outbound` (there is a single transit class in the interposer)
  std::set<uint32_t> outbound, inbound;

  static uint32_t key(RouterId r, PortKind in, PortKind out) {
    return static_cast<uint32_t>(r) * 36 + static_cast<uint32_t>(in) * 6 +
           static_cast<uint32_t>(out);
  }
  bool forbids(Leg leg, RouterId r, PortKind in, PortKind out) const {
    if (leg == Leg::Intra) return false;
    const std::set<uint32_t>& s = (leg == Leg::Inbound) ? inbound : outbound;
    return s.count(key(r, in, out)) > 0;
  }
  void add(Leg leg, RouterId r, PortKind in, PortKind out) {
    if (leg == Leg::Inbound)
      inbound.insert(key(r, in, out));
    else
      outbound.insert(key(r, in, out));
  }
  size_t size() const { return outbound.size() + inbound.size(); }
};

inline TurnRestrictionSet load_restrictions(const std::string& path, const SocTopology& topo) {
  std::ifstream f(path);
  if (!f) throw TopologyError("cannot open restriction file: " + path);
  TurnRestrictionSet out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
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
    std::string chiplet, ink, outk, leg;
    int local = -1;
    if (!(ls >> chiplet >> local >> ink >> outk >> leg))
      throw TopologyError("restriction line " + std::to_string(lineno) +
                          ": expected chiplet,router,in_port,out_port,leg");
    RouterId r = kNoRouter;
    if (chiplet == "interposer") {
      r = topo.interposer_router(local);
    } else {
      for (size_t ci = 0; ci < topo.chiplets.size(); ++ci)
        if (topo.chiplets[ci].spec.name == chiplet)
          r = topo.router_at(static_cast<int>(ci), local);
      if (r == kNoRouter)
        throw TopologyError("restriction line " + std::to_string(lineno) + ": unknown chiplet '" +
                            chiplet + "'");
    }
    PortKind pin, pout;
    if (!parse_enum(ink, pin) || !parse_enum(outk, pout))
      throw TopologyError("restriction line " + std::to_string(lineno) + ": bad port kind");
    Leg l;
    if (leg == "outbound" || chiplet == "interposer")
      l = Leg::Outbound;
    else if (leg == "inbound")
      l = Leg::Inbound;
    else
      throw TopologyError("restriction line " + std::to_string(lineno) + ": leg must be " +
                          "outbound or inbound");
    out.add(l, r, pin, pout);
  }
  return out;
}

inline std::string save_restrictions(const TurnRestrictionSet& r, const SocTopology& topo) {
  std::ostringstream out;
  auto emit = [&](const std::set<uint32_t>& s, const char* leg) {
    for (uint32_t k : s) {
      RouterId router = static_cast<RouterId>(k / 36);
      PortKind in = static_cast<PortKind>((k / 6) % 6);
      PortKind o = static_cast<PortKind>(k % 6);
      const RouterInfo& ri = topo.routers[static_cast<size_t>(router)];
      std::string cname =
          ri.chiplet < 0 ? "interposer" : topo.chiplets[static_cast<size_t>(ri.chiplet)].spec.name;
      out << cname << "," << ri.local << "," << to_string(in) << "," << to_string(o) << "," << leg
          << "\n";
    }
  };
  emit(r.outbound, "outbound");
  emit(r.inbound, "inbound");
  return out.str();
}

// ---------------------------------------------------------------------------
// Restriction-aware shortest-path tables over (router, entry-kind) states

namespace mtrdetail {

inline PortKind opposite(PortKind k) {
  switch (k) {
    case PortKind::North: return PortKind::South;
    case PortKind::South: return PortKind::North;
    case PortKind::East: return PortKind::West;
    case PortKind::West: return PortKind::East;
    default: return k;
  }
}

// Subnet-local BFS producing next-hop kinds for one target and one exit kind.
// States are (local router, entry kind); a route may pass through the target
// and re-enter it when the direct exit turn is forbidden.
struct KindTable {
  int w = 0, h = 0;
  std::vector<int8_t> next;   // (local * 6 + in_kind) -> out PortKind or -1
  std::vector<int16_t> dist;  // mesh hops to exit, -1 unreachable

  int8_t next_kind(int local, PortKind in) const {
    return next[static_cast<size_t>(local * 6 + static_cast<int>(in))];
  }
};

inline int neighbor_local(int w, int h, int local, PortKind dir) {
  int x = local % w, y = local / w;
  switch (dir) {
    case PortKind::North: return (y + 1 < h) ? local + w : -1;
    case PortKind::South: return (y > 0) ? local - w : -1;
    case PortKind::East: return (x + 1 < w) ? local + 1 : -1;
    case PortKind::West: return (x > 0) ? local - 1 : -1;
    default: return -1;
  }
}

inline KindTable build_kind_table(const TurnRestrictionSet& r, Leg leg, int w, int h,
                                  RouterId first_router, int target_local, PortKind exit_kind) {
  KindTable t;
  t.w = w;
  t.h = h;
  const int n = w * h * 6;
  t.next.assign(static_cast<size_t>(n), -1);
  t.dist.assign(static_cast<size_t>(n), -1);
  std::vector<int> frontier, nextf;
  for (int k = 0; k < 6; ++k) {
    RouterId gr = first_router + target_local;
    if (!r.forbids(leg, gr, static_cast<PortKind>(k), exit_kind)) {
      int s = target_local * 6 + k;
      t.dist[static_cast<size_t>(s)] = 0;
      t.next[static_cast<size_t>(s)] = static_cast<int8_t>(exit_kind);
      frontier.push_back(s);
    }
  }
  int d = 0;
  while (!frontier.empty()) {
    ++d;
    nextf.clear();
    for (int s : frontier) {
      int local = s / 6;
      PortKind entry = static_cast<PortKind>(s % 6);
      // predecessor moved toward `local` arriving with `entry`: it sits at the
      // neighbor in direction `entry` and left through opposite(entry)
      if (entry == PortKind::Local || entry == PortKind::Tsv) continue;
      int p = neighbor_local(w, h, local, entry);
      if (p < 0) continue;
      PortKind out = opposite(entry);
      for (int k = 0; k < 6; ++k) {
        int ps = p * 6 + k;
        if (t.dist[static_cast<size_t>(ps)] >= 0) continue;
        if (r.forbids(leg, first_router + p, static_cast<PortKind>(k), out)) continue;
        t.dist[static_cast<size_t>(ps)] = static_cast<int16_t>(d);
        nextf.push_back(ps);
      }
    }
    frontier.swap(nextf);
  }
  // forward selection with lowest-kind tie-break
  for (int local = 0; local < w * h; ++local) {
    for (int k = 0; k < 6; ++k) {
      int s = local * 6 + k;
      if (t.dist[static_cast<size_t>(s)] <= 0) continue;  // exit or unreachable
      for (int out = 0; out < 4; ++out) {
        PortKind ok = static_cast<PortKind>(out);
        int nb = neighbor_local(w, h, local, ok);
        if (nb < 0) continue;
        if (r.forbids(leg, first_router + local, static_cast<PortKind>(k), ok)) continue;
        int ns = nb * 6 + static_cast<int>(opposite(ok));
        if (t.dist[static_cast<size_t>(ns)] == t.dist[static_cast<size_t>(s)] - 1) {
          t.next[static_cast<size_t>(s)] = static_cast<int8_t>(out);
          break;
        }
      }
    }
  }
  return t;
}

}  // namespace mtrdetail

// Deterministic restriction-aware routing relation: per-chiplet outbound
// tables toward each boundary, inbound tables toward each node, and transit
// tables across the interposer toward each TSV-hosting router. Intra-chiplet
// traffic keeps the chiplet's own policy and is never restricted.
struct MtrRouting {
  TurnRestrictionSet restrictions;
  // chiplet -> (boundary local -> table)
  std::vector<std::map<int, mtrdetail::KindTable>> out_tables;
  // chiplet -> (dst local -> table)
  std::vector<std::map<int, mtrdetail::KindTable>> in_tables;
  // interposer host local -> table
  std::map<int, mtrdetail::KindTable> transit_tables;
  bool cdg_acyclic = false;
  int synthesis_iterations = 0;

  int8_t next_out(int chiplet, int boundary_local, int local, PortKind in) const {
    return out_tables[static_cast<size_t>(chiplet)].at(boundary_local).next_kind(local, in);
  }
  int8_t next_in(int chiplet, int dst_local, int local, PortKind in) const {
    return in_tables[static_cast<size_t>(chiplet)].at(dst_local).next_kind(local, in);
  }
  int8_t next_transit(int host_local, int local, PortKind in) const {
    return transit_tables.at(host_local).next_kind(local, in);
  }
};

namespace mtrdetail {

inline void build_tables(const SocTopology& topo, const TurnRestrictionSet& r, MtrRouting& m) {
  m.out_tables.assign(topo.chiplets.size(), {});
  m.in_tables.assign(topo.chiplets.size(), {});
  m.transit_tables.clear();
  for (size_t ci = 0; ci < topo.chiplets.size(); ++ci) {
    const ChipletSpec& c = topo.chiplets[ci].spec;
    for (int b : c.boundary_routers)
      m.out_tables[ci][b] = build_kind_table(r, Leg::Outbound, c.width, c.height,
                                             topo.chiplets[ci].first_router, b, PortKind::Tsv);
    for (int d = 0; d < c.router_count(); ++d)
      m.in_tables[ci][d] = build_kind_table(r, Leg::Inbound, c.width, c.height,
                                            topo.chiplets[ci].first_router, d, PortKind::Local);
  }
  for (const auto& [ir, tsvs] : topo.interposer_tsvs) {
    int local = topo.routers[static_cast<size_t>(ir)].local;
    m.transit_tables[local] =
        build_kind_table(r, Leg::Transit, topo.interposer.width, topo.interposer.height,
                         topo.interposer_first, local, PortKind::Tsv);
  }
}

struct ReqState {
  bool ok = true;
  std::string why;
};

// Every node must reach its egress TSV, every used (egress, ingress) pair
// must cross the interposer, and every used ingress must reach every node it
// serves.
inline ReqState check_reachability(const SocTopology& topo, const MtrRouting& m) {
  ReqState st;
  auto fail = [&](const std::string& w) {
    st.ok = false;
    if (st.why.empty()) st.why = w;
  };
  for (NodeId n = 0; n < topo.node_count; ++n) {
    const RouterInfo& ri = topo.routers[static_cast<size_t>(n)];
    int b = topo.opic_node(n).boundary;
    const KindTable& t = m.out_tables[static_cast<size_t>(ri.chiplet)].at(b);
    if (t.dist[static_cast<size_t>(ri.local * 6 + static_cast<int>(PortKind::Local))] < 0)
      fail("outbound " + topo.router_name(n) + " cannot reach its egress boundary");
  }
  for (NodeId src = 0; src < topo.node_count; ++src) {
    for (NodeId dst = 0; dst < topo.node_count; ++dst) {
      if (src == dst || topo.chiplet_of(src) == topo.chiplet_of(dst)) continue;
      RouterId e = topo.egress_boundary(src);
      RouterId i = topo.ingress_boundary(e, dst);
      const RouterInfo& ei = topo.routers[static_cast<size_t>(e)];
      const RouterInfo& ii = topo.routers[static_cast<size_t>(i)];
      RouterId eh = topo.tsv_interposer(ei.chiplet, ei.local);
      RouterId ih = topo.tsv_interposer(ii.chiplet, ii.local);
      const KindTable& tt =
          m.transit_tables.at(topo.routers[static_cast<size_t>(ih)].local);
      int ehl = topo.routers[static_cast<size_t>(eh)].local;
      if (tt.dist[static_cast<size_t>(ehl * 6 + static_cast<int>(PortKind::Tsv))] < 0)
        fail("transit " + topo.router_name(eh) + " -> " + topo.router_name(ih) + " unreachable");
      const RouterInfo& di = topo.routers[static_cast<size_t>(dst)];
      const KindTable& ti = m.in_tables[static_cast<size_t>(di.chiplet)].at(di.local);
      if (ti.dist[static_cast<size_t>(ii.local * 6 + static_cast<int>(PortKind::Tsv))] < 0)
        fail("inbound " + topo.router_name(i) + " -> " + topo.router_name(dst) + " unreachable");
      if (!st.ok) return st;
    }
  }
  return st;
}

}  // namespace mtrdetail

// ---------------------------------------------------------------------------
// Channel dependency graph over directed links (plus injection channels)

struct ChannelDependencyGraph {
  int n = 0;  // vertices: topo.links then one injection channel per node
  std::vector<std::vector<int>> adj;
  // edge -> (router, in kind, out kind, used-by-intra, legs mask)
  struct EdgeInfo {
    RouterId router;
    PortKind in, out;
    bool intra_used = false;
    uint8_t legs = 0;  // bit per Leg
  };
  std::map<std::pair<int, int>, EdgeInfo> edges;

  void add_edge(int c1, int c2, RouterId r, PortKind in, PortKind out, Leg leg) {
    auto [it, fresh] = edges.try_emplace({c1, c2}, EdgeInfo{r, in, out, false, 0});
    if (fresh) adj[static_cast<size_t>(c1)].push_back(c2);
    if (leg == Leg::Intra)
      it->second.intra_used = true;
    else
      it->second.legs |= static_cast<uint8_t>(1u << static_cast<int>(leg));
  }
};

// Iterative DFS cycle finder; returns vertex sequence of one cycle, or empty.
inline std::vector<int> find_cycle(const std::vector<std::vector<int>>& adj) {
  const int n = static_cast<int>(adj.size());
  std::vector<int8_t> state(static_cast<size_t>(n), 0);  // 0 new, 1 on stack, 2 done
  std::vector<int> parent(static_cast<size_t>(n), -1);
  for (int root = 0; root < n; ++root) {
    if (state[static_cast<size_t>(root)] != 0) continue;
    std::vector<std::pair<int, size_t>> stack{{root, 0}};
    state[static_cast<size_t>(root)] = 1;
    while (!stack.empty()) {
      auto& [v, ei] = stack.back();
      if (ei < adj[static_cast<size_t>(v)].size()) {
        int u = adj[static_cast<size_t>(v)][ei++];
        if (state[static_cast<size_t>(u)] == 0) {
          state[static_cast<size_t>(u)] = 1;
          parent[static_cast<size_t>(u)] = v;
          stack.push_back({u, 0});
        } else if (state[static_cast<size_t>(u)] == 1) {
          std::vector<int> cyc{u};
          for (int w = v; w != u; w = parent[static_cast<size_t>(w)]) cyc.push_back(w);
          std::reverse(cyc.begin() + 1, cyc.end());
          return cyc;
        }
      } else {
        state[static_cast<size_t>(v)] = 2;
        stack.pop_back();
      }
    }
  }
  return {};
}

// Number of edges inside non-trivial SCCs; zero iff acyclic.
inline int cycle_mass(const std::vector<std::vector<int>>& adj) {
  const int n = static_cast<int>(adj.size());
  std::vector<int> idx(static_cast<size_t>(n), -1), low(static_cast<size_t>(n), 0),
      comp(static_cast<size_t>(n), -1);
  std::vector<int8_t> on(static_cast<size_t>(n), 0);
  std::vector<int> sstack;
  int counter = 0, ncomp = 0;
  struct Frame {
    int v;
    size_t ei;
  };
  for (int root = 0; root < n; ++root) {
    if (idx[static_cast<size_t>(root)] != -1) continue;
    std::vector<Frame> stack{{root, 0}};
    idx[static_cast<size_t>(root)] = low[static_cast<size_t>(root)] = counter++;
    sstack.push_back(root);
    on[static_cast<size_t>(root)] = 1;
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.ei < adj[static_cast<size_t>(f.v)].size()) {
        int u = adj[static_cast<size_t>(f.v)][f.ei++];
        if (idx[static_cast<size_t>(u)] == -1) {
          idx[static_cast<size_t>(u)] = low[static_cast<size_t>(u)] = counter++;
          sstack.push_back(u);
          on[static_cast<size_t>(u)] = 1;
          stack.push_back({u, 0});
        } else if (on[static_cast<size_t>(u)]) {
          low[static_cast<size_t>(f.v)] = std::min(low[static_cast<size_t>(f.v)],
                                                   idx[static_cast<size_t>(u)]);
        }
      } else {
        if (low[static_cast<size_t>(f.v)] == idx[static_cast<size_t>(f.v)]) {
          while (true) {
            int w = sstack.back();
            sstack.pop_back();
            on[static_cast<size_t>(w)] = 0;
            comp[static_cast<size_t>(w)] = ncomp;
            if (w == f.v) break;
          }
          ++ncomp;
        }
        int v = f.v;
        stack.pop_back();
        if (!stack.empty())
          low[static_cast<size_t>(stack.back().v)] =
              std::min(low[static_cast<size_t>(stack.back().v)], low[static_cast<size_t>(v)]);
      }
    }
  }
  std::vector<int> comp_size(static_cast<size_t>(ncomp), 0);
  for (int v = 0; v < n; ++v) comp_size[static_cast<size_t>(comp[static_cast<size_t>(v)])]++;
  int mass = 0;
  for (int v = 0; v < n; ++v)
    for (int u : adj[static_cast<size_t>(v)])
      if (comp[static_cast<size_t>(v)] == comp[static_cast<size_t>(u)] &&
          (comp_size[static_cast<size_t>(comp[static_cast<size_t>(v)])] > 1 || u == v))
        ++mass;
  return mass;
}

namespace mtrdetail {

struct WalkCb {
  ChannelDependencyGraph* g;
  const SocTopology* topo;

  int inject_channel(NodeId n) const { return static_cast<int>(topo->links.size()) + n; }

  int out_link_of(RouterId r, PortKind kind, RouterId peer_for_tsv) const {
    const RouterInfo& ri = topo->routers[static_cast<size_t>(r)];
    for (const PortInfo& p : ri.ports) {
      if (p.kind != kind) continue;
      if (kind == PortKind::Tsv && peer_for_tsv != kNoRouter && p.peer != peer_for_tsv) continue;
      return p.out_link;
    }
    return -1;
  }
};

}  // namespace mtrdetail

// Builds the composed CDG of the deterministic relation: chiplet policy for
// intra traffic plus the MtrRouting tables for outbound/transit/inbound legs.
inline ChannelDependencyGraph build_cdg(const SocTopology& topo, const MtrRouting& m) {
  ChannelDependencyGraph g;
  g.n = static_cast<int>(topo.links.size()) + topo.node_count;
  g.adj.assign(static_cast<size_t>(g.n), {});
  mtrdetail::WalkCb cb{&g, &topo};

  // intra-chiplet: chiplet policy (XY/YX; adaptive contributes both branches)
  FullCredits fc;
  for (NodeId src = 0; src < topo.node_count; ++src) {
    int ci = topo.chiplet_of(src);
    const ChipletSpec& spec = topo.chiplet_spec(ci);
    for (NodeId dst = topo.chiplets[static_cast<size_t>(ci)].first_router;
         dst < topo.chiplets[static_cast<size_t>(ci)].first_router + spec.router_count(); ++dst) {
      if (dst == src) continue;
      auto step = [&](RouterId at, RouterId target, int chan, PortKind in_kind, auto&& rec) {
        if (at == target) return;
        std::vector<PortKind> outs;
        if (spec.routing == RoutingPolicy::AdaptiveXyYx) {
          const RouterInfo& a = topo.routers[static_cast<size_t>(at)];
          const RouterInfo& d = topo.routers[static_cast<size_t>(target)];
          if (d.x != a.x)
            outs.push_back(d.x > a.x ? PortKind::East : PortKind::West);
          if (d.y != a.y)
            outs.push_back(d.y > a.y ? PortKind::North : PortKind::South);
        } else {
          outs.push_back(route_next_hop(topo, spec.routing, at, target, fc).out_kind);
        }
        for (PortKind ok : outs) {
          int ol = cb.out_link_of(at, ok, kNoRouter);
          g.add_edge(chan, ol, at, in_kind, ok, Leg::Intra);
          RouterId peer = topo.links[static_cast<size_t>(ol)].to;
          PortKind entry = topo.routers[static_cast<size_t>(peer)]
                               .ports[static_cast<size_t>(topo.links[static_cast<size_t>(ol)]
                                                              .to_port)]
                               .kind;
          rec(peer, target, ol, entry, rec);
        }
      };
      step(src, dst, cb.inject_channel(src), PortKind::Local, step);
    }
  }

  // inter-chiplet legs from the tables
  for (NodeId src = 0; src < topo.node_count; ++src) {
    for (NodeId dst = 0; dst < topo.node_count; ++dst) {
      if (src == dst || topo.chiplet_of(src) == topo.chiplet_of(dst)) continue;
      RouterId egress = topo.egress_boundary(src);
      RouterId ingress = topo.ingress_boundary(egress, dst);
      const RouterInfo& ei = topo.routers[static_cast<size_t>(egress)];
      const RouterInfo& ii = topo.routers[static_cast<size_t>(ingress)];
      RouterId ehost = topo.tsv_interposer(ei.chiplet, ei.local);
      RouterId ihost = topo.tsv_interposer(ii.chiplet, ii.local);

      // outbound: src -> egress TSV
      {
        const auto& t = m.out_tables[static_cast<size_t>(ei.chiplet)].at(ei.local);
        RouterId at = src;
        int chan = cb.inject_channel(src);
        PortKind in = PortKind::Local;
        while (true) {
          const RouterInfo& ri = topo.routers[static_cast<size_t>(at)];
          int8_t nk = t.next_kind(ri.local, in);
          if (nk < 0) break;  // unreachable; reachability check reports it
          PortKind ok = static_cast<PortKind>(nk);
          int ol = cb.out_link_of(at, ok, kNoRouter);
          g.add_edge(chan, ol, at, in, ok, Leg::Outbound);
          if (ok == PortKind::Tsv) break;
          const LinkInfo& li = topo.links[static_cast<size_t>(ol)];
          at = li.to;
          in = topo.routers[static_cast<size_t>(li.to)]
                   .ports[static_cast<size_t>(li.to_port)]
                   .kind;
          chan = ol;
        }
      }
      // transit: egress host -> ingress host
      {
        const auto& t = m.transit_tables.at(topo.routers[static_cast<size_t>(ihost)].local);
        RouterId at = ehost;
        int chan = cb.out_link_of(egress, PortKind::Tsv, kNoRouter);
        PortKind in = PortKind::Tsv;
        while (true) {
          const RouterInfo& ri = topo.routers[static_cast<size_t>(at)];
          int8_t nk = t.next_kind(ri.local, in);
          if (nk < 0) break;
          PortKind ok = static_cast<PortKind>(nk);
          int ol = cb.out_link_of(at, ok, ok == PortKind::Tsv ? ingress : kNoRouter);
          g.add_edge(chan, ol, at, in, ok, Leg::Transit);
          if (ok == PortKind::Tsv) break;
          const LinkInfo& li = topo.links[static_cast<size_t>(ol)];
          at = li.to;
          in = topo.routers[static_cast<size_t>(li.to)]
                   .ports[static_cast<size_t>(li.to_port)]
                   .kind;
          chan = ol;
        }
      }
      // inbound: ingress -> dst
      {
        const RouterInfo& di = topo.routers[static_cast<size_t>(dst)];
        const auto& t = m.in_tables[static_cast<size_t>(di.chiplet)].at(di.local);
        RouterId at = ingress;
        int chan = cb.out_link_of(ihost, PortKind::Tsv, ingress);
        PortKind in = PortKind::Tsv;
        while (true) {
          const RouterInfo& ri = topo.routers[static_cast<size_t>(at)];
          int8_t nk = t.next_kind(ri.local, in);
          if (nk < 0 || static_cast<PortKind>(nk) == PortKind::Local) break;  // ejection
          PortKind ok = static_cast<PortKind>(nk);
          int ol = cb.out_link_of(at, ok, kNoRouter);
          g.add_edge(chan, ol, at, in, ok, Leg::Inbound);
          const LinkInfo& li = topo.links[static_cast<size_t>(ol)];
          at = li.to;
          in = topo.routers[static_cast<size_t>(li.to)]
                   .ports[static_cast<size_t>(li.to_port)]
                   .kind;
          chan = ol;
        }
      }
    }
  }
  return g;
}

// Uniform-traffic flow count through each boundary router, used as the
// tie-break load estimate during synthesis.
inline std::map<RouterId, int> boundary_load_estimate(const SocTopology& topo) {
  std::map<RouterId, int> load;
  for (NodeId src = 0; src < topo.node_count; ++src)
    for (NodeId dst = 0; dst < topo.node_count; ++dst) {
      if (src == dst || topo.chiplet_of(src) == topo.chiplet_of(dst)) continue;
      RouterId e = topo.egress_boundary(src);
      load[e]++;
      load[topo.ingress_boundary(e, dst)]++;
    }
  return load;
}

inline RouterId edge_boundary(const SocTopology& topo, RouterId r,
                              const std::map<RouterId, int>& load) {
  const RouterInfo& ri = topo.routers[static_cast<size_t>(r)];
  if (ri.chiplet >= 0) {
    if (ri.is_boundary) return r;
    return topo.router_at(ri.chiplet, topo.opic_node(r).boundary);
  }
  RouterId best = kNoRouter;
  int best_load = 1 << 30;
  auto it = topo.interposer_tsvs.find(r);
  if (it == topo.interposer_tsvs.end()) return kNoRouter;
  for (auto [ci, bl] : it->second) {
    RouterId b = topo.router_at(ci, bl);
    int l = load.count(b) ? load.at(b) : 0;
    if (l < best_load || (l == best_load && b < best)) {
      best = b;
      best_load = l;
    }
  }
  return best;
}

// Greedy cycle breaking: repeatedly forbid the cycle edge whose removal
// minimizes the remaining cycle mass, skipping edges that would disconnect a
// required pair or that intra traffic still needs.
inline MtrRouting synthesize_restrictions(const SocTopology& topo,
                                          TurnRestrictionSet seed = {},
                                          bool allow_synthesis = true) {
  MtrRouting m;
  m.restrictions = seed;
  mtrdetail::build_tables(topo, m.restrictions, m);
  auto req = mtrdetail::check_reachability(topo, m);
  if (!req.ok)
    throw TopologyError("turn restrictions disconnect the network: " + req.why);

  std::map<RouterId, int> load = boundary_load_estimate(topo);
  const int max_iter = 500;
  for (int iter = 0; iter < max_iter; ++iter) {
    ChannelDependencyGraph g = build_cdg(topo, m);
    std::vector<int> cyc = find_cycle(g.adj);
    if (cyc.empty()) {
      m.cdg_acyclic = true;
      m.synthesis_iterations = iter;
      return m;
    }
    // Supplied tables are taken as-is for study runs; the acyclic flag records
    // whether they are provably safe.
    if (!allow_synthesis) {
      m.cdg_acyclic = false;
      m.synthesis_iterations = 0;
      return m;
    }

    struct Cand {
      int mass;
      int load;
      uint32_t key;
      ChannelDependencyGraph::EdgeInfo info;
    };
    bool have_best = false;
    Cand best{};
    for (size_t i = 0; i < cyc.size(); ++i) {
      int c1 = cyc[i];
      int c2 = cyc[(i + 1) % cyc.size()];
      auto eit = g.edges.find({c1, c2});
      if (eit == g.edges.end()) continue;
      const auto& info = eit->second;
      if (info.intra_used) continue;  // intra traffic is never restricted
      TurnRestrictionSet trial = m.restrictions;
      if (info.legs & (1u << static_cast<int>(Leg::Outbound)))
        trial.add(Leg::Outbound, info.router, info.in, info.out);
      if (info.legs & (1u << static_cast<int>(Leg::Transit)))
        trial.add(Leg::Transit, info.router, info.in, info.out);
      if (info.legs & (1u << static_cast<int>(Leg::Inbound)))
        trial.add(Leg::Inbound, info.router, info.in, info.out);
      MtrRouting mt;
      mt.restrictions = trial;
      mtrdetail::build_tables(topo, mt.restrictions, mt);
      if (!mtrdetail::check_reachability(topo, mt).ok) continue;
      ChannelDependencyGraph gt = build_cdg(topo, mt);
      int mass = cycle_mass(gt.adj);
      RouterId b = edge_boundary(topo, info.router, load);
      int bl = (b != kNoRouter && load.count(b)) ? load.at(b) : 0;
      uint32_t key = TurnRestrictionSet::key(info.router, info.in, info.out);
      Cand cand{mass, bl, key, info};
      if (!have_best || cand.mass < best.mass ||
          (cand.mass == best.mass &&
           (cand.load < best.load || (cand.load == best.load && cand.key < best.key)))) {
        best = cand;
        have_best = true;
      }
    }
    if (!have_best)
      throw TopologyError(
          "restriction synthesis: no cycle edge can be forbidden without disconnecting the "
          "network");
    if (best.info.legs & (1u << static_cast<int>(Leg::Outbound)))
      m.restrictions.add(Leg::Outbound, best.info.router, best.info.in, best.info.out);
    if (best.info.legs & (1u << static_cast<int>(Leg::Transit)))
      m.restrictions.add(Leg::Transit, best.info.router, best.info.in, best.info.out);
    if (best.info.legs & (1u << static_cast<int>(Leg::Inbound)))
      m.restrictions.add(Leg::Inbound, best.info.router, best.info.in, best.info.out);
    mtrdetail::build_tables(topo, m.restrictions, m);
  }
  throw TopologyError("restriction synthesis did not converge");
}

}  // namespace rcnoc

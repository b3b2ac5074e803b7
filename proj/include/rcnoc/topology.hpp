#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "rcnoc/types.hpp"

namespace rcnoc {

struct TopologyError : std::runtime_error {
  explicit TopologyError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ChipletSpec {
  std::string name;
  int width = 4;
  int height = 4;
  std::vector<int> boundary_routers;  // local router indices
  RoutingPolicy routing = RoutingPolicy::Xy;
  int vc_count = 2;
  int vc_depth = 4;
  std::vector<int> vc_depths;  // optional per-VC depths; overrides vc_depth when set

  int router_count() const { return width * height; }
  int depth_of_vc(int v) const {
    return vc_depths.empty() ? vc_depth : vc_depths[static_cast<size_t>(v)];
  }
};

struct InterposerSpec {
  int width = 4;
  int height = 4;
  RoutingPolicy routing = RoutingPolicy::Xy;
  int vc_count = 2;
  int vc_depth = 4;
  std::vector<int> vc_depths;

  int router_count() const { return width * height; }
  int depth_of_vc(int v) const {
    return vc_depths.empty() ? vc_depth : vc_depths[static_cast<size_t>(v)];
  }
};

struct TopologyConfig {
  std::vector<ChipletSpec> chiplets;
  InterposerSpec interposer;
  // Explicit TSV placement: (chiplet index, boundary local index) -> interposer local index.
  // Empty means round-robin along interposer edge routers.
  std::map<std::pair<int, int>, int> tsv_map;
};

// One entry per chiplet node; the OPIC forest partitions the chiplet.
struct OpicNode {
  int boundary = -1;  // local index of the tree root (a boundary router)
  int parent = -1;    // local index of the tree parent; -1 at the root
  int depth = 0;
  std::vector<int> children;
};

using OpicTreePlan = std::vector<OpicNode>;

struct PortInfo {
  PortKind kind = PortKind::North;
  RouterId peer = kNoRouter;
  int peer_port = -1;
  int out_link = -1;  // directed link leaving through this port
  int in_link = -1;   // directed link arriving at this port
  bool wired() const { return peer != kNoRouter; }
};

struct RouterInfo {
  int chiplet = -1;  // -1 for interposer routers
  int local = -1;    // index within its mesh
  int x = 0, y = 0;
  bool is_boundary = false;
  std::vector<PortInfo> ports;  // 0..3 = N,S,E,W; then LOCAL (chiplet); then TSVs

  int port_by_kind(PortKind k) const {
    for (size_t i = 0; i < ports.size(); ++i)
      if (ports[i].kind == k) return static_cast<int>(i);
    return -1;
  }
};

struct LinkInfo {
  RouterId from = kNoRouter;
  int from_port = -1;
  RouterId to = kNoRouter;
  int to_port = -1;
  bool is_tsv = false;
};

struct ChipletInfo {
  ChipletSpec spec;
  RouterId first_router = 0;  // == first canonical node id
  OpicTreePlan opic;
  // boundary local index -> interposer router id
  std::map<int, RouterId> tsv_to_interposer;
};

struct BoundaryChoice {
  RouterId egress = kNoRouter;   // boundary router in the source chiplet
  RouterId ingress = kNoRouter;  // boundary router in the destination chiplet
};

struct RouteDecision {
  int out_port = -1;  // port index at the deciding router
  PortKind out_kind = PortKind::Local;
  VcRange out_vc_range;  // full VC range of the downstream port; schemes may narrow it
};

// Free-credit summary the adaptive policy consults; the engine binds it to the
// deciding router's downstream trackers, tests stub it.
struct CreditView {
  virtual ~CreditView() = default;
  virtual int free_credits(PortKind dir) const = 0;
};

struct FullCredits final : CreditView {
  int free_credits(PortKind) const override { return 1 << 20; }
};

inline int mesh_dist(int w, int a, int b) {
  int ax = a % w, ay = a / w;
  int bx = b % w, by = b / w;
  return std::abs(ax - bx) + std::abs(ay - by);
}

// Per-chiplet OPIC forest: every node joins the tree of its nearest boundary
// (ties to the lowest boundary index); parents are mesh neighbors on a minimal
// path toward the root (ties to the lowest neighbor index).
inline OpicTreePlan assign_opic_trees(const ChipletSpec& c) {
  const int n = c.router_count();
  OpicTreePlan plan(static_cast<size_t>(n));
  for (int v = 0; v < n; ++v) {
    int best = -1, best_d = 1 << 30;
    for (int b : c.boundary_routers) {
      int d = mesh_dist(c.width, v, b);
      if (d < best_d || (d == best_d && b < best)) {
        best = b;
        best_d = d;
      }
    }
    plan[v].boundary = best;
    plan[v].depth = best_d;
  }
  for (int v = 0; v < n; ++v) {
    if (plan[v].depth == 0) continue;  // root
    int x = v % c.width, y = v / c.width;
    int root = plan[v].boundary;
    int parent = -1;
    const int cand[4] = {
        (y + 1 < c.height) ? v + c.width : -1,
        (y > 0) ? v - c.width : -1,
        (x + 1 < c.width) ? v + 1 : -1,
        (x > 0) ? v - 1 : -1,
    };
    for (int u : cand) {
      if (u < 0) continue;
      if (plan[u].boundary != root) continue;
      if (mesh_dist(c.width, u, root) != plan[v].depth - 1) continue;
      if (parent == -1 || u < parent) parent = u;
    }
    // Any minimal-path neighbor toward the root lands in the same tree: it is
    // equally near this boundary and the lowest-index tie-break propagates.
    if (parent == -1) throw TopologyError("opic tree: no minimal-path parent found");
    plan[v].parent = parent;
  }
  for (int v = 0; v < n; ++v)
    if (plan[v].parent >= 0) plan[static_cast<size_t>(plan[v].parent)].children.push_back(v);
  return plan;
}

class SocTopology {
 public:
  std::vector<ChipletInfo> chiplets;
  InterposerSpec interposer;
  RouterId interposer_first = 0;
  int node_count = 0;
  int router_count = 0;
  std::vector<RouterInfo> routers;
  std::vector<LinkInfo> links;
  // interposer router id -> list of (chiplet, boundary local) it hosts
  std::map<RouterId, std::vector<std::pair<int, int>>> interposer_tsvs;

  bool is_interposer(RouterId r) const { return r >= interposer_first; }
  int chiplet_of(RouterId r) const { return routers[static_cast<size_t>(r)].chiplet; }
  RouterId router_of_node(NodeId n) const { return n; }

  const ChipletSpec& chiplet_spec(int c) const { return chiplets[static_cast<size_t>(c)].spec; }

  int subnet_vc_count(RouterId r) const {
    return is_interposer(r) ? interposer.vc_count : chiplet_spec(chiplet_of(r)).vc_count;
  }
  int subnet_vc_depth(RouterId r, int vc) const {
    return is_interposer(r) ? interposer.depth_of_vc(vc)
                            : chiplet_spec(chiplet_of(r)).depth_of_vc(vc);
  }
  RoutingPolicy subnet_policy(RouterId r) const {
    return is_interposer(r) ? interposer.routing : chiplet_spec(chiplet_of(r)).routing;
  }

  RouterId router_at(int chiplet, int local) const {
    return chiplets[static_cast<size_t>(chiplet)].first_router + local;
  }
  RouterId interposer_router(int local) const { return interposer_first + local; }

  // Interposer router hosting the TSV of (chiplet, boundary local).
  RouterId tsv_interposer(int chiplet, int blocal) const {
    return chiplets[static_cast<size_t>(chiplet)].tsv_to_interposer.at(blocal);
  }

  const OpicNode& opic_node(RouterId chiplet_router) const {
    const RouterInfo& ri = routers[static_cast<size_t>(chiplet_router)];
    return chiplets[static_cast<size_t>(ri.chiplet)].opic[static_cast<size_t>(ri.local)];
  }

  // Egress is fixed by OPIC tree membership: the root of src's tree.
  RouterId egress_boundary(NodeId src) const {
    const RouterInfo& ri = routers[static_cast<size_t>(src)];
    return router_at(ri.chiplet, opic_node(src).boundary);
  }

  // Ingress minimizes interposer hops from the egress TSV, ties broken by
  // chiplet hops to dst, then lowest boundary router id.
  RouterId ingress_boundary(RouterId egress, NodeId dst) const {
    const RouterInfo& eg = routers[static_cast<size_t>(egress)];
    RouterId eg_ir = tsv_interposer(eg.chiplet, eg.local);
    const RouterInfo& di = routers[static_cast<size_t>(dst)];
    const ChipletInfo& dc = chiplets[static_cast<size_t>(di.chiplet)];
    RouterId best = kNoRouter;
    int best_ih = 1 << 30, best_ch = 1 << 30;
    for (int b : dc.spec.boundary_routers) {
      RouterId in_ir = dc.tsv_to_interposer.at(b);
      int ih = mesh_dist(interposer.width, in_ir - interposer_first, eg_ir - interposer_first);
      int ch = mesh_dist(dc.spec.width, b, di.local);
      RouterId br = router_at(di.chiplet, b);
      if (ih < best_ih || (ih == best_ih && (ch < best_ch || (ch == best_ch && br < best)))) {
        best = br;
        best_ih = ih;
        best_ch = ch;
      }
    }
    return best;
  }

  BoundaryChoice select_boundary(NodeId src, NodeId dst) const {
    if (chiplet_of(src) == chiplet_of(dst))
      throw std::invalid_argument("select_boundary: src and dst share a chiplet");
    BoundaryChoice bc;
    bc.egress = egress_boundary(src);
    bc.ingress = ingress_boundary(bc.egress, dst);
    return bc;
  }

  std::string router_name(RouterId r) const {
    const RouterInfo& ri = routers[static_cast<size_t>(r)];
    if (ri.chiplet < 0) return "interposer.r" + std::to_string(ri.local);
    return chiplets[static_cast<size_t>(ri.chiplet)].spec.name + ".r" + std::to_string(ri.local);
  }

  std::string link_name(int link) const {
    const LinkInfo& l = links[static_cast<size_t>(link)];
    const RouterInfo& f = routers[static_cast<size_t>(l.from)];
    return router_name(l.from) + "." + to_string(f.ports[static_cast<size_t>(l.from_port)].kind) +
           ">" + router_name(l.to);
  }
};

namespace detail {

inline void add_link(SocTopology& t, RouterId a, int ap, RouterId b, int bp, bool tsv) {
  int id = static_cast<int>(t.links.size());
  t.links.push_back({a, ap, b, bp, tsv});
  t.routers[static_cast<size_t>(a)].ports[static_cast<size_t>(ap)].out_link = id;
  t.routers[static_cast<size_t>(a)].ports[static_cast<size_t>(ap)].peer = b;
  t.routers[static_cast<size_t>(a)].ports[static_cast<size_t>(ap)].peer_port = bp;
  t.routers[static_cast<size_t>(b)].ports[static_cast<size_t>(bp)].in_link = id;
}

inline void wire_mesh(SocTopology& t, RouterId first, int w, int h) {
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      RouterId r = first + y * w + x;
      if (y + 1 < h) {
        RouterId up = first + (y + 1) * w + x;
        add_link(t, r, static_cast<int>(PortKind::North), up, static_cast<int>(PortKind::South),
                 false);
        add_link(t, up, static_cast<int>(PortKind::South), r, static_cast<int>(PortKind::North),
                 false);
      }
      if (x + 1 < w) {
        RouterId right = first + y * w + x + 1;
        add_link(t, r, static_cast<int>(PortKind::East), right, static_cast<int>(PortKind::West),
                 false);
        add_link(t, right, static_cast<int>(PortKind::West), r, static_cast<int>(PortKind::East),
                 false);
      }
    }
  }
}

}  // namespace detail

inline void validate_chiplet(const ChipletSpec& c) {
  if (c.width < 1 || c.height < 1) throw TopologyError(c.name + ": mesh dimensions must be >= 1");
  if (c.vc_count < 1) throw TopologyError(c.name + ": vc_count must be >= 1");
  if (c.vc_depth < 1) throw TopologyError(c.name + ": vc_depth must be >= 1");
  if (!c.vc_depths.empty()) {
    if (static_cast<int>(c.vc_depths.size()) != c.vc_count)
      throw TopologyError(c.name + ": vc_depths size must equal vc_count");
    for (int d : c.vc_depths)
      if (d < 1) throw TopologyError(c.name + ": vc_depths entries must be >= 1");
  }
  if (c.boundary_routers.empty())
    throw TopologyError(c.name + ": chiplet must have at least one boundary router");
  std::vector<int> seen;
  for (int b : c.boundary_routers) {
    if (b < 0 || b >= c.router_count())
      throw TopologyError(c.name + ": boundary router " + std::to_string(b) + " out of range");
    if (std::find(seen.begin(), seen.end(), b) != seen.end())
      throw TopologyError(c.name + ": duplicate boundary router " + std::to_string(b));
    seen.push_back(b);
  }
}

inline std::shared_ptr<const SocTopology> build_soc(const TopologyConfig& cfg) {
  if (cfg.chiplets.empty()) throw TopologyError("topology needs at least one chiplet");
  for (const ChipletSpec& c : cfg.chiplets) validate_chiplet(c);
  if (cfg.interposer.width < 1 || cfg.interposer.height < 1)
    throw TopologyError("interposer dimensions must be >= 1");
  if (cfg.interposer.vc_count < 1) throw TopologyError("interposer vc_count must be >= 1");

  auto topo = std::make_shared<SocTopology>();
  SocTopology& t = *topo;
  t.interposer = cfg.interposer;

  RouterId next = 0;
  for (const ChipletSpec& c : cfg.chiplets) {
    ChipletInfo info;
    info.spec = c;
    info.first_router = next;
    info.opic = assign_opic_trees(c);
    t.chiplets.push_back(std::move(info));
    next += c.router_count();
  }
  t.node_count = next;
  t.interposer_first = next;
  t.router_count = next + cfg.interposer.router_count();

  t.routers.resize(static_cast<size_t>(t.router_count));
  for (size_t ci = 0; ci < t.chiplets.size(); ++ci) {
    const ChipletSpec& c = t.chiplets[ci].spec;
    for (int l = 0; l < c.router_count(); ++l) {
      RouterInfo& ri = t.routers[static_cast<size_t>(t.chiplets[ci].first_router + l)];
      ri.chiplet = static_cast<int>(ci);
      ri.local = l;
      ri.x = l % c.width;
      ri.y = l / c.width;
      ri.ports.resize(5);
      for (int p = 0; p < 4; ++p) ri.ports[static_cast<size_t>(p)].kind = static_cast<PortKind>(p);
      ri.ports[4].kind = PortKind::Local;
    }
  }
  for (int l = 0; l < cfg.interposer.router_count(); ++l) {
    RouterInfo& ri = t.routers[static_cast<size_t>(t.interposer_first + l)];
    ri.chiplet = -1;
    ri.local = l;
    ri.x = l % cfg.interposer.width;
    ri.y = l / cfg.interposer.width;
    ri.ports.resize(4);
    for (int p = 0; p < 4; ++p) ri.ports[static_cast<size_t>(p)].kind = static_cast<PortKind>(p);
  }

  for (size_t ci = 0; ci < t.chiplets.size(); ++ci) {
    const ChipletSpec& c = t.chiplets[ci].spec;
    detail::wire_mesh(t, t.chiplets[ci].first_router, c.width, c.height);
  }
  detail::wire_mesh(t, t.interposer_first, cfg.interposer.width, cfg.interposer.height);

  // TSV attachments: explicit map or round-robin along interposer edge routers.
  std::map<std::pair<int, int>, int> tsv = cfg.tsv_map;
  if (!tsv.empty()) {
    for (const auto& [key, il] : tsv) {
      auto [ci, bl] = key;
      if (ci < 0 || ci >= static_cast<int>(t.chiplets.size()))
        throw TopologyError("tsv_map: chiplet index out of range");
      const ChipletSpec& c = t.chiplets[static_cast<size_t>(ci)].spec;
      if (std::find(c.boundary_routers.begin(), c.boundary_routers.end(), bl) ==
          c.boundary_routers.end())
        throw TopologyError("tsv_map: " + c.name + ".r" + std::to_string(bl) +
                            " is not a boundary router");
      if (il < 0 || il >= cfg.interposer.router_count())
        throw TopologyError("tsv_map: interposer router out of range");
    }
    for (size_t ci = 0; ci < t.chiplets.size(); ++ci)
      for (int b : t.chiplets[ci].spec.boundary_routers)
        if (!tsv.count({static_cast<int>(ci), b}))
          throw TopologyError("tsv_map: unmapped boundary " + t.chiplets[ci].spec.name + ".r" +
                              std::to_string(b));
  } else {
    std::vector<int> edge;
    for (int l = 0; l < cfg.interposer.router_count(); ++l) {
      int x = l % cfg.interposer.width, y = l / cfg.interposer.width;
      if (x == 0 || y == 0 || x == cfg.interposer.width - 1 || y == cfg.interposer.height - 1)
        edge.push_back(l);
    }
    size_t rr = 0;
    for (size_t ci = 0; ci < t.chiplets.size(); ++ci)
      for (int b : t.chiplets[ci].spec.boundary_routers)
        tsv[{static_cast<int>(ci), b}] = edge[rr++ % edge.size()];
  }

  for (const auto& [key, il] : tsv) {
    auto [ci, bl] = key;
    RouterId br = t.router_at(ci, bl);
    RouterId ir = t.interposer_router(il);
    RouterInfo& bri = t.routers[static_cast<size_t>(br)];
    RouterInfo& iri = t.routers[static_cast<size_t>(ir)];
    if (bri.is_boundary)
      throw TopologyError("tsv_map: boundary " + t.router_name(br) + " mapped twice");
    bri.is_boundary = true;
    int bp = static_cast<int>(bri.ports.size());
    bri.ports.push_back({PortKind::Tsv, kNoRouter, -1, -1, -1});
    int ip = static_cast<int>(iri.ports.size());
    iri.ports.push_back({PortKind::Tsv, kNoRouter, -1, -1, -1});
    detail::add_link(t, br, bp, ir, ip, true);
    detail::add_link(t, ir, ip, br, bp, true);
    t.chiplets[static_cast<size_t>(ci)].tsv_to_interposer[bl] = ir;
    t.interposer_tsvs[ir].push_back({ci, bl});
  }

  return topo;
}

// Mesh next-hop primitive within one subnetwork (a chiplet or the interposer).
// `handoff` marks local_dest as a TSV handoff point (egress boundary for
// outbound packets, ingress-hosting interposer router for interposer transit).
inline RouteDecision route_next_hop(const SocTopology& topo, RoutingPolicy policy, RouterId router,
                                    RouterId local_dest, const CreditView& credits,
                                    bool handoff = false, int tsv_port = -1) {
  const RouterInfo& ri = topo.routers[static_cast<size_t>(router)];
  const RouterInfo& di = topo.routers[static_cast<size_t>(local_dest)];
  if (ri.chiplet != di.chiplet)
    throw HardFault("route_next_hop: router and local_dest in different sub-networks");

  RouteDecision d;
  auto finish = [&](int port) {
    d.out_port = port;
    d.out_kind = ri.ports[static_cast<size_t>(port)].kind;
    const PortInfo& pi = ri.ports[static_cast<size_t>(port)];
    if (pi.kind == PortKind::Local) {
      d.out_vc_range = {0, static_cast<uint8_t>(topo.subnet_vc_count(router))};
    } else {
      if (!pi.wired()) throw HardFault("route_next_hop: unreachable local_dest (dead port)");
      d.out_vc_range = {0, static_cast<uint8_t>(topo.subnet_vc_count(pi.peer))};
    }
    return d;
  };

  if (router == local_dest) {
    if (handoff) {
      int p = tsv_port >= 0 ? tsv_port : ri.port_by_kind(PortKind::Tsv);
      if (p < 0) throw HardFault("route_next_hop: handoff at router without TSV port");
      return finish(p);
    }
    int p = ri.port_by_kind(PortKind::Local);
    if (p < 0) throw HardFault("route_next_hop: LOCAL delivery at router without NI");
    return finish(p);
  }

  int dx = di.x - ri.x;
  int dy = di.y - ri.y;
  auto xport = [&]() {
    return static_cast<int>(dx > 0 ? PortKind::East : PortKind::West);
  };
  auto yport = [&]() {
    return static_cast<int>(dy > 0 ? PortKind::North : PortKind::South);
  };

  switch (policy) {
    case RoutingPolicy::Xy:
      return finish(dx != 0 ? xport() : yport());
    case RoutingPolicy::Yx:
      return finish(dy != 0 ? yport() : xport());
    case RoutingPolicy::AdaptiveXyYx: {
      if (dx == 0) return finish(yport());
      if (dy == 0) return finish(xport());
      int px = xport(), py = yport();
      int cx = credits.free_credits(static_cast<PortKind>(px));
      int cy = credits.free_credits(static_cast<PortKind>(py));
      return finish(cy > cx ? py : px);  // tie goes to the XY-next port
    }
  }
  throw HardFault("route_next_hop: unknown policy");
}

// Port sequence of the uncontended route between two routers of one subnet.
inline std::vector<PortKind> trace_mesh_route(const SocTopology& topo, RoutingPolicy policy,
                                              RouterId from, RouterId to) {
  std::vector<PortKind> seq;
  FullCredits fc;
  RouterId cur = from;
  while (cur != to) {
    RouteDecision d = route_next_hop(topo, policy, cur, to, fc);
    seq.push_back(d.out_kind);
    cur = topo.routers[static_cast<size_t>(cur)].ports[static_cast<size_t>(d.out_port)].peer;
    if (seq.size() > 4096) throw HardFault("trace_mesh_route: route does not converge");
  }
  return seq;
}

}  // namespace rcnoc

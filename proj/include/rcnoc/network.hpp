#pragma once

#include <array>
#include <deque>
#include <memory>
#include <unordered_map>
#include <vector>

#include "rcnoc/baselines.hpp"
#include "rcnoc/config.hpp"
#include "rcnoc/metrics.hpp"
#include "rcnoc/rc_control.hpp"
#include "rcnoc/topology.hpp"
#include "rcnoc/traffic.hpp"

namespace rcnoc {

struct PacketRec {
  PacketId id = kNoPacket;
  NodeId src = -1, dst = -1;            // current journey endpoints
  NodeId final_src = -1, final_dst = -1;
  uint16_t flits = 1;
  PacketClass cls = PacketClass::Data;
  enum class Kind : uint8_t { Data, Ack, Nack } kind = Kind::Data;
  uint8_t itb_stage = 0;  // 0: src->b1, 1: b1->b2, 2: b2->dst
  bool inter_chiplet = false;           // current journey crosses the interposer
  bool gated = false;                   // RC: must hold a permit token to inject
  RouterId egress = kNoRouter, ingress = kNoRouter;
  Cycle t_created = 0, t_request = -1, t_grant = -1, t_inject = -1;
  uint16_t retries = 0;
  PacketId ref = kNoPacket;             // ACK/NACK: the data packet id
  NodeId custodian = -1;                // ITB: node holding the retry copy
  uint16_t arrived = 0;                 // flits consumed at the current sink
  bool drop_at_station = false;
};

struct EventSink {
  virtual ~EventSink() = default;
  virtual void on(Cycle, const char*, PacketId, RouterId, int, int) {}
};

struct Counters {
  uint64_t created_data_packets = 0;
  uint64_t injected_flits = 0;
  uint64_t delivered_flits = 0;   // all NI consumption at journey endpoints
  uint64_t absorbed_flits = 0;    // ITB station store/drop consumption
  int64_t in_network_flits = 0;
  uint64_t data_delivered_packets = 0;
  uint64_t duplicate_deliveries = 0;
  uint64_t itb_drops = 0, itb_nacks = 0, itb_acks = 0, retransmissions = 0;
  uint64_t vcsep_violations = 0;
  uint64_t permit_checks = 0;
};

struct DrainReport {
  Cycle cycles = 0;
  uint64_t residue_flits = 0;
  bool drained = false;
};

class Network {
 public:
  // ----- engine state (open for tests, the watchdog and the audit) -----
  struct FifoEnt {
    Flit flit;
    Cycle bw = 0;
  };
  enum class VcState : uint8_t { Idle, VaWait, Active, RcbBound };
  struct InVc {
    std::vector<FifoEnt> buf;
    int head = 0, count = 0;
    VcState st = VcState::Idle;
    PacketId owner = kNoPacket;
    int out_port = -1;
    VcRange range{};
    int out_vc = -1;
    Cycle va_cycle = -1;
    Cycle last_move = 0;

    const FifoEnt& front() const { return buf[static_cast<size_t>(head)]; }
    void push(const FifoEnt& e) {
      buf[static_cast<size_t>((head + count) % static_cast<int>(buf.size()))] = e;
      ++count;
    }
    FifoEnt pop() {
      FifoEnt e = buf[static_cast<size_t>(head)];
      head = (head + 1) % static_cast<int>(buf.size());
      --count;
      return e;
    }
  };
  struct DownVc {
    PacketId owner = kNoPacket;
    bool tail_sent = false;
    int credits = 0;
    int reserved = 0;
    int depth = 0;
    std::array<int, 2> credit_arr{{0, 0}};
  };
  struct OutPort {
    PortKind kind = PortKind::North;
    int link = -1;
    RouterId peer = kNoRouter;
    int peer_port = -1;
    bool to_rcb = false;
    bool is_sink = false;
    std::vector<DownVc> down;
    int st_in_port = -1, st_in_vc = -1;
    int rr_sa = 0, rr_va_req = 0, rr_va_vc = 0;
  };
  struct Arrival {
    Flit flit;
    uint8_t vc = 0;
    bool valid = false;
  };
  struct UpRef {
    enum class K : uint8_t { None, Router, Ni, Rcb } kind = K::None;
    int a = -1, b = -1;
  };
  struct Staged {
    int port;
    Arrival a;
  };
  struct RouterSt {
    std::vector<std::vector<InVc>> in;   // [port][vc]
    std::vector<OutPort> out;            // [port]
    std::array<std::vector<Arrival>, 2> inbox;
    std::array<bool, 2> inbox_any{{false, false}};
    std::vector<Staged> staged;          // this cycle's arrivals, consumed at BW
    std::vector<UpRef> up;               // per input port
    std::vector<int> rr_sa_in;           // per input port, over vcs
    int va_slot_width = 1;               // max VCs over input ports
    int occupied_vcs = 0;
    int st_pending = 0;
    int credit_msgs = 0;
  };
  struct Custody {
    PacketRec rec;
    bool station_resident = false;
    bool retry_wait = false;
    Cycle since = 0;
  };
  struct NiSt {
    NodeId node = -1;
    RouterId router = kNoRouter;
    int local_port = -1;
    int chiplet = -1, local = -1;
    std::deque<PacketRec> queue;
    bool requested = false, token = false;
    PacketId cur = kNoPacket;
    uint16_t next_seq = 0, cur_flits = 0;
    int send_vc = -1;
    std::vector<DownVc> local_down;
    std::array<Arrival, 2> eject{};
    std::unordered_map<PacketId, Custody> custody;
    std::deque<std::pair<Cycle, PacketId>> retry_due;
    int station_count = 0, station_reserved = 0;
  };

  std::shared_ptr<const SocTopology> topo;
  SimConfig cfg;
  Scheme scheme;
  std::shared_ptr<const MtrRouting> mtr;
  std::vector<RouterSt> routers;
  std::vector<NiSt> nis;
  std::vector<OpicSystem> opics;       // per chiplet (RC)
  std::vector<RcBuffer> rcbs;
  std::vector<RouterId> rcb_router;    // rcbs index -> boundary router
  std::vector<int> rcb_index;          // router -> rcbs index or -1
  std::vector<std::mt19937_64> rngs;   // per node
  std::vector<ScenarioEntry> scenario;
  bool use_scenario = false;
  bool injection_enabled = true;
  Cycle now = 0;
  PacketId next_packet_id = 0;
  std::unordered_map<PacketId, PacketRec> live;
  std::vector<bool> delivered_once;
  Counters counters;
  MetricsCollector metrics;
  EventSink* sink = nullptr;
  // RC permit accounting, per boundary router id
  struct PermitAcct {
    int tokens = 0;
    int inflight = 0;
  };
  std::map<RouterId, PermitAcct> permits;
  int64_t queued_flits = 0;
  int64_t custody_packets = 0;
  int sending_nis = 0;

  Network(std::shared_ptr<const SocTopology> t, const SimConfig& c,
          std::shared_ptr<const MtrRouting> m = nullptr)
      : topo(std::move(t)), cfg(c), scheme(c.scheme.kind), mtr(std::move(m)) {
    if (scheme == Scheme::Mtr && !mtr)
      throw std::invalid_argument("Network: scheme MTR requires routing tables");
    build();
    if (!cfg.traffic.scenario_file.empty()) {
      scenario = load_scenario(cfg.traffic.scenario_file);
      use_scenario = true;
    }
    rngs.reserve(static_cast<size_t>(topo->node_count));
    for (NodeId n = 0; n < topo->node_count; ++n)
      rngs.push_back(node_rng(cfg.traffic.seed, n));
    metrics.reset(static_cast<size_t>(topo->router_count), topo->links.size(),
                  cfg.traffic.warmup, cfg.traffic.warmup + cfg.traffic.measure,
                  cfg.engine.link_sample_window);
  }

  void set_scenario(std::vector<ScenarioEntry> entries) {
    scenario = std::move(entries);
    use_scenario = true;
  }

  // ------------------------------------------------------------------
  // construction

  void build() {
    const SocTopology& t = *topo;
    routers.resize(static_cast<size_t>(t.router_count));
    rcb_index.assign(static_cast<size_t>(t.router_count), -1);
    for (RouterId r = 0; r < t.router_count; ++r) {
      const RouterInfo& ri = t.routers[static_cast<size_t>(r)];
      RouterSt& rs = routers[static_cast<size_t>(r)];
      const int nports = static_cast<int>(ri.ports.size());
      const int vcs = t.subnet_vc_count(r);
      rs.in.resize(static_cast<size_t>(nports));
      rs.out.resize(static_cast<size_t>(nports));
      rs.up.resize(static_cast<size_t>(nports));
      rs.rr_sa_in.assign(static_cast<size_t>(nports), 0);
      rs.inbox[0].resize(static_cast<size_t>(nports));
      rs.inbox[1].resize(static_cast<size_t>(nports));
      for (int p = 0; p < nports; ++p) {
        const PortInfo& pi = ri.ports[static_cast<size_t>(p)];
        OutPort& op = rs.out[static_cast<size_t>(p)];
        op.kind = pi.kind;
        if (pi.kind == PortKind::Local) {
          op.is_sink = true;
          op.down.resize(static_cast<size_t>(vcs));
          for (DownVc& d : op.down) {
            d.depth = 1 << 20;
            d.credits = d.depth;
          }
        } else if (pi.wired()) {
          op.link = pi.out_link;
          op.peer = pi.peer;
          op.peer_port = pi.peer_port;
          const int pvcs = t.subnet_vc_count(pi.peer);
          op.down.resize(static_cast<size_t>(pvcs));
          for (int v = 0; v < pvcs; ++v) {
            op.down[static_cast<size_t>(v)].depth = t.subnet_vc_depth(pi.peer, v);
            op.down[static_cast<size_t>(v)].credits = op.down[static_cast<size_t>(v)].depth;
          }
        }
        // input VCs exist for every wired in-link plus the LOCAL injection port
        if (pi.kind == PortKind::Local || pi.in_link >= 0) {
          rs.in[static_cast<size_t>(p)].resize(static_cast<size_t>(vcs));
          for (int v = 0; v < vcs; ++v) {
            InVc& ivc = rs.in[static_cast<size_t>(p)][static_cast<size_t>(v)];
            ivc.buf.resize(static_cast<size_t>(t.subnet_vc_depth(r, v)));
          }
        }
        rs.va_slot_width =
            std::max(rs.va_slot_width, static_cast<int>(rs.in[static_cast<size_t>(p)].size()));
      }
    }
    // upstream refs for credit returns
    for (const LinkInfo& l : t.links) {
      RouterSt& dst = routers[static_cast<size_t>(l.to)];
      dst.up[static_cast<size_t>(l.to_port)] = {UpRef::K::Router, l.from, l.from_port};
    }
    nis.resize(static_cast<size_t>(t.node_count));
    for (NodeId n = 0; n < t.node_count; ++n) {
      NiSt& ni = nis[static_cast<size_t>(n)];
      ni.node = n;
      ni.router = n;
      const RouterInfo& ri = t.routers[static_cast<size_t>(n)];
      ni.chiplet = ri.chiplet;
      ni.local = ri.local;
      ni.local_port = ri.port_by_kind(PortKind::Local);
      const int vcs = t.subnet_vc_count(n);
      ni.local_down.resize(static_cast<size_t>(vcs));
      for (int v = 0; v < vcs; ++v) {
        ni.local_down[static_cast<size_t>(v)].depth = t.subnet_vc_depth(n, v);
        ni.local_down[static_cast<size_t>(v)].credits = ni.local_down[static_cast<size_t>(v)].depth;
      }
      routers[static_cast<size_t>(n)].up[static_cast<size_t>(ni.local_port)] = {UpRef::K::Ni, n,
                                                                                0};
    }
    if (scheme == Scheme::Rc) {
      opics.reserve(t.chiplets.size());
      for (const ChipletInfo& ci : t.chiplets)
        opics.emplace_back(ci.opic, cfg.scheme.rc_capacity, cfg.scheme.opic_wire_bits);
      const int max_flits = std::max(cfg.traffic.packet_flits, 1);
      for (size_t ci = 0; ci < t.chiplets.size(); ++ci) {
        for (int bl : t.chiplets[ci].spec.boundary_routers) {
          RouterId br = t.router_at(static_cast<int>(ci), bl);
          const RouterInfo& bri = t.routers[static_cast<size_t>(br)];
          int tsv_port = bri.port_by_kind(PortKind::Tsv);
          const PortInfo& tp = bri.ports[static_cast<size_t>(tsv_port)];
          const int pvcs = t.subnet_vc_count(tp.peer);
          std::vector<int> depths;
          for (int v = 0; v < pvcs; ++v) depths.push_back(t.subnet_vc_depth(tp.peer, v));
          RcBuffer rcb(cfg.scheme.rc_capacity, max_flits, pvcs, depths);
          rcb.tsv_out_link = tp.out_link;
          rcb.tsv_peer = tp.peer;
          rcb.tsv_peer_port = tp.peer_port;
          rcb.root_local = bl;
          rcb_index[static_cast<size_t>(br)] = static_cast<int>(rcbs.size());
          rcbs.push_back(std::move(rcb));
          rcb_router.push_back(br);
          // the boundary TSV out port feeds the RCB, not the link directly
          routers[static_cast<size_t>(br)].out[static_cast<size_t>(tsv_port)].to_rcb = true;
          // interposer TSV-in credits return to the RCB
          routers[static_cast<size_t>(tp.peer)].up[static_cast<size_t>(tp.peer_port)] = {
              UpRef::K::Rcb, br, 0};
          permits[br] = {};
        }
      }
    }
    delivered_once.reserve(1 << 16);
  }

  int subnet_vcs(RouterId r) const { return topo->subnet_vc_count(r); }

  // ------------------------------------------------------------------
  // packet creation / NI queueing

  PacketId create_packet(NodeId src, NodeId dst, int flits, PacketClass cls,
                         PacketRec::Kind kind = PacketRec::Kind::Data,
                         PacketId ref = kNoPacket) {
    engine_check(src != dst, "create_packet: src == dst");
    PacketRec rec;
    rec.id = next_packet_id++;
    rec.src = rec.final_src = src;
    rec.dst = rec.final_dst = dst;
    rec.flits = static_cast<uint16_t>(flits);
    rec.cls = cls;
    rec.kind = kind;
    rec.ref = ref;
    rec.t_created = now;
    const bool inter = topo->chiplet_of(src) != topo->chiplet_of(dst);
    rec.inter_chiplet = inter;
    if (inter) {
      BoundaryChoice bc = topo->select_boundary(src, dst);
      rec.egress = bc.egress;
      rec.ingress = bc.ingress;
    }
    if (scheme == Scheme::Rc && inter && kind == PacketRec::Kind::Data) rec.gated = true;
    if (scheme == Scheme::Itb && inter && kind == PacketRec::Kind::Data) {
      rec.custodian = src;
      // stage 0 ends at the egress station; sources on the boundary skip it
      if (src == rec.egress) {
        rec.itb_stage = 1;
        rec.dst = rec.ingress;  // boundary routers are nodes
      } else {
        rec.itb_stage = 0;
        rec.dst = rec.egress;
        rec.inter_chiplet = false;  // stage 0 stays inside the chiplet
      }
      NiSt& ni = nis[static_cast<size_t>(src)];
      engine_check(!ni.custody.count(rec.id), "duplicate custody entry at source");
      ni.custody[rec.id] = {rec, false, false, now};
      ++custody_packets;
    }
    if (kind == PacketRec::Kind::Data) {
      ++counters.created_data_packets;
      metrics.on_created(now);
    }
    ni_enqueue(rec);
    return rec.id;
  }

  void ni_enqueue(const PacketRec& rec) {
    NiSt& ni = nis[static_cast<size_t>(rec.src)];
    ni.queue.push_back(rec);
    queued_flits += rec.flits;
    if (sink) sink->on(now, "enqueue", rec.id, rec.src, -1, -1);
  }

  // ------------------------------------------------------------------
  // per-cycle advancement

  void advance_cycle() {
    const Cycle c = now;
    const int p = static_cast<int>(c & 1);

    consume_wires(p);
    if (injection_enabled) traffic_tick();
    if (scheme == Scheme::Rc) {
      gate_requests();
      for (OpicSystem& o : opics) o.advance(c);
      collect_grants();
    }
    for (RouterId r = 0; r < topo->router_count; ++r) router_advance(r);
    for (size_t i = 0; i < rcbs.size(); ++i) rcb_advance(static_cast<int>(i), p);
    for (NodeId n = 0; n < topo->node_count; ++n) ni_send(n);
    run_checks();
    ++now;
  }

  DrainReport drain(Cycle max_cycles) {
    injection_enabled = false;
    const Cycle start = now;
    while (now - start < max_cycles && !idle()) advance_cycle();
    DrainReport r;
    r.cycles = now - start;
    r.residue_flits = residue_flits();
    r.drained = idle();
    return r;
  }

  bool idle() const {
    return counters.in_network_flits == 0 && queued_flits == 0 && sending_nis == 0 &&
           custody_packets == 0;
  }

  uint64_t residue_flits() const {
    uint64_t r = static_cast<uint64_t>(counters.in_network_flits) +
                 static_cast<uint64_t>(queued_flits);
    for (const NiSt& ni : nis) {
      if (ni.cur != kNoPacket) r += static_cast<uint64_t>(ni.cur_flits - ni.next_seq);
      for (const auto& [id, cu] : ni.custody)
        if (cu.retry_wait) r += cu.rec.flits;
    }
    return r;
  }

 private:
  // --- phase A: wire delivery -------------------------------------------------

  void consume_wires(int p) {
    for (RouterId r = 0; r < topo->router_count; ++r) {
      RouterSt& rs = routers[static_cast<size_t>(r)];
      if (rs.credit_msgs > 0) {
        for (OutPort& op : rs.out) {
          for (DownVc& d : op.down) {
            int cr = d.credit_arr[static_cast<size_t>(p)];
            if (cr > 0) {
              d.credit_arr[static_cast<size_t>(p)] = 0;
              d.credits += cr;
              rs.credit_msgs -= cr;
              engine_check(d.credits <= d.depth, "credit overflow on link tracker");
            }
          }
        }
      }
      // stage this cycle's flit arrivals before any router runs, so same-parity
      // writes for cycle+2 cannot be consumed early
      if (rs.inbox_any[static_cast<size_t>(p)]) {
        auto& box = rs.inbox[static_cast<size_t>(p)];
        for (size_t port = 0; port < box.size(); ++port) {
          if (!box[port].valid) continue;
          rs.staged.push_back({static_cast<int>(port), box[port]});
          box[port].valid = false;
        }
        rs.inbox_any[static_cast<size_t>(p)] = false;
      }
    }
    for (NiSt& ni : nis) {
      for (DownVc& d : ni.local_down) {
        int cr = d.credit_arr[static_cast<size_t>(p)];
        if (cr > 0) {
          d.credit_arr[static_cast<size_t>(p)] = 0;
          d.credits += cr;
          engine_check(d.credits <= d.depth, "credit overflow on NI tracker");
        }
      }
    }
    for (RcBuffer& rcb : rcbs) {
      for (RcBuffer::DownVc& d : rcb.down) {
        int cr = d.credit_arr[static_cast<size_t>(p)];
        if (cr > 0) {
          d.credit_arr[static_cast<size_t>(p)] = 0;
          d.credits += cr;
          engine_check(d.credits <= d.depth, "credit overflow on TSV tracker");
        }
      }
    }
    // ejection consumption (1-cycle wire after ST, consumed on arrival)
    for (NodeId n = 0; n < topo->node_count; ++n) {
      Arrival& a = nis[static_cast<size_t>(n)].eject[static_cast<size_t>(p)];
      if (!a.valid) continue;
      Flit f = a.flit;
      a.valid = false;
      consume_at_ni(n, f);
    }
  }

  void consume_at_ni(NodeId n, const Flit& f) {
    auto it = live.find(f.packet);
    engine_check(it != live.end(), "ejected flit for unknown packet");
    PacketRec& rec = it->second;
    rec.arrived++;
    counters.in_network_flits--;
    const bool station_visit = scheme == Scheme::Itb && rec.kind == PacketRec::Kind::Data &&
                               n != rec.final_dst;
    if (station_visit) {
      counters.absorbed_flits++;
      if (f.is_head()) {
        NiSt& ni = nis[static_cast<size_t>(n)];
        if (ni.station_count + ni.station_reserved >= cfg.scheme.itb_capacity) {
          rec.drop_at_station = true;
        } else {
          ni.station_reserved++;
        }
      }
    } else {
      counters.delivered_flits++;
      if (rec.kind == PacketRec::Kind::Data && n == rec.final_dst) metrics.on_delivered_flit(now);
    }
    if (sink) sink->on(now, "eject", f.packet, n, f.seq, 0);
    if (f.is_tail()) complete_ejection(n, rec);
  }

  void complete_ejection(NodeId n, PacketRec& rec) {
    engine_check(rec.arrived == rec.flits, "ejection finished with missing flits");
    const PacketId id = rec.id;
    if (rec.kind != PacketRec::Kind::Data) {
      process_control(n, rec);
      live.erase(id);
      return;
    }
    if (scheme == Scheme::Itb && n != rec.final_dst) {
      NiSt& ni = nis[static_cast<size_t>(n)];
      if (rec.drop_at_station) {
        counters.itb_drops++;
        counters.itb_nacks++;
        create_packet(n, rec.custodian, 1, PacketClass::Control, PacketRec::Kind::Nack, id);
        live.erase(id);
        return;
      }
      ni.station_reserved--;
      ni.station_count++;
      counters.itb_acks++;
      if (rec.custodian != n)
        create_packet(n, rec.custodian, 1, PacketClass::Control, PacketRec::Kind::Ack, id);
      PacketRec next = rec;
      next.custodian = n;
      next.arrived = 0;
      next.drop_at_station = false;
      if (next.itb_stage == 0) {
        next.itb_stage = 1;
        next.src = n;
        next.dst = next.ingress;  // cross the interposer to the far station
        next.inter_chiplet = true;
      } else {
        next.itb_stage = 2;
        next.src = n;
        next.dst = next.final_dst;
        next.inter_chiplet = false;
      }
      engine_check(!ni.custody.count(id), "duplicate custody entry at station");
      ni.custody[id] = {next, true, false, now};
      ++custody_packets;
      ni_enqueue(next);
      live.erase(id);
      if (sink) sink->on(now, "station_store", id, n, next.itb_stage, 0);
      return;
    }
    // final delivery
    if (static_cast<size_t>(id) >= delivered_once.size())
      delivered_once.resize(static_cast<size_t>(id) + 1, false);
    if (delivered_once[static_cast<size_t>(id)]) {
      counters.duplicate_deliveries++;
    } else {
      delivered_once[static_cast<size_t>(id)] = true;
      counters.data_delivered_packets++;
      metrics.on_delivered_packet(rec.t_created, rec.t_request, rec.t_grant, rec.t_inject, now);
    }
    if (scheme == Scheme::Itb && topo->chiplet_of(rec.final_src) != topo->chiplet_of(n) &&
        rec.custodian != n && rec.custodian >= 0)
      create_packet(n, rec.custodian, 1, PacketClass::Control, PacketRec::Kind::Ack, id);
    if (sink) sink->on(now, "deliver", id, n, -1, -1);
    live.erase(id);
  }

  void process_control(NodeId n, PacketRec& rec) {
    NiSt& ni = nis[static_cast<size_t>(n)];
    auto it = ni.custody.find(rec.ref);
    if (it == ni.custody.end()) {
      engine_check(false, "control packet for unknown custody entry");
      return;
    }
    if (rec.kind == PacketRec::Kind::Ack) {
      if (it->second.station_resident) ni.station_count--;
      ni.custody.erase(it);
      --custody_packets;
    } else {  // NACK: schedule a retransmission
      it->second.retry_wait = true;
      ni.retry_due.push_back({now + cfg.scheme.retry_delay, rec.ref});
    }
    if (sink) sink->on(now, rec.kind == PacketRec::Kind::Ack ? "ack" : "nack", rec.ref, n, -1, -1);
  }

  // --- phase B: traffic -------------------------------------------------------

  void traffic_tick() {
    const Cycle warm_measure = cfg.traffic.warmup + cfg.traffic.measure;
    if (use_scenario) {
      for (const ScenarioEntry& e : scenario) {
        if (now >= e.start_cycle && now < e.start_cycle + e.count)
          create_packet(e.src, e.dst, cfg.traffic.packet_flits, PacketClass::Data);
      }
      return;
    }
    if (now >= warm_measure) return;
    for (NodeId n = 0; n < topo->node_count; ++n) {
      if (!injection_fires(cfg.traffic, rngs[static_cast<size_t>(n)])) continue;
      NodeId dst = gen_destination(cfg.traffic.pattern, n, topo->node_count,
                                   rngs[static_cast<size_t>(n)]);
      if (dst == n) continue;
      create_packet(n, dst, cfg.traffic.packet_flits, PacketClass::Data);
    }
  }

  // --- phases C/D: RC injection gating ---------------------------------------

  void gate_requests() {
    for (NodeId n = 0; n < topo->node_count; ++n) {
      NiSt& ni = nis[static_cast<size_t>(n)];
      if (ni.queue.empty()) continue;
      PacketRec& head = ni.queue.front();
      if (!head.gated || ni.token || ni.requested) continue;
      opics[static_cast<size_t>(ni.chiplet)].raise_ni_request(ni.local);
      head.t_request = now;
      ni.requested = true;
      if (sink) sink->on(now, "permit_req", head.id, n, -1, -1);
    }
  }

  void collect_grants() {
    for (NodeId n = 0; n < topo->node_count; ++n) {
      NiSt& ni = nis[static_cast<size_t>(n)];
      int g = opics[static_cast<size_t>(ni.chiplet)].take_ni_grant(ni.local);
      if (g == 0) continue;
      engine_check(g == 1 && ni.requested && !ni.token && !ni.queue.empty(),
                   "opic: unsolicited or duplicate grant");
      ni.token = true;
      ni.queue.front().t_grant = now;
      permits[ni.queue.front().egress].tokens++;
      if (sink) sink->on(now, "permit_grant", ni.queue.front().id, n, -1, -1);
    }
  }

  // --- phase E: routers -------------------------------------------------------

  void router_advance(RouterId r) {
    RouterSt& rs = routers[static_cast<size_t>(r)];
    if (rs.occupied_vcs == 0 && rs.st_pending == 0 && rs.staged.empty()) return;
    // ST
    if (rs.st_pending > 0)
      for (size_t op = 0; op < rs.out.size(); ++op)
        if (rs.out[op].st_in_port >= 0) do_st(r, rs, static_cast<int>(op));
    // SA
    if (rs.occupied_vcs > 0) do_sa(rs);
    // VA
    if (rs.occupied_vcs > 0) do_va(rs);
    // BW
    for (const Staged& s : rs.staged) do_bw(r, rs, s.port, s.a);
    rs.staged.clear();
  }

  void do_st(RouterId r, RouterSt& rs, int oport) {
    OutPort& op = rs.out[static_cast<size_t>(oport)];
    const int ip = op.st_in_port, iv = op.st_in_vc;
    op.st_in_port = op.st_in_vc = -1;
    rs.st_pending--;
    InVc& vc = rs.in[static_cast<size_t>(ip)][static_cast<size_t>(iv)];
    engine_check(vc.count > 0, "ST with empty input VC");
    FifoEnt fe = vc.pop();
    vc.last_move = now;
    if (vc.count == 0 && !fe.flit.is_tail()) {
      // mid-packet bubble: VC stays allocated, waits for more flits
    }
    metrics.on_router_exit(r, fe.bw, now);
    credit_to_upstream(r, ip, iv);
    if (op.to_rcb) {
      RcBuffer& rcb = rcbs[static_cast<size_t>(rcb_index[static_cast<size_t>(r)])];
      RcBuffer::Entry& e = rcb.entry[(now + 1) & 1];
      engine_check(!e.valid, "RCB entry register collision");
      e = {fe.flit, fe.bw, true};
    } else if (op.is_sink) {
      NodeId n = r;  // chiplet routers and nodes share ids
      Arrival& a = nis[static_cast<size_t>(n)].eject[(now + 2) & 1];
      engine_check(!a.valid, "eject wire collision");
      a = {fe.flit, 0, true};
      DownVc& d = op.down[static_cast<size_t>(vc.out_vc)];
      if (fe.flit.is_tail()) d.tail_sent = true;
    } else {
      RouterSt& peer = routers[static_cast<size_t>(op.peer)];
      Arrival& a = peer.inbox[(now + 2) & 1][static_cast<size_t>(op.peer_port)];
      engine_check(!a.valid, "link flit collision");
      a = {fe.flit, static_cast<uint8_t>(vc.out_vc), true};
      peer.inbox_any[(now + 2) & 1] = true;
      DownVc& d = op.down[static_cast<size_t>(vc.out_vc)];
      d.reserved--;
      d.credits--;
      engine_check(d.reserved >= 0 && d.credits >= 0, "credit underflow at ST");
      if (fe.flit.is_tail()) d.tail_sent = true;
      metrics.on_link_busy(op.link, now);
    }
    if (sink) sink->on(now, "st", fe.flit.packet, r, oport, fe.flit.seq);
    if (fe.flit.is_tail()) {
      engine_check(vc.count == 0, "wormhole: tail departed with flits left behind");
      release_invc(rs, vc);
    }
  }

  void release_invc(RouterSt& rs, InVc& vc) {
    vc.st = VcState::Idle;
    vc.owner = kNoPacket;
    vc.out_port = vc.out_vc = -1;
    vc.va_cycle = -1;
    rs.occupied_vcs--;
  }

  bool sa_eligible(const RouterSt& rs, const InVc& vc) const {
    if (vc.count == 0) return false;
    if (vc.front().bw >= now) return false;
    if (vc.st == VcState::RcbBound) return true;
    if (vc.st != VcState::Active) return false;
    if (vc.va_cycle >= now) return false;
    const OutPort& op = rs.out[static_cast<size_t>(vc.out_port)];
    if (op.is_sink) return true;
    const DownVc& d = op.down[static_cast<size_t>(vc.out_vc)];
    return d.credits - d.reserved > 0;
  }

  std::vector<int> sa_cand_;

  void do_sa(RouterSt& rs) {
    // input-first separable allocation, round-robin on both sides
    const int nports = static_cast<int>(rs.in.size());
    sa_cand_.assign(static_cast<size_t>(nports), -1);
    auto& cand_vc = sa_cand_;
    for (int ip = 0; ip < nports; ++ip) {
      const auto& vcs = rs.in[static_cast<size_t>(ip)];
      const int nv = static_cast<int>(vcs.size());
      if (nv == 0) continue;
      const int start = rs.rr_sa_in[static_cast<size_t>(ip)];
      for (int k = 0; k < nv; ++k) {
        const int v = (start + k) % nv;
        if (sa_eligible(rs, vcs[static_cast<size_t>(v)])) {
          cand_vc[static_cast<size_t>(ip)] = v;
          break;
        }
      }
    }
    const int nout = static_cast<int>(rs.out.size());
    for (int op = 0; op < nout; ++op) {
      OutPort& o = rs.out[static_cast<size_t>(op)];
      if (o.st_in_port >= 0) continue;  // ST register still pending
      int winner = -1;
      const int start = o.rr_sa;
      for (int k = 0; k < nports; ++k) {
        const int ip = (start + k) % nports;
        const int v = cand_vc[static_cast<size_t>(ip)];
        if (v < 0) continue;
        if (rs.in[static_cast<size_t>(ip)][static_cast<size_t>(v)].out_port != op) continue;
        winner = ip;
        break;
      }
      if (winner < 0) continue;
      const int v = cand_vc[static_cast<size_t>(winner)];
      InVc& vc = rs.in[static_cast<size_t>(winner)][static_cast<size_t>(v)];
      o.st_in_port = winner;
      o.st_in_vc = v;
      rs.st_pending++;
      if (vc.st == VcState::Active && !o.is_sink) {
        o.down[static_cast<size_t>(vc.out_vc)].reserved++;
      }
      o.rr_sa = (winner + 1) % nports;
      rs.rr_sa_in[static_cast<size_t>(winner)] =
          (v + 1) % static_cast<int>(rs.in[static_cast<size_t>(winner)].size());
      cand_vc[static_cast<size_t>(winner)] = -1;  // one grant per input port
    }
  }

  bool down_vc_free(const DownVc& d) const {
    if (d.owner == kNoPacket) return true;
    return d.tail_sent && d.reserved == 0 && d.credits == d.depth;
  }
  bool sink_vc_free(const DownVc& d) const { return d.owner == kNoPacket || d.tail_sent; }

  void do_va(RouterSt& rs) {
    const int nports = static_cast<int>(rs.in.size());
    const int nout = static_cast<int>(rs.out.size());
    const int width = rs.va_slot_width;
    for (int op = 0; op < nout; ++op) {
      OutPort& o = rs.out[static_cast<size_t>(op)];
      if (o.down.empty() || o.to_rcb) continue;
      // round-robin over (input port, vc) requesters
      const int slots = nports * width;
      for (int k = 0; k < slots; ++k) {
        const int idx = (o.rr_va_req + k) % slots;
        const int ip = idx / width, v = idx % width;
        auto& vcs = rs.in[static_cast<size_t>(ip)];
        if (v >= static_cast<int>(vcs.size())) continue;
        InVc& vc = vcs[static_cast<size_t>(v)];
        if (vc.st != VcState::VaWait || vc.out_port != op) continue;
        if (vc.count == 0 || vc.front().bw >= now) continue;
        // find a free downstream VC in this packet's range
        const int nv = static_cast<int>(o.down.size());
        int got = -1;
        for (int j = 0; j < nv; ++j) {
          const int dv = (o.rr_va_vc + j) % nv;
          if (!vc.range.contains(dv)) continue;
          DownVc& d = o.down[static_cast<size_t>(dv)];
          if (o.is_sink ? sink_vc_free(d) : down_vc_free(d)) {
            got = dv;
            break;
          }
        }
        if (got < 0) continue;
        DownVc& d = o.down[static_cast<size_t>(got)];
        d.owner = vc.owner;
        d.tail_sent = false;
        vc.out_vc = got;
        vc.st = VcState::Active;
        vc.va_cycle = now;
        o.rr_va_req = (idx + 1) % slots;
        o.rr_va_vc = (got + 1) % nv;
        if (sink) sink->on(now, "va", vc.owner, -1, op, got);
      }
    }
  }

  void do_bw(RouterId r, RouterSt& rs, int port, const Arrival& a) {
    auto& vcs = rs.in[static_cast<size_t>(port)];
    engine_check(static_cast<size_t>(a.vc) < vcs.size(), "BW: arrival VC out of range");
    InVc& vc = vcs[static_cast<size_t>(a.vc)];
    engine_check(vc.count < static_cast<int>(vc.buf.size()), "BW: input VC overflow");
    if (a.flit.is_head()) {
      engine_check(vc.st == VcState::Idle, "BW: HEAD into an allocated VC");
      vc.owner = a.flit.packet;
      rs.occupied_vcs++;
      route_head(r, rs, port, static_cast<int>(a.vc), vc, a.flit);
    } else {
      engine_check(vc.owner == a.flit.packet, "wormhole: foreign flit inside allocation");
    }
    vc.push({a.flit, now});
    vc.last_move = now;
    if (sink) sink->on(now, "bw", a.flit.packet, r, port, a.flit.seq);
  }

  struct RouterCreditView final : CreditView {
    const RouterSt* rs;
    explicit RouterCreditView(const RouterSt* r) : rs(r) {}
    int free_credits(PortKind dir) const override {
      const OutPort& op = rs->out[static_cast<size_t>(static_cast<int>(dir))];
      if (op.link < 0) return 0;
      int sum = 0;
      for (const DownVc& d : op.down) sum += std::max(0, d.credits - d.reserved);
      return sum;
    }
  };

  void route_head(RouterId r, RouterSt& rs, int in_port, int in_vc, InVc& vc, const Flit& f) {
    auto it = live.find(f.packet);
    engine_check(it != live.end(), "HEAD flit for unknown packet");
    PacketRec& rec = it->second;
    const RouterInfo& ri = topo->routers[static_cast<size_t>(r)];
    const PortKind in_kind = ri.ports[static_cast<size_t>(in_port)].kind;

    if (scheme == Scheme::VcSep && !partition_range_at(r, rec).contains(in_vc))
      counters.vcsep_violations++;

    int out_port = -1;
    if (ri.chiplet < 0) {
      // interposer transit toward the router hosting the ingress TSV
      const RouterInfo& ii = topo->routers[static_cast<size_t>(rec.ingress)];
      RouterId host = topo->tsv_interposer(ii.chiplet, ii.local);
      if (scheme == Scheme::Mtr) {
        int8_t nk = mtr->next_transit(topo->routers[static_cast<size_t>(host)].local, ri.local,
                                      in_kind);
        engine_check(nk >= 0, "MTR transit table has no route");
        engine_check(!mtr->restrictions.forbids(Leg::Transit, r, in_kind,
                                                static_cast<PortKind>(nk)),
                     "MTR: forbidden transit turn taken");
        out_port = port_for_kind(ri, static_cast<PortKind>(nk), rec.ingress);
      } else {
        RouterCreditView cv(&rs);
        int tsv_port = (r == host) ? port_for_kind(ri, PortKind::Tsv, rec.ingress) : -1;
        RouteDecision d =
            route_next_hop(*topo, topo->interposer.routing, r, host, cv, true, tsv_port);
        out_port = d.out_port;
      }
    } else if (topo->chiplet_of(r) == topo->chiplet_of(rec.dst)) {
      // journey destination inside this chiplet; inter-chiplet packets here are
      // on their inbound leg
      if (scheme == Scheme::Mtr && rec.inter_chiplet) {
        const RouterInfo& di = topo->routers[static_cast<size_t>(rec.dst)];
        int8_t nk = mtr->next_in(ri.chiplet, di.local, ri.local, in_kind);
        engine_check(nk >= 0, "MTR inbound table has no route");
        engine_check(!mtr->restrictions.forbids(Leg::Inbound, r, in_kind,
                                                static_cast<PortKind>(nk)),
                     "MTR: forbidden inbound turn taken");
        out_port = port_for_kind(ri, static_cast<PortKind>(nk), kNoRouter);
      } else {
        RouterCreditView cv(&rs);
        RouteDecision d = route_next_hop(*topo, topo->chiplet_spec(ri.chiplet).routing, r, rec.dst,
                                         cv, false);
        out_port = d.out_port;
      }
    } else {
      // outbound leg toward the egress boundary
      if (scheme == Scheme::Mtr) {
        const RouterInfo& ei = topo->routers[static_cast<size_t>(rec.egress)];
        int8_t nk = mtr->next_out(ri.chiplet, ei.local, ri.local, in_kind);
        engine_check(nk >= 0, "MTR outbound table has no route");
        engine_check(!mtr->restrictions.forbids(Leg::Outbound, r, in_kind,
                                                static_cast<PortKind>(nk)),
                     "MTR: forbidden outbound turn taken");
        out_port = port_for_kind(ri, static_cast<PortKind>(nk), kNoRouter);
      } else {
        RouterCreditView cv(&rs);
        RouteDecision d = route_next_hop(*topo, topo->chiplet_spec(ri.chiplet).routing, r,
                                         rec.egress, cv, true);
        out_port = d.out_port;
      }
    }

    vc.out_port = out_port;
    vc.range = downstream_range(r, out_port, rec);
    const OutPort& op = rs.out[static_cast<size_t>(out_port)];
    vc.st = op.to_rcb ? VcState::RcbBound : VcState::VaWait;
    if (sink) sink->on(now, "route", f.packet, r, out_port, 0);
  }

  // Allowed VC half at router r under VC separation, for the partition audit.
  VcRange partition_range_at(RouterId r, const PacketRec& rec) const {
    const int vcs = topo->subnet_vc_count(r);
    const bool final_inter =
        topo->chiplet_of(rec.final_src) != topo->chiplet_of(rec.final_dst);
    const int rc = topo->routers[static_cast<size_t>(r)].chiplet;
    const bool at_dest = rc >= 0 && rc == topo->chiplet_of(rec.final_dst);
    return vcsep_vc_range(final_inter, at_dest, vcs);
  }

  int port_for_kind(const RouterInfo& ri, PortKind k, RouterId tsv_peer) const {
    for (size_t i = 0; i < ri.ports.size(); ++i) {
      const PortInfo& pi = ri.ports[i];
      if (pi.kind != k) continue;
      if (k == PortKind::Tsv && tsv_peer != kNoRouter && pi.peer != tsv_peer) continue;
      return static_cast<int>(i);
    }
    engine_check(false, "port_for_kind: no such port");
    return -1;
  }

  VcRange downstream_range(RouterId r, int out_port, const PacketRec& rec) const {
    const RouterInfo& ri = topo->routers[static_cast<size_t>(r)];
    const PortInfo& pi = ri.ports[static_cast<size_t>(out_port)];
    int vcs;
    RouterId down_router;
    if (pi.kind == PortKind::Local) {
      vcs = topo->subnet_vc_count(r);
      down_router = r;
    } else {
      down_router = pi.peer;
      vcs = topo->subnet_vc_count(pi.peer);
    }
    VcRange full{0, static_cast<uint8_t>(vcs)};
    if (scheme != Scheme::VcSep || pi.kind == PortKind::Local) return full;
    const bool final_inter =
        topo->chiplet_of(rec.final_src) != topo->chiplet_of(rec.final_dst);
    const int down_chiplet = topo->routers[static_cast<size_t>(down_router)].chiplet;
    const bool at_dest = down_chiplet >= 0 &&
                         down_chiplet == topo->chiplet_of(rec.final_dst);
    return vcsep_vc_range(final_inter, at_dest, vcs);
  }

  void credit_to_upstream(RouterId r, int in_port, int vc) {
    const UpRef& u = routers[static_cast<size_t>(r)].up[static_cast<size_t>(in_port)];
    const int slot = static_cast<int>((now + 2) & 1);
    switch (u.kind) {
      case UpRef::K::Router: {
        RouterSt& up = routers[static_cast<size_t>(u.a)];
        up.out[static_cast<size_t>(u.b)].down[static_cast<size_t>(vc)]
            .credit_arr[static_cast<size_t>(slot)]++;
        up.credit_msgs++;
        break;
      }
      case UpRef::K::Ni:
        nis[static_cast<size_t>(u.a)].local_down[static_cast<size_t>(vc)]
            .credit_arr[static_cast<size_t>(slot)]++;
        break;
      case UpRef::K::Rcb:
        rcbs[static_cast<size_t>(rcb_index[static_cast<size_t>(u.a)])]
            .down[static_cast<size_t>(vc)]
            .credit_arr[static_cast<size_t>(slot)]++;
        break;
      default:
        engine_check(false, "credit return without upstream");
    }
  }

  // --- phase F: rc_buffer + RCVA ----------------------------------------------

  void rcb_advance(int idx, int p) {
    RcBuffer& rcb = rcbs[static_cast<size_t>(idx)];
    const RouterId br = rcb_router[static_cast<size_t>(idx)];
    // 1. admit the staged flit (written by ST one cycle ago)
    RcBuffer::Entry& e = rcb.entry[static_cast<size_t>(p)];
    if (e.valid) {
      e.valid = false;
      int fifo = rcb.admit(e.flit, e.bw, now);
      if (e.flit.is_head()) {
        auto it = live.find(e.flit.packet);
        engine_check(it != live.end(), "RCB head for unknown packet");
        permits[br].inflight--;
        engine_check(permits[br].inflight >= 0, "permit accounting: inflight underflow");
      }
      if (sink) sink->on(now, "rcb_admit", e.flit.packet, br, fifo, e.flit.seq);
    }
    // 2. one downstream VC allocation per cycle
    rcb.rcva_alloc(now);
    // 3. at most one flit onto the TSV per cycle
    int si = rcb.rcva_pick_sender(now);
    if (si >= 0) {
      RcBuffer::Fifo& q = rcb.fifos[static_cast<size_t>(si)];
      RcBuffer::Slot s = q.buf[static_cast<size_t>(q.head)];
      q.head = (q.head + 1) % static_cast<int>(q.buf.size());
      q.count--;
      q.last_move = now;
      RcBuffer::DownVc& d = rcb.down[static_cast<size_t>(q.vc)];
      d.credits--;
      engine_check(d.credits >= 0, "TSV credit underflow");
      RouterSt& peer = routers[static_cast<size_t>(rcb.tsv_peer)];
      Arrival& a = peer.inbox[(now + 2) & 1][static_cast<size_t>(rcb.tsv_peer_port)];
      engine_check(!a.valid, "TSV flit collision");
      a = {s.flit, static_cast<uint8_t>(q.vc), true};
      peer.inbox_any[(now + 2) & 1] = true;
      metrics.on_link_busy(rcb.tsv_out_link, now);
      metrics.on_router_exit(br, s.bw, now);
      if (sink) sink->on(now, "rcva_send", s.flit.packet, br, si, s.flit.seq);
      if (s.flit.is_tail()) {
        engine_check(q.count == 0, "RCB: tail sent with flits left behind");
        d.tail_sent = true;
        q.owner = kNoPacket;
        q.has_vc = false;
        q.vc = -1;
        opics[static_cast<size_t>(topo->chiplet_of(br))].add_release(rcb.root_local, now);
        if (sink) sink->on(now, "permit_release", s.flit.packet, br, -1, -1);
      }
    }
  }

  // --- phase G: NI injection ----------------------------------------------------

  void ni_send(NodeId n) {
    NiSt& ni = nis[static_cast<size_t>(n)];
    // due retransmissions re-enter the queue
    while (!ni.retry_due.empty() && ni.retry_due.front().first <= now) {
      PacketId id = ni.retry_due.front().second;
      ni.retry_due.pop_front();
      auto it = ni.custody.find(id);
      if (it == ni.custody.end() || !it->second.retry_wait) continue;
      it->second.retry_wait = false;
      it->second.rec.retries++;
      PacketRec again = it->second.rec;
      again.arrived = 0;
      again.drop_at_station = false;
      counters.retransmissions++;
      ni_enqueue(again);
      if (sink) sink->on(now, "retransmit", id, n, -1, -1);
    }
    if (ni.cur == kNoPacket && !ni.queue.empty()) {
      PacketRec& head = ni.queue.front();
      const bool eligible = !head.gated || ni.token;
      if (eligible) {
        VcRange range = injection_range(n, head);
        int got = -1;
        for (int v = range.lo; v < range.hi; ++v) {
          DownVc& d = ni.local_down[static_cast<size_t>(v)];
          if (down_vc_free(d) && d.credits > 0) {
            got = v;
            break;
          }
        }
        if (got >= 0) {
          PacketRec rec = head;
          ni.queue.pop_front();
          queued_flits -= rec.flits;
          if (rec.t_inject < 0) rec.t_inject = now;
          if (rec.t_request < 0) rec.t_request = now;
          if (rec.t_grant < 0) rec.t_grant = now;
          if (scheme == Scheme::Itb && rec.kind == PacketRec::Kind::Data) {
            // the custody copy keeps first-injection stamps for retry latency
            auto cit = ni.custody.find(rec.id);
            if (cit != ni.custody.end()) {
              if (cit->second.rec.t_inject < 0) cit->second.rec.t_inject = rec.t_inject;
              if (cit->second.rec.t_request < 0) cit->second.rec.t_request = rec.t_request;
              if (cit->second.rec.t_grant < 0) cit->second.rec.t_grant = rec.t_grant;
            }
          }
          if (rec.gated) {
            ni.token = false;
            ni.requested = false;
            permits[rec.egress].tokens--;
            permits[rec.egress].inflight++;
          }
          DownVc& d = ni.local_down[static_cast<size_t>(got)];
          d.owner = rec.id;
          d.tail_sent = false;
          ni.cur = rec.id;
          ni.cur_flits = rec.flits;
          ni.next_seq = 0;
          ni.send_vc = got;
          ++sending_nis;
          live[rec.id] = rec;
          if (sink) sink->on(now, "inject", rec.id, n, -1, -1);
        }
      }
    }
    if (ni.cur != kNoPacket) {
      DownVc& d = ni.local_down[static_cast<size_t>(ni.send_vc)];
      if (d.credits > 0) {
        Flit f;
        f.packet = ni.cur;
        f.seq = ni.next_seq;
        if (ni.cur_flits == 1)
          f.kind = FlitKind::HeadTail;
        else if (ni.next_seq == 0)
          f.kind = FlitKind::Head;
        else if (ni.next_seq == ni.cur_flits - 1)
          f.kind = FlitKind::Tail;
        else
          f.kind = FlitKind::Body;
        d.credits--;
        RouterSt& rs = routers[static_cast<size_t>(ni.router)];
        Arrival& a = rs.inbox[(now + 2) & 1][static_cast<size_t>(ni.local_port)];
        engine_check(!a.valid, "injection wire collision");
        a = {f, static_cast<uint8_t>(ni.send_vc), true};
        rs.inbox_any[(now + 2) & 1] = true;
        counters.injected_flits++;
        counters.in_network_flits++;
        ni.next_seq++;
        if (f.is_tail()) {
          d.tail_sent = true;
          ni.cur = kNoPacket;
          ni.send_vc = -1;
          --sending_nis;
        }
      }
    }
  }

  VcRange injection_range(NodeId n, const PacketRec& rec) const {
    const int vcs = topo->subnet_vc_count(n);
    VcRange full{0, static_cast<uint8_t>(vcs)};
    if (scheme != Scheme::VcSep) return full;
    const bool final_inter =
        topo->chiplet_of(rec.final_src) != topo->chiplet_of(rec.final_dst);
    return vcsep_vc_range(final_inter, false, vcs);
  }

  // --- invariant checks ---------------------------------------------------------

  void run_checks() {
    engine_check(counters.in_network_flits >= 0, "flit conservation: negative in-network count");
    if (scheme == Scheme::Rc) {
      for (auto& [br, acct] : permits) {
        const RcBuffer& rcb = rcbs[static_cast<size_t>(rcb_index[static_cast<size_t>(br)])];
        const RouterInfo& ri = topo->routers[static_cast<size_t>(br)];
        const OpicSystem& o = opics[static_cast<size_t>(ri.chiplet)];
        int total = o.root_pc(ri.local) + o.inflight_wire_permits(ri.local) + acct.tokens +
                    acct.inflight + rcb.occupied();
        counters.permit_checks++;
        engine_check(total == cfg.scheme.rc_capacity,
                     "permit conservation violated at a boundary router");
      }
    }
    if (cfg.engine.audit_period > 0 && now > 0 && now % cfg.engine.audit_period == 0) deep_audit();
  }

  void deep_audit() const {
    // recount every flit the engine believes is in the network
    int64_t counted = 0;
    for (const RouterSt& rs : routers) {
      for (const auto& port : rs.in)
        for (const InVc& vc : port) counted += vc.count;
      for (const auto& box : rs.inbox)
        for (const Arrival& a : box) counted += a.valid ? 1 : 0;
    }
    for (const NiSt& ni : nis)
      for (const Arrival& a : ni.eject) counted += a.valid ? 1 : 0;
    for (const RcBuffer& rcb : rcbs) {
      for (const RcBuffer::Fifo& f : rcb.fifos) counted += f.count;
      for (const RcBuffer::Entry& e : rcb.entry) counted += e.valid ? 1 : 0;
    }
    engine_check(counted == counters.in_network_flits,
                 "flit conservation: recount mismatch (leak or duplication)");
    // credit conservation per (link, vc)
    for (RouterId r = 0; r < topo->router_count; ++r) {
      const RouterSt& rs = routers[static_cast<size_t>(r)];
      for (const OutPort& op : rs.out) {
        if (op.is_sink || op.to_rcb || op.link < 0) continue;
        audit_tracker(op.down, op.peer, op.peer_port);
      }
    }
    for (const NiSt& ni : nis) audit_tracker(ni.local_down, ni.router, ni.local_port);
    for (const RcBuffer& rcb : rcbs) {
      std::vector<DownVc> tmp(rcb.down.size());
      for (size_t v = 0; v < rcb.down.size(); ++v) {
        tmp[v].credits = rcb.down[v].credits;
        tmp[v].reserved = 0;
        tmp[v].depth = rcb.down[v].depth;
        tmp[v].credit_arr = rcb.down[v].credit_arr;
      }
      audit_tracker(tmp, rcb.tsv_peer, rcb.tsv_peer_port);
    }
  }

  // credits include SA-reserved slots until the flit departs at ST, so the
  // conserved quantity is credits + returns in flight + occupancy downstream
  void audit_tracker(const std::vector<DownVc>& down, RouterId peer, int peer_port) const {
    const RouterSt& ps = routers[static_cast<size_t>(peer)];
    for (size_t v = 0; v < down.size(); ++v) {
      int64_t sum = down[v].credits + down[v].credit_arr[0] + down[v].credit_arr[1];
      sum += ps.in[static_cast<size_t>(peer_port)][v].count;
      for (const auto& box : ps.inbox) {
        const Arrival& a = box[static_cast<size_t>(peer_port)];
        if (a.valid && a.vc == v) sum += 1;
      }
      engine_check(sum == down[v].depth, "credit conservation violated on a link");
    }
  }
};

}  // namespace rcnoc

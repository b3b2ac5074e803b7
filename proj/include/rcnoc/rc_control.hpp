#pragma once

#include <array>
#include <limits>
#include <numeric>
#include <vector>

#include "rcnoc/topology.hpp"

namespace rcnoc {

// ---------------------------------------------------------------------------
// OPIC: one permit-counting block per chiplet node, wired leaf-to-root along
// the OPIC tree with 1-cycle REQ/RESP hops. The local NI couples
// combinationally inside its block's cycle: a request raised at cycle t is
// registered at the parent at t+1; a root grant issued at cycle g reaches a
// depth-d requester's NI during g+d. Uncontended grant latency is 2 cycles
// per tree level.
class OpicSystem {
 public:
  struct Block {
    int parent = -1;
    int my_cm = -1;  // slot in the parent's children list
    std::vector<int> children;
    int boundary = -1;
    bool is_root = false;
    int pc = 0;
    std::vector<int> reg;  // per CM: children..., local NI last
    int rr = 0;            // ring start, advances every cycle
    int pending_up = 0;
    std::vector<std::array<int, 2>> child_req_in;
    std::array<int, 2> parent_resp_in{{0, 0}};
    std::array<int, 2> release_in{{0, 0}};
  };

  OpicSystem() = default;

  OpicSystem(const OpicTreePlan& plan, int rc_capacity, int wire_bits) {
    capacity = rc_capacity;
    wire_cap = wire_bits > 0 ? (1 << wire_bits) - 1 : std::numeric_limits<int>::max();
    const int n = static_cast<int>(plan.size());
    blocks.resize(static_cast<size_t>(n));
    ni_req.assign(static_cast<size_t>(n), 0);
    ni_grant.assign(static_cast<size_t>(n), 0);
    for (int v = 0; v < n; ++v) {
      Block& b = blocks[static_cast<size_t>(v)];
      b.parent = plan[static_cast<size_t>(v)].parent;
      b.children = plan[static_cast<size_t>(v)].children;
      b.boundary = plan[static_cast<size_t>(v)].boundary;
      b.is_root = b.parent < 0;
      b.reg.assign(b.children.size() + 1, 0);
      b.child_req_in.assign(b.children.size(), {{0, 0}});
      if (b.is_root) b.pc = rc_capacity;
      for (size_t ci = 0; ci < b.children.size(); ++ci)
        blocks[static_cast<size_t>(b.children[ci])].my_cm = static_cast<int>(ci);
      members[b.boundary].push_back(v);
    }
  }

  // NI-side request raised during the current cycle, before advance().
  void raise_ni_request(int local) { ni_req[static_cast<size_t>(local)] = 1; }

  // Permit released by the RCB during `now`; the root counts it at now+1.
  void add_release(int boundary_local, Cycle now) {
    blocks[static_cast<size_t>(boundary_local)].release_in[(now + 1) & 1] += 1;
  }

  int take_ni_grant(int local) {
    int g = ni_grant[static_cast<size_t>(local)];
    ni_grant[static_cast<size_t>(local)] = 0;
    return g;
  }

  void advance(Cycle now) {
    const int p = static_cast<int>(now & 1);
    for (size_t v = 0; v < blocks.size(); ++v) {
      Block& b = blocks[v];
      const int ncm = static_cast<int>(b.children.size()) + 1;
      const int ni = ncm - 1;
      for (size_t ci = 0; ci < b.children.size(); ++ci) {
        b.reg[ci] += b.child_req_in[ci][static_cast<size_t>(p)];
        b.child_req_in[ci][static_cast<size_t>(p)] = 0;
      }
      int got = b.parent_resp_in[static_cast<size_t>(p)];
      b.parent_resp_in[static_cast<size_t>(p)] = 0;
      b.pc += got;
      b.pending_up -= got;
      engine_check(b.pending_up >= 0, "opic: RESP grants exceed pending requests");
      if (b.is_root) {
        b.pc += b.release_in[static_cast<size_t>(p)];
        b.release_in[static_cast<size_t>(p)] = 0;
        engine_check(b.pc <= capacity, "opic: root PC exceeds rc_capacity");
      }
      if (ni_req[v]) {
        b.reg[static_cast<size_t>(ni)] += 1;
        ni_req[v] = 0;
      }
      // round-robin CM ring, combinational within the cycle
      const int start = b.rr % ncm;
      b.rr = (b.rr + 1) % ncm;
      for (int k = 0; k < ncm && b.pc > 0; ++k) {
        const int i = (start + k) % ncm;
        int g = std::min(b.reg[static_cast<size_t>(i)], b.pc);
        if (i != ni) g = std::min(g, wire_cap);
        if (g <= 0) continue;
        b.reg[static_cast<size_t>(i)] -= g;
        b.pc -= g;
        if (i == ni) {
          ni_grant[v] += g;
        } else {
          Block& child = blocks[static_cast<size_t>(b.children[static_cast<size_t>(i)])];
          child.parent_resp_in[static_cast<size_t>(1 - p)] += g;
        }
      }
      engine_check(b.pc >= 0, "opic: PC underflow");
      if (!b.is_root) {
        int total = std::accumulate(b.reg.begin(), b.reg.end(), 0);
        int deficit = total - b.pc - b.pending_up;
        int send = std::min(std::max(0, deficit), wire_cap);
        if (send > 0) {
          Block& parent = blocks[static_cast<size_t>(b.parent)];
          parent.child_req_in[static_cast<size_t>(b.my_cm)][static_cast<size_t>(1 - p)] += send;
          b.pending_up += send;
        }
      }
    }
  }

  int root_pc(int boundary_local) const {
    return blocks[static_cast<size_t>(boundary_local)].pc;
  }

  // Permits travelling on RESP/release wires of one tree.
  int inflight_wire_permits(int boundary_local) const {
    int sum = 0;
    for (int v : members.at(boundary_local)) {
      const Block& b = blocks[static_cast<size_t>(v)];
      sum += b.parent_resp_in[0] + b.parent_resp_in[1];
      if (b.is_root) sum += b.release_in[0] + b.release_in[1];
    }
    return sum;
  }

  std::vector<Block> blocks;
  std::vector<uint8_t> ni_req;
  std::vector<int> ni_grant;
  std::map<int, std::vector<int>> members;  // boundary local -> tree members
  int capacity = 0;
  int wire_cap = 0;
};

// ---------------------------------------------------------------------------
// rc_buffer: per-boundary collection of packet FIFOs plus the RCVA state that
// feeds the TSV link one flit per cycle.

class RcBuffer {
 public:
  struct Slot {
    Flit flit;
    Cycle bw = 0;  // BW cycle at this boundary router, for residency accounting
  };
  struct Fifo {
    PacketId owner = kNoPacket;
    std::vector<Slot> buf;
    int head = 0, count = 0;
    bool has_vc = false;
    int vc = -1;
    Cycle alloc_cycle = -1;
    Cycle head_entry = -1;
    Cycle last_move = 0;
  };
  struct DownVc {
    PacketId owner = kNoPacket;
    bool tail_sent = false;
    int credits = 0;
    int depth = 0;
    std::array<int, 2> credit_arr{{0, 0}};
  };
  struct Entry {
    Flit flit;
    Cycle bw = 0;
    bool valid = false;
  };

  RcBuffer() = default;
  RcBuffer(int capacity, int max_flits, int tsv_vcs, const std::vector<int>& vc_depths) {
    fifos.resize(static_cast<size_t>(capacity));
    for (Fifo& f : fifos) f.buf.resize(static_cast<size_t>(max_flits));
    down.resize(static_cast<size_t>(tsv_vcs));
    for (size_t v = 0; v < down.size(); ++v) {
      down[v].depth = vc_depths[v];
      down[v].credits = vc_depths[v];
    }
  }

  int occupied() const {
    int n = 0;
    for (const Fifo& f : fifos)
      if (f.owner != kNoPacket) ++n;
    return n;
  }

  // HEAD flits reserve the lowest free fifo; admission is guaranteed by the
  // permit accounting, so a missing slot is a hard fault.
  int admit(const Flit& f, Cycle bw_stamp, Cycle now) {
    if (f.is_head()) {
      int idx = -1;
      for (size_t i = 0; i < fifos.size(); ++i) {
        if (fifos[i].owner == kNoPacket) {
          idx = static_cast<int>(i);
          break;
        }
      }
      engine_check(idx >= 0, "rcb_admit: HEAD with no free fifo (permit accounting bug)");
      Fifo& q = fifos[static_cast<size_t>(idx)];
      q.owner = f.packet;
      q.head = q.count = 0;
      q.has_vc = false;
      q.vc = -1;
      q.alloc_cycle = -1;
      q.head_entry = now;
      q.buf[0] = {f, bw_stamp};
      q.count = 1;
      q.last_move = now;
      return idx;
    }
    for (size_t i = 0; i < fifos.size(); ++i) {
      Fifo& q = fifos[i];
      if (q.owner != f.packet) continue;
      engine_check(q.count < static_cast<int>(q.buf.size()), "rcb_admit: fifo depth exceeded");
      q.buf[static_cast<size_t>((q.head + q.count) % static_cast<int>(q.buf.size()))] = {
          f, bw_stamp};
      q.count++;
      q.last_move = now;
      return static_cast<int>(i);
    }
    engine_check(false, "rcb_admit: BODY/TAIL flit without a resident fifo");
    return -1;
  }

  bool vc_free(int v) const {
    const DownVc& d = down[static_cast<size_t>(v)];
    return d.owner == kNoPacket || (d.tail_sent && d.credits == d.depth);
  }

  // One downstream-VC allocation per cycle, round-robin over candidate
  // fifos then over free VCs.
  int rcva_alloc(Cycle now) {
    const int nf = static_cast<int>(fifos.size());
    for (int k = 0; k < nf; ++k) {
      int i = (rr_alloc + k) % nf;
      Fifo& q = fifos[static_cast<size_t>(i)];
      if (q.owner == kNoPacket || q.has_vc || q.head_entry >= now) continue;
      const int nv = static_cast<int>(down.size());
      for (int j = 0; j < nv; ++j) {
        int v = (rr_vc + j) % nv;
        if (!vc_free(v)) continue;
        DownVc& d = down[static_cast<size_t>(v)];
        d.owner = q.owner;
        d.tail_sent = false;
        q.has_vc = true;
        q.vc = v;
        q.alloc_cycle = now;
        rr_alloc = (i + 1) % nf;
        rr_vc = (v + 1) % nv;
        return i;
      }
      return -1;  // candidate exists but no free VC this cycle
    }
    return -1;
  }

  // Fifo eligible to put one flit on the TSV this cycle, or -1.
  int rcva_pick_sender(Cycle now) const {
    if (freeze_tsv) return -1;
    const int nf = static_cast<int>(fifos.size());
    for (int k = 0; k < nf; ++k) {
      int i = (rr_send + k) % nf;
      const Fifo& q = fifos[static_cast<size_t>(i)];
      if (q.owner == kNoPacket || !q.has_vc || q.alloc_cycle >= now || q.count == 0) continue;
      if (down[static_cast<size_t>(q.vc)].credits <= 0) continue;
      return i;
    }
    return -1;
  }

  std::vector<Fifo> fifos;
  std::vector<DownVc> down;
  Entry entry[2];
  int rr_alloc = 0, rr_vc = 0, rr_send = 0;
  int tsv_out_link = -1;
  RouterId tsv_peer = kNoRouter;
  int tsv_peer_port = -1;
  int root_local = -1;
  bool freeze_tsv = false;  // test hook: simulates a credit-starved TSV
};

}  // namespace rcnoc

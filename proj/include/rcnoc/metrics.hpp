#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "rcnoc/types.hpp"

namespace rcnoc {

struct MetricsReport {
  bool empty = true;
  double avg_latency = 0;  // creation to tail delivery, cycles
  double p50 = 0, p95 = 0, p99 = 0;
  double q_delay = 0;      // queue wait before request + wait after grant
  double grant_delay = 0;  // t_grant - t_request
  double net_delay = 0;    // t_delivered - t_inject, includes retries
  double accepted_rate = 0;  // delivered flits/node/cycle over the measurement window
  Cycle drain_cycles = 0;
  Verdict verdict = Verdict::Live;
  uint64_t delivered_packets = 0;
  uint64_t created_packets = 0;
  std::vector<double> router_residency;   // mean flit cycles per router
  std::vector<double> link_utilization;   // max busy fraction over sample windows
};

// Streaming accumulators the engine feeds inline; summarize() folds them into
// a report over the measurement window only.
class MetricsCollector {
 public:
  Cycle win_start = 0, win_end = 0;  // measurement window [start, end)
  Cycle link_window = 10000;

  std::vector<uint32_t> latencies;
  uint64_t sum_latency = 0, sum_q = 0, sum_grant = 0, sum_net = 0;
  uint64_t delivered_packets = 0;
  uint64_t created_packets = 0;
  uint64_t delivered_flits_in_window = 0;

  std::vector<uint64_t> router_flit_cycles;
  std::vector<uint64_t> router_flits;
  std::vector<uint32_t> link_busy_cur;
  std::vector<uint32_t> link_busy_max;
  Cycle cur_window_end = 0;

  void reset(size_t routers, size_t links, Cycle measure_start, Cycle measure_end,
             Cycle link_win) {
    win_start = measure_start;
    win_end = measure_end;
    link_window = link_win;
    latencies.clear();
    sum_latency = sum_q = sum_grant = sum_net = 0;
    delivered_packets = created_packets = delivered_flits_in_window = 0;
    router_flit_cycles.assign(routers, 0);
    router_flits.assign(routers, 0);
    link_busy_cur.assign(links, 0);
    link_busy_max.assign(links, 0);
    cur_window_end = measure_start + link_window;
  }

  bool in_window(Cycle c) const { return c >= win_start && c < win_end; }

  void on_created(Cycle c) {
    if (in_window(c)) ++created_packets;
  }

  void on_link_busy(int link, Cycle now) {
    if (!in_window(now) || link < 0) return;
    roll(now);
    link_busy_cur[static_cast<size_t>(link)]++;
  }

  void on_router_exit(RouterId r, Cycle enter, Cycle exit) {
    if (!in_window(exit)) return;
    router_flit_cycles[static_cast<size_t>(r)] += static_cast<uint64_t>(exit - enter + 1);
    router_flits[static_cast<size_t>(r)]++;
  }

  void on_delivered_flit(Cycle now) {
    if (in_window(now)) ++delivered_flits_in_window;
  }

  // Component split keeps q + grant + net summing to the total latency.
  void on_delivered_packet(Cycle created, Cycle request, Cycle grant, Cycle inject,
                           Cycle delivered) {
    if (!(created >= win_start && created < win_end)) return;
    ++delivered_packets;
    uint64_t total = static_cast<uint64_t>(delivered - created);
    latencies.push_back(static_cast<uint32_t>(total));
    sum_latency += total;
    sum_grant += static_cast<uint64_t>(grant - request);
    sum_net += static_cast<uint64_t>(delivered - inject);
    sum_q += static_cast<uint64_t>(request - created) + static_cast<uint64_t>(inject - grant);
  }

  void roll(Cycle now) {
    while (now >= cur_window_end) {
      for (size_t i = 0; i < link_busy_cur.size(); ++i) {
        link_busy_max[i] = std::max(link_busy_max[i], link_busy_cur[i]);
        link_busy_cur[i] = 0;
      }
      cur_window_end += link_window;
    }
  }

  MetricsReport summarize(int node_count, Verdict verdict, Cycle drain_cycles) {
    MetricsReport r;
    r.verdict = verdict;
    r.drain_cycles = drain_cycles;
    r.created_packets = created_packets;
    r.delivered_packets = delivered_packets;
    const Cycle measure = win_end - win_start;
    if (delivered_packets == 0 || measure <= 0) {
      r.empty = true;
      return r;
    }
    r.empty = false;
    r.avg_latency = static_cast<double>(sum_latency) / delivered_packets;
    r.q_delay = static_cast<double>(sum_q) / delivered_packets;
    r.grant_delay = static_cast<double>(sum_grant) / delivered_packets;
    r.net_delay = static_cast<double>(sum_net) / delivered_packets;
    std::vector<uint32_t> s = latencies;
    auto pct = [&](double p) {
      size_t idx = static_cast<size_t>(p * (s.size() - 1));
      std::nth_element(s.begin(), s.begin() + static_cast<long>(idx), s.end());
      return static_cast<double>(s[idx]);
    };
    r.p50 = pct(0.50);
    r.p95 = pct(0.95);
    r.p99 = pct(0.99);
    r.accepted_rate =
        static_cast<double>(delivered_flits_in_window) / (static_cast<double>(node_count) * measure);
    r.router_residency.resize(router_flits.size(), 0.0);
    for (size_t i = 0; i < router_flits.size(); ++i)
      if (router_flits[i] > 0)
        r.router_residency[i] =
            static_cast<double>(router_flit_cycles[i]) / static_cast<double>(router_flits[i]);
    // close the last partial window
    for (size_t i = 0; i < link_busy_cur.size(); ++i)
      link_busy_max[i] = std::max(link_busy_max[i], link_busy_cur[i]);
    r.link_utilization.resize(link_busy_max.size(), 0.0);
    for (size_t i = 0; i < link_busy_max.size(); ++i)
      r.link_utilization[i] =
          static_cast<double>(link_busy_max[i]) / static_cast<double>(link_window);
    return r;
  }
};

}  // namespace rcnoc

#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rcnoc/topology.hpp"
#include "rcnoc/traffic.hpp"
#include "rcnoc/types.hpp"

namespace rcnoc {

using Json = nlohmann::json;

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct SchemeConfig {
  Scheme kind = Scheme::Rc;
  int rc_capacity = 4;     // rc_buffer packet slots per boundary router
  int opic_wire_bits = 2;  // request/response line width; 0 = unbounded counts
  int itb_capacity = 4;    // ITB station packet slots
  int retry_delay = 32;    // cycles a custodian waits after a NACK
  std::string restriction_file;  // MTR: load turn restrictions instead of synthesis
};

struct EngineConfig {
  Cycle watchdog_window = 10000;
  Cycle sample_period = 100;
  Cycle starvation_window = 50000;
  Cycle audit_period = 4096;  // deep state recount period; 0 disables
  Cycle link_sample_window = 10000;
};

struct OutputConfig {
  std::string dir = "out";
  int verbosity = 1;
  bool heatmaps = false;
};

struct SweepConfig {
  std::vector<double> rates;
  std::vector<Scheme> schemes;
  std::vector<TrafficPattern> patterns;
  std::vector<uint64_t> seeds;
};

struct SimConfig {
  TopologyConfig topology;
  SchemeConfig scheme;
  TrafficSpec traffic;
  EngineConfig engine;
  SweepConfig sweep;
  OutputConfig output;
};

// Rotationally spread default boundary placement; yields {1,7,8,14} on 4x4,
// all four nodes on 2x2, and {3,31,32,60} on 8x8.
inline std::vector<int> default_boundaries(int w, int h) {
  int q = std::max(0, w / 2 - 1);
  int p = std::max(0, h / 2 - 1);
  std::vector<int> out;
  for (int id : {0 * w + q, p * w + (w - 1), (h - 1 - p) * w + 0, (h - 1) * w + (w - 1 - q)})
    if (std::find(out.begin(), out.end(), id) == out.end()) out.push_back(id);
  std::sort(out.begin(), out.end());
  return out;
}

// The default SoC: four 4x4 GPU chiplets and one 2x2 CPU chiplet (all four CPU
// nodes are boundaries) on a 4x4 interposer.
inline TopologyConfig default_topology() {
  TopologyConfig t;
  for (int i = 0; i < 4; ++i) {
    ChipletSpec c;
    c.name = "gpu" + std::to_string(i);
    c.width = c.height = 4;
    c.boundary_routers = default_boundaries(4, 4);
    t.chiplets.push_back(c);
  }
  ChipletSpec cpu;
  cpu.name = "cpu";
  cpu.width = cpu.height = 2;
  cpu.boundary_routers = default_boundaries(2, 2);
  t.chiplets.push_back(cpu);
  return t;
}

namespace cfgdetail {

inline void require_keys(const Json& j, const std::string& path,
                         const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError(path + "." + it.key() + ": unknown key");
}

template <typename T>
inline void get_to(const Json& j, const std::string& path, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const Json::exception& e) {
    throw ConfigError(path + "." + key + ": " + e.what());
  }
}

template <typename E>
inline void get_enum(const Json& j, const std::string& path, const char* key, E& out) {
  if (!j.contains(key)) return;
  std::string s;
  get_to(j, path, key, s);
  if (!parse_enum(s, out)) throw ConfigError(path + "." + key + ": unknown value '" + s + "'");
}

inline void load_mesh_common(const Json& j, const std::string& path, int& w, int& h, int& vcs,
                             int& depth, std::vector<int>& depths, RoutingPolicy& routing) {
  get_to(j, path, "width", w);
  get_to(j, path, "height", h);
  get_to(j, path, "vc_count", vcs);
  get_to(j, path, "vc_depth", depth);
  get_to(j, path, "vc_depths", depths);
  get_enum(j, path, "routing", routing);
}

}  // namespace cfgdetail

inline SimConfig config_from_json(const Json& root) {
  using namespace cfgdetail;
  SimConfig cfg;
  require_keys(root, "config",
               {"topology", "scheme", "traffic", "engine", "sweep", "output"});

  if (root.contains("topology")) {
    const Json& jt = root.at("topology");
    require_keys(jt, "topology", {"chiplets", "interposer", "tsv_map"});
    if (jt.contains("chiplets")) {
      const Json& jc = jt.at("chiplets");
      if (!jc.is_array()) throw ConfigError("topology.chiplets: expected an array");
      for (size_t i = 0; i < jc.size(); ++i) {
        const std::string path = "topology.chiplets[" + std::to_string(i) + "]";
        const Json& e = jc.at(i);
        require_keys(e, path,
                     {"name", "width", "height", "boundaries", "routing", "vc_count", "vc_depth",
                      "vc_depths", "count"});
        ChipletSpec c;
        get_to(e, path, "name", c.name);
        load_mesh_common(e, path, c.width, c.height, c.vc_count, c.vc_depth, c.vc_depths,
                         c.routing);
        get_to(e, path, "boundaries", c.boundary_routers);
        if (c.boundary_routers.empty()) c.boundary_routers = default_boundaries(c.width, c.height);
        int count = 1;
        get_to(e, path, "count", count);
        if (count < 1) throw ConfigError(path + ".count: must be >= 1");
        for (int k = 0; k < count; ++k) {
          ChipletSpec ck = c;
          if (count > 1) ck.name = c.name + std::to_string(k);
          if (ck.name.empty()) ck.name = "chiplet" + std::to_string(cfg.topology.chiplets.size());
          cfg.topology.chiplets.push_back(ck);
        }
      }
    }
    if (jt.contains("interposer")) {
      const Json& ji = jt.at("interposer");
      require_keys(ji, "topology.interposer",
                   {"width", "height", "vc_count", "vc_depth", "vc_depths", "routing"});
      InterposerSpec& s = cfg.topology.interposer;
      load_mesh_common(ji, "topology.interposer", s.width, s.height, s.vc_count, s.vc_depth,
                       s.vc_depths, s.routing);
    }
    if (jt.contains("tsv_map")) {
      const Json& jm = jt.at("tsv_map");
      if (!jm.is_object()) throw ConfigError("topology.tsv_map: expected an object");
      // filled after chiplet names are known, below
      for (auto it = jm.begin(); it != jm.end(); ++it) {
        const std::string& key = it.key();
        size_t dot = key.rfind('.');
        if (dot == std::string::npos)
          throw ConfigError("topology.tsv_map." + key + ": expected '<chiplet>.<boundary>'");
        std::string cname = key.substr(0, dot);
        int blocal = -1;
        try {
          blocal = std::stoi(key.substr(dot + 1));
        } catch (...) {
          throw ConfigError("topology.tsv_map." + key + ": bad boundary index");
        }
        int ci = -1;
        for (size_t k = 0; k < cfg.topology.chiplets.size(); ++k)
          if (cfg.topology.chiplets[k].name == cname) ci = static_cast<int>(k);
        if (ci < 0) throw ConfigError("topology.tsv_map." + key + ": unknown chiplet");
        int il = -1;
        try {
          it.value().get_to(il);
        } catch (const Json::exception& e) {
          throw ConfigError("topology.tsv_map." + key + ": " + e.what());
        }
        cfg.topology.tsv_map[{ci, blocal}] = il;
      }
    }
  }
  if (cfg.topology.chiplets.empty()) cfg.topology = default_topology();

  if (root.contains("scheme")) {
    const Json& js = root.at("scheme");
    require_keys(js, "scheme",
                 {"kind", "rc_capacity", "opic_wire_bits", "itb_capacity", "retry_delay",
                  "restriction_file"});
    get_enum(js, "scheme", "kind", cfg.scheme.kind);
    get_to(js, "scheme", "rc_capacity", cfg.scheme.rc_capacity);
    get_to(js, "scheme", "opic_wire_bits", cfg.scheme.opic_wire_bits);
    get_to(js, "scheme", "itb_capacity", cfg.scheme.itb_capacity);
    get_to(js, "scheme", "retry_delay", cfg.scheme.retry_delay);
    get_to(js, "scheme", "restriction_file", cfg.scheme.restriction_file);
  }

  if (root.contains("traffic")) {
    const Json& jt = root.at("traffic");
    require_keys(jt, "traffic",
                 {"pattern", "rate", "packet_flits", "seed", "warmup", "measure", "drain_max",
                  "scenario_file"});
    get_enum(jt, "traffic", "pattern", cfg.traffic.pattern);
    get_to(jt, "traffic", "rate", cfg.traffic.rate);
    get_to(jt, "traffic", "packet_flits", cfg.traffic.packet_flits);
    get_to(jt, "traffic", "seed", cfg.traffic.seed);
    get_to(jt, "traffic", "warmup", cfg.traffic.warmup);
    get_to(jt, "traffic", "measure", cfg.traffic.measure);
    get_to(jt, "traffic", "drain_max", cfg.traffic.drain_max);
    get_to(jt, "traffic", "scenario_file", cfg.traffic.scenario_file);
  }

  if (root.contains("engine")) {
    const Json& je = root.at("engine");
    require_keys(je, "engine",
                 {"watchdog_window", "sample_period", "starvation_window", "audit_period",
                  "link_sample_window"});
    get_to(je, "engine", "watchdog_window", cfg.engine.watchdog_window);
    get_to(je, "engine", "sample_period", cfg.engine.sample_period);
    get_to(je, "engine", "starvation_window", cfg.engine.starvation_window);
    get_to(je, "engine", "audit_period", cfg.engine.audit_period);
    get_to(je, "engine", "link_sample_window", cfg.engine.link_sample_window);
  }

  if (root.contains("sweep")) {
    const Json& js = root.at("sweep");
    require_keys(js, "sweep", {"rates", "schemes", "patterns", "seeds"});
    get_to(js, "sweep", "rates", cfg.sweep.rates);
    get_to(js, "sweep", "seeds", cfg.sweep.seeds);
    if (js.contains("schemes")) {
      for (const Json& e : js.at("schemes")) {
        Scheme s;
        std::string v = e.get<std::string>();
        if (!parse_enum(v, s)) throw ConfigError("sweep.schemes: unknown value '" + v + "'");
        cfg.sweep.schemes.push_back(s);
      }
    }
    if (js.contains("patterns")) {
      for (const Json& e : js.at("patterns")) {
        TrafficPattern p;
        std::string v = e.get<std::string>();
        if (!parse_enum(v, p)) throw ConfigError("sweep.patterns: unknown value '" + v + "'");
        cfg.sweep.patterns.push_back(p);
      }
    }
  }
  if (cfg.sweep.rates.empty())
    for (int i = 1; i <= 10; ++i) cfg.sweep.rates.push_back(0.05 * i);
  if (cfg.sweep.schemes.empty())
    cfg.sweep.schemes = {Scheme::Rc, Scheme::Mtr, Scheme::VcSep, Scheme::Itb};
  if (cfg.sweep.patterns.empty())
    cfg.sweep.patterns = {TrafficPattern::UniformRandom, TrafficPattern::BitComplement};
  if (cfg.sweep.seeds.empty()) cfg.sweep.seeds = {cfg.traffic.seed};

  if (root.contains("output")) {
    const Json& jo = root.at("output");
    require_keys(jo, "output", {"dir", "verbosity", "heatmaps"});
    get_to(jo, "output", "dir", cfg.output.dir);
    get_to(jo, "output", "verbosity", cfg.output.verbosity);
    get_to(jo, "output", "heatmaps", cfg.output.heatmaps);
  }
  return cfg;
}

inline void validate_config(const SimConfig& cfg) {
  for (const ChipletSpec& c : cfg.topology.chiplets) validate_chiplet(c);
  if (cfg.traffic.packet_flits < 1) throw ConfigError("traffic.packet_flits: must be >= 1");
  if (cfg.traffic.rate < 0.0 || cfg.traffic.rate > 1.0)
    throw ConfigError("traffic.rate: must be in (0, 1]");
  if (cfg.traffic.warmup < 0 || cfg.traffic.measure < 0 || cfg.traffic.drain_max < 0)
    throw ConfigError("traffic phases: must be >= 0");
  if (cfg.scheme.kind == Scheme::Rc && cfg.scheme.rc_capacity < 1)
    throw ConfigError("scheme.rc_capacity: must be >= 1 for scheme RC");
  if (cfg.scheme.kind == Scheme::VcSep) {
    for (const ChipletSpec& c : cfg.topology.chiplets)
      if (c.vc_count % 2 != 0)
        throw ConfigError("topology.chiplets(" + c.name +
                          ").vc_count: vc_count must be even for scheme VCSEP");
    if (cfg.topology.interposer.vc_count % 2 != 0)
      throw ConfigError("topology.interposer.vc_count: vc_count must be even for scheme VCSEP");
  }
  if (cfg.scheme.kind == Scheme::Itb && cfg.scheme.itb_capacity < 0)
    throw ConfigError("scheme.itb_capacity: must be >= 0");
  if (cfg.scheme.kind == Scheme::Mtr && !cfg.scheme.restriction_file.empty()) {
    std::ifstream f(cfg.scheme.restriction_file);
    if (!f)
      throw ConfigError("scheme.restriction_file: cannot open '" + cfg.scheme.restriction_file +
                        "'");
  }
  if (cfg.engine.sample_period < 1) throw ConfigError("engine.sample_period: must be >= 1");
  if (cfg.engine.watchdog_window < cfg.engine.sample_period)
    throw ConfigError("engine.watchdog_window: must be >= sample_period");
}

inline Json config_to_json(const SimConfig& cfg) {
  Json root;
  Json jchips = Json::array();
  for (const ChipletSpec& c : cfg.topology.chiplets) {
    Json e;
    e["name"] = c.name;
    e["width"] = c.width;
    e["height"] = c.height;
    e["boundaries"] = c.boundary_routers;
    e["routing"] = to_string(c.routing);
    e["vc_count"] = c.vc_count;
    e["vc_depth"] = c.vc_depth;
    if (!c.vc_depths.empty()) e["vc_depths"] = c.vc_depths;
    jchips.push_back(e);
  }
  root["topology"]["chiplets"] = jchips;
  Json& ji = root["topology"]["interposer"];
  ji["width"] = cfg.topology.interposer.width;
  ji["height"] = cfg.topology.interposer.height;
  ji["routing"] = to_string(cfg.topology.interposer.routing);
  ji["vc_count"] = cfg.topology.interposer.vc_count;
  ji["vc_depth"] = cfg.topology.interposer.vc_depth;
  if (!cfg.topology.interposer.vc_depths.empty())
    ji["vc_depths"] = cfg.topology.interposer.vc_depths;
  if (!cfg.topology.tsv_map.empty()) {
    Json jm = Json::object();
    for (const auto& [key, il] : cfg.topology.tsv_map) {
      const std::string name =
          cfg.topology.chiplets[static_cast<size_t>(key.first)].name + "." +
          std::to_string(key.second);
      jm[name] = il;
    }
    root["topology"]["tsv_map"] = jm;
  }
  Json& js = root["scheme"];
  js["kind"] = to_string(cfg.scheme.kind);
  js["rc_capacity"] = cfg.scheme.rc_capacity;
  js["opic_wire_bits"] = cfg.scheme.opic_wire_bits;
  js["itb_capacity"] = cfg.scheme.itb_capacity;
  js["retry_delay"] = cfg.scheme.retry_delay;
  if (!cfg.scheme.restriction_file.empty()) js["restriction_file"] = cfg.scheme.restriction_file;
  Json& jt = root["traffic"];
  jt["pattern"] = to_string(cfg.traffic.pattern);
  jt["rate"] = cfg.traffic.rate;
  jt["packet_flits"] = cfg.traffic.packet_flits;
  jt["seed"] = cfg.traffic.seed;
  jt["warmup"] = cfg.traffic.warmup;
  jt["measure"] = cfg.traffic.measure;
  jt["drain_max"] = cfg.traffic.drain_max;
  if (!cfg.traffic.scenario_file.empty()) jt["scenario_file"] = cfg.traffic.scenario_file;
  Json& je = root["engine"];
  je["watchdog_window"] = cfg.engine.watchdog_window;
  je["sample_period"] = cfg.engine.sample_period;
  je["starvation_window"] = cfg.engine.starvation_window;
  je["audit_period"] = cfg.engine.audit_period;
  je["link_sample_window"] = cfg.engine.link_sample_window;
  Json& jw = root["sweep"];
  jw["rates"] = cfg.sweep.rates;
  jw["seeds"] = cfg.sweep.seeds;
  Json sch = Json::array(), pat = Json::array();
  for (Scheme s : cfg.sweep.schemes) sch.push_back(to_string(s));
  for (TrafficPattern p : cfg.sweep.patterns) pat.push_back(to_string(p));
  jw["schemes"] = sch;
  jw["patterns"] = pat;
  Json& jo = root["output"];
  jo["dir"] = cfg.output.dir;
  jo["verbosity"] = cfg.output.verbosity;
  jo["heatmaps"] = cfg.output.heatmaps;
  return root;
}

inline std::string serialize_config(const SimConfig& cfg) { return config_to_json(cfg).dump(2); }

// Dotted-path override, e.g. "traffic.rate=0.2" or
// "topology.chiplets.0.vc_count=4". Values parse as JSON, falling back to
// string.
inline void apply_override(Json& root, const std::string& kv) {
  size_t eq = kv.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + kv + "': expected key=value");
  std::string path = kv.substr(0, eq);
  std::string val = kv.substr(eq + 1);
  Json parsed;
  try {
    parsed = Json::parse(val);
  } catch (...) {
    parsed = val;
  }
  Json* cur = &root;
  std::istringstream ps(path);
  std::string seg;
  std::vector<std::string> segs;
  while (std::getline(ps, seg, '.')) segs.push_back(seg);
  if (segs.empty()) throw ConfigError("override '" + kv + "': empty key");
  for (size_t i = 0; i + 1 < segs.size(); ++i) {
    const std::string& s = segs[i];
    if (cur->is_array() || (!s.empty() && isdigit(static_cast<unsigned char>(s[0])))) {
      size_t idx = static_cast<size_t>(std::stoul(s));
      if (!cur->is_array() || idx >= cur->size())
        throw ConfigError("override '" + kv + "': no array element " + s);
      cur = &(*cur)[idx];
    } else {
      cur = &(*cur)[s];
    }
  }
  const std::string& last = segs.back();
  if (cur->is_array()) {
    size_t idx = static_cast<size_t>(std::stoul(last));
    if (idx >= cur->size()) throw ConfigError("override '" + kv + "': no array element " + last);
    (*cur)[idx] = parsed;
  } else {
    (*cur)[last] = parsed;
  }
}

inline SimConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides = {}) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  Json root;
  try {
    root = Json::parse(f, nullptr, true, true);  // with comment support
  } catch (const Json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  for (const std::string& kv : overrides) apply_override(root, kv);
  SimConfig cfg;
  try {
    cfg = config_from_json(root);
  } catch (const TopologyError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  try {
    validate_config(cfg);
  } catch (const TopologyError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return cfg;
}

inline SimConfig parse_config_text(const std::string& text,
                                   const std::vector<std::string>& overrides = {}) {
  Json root = Json::parse(text, nullptr, true, true);
  for (const std::string& kv : overrides) apply_override(root, kv);
  SimConfig cfg = config_from_json(root);
  validate_config(cfg);
  return cfg;
}

}  // namespace rcnoc

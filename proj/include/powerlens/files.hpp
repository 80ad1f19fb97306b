#pragma once

// On-disk layout of the shipped configuration documents and the bench grid
// file that ties them together. Paths inside a grid file are relative to the
// grid file's directory.

#include <filesystem>
#include <string>
#include <vector>

#include "powerlens/bench.hpp"
#include "powerlens/json_util.hpp"
#include "powerlens/presets.hpp"
#include "powerlens/sim_presets.hpp"

namespace powerlens {

namespace detail {

inline Json load_doc(const std::filesystem::path& p) {
  if (!std::filesystem::exists(p)) throw ConfigError("missing file " + p.string());
  try {
    return read_json_file(p.string());
  } catch (const Json::exception& e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
}

}  // namespace detail

inline CapabilityProfile load_capability_file(const std::string& path) {
  return load_capability_profile(detail::load_doc(path));
}
inline ConstraintSet load_constraints_file(const std::string& path, const CapabilityProfile& caps) {
  return load_constraints(detail::load_doc(path), caps);
}
inline EnergyModel load_energy_model_file(const std::string& path, const CapabilityProfile& caps) {
  return load_energy_model(detail::load_doc(path), caps);
}
inline UserProfile load_profile_file(const std::string& path, const CapabilityProfile& caps) {
  UserProfile p = load_user_profile(detail::load_doc(path), caps);
  const std::string err = check_profile(caps, p);
  if (!err.empty()) throw ConfigError(path + ": " + err);
  return p;
}
inline ScenarioPack load_scenarios_file(const std::string& path) {
  return load_scenario_pack(detail::load_doc(path));
}

inline Json default_grid_json() {
  const GridSpec spec;
  Json profiles = Json::array();
  for (const auto& p : default_profiles(default_capability_profile()))
    profiles.push_back("profiles/" + profile_stem(p.name) + ".json");
  Json battery = Json::object();
  for (const auto& [b, v] : spec.battery) battery[std::string(to_string(b))] = v;
  return Json{{"seed", spec.seed},
              {"capabilities", "capability_profile.json"},
              {"constraints", "constraints.json"},
              {"energy_model", "energy_model.json"},
              {"scenarios", "scenarios.json"},
              {"profiles", profiles},
              {"battery", battery},
              {"pretrain_days", spec.pretrain_days},
              {"start", {{"day", spec.start.day}, {"minute", spec.start.minute}}}};
}

inline BenchWorld load_bench_world(const std::string& grid_file) {
  using namespace detail;
  const std::filesystem::path base = std::filesystem::path(grid_file).parent_path();
  const Json g = load_doc(grid_file);
  try {
    BenchWorld w;
    w.caps = load_capability_file((base / require_string(g, "capabilities", "$")).string());
    w.constraints = load_constraints_file((base / require_string(g, "constraints", "$")).string(), w.caps);
    w.model = load_energy_model_file((base / require_string(g, "energy_model", "$")).string(), w.caps);
    w.pack = load_scenarios_file((base / require_string(g, "scenarios", "$")).string());
    const Json& profiles = require(g, "profiles", "$");
    if (!profiles.is_array() || profiles.empty()) throw SchemaError("$.profiles", "expected non-empty array");
    for (const auto& p : profiles) {
      if (!p.is_string()) throw SchemaError("$.profiles", "expected file names");
      w.profiles.push_back(load_profile_file((base / p.get<std::string>()).string(), w.caps));
    }
    w.spec.seed = static_cast<std::uint64_t>(require_int(g, "seed", "$"));
    if (g.contains("battery")) {
      for (auto b : {BatteryBucket::high, BatteryBucket::mid, BatteryBucket::low}) {
        const long long v = require_int(g["battery"], std::string(to_string(b)), "$.battery");
        if (v < 0 || v > 100 || bucket_of(static_cast<int>(v)) != b)
          throw SchemaError("$.battery." + std::string(to_string(b)), "battery outside its bucket");
        w.spec.battery[b] = static_cast<int>(v);
      }
    }
    if (g.contains("pretrain_days")) {
      w.spec.pretrain_days = static_cast<int>(require_int(g, "pretrain_days", "$"));
      if (w.spec.pretrain_days < 0) throw SchemaError("$.pretrain_days", "negative");
    }
    if (g.contains("start")) {
      w.spec.start.day = static_cast<int>(require_int(g["start"], "day", "$.start"));
      w.spec.start.minute = static_cast<int>(require_int(g["start"], "minute", "$.start"));
      if (w.spec.start.minute < 0 || w.spec.start.minute >= 24 * 60) throw SchemaError("$.start.minute", "out of range");
    }
    return w;
  } catch (const SchemaError& e) {
    throw ConfigError(grid_file + ": " + e.what());
  }
}

// Writes the shipped documents and a grid file into `dir`.
inline void export_defaults(const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "profiles");
  const CapabilityProfile caps = default_capability_profile();
  auto put = [&](const std::string& rel, const Json& j) {
    write_text_file((fs::path(dir) / rel).string(), canonical_dump(j));
  };
  put("capability_profile.json", to_json(caps));
  put("constraints.json", to_json(default_constraint_pack()));
  put("energy_model.json", to_json(default_energy_model()));
  put("scenarios.json", to_json(default_scenario_pack()));
  for (const auto& p : default_profiles(caps)) put("profiles/" + profile_stem(p.name) + ".json", to_json(p));
  put("grid.json", default_grid_json());
}

}  // namespace powerlens

#pragma once

// Parameter/action space of the managed device and the pure state
// transition that applies a policy to a device state.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "powerlens/error.hpp"
#include "powerlens/json_util.hpp"

namespace powerlens {

using Value = int;
using ParamId = std::string;

enum class Category { display, connectivity, compute, audio, sync };
enum class ValueKind { continuous_range, discrete_set, binary, bitmask };
enum class Impact { high, medium, low };
enum class Verb { keep, set, enable, disable, lock, defer };
enum class Priority { high, medium, low };

// App categories of the benchmark plus the catch-all recognized when the
// foreground app is unknown.
enum class AppCategory { navigation, video, meeting, social, music, feed, reading, idle };

inline constexpr std::string_view to_string(Category c) {
  switch (c) {
    case Category::display: return "display";
    case Category::connectivity: return "connectivity";
    case Category::compute: return "compute";
    case Category::audio: return "audio";
    case Category::sync: return "sync";
  }
  return "?";
}

inline constexpr std::string_view to_string(ValueKind k) {
  switch (k) {
    case ValueKind::continuous_range: return "continuous_range";
    case ValueKind::discrete_set: return "discrete_set";
    case ValueKind::binary: return "binary";
    case ValueKind::bitmask: return "bitmask";
  }
  return "?";
}

inline constexpr std::string_view to_string(Impact i) {
  switch (i) {
    case Impact::high: return "high";
    case Impact::medium: return "medium";
    case Impact::low: return "low";
  }
  return "?";
}

inline constexpr std::string_view to_string(Verb v) {
  switch (v) {
    case Verb::keep: return "KEEP";
    case Verb::set: return "SET";
    case Verb::enable: return "ENABLE";
    case Verb::disable: return "DISABLE";
    case Verb::lock: return "LOCK";
    case Verb::defer: return "DEFER";
  }
  return "?";
}

inline constexpr std::string_view to_string(Priority p) {
  switch (p) {
    case Priority::high: return "high";
    case Priority::medium: return "medium";
    case Priority::low: return "low";
  }
  return "?";
}

inline constexpr std::string_view to_string(AppCategory c) {
  switch (c) {
    case AppCategory::navigation: return "navigation";
    case AppCategory::video: return "video";
    case AppCategory::meeting: return "meeting";
    case AppCategory::social: return "social";
    case AppCategory::music: return "music";
    case AppCategory::feed: return "feed";
    case AppCategory::reading: return "reading";
    case AppCategory::idle: return "idle";
  }
  return "?";
}

inline constexpr AppCategory kBenchCategories[] = {
    AppCategory::navigation, AppCategory::video, AppCategory::meeting, AppCategory::social,
    AppCategory::music,      AppCategory::feed,  AppCategory::reading};

namespace detail {
template <typename E, std::size_t N>
std::optional<E> parse_enum(std::string_view s, const E (&all)[N]) {
  for (E e : all)
    if (to_string(e) == s) return e;
  return std::nullopt;
}
}  // namespace detail

inline std::optional<Category> parse_category(std::string_view s) {
  static constexpr Category all[] = {Category::display, Category::connectivity, Category::compute,
                                     Category::audio, Category::sync};
  return detail::parse_enum(s, all);
}
inline std::optional<ValueKind> parse_value_kind(std::string_view s) {
  static constexpr ValueKind all[] = {ValueKind::continuous_range, ValueKind::discrete_set,
                                      ValueKind::binary, ValueKind::bitmask};
  return detail::parse_enum(s, all);
}
inline std::optional<Impact> parse_impact(std::string_view s) {
  static constexpr Impact all[] = {Impact::high, Impact::medium, Impact::low};
  return detail::parse_enum(s, all);
}
inline std::optional<Verb> parse_verb(std::string_view s) {
  static constexpr Verb all[] = {Verb::keep, Verb::set, Verb::enable,
                                 Verb::disable, Verb::lock, Verb::defer};
  return detail::parse_enum(s, all);
}
inline std::optional<Priority> parse_priority(std::string_view s) {
  static constexpr Priority all[] = {Priority::high, Priority::medium, Priority::low};
  return detail::parse_enum(s, all);
}
inline std::optional<AppCategory> parse_app_category(std::string_view s) {
  static constexpr AppCategory all[] = {
      AppCategory::navigation, AppCategory::video, AppCategory::meeting, AppCategory::social,
      AppCategory::music,      AppCategory::feed,  AppCategory::reading, AppCategory::idle};
  return detail::parse_enum(s, all);
}

struct ParameterSpec {
  ParamId id;
  Category category = Category::display;
  ValueKind kind = ValueKind::binary;
  Value min = 0;               // continuous_range
  Value max = 1;               // continuous_range
  std::vector<Value> values;   // discrete_set
  int bit_width = 0;           // bitmask
  Value default_value = 0;
  Impact impact = Impact::low;
  bool privileged = false;
  double power_weight = 1.0;

  bool contains(Value v) const {
    switch (kind) {
      case ValueKind::continuous_range: return v >= min && v <= max;
      case ValueKind::discrete_set: return std::find(values.begin(), values.end(), v) != values.end();
      case ValueKind::binary: return v == 0 || v == 1;
      case ValueKind::bitmask: return v >= 0 && v <= bitmask_max();
    }
    return false;
  }

  Value lowest() const {
    switch (kind) {
      case ValueKind::continuous_range: return min;
      case ValueKind::discrete_set: return *std::min_element(values.begin(), values.end());
      default: return 0;
    }
  }

  Value highest() const {
    switch (kind) {
      case ValueKind::continuous_range: return max;
      case ValueKind::discrete_set: return *std::max_element(values.begin(), values.end());
      case ValueKind::binary: return 1;
      case ValueKind::bitmask: return bitmask_max();
    }
    return 0;
  }

  // Number of discrete states |S|.
  std::uint64_t cardinality() const {
    switch (kind) {
      case ValueKind::continuous_range: return static_cast<std::uint64_t>(max - min) + 1;
      case ValueKind::discrete_set: return values.size();
      case ValueKind::binary: return 2;
      case ValueKind::bitmask: return std::uint64_t{1} << bit_width;
    }
    return 0;
  }

  // Every in-domain value in ascending order.
  std::vector<Value> domain_values() const {
    std::vector<Value> out;
    if (kind == ValueKind::discrete_set) {
      out = values;
      std::sort(out.begin(), out.end());
      return out;
    }
    for (Value v = lowest(); v <= highest(); ++v) out.push_back(v);
    return out;
  }

  bool is_continuous() const { return kind == ValueKind::continuous_range; }

  Value bitmask_max() const { return static_cast<Value>((std::int64_t{1} << bit_width) - 1); }
};

struct SimClock {
  int day = 0;     // day index; day 0 is a Monday
  int minute = 0;  // minutes since midnight

  friend bool operator==(const SimClock&, const SimClock&) = default;
};

struct CapabilityProfile;

struct DeviceState {
  std::map<ParamId, Value> values;
  int battery_pct = 100;
  std::string foreground_app;
  SimClock clock;

  Value at(const ParamId& id) const {
    auto it = values.find(id);
    if (it == values.end()) throw InvalidValueError("state has no parameter " + id);
    return it->second;
  }

  friend bool operator==(const DeviceState&, const DeviceState&) = default;
};

struct Action {
  ParamId target;
  Verb verb = Verb::keep;
  std::optional<Value> value;
  Priority priority = Priority::medium;
  std::string reason;

  static Action keep(ParamId t, std::string why = {}) {
    return {std::move(t), Verb::keep, std::nullopt, Priority::low, std::move(why)};
  }
  static Action set(ParamId t, Value v, std::string why = {}, Priority p = Priority::medium) {
    return {std::move(t), Verb::set, v, p, std::move(why)};
  }
  static Action lock(ParamId t, Value v, std::string why = {}) {
    return {std::move(t), Verb::lock, v, Priority::high, std::move(why)};
  }
  static Action enable(ParamId t, std::string why = {}) {
    return {std::move(t), Verb::enable, std::nullopt, Priority::medium, std::move(why)};
  }
  static Action disable(ParamId t, std::string why = {}) {
    return {std::move(t), Verb::disable, std::nullopt, Priority::medium, std::move(why)};
  }
  static Action defer(ParamId t, std::string why = {}) {
    return {std::move(t), Verb::defer, std::nullopt, Priority::low, std::move(why)};
  }

  bool writes() const { return verb != Verb::keep && verb != Verb::defer; }

  friend bool operator==(const Action&, const Action&) = default;
};

// Sequence of actions with at most one action per target parameter.
class Policy {
 public:
  Policy() = default;
  Policy(std::initializer_list<Action> actions) {
    for (const auto& a : actions) add(a);
  }

  void add(Action a) {
    if (find(a.target)) throw InvalidValueError("duplicate action for " + a.target);
    if ((a.verb == Verb::set || a.verb == Verb::lock) && !a.value)
      throw InvalidValueError(std::string(to_string(a.verb)) + " " + a.target + " carries no value");
    if ((a.verb != Verb::set && a.verb != Verb::lock) && a.value)
      throw InvalidValueError(std::string(to_string(a.verb)) + " " + a.target + " carries a value");
    actions_.push_back(std::move(a));
  }

  // Insert or overwrite the action targeting a.target, keeping position.
  void put(Action a) {
    for (auto& existing : actions_)
      if (existing.target == a.target) {
        existing = std::move(a);
        return;
      }
    add(std::move(a));
  }

  bool remove(const ParamId& target) {
    auto it = std::find_if(actions_.begin(), actions_.end(),
                           [&](const Action& a) { return a.target == target; });
    if (it == actions_.end()) return false;
    actions_.erase(it);
    return true;
  }

  const Action* find(const ParamId& target) const {
    for (const auto& a : actions_)
      if (a.target == target) return &a;
    return nullptr;
  }

  const std::vector<Action>& actions() const { return actions_; }
  std::size_t size() const { return actions_.size(); }
  bool empty() const { return actions_.empty(); }
  auto begin() const { return actions_.begin(); }
  auto end() const { return actions_.end(); }

  friend bool operator==(const Policy&, const Policy&) = default;

 private:
  std::vector<Action> actions_;
};

struct CapabilityProfile {
  std::string device;
  std::vector<ParameterSpec> parameters;
  std::map<ParamId, std::string> command_templates;
  std::vector<std::string> notes;

  const ParameterSpec* find(const ParamId& id) const {
    for (const auto& p : parameters)
      if (p.id == id) return &p;
    return nullptr;
  }

  const ParameterSpec& at(const ParamId& id) const {
    if (const auto* p = find(id)) return *p;
    throw InvalidValueError("unknown parameter " + id);
  }

  std::set<Category> categories() const {
    std::set<Category> out;
    for (const auto& p : parameters) out.insert(p.category);
    return out;
  }

  // Product of |S| over all parameters; doubles hold the magnitude exactly
  // enough for the >1e17 comparison.
  long double joint_state_space() const {
    long double n = 1;
    for (const auto& p : parameters) n *= static_cast<long double>(p.cardinality());
    return n;
  }
};

// Result of checking a value against a parameter domain.
struct Validation {
  bool valid = true;
  Value nearest = 0;
};

// Nearest in-domain value; distance ties go to the lower value.
inline Value nearest_in(const std::vector<Value>& sorted_candidates, Value v) {
  Value best = sorted_candidates.front();
  long long best_d = std::llabs(static_cast<long long>(v) - best);
  for (Value c : sorted_candidates) {
    long long d = std::llabs(static_cast<long long>(v) - c);
    if (d < best_d) {
      best = c;
      best_d = d;
    }
  }
  return best;
}

inline Validation validate_value(const ParameterSpec& spec, Value v) {
  if (spec.contains(v)) return {true, v};
  switch (spec.kind) {
    case ValueKind::continuous_range:
    case ValueKind::binary:
    case ValueKind::bitmask:
      return {false, std::clamp(v, spec.lowest(), spec.highest())};
    case ValueKind::discrete_set:
      return {false, nearest_in(spec.domain_values(), v)};
  }
  return {false, spec.default_value};
}

// The "off" value DISABLE writes: 0 when the domain holds it, else the lowest value.
inline Value off_value(const ParameterSpec& spec) { return spec.contains(0) ? 0 : spec.lowest(); }

// The "on" value ENABLE writes: 1 for binaries, the default otherwise.
inline Value on_value(const ParameterSpec& spec) {
  return spec.kind == ValueKind::binary ? 1 : spec.default_value;
}

// Value an action writes, or nullopt for KEEP/DEFER.
inline std::optional<Value> written_value(const ParameterSpec& spec, const Action& a) {
  switch (a.verb) {
    case Verb::set:
    case Verb::lock: return a.value;
    case Verb::enable: return on_value(spec);
    case Verb::disable: return off_value(spec);
    case Verb::keep:
    case Verb::defer: return std::nullopt;
  }
  return std::nullopt;
}

inline DeviceState apply_policy(const CapabilityProfile& profile, const DeviceState& s,
                                const Policy& p) {
  DeviceState out = s;
  for (const auto& a : p) {
    const ParameterSpec* spec = profile.find(a.target);
    if (!spec) throw InvalidValueError("action targets unknown parameter " + a.target);
    auto v = written_value(*spec, a);
    if (!v) continue;
    if (!spec->contains(*v))
      throw InvalidValueError(std::string(to_string(a.verb)) + " " + a.target + " " +
                              std::to_string(*v) + " is outside the parameter domain");
    out.values[a.target] = *v;
  }
  return out;
}

inline DeviceState default_state(const CapabilityProfile& profile, int battery_pct,
                                 std::string app, SimClock clock) {
  DeviceState s;
  for (const auto& p : profile.parameters) s.values[p.id] = p.default_value;
  s.battery_pct = battery_pct;
  s.foreground_app = std::move(app);
  s.clock = clock;
  return s;
}

// Checks the DeviceState invariants against a profile; returns the first
// problem found, or an empty string.
inline std::string check_state(const CapabilityProfile& profile, const DeviceState& s) {
  if (s.values.size() != profile.parameters.size()) return "parameter count mismatch";
  for (const auto& p : profile.parameters) {
    auto it = s.values.find(p.id);
    if (it == s.values.end()) return "missing " + p.id;
    if (!p.contains(it->second)) return p.id + " out of domain";
  }
  if (s.battery_pct < 0 || s.battery_pct > 100) return "battery out of range";
  return {};
}

// Renders a command template by replacing "{<id>}" with the value.
inline std::string render_command(const std::string& tmpl, const ParamId& id, Value v) {
  std::string out = tmpl;
  const std::string key = "{" + id + "}";
  for (auto pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos))
    out.replace(pos, key.size(), std::to_string(v));
  return out;
}

// ---------------------------------------------------------------------------
// Capability profile document

inline Json to_json(const ParameterSpec& p, const std::string& command_template) {
  Json domain = Json::object();
  switch (p.kind) {
    case ValueKind::continuous_range:
      domain["min"] = p.min;
      domain["max"] = p.max;
      break;
    case ValueKind::discrete_set: domain["values"] = p.values; break;
    case ValueKind::binary: domain["values"] = std::vector<Value>{0, 1}; break;
    case ValueKind::bitmask: domain["bits"] = p.bit_width; break;
  }
  return Json{{"id", p.id},
              {"category", to_string(p.category)},
              {"kind", to_string(p.kind)},
              {"domain", domain},
              {"default", p.default_value},
              {"impact", to_string(p.impact)},
              {"privileged", p.privileged},
              {"power_weight", p.power_weight},
              {"command_template", command_template}};
}

inline Json to_json(const CapabilityProfile& profile) {
  Json params = Json::array();
  for (const auto& p : profile.parameters) {
    auto it = profile.command_templates.find(p.id);
    params.push_back(to_json(p, it == profile.command_templates.end() ? "" : it->second));
  }
  Json j{{"device", profile.device}, {"parameters", params}};
  if (!profile.notes.empty()) j["notes"] = profile.notes;
  return j;
}

inline std::string serialize_capability_profile(const CapabilityProfile& profile) {
  return canonical_dump(to_json(profile));
}

inline CapabilityProfile load_capability_profile(const Json& doc) {
  using namespace detail;
  CapabilityProfile out;
  out.device = require_string(doc, "device", "$");
  const Json& params = require_array(doc, "parameters", "$");
  if (doc.contains("notes")) {
    if (!doc["notes"].is_array()) throw SchemaError("$.notes", "expected array");
    for (const auto& n : doc["notes"]) out.notes.push_back(n.get<std::string>());
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string path = index_path("$.parameters", i);
    const Json& pj = params[i];
    ParameterSpec p;
    p.id = require_string(pj, "id", path);
    if (p.id.empty()) throw SchemaError(path + ".id", "empty identifier");
    if (out.find(p.id)) throw SchemaError(path + ".id", "duplicate parameter id " + p.id);
    auto cat = parse_category(require_string(pj, "category", path));
    if (!cat) throw SchemaError(path + ".category", "unknown category");
    p.category = *cat;
    auto kind = parse_value_kind(require_string(pj, "kind", path));
    if (!kind) throw SchemaError(path + ".kind", "unknown kind");
    p.kind = *kind;
    const Json& domain = require(pj, "domain", path);
    const std::string dpath = path + ".domain";
    switch (p.kind) {
      case ValueKind::continuous_range:
        p.min = static_cast<Value>(require_int(domain, "min", dpath));
        p.max = static_cast<Value>(require_int(domain, "max", dpath));
        if (p.min > p.max) throw SchemaError(dpath, "min exceeds max");
        break;
      case ValueKind::discrete_set: {
        const Json& vs = require_array(domain, "values", dpath);
        if (vs.empty()) throw SchemaError(dpath + ".values", "empty discrete set");
        for (const auto& v : vs) {
          if (!v.is_number_integer()) throw SchemaError(dpath + ".values", "expected integers");
          p.values.push_back(v.get<Value>());
        }
        std::set<Value> uniq(p.values.begin(), p.values.end());
        if (uniq.size() != p.values.size())
          throw SchemaError(dpath + ".values", "duplicate values in discrete set");
        break;
      }
      case ValueKind::binary: p.min = 0; p.max = 1; break;
      case ValueKind::bitmask:
        p.bit_width = static_cast<int>(require_int(domain, "bits", dpath));
        if (p.bit_width <= 0 || p.bit_width > 30) throw SchemaError(dpath + ".bits", "bad width");
        break;
    }
    p.default_value = static_cast<Value>(require_int(pj, "default", path));
    if (!p.contains(p.default_value)) throw SchemaError(path + ".default", "default outside domain");
    auto impact = parse_impact(require_string(pj, "impact", path));
    if (!impact) throw SchemaError(path + ".impact", "unknown impact class");
    p.impact = *impact;
    p.privileged = require_bool(pj, "privileged", path);
    p.power_weight = require_number(pj, "power_weight", path);
    if (p.power_weight < 0) throw SchemaError(path + ".power_weight", "negative weight");
    std::string tmpl = require_string(pj, "command_template", path);
    if (tmpl.find("{" + p.id + "}") == std::string::npos)
      throw SchemaError(path + ".command_template", "template does not reference {" + p.id + "}");
    out.command_templates[p.id] = std::move(tmpl);
    out.parameters.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Action / policy / state JSON (shared by traces and the gateway protocol)

inline Json to_json(const Action& a) {
  Json j{{"target", a.target},
         {"verb", to_string(a.verb)},
         {"priority", to_string(a.priority)},
         {"reason", a.reason}};
  if (a.value) j["value"] = *a.value;
  return j;
}

inline Action action_from_json(const Json& j, const std::string& path = "$") {
  using namespace detail;
  Action a;
  a.target = require_string(j, "target", path);
  auto verb = parse_verb(require_string(j, "verb", path));
  if (!verb) throw SchemaError(path + ".verb", "unknown verb");
  a.verb = *verb;
  if (j.contains("value") && !j["value"].is_null()) {
    if (!j["value"].is_number_integer()) throw SchemaError(path + ".value", "expected integer");
    a.value = j["value"].get<Value>();
  }
  if (j.contains("priority")) {
    auto pr = parse_priority(require_string(j, "priority", path));
    if (!pr) throw SchemaError(path + ".priority", "unknown priority");
    a.priority = *pr;
  }
  if (j.contains("reason")) a.reason = require_string(j, "reason", path);
  return a;
}

inline Json to_json(const Policy& p) {
  Json arr = Json::array();
  for (const auto& a : p) arr.push_back(to_json(a));
  return arr;
}

inline Policy policy_from_json(const Json& j, const std::string& path = "$") {
  if (!j.is_array()) throw SchemaError(path, "expected array of actions");
  Policy p;
  for (std::size_t i = 0; i < j.size(); ++i) {
    try {
      p.add(action_from_json(j[i], detail::index_path(path, i)));
    } catch (const InvalidValueError& e) {
      throw SchemaError(detail::index_path(path, i), e.what());
    }
  }
  return p;
}

inline Json to_json(const DeviceState& s) {
  return Json{{"values", s.values},
              {"battery_pct", s.battery_pct},
              {"foreground_app", s.foreground_app},
              {"day", s.clock.day},
              {"minute", s.clock.minute}};
}

inline DeviceState state_from_json(const Json& j, const std::string& path = "$") {
  using namespace detail;
  DeviceState s;
  const Json& vals = require(j, "values", path);
  if (!vals.is_object()) throw SchemaError(path + ".values", "expected object");
  for (auto it = vals.begin(); it != vals.end(); ++it) s.values[it.key()] = it.value().get<Value>();
  s.battery_pct = static_cast<int>(require_int(j, "battery_pct", path));
  s.foreground_app = require_string(j, "foreground_app", path);
  s.clock.day = static_cast<int>(require_int(j, "day", path));
  s.clock.minute = static_cast<int>(require_int(j, "minute", path));
  return s;
}

}  // namespace powerlens

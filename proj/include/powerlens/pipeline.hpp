#pragma once

// One decision cycle: feedback differencing, activity recognition,
// memory-arbitrated policy generation, deterministic verification, command
// emission, and state synchronization, over a pluggable reasoner backend.

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "powerlens/constraints.hpp"
#include "powerlens/device_model.hpp"
#include "powerlens/memory.hpp"
#include "powerlens/presets.hpp"

namespace powerlens {

// ---------------------------------------------------------------------------
// Types

enum class CriticalLevel { high, medium, low };

inline constexpr std::string_view to_string(CriticalLevel c) {
  switch (c) {
    case CriticalLevel::high: return "high";
    case CriticalLevel::medium: return "medium";
    case CriticalLevel::low: return "low";
  }
  return "?";
}
inline std::optional<CriticalLevel> parse_critical_level(std::string_view s) {
  for (auto c : {CriticalLevel::high, CriticalLevel::medium, CriticalLevel::low})
    if (to_string(c) == s) return c;
  return std::nullopt;
}

struct ActivityResult {
  AppCategory activity_type = AppCategory::idle;
  std::string sub_activity = "unknown";
  double certainty = 0.5;
  CriticalLevel critical_level = CriticalLevel::low;

  friend bool operator==(const ActivityResult&, const ActivityResult&) = default;
};

// The widget-tree document is {"package": str, "activity": str,
// "nodes": [{"class": str, "text": str, "children": [...]}, ...]}.
struct DecisionContext {
  DeviceState device_state;
  Json ui_descriptor = Json::object();
  std::vector<std::pair<std::string, int>> app_history;  // (app, minutes) in the past hour
};

struct ProposalInput {
  ActivityResult activity;
  DeviceState state;
  std::map<ParamId, Value> locks;
  std::vector<ContextRule> rules;
  const ConstraintSet* constraints = nullptr;
  const CapabilityProfile* capabilities = nullptr;
};

class ReasonerBackend {
 public:
  virtual ~ReasonerBackend() = default;
  virtual std::string name() const = 0;
  // Each capability throws BackendError on unusable output.
  virtual ActivityResult recognize(const DecisionContext& ctx) = 0;
  virtual Policy propose(const ProposalInput& in) = 0;
  virtual std::vector<std::string> verify_assist(const Policy& p, const ConstraintSet& rules,
                                                 const CapabilityProfile& caps) = 0;
  virtual std::vector<std::string> emit_commands(const Policy& p, const CapabilityProfile& caps) = 0;
};

// ---------------------------------------------------------------------------
// Redaction

namespace detail {

inline const std::set<std::string>& text_keys() {
  static const std::set<std::string> k{"text", "label", "title", "hint", "content_description", "value"};
  return k;
}

inline std::string redact_text(std::string s) {
  static const std::regex email(R"([A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,})");
  static const std::regex phone(R"((\+\d{1,3}[\s.-]?)?\(?\d{3}\)?[\s.-]\d{3,4}([\s.-]\d{4})?)");
  static const std::regex number(R"(\d{6,})");
  s = std::regex_replace(s, email, "⟨EMAIL⟩");
  s = std::regex_replace(s, phone, "⟨PHONE⟩");
  s = std::regex_replace(s, number, "⟨NUMBER⟩");
  return s;
}

inline void redact_in_place(Json& j) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it.value().is_string() && text_keys().count(it.key()))
        it.value() = redact_text(it.value().get<std::string>());
      else
        redact_in_place(it.value());
    }
  } else if (j.is_array()) {
    for (auto& x : j) redact_in_place(x);
  }
}

}  // namespace detail

// Replaces e-mail addresses, phone numbers and digit runs of six or more in
// text-bearing fields with placeholder tokens. Structure is unchanged and the
// pass is idempotent.
inline Json redact(Json ui) {
  detail::redact_in_place(ui);
  return ui;
}

// ---------------------------------------------------------------------------
// Trigger

enum class TriggerKind { app_switch, timer };

inline constexpr std::string_view to_string(TriggerKind t) {
  return t == TriggerKind::app_switch ? "app_switch" : "timer";
}

// App switches always fire and restart the period; timer ticks fire once the
// period has elapsed since the last cycle.
class TriggerScheduler {
 public:
  explicit TriggerScheduler(int period_minutes = 5) : period_(period_minutes) {}

  bool schedule(TriggerKind event, long minute) {
    if (event == TriggerKind::app_switch || !next_due_ || minute >= *next_due_) {
      next_due_ = minute + period_;
      return true;
    }
    return false;
  }
  std::optional<long> next_due() const { return next_due_; }
  int period() const { return period_; }

 private:
  int period_;
  std::optional<long> next_due_;
};

// ---------------------------------------------------------------------------
// Heuristic backend

inline CriticalLevel critical_level_of(AppCategory c) {
  switch (c) {
    case AppCategory::navigation:
    case AppCategory::meeting: return CriticalLevel::high;
    case AppCategory::video:
    case AppCategory::music: return CriticalLevel::medium;
    default: return CriticalLevel::low;
  }
}

// Scenario labels: package -> category.
using AppRegistry = std::map<std::string, AppCategory>;

inline ActivityResult recognize_heuristic(const DecisionContext& ctx, const AppRegistry& apps) {
  const Json& ui = ctx.ui_descriptor;
  std::string package = ui.is_object() && ui.contains("package") && ui["package"].is_string()
                            ? ui["package"].get<std::string>()
                            : ctx.device_state.foreground_app;
  auto it = apps.find(package);
  if (it == apps.end()) return {AppCategory::idle, "unknown", 0.5, CriticalLevel::low};
  ActivityResult r;
  r.activity_type = it->second;
  r.sub_activity = ui.is_object() && ui.contains("activity") && ui["activity"].is_string()
                       ? ui["activity"].get<std::string>()
                       : "default";
  static const std::map<std::string, std::string> aliases{{"turn_by_turn", "actively_navigating"}};
  if (auto a = aliases.find(r.sub_activity); a != aliases.end()) r.sub_activity = a->second;
  r.certainty = 1.0;
  r.critical_level = critical_level_of(r.activity_type);
  return r;
}

namespace detail {

inline int aggressiveness(BatteryBucket b) {
  return b == BatteryBucket::high ? 0 : b == BatteryBucket::mid ? 1 : 2;
}

}  // namespace detail

// Per (category, battery bucket) lookup table. Lower buckets save more. The
// table never lowers location on navigation, never drops refresh below 60 for
// video, never touches radios or volumes in meetings, and leaves media volume
// alone everywhere.
inline Policy heuristic_policy(AppCategory cat, BatteryBucket bucket) {
  using C = AppCategory;
  const int lvl = detail::aggressiveness(bucket);
  Policy p;
  auto pick = [&](std::initializer_list<Value> by_level) { return *(by_level.begin() + lvl); };
  auto set = [&](const ParamId& id, Value v, Priority pr, const char* why) {
    p.put(Action::set(id, v, why, pr));
  };

  Value bright = 1400;
  switch (cat) {
    case C::navigation: bright = pick({2400, 1800, 1400}); break;
    case C::video: bright = pick({1800, 1400, 1000}); break;
    case C::meeting: bright = pick({1600, 1200, 900}); break;
    case C::social:
    case C::feed: bright = pick({1400, 1000, 700}); break;
    case C::music: bright = pick({600, 400, 200}); break;
    case C::reading: bright = pick({1200, 900, 600}); break;
    case C::idle: bright = pick({1000, 700, 400}); break;
  }
  set(param::brightness, bright, Priority::high, "display power by context");

  Value refresh = 60;
  if (cat == C::social || cat == C::feed) refresh = pick({90, 60, 60});
  if (cat == C::music || cat == C::reading || cat == C::idle) refresh = pick({60, 60, 30});
  if (cat == C::music) refresh = pick({60, 30, 30});
  set(param::refresh_rate, refresh, Priority::high, "content does not need a high refresh rate");

  const bool interactive_heavy = cat == C::navigation || cat == C::video || cat == C::meeting;
  Value governor = kSchedutil;
  if (lvl >= 1 && !interactive_heavy) governor = kPowersave;
  if (lvl == 2 && cat != C::meeting) governor = kPowersave;
  if (governor != kSchedutil) set(param::cpu_governor, governor, Priority::medium, "light workload");
  else p.put(Action::keep(param::cpu_governor));

  set(param::cpu_cores_online, pick({0x7F, 0x3F, 0x0F}), Priority::medium, "park idle cores");
  set(param::bg_process_limit, pick({4, 3, 2}), Priority::low, "limit background work");
  if (lvl >= 1) p.put(Action::enable(param::dark_mode, "dark theme on OLED"));
  if (lvl >= 1 && cat != C::video && cat != C::navigation)
    p.put(Action::disable(param::auto_rotation, "rotation sensor idle"));
  if (lvl >= 1 && cat != C::navigation) p.put(Action::disable(param::nfc, "no tap-to-pay expected"));
  if (lvl == 2 && (cat == C::reading || cat == C::feed || cat == C::social))
    p.put(Action::disable(param::bluetooth, "no paired audio expected"));
  if (lvl == 2 && cat != C::meeting) p.put(Action::disable(param::auto_sync, "defer sync"));
  if (cat == C::music || cat == C::idle)
    set(param::screen_timeout, 15, Priority::low, "screen not in use");
  else if (lvl == 2 && cat != C::reading && cat != C::video && cat != C::navigation)
    set(param::screen_timeout, 15, Priority::low, "short timeout");

  if (cat == C::navigation)
    set(param::location_mode, kLocationHigh, Priority::high, "turn-by-turn needs precise location");
  else if (lvl == 2 && (cat == C::reading || cat == C::music || cat == C::feed))
    set(param::location_mode, 1, Priority::low, "coarse location suffices");
  return p;
}

// KEEP everywhere, except Low bucket: refresh 60 and schedutil.
inline Policy fallback_policy(const CapabilityProfile& caps, BatteryBucket bucket) {
  Policy p;
  for (const auto& spec : caps.parameters) p.add(Action::keep(spec.id, "fallback"));
  if (bucket == BatteryBucket::low) {
    p.put(Action::set(param::refresh_rate, 60, "fallback: safe saving", Priority::medium));
    p.put(Action::set(param::cpu_governor, kSchedutil, "fallback: safe saving", Priority::medium));
  }
  return p;
}

inline std::vector<std::string> render_commands(const Policy& p, const CapabilityProfile& caps) {
  std::vector<std::string> out;
  for (const auto& a : p) {
    auto v = written_value(caps.at(a.target), a);
    if (!v) continue;
    out.push_back(render_command(caps.command_templates.at(a.target), a.target, *v));
  }
  return out;
}

class HeuristicBackend : public ReasonerBackend {
 public:
  explicit HeuristicBackend(AppRegistry apps) : apps_(std::move(apps)) {}

  std::string name() const override { return "heuristic"; }
  ActivityResult recognize(const DecisionContext& ctx) override { return recognize_heuristic(ctx, apps_); }
  Policy propose(const ProposalInput& in) override {
    return heuristic_policy(in.activity.activity_type, bucket_of(in.state.battery_pct));
  }
  std::vector<std::string> verify_assist(const Policy&, const ConstraintSet&,
                                         const CapabilityProfile&) override {
    return {};
  }
  std::vector<std::string> emit_commands(const Policy& p, const CapabilityProfile& caps) override {
    return render_commands(p, caps);
  }
  const AppRegistry& apps() const { return apps_; }

 private:
  AppRegistry apps_;
};

// Deterministic stream of uniform doubles in [0,1) keyed by (seed, counter).
inline double hashed_uniform(std::uint64_t seed, std::uint64_t counter) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (counter + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  z ^= z >> 31;
  return static_cast<double>(z >> 11) * 0x1.0p-53;
}

// A policy that switches off or floors every parameter.
inline Policy shutdown_policy(const CapabilityProfile& caps) {
  Policy p;
  for (const auto& spec : caps.parameters) {
    if (spec.kind == ValueKind::continuous_range)
      p.add(Action::set(spec.id, spec.lowest(), "adversarial"));
    else
      p.add(Action::disable(spec.id, "adversarial"));
  }
  return p;
}

// Wraps a backend; with probability `rate` per proposal it returns the
// shutdown policy instead. Used to exercise the verifier.
class AdversarialBackend : public ReasonerBackend {
 public:
  AdversarialBackend(ReasonerBackend& inner, double rate, std::uint64_t seed)
      : inner_(inner), rate_(rate), seed_(seed) {}

  std::string name() const override { return "adversarial(" + inner_.name() + ")"; }
  ActivityResult recognize(const DecisionContext& ctx) override { return inner_.recognize(ctx); }
  Policy propose(const ProposalInput& in) override {
    Policy honest = inner_.propose(in);
    if (hashed_uniform(seed_, counter_++) < rate_) return shutdown_policy(*in.capabilities);
    return honest;
  }
  std::vector<std::string> verify_assist(const Policy& p, const ConstraintSet& r,
                                         const CapabilityProfile& c) override {
    return inner_.verify_assist(p, r, c);
  }
  std::vector<std::string> emit_commands(const Policy& p, const CapabilityProfile& c) override {
    return inner_.emit_commands(p, c);
  }

 private:
  ReasonerBackend& inner_;
  double rate_;
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

// ---------------------------------------------------------------------------
// Arbitration

enum class Source { lock, rule, proposal, general };

inline constexpr std::string_view to_string(Source s) {
  switch (s) {
    case Source::lock: return "lock";
    case Source::rule: return "rule";
    case Source::proposal: return "proposal";
    case Source::general: return "general";
  }
  return "?";
}

struct Arbitration {
  Policy policy;
  std::map<ParamId, Source> source;
  std::vector<std::string> applied_rules;  // ContextRule keys that shaped the policy
};

// Per parameter: STM lock > context-rule preference > proposal > general
// profile. The general profile fills in only where the proposal KEEPs or
// omits the parameter and its value is not the capability default.
inline Arbitration arbitrate(const CapabilityProfile& caps, const std::map<ParamId, Value>& locks,
                             const std::vector<ContextRule>& rules,
                             const std::map<ParamId, Value>& general, const Policy& proposal,
                             const DeviceState& state) {
  Arbitration out;
  const auto prefs = resolve_preferences(rules);
  std::set<std::string> applied;
  for (const auto& spec : caps.parameters) {
    const ParamId& id = spec.id;
    if (auto l = locks.find(id); l != locks.end()) {
      out.policy.add(Action::lock(id, l->second, "user override this session"));
      out.source[id] = Source::lock;
      continue;
    }
    const Action* proposed = proposal.find(id);
    std::optional<Value> proposed_value = proposed ? written_value(spec, *proposed) : std::nullopt;
    if (auto pr = prefs.find(id); pr != prefs.end()) {
      const Preference& pref = pr->second.first;
      const Value base = proposed_value ? *proposed_value : state.at(id);
      const Value v = pref.enforce(base);
      applied.insert(pr->second.second);
      if (proposed_value || v != state.at(id)) {
        if (proposed_value && v == *proposed_value)
          out.policy.add(*proposed);
        else
          out.policy.add(Action::set(id, v, "learned preference " + pr->second.second, Priority::high));
        out.source[id] = Source::rule;
        continue;
      }
      if (proposed) out.policy.add(*proposed);
      out.source[id] = Source::rule;
      continue;
    }
    if (proposed_value) {
      out.policy.add(*proposed);
      out.source[id] = Source::proposal;
      continue;
    }
    if (auto g = general.find(id); g != general.end() && g->second != spec.default_value &&
                                   g->second != state.at(id) && spec.contains(g->second)) {
      out.policy.add(Action::set(id, g->second, "app default", Priority::low));
      out.source[id] = Source::general;
      continue;
    }
    if (proposed) {
      out.policy.add(*proposed);
      out.source[id] = Source::proposal;
    }
  }
  out.applied_rules.assign(applied.begin(), applied.end());
  return out;
}

// ---------------------------------------------------------------------------
// Trace

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct CycleTrace {
  long cycle_id = 0;
  TriggerKind trigger = TriggerKind::timer;
  // Inputs of the deterministic core, sufficient for replay.
  DeviceState state;                // device state at cycle start (after overrides)
  std::map<ParamId, Value> locks;   // after phase 1
  std::vector<Override> overrides;  // detected in phase 1
  ContextSignature signature;
  RetrievalLevel retrieval_level = RetrievalLevel::general;
  std::vector<ContextRule> rules;
  std::map<ParamId, Value> general;
  bool memory = true;
  bool pdl = true;
  std::string inputs_digest;
  // Outputs.
  ActivityResult activity;
  Policy raw_policy;        // backend proposal (or fallback)
  Policy arbitrated;        // after memory arbitration, before verification
  VerificationReport report;
  Policy executed;
  std::vector<std::string> commands;
  std::vector<std::string> advisories;
  std::set<ParamId> attributed;  // parameters this cycle changed
  DeviceState post_state;
  bool degraded = false;
  std::string degradation;
  std::optional<double> elapsed_ms;
};

inline Json to_json(const Override& o) {
  return Json{{"param", o.param}, {"old", o.old_value}, {"new", o.new_value}};
}

inline Json to_json(const ActivityResult& a) {
  return Json{{"activity_type", std::string(to_string(a.activity_type))},
              {"sub_activity", a.sub_activity},
              {"certainty", a.certainty},
              {"critical_level", std::string(to_string(a.critical_level))}};
}

inline ActivityResult activity_from_json(const Json& j, const std::string& path = "$") {
  using namespace detail;
  ActivityResult r;
  auto cat = parse_app_category(require_string(j, "activity_type", path));
  if (!cat) throw SchemaError(path + ".activity_type", "unknown category");
  r.activity_type = *cat;
  r.sub_activity = require_string(j, "sub_activity", path);
  r.certainty = require_number(j, "certainty", path);
  if (r.certainty < 0 || r.certainty > 1) throw SchemaError(path + ".certainty", "outside [0,1]");
  auto lvl = parse_critical_level(require_string(j, "critical_level", path));
  if (!lvl) throw SchemaError(path + ".critical_level", "unknown level");
  r.critical_level = *lvl;
  return r;
}

inline Json to_json(const VerificationReport& r) {
  Json verdicts = Json::array();
  for (const auto& v : r.verdicts) {
    static const char* kinds[] = {"approved", "corrected", "rejected"};
    Json j{{"kind", kinds[static_cast<int>(v.kind)]}, {"target", v.target}, {"rule", v.rule_id},
           {"lock_conflict", v.lock_conflict}};
    j["old"] = v.old_value ? Json(*v.old_value) : Json(nullptr);
    j["new"] = v.new_value ? Json(*v.new_value) : Json(nullptr);
    verdicts.push_back(j);
  }
  Json injected = Json::array();
  for (const auto& i : r.injected) injected.push_back({{"action", to_json(i.action)}, {"rule", i.rule_id}});
  return Json{{"verdicts", verdicts},
              {"injected", injected},
              {"violated_rules", r.violated_rules},
              {"exempted", r.exempted}};
}

inline Json to_json(const ContextRule& r) {
  Json frag = Json::array();
  for (const auto& p : r.fragment) frag.push_back(to_json(p));
  return Json{{"signature", to_json(r.signature)},
              {"fragment", frag},
              {"confidence", r.confidence},
              {"last_update_day", r.last_update_day}};
}

inline ContextRule context_rule_from_json(const Json& j, const std::string& path) {
  using namespace detail;
  ContextRule r;
  r.signature = signature_from_json(require(j, "signature", path), path + ".signature");
  const Json& frag = require_array(j, "fragment", path);
  for (std::size_t k = 0; k < frag.size(); ++k)
    put_preference(r.fragment, preference_from_json(frag[k], index_path(path + ".fragment", k)));
  r.confidence = require_number(j, "confidence", path);
  r.last_update_day = static_cast<int>(require_int(j, "last_update_day", path));
  return r;
}

// Canonical JSON of the deterministic core's inputs.
inline Json trace_inputs_json(const CycleTrace& t) {
  Json rules = Json::array();
  for (const auto& r : t.rules) rules.push_back(to_json(r));
  Json overrides = Json::array();
  for (const auto& o : t.overrides) overrides.push_back(to_json(o));
  return Json{{"state", to_json(t.state)},
              {"locks", t.locks},
              {"overrides", overrides},
              {"signature", to_json(t.signature)},
              {"retrieval_level", std::string(to_string(t.retrieval_level))},
              {"rules", rules},
              {"general", t.general},
              {"memory", t.memory},
              {"pdl", t.pdl},
              {"activity", to_json(t.activity)},
              {"raw_policy", to_json(t.raw_policy)},
              {"degraded", t.degraded}};
}

inline Json to_json(const CycleTrace& t) {
  Json j = trace_inputs_json(t);
  j["cycle_id"] = t.cycle_id;
  j["trigger"] = std::string(to_string(t.trigger));
  j["inputs_digest"] = t.inputs_digest;
  j["arbitrated"] = to_json(t.arbitrated);
  j["report"] = to_json(t.report);
  j["executed"] = to_json(t.executed);
  j["commands"] = t.commands;
  j["advisories"] = t.advisories;
  j["attributed"] = t.attributed;
  j["post_state"] = to_json(t.post_state);
  j["degradation"] = t.degradation;
  if (t.elapsed_ms) j["elapsed_ms"] = *t.elapsed_ms;
  return j;
}

inline CycleTrace trace_from_json(const Json& j, const std::string& path = "$") {
  using namespace detail;
  CycleTrace t;
  t.cycle_id = static_cast<long>(require_int(j, "cycle_id", path));
  std::string trig = require_string(j, "trigger", path);
  if (trig != "app_switch" && trig != "timer") throw SchemaError(path + ".trigger", "unknown trigger");
  t.trigger = trig == "app_switch" ? TriggerKind::app_switch : TriggerKind::timer;
  t.state = state_from_json(require(j, "state", path), path + ".state");
  for (auto it = require(j, "locks", path).begin(); it != j["locks"].end(); ++it)
    t.locks[it.key()] = it.value().get<Value>();
  for (const auto& o : require_array(j, "overrides", path))
    t.overrides.push_back({o.at("param").get<std::string>(), o.at("old").get<Value>(), o.at("new").get<Value>()});
  t.signature = signature_from_json(require(j, "signature", path), path + ".signature");
  std::string lvl = require_string(j, "retrieval_level", path);
  for (auto l : {RetrievalLevel::exact, RetrievalLevel::relax_time, RetrievalLevel::relax_time_battery,
                 RetrievalLevel::general})
    if (to_string(l) == lvl) t.retrieval_level = l;
  const Json& rules = require_array(j, "rules", path);
  for (std::size_t i = 0; i < rules.size(); ++i)
    t.rules.push_back(context_rule_from_json(rules[i], index_path(path + ".rules", i)));
  for (auto it = require(j, "general", path).begin(); it != j["general"].end(); ++it)
    t.general[it.key()] = it.value().get<Value>();
  t.memory = require_bool(j, "memory", path);
  t.pdl = require_bool(j, "pdl", path);
  t.activity = activity_from_json(require(j, "activity", path), path + ".activity");
  t.raw_policy = policy_from_json(require_array(j, "raw_policy", path), path + ".raw_policy");
  t.degraded = require_bool(j, "degraded", path);
  t.inputs_digest = require_string(j, "inputs_digest", path);
  t.arbitrated = policy_from_json(require_array(j, "arbitrated", path), path + ".arbitrated");
  t.executed = policy_from_json(require_array(j, "executed", path), path + ".executed");
  t.commands = require_array(j, "commands", path).get<std::vector<std::string>>();
  t.post_state = state_from_json(require(j, "post_state", path), path + ".post_state");
  t.degradation = require_string(j, "degradation", path);
  t.attributed = require_array(j, "attributed", path).get<std::set<ParamId>>();
  return t;
}

// ---------------------------------------------------------------------------
// Deterministic core

struct CoreResult {
  Arbitration arbitration;
  VerifiedPolicy verified;
  DeviceState post;
  std::set<ParamId> changed;
  bool contradiction = false;
  std::string error;
};

// Arbitration, verification and application. Pure in its inputs.
inline CoreResult run_core(const CapabilityProfile& caps, const ConstraintSet& constraints,
                           const DeviceState& state, const std::map<ParamId, Value>& locks,
                           const std::vector<ContextRule>& rules, const std::map<ParamId, Value>& general,
                           const Policy& raw, const ActivityResult& activity, bool pdl) {
  CoreResult out;
  out.arbitration = arbitrate(caps, locks, rules, general, raw, state);
  VerifyContext vctx{activity.activity_type, activity.activity_type, state.battery_pct};
  if (pdl) {
    try {
      out.verified = verify(caps, out.arbitration.policy, state, vctx, constraints);
    } catch (const ContradictionError& e) {
      out.contradiction = true;
      out.error = e.what();
      Policy locks_only;
      for (const auto& a : out.arbitration.policy)
        if (a.verb == Verb::lock) locks_only.add(a);
      out.verified.policy = locks_only;
    }
  } else {
    // Unverified path: only out-of-domain values are clamped, so that the
    // effector never sees an illegal value.
    for (const auto& a : out.arbitration.policy) {
      Action legal = a;
      const auto& spec = caps.at(a.target);
      if (a.value && !spec.contains(*a.value)) legal.value = validate_value(spec, *a.value).nearest;
      out.verified.policy.add(legal);
      out.verified.report.verdicts.push_back({Verdict::Kind::approved, a.target, a.value, legal.value, "", false});
    }
  }
  out.post = apply_policy(caps, state, out.verified.policy);
  for (const auto& [id, v] : out.post.values)
    if (state.values.at(id) != v) out.changed.insert(id);
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline

struct PipelineConfig {
  bool memory = true;       // LPM retrieval and arbitration
  bool pdl = true;          // deterministic verification
  bool feedback = true;     // state differencing, locks, STRONG events
  bool multi_agent = true;  // activity recognition; off means package-level category only
  bool record_timings = false;
};

class Pipeline {
 public:
  Pipeline(const CapabilityProfile& caps, ConstraintSet constraints, ReasonerBackend& backend,
           PipelineConfig cfg = {})
      : caps_(caps), constraints_(std::move(constraints)), backend_(backend), cfg_(cfg) {}

  ShortTermMemory& stm() { return stm_; }
  const ShortTermMemory& stm() const { return stm_; }
  std::map<std::string, LpmPage>& pages() { return pages_; }
  const PipelineConfig& config() const { return cfg_; }
  const ConstraintSet& constraints() const { return constraints_; }

  LpmPage& page(const std::string& app) {
    auto it = pages_.find(app);
    if (it == pages_.end()) {
      LpmPage p;
      p.app = app;
      it = pages_.emplace(app, std::move(p)).first;
    }
    return it->second;
  }

  // Parameters the last cycle changed whose current value is still the one
  // the system wrote; any other change since then is the user's.
  std::set<ParamId> attributed_now(const DeviceState& cur) const {
    std::set<ParamId> out;
    for (const auto& [id, v] : written_)
      if (cur.values.count(id) && cur.values.at(id) == v) out.insert(id);
    return out;
  }

  CycleTrace run_cycle(const DecisionContext& ctx, TriggerKind trigger) {
    const auto t0 = std::chrono::steady_clock::now();
    CycleTrace t;
    t.cycle_id = next_cycle_++;
    t.trigger = trigger;
    t.memory = cfg_.memory;
    t.pdl = cfg_.pdl;
    const DeviceState& cur = ctx.device_state;
    const std::string& app = cur.foreground_app;

    const bool new_session =
        trigger == TriggerKind::app_switch || !stm_.session_open() || stm_.session_app() != app;
    if (new_session) {
      stm_.begin_session(app, cur.clock);
      last_signature_.reset();
    }
    if (!stm_.last_known_state()) stm_.set_last_known_state(cur);

    // Phase 1: feedback.
    if (cfg_.feedback) {
      t.overrides = state_diff(*stm_.last_known_state(), cur, attributed_now(cur));
    }

    // Phase 2: recognition.
    DecisionContext redacted = ctx;
    redacted.ui_descriptor = redact(ctx.ui_descriptor);
    try {
      t.activity = backend_.recognize(redacted);
      if (!cfg_.multi_agent) t.activity.sub_activity = "default";
    } catch (const std::exception& e) {
      t.activity = {};
      t.degraded = true;
      t.degradation = std::string("recognize: ") + e.what();
    }
    t.signature = make_signature(t.activity.activity_type, t.activity.sub_activity, cur.battery_pct, cur.clock);
    const ContextSignature override_sig = last_signature_ ? *last_signature_ : t.signature;
    for (const auto& o : t.overrides) stm_.record_override(o, override_sig, cur.clock);
    t.locks = stm_.locks();
    t.state = cur;

    // Phase 3: memory and proposal.
    if (cfg_.memory) {
      LpmPage& pg = page(app);
      Retrieval r = pg.retrieve(t.signature);
      t.retrieval_level = r.level;
      t.rules = std::move(r.rules);
      t.general = pg.general;
    }
    ProposalInput in{t.activity, cur, t.locks, t.rules, &constraints_, &caps_};
    if (!t.degraded) {
      try {
        t.raw_policy = backend_.propose(in);
        for (const auto& a : t.raw_policy) (void)caps_.at(a.target);
      } catch (const std::exception& e) {
        t.degraded = true;
        t.degradation = std::string("propose: ") + e.what();
      }
    }
    if (t.degraded) t.raw_policy = fallback_policy(caps_, bucket_of(cur.battery_pct));
    t.inputs_digest = hex64(fnv1a(trace_inputs_json(t).dump()));

    // Phase 4: verification, emission, execution.
    CoreResult core = run_core(caps_, constraints_, cur, t.locks, t.rules, t.general, t.raw_policy,
                               t.activity, cfg_.pdl);
    if (core.contradiction) {
      t.degraded = true;
      t.degradation = "verify: " + core.error;
    }
    t.arbitrated = core.arbitration.policy;
    t.report = core.verified.report;
    t.executed = core.verified.policy;
    try {
      t.advisories = backend_.verify_assist(t.executed, constraints_, caps_);
    } catch (const std::exception& e) {
      t.advisories = {std::string("verify_assist failed: ") + e.what()};
    }
    try {
      t.commands = backend_.emit_commands(t.executed, caps_);
      if (t.commands != render_commands(t.executed, caps_))
        throw BackendError("commands do not match the capability templates");
    } catch (const std::exception& e) {
      t.commands = render_commands(t.executed, caps_);
      t.advisories.push_back(std::string("emit fell back to templates: ") + e.what());
    }
    t.post_state = core.post;
    t.attributed = core.changed;

    AutoRecord rec;
    rec.time = cur.clock;
    rec.app = app;
    rec.session = stm_.session_id();
    rec.signature = t.signature;
    rec.executed = t.executed;
    for (const auto& id : core.changed) rec.changes[id] = {cur.values.at(id), core.post.values.at(id)};
    rec.matched_rules = core.arbitration.applied_rules;
    stm_.record_execution(std::move(rec), core.post);

    written_.clear();
    for (const auto& id : core.changed) written_[id] = core.post.values.at(id);
    last_signature_ = t.signature;
    if (cfg_.record_timings)
      t.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return t;
  }

 private:
  const CapabilityProfile& caps_;
  ConstraintSet constraints_;
  ReasonerBackend& backend_;
  PipelineConfig cfg_;
  ShortTermMemory stm_;
  std::map<std::string, LpmPage> pages_;
  std::map<ParamId, Value> written_;
  std::optional<ContextSignature> last_signature_;
  long next_cycle_ = 0;
};

// Recomputes the deterministic core from a trace's recorded inputs. Returns
// an empty string when digest, policies, post-state and attributed set all
// match, else a description of the first mismatch.
inline std::string replay_check(const CycleTrace& t, const CapabilityProfile& caps,
                                const ConstraintSet& constraints) {
  const std::string digest = hex64(fnv1a(trace_inputs_json(t).dump()));
  if (digest != t.inputs_digest) return "inputs digest mismatch: " + digest + " vs " + t.inputs_digest;
  CoreResult core = run_core(caps, constraints, t.state, t.locks, t.rules, t.general, t.raw_policy,
                             t.activity, t.pdl);
  if (canonical_dump(to_json(core.arbitration.policy)) != canonical_dump(to_json(t.arbitrated)))
    return "arbitrated policy differs";
  if (canonical_dump(to_json(core.verified.policy)) != canonical_dump(to_json(t.executed)))
    return "executed policy differs";
  if (!(core.post == t.post_state)) return "post-state differs";
  if (core.changed != t.attributed) return "attributed set differs";
  return "";
}

}  // namespace powerlens

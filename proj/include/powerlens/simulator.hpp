#pragma once

// Synthetic world: energy model, user profiles with ground-truth preferences
// and override behavior, task scenarios, single sessions and multi-day runs.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "powerlens/constraints.hpp"
#include "powerlens/device_model.hpp"
#include "powerlens/memory.hpp"
#include "powerlens/pipeline.hpp"

namespace powerlens {

// ---------------------------------------------------------------------------
// Randomness

// SplitMix64 step; used to derive independent seeds from (seed, index).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// mt19937_64 with a fixed double mapping, so draws are identical across
// standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 gen_;
};

// ---------------------------------------------------------------------------
// Energy model

struct LoadFunction {
  enum class Kind { linear, table, popcount };
  Kind kind = Kind::linear;
  double lo = 0.0;  // linear: value mapped to 0
  double hi = 1.0;  // linear: value mapped to 1
  std::map<Value, double> table;
  int bits = 8;     // popcount: fraction of set bits

  double operator()(Value v) const {
    switch (kind) {
      case Kind::linear: return (static_cast<double>(v) - lo) / (hi - lo);
      case Kind::table: {
        auto it = table.find(v);
        if (it == table.end()) throw InvalidValueError("load table has no entry for " + std::to_string(v));
        return it->second;
      }
      case Kind::popcount: return std::popcount(static_cast<unsigned>(v)) / static_cast<double>(bits);
    }
    return 0.0;
  }
};

struct EnergyModel {
  std::map<Category, double> budget;  // percent of device power; sums to 100
  std::map<ParamId, LoadFunction> load;
  double drain_pct_per_unit = 0.002;  // battery percent per energy unit

  // Impact-class weight (H=3, M=2, L=1) normalized within the category.
  double intra_weight(const CapabilityProfile& caps, const ParameterSpec& spec) const {
    double total = 0.0;
    for (const auto& s : caps.parameters)
      if (s.category == spec.category) total += s.power_weight;
    return spec.power_weight / total;
  }

  // Energy units per minute contributed by one parameter at value v.
  double rate(const CapabilityProfile& caps, const ParameterSpec& spec, Value v) const {
    return budget.at(spec.category) * intra_weight(caps, spec) * load.at(spec.id)(v);
  }
};

// Sum over parameters of budget(category) * weight * load(value) * minutes.
inline double energy(const CapabilityProfile& caps, const EnergyModel& model, const DeviceState& s,
                     double minutes) {
  double e = 0.0;
  for (const auto& spec : caps.parameters) e += model.rate(caps, spec, s.at(spec.id));
  return e * minutes;
}

inline Json to_json(const LoadFunction& f) {
  switch (f.kind) {
    case LoadFunction::Kind::linear: return Json{{"kind", "linear"}, {"lo", f.lo}, {"hi", f.hi}};
    case LoadFunction::Kind::popcount: return Json{{"kind", "popcount"}, {"bits", f.bits}};
    case LoadFunction::Kind::table: {
      Json t = Json::array();
      for (const auto& [v, x] : f.table) t.push_back(Json::array({v, x}));
      return Json{{"kind", "table"}, {"table", t}};
    }
  }
  return {};
}

inline Json to_json(const EnergyModel& m) {
  Json budgets = Json::object();
  for (const auto& [c, b] : m.budget) budgets[std::string(to_string(c))] = b;
  Json loads = Json::object();
  for (const auto& [id, f] : m.load) loads[id] = to_json(f);
  return Json{{"budgets", budgets}, {"loads", loads}, {"drain_pct_per_unit", m.drain_pct_per_unit}};
}

inline EnergyModel load_energy_model(const Json& j, const CapabilityProfile& caps) {
  using namespace detail;
  EnergyModel m;
  const Json& b = require(j, "budgets", "$");
  double sum = 0.0;
  for (auto it = b.begin(); it != b.end(); ++it) {
    auto c = parse_category(it.key());
    if (!c) throw SchemaError("$.budgets." + it.key(), "unknown category");
    m.budget[*c] = it.value().get<double>();
    sum += m.budget[*c];
  }
  if (std::abs(sum - 100.0) > 1e-9) throw SchemaError("$.budgets", "budgets must sum to 100");
  const Json& loads = require(j, "loads", "$");
  for (const auto& spec : caps.parameters) {
    const std::string path = "$.loads." + spec.id;
    const Json& f = require(loads, spec.id, "$.loads");
    LoadFunction lf;
    std::string kind = require_string(f, "kind", path);
    if (kind == "linear") {
      lf.kind = LoadFunction::Kind::linear;
      lf.lo = require_number(f, "lo", path);
      lf.hi = require_number(f, "hi", path);
      if (lf.hi <= lf.lo) throw SchemaError(path + ".hi", "must exceed lo");
    } else if (kind == "popcount") {
      lf.kind = LoadFunction::Kind::popcount;
      lf.bits = static_cast<int>(require_int(f, "bits", path));
    } else if (kind == "table") {
      lf.kind = LoadFunction::Kind::table;
      for (const auto& row : require_array(f, "table", path))
        lf.table[row.at(0).get<Value>()] = row.at(1).get<double>();
      for (Value v : spec.domain_values())
        if (!lf.table.count(v)) throw SchemaError(path + ".table", "no entry for " + std::to_string(v));
    } else {
      throw SchemaError(path + ".kind", "unknown load kind " + kind);
    }
    m.load[spec.id] = lf;
  }
  for (const auto& c : caps.categories())
    if (!m.budget.count(c)) throw SchemaError("$.budgets", "missing category " + std::string(to_string(c)));
  m.drain_pct_per_unit = require_number(j, "drain_pct_per_unit", "$");
  return m;
}

// ---------------------------------------------------------------------------
// User profile

struct Cell {
  AppCategory category;
  BatteryBucket bucket;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

inline std::string cell_key(const Cell& c) {
  return std::string(to_string(c.category)) + "/" + std::string(to_string(c.bucket));
}

struct GtShift {
  int day = 0;
  std::optional<AppCategory> category;  // empty: every category
  std::optional<BatteryBucket> bucket;  // empty: every bucket
  std::map<ParamId, Value> values;
};

struct UserProfile {
  std::string name;
  std::map<Cell, std::map<ParamId, Value>> gt;
  std::map<ParamId, double> override_prob;
  std::map<ParamId, double> tolerance;  // relative band for continuous parameters
  std::vector<GtShift> shifts;

  const std::map<ParamId, Value>& gt_for(AppCategory c, BatteryBucket b) const {
    auto it = gt.find({c, b});
    if (it == gt.end()) throw InvalidValueError("profile " + name + " has no GT for " + cell_key({c, b}));
    return it->second;
  }
  double prob(const ParamId& id) const {
    auto it = override_prob.find(id);
    return it == override_prob.end() ? 0.5 : it->second;
  }
  double tol(const ParamId& id) const {
    auto it = tolerance.find(id);
    return it == tolerance.end() ? 0.10 : it->second;
  }

  // Applies every shift scheduled for `day`.
  void apply_shifts(int day) {
    for (const auto& s : shifts) {
      if (s.day != day) continue;
      for (auto& [cell, vec] : gt) {
        if (s.category && *s.category != cell.category) continue;
        if (s.bucket && *s.bucket != cell.bucket) continue;
        for (const auto& [id, v] : s.values) vec[id] = v;
      }
    }
  }
};

// Continuous parameters match within +-tol relative to the GT value; every
// other kind matches exactly.
inline bool within_tolerance(const ParameterSpec& spec, Value v, Value gt, double tol) {
  if (!spec.is_continuous()) return v == gt;
  return std::abs(static_cast<double>(v) - gt) <= tol * std::abs(static_cast<double>(gt)) + 1e-9;
}

inline std::string check_profile(const CapabilityProfile& caps, const UserProfile& p) {
  for (const auto& [cell, vec] : p.gt) {
    for (const auto& spec : caps.parameters) {
      auto it = vec.find(spec.id);
      if (it == vec.end()) return cell_key(cell) + " lacks " + spec.id;
      if (!spec.contains(it->second)) return cell_key(cell) + "." + spec.id + " outside its domain";
    }
  }
  for (const auto& [id, q] : p.override_prob)
    if (q < 0 || q > 1) return "override_prob." + id + " outside [0,1]";
  for (const auto& s : p.shifts)
    for (const auto& [id, v] : s.values)
      if (!caps.at(id).contains(v)) return "shift value for " + id + " outside its domain";
  return "";
}

// For each parameter outside GT +- tolerance, an override back to GT with the
// profile's probability. In-band parameters are never touched. One draw per
// out-of-band parameter, in parameter order.
inline std::vector<Override> simulate_user_response(const CapabilityProfile& caps, const UserProfile& profile,
                                                    const DeviceState& state,
                                                    const std::map<ParamId, Value>& gt, Rng& rng) {
  std::vector<Override> out;
  for (const auto& spec : caps.parameters) {
    const Value v = state.at(spec.id);
    const Value want = gt.at(spec.id);
    if (within_tolerance(spec, v, want, profile.tol(spec.id))) continue;
    if (rng.bernoulli(profile.prob(spec.id))) out.push_back({spec.id, v, want});
  }
  return out;
}

inline Json to_json(const UserProfile& p) {
  Json gt = Json::object();
  for (const auto& [cell, vec] : p.gt) gt[cell_key(cell)] = vec;
  Json shifts = Json::array();
  for (const auto& s : p.shifts) {
    Json j{{"day", s.day}, {"values", s.values}};
    j["category"] = s.category ? std::string(to_string(*s.category)) : "*";
    j["bucket"] = s.bucket ? std::string(to_string(*s.bucket)) : "*";
    shifts.push_back(j);
  }
  return Json{{"name", p.name},
              {"gt", gt},
              {"override_prob", p.override_prob},
              {"tolerance", p.tolerance},
              {"shifts", shifts}};
}

inline UserProfile load_user_profile(const Json& j, const CapabilityProfile& caps) {
  using namespace detail;
  UserProfile p;
  p.name = require_string(j, "name", "$");
  const Json& gt = require(j, "gt", "$");
  for (auto it = gt.begin(); it != gt.end(); ++it) {
    const std::string& k = it.key();
    auto slash = k.find('/');
    auto cat = parse_app_category(k.substr(0, slash));
    auto bucket = slash == std::string::npos ? std::nullopt : parse_battery_bucket(k.substr(slash + 1));
    if (!cat || !bucket) throw SchemaError("$.gt." + k, "expected <category>/<bucket>");
    p.gt[{*cat, *bucket}] = it.value().get<std::map<ParamId, Value>>();
  }
  p.override_prob = require(j, "override_prob", "$").get<std::map<ParamId, double>>();
  p.tolerance = require(j, "tolerance", "$").get<std::map<ParamId, double>>();
  if (j.contains("shifts")) {
    const Json& ss = require_array(j, "shifts", "$");
    for (std::size_t i = 0; i < ss.size(); ++i) {
      const std::string path = index_path("$.shifts", i);
      GtShift s;
      s.day = static_cast<int>(require_int(ss[i], "day", path));
      std::string c = require_string(ss[i], "category", path);
      if (c != "*") {
        s.category = parse_app_category(c);
        if (!s.category) throw SchemaError(path + ".category", "unknown category");
      }
      std::string b = require_string(ss[i], "bucket", path);
      if (b != "*") {
        s.bucket = parse_battery_bucket(b);
        if (!s.bucket) throw SchemaError(path + ".bucket", "unknown bucket");
      }
      s.values = require(ss[i], "values", path).get<std::map<ParamId, Value>>();
      p.shifts.push_back(std::move(s));
    }
  }
  std::string err = check_profile(caps, p);
  if (!err.empty()) throw SchemaError("$", err);
  return p;
}

// ---------------------------------------------------------------------------
// Scenarios

struct ScriptStep {
  int at = 0;  // minutes from task start
  std::string activity;
  std::string text;  // visible text on screen
};

struct TaskScenario {
  std::string id;
  std::string app;
  AppCategory category = AppCategory::idle;
  int duration = 30;  // minutes
  std::vector<ScriptStep> script;

  const ScriptStep& step_at(int offset) const {
    const ScriptStep* cur = &script.front();
    for (const auto& s : script)
      if (s.at <= offset) cur = &s;
    return *cur;
  }
};

struct ScheduledTask {
  int minute = 0;  // minute of day the task starts
  std::string task;
  std::optional<int> battery;  // battery percent forced at task start
};

struct ScenarioPack {
  std::vector<TaskScenario> tasks;
  std::vector<ScheduledTask> schedule;  // daily schedule for longitudinal runs

  const TaskScenario& task(const std::string& id) const {
    for (const auto& t : tasks)
      if (t.id == id) return t;
    throw ConfigError("unknown task " + id);
  }
  AppRegistry registry() const {
    AppRegistry r;
    for (const auto& t : tasks) r[t.app] = t.category;
    return r;
  }
};

inline Json ui_descriptor(const TaskScenario& task, const ScriptStep& step) {
  return Json{{"package", task.app},
               {"activity", step.activity},
               {"nodes", Json::array({Json{{"class", "TextView"}, {"text", step.text}},
                                      Json{{"class", "Button"}, {"text", "Button: Send"}}})}};
}

inline Json to_json(const ScenarioPack& pack) {
  Json tasks = Json::array();
  for (const auto& t : pack.tasks) {
    Json script = Json::array();
    for (const auto& s : t.script) script.push_back({{"at", s.at}, {"activity", s.activity}, {"text", s.text}});
    tasks.push_back({{"id", t.id},
                     {"app", t.app},
                     {"category", std::string(to_string(t.category))},
                     {"duration", t.duration},
                     {"script", script}});
  }
  Json schedule = Json::array();
  for (const auto& s : pack.schedule) {
    Json j{{"minute", s.minute}, {"task", s.task}};
    if (s.battery) j["battery"] = *s.battery;
    schedule.push_back(j);
  }
  return Json{{"tasks", tasks}, {"schedule", schedule}};
}

inline ScenarioPack load_scenario_pack(const Json& j) {
  using namespace detail;
  ScenarioPack pack;
  const Json& tasks = require_array(j, "tasks", "$");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const std::string path = index_path("$.tasks", i);
    TaskScenario t;
    t.id = require_string(tasks[i], "id", path);
    if (!ids.insert(t.id).second) throw SchemaError(path + ".id", "duplicate task id");
    t.app = require_string(tasks[i], "app", path);
    auto cat = parse_app_category(require_string(tasks[i], "category", path));
    if (!cat) throw SchemaError(path + ".category", "unknown category");
    t.category = *cat;
    t.duration = static_cast<int>(require_int(tasks[i], "duration", path));
    if (t.duration <= 0) throw SchemaError(path + ".duration", "must be positive");
    const Json& script = require_array(tasks[i], "script", path);
    for (std::size_t k = 0; k < script.size(); ++k) {
      const std::string sp = index_path(path + ".script", k);
      t.script.push_back({static_cast<int>(require_int(script[k], "at", sp)),
                          require_string(script[k], "activity", sp), require_string(script[k], "text", sp)});
    }
    if (t.script.empty() || t.script.front().at != 0)
      throw SchemaError(path + ".script", "must start at minute 0");
    pack.tasks.push_back(std::move(t));
  }
  if (j.contains("schedule")) {
    const Json& sched = require_array(j, "schedule", "$");
    for (std::size_t i = 0; i < sched.size(); ++i) {
      const std::string path = index_path("$.schedule", i);
      ScheduledTask s{static_cast<int>(require_int(sched[i], "minute", path)), require_string(sched[i], "task", path),
                      std::nullopt};
      if (sched[i].contains("battery")) {
        s.battery = static_cast<int>(require_int(sched[i], "battery", path));
        if (*s.battery < 0 || *s.battery > 100) throw SchemaError(path + ".battery", "outside 0..100");
      }
      if (!ids.count(s.task)) throw SchemaError(path + ".task", "unknown task " + s.task);
      pack.schedule.push_back(std::move(s));
    }
  }
  return pack;
}

// ---------------------------------------------------------------------------
// Controllers: what acts on the device at each cycle

struct CycleOutcome {
  Policy evaluated;  // the unverified decision (pre stage)
  Policy executed;   // what reached the device (post stage)
  DeviceState post;
  VerifyContext ctx;
  std::set<ParamId> changed;
  std::optional<CycleTrace> trace;
};

class Controller {
 public:
  virtual ~Controller() = default;
  virtual CycleOutcome on_cycle(const DecisionContext& ctx, TriggerKind trigger, AppCategory category) = 0;
  // Called once after the last session of a day.
  virtual void end_of_day(int /*day*/) {}
};

inline CycleOutcome apply_static(const CapabilityProfile& caps, const DeviceState& s, const Policy& p,
                                 AppCategory category) {
  CycleOutcome o;
  o.evaluated = p;
  o.executed = p;
  o.post = apply_policy(caps, s, p);
  o.ctx = {category, category, s.battery_pct};
  for (const auto& [id, v] : o.post.values)
    if (s.values.at(id) != v) o.changed.insert(id);
  return o;
}

// No intervention.
class StockController : public Controller {
 public:
  explicit StockController(const CapabilityProfile& caps) : caps_(caps) {}
  CycleOutcome on_cycle(const DecisionContext& ctx, TriggerKind, AppCategory category) override {
    return apply_static(caps_, ctx.device_state, {}, category);
  }

 private:
  const CapabilityProfile& caps_;
};

// Applies a fixed policy table keyed by task category, battery and trigger.
class StaticController : public Controller {
 public:
  using Table = std::function<Policy(AppCategory, const DeviceState&, TriggerKind)>;
  StaticController(const CapabilityProfile& caps, Table table) : caps_(caps), table_(std::move(table)) {}
  CycleOutcome on_cycle(const DecisionContext& ctx, TriggerKind trigger, AppCategory category) override {
    return apply_static(caps_, ctx.device_state, table_(category, ctx.device_state, trigger), category);
  }

 private:
  const CapabilityProfile& caps_;
  Table table_;
};

class PipelineController : public Controller {
 public:
  explicit PipelineController(Pipeline& p) : pipeline_(p) {}
  CycleOutcome on_cycle(const DecisionContext& ctx, TriggerKind trigger, AppCategory) override {
    CycleTrace t = pipeline_.run_cycle(ctx, trigger);
    CycleOutcome o;
    o.evaluated = t.arbitrated;
    o.executed = t.executed;
    o.post = t.post_state;
    o.ctx = {t.activity.activity_type, t.activity.activity_type, t.state.battery_pct};
    o.changed = t.attributed;
    o.trace = std::move(t);
    return o;
  }
  Pipeline& pipeline() { return pipeline_; }

 private:
  Pipeline& pipeline_;
};

// ---------------------------------------------------------------------------
// Sessions

struct World {
  DeviceState state;
  double battery = 100.0;

  void set_battery(double b) {
    battery = std::clamp(b, 0.0, 100.0);
    state.battery_pct = static_cast<int>(std::lround(battery));
  }
};

struct CycleRecord {
  int minute = 0;
  TriggerKind trigger = TriggerKind::timer;
  Cell gt_cell{AppCategory::idle, BatteryBucket::high};
  DeviceState pre;  // device state the decision saw
  CycleOutcome outcome;
  std::vector<Override> user_overrides;  // applied just before this cycle
  int reverts = 0;                       // overrides on parameters the previous cycle changed
  double energy = 0.0;                   // accrued until the next cycle or the task end
};

struct SessionTrace {
  std::string task;
  std::string app;
  AppCategory category = AppCategory::idle;
  int day = 0;
  int start_minute = 0;
  double energy = 0.0;
  int overrides = 0;
  int reverts = 0;
  int system_changes = 0;  // parameter changes by cycles followed by a user-response boundary
  std::vector<CycleRecord> cycles;
};

struct SessionOptions {
  std::optional<BatteryBucket> fixed_bucket;  // GT cell bucket; default follows the battery
  bool user_enabled = true;
  int period = 5;
};

// Runs one task from world.state.clock. The app switch fires the first
// cycle; the timer fires every `period` minutes after. Before every cycle but
// the first the simulated user may override parameters; energy accrues at the
// state in force between cycles and drains the battery.
inline SessionTrace simulate_session(const CapabilityProfile& caps, const EnergyModel& model,
                                     const UserProfile& profile, const TaskScenario& task,
                                     Controller& controller, World& world, Rng& rng,
                                     const SessionOptions& opt = {}) {
  SessionTrace tr;
  tr.task = task.id;
  tr.app = task.app;
  tr.category = task.category;
  tr.day = world.state.clock.day;
  tr.start_minute = world.state.clock.minute;
  world.state.foreground_app = task.app;

  TriggerScheduler sched(opt.period);
  std::vector<std::pair<int, TriggerKind>> fires;
  if (sched.schedule(TriggerKind::app_switch, 0)) fires.push_back({0, TriggerKind::app_switch});
  for (int m = 1; m < task.duration; ++m)
    if (sched.schedule(TriggerKind::timer, m)) fires.push_back({m, TriggerKind::timer});

  std::set<ParamId> prev_changed;
  for (std::size_t k = 0; k < fires.size(); ++k) {
    const auto [offset, trigger] = fires[k];
    world.state.clock.minute = tr.start_minute + offset;
    CycleRecord rec;
    rec.minute = world.state.clock.minute;
    rec.trigger = trigger;
    const BatteryBucket bucket = opt.fixed_bucket ? *opt.fixed_bucket : bucket_of(world.state.battery_pct);
    rec.gt_cell = {task.category, bucket};
    if (k > 0 && opt.user_enabled) {
      rec.user_overrides =
          simulate_user_response(caps, profile, world.state, profile.gt_for(task.category, bucket), rng);
      for (const auto& o : rec.user_overrides) {
        world.state.values[o.param] = o.new_value;
        if (prev_changed.count(o.param)) ++rec.reverts;
      }
      tr.overrides += static_cast<int>(rec.user_overrides.size());
      tr.reverts += rec.reverts;
      tr.system_changes += static_cast<int>(prev_changed.size());
    }
    DecisionContext ctx;
    ctx.device_state = world.state;
    ctx.ui_descriptor = ui_descriptor(task, task.step_at(offset));
    rec.pre = world.state;
    rec.outcome = controller.on_cycle(ctx, trigger, task.category);
    const int battery_pct = world.state.battery_pct;
    world.state.values = rec.outcome.post.values;
    world.state.battery_pct = battery_pct;
    prev_changed = rec.outcome.changed;

    const int end = k + 1 < fires.size() ? fires[k + 1].first : task.duration;
    const double e = energy(caps, model, world.state, end - offset);
    rec.energy = e;
    tr.energy += e;
    world.set_battery(world.battery - e * model.drain_pct_per_unit);
    tr.cycles.push_back(std::move(rec));
  }
  world.state.clock.minute = tr.start_minute + task.duration;
  return tr;
}

// ---------------------------------------------------------------------------
// Longitudinal runs

struct SimToggles {
  bool memory = true;
  bool pdl = true;
  bool feedback = true;
  bool multi_agent = true;
  bool adversarial = false;
  double adversarial_rate = 0.2;
};

struct SimRun {
  std::uint64_t seed = 1;
  int days = 14;
  UserProfile profile;
  ScenarioPack scenarios;
  SimToggles toggles;
  int day_start_minute = 7 * 60;
  ReasonerBackend* backend = nullptr;  // not owned; null selects the heuristic backend
};

struct DayStats {
  int day = 0;
  int sessions = 0;
  int cycles = 0;
  double energy = 0.0;
  int overrides = 0;
  int reverts = 0;
  int system_changes = 0;
  int strong_events = 0;
  int rule_count = 0;
  int candidate_count = 0;
  double revert_rate() const { return system_changes == 0 ? 0.0 : static_cast<double>(reverts) / system_changes; }
};

struct Replacement {
  int day = 0;
  std::string app;
  std::string signature;
  Preference old_pref;
  Preference new_pref;
};

struct LongitudinalTrace {
  std::vector<DayStats> days;
  std::vector<SessionTrace> sessions;
  // Per app and key ("rule:<sig>" or "cand:<sig>|<param>"), confidence at the
  // end of each day; -1 where absent.
  std::map<std::string, std::vector<double>> confidence;
  std::vector<Replacement> replacements;
  std::map<std::string, LpmPage> pages;
  int strong_events = 0;
  int weak_events = 0;
  long cycles = 0;
  long contradictions = 0;
  long post_violations = 0;  // hard predicates failing after execution (must stay 0 with pdl)
};

namespace detail {

inline void record_confidence(LongitudinalTrace& tr, const std::map<std::string, LpmPage>& pages, int day,
                              int days) {
  for (const auto& [app, page] : pages) {
    auto put = [&](const std::string& key, double c) {
      auto& series = tr.confidence[app + " " + key];
      if (series.empty()) series.assign(days, -1.0);
      series[day] = c;
    };
    for (const auto& r : page.rules()) put("rule:" + r.key(), r.confidence);
    for (const auto& c : page.candidates) put("cand:" + c.key(), c.confidence);
  }
}

inline std::vector<Replacement> find_replacements(const LpmPage& before, const LpmPage& after, int day) {
  std::vector<Replacement> out;
  for (const auto& old_rule : before.rules()) {
    const ContextRule* now = after.find_rule(old_rule.signature);
    if (!now) continue;
    for (const auto& op : old_rule.fragment)
      for (const auto& np : now->fragment)
        if (np.target == op.target && !(np == op)) out.push_back({day, after.app, old_rule.key(), op, np});
  }
  return out;
}

}  // namespace detail

// Daily schedule with nightly distillation and a weekly general-profile
// aggregation; battery is recharged to 100 every morning.
inline LongitudinalTrace run_days(const CapabilityProfile& caps, const ConstraintSet& constraints,
                                  const EnergyModel& model, SimRun run) {
  LongitudinalTrace tr;
  HeuristicBackend heuristic(run.scenarios.registry());
  ReasonerBackend& base = run.backend ? *run.backend : static_cast<ReasonerBackend&>(heuristic);
  AdversarialBackend adversarial(base, run.toggles.adversarial_rate, mix_seed(run.seed, 0xAD));
  ReasonerBackend& backend = run.toggles.adversarial ? static_cast<ReasonerBackend&>(adversarial) : base;
  PipelineConfig cfg;
  cfg.memory = run.toggles.memory;
  cfg.pdl = run.toggles.pdl;
  cfg.feedback = run.toggles.feedback;
  cfg.multi_agent = run.toggles.multi_agent;
  Pipeline pipeline(caps, constraints, backend, cfg);
  PipelineController controller(pipeline);
  HeuristicAnalyzer analyzer;
  std::vector<SessionEnd> week_ends;

  World world;
  world.state = default_state(caps, 100, "", {0, run.day_start_minute});
  for (int day = 0; day < run.days; ++day) {
    run.profile.apply_shifts(day);
    DayStats ds;
    ds.day = day;
    world.set_battery(100.0);
    for (std::size_t i = 0; i < run.scenarios.schedule.size(); ++i) {
      const auto& item = run.scenarios.schedule[i];
      const TaskScenario& task = run.scenarios.task(item.task);
      world.state.clock = {day, item.minute};
      if (item.battery) world.set_battery(*item.battery);
      Rng rng(mix_seed(run.seed, static_cast<std::uint64_t>(day) * 1000 + i));
      SessionTrace st = simulate_session(caps, model, run.profile, task, controller, world, rng);
      ds.sessions++;
      ds.cycles += static_cast<int>(st.cycles.size());
      ds.energy += st.energy;
      ds.overrides += st.overrides;
      ds.reverts += st.reverts;
      ds.system_changes += st.system_changes;
      for (const auto& c : st.cycles) {
        ++tr.cycles;
        if (c.outcome.trace && c.outcome.trace->degraded) ++tr.contradictions;
        const DeviceState& post = c.outcome.post;
        for (const auto& f : predicate_failures(hard_only(constraints), c.outcome.ctx, post))
          (void)f, ++tr.post_violations;
      }
      tr.sessions.push_back(std::move(st));
    }
    pipeline.stm().end_session({day, 24 * 60 - 1});
    EventLog log = pipeline.stm().take_log();
    for (const auto& e : log) {
      if (const auto* f = std::get_if<FeedbackEvent>(&e)) {
        if (f->strength == Strength::strong) ++ds.strong_events, ++tr.strong_events;
        else ++tr.weak_events;
        pipeline.page(f->app);
      } else if (const auto* s = std::get_if<SessionEnd>(&e)) {
        week_ends.push_back(*s);
      } else if (const auto* a = std::get_if<AutoRecord>(&e)) {
        pipeline.page(a->app);
      }
    }
    if (cfg.memory) {
      for (auto& [app, page] : pipeline.pages()) {
        LpmPage next = distill(log, page, analyzer, day);
        auto reps = detail::find_replacements(page, next, day);
        tr.replacements.insert(tr.replacements.end(), reps.begin(), reps.end());
        page = std::move(next);
      }
      if (day % 7 == 6) {
        for (auto& [app, page] : pipeline.pages()) {
          std::vector<SessionEnd> mine;
          for (const auto& s : week_ends)
            if (s.app == app) mine.push_back(s);
          page.general = aggregate_general_profile(caps, page.general, mine);
        }
        week_ends.clear();
      }
    }
    for (const auto& [app, page] : pipeline.pages()) {
      ds.rule_count += static_cast<int>(page.rules().size());
      ds.candidate_count += static_cast<int>(page.candidates.size());
    }
    detail::record_confidence(tr, pipeline.pages(), day, run.days);
    tr.days.push_back(ds);
  }
  tr.pages = pipeline.pages();
  return tr;
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace detail

inline std::string days_csv(const LongitudinalTrace& tr) {
  std::string s =
      "day,sessions,cycles,energy,overrides,reverts,system_changes,revert_rate,strong_events,rule_count,"
      "candidate_count\n";
  for (const auto& d : tr.days)
    s += std::to_string(d.day) + "," + std::to_string(d.sessions) + "," + std::to_string(d.cycles) + "," +
         detail::num(d.energy) + "," + std::to_string(d.overrides) + "," + std::to_string(d.reverts) + "," +
         std::to_string(d.system_changes) + "," + detail::num(d.revert_rate()) + "," +
         std::to_string(d.strong_events) + "," + std::to_string(d.rule_count) + "," +
         std::to_string(d.candidate_count) + "\n";
  return s;
}

inline std::string cycles_csv(const LongitudinalTrace& tr) {
  std::string s = "day,session,cycle,minute,trigger,task,category,bucket,battery,energy,overrides,reverts,changed\n";
  for (std::size_t i = 0; i < tr.sessions.size(); ++i) {
    const auto& st = tr.sessions[i];
    for (std::size_t k = 0; k < st.cycles.size(); ++k) {
      const auto& c = st.cycles[k];
      s += std::to_string(st.day) + "," + std::to_string(i) + "," + std::to_string(k) + "," +
           std::to_string(c.minute) + "," + std::string(to_string(c.trigger)) + "," + st.task + "," +
           std::string(to_string(st.category)) + "," + std::string(to_string(c.gt_cell.bucket)) + "," +
           std::to_string(c.pre.battery_pct) + "," + detail::num(c.energy) + "," +
           std::to_string(c.user_overrides.size()) + "," + std::to_string(c.reverts) + "," +
           std::to_string(c.outcome.changed.size()) + "\n";
    }
  }
  return s;
}

// One row per (series, day) where the rule or candidate existed.
inline std::string confidence_csv(const LongitudinalTrace& tr) {
  std::string s = "series,day,confidence\n";
  for (const auto& [key, series] : tr.confidence)
    for (std::size_t d = 0; d < series.size(); ++d)
      if (series[d] >= 0) s += "\"" + key + "\"," + std::to_string(d) + "," + detail::num(series[d]) + "\n";
  return s;
}

}  // namespace powerlens

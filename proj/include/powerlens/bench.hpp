#pragma once

// Benchmark grid, baselines, ablation configurations and report aggregation.

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "powerlens/metrics.hpp"
#include "powerlens/pipeline.hpp"
#include "powerlens/sim_presets.hpp"
#include "powerlens/simulator.hpp"

namespace powerlens {

// ---------------------------------------------------------------------------
// Grid

struct BenchInstance {
  int id = 0;
  std::string task;
  AppCategory category = AppCategory::idle;
  std::string profile;
  BatteryBucket bucket = BatteryBucket::high;
  int battery = 80;
  std::uint64_t seed = 0;
};

struct GridSpec {
  std::uint64_t seed = 7;
  std::map<BatteryBucket, int> battery{{BatteryBucket::high, 80}, {BatteryBucket::mid, 45}, {BatteryBucket::low, 15}};
  int pretrain_days = 7;
  SimClock start{7, 10 * 60};  // a weekday morning after the pre-training week
};

// Tasks x battery buckets x profiles, in that nesting order. Instance seeds
// are derived from (grid seed, instance id) and are pairwise distinct.
inline std::vector<BenchInstance> build_bench_grid(const std::vector<UserProfile>& profiles,
                                                   const ScenarioPack& pack, const GridSpec& spec = {}) {
  std::vector<BenchInstance> grid;
  for (const auto& t : pack.tasks)
    for (auto b : {BatteryBucket::high, BatteryBucket::mid, BatteryBucket::low})
      for (const auto& p : profiles) {
        BenchInstance i;
        i.id = static_cast<int>(grid.size());
        i.task = t.id;
        i.category = t.category;
        i.profile = p.name;
        i.bucket = b;
        i.battery = spec.battery.at(b);
        i.seed = mix_seed(spec.seed, static_cast<std::uint64_t>(i.id));
        grid.push_back(i);
      }
  return grid;
}

// ---------------------------------------------------------------------------
// Baselines

enum class Baseline { stock, battery_saver, rule_based, single_agent, powerlens };

inline constexpr std::string_view to_string(Baseline b) {
  switch (b) {
    case Baseline::stock: return "stock";
    case Baseline::battery_saver: return "battery_saver";
    case Baseline::rule_based: return "rule_based";
    case Baseline::single_agent: return "single_agent";
    case Baseline::powerlens: return "powerlens";
  }
  return "?";
}
inline std::optional<Baseline> parse_baseline(std::string_view s) {
  for (auto b : {Baseline::stock, Baseline::battery_saver, Baseline::rule_based, Baseline::single_agent,
                 Baseline::powerlens})
    if (to_string(b) == s) return b;
  return std::nullopt;
}

inline constexpr Value kBatterySaverBrightnessCap = 1024;

// Blanket low-power pack: brightness cap, 60 Hz, sync off, background limit 2.
inline Policy battery_saver_policy(const DeviceState& s) {
  Policy p;
  if (s.at(param::brightness) > kBatterySaverBrightnessCap)
    p.put(Action::set(param::brightness, kBatterySaverBrightnessCap, "battery saver cap", Priority::high));
  p.put(Action::set(param::refresh_rate, 60, "battery saver", Priority::high));
  p.put(Action::disable(param::auto_sync, "battery saver"));
  p.put(Action::set(param::bg_process_limit, 2, "battery saver", Priority::low));
  return p;
}

// Static per-category table (the heuristic table at its middle setting),
// plus a brightness cap of 512 whenever the battery is below 10%.
inline Policy rule_based_policy(AppCategory cat, const DeviceState& s, TriggerKind trigger) {
  Policy p = trigger == TriggerKind::app_switch ? heuristic_policy(cat, BatteryBucket::mid) : Policy{};
  if (s.battery_pct < 10) {
    const Action* b = p.find(param::brightness);
    const Value cur = b && b->value ? *b->value : s.at(param::brightness);
    if (cur > 512) p.put(Action::set(param::brightness, 512, "critical battery", Priority::high));
  }
  return p;
}

// A bench configuration: a baseline plus pipeline toggles. Toggles apply to
// the pipeline baselines only.
struct BenchConfig {
  Baseline baseline = Baseline::powerlens;
  SimToggles toggles;

  std::string name() const {
    std::string n(to_string(baseline));
    if (baseline == Baseline::powerlens) {
      if (!toggles.memory) n += "_no_memory";
      if (!toggles.pdl) n += "_no_pdl";
      if (!toggles.feedback) n += "_no_feedback";
      if (!toggles.multi_agent) n += "_no_multi_agent";
    }
    if (toggles.adversarial && uses_pipeline()) n += "+adversarial";
    return n;
  }
  bool uses_pipeline() const { return baseline == Baseline::single_agent || baseline == Baseline::powerlens; }
  PipelineConfig pipeline_config() const {
    PipelineConfig c;
    if (baseline == Baseline::single_agent) {
      c.memory = c.pdl = c.feedback = c.multi_agent = false;
    } else {
      c.memory = toggles.memory;
      c.pdl = toggles.pdl;
      c.feedback = toggles.feedback;
      c.multi_agent = toggles.multi_agent;
    }
    return c;
  }
};

// ---------------------------------------------------------------------------
// Running

struct BenchWorld {
  CapabilityProfile caps;
  ConstraintSet constraints;
  EnergyModel model;
  std::vector<UserProfile> profiles;
  ScenarioPack pack;
  GridSpec spec;

  const UserProfile& profile(const std::string& name) const {
    for (const auto& p : profiles)
      if (p.name == name) return p;
    throw ConfigError("unknown profile " + name);
  }
};

inline BenchWorld default_bench_world() {
  BenchWorld w;
  w.caps = default_capability_profile();
  w.constraints = default_constraint_pack();
  w.model = default_energy_model();
  w.profiles = default_profiles(w.caps);
  w.pack = default_scenario_pack();
  return w;
}

struct InstanceResult {
  BenchInstance instance;
  std::string config;
  double energy = 0.0;
  double stock_energy = 0.0;
  double es = 0.0;
  double acc = 0.0;
  double ues = 0.0;
  ViolationCount pre;
  ViolationCount post;
  int overrides = 0;
  int cycles = 0;
};

// Pre-training schedule: every task at every grid battery level, once a day,
// at the grid's start minute.
inline ScenarioPack pretraining_pack(const ScenarioPack& pack, const GridSpec& spec) {
  ScenarioPack p;
  p.tasks = pack.tasks;
  for (const auto& t : pack.tasks)
    for (auto b : {BatteryBucket::high, BatteryBucket::mid, BatteryBucket::low})
      p.schedule.push_back({spec.start.minute, t.id, spec.battery.at(b)});
  return p;
}

// LPM pages learned by the configured pipeline over the pre-training week.
inline std::map<std::string, LpmPage> pretrain(const BenchWorld& w, const UserProfile& profile,
                                               const BenchConfig& cfg) {
  SimRun run;
  run.seed = mix_seed(w.spec.seed, fnv1a(profile.name));
  run.days = w.spec.pretrain_days;
  run.profile = profile;
  run.scenarios = pretraining_pack(w.pack, w.spec);
  const PipelineConfig pc = cfg.pipeline_config();
  run.toggles = cfg.toggles;
  run.toggles.memory = pc.memory;
  run.toggles.pdl = pc.pdl;
  run.toggles.feedback = pc.feedback;
  run.toggles.multi_agent = pc.multi_agent;
  return run_days(w.caps, w.constraints, w.model, run).pages;
}

struct InstanceRun {
  SessionTrace session;
  std::vector<DecisionAudit> audits;
};

inline InstanceRun run_instance(const BenchWorld& w, const BenchInstance& inst, const BenchConfig& cfg,
                                const std::map<std::string, LpmPage>* pages) {
  const UserProfile& profile = w.profile(inst.profile);
  const TaskScenario& task = w.pack.task(inst.task);
  World world;
  world.state = default_state(w.caps, inst.battery, task.app, w.spec.start);
  world.set_battery(inst.battery);
  Rng rng(inst.seed);
  SessionOptions opt;
  opt.fixed_bucket = inst.bucket;

  HeuristicBackend heuristic(w.pack.registry());
  AdversarialBackend adversarial(heuristic, cfg.toggles.adversarial_rate, mix_seed(inst.seed, 0xAD));
  ReasonerBackend& backend = cfg.toggles.adversarial ? static_cast<ReasonerBackend&>(adversarial)
                                                     : static_cast<ReasonerBackend&>(heuristic);
  std::unique_ptr<Pipeline> pipeline;
  std::unique_ptr<Controller> controller;
  switch (cfg.baseline) {
    case Baseline::stock: controller = std::make_unique<StockController>(w.caps); break;
    case Baseline::battery_saver:
      controller = std::make_unique<StaticController>(
          w.caps, [](AppCategory, const DeviceState& s, TriggerKind t) {
            return t == TriggerKind::app_switch ? battery_saver_policy(s) : Policy{};
          });
      break;
    case Baseline::rule_based: controller = std::make_unique<StaticController>(w.caps, rule_based_policy); break;
    case Baseline::single_agent:
    case Baseline::powerlens: {
      pipeline = std::make_unique<Pipeline>(w.caps, w.constraints, backend, cfg.pipeline_config());
      if (pages && pipeline->config().memory) pipeline->pages() = *pages;
      controller = std::make_unique<PipelineController>(*pipeline);
      break;
    }
  }
  InstanceRun r;
  r.session = simulate_session(w.caps, w.model, profile, task, *controller, world, rng, opt);
  for (const auto& c : r.session.cycles)
    r.audits.push_back({c.outcome.ctx, c.pre, c.outcome.evaluated, c.outcome.executed});
  return r;
}

inline InstanceResult score_instance(const BenchWorld& w, const BenchInstance& inst, const BenchConfig& cfg,
                                     const InstanceRun& run, double stock_energy, const Weights& acc_w) {
  const UserProfile& profile = w.profile(inst.profile);
  const auto& gt = profile.gt_for(inst.category, inst.bucket);
  const Weights uw = ues_weights(w.caps, profile);
  const ToleranceFn tol = [&profile](const ParamId& id) { return profile.tol(id); };
  InstanceResult r;
  r.instance = inst;
  r.config = cfg.name();
  r.energy = run.session.energy;
  r.stock_energy = stock_energy;
  r.es = energy_saving(r.energy, stock_energy);
  for (const auto& c : run.session.cycles) {
    r.acc += action_accuracy(w.caps, c.outcome.post.values, gt, acc_w, tol);
    r.ues += ues(w.caps, c.outcome.post.values, gt, uw, tol);
  }
  r.cycles = static_cast<int>(run.session.cycles.size());
  if (r.cycles > 0) {
    r.acc /= r.cycles;
    r.ues /= r.cycles;
  }
  const ConstraintSet hard = hard_only(w.constraints);
  r.pre = violation_count(w.caps, hard, run.audits, ViolationStage::pre);
  r.post = violation_count(w.caps, hard, run.audits, ViolationStage::post);
  r.overrides = run.session.overrides;
  return r;
}

struct Aggregate {
  int n = 0;
  double acc = 0.0;
  double es = 0.0;
  double ues = 0.0;
  ViolationCount pre;
  ViolationCount post;
};

struct BenchReport {
  std::string config;
  std::vector<InstanceResult> instances;
  Aggregate overall;
  std::map<BatteryBucket, Aggregate> by_bucket;
  std::map<AppCategory, Aggregate> by_category;
};

inline Aggregate aggregate(const std::vector<const InstanceResult*>& rs) {
  Aggregate a;
  for (const auto* r : rs) {
    ++a.n;
    a.acc += r->acc;
    a.es += r->es;
    a.ues += r->ues;
    a.pre += r->pre;
    a.post += r->post;
  }
  if (a.n > 0) {
    a.acc /= a.n;
    a.es /= a.n;
    a.ues /= a.n;
  }
  return a;
}

inline BenchReport summarize(std::string config, std::vector<InstanceResult> results) {
  BenchReport rep;
  rep.config = std::move(config);
  rep.instances = std::move(results);
  std::vector<const InstanceResult*> all;
  std::map<BatteryBucket, std::vector<const InstanceResult*>> bb;
  std::map<AppCategory, std::vector<const InstanceResult*>> bc;
  for (const auto& r : rep.instances) {
    all.push_back(&r);
    bb[r.instance.bucket].push_back(&r);
    bc[r.instance.category].push_back(&r);
  }
  rep.overall = aggregate(all);
  for (const auto& [b, v] : bb) rep.by_bucket[b] = aggregate(v);
  for (const auto& [c, v] : bc) rep.by_category[c] = aggregate(v);
  return rep;
}

// Runs every grid instance under `cfg`. Stock energies are computed per
// instance with the same seed; pre-training runs once per profile.
inline BenchReport run_bench(const BenchWorld& w, const std::vector<BenchInstance>& grid, const BenchConfig& cfg) {
  const Weights acc_w = compute_acc_weights(w.caps, w.profiles);
  const BenchConfig stock{Baseline::stock, {}};
  std::map<std::string, std::map<std::string, LpmPage>> pages;
  if (cfg.uses_pipeline() && cfg.pipeline_config().memory)
    for (const auto& p : w.profiles) pages[p.name] = pretrain(w, p, cfg);
  std::vector<InstanceResult> results;
  for (const auto& inst : grid) {
    const double e_stock = run_instance(w, inst, stock, nullptr).session.energy;
    auto it = pages.find(inst.profile);
    InstanceRun run = run_instance(w, inst, cfg, it == pages.end() ? nullptr : &it->second);
    results.push_back(score_instance(w, inst, cfg, run, e_stock, acc_w));
  }
  return summarize(cfg.name(), std::move(results));
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string fmt(double v, int prec = 6) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(prec);
  o << v;
  return o.str();
}

inline std::string aggregate_row(const std::string& config, const std::string& scope, const std::string& key,
                                 const Aggregate& a) {
  return config + "," + scope + "," + key + "," + std::to_string(a.n) + "," + fmt(a.acc) + "," + fmt(a.es) + "," +
         fmt(a.pre.rate()) + "," + fmt(a.post.rate()) + "," + std::to_string(a.post.total) + "," + fmt(a.ues) + "\n";
}

}  // namespace detail

inline constexpr const char* kInstanceCsvHeader =
    "config,instance,task,category,profile,bucket,battery,seed,cycles,energy,stock_energy,es,acc,ues,"
    "viol_pre,actions_pre,viol_post,actions_post,overrides\n";

inline constexpr const char* kSummaryCsvHeader = "config,scope,key,n,acc,es,viol_pre,viol_post,actions,ues\n";

inline std::string instances_csv(const BenchReport& rep) {
  std::string s = kInstanceCsvHeader;
  for (const auto& r : rep.instances) {
    const auto& i = r.instance;
    s += r.config + "," + std::to_string(i.id) + "," + i.task + "," + std::string(to_string(i.category)) + "," +
         i.profile + "," + std::string(to_string(i.bucket)) + "," + std::to_string(i.battery) + "," +
         std::to_string(i.seed) + "," + std::to_string(r.cycles) + "," + detail::fmt(r.energy) + "," +
         detail::fmt(r.stock_energy) + "," + detail::fmt(r.es) + "," + detail::fmt(r.acc) + "," +
         detail::fmt(r.ues) + "," + std::to_string(r.pre.violating) + "," + std::to_string(r.pre.total) + "," +
         std::to_string(r.post.violating) + "," + std::to_string(r.post.total) + "," +
         std::to_string(r.overrides) + "\n";
  }
  return s;
}

// Overall row, then one row per battery bucket, then one per category.
inline std::string summary_csv(const std::vector<BenchReport>& reps) {
  std::string s = kSummaryCsvHeader;
  for (const auto& rep : reps) {
    s += detail::aggregate_row(rep.config, "all", "all", rep.overall);
    for (const auto& [b, a] : rep.by_bucket) s += detail::aggregate_row(rep.config, "bucket", std::string(to_string(b)), a);
    for (const auto& [c, a] : rep.by_category)
      s += detail::aggregate_row(rep.config, "category", std::string(to_string(c)), a);
  }
  return s;
}

}  // namespace powerlens

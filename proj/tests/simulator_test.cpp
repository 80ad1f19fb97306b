#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "powerlens/bench.hpp"
#include "powerlens/sim_presets.hpp"
#include "powerlens/simulator.hpp"

namespace powerlens {
namespace {

const CapabilityProfile& caps() {
  static const CapabilityProfile p = default_capability_profile();
  return p;
}
const EnergyModel& model() {
  static const EnergyModel m = default_energy_model();
  return m;
}

// Independent per-minute oracle written out from the shipped model's
// documented loads: impact weights H=3, M=2, L=1 within each category.
double oracle_rate(const DeviceState& s) {
  auto v = [&](const char* id) { return static_cast<double>(s.at(id)); };
  const std::map<Value, double> timeout{{15, .6}, {30, .7}, {60, .8}, {120, .9}, {300, 1.0}, {600, 1.1}, {1800, 1.3}};
  const std::map<Value, double> location{{0, 0}, {1, .4}, {2, .6}, {3, 1}};
  const std::map<Value, double> governor{{0, .6}, {1, 1.0}, {2, 1.4}};
  const std::map<Value, double> bg{{-1, 1}, {0, .3}, {1, .45}, {2, .6}, {3, .75}, {4, .9}};
  int cores = 0;
  for (int b = 0; b < 8; ++b) cores += (s.at("cpu_cores_online") >> b) & 1;
  const double display = 42.0 / 10 *
                         (3 * v("brightness") / 4096 + 3 * v("refresh_rate") / 120 +
                          2 * timeout.at(s.at("screen_timeout")) + 1 * (s.at("dark_mode") ? 0.4 : 1.0) +
                          1 * v("auto_rotation"));
  const double conn = 25.0 / 9 *
                      (2 * v("wifi") + 1 * v("bluetooth") + 1 * v("nfc") + 2 * v("mobile_data") +
                       3 * location.at(s.at("location_mode")));
  const double compute = 20.0 / 8 *
                         (3 * governor.at(s.at("cpu_governor")) + 3 * cores / 8.0 +
                          2 * bg.at(s.at("bg_process_limit")));
  const double audio = 5.0 / 4 *
                       (v("media_volume") / 160 + v("notification_volume") / 16 + v("ring_volume") / 16 +
                        v("alarm_volume") / 16);
  const double sync = 8.0 * v("auto_sync");
  return display + conn + compute + audio + sync;
}

DeviceState stock(int battery = 80) { return default_state(caps(), battery, "com.books", {0, 600}); }

TEST(Energy, DefaultStateMatchesHandComputation) {
  // 33.18 display + 25 connectivity + 20 compute + 2.5 audio + 8 sync.
  EXPECT_NEAR(energy(caps(), model(), stock(), 1.0), 88.68, 1e-9);
  EXPECT_NEAR(energy(caps(), model(), stock(), 30.0), 30 * 88.68, 1e-9);
}

TEST(Energy, MatchesOracleOnRandomStates) {
  std::mt19937_64 g(5);
  for (int i = 0; i < 500; ++i) {
    DeviceState s = stock();
    for (const auto& spec : caps().parameters) {
      const auto vs = spec.domain_values();
      s.values[spec.id] = vs[g() % vs.size()];
    }
    EXPECT_NEAR(energy(caps(), model(), s, 1.0), oracle_rate(s), 1e-9);
  }
}

TEST(Energy, BrighterScreenCostsMore) {
  DeviceState a = stock(), b = stock();
  a.values[param::brightness] = 4096;
  b.values[param::brightness] = 2048;
  EXPECT_GT(energy(caps(), model(), a, 10), energy(caps(), model(), b, 10));
}

TEST(Energy, RadiosOffSavesAtMostTheConnectivityBudget) {
  DeviceState on = stock(), off = stock();
  for (const char* id : {"wifi", "bluetooth", "nfc", "mobile_data"}) off.values[id] = 0;
  off.values[param::location_mode] = 0;
  const double gap = energy(caps(), model(), on, 1) - energy(caps(), model(), off, 1);
  EXPECT_GT(gap, 0.0);
  EXPECT_LE(gap, 25.0 + 1e-9);
  EXPECT_NEAR(gap, oracle_rate(on) - oracle_rate(off), 1e-9);
}

TEST(Energy, ZeroMinutesIsZero) { EXPECT_EQ(energy(caps(), model(), stock(), 0), 0.0); }

// Costly direction: larger value, except dark mode where 0 costs more and
// the background limit where -1 (unlimited) costs most.
TEST(Energy, MonotoneInTheCostlyDirection) {
  std::mt19937_64 g(9);
  for (int i = 0; i < 300; ++i) {
    DeviceState s = stock();
    for (const auto& spec : caps().parameters) {
      const auto vs = spec.domain_values();
      s.values[spec.id] = vs[g() % vs.size()];
    }
    for (const auto& spec : caps().parameters) {
      const auto vs = spec.domain_values();
      for (std::size_t k = 0; k + 1 < vs.size(); k += std::max<std::size_t>(1, vs.size() / 16)) {
        DeviceState lo = s, hi = s;
        Value a = vs[k], b = vs[k + 1];
        if (spec.kind == ValueKind::bitmask) {
          a = s.at(spec.id) & ~(1 << (g() % 8));
          b = s.at(spec.id);
        }
        if (spec.id == param::dark_mode || (spec.id == param::bg_process_limit && a == -1)) std::swap(a, b);
        lo.values[spec.id] = a;
        hi.values[spec.id] = b;
        EXPECT_LE(energy(caps(), model(), lo, 1), energy(caps(), model(), hi, 1) + 1e-12) << spec.id;
      }
    }
  }
}

TEST(Energy, ShippedModelLoadsAndRoundTrips) {
  const EnergyModel m = load_energy_model(to_json(model()), caps());
  EXPECT_EQ(to_json(m), to_json(model()));
  Json bad = to_json(model());
  bad["budgets"]["sync"] = 9;
  EXPECT_THROW(load_energy_model(bad, caps()), SchemaError);
}

// ---------------------------------------------------------------------------
// User response

UserProfile one_param_profile(double p) {
  UserProfile u = default_profiles(caps())[1];
  for (auto& [id, q] : u.override_prob) q = 0.0;
  u.override_prob[param::brightness] = p;
  return u;
}

TEST(UserResponse, OutOfBandOverridesWithTheProfileProbability) {
  const UserProfile u = one_param_profile(0.79);
  auto gt = u.gt_for(AppCategory::reading, BatteryBucket::high);
  gt[param::brightness] = 1200;
  DeviceState s = stock();
  for (const auto& [id, v] : gt) s.values[id] = v;
  s.values[param::brightness] = 150;
  Rng rng(1);
  int hits = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    auto o = simulate_user_response(caps(), u, s, gt, rng);
    if (!o.empty()) {
      ++hits;
      ASSERT_EQ(o.size(), 1u);
      EXPECT_EQ(o[0].new_value, 1200);
    }
  }
  EXPECT_NEAR(static_cast<double>(hits) / n, 0.79, 0.01);
}

TEST(UserResponse, WithinToleranceNeverOverrides) {
  const UserProfile u = one_param_profile(1.0);
  auto gt = u.gt_for(AppCategory::reading, BatteryBucket::high);
  gt[param::brightness] = 1200;
  DeviceState s = stock();
  for (const auto& [id, v] : gt) s.values[id] = v;
  Rng rng(2);
  for (Value b : {1080, 1100, 1200, 1319, 1320}) {
    s.values[param::brightness] = b;
    EXPECT_TRUE(simulate_user_response(caps(), u, s, gt, rng).empty()) << b;
  }
  s.values[param::brightness] = 1321;
  EXPECT_EQ(simulate_user_response(caps(), u, s, gt, rng).size(), 1u);
}

TEST(UserResponse, ZeroProbabilityNeverOverrides) {
  const UserProfile u = one_param_profile(0.0);
  const auto& gt = u.gt_for(AppCategory::reading, BatteryBucket::high);
  DeviceState s = stock();
  s.values[param::brightness] = 4096;
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) EXPECT_TRUE(simulate_user_response(caps(), u, s, gt, rng).empty());
}

// ---------------------------------------------------------------------------
// Presets

TEST(Presets, ProfilesAreValidAndRespectTheConstraintPack) {
  const auto profiles = default_profiles(caps());
  ASSERT_EQ(profiles.size(), 5u);
  const std::vector<std::string> names{"Power User", "Student", "Commuter", "Professional", "Traveler"};
  const ConstraintSet pack = default_constraint_pack();
  const std::map<BatteryBucket, int> battery{{BatteryBucket::high, 80}, {BatteryBucket::mid, 45}, {BatteryBucket::low, 15}};
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    EXPECT_EQ(profiles[i].name, names[i]);
    EXPECT_EQ(check_profile(caps(), profiles[i]), "");
    EXPECT_EQ(profiles[i].gt.size(), 21u);
    EXPECT_DOUBLE_EQ(profiles[i].prob(param::brightness), 0.79);
    EXPECT_DOUBLE_EQ(profiles[i].prob(param::media_volume), i == 1 ? 0.9 : 0.86);
    for (const auto& [cell, vec] : profiles[i].gt) {
      DeviceState s = stock(battery.at(cell.bucket));
      s.values = vec;
      EXPECT_TRUE(predicate_failures(pack, {cell.category, cell.category, s.battery_pct}, s).empty())
          << names[i] << " " << cell_key(cell);
    }
    const UserProfile back = load_user_profile(to_json(profiles[i]), caps());
    EXPECT_EQ(to_json(back), to_json(profiles[i]));
  }
}

TEST(Presets, ScenarioPackCoversSevenCategoriesTwice) {
  const ScenarioPack pack = default_scenario_pack();
  ASSERT_EQ(pack.tasks.size(), 14u);
  std::map<AppCategory, int> per;
  for (const auto& t : pack.tasks) ++per[t.category];
  EXPECT_EQ(per.size(), 7u);
  for (const auto& [c, n] : per) EXPECT_EQ(n, 2);
  EXPECT_EQ(pack.schedule.size(), 14u);
  EXPECT_EQ(to_json(load_scenario_pack(to_json(pack))), to_json(pack));
}

// ---------------------------------------------------------------------------
// Sessions

SessionTrace run_task(const std::string& task_id, int battery, Controller& ctl, const UserProfile& u,
                      bool user = false, std::uint64_t seed = 1) {
  const ScenarioPack pack = default_scenario_pack();
  const TaskScenario& task = pack.task(task_id);
  World w;
  w.state = default_state(caps(), battery, task.app, {0, 600});
  w.set_battery(battery);
  Rng rng(seed);
  SessionOptions opt;
  opt.user_enabled = user;
  return simulate_session(caps(), model(), u, task, ctl, w, rng, opt);
}

TEST(Session, CyclesFollowTheTriggerTable) {
  StockController ctl(caps());
  const SessionTrace t = run_task("reading_book", 80, ctl, default_profiles(caps())[0]);
  ASSERT_EQ(t.cycles.size(), 6u);
  EXPECT_EQ(t.cycles[0].trigger, TriggerKind::app_switch);
  for (std::size_t k = 1; k < t.cycles.size(); ++k) {
    EXPECT_EQ(t.cycles[k].trigger, TriggerKind::timer);
    EXPECT_EQ(t.cycles[k].minute - t.cycles[k - 1].minute, 5);
  }
}

TEST(Session, ReadingWithSystemOnUsesLessEnergyThanStock) {
  const UserProfile u = default_profiles(caps())[1];
  StockController off(caps());
  HeuristicBackend backend(default_scenario_pack().registry());
  Pipeline pl(caps(), default_constraint_pack(), backend);
  PipelineController on(pl);
  const SessionTrace a = run_task("reading_book", 80, off, u);
  const SessionTrace b = run_task("reading_book", 80, on, u);
  // Oracle: stock state for 30 minutes; system state from the first cycle on.
  EXPECT_NEAR(a.energy, 30 * oracle_rate(stock()), 1e-6);
  DeviceState sys = b.cycles[0].outcome.post;
  EXPECT_NEAR(b.energy, 30 * oracle_rate(sys), 1e-6);
  EXPECT_LT(b.energy, a.energy);
}

TEST(Session, NavigationNeverLowersLocation) {
  HeuristicBackend honest(default_scenario_pack().registry());
  AdversarialBackend adv(honest, 0.5, 4);
  for (ReasonerBackend* backend : {static_cast<ReasonerBackend*>(&honest), static_cast<ReasonerBackend*>(&adv)})
    for (const auto& u : default_profiles(caps()))
      for (int battery : {80, 45, 15})
        for (const char* task : {"nav_drive", "nav_transit"}) {
          Pipeline pl(caps(), default_constraint_pack(), *backend);
          PipelineController ctl(pl);
          const SessionTrace t = run_task(task, battery, ctl, u, true, battery);
          for (const auto& c : t.cycles) {
            EXPECT_EQ(c.outcome.post.at(param::location_mode), 3);
            for (const auto& a : c.outcome.executed) {
              auto v = written_value(caps().at(a.target), a);
              if (a.target == param::location_mode && v) EXPECT_GE(*v, 3);
            }
          }
        }
}

TEST(Session, MusicBackgroundLowBatteryDrivesDisplayToTableMinimum) {
  // Table walk: the lowest value each display parameter takes in any cell.
  std::map<ParamId, Value> lowest;
  for (AppCategory c : kBenchCategories)
    for (auto b : {BatteryBucket::high, BatteryBucket::mid, BatteryBucket::low})
      for (const auto& a : heuristic_policy(c, b)) {
        if (caps().at(a.target).category != Category::display) continue;
        auto v = written_value(caps().at(a.target), a);
        if (!v) continue;
        Value cost = a.target == param::dark_mode ? -*v : *v;
        if (!lowest.count(a.target) || cost < lowest[a.target]) lowest[a.target] = cost;
      }
  HeuristicBackend backend(default_scenario_pack().registry());
  Pipeline pl(caps(), default_constraint_pack(), backend);
  PipelineController ctl(pl);
  const auto profiles = default_profiles(caps());
  const SessionTrace t = run_task("music_podcast", 15, ctl, profiles[0]);
  const DeviceState& post = t.cycles.back().outcome.post;
  EXPECT_EQ(t.cycles.back().outcome.ctx.activity_type, AppCategory::music);
  EXPECT_EQ(post.at(param::brightness), lowest[param::brightness]);
  EXPECT_EQ(post.at(param::refresh_rate), lowest[param::refresh_rate]);
  EXPECT_EQ(post.at(param::screen_timeout), lowest[param::screen_timeout]);
  EXPECT_EQ(post.at(param::dark_mode), 1);
  // Never above any profile's preference for this cell.
  for (const auto& u : profiles) {
    const auto& gt = u.gt_for(AppCategory::music, BatteryBucket::low);
    for (const char* id : {"brightness", "refresh_rate", "screen_timeout"}) EXPECT_LE(post.at(id), gt.at(id));
  }
}

// ---------------------------------------------------------------------------
// Longitudinal runs

UserProfile silent_profile() {
  UserProfile u = default_profiles(caps())[1];
  for (auto& [id, q] : u.override_prob) q = 0.0;
  return u;
}

ScenarioPack single_task_pack(const std::string& task, int minute = 21 * 60) {
  ScenarioPack all = default_scenario_pack();
  ScenarioPack p;
  p.tasks = all.tasks;
  p.schedule = {{minute, task, std::nullopt}};
  return p;
}

// A profile that only cares about brightness in reading, with the given GT.
UserProfile brightness_only(Value gt_bright, double prob = 1.0) {
  UserProfile u = silent_profile();
  u.override_prob[param::brightness] = prob;
  for (auto& [cell, vec] : u.gt) vec[param::brightness] = gt_bright;
  return u;
}

TEST(RunDays, ConsistentDailyOverridePromotesOnDayThree) {
  SimRun run;
  run.days = 5;
  run.profile = brightness_only(1800);
  run.scenarios = single_task_pack("reading_book");
  const LongitudinalTrace tr = run_days(caps(), default_constraint_pack(), model(), run);
  ASSERT_EQ(tr.days.size(), 5u);
  EXPECT_EQ(tr.days[0].rule_count, 0);
  EXPECT_EQ(tr.days[1].rule_count, 0);
  EXPECT_EQ(tr.days[2].rule_count, 1);
  const LpmPage& page = tr.pages.at("com.books");
  ASSERT_EQ(page.rules().size(), 1u);
  EXPECT_EQ(page.rules()[0].fragment[0], (Preference{param::brightness, PrefCmp::at_least, 1800}));
  // Confidence series of the candidate: 0.5, 0.665 before promotion.
  bool seen = false;
  for (const auto& [key, series] : tr.confidence)
    if (key.find("cand:") != std::string::npos && key.find("brightness") != std::string::npos) {
      EXPECT_NEAR(series[0], 0.5, 1e-9);
      EXPECT_NEAR(series[1], 0.5 * 0.93 + 0.2, 1e-9);
      seen = true;
    }
  EXPECT_TRUE(seen);
  // Once the rule exists the user no longer needs to intervene.
  EXPECT_EQ(tr.days[3].overrides, 0);
}

TEST(RunDays, PreferenceShiftReplacesTheStaleRule) {
  SimRun run;
  run.days = 14;
  run.profile = brightness_only(1800);
  run.profile.shifts.push_back({5, AppCategory::reading, std::nullopt, {{param::brightness, 600}}});
  run.scenarios = single_task_pack("reading_book");
  const LongitudinalTrace tr = run_days(caps(), default_constraint_pack(), model(), run);
  bool replaced = false;
  for (const auto& r : tr.replacements)
    if (r.day > 5 && r.old_pref.value == 1800 && r.new_pref.value == 600) replaced = true;
  EXPECT_TRUE(replaced);
  for (const auto& r : tr.pages.at("com.books").rules())
    for (const auto& p : r.fragment)
      if (p.target == param::brightness) EXPECT_NE(p.value, 1800) << r.key();
}

TEST(RunDays, NoUserMeansNoStrongEventsAndNoCandidates) {
  SimRun run;
  run.days = 14;
  run.profile = silent_profile();
  run.scenarios = default_scenario_pack();
  const LongitudinalTrace tr = run_days(caps(), default_constraint_pack(), model(), run);
  EXPECT_EQ(tr.strong_events, 0);
  EXPECT_GT(tr.weak_events, 0);
  for (const auto& [app, page] : tr.pages) {
    EXPECT_TRUE(page.candidates.empty()) << app;
    EXPECT_TRUE(page.rules().empty()) << app;
    EXPECT_FALSE(page.general.empty()) << app;
  }
  EXPECT_EQ(tr.post_violations, 0);
}

TEST(RunDays, RevertRateDeclinesWithMemory) {
  SimRun run;
  run.days = 14;
  run.profile = default_profiles(caps())[1];
  run.scenarios = default_scenario_pack();
  const LongitudinalTrace tr = run_days(caps(), default_constraint_pack(), model(), run);
  EXPECT_GT(tr.days.front().revert_rate(), 0.0);
  EXPECT_LT(tr.days.back().revert_rate(), tr.days.front().revert_rate());
}

TEST(RunDays, IdenticalRunsProduceIdenticalCsv) {
  SimRun run;
  run.days = 4;
  run.seed = 42;
  run.profile = default_profiles(caps())[2];
  run.scenarios = default_scenario_pack();
  const auto a = run_days(caps(), default_constraint_pack(), model(), run);
  const auto b = run_days(caps(), default_constraint_pack(), model(), run);
  EXPECT_EQ(days_csv(a), days_csv(b));
  EXPECT_EQ(cycles_csv(a), cycles_csv(b));
  EXPECT_EQ(confidence_csv(a), confidence_csv(b));
  run.seed = 43;
  const auto c = run_days(caps(), default_constraint_pack(), model(), run);
  EXPECT_NE(cycles_csv(a), cycles_csv(c));
}

// ---------------------------------------------------------------------------
// Grid

TEST(Grid, ShippedGridHas210InstancesWithDistinctSeeds) {
  const auto profiles = default_profiles(caps());
  const auto grid = build_bench_grid(profiles, default_scenario_pack());
  EXPECT_EQ(grid.size(), 7u * 2 * 3 * 5);
  std::set<std::uint64_t> seeds;
  std::map<BatteryBucket, std::set<int>> battery;
  for (const auto& i : grid) {
    seeds.insert(i.seed);
    battery[i.bucket].insert(i.battery);
  }
  EXPECT_EQ(seeds.size(), grid.size());
  EXPECT_EQ(battery[BatteryBucket::high], std::set<int>{80});
  EXPECT_EQ(battery[BatteryBucket::mid], std::set<int>{45});
  EXPECT_EQ(battery[BatteryBucket::low], std::set<int>{15});
}

}  // namespace
}  // namespace powerlens

#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "powerlens/memory.hpp"
#include "powerlens/presets.hpp"

namespace powerlens {
namespace {

const CapabilityProfile& caps() {
  static const CapabilityProfile p = default_capability_profile();
  return p;
}

ContextSignature sig(AppCategory c, const char* sub, BatteryBucket b, DayClass d, TimeSlot t) {
  return {c, std::string(sub), b, d, t};
}

const ContextSignature kVideoEvening =
    sig(AppCategory::video, "watching", BatteryBucket::mid, DayClass::weekday, TimeSlot::evening);

FeedbackEvent strong_event(int day, const ContextSignature& s, Value old_v, Value new_v,
                           const ParamId& p = param::brightness, int session = -1) {
  return {{day, 20 * 60}, p, old_v, new_v, Strength::strong, s, "tube", session < 0 ? day : session};
}

double oracle_pow(double base, int n) {
  double r = 1.0;
  for (int i = 0; i < n; ++i) r *= base;
  return r;
}

TEST(Signature, BucketBoundaries) {
  EXPECT_EQ(bucket_of(61), BatteryBucket::high);
  EXPECT_EQ(bucket_of(60), BatteryBucket::mid);
  EXPECT_EQ(bucket_of(30), BatteryBucket::mid);
  EXPECT_EQ(bucket_of(29), BatteryBucket::low);
  EXPECT_EQ(slot_of(6 * 60), TimeSlot::morning);
  EXPECT_EQ(slot_of(12 * 60), TimeSlot::afternoon);
  EXPECT_EQ(slot_of(18 * 60), TimeSlot::evening);
  EXPECT_EQ(slot_of(23 * 60), TimeSlot::night);
  EXPECT_EQ(slot_of(5 * 60 + 59), TimeSlot::night);
  EXPECT_EQ(day_class_of(0), DayClass::weekday);
  EXPECT_EQ(day_class_of(5), DayClass::weekend);
  EXPECT_EQ(day_class_of(13), DayClass::weekend);
  EXPECT_TRUE(make_signature(AppCategory::music, "listening", 50, {1, 600}).complete());
}

TEST(StateDiff, UnattributedChangeIsOverride) {
  auto prev = default_state(caps(), 50, "x", {});
  prev.values[param::brightness] = 400;
  auto cur = prev;
  cur.values[param::brightness] = 1200;
  auto d = state_diff(prev, cur, {});
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0], (Override{param::brightness, 400, 1200}));
}

TEST(StateDiff, IdenticalAndAttributed) {
  auto prev = default_state(caps(), 50, "x", {});
  EXPECT_TRUE(state_diff(prev, prev, {}).empty());
  auto cur = prev;
  cur.values[param::refresh_rate] = 60;
  EXPECT_TRUE(state_diff(prev, cur, {param::refresh_rate}).empty());
}

TEST(StateDiff, ProfileMismatch) {
  auto prev = default_state(caps(), 50, "x", {});
  auto cur = prev;
  cur.values.erase(param::nfc);
  EXPECT_THROW(state_diff(prev, cur, {}), ProfileMismatchError);
}

TEST(StateDiff, FullyAttributedPolicyNeverSelfReports) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 500; ++i) {
    auto s = default_state(caps(), 50, "x", {});
    Policy p;
    std::set<ParamId> attributed;
    for (const auto& spec : caps().parameters) {
      if (rng() % 2) continue;
      auto dom = spec.domain_values();
      p.add(Action::set(spec.id, dom[rng() % dom.size()]));
      attributed.insert(spec.id);
    }
    EXPECT_TRUE(state_diff(s, apply_policy(caps(), s, p), attributed).empty());
  }
}

TEST(ShortTermMemory, OverrideLocksAndLogs) {
  ShortTermMemory stm;
  stm.begin_session("tube", {});
  stm.record_override({param::brightness, 400, 1200}, kVideoEvening, {});
  EXPECT_EQ(stm.locks().at(param::brightness), 1200);
  stm.record_override({param::brightness, 1200, 1500}, kVideoEvening, {});
  EXPECT_EQ(stm.locks().at(param::brightness), 1500);
  int strong = 0;
  for (const auto& e : stm.log())
    if (const auto* f = std::get_if<FeedbackEvent>(&e)) strong += f->strength == Strength::strong;
  EXPECT_EQ(strong, 2);
  stm.begin_session("maps", {});
  EXPECT_TRUE(stm.locks().empty());
}

TEST(ShortTermMemory, SessionCloseEmitsWeakEventsForUncontestedChanges) {
  ShortTermMemory stm;
  auto s = default_state(caps(), 50, "tube", {});
  stm.begin_session("tube", {});
  AutoRecord r;
  r.app = "tube";
  r.session = stm.session_id();
  r.signature = kVideoEvening;
  r.changes[param::refresh_rate] = {120, 60};
  r.changes[param::brightness] = {2048, 900};
  stm.record_execution(r, s);
  stm.record_override({param::brightness, 900, 2048}, kVideoEvening, {});
  stm.end_session({0, 60});
  std::vector<FeedbackEvent> weak;
  for (const auto& e : stm.log())
    if (const auto* f = std::get_if<FeedbackEvent>(&e))
      if (f->strength == Strength::weak) weak.push_back(*f);
  ASSERT_EQ(weak.size(), 1u);
  EXPECT_EQ(weak[0].param, param::refresh_rate);
  EXPECT_EQ(weak[0].new_value, 60);
  EXPECT_TRUE(std::holds_alternative<SessionEnd>(stm.log().back()));
}

ContextRule rule(const ContextSignature& s, Preference p, double c = 0.9) { return {s, {p}, c, 0}; }

TEST(Retrieve, RelaxesTimeForAfternoonListening) {
  LpmPage page;
  page.app = "music";
  page.put_rule(rule(sig(AppCategory::music, "listening", BatteryBucket::mid, DayClass::weekday,
                         TimeSlot::evening),
                     {param::media_volume, PrefCmp::at_least, 90}));
  auto r = page.retrieve(
      sig(AppCategory::music, "listening", BatteryBucket::mid, DayClass::weekday, TimeSlot::afternoon));
  EXPECT_EQ(r.level, RetrievalLevel::relax_time);
  ASSERT_EQ(r.rules.size(), 1u);
}

TEST(Retrieve, ExactHitAndEmptyPage) {
  LpmPage page;
  page.put_rule(rule(kVideoEvening, {param::brightness, PrefCmp::at_least, 200}));
  EXPECT_EQ(page.retrieve(kVideoEvening).level, RetrievalLevel::exact);
  LpmPage empty;
  auto r = empty.retrieve(kVideoEvening);
  EXPECT_EQ(r.level, RetrievalLevel::general);
  EXPECT_TRUE(r.rules.empty());
}

TEST(Retrieve, WildcardSlotMatchesAtExactLevel) {
  LpmPage page;
  auto s = kVideoEvening;
  s.slot.reset();
  page.put_rule(rule(s, {param::brightness, PrefCmp::at_least, 200}));
  EXPECT_EQ(page.retrieve(kVideoEvening).level, RetrievalLevel::exact);
}

TEST(Retrieve, ResolvePrefersMostSpecific) {
  auto wide = kVideoEvening;
  wide.slot.reset();
  auto prefs = resolve_preferences({rule(wide, {param::brightness, PrefCmp::at_least, 100}, 0.99),
                                    rule(kVideoEvening, {param::brightness, PrefCmp::at_least, 700}, 0.81)});
  EXPECT_EQ(prefs.at(param::brightness).first.value, 700);
}

TEST(UpdateConfidence, JourneyValues) {
  EXPECT_NEAR(update_confidence(0.5, 1, Reward::strong), 0.665, 1e-9);
  EXPECT_NEAR(update_confidence(0.665, 1, Reward::strong), 0.81845, 1e-9);
  EXPECT_NEAR(update_confidence(0.665, 1, Reward::strong), 0.818, 5e-4);
}

TEST(UpdateConfidence, DerivedValues) {
  EXPECT_NEAR(update_confidence(0.8, 7, Reward::none), 0.8 * oracle_pow(0.93, 7), 1e-12);
  // 0.93^7 = 0.6017009, so the value is 0.4813607 (not 0.47976).
  EXPECT_NEAR(update_confidence(0.8, 7, Reward::none), 0.4813607, 1e-7);
  EXPECT_NEAR(update_confidence(0.818, 1, Reward::conflict), 0.26074, 1e-9);
  EXPECT_EQ(update_confidence(0.3, 1, Reward::conflict), 0.0);
  EXPECT_EQ(update_confidence(0.95, 0, Reward::strong), 1.0);
}

TEST(UpdateConfidence, DecayFixedPoints) {
  double c = 0.5, d = 0.9;
  for (int day = 0; day < 60; ++day) {
    double next = update_confidence(d, 1, Reward::none);
    EXPECT_LE(next, d);
    d = next;
    c = update_confidence(c, 1, Reward::strong);
  }
  EXPECT_EQ(c, 1.0);  // r_s / (1 - 0.93) > 1, clamped
  EXPECT_LT(d, 0.9 * oracle_pow(0.93, 59));
}

LpmPage run_days(LpmPage page, const std::vector<std::vector<FeedbackEvent>>& days,
                 const DistillConfig& cfg = {}, std::vector<double>* series = nullptr) {
  HeuristicAnalyzer analyzer;
  for (int d = 0; d < static_cast<int>(days.size()); ++d) {
    EventLog log;
    for (const auto& e : days[d]) log.push_back(e);
    page = distill(log, page, analyzer, d, cfg);
    if (series) {
      double c = -1;
      for (const auto& cand : page.candidates) c = std::max(c, cand.confidence);
      for (const auto& r : page.rules()) c = std::max(c, r.confidence);
      series->push_back(c);
    }
  }
  return page;
}

TEST(Distill, ThreeDailyStrongEventsPromoteOnDayThree) {
  LpmPage page;
  page.app = "tube";
  HeuristicAnalyzer analyzer;
  page = distill({strong_event(0, kVideoEvening, 400, 1200)}, page, analyzer, 0);
  ASSERT_EQ(page.candidates.size(), 1u);
  EXPECT_DOUBLE_EQ(page.candidates[0].confidence, 0.5);
  page = distill({strong_event(1, kVideoEvening, 400, 1200)}, page, analyzer, 1);
  EXPECT_NEAR(page.candidates[0].confidence, 0.665, 1e-9);
  EXPECT_TRUE(page.rules().empty());
  page = distill({strong_event(2, kVideoEvening, 400, 1200)}, page, analyzer, 2);
  EXPECT_TRUE(page.candidates.empty());
  ASSERT_EQ(page.rules().size(), 1u);
  EXPECT_NEAR(page.rules()[0].confidence, 0.81845, 1e-9);
  EXPECT_EQ(page.rules()[0].fragment[0], (Preference{param::brightness, PrefCmp::at_least, 1200}));
}

TEST(Distill, SameDayRepeatsCountOnce) {
  LpmPage page;
  page.app = "tube";
  std::vector<std::vector<FeedbackEvent>> days;
  for (int d = 0; d < 2; ++d)
    days.push_back({strong_event(d, kVideoEvening, 400, 1200, param::brightness, 2 * d),
                    strong_event(d, kVideoEvening, 400, 1300, param::brightness, 2 * d + 1)});
  page = run_days(page, days);
  ASSERT_EQ(page.candidates.size(), 1u);
  EXPECT_NEAR(page.candidates[0].confidence, 0.665, 1e-9);
}

TEST(Distill, AlternatingStrongAndConflictNeverPromotes) {
  std::vector<std::vector<FeedbackEvent>> days;
  for (int d = 0; d < 30; ++d)
    days.push_back({d % 2 == 0 ? strong_event(d, kVideoEvening, 400, 1200)
                               : strong_event(d, kVideoEvening, 1200, 400)});
  std::vector<double> series;
  LpmPage page;
  page.app = "tube";
  page = run_days(page, days, {}, &series);
  EXPECT_TRUE(page.rules().empty());
  EXPECT_LT(*std::max_element(series.begin(), series.end()), 0.8);
}

TEST(Distill, PromotionReplacesRuleWithSameSignature) {
  LpmPage page;
  page.app = "tube";
  page.put_rule(rule(kVideoEvening, {param::brightness, PrefCmp::at_least, 1200}, 0.85));
  std::vector<std::vector<FeedbackEvent>> days;
  for (int d = 0; d < 3; ++d) days.push_back({strong_event(d, kVideoEvening, 1200, 400)});
  page = run_days(page, days);
  ASSERT_EQ(page.rules().size(), 1u);
  ASSERT_EQ(page.rules()[0].fragment.size(), 1u);
  EXPECT_EQ(page.rules()[0].fragment[0], (Preference{param::brightness, PrefCmp::at_most, 400}));
}

TEST(Distill, WeakRewardsRaiseCandidatesButNeverSeed) {
  LpmPage page;
  page.app = "tube";
  FeedbackEvent weak = strong_event(0, kVideoEvening, 2048, 1300);
  weak.strength = Strength::weak;
  page = run_days(page, {{weak}});
  EXPECT_TRUE(page.candidates.empty());

  std::vector<std::vector<FeedbackEvent>> days{{strong_event(0, kVideoEvening, 400, 1200)}};
  for (int d = 1; d < 14; ++d) {
    FeedbackEvent w = strong_event(d, kVideoEvening, 2048, 1300);
    w.strength = Strength::weak;
    days.push_back({w});
  }
  std::vector<double> series;
  page = run_days(page, days, {}, &series);
  // oracle: c_1 = 0.5, c_{n+1} = 0.93 c_n + 0.08; first n with c_n >= 0.8
  double c = 0.5;
  int cross = 1;
  while (c < 0.8) c = 0.93 * c + 0.08, ++cross;
  EXPECT_EQ(cross, 10);
  EXPECT_LT(series[cross - 2], 0.8);
  EXPECT_GE(series[cross - 1], 0.8);
  EXPECT_EQ(page.rules().size(), 1u);
}

TEST(Distill, StableRulesGetWeakRewardFromQuietSessions) {
  LpmPage page;
  page.app = "tube";
  page.put_rule(rule(kVideoEvening, {param::brightness, PrefCmp::at_least, 1200}, 0.85));
  AutoRecord r;
  r.time = {1, 1200};
  r.app = "tube";
  r.session = 4;
  r.matched_rules = {kVideoEvening.key()};
  HeuristicAnalyzer a;
  page = distill({r}, page, a, 1);
  EXPECT_NEAR(page.rules()[0].confidence, 0.85 * 0.93 + 0.08, 1e-12);
}

TEST(Distill, UntouchedCandidatesDecayAndEvict) {
  LpmPage page;
  page.app = "tube";
  page.candidates.push_back({kVideoEvening, {param::brightness, PrefCmp::at_least, 900}, 0.5, 0, 1});
  HeuristicAnalyzer a;
  page = distill({}, page, a, 9);
  ASSERT_EQ(page.candidates.size(), 1u);
  EXPECT_NEAR(page.candidates[0].confidence, 0.5 * oracle_pow(0.93, 9), 1e-12);
  page = distill({}, page, a, 23);  // 0.5 * 0.93^23 < 0.1
  EXPECT_TRUE(page.candidates.empty());
}

class FailingAnalyzer : public IntentAnalyzer {
 public:
  CandidateProposal analyze(const FeedbackEvent&) override { throw BackendError("offline"); }
};

TEST(Distill, AnalyzerFailureParksEventAsPending) {
  LpmPage page;
  page.app = "tube";
  FailingAnalyzer bad;
  page = distill({strong_event(0, kVideoEvening, 400, 1200)}, page, bad, 0);
  EXPECT_EQ(page.pending.size(), 1u);
  EXPECT_TRUE(page.candidates.empty());
  HeuristicAnalyzer good;
  page = distill({}, page, good, 1);
  EXPECT_TRUE(page.pending.empty());
  EXPECT_EQ(page.candidates.size(), 1u);
}

TEST(Distill, PromotionMonotoneInThreshold) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::vector<FeedbackEvent>> days;
    for (int d = 0; d < 20; ++d) {
      std::vector<FeedbackEvent> ev;
      if (rng() % 3 != 0) ev.push_back(strong_event(d, kVideoEvening, 400, rng() % 5 == 0 ? 300 : 1200));
      days.push_back(ev);
    }
    auto first_promotion = [&](double tau) {
      DistillConfig cfg;
      cfg.promote_threshold = tau;
      LpmPage page;
      page.app = "tube";
      HeuristicAnalyzer a;
      for (int d = 0; d < 20; ++d) {
        EventLog log(days[d].begin(), days[d].end());
        page = distill(log, page, a, d, cfg);
        if (!page.rules().empty()) return d;
      }
      return 1000;
    };
    int prev = first_promotion(0.7);
    for (double tau : {0.75, 0.8, 0.85, 0.9, 0.95}) {
      int cur = first_promotion(tau);
      EXPECT_GE(cur, prev) << trial;
      prev = cur;
    }
  }
}

TEST(Distill, OneStableRulePerSignature) {
  std::mt19937_64 rng(3);
  const ContextSignature sigs[] = {
      kVideoEvening,
      sig(AppCategory::video, "watching", BatteryBucket::low, DayClass::weekday, TimeSlot::evening),
      sig(AppCategory::video, "comments", BatteryBucket::mid, DayClass::weekend, TimeSlot::morning)};
  const ParamId params[] = {param::brightness, param::media_volume, param::refresh_rate};
  LpmPage page;
  page.app = "tube";
  HeuristicAnalyzer a;
  for (int d = 0; d < 40; ++d) {
    EventLog log;
    for (int k = 0; k < 4; ++k) {
      const auto& s = sigs[rng() % 3];
      const auto& p = params[rng() % 3];
      bool up = rng() % 4 != 0;
      log.push_back(strong_event(d, s, up ? 10 : 100, up ? 100 : 10, p, d * 10 + k));
    }
    page = distill(log, page, a, d);
    std::set<std::string> keys;
    for (const auto& r : page.rules()) {
      EXPECT_TRUE(keys.insert(r.key()).second);
      std::set<ParamId> targets;
      for (const auto& pr : r.fragment) EXPECT_TRUE(targets.insert(pr.target).second);
      EXPECT_GE(r.confidence, 0.0);
      EXPECT_LE(r.confidence, 1.0);
    }
    for (const auto& c : page.candidates) {
      EXPECT_GE(c.confidence, 0.1);
      EXPECT_LT(c.confidence, 0.8);
    }
  }
}

TEST(AggregateGeneral, ModeMedianAndPrior) {
  std::map<ParamId, Value> prior{{param::dark_mode, 1}};
  std::vector<SessionEnd> obs(3);
  Value refresh[] = {60, 60, 120};
  Value bright[] = {400, 1200, 1000};
  for (int i = 0; i < 3; ++i)
    obs[i].values = {{param::refresh_rate, refresh[i]}, {param::brightness, bright[i]}};
  auto g = aggregate_general_profile(caps(), prior, obs);
  EXPECT_EQ(g.at(param::refresh_rate), 60);
  EXPECT_EQ(g.at(param::brightness), 1000);
  EXPECT_EQ(g.at(param::dark_mode), 1);
  EXPECT_EQ(aggregate_general_profile(caps(), prior, {}), prior);
}

TEST(Generalize, WeekendSlotsMerge) {
  HeuristicAnalyzer a;
  Preference p{param::brightness, PrefCmp::at_least, 600};
  auto m = generalize({rule(sig(AppCategory::reading, "reading", BatteryBucket::high, DayClass::weekend,
                                TimeSlot::morning), p, 0.9),
                       rule(sig(AppCategory::reading, "reading", BatteryBucket::high, DayClass::weekend,
                                TimeSlot::afternoon), p, 0.82)},
                      a);
  ASSERT_TRUE(m.has_value());
  EXPECT_EQ(m->signature.day_class, DayClass::weekend);
  EXPECT_FALSE(m->signature.slot.has_value());
  EXPECT_DOUBLE_EQ(m->confidence, 0.82);
}

TEST(Generalize, TwoFieldDifferenceAndSingleton) {
  HeuristicAnalyzer a;
  Preference p{param::brightness, PrefCmp::at_least, 600};
  auto r1 = rule(sig(AppCategory::reading, "reading", BatteryBucket::high, DayClass::weekend,
                     TimeSlot::morning), p);
  auto r2 = rule(sig(AppCategory::reading, "reading", BatteryBucket::low, DayClass::weekday,
                     TimeSlot::morning), p);
  EXPECT_FALSE(generalize({r1, r2}, a).has_value());
  EXPECT_FALSE(generalize({r1}, a).has_value());
}

class VetoAnalyzer : public HeuristicAnalyzer {
 public:
  bool approve_generalization(const ContextRule&, const ContextRule&, const ContextRule&) override {
    return false;
  }
};

TEST(Generalize, AnalyzerVeto) {
  VetoAnalyzer a;
  Preference p{param::brightness, PrefCmp::at_least, 600};
  auto r1 = rule(sig(AppCategory::reading, "reading", BatteryBucket::high, DayClass::weekend,
                     TimeSlot::morning), p);
  auto r2 = r1;
  r2.signature.slot = TimeSlot::evening;
  EXPECT_FALSE(generalize({r1, r2}, a).has_value());
}

class PageFiles : public ::testing::Test {
 protected:
  std::string root;
  void SetUp() override {
    root = (std::filesystem::temp_directory_path() /
            ("powerlens_pages_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
             "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name()))
               .string();
    std::filesystem::remove_all(root);
  }
  void TearDown() override { std::filesystem::remove_all(root); }
};

TEST_F(PageFiles, RoundTrip) {
  LpmPage page;
  page.app = "tube";
  page.put_rule(rule(kVideoEvening, {param::brightness, PrefCmp::at_least, 200}, 0.8184500000000001));
  auto wide = kVideoEvening;
  wide.slot.reset();
  page.put_rule(rule(wide, {param::refresh_rate, PrefCmp::exactly, 60}, 0.85));
  page.candidates.push_back({kVideoEvening, {param::media_volume, PrefCmp::at_most, 30}, 0.665, 3, 1});
  page.general[param::brightness] = 1000;
  page.pending.push_back(strong_event(3, kVideoEvening, 1, 2));
  page.version = 7;
  persist_page(page, root);
  LpmPage back = load_page("tube", root);
  EXPECT_EQ(canonical_dump(to_json(back)), canonical_dump(to_json(page)));
  EXPECT_EQ(back.retrieve(kVideoEvening).level, RetrievalLevel::exact);
}

TEST_F(PageFiles, MissingFileIsEmptyPage) {
  LpmPage p = load_page("nothing", root);
  EXPECT_EQ(p.app, "nothing");
  EXPECT_TRUE(p.rules().empty());
  EXPECT_TRUE(p.candidates.empty());
}

TEST_F(PageFiles, CorruptFileRaisesAndIsPreserved) {
  std::filesystem::create_directories(root);
  const std::string path = page_file("tube", root);
  {
    std::ofstream(path) << "{\"app\": \"tube\", \"rules\": [";
  }
  EXPECT_THROW(load_page("tube", root), CorruptFileError);
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(text, "{\"app\": \"tube\", \"rules\": [");
}

TEST(EventLogCsv, HeaderAndRows) {
  EventLog log{strong_event(2, kVideoEvening, 400, 1200)};
  std::string csv = event_log_csv(log);
  EXPECT_EQ(csv,
            "day,minute,app,session,param,old,new,strength,category,sub_activity,battery,day_class,slot\n"
            "2,1200,tube,2,brightness,400,1200,STRONG,video,watching,mid,weekday,evening\n");
}

}  // namespace
}  // namespace powerlens

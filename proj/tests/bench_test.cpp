#include <gtest/gtest.h>

#include "powerlens/bench.hpp"

namespace powerlens {
namespace {

const BenchWorld& world() {
  static const BenchWorld w = default_bench_world();
  return w;
}

// Every task at one profile: 14 tasks x 3 buckets.
std::vector<BenchInstance> small_grid() {
  std::vector<BenchInstance> g;
  for (const auto& i : build_bench_grid(world().profiles, world().pack))
    if (i.profile == "Student") g.push_back(i);
  return g;
}

TEST(Bench, ConfigNames) {
  EXPECT_EQ((BenchConfig{Baseline::powerlens, {}}).name(), "powerlens");
  SimToggles t;
  t.memory = false;
  EXPECT_EQ((BenchConfig{Baseline::powerlens, t}).name(), "powerlens_no_memory");
  t = {};
  t.pdl = false;
  t.adversarial = true;
  EXPECT_EQ((BenchConfig{Baseline::powerlens, t}).name(), "powerlens_no_pdl+adversarial");
  EXPECT_EQ((BenchConfig{Baseline::stock, t}).name(), "stock");
  for (auto b : {Baseline::stock, Baseline::battery_saver, Baseline::rule_based, Baseline::single_agent,
                 Baseline::powerlens})
    EXPECT_EQ(parse_baseline(to_string(b)), b);
  EXPECT_FALSE(parse_baseline("turbo"));
  const PipelineConfig sa = BenchConfig{Baseline::single_agent, {}}.pipeline_config();
  EXPECT_FALSE(sa.memory || sa.pdl || sa.feedback || sa.multi_agent);
}

TEST(Bench, BatterySaverCapsBrightnessAndSync) {
  DeviceState s = default_state(world().caps, 50, "com.x", {0, 600});
  s.values[param::brightness] = 3000;
  const DeviceState post = apply_policy(world().caps, s, battery_saver_policy(s));
  EXPECT_EQ(post.at(param::brightness), kBatterySaverBrightnessCap);
  EXPECT_EQ(post.at(param::refresh_rate), 60);
  EXPECT_EQ(post.at(param::auto_sync), 0);
  s.values[param::brightness] = 300;
  EXPECT_EQ(apply_policy(world().caps, s, battery_saver_policy(s)).at(param::brightness), 300);
}

TEST(Bench, StockSavesNothing) {
  const BenchReport r = run_bench(world(), small_grid(), {Baseline::stock, {}});
  ASSERT_EQ(r.overall.n, 42);
  for (const auto& i : r.instances) {
    EXPECT_EQ(i.es, 0.0);
    EXPECT_EQ(i.energy, i.stock_energy);
    EXPECT_EQ(i.post.total, 0);
  }
}

TEST(Bench, RuleBasedNeverViolatesHardConstraints) {
  const BenchReport r = run_bench(world(), small_grid(), {Baseline::rule_based, {}});
  EXPECT_GT(r.overall.post.total, 0);
  EXPECT_EQ(r.overall.post.violating, 0);
  EXPECT_GT(r.overall.es, 0.0);
}

TEST(Bench, ReportsStayInBounds) {
  for (auto b : {Baseline::battery_saver, Baseline::powerlens}) {
    const BenchReport r = run_bench(world(), small_grid(), {b, {}});
    for (const auto& i : r.instances) {
      EXPECT_GE(i.acc, 0.0);
      EXPECT_LE(i.acc, 100.0);
      EXPECT_GE(i.ues, 0.0);
      EXPECT_LE(i.ues, 5.0);
      EXPECT_LE(i.es, 100.0);
      EXPECT_LE(i.post.violating, i.post.total);
    }
    EXPECT_EQ(r.by_bucket.size(), 3u);
    EXPECT_EQ(r.by_category.size(), 7u);
  }
}

TEST(Bench, CsvIsDeterministic) {
  const BenchConfig cfg{Baseline::powerlens, {}};
  const BenchReport a = run_bench(world(), small_grid(), cfg);
  const BenchReport b = run_bench(world(), small_grid(), cfg);
  EXPECT_EQ(instances_csv(a), instances_csv(b));
  EXPECT_EQ(summary_csv({a}), summary_csv({b}));
  const std::string csv = instances_csv(a);
  EXPECT_EQ(csv.rfind(kInstanceCsvHeader, 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 43);
}

}  // namespace
}  // namespace powerlens

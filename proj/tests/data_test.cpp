#include <filesystem>

#include <gtest/gtest.h>

#include "powerlens/files.hpp"

namespace powerlens {
namespace {

namespace fs = std::filesystem;

const fs::path kData = fs::path(POWERLENS_SOURCE_DIR) / "data";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// The shipped documents are byte-identical to a fresh export of the presets.
TEST(Data, ShippedDocumentsMatchThePresets) {
  const fs::path tmp = fs::temp_directory_path() / "powerlens_export_test";
  fs::remove_all(tmp);
  export_defaults(tmp.string());
  int files = 0;
  for (const auto& e : fs::recursive_directory_iterator(tmp)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), tmp);
    EXPECT_EQ(slurp(kData / rel), slurp(e.path())) << rel;
    ++files;
  }
  EXPECT_EQ(files, 10);
  fs::remove_all(tmp);
}

TEST(Data, GridFileLoadsTheDefaultWorld) {
  const BenchWorld w = load_bench_world((kData / "grid.json").string());
  const BenchWorld d = default_bench_world();
  EXPECT_EQ(to_json(w.caps), to_json(d.caps));
  EXPECT_EQ(to_json(w.constraints), to_json(d.constraints));
  EXPECT_EQ(to_json(w.model), to_json(d.model));
  EXPECT_EQ(to_json(w.pack), to_json(d.pack));
  ASSERT_EQ(w.profiles.size(), d.profiles.size());
  for (std::size_t i = 0; i < w.profiles.size(); ++i) EXPECT_EQ(to_json(w.profiles[i]), to_json(d.profiles[i]));
  EXPECT_EQ(w.spec.seed, d.spec.seed);
  EXPECT_EQ(w.spec.battery, d.spec.battery);
  EXPECT_EQ(w.spec.pretrain_days, d.spec.pretrain_days);
  EXPECT_EQ(build_bench_grid(w.profiles, w.pack, w.spec).size(), 210u);
}

TEST(Data, ShiftExampleLoads) {
  const UserProfile p =
      load_profile_file((kData / "examples" / "student_shift.json").string(), default_capability_profile());
  ASSERT_EQ(p.shifts.size(), 1u);
  EXPECT_EQ(p.shifts[0].day, 7);
  EXPECT_EQ(p.shifts[0].category, AppCategory::reading);
}

TEST(Data, BadGridFilesAreConfigErrors) {
  const fs::path tmp = fs::temp_directory_path() / "powerlens_grid_test";
  fs::remove_all(tmp);
  export_defaults(tmp.string());
  const std::string grid = (tmp / "grid.json").string();
  Json g = read_json_file(grid);

  Json missing = g;
  missing["profiles"].push_back("profiles/nobody.json");
  write_text_file(grid, missing.dump());
  EXPECT_THROW(load_bench_world(grid), ConfigError);

  Json wrong_bucket = g;
  wrong_bucket["battery"]["low"] = 50;
  write_text_file(grid, wrong_bucket.dump());
  EXPECT_THROW(load_bench_world(grid), ConfigError);

  Json no_seed = g;
  no_seed.erase("seed");
  write_text_file(grid, no_seed.dump());
  EXPECT_THROW(load_bench_world(grid), ConfigError);
  fs::remove_all(tmp);
}

}  // namespace
}  // namespace powerlens

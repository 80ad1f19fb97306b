#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "powerlens/device_model.hpp"
#include "powerlens/presets.hpp"

namespace powerlens {
namespace {

const CapabilityProfile& profile() {
  static const CapabilityProfile p = default_capability_profile();
  return p;
}

// Independent oracle: scan every domain value, keep the smallest distance,
// break ties toward the lower value.
Value brute_nearest(const ParameterSpec& spec, Value v) {
  long long best_d = -1;
  Value best = 0;
  for (Value c : spec.domain_values()) {
    long long d = c > v ? static_cast<long long>(c) - v : static_cast<long long>(v) - c;
    if (best_d < 0 || d < best_d || (d == best_d && c < best)) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

TEST(ValidateValue, BrightnessAboveRangeClampsToMax) {
  auto r = validate_value(profile().at(param::brightness), 5000);
  EXPECT_FALSE(r.valid);
  EXPECT_EQ(r.nearest, 4096);
}

TEST(ValidateValue, RefreshMemberIsValid) {
  EXPECT_TRUE(validate_value(profile().at(param::refresh_rate), 60).valid);
}

TEST(ValidateValue, RefreshTieResolvesLow) {
  const auto& spec = profile().at(param::refresh_rate);
  ASSERT_EQ(brute_nearest(spec, 75), 60);
  auto r = validate_value(spec, 75);
  EXPECT_FALSE(r.valid);
  EXPECT_EQ(r.nearest, 60);
}

TEST(ValidateValue, MatchesBruteForceAndIsIdempotent) {
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> dist(-5000, 9000);
  for (const auto& spec : profile().parameters) {
    for (int i = 0; i < 300; ++i) {
      Value v = dist(rng);
      auto r = validate_value(spec, v);
      EXPECT_EQ(r.valid, spec.contains(v));
      EXPECT_EQ(r.nearest, r.valid ? v : brute_nearest(spec, v)) << spec.id << " " << v;
      EXPECT_TRUE(validate_value(spec, r.nearest).valid);
    }
  }
}

TEST(ApplyPolicy, SingleWrite) {
  auto s = default_state(profile(), 50, "app", {});
  s.values[param::brightness] = 400;
  auto out = apply_policy(profile(), s, Policy{Action::set(param::brightness, 1000)});
  EXPECT_EQ(out.at(param::brightness), 1000);
  out.values[param::brightness] = 400;
  EXPECT_EQ(out, s);
}

TEST(ApplyPolicy, EmptyAndNonMutatingVerbsAreIdentity) {
  auto s = default_state(profile(), 50, "app", {});
  EXPECT_EQ(apply_policy(profile(), s, Policy{}), s);
  EXPECT_EQ(apply_policy(profile(), s,
                         Policy{Action::keep(param::brightness), Action::defer(param::auto_sync)}),
            s);
}

TEST(ApplyPolicy, EnableDisableWriteOnOff) {
  auto s = default_state(profile(), 50, "app", {});
  auto out = apply_policy(profile(), s,
                          Policy{Action::disable(param::wifi), Action::disable(param::location_mode),
                                 Action::disable(param::refresh_rate), Action::enable(param::dark_mode)});
  EXPECT_EQ(out.at(param::wifi), 0);
  EXPECT_EQ(out.at(param::location_mode), 0);
  EXPECT_EQ(out.at(param::refresh_rate), 30);
  EXPECT_EQ(out.at(param::dark_mode), 1);
}

TEST(ApplyPolicy, InvalidValueNamesAction) {
  auto s = default_state(profile(), 50, "app", {});
  try {
    apply_policy(profile(), s, Policy{Action::set(param::refresh_rate, 75)});
    FAIL();
  } catch (const InvalidValueError& e) {
    EXPECT_NE(std::string(e.what()).find("refresh_rate"), std::string::npos);
  }
}

TEST(ApplyPolicy, OrderIndependentForDistinctTargets) {
  std::mt19937 rng(11);
  auto s = default_state(profile(), 50, "app", {});
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Action> actions;
    for (const auto& spec : profile().parameters) {
      if (rng() % 2) continue;
      auto dom = spec.domain_values();
      actions.push_back(Action::set(spec.id, dom[rng() % dom.size()]));
    }
    Policy a, b;
    for (const auto& x : actions) a.add(x);
    std::shuffle(actions.begin(), actions.end(), rng);
    for (const auto& x : actions) b.add(x);
    EXPECT_EQ(apply_policy(profile(), s, a), apply_policy(profile(), s, b));
  }
}

TEST(Policy, RejectsDuplicateTargetsAndVerbValueMismatch) {
  Policy p{Action::set(param::brightness, 10)};
  EXPECT_THROW(p.add(Action::keep(param::brightness)), InvalidValueError);
  Action bad{param::wifi, Verb::set, std::nullopt, Priority::low, ""};
  EXPECT_THROW(p.add(bad), InvalidValueError);
  Action bad2{param::wifi, Verb::enable, 1, Priority::low, ""};
  EXPECT_THROW(p.add(bad2), InvalidValueError);
}

TEST(DefaultState, TableDefaults) {
  auto s = default_state(profile(), 80, "com.example", {2, 600});
  EXPECT_EQ(s.at(param::refresh_rate), 120);
  EXPECT_EQ(s.at(param::cpu_cores_online), 0xFF);
  EXPECT_EQ(s.at(param::brightness), 2048);
  EXPECT_EQ(check_state(profile(), s), "");
}

TEST(CapabilityProfile, ShippedProfileShape) {
  EXPECT_EQ(profile().parameters.size(), 18u);
  EXPECT_EQ(profile().categories().size(), 5u);
  for (const auto& spec : profile().parameters) {
    EXPECT_TRUE(spec.contains(spec.default_value)) << spec.id;
    EXPECT_NE(profile().command_templates.at(spec.id).find("{" + spec.id + "}"), std::string::npos);
  }
}

TEST(CapabilityProfile, JointStateSpaceExceeds1e17) {
  // |S| column: 4097, 4, 7, 2, 2, 2, 2, 2, 2, 4, 3, 256, 6, 161, 17, 17, 17, 2
  long double expected = 4097.0L * 4 * 7 * 2 * 2 * 2 * 2 * 2 * 2 * 4 * 3 * 256 * 6 * 161 * 17 * 17 * 17 * 2;
  EXPECT_EQ(profile().joint_state_space(), expected);
  EXPECT_GE(profile().joint_state_space(), 1e17L);
}

TEST(CapabilityProfile, CanonicalRoundTrip) {
  const std::string text = serialize_capability_profile(profile());
  auto loaded = load_capability_profile(Json::parse(text));
  EXPECT_EQ(serialize_capability_profile(loaded), text);
  EXPECT_EQ(text.back(), '\n');
  EXPECT_EQ(text.find('\r'), std::string::npos);
}

TEST(CapabilityProfile, MissingFieldNamesPath) {
  Json doc = to_json(profile());
  doc["parameters"][2].erase("default");
  try {
    load_capability_profile(doc);
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.path(), "$.parameters[2].default");
  }
}

TEST(CapabilityProfile, RejectsBadDomains) {
  Json doc = to_json(profile());
  doc["parameters"][1]["domain"]["values"] = Json::array({30, 60, 60});
  EXPECT_THROW(load_capability_profile(doc), SchemaError);
  doc = to_json(profile());
  doc["parameters"][0]["default"] = 9000;
  EXPECT_THROW(load_capability_profile(doc), SchemaError);
  doc = to_json(profile());
  doc["parameters"][0]["command_template"] = "settings put system screen_brightness {x}";
  EXPECT_THROW(load_capability_profile(doc), SchemaError);
}

TEST(Bitmask, AdmitsExactlyRepresentableValues) {
  const auto& spec = profile().at(param::cpu_cores_online);
  EXPECT_TRUE(spec.contains(0));
  EXPECT_TRUE(spec.contains(255));
  EXPECT_FALSE(spec.contains(256));
  EXPECT_FALSE(spec.contains(-1));
  EXPECT_EQ(spec.cardinality(), 256u);
}

}  // namespace
}  // namespace powerlens

#pragma once

// Built-in documents: the 18-parameter capability profile and the default
// constraint pack. data/*.json holds their serialized forms.

#include "powerlens/constraints.hpp"
#include "powerlens/device_model.hpp"

namespace powerlens {

namespace param {
inline const ParamId brightness = "brightness";
inline const ParamId refresh_rate = "refresh_rate";
inline const ParamId screen_timeout = "screen_timeout";
inline const ParamId dark_mode = "dark_mode";
inline const ParamId auto_rotation = "auto_rotation";
inline const ParamId wifi = "wifi";
inline const ParamId bluetooth = "bluetooth";
inline const ParamId nfc = "nfc";
inline const ParamId mobile_data = "mobile_data";
inline const ParamId location_mode = "location_mode";
inline const ParamId cpu_governor = "cpu_governor";
inline const ParamId cpu_cores_online = "cpu_cores_online";
inline const ParamId bg_process_limit = "bg_process_limit";
inline const ParamId media_volume = "media_volume";
inline const ParamId notification_volume = "notification_volume";
inline const ParamId ring_volume = "ring_volume";
inline const ParamId alarm_volume = "alarm_volume";
inline const ParamId auto_sync = "auto_sync";
}  // namespace param

// cpu_governor encoding
inline constexpr Value kPowersave = 0;
inline constexpr Value kSchedutil = 1;
inline constexpr Value kPerformance = 2;

// location_mode encoding: off, device only, battery saving, high accuracy
inline constexpr Value kLocationHigh = 3;

inline constexpr Value kMediaVolumeFloor = 40;

inline CapabilityProfile default_capability_profile() {
  CapabilityProfile p;
  p.device = "reference-handset";
  p.notes = {
      "brightness default: the stock setting is adaptive (Auto); the simulator has no ambient "
      "light loop, so the domain midpoint 2048 stands in for it",
      "cpu_governor values: 0=powersave 1=schedutil 2=performance",
      "location_mode values: 0=off 1=device_only 2=battery_saving 3=high_accuracy",
      "screen_timeout values are seconds",
      "bg_process_limit -1 means the standard (unlimited) limit",
  };

  auto add = [&](ParameterSpec s, std::string tmpl) {
    p.command_templates[s.id] = std::move(tmpl);
    p.parameters.push_back(std::move(s));
  };
  auto range = [](ParamId id, Category c, Value lo, Value hi, Value def, Impact imp) {
    ParameterSpec s;
    s.id = std::move(id);
    s.category = c;
    s.kind = ValueKind::continuous_range;
    s.min = lo;
    s.max = hi;
    s.default_value = def;
    s.impact = imp;
    return s;
  };
  auto discrete = [](ParamId id, Category c, std::vector<Value> vs, Value def, Impact imp) {
    ParameterSpec s;
    s.id = std::move(id);
    s.category = c;
    s.kind = ValueKind::discrete_set;
    s.values = std::move(vs);
    s.default_value = def;
    s.impact = imp;
    return s;
  };
  auto binary = [](ParamId id, Category c, Value def, Impact imp) {
    ParameterSpec s;
    s.id = std::move(id);
    s.category = c;
    s.kind = ValueKind::binary;
    s.default_value = def;
    s.impact = imp;
    return s;
  };

  using C = Category;
  using I = Impact;
  add(range(param::brightness, C::display, 0, 4096, 2048, I::high),
      "settings put system screen_brightness {brightness}");
  add(discrete(param::refresh_rate, C::display, {30, 60, 90, 120}, 120, I::high),
      "settings put system peak_refresh_rate {refresh_rate} && settings put system "
      "min_refresh_rate {refresh_rate} && settings put secure user_refresh_rate {refresh_rate}");
  add(discrete(param::screen_timeout, C::display, {15, 30, 60, 120, 300, 600, 1800}, 30, I::medium),
      "settings put system screen_off_timeout {screen_timeout}000");
  add(binary(param::dark_mode, C::display, 0, I::low), "cmd uimode night {dark_mode}");
  add(binary(param::auto_rotation, C::display, 1, I::low),
      "settings put system accelerometer_rotation {auto_rotation}");
  add(binary(param::wifi, C::connectivity, 1, I::medium), "settings put global wifi_on {wifi}");
  add(binary(param::bluetooth, C::connectivity, 1, I::low),
      "settings put global bluetooth_on {bluetooth}");
  add(binary(param::nfc, C::connectivity, 1, I::low), "settings put global nfc_on {nfc}");
  {
    auto s = binary(param::mobile_data, C::connectivity, 1, I::medium);
    s.privileged = true;
    add(std::move(s), "su -c 'settings put global mobile_data {mobile_data}'");
  }
  add(discrete(param::location_mode, C::connectivity, {0, 1, 2, 3}, 3, I::high),
      "settings put secure location_mode {location_mode}");
  {
    auto s = discrete(param::cpu_governor, C::compute, {0, 1, 2}, kSchedutil, I::high);
    s.privileged = true;
    add(std::move(s),
        "su -c 'echo {cpu_governor} > /sys/devices/system/cpu/cpufreq/governor_index'");
  }
  {
    ParameterSpec s;
    s.id = param::cpu_cores_online;
    s.category = C::compute;
    s.kind = ValueKind::bitmask;
    s.bit_width = 8;
    s.default_value = 0xFF;
    s.impact = I::high;
    s.privileged = true;
    add(std::move(s), "su -c 'echo {cpu_cores_online} > /sys/devices/system/cpu/online_mask'");
  }
  add(discrete(param::bg_process_limit, C::compute, {-1, 0, 1, 2, 3, 4}, -1, I::medium),
      "settings put global background_process_limit {bg_process_limit}");
  add(range(param::media_volume, C::audio, 0, 160, 80, I::low),
      "cmd media_session volume --stream 3 --set {media_volume}");
  add(range(param::notification_volume, C::audio, 0, 16, 8, I::low),
      "cmd media_session volume --stream 5 --set {notification_volume}");
  add(range(param::ring_volume, C::audio, 0, 16, 8, I::low),
      "cmd media_session volume --stream 2 --set {ring_volume}");
  add(range(param::alarm_volume, C::audio, 0, 16, 8, I::low),
      "cmd media_session volume --stream 4 --set {alarm_volume}");
  add(binary(param::auto_sync, C::sync, 1, I::medium),
      "content call --uri content://sync --method setMasterSyncAutomatically --arg {auto_sync}");

  for (auto& s : p.parameters)
    s.power_weight = s.impact == I::high ? 3.0 : s.impact == I::medium ? 2.0 : 1.0;
  return p;
}

inline ConstraintSet default_constraint_pack() {
  auto cat_atom = [](Atom::Kind k, AppCategory c) {
    Atom a;
    a.kind = k;
    a.members = {c};
    return a;
  };
  auto bound = [](ParamId t, PredCmp c, Value v) { return Bound{std::move(t), c, {v}}; };

  ConstraintSet rules;
  rules.push_back({"nav_high_accuracy_gps", RuleKind::hard,
                   {{cat_atom(Atom::Kind::app_category, AppCategory::navigation)}},
                   {{bound(param::location_mode, PredCmp::ge, kLocationHigh)}},
                   CorrectionStrategy::clamp_to_boundary});
  {
    Atom low;
    low.kind = Atom::Kind::battery;
    low.cmp = BatteryCmp::lt;
    low.threshold = 10;
    rules.push_back({"critical_battery_brightness", RuleKind::hard,
                     {{low}},
                     {{bound(param::brightness, PredCmp::le, 512)}},
                     CorrectionStrategy::clamp_to_boundary});
  }
  rules.push_back({"video_min_refresh", RuleKind::contextual,
                   {{cat_atom(Atom::Kind::activity_type, AppCategory::video)}},
                   {{bound(param::refresh_rate, PredCmp::ge, 60)}},
                   CorrectionStrategy::clamp_to_boundary});
  rules.push_back({"meeting_network", RuleKind::contextual,
                   {{cat_atom(Atom::Kind::activity_type, AppCategory::meeting)}},
                   {{bound(param::mobile_data, PredCmp::ge, 1), bound(param::wifi, PredCmp::ge, 1)}},
                   CorrectionStrategy::reject_action});
  rules.push_back({"meeting_media_volume", RuleKind::contextual,
                   {{cat_atom(Atom::Kind::activity_type, AppCategory::meeting)}},
                   {{bound(param::media_volume, PredCmp::ge, kMediaVolumeFloor)}},
                   CorrectionStrategy::clamp_to_boundary});
  rules.push_back({"music_media_volume", RuleKind::contextual,
                   {{cat_atom(Atom::Kind::activity_type, AppCategory::music)}},
                   {{bound(param::media_volume, PredCmp::ge, kMediaVolumeFloor)}},
                   CorrectionStrategy::clamp_to_boundary});
  return rules;
}

}  // namespace powerlens

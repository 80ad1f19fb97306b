#pragma once

// Built-in simulation documents: the energy model, five user profiles and the
// 14-task scenario pack. data/*.json holds their serialized forms.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "powerlens/presets.hpp"
#include "powerlens/simulator.hpp"

namespace powerlens {

inline EnergyModel default_energy_model() {
  EnergyModel m;
  m.budget = {{Category::display, 42}, {Category::connectivity, 25}, {Category::compute, 20},
              {Category::audio, 5},    {Category::sync, 8}};
  auto linear = [](double lo, double hi) {
    LoadFunction f;
    f.kind = LoadFunction::Kind::linear;
    f.lo = lo;
    f.hi = hi;
    return f;
  };
  auto table = [](std::map<Value, double> t) {
    LoadFunction f;
    f.kind = LoadFunction::Kind::table;
    f.table = std::move(t);
    return f;
  };
  m.load[param::brightness] = linear(0, 4096);
  m.load[param::refresh_rate] = linear(0, 120);
  m.load[param::screen_timeout] =
      table({{15, 0.6}, {30, 0.7}, {60, 0.8}, {120, 0.9}, {300, 1.0}, {600, 1.1}, {1800, 1.3}});
  m.load[param::dark_mode] = table({{0, 1.0}, {1, 0.4}});
  m.load[param::auto_rotation] = linear(0, 1);
  m.load[param::wifi] = linear(0, 1);
  m.load[param::bluetooth] = linear(0, 1);
  m.load[param::nfc] = linear(0, 1);
  m.load[param::mobile_data] = linear(0, 1);
  m.load[param::location_mode] = table({{0, 0.0}, {1, 0.4}, {2, 0.6}, {3, 1.0}});
  m.load[param::cpu_governor] = table({{kPowersave, 0.6}, {kSchedutil, 1.0}, {kPerformance, 1.4}});
  LoadFunction cores;
  cores.kind = LoadFunction::Kind::popcount;
  cores.bits = 8;
  m.load[param::cpu_cores_online] = cores;
  m.load[param::bg_process_limit] = table({{-1, 1.0}, {0, 0.3}, {1, 0.45}, {2, 0.6}, {3, 0.75}, {4, 0.9}});
  m.load[param::media_volume] = linear(0, 160);
  m.load[param::notification_volume] = linear(0, 16);
  m.load[param::ring_volume] = linear(0, 16);
  m.load[param::alarm_volume] = linear(0, 16);
  m.load[param::auto_sync] = linear(0, 1);
  m.drain_pct_per_unit = 0.002;
  return m;
}

namespace detail {

struct ProfileSeed {
  std::string name;
  std::map<ParamId, Value> base;
  std::map<ParamId, double> prob;  // deviations from the common probabilities
};

inline Value round_to(double v, int step) { return static_cast<Value>(std::lround(v / step) * step); }

inline Value clamp_brightness(double v) { return std::clamp<Value>(round_to(v, 10), 100, 4096); }

// GT = profile base, then category adjustments, then battery adjustments.
// Every vector satisfies the default constraint pack for its cell.
inline std::map<ParamId, Value> derive_gt(const std::map<ParamId, Value>& base, AppCategory cat,
                                          BatteryBucket bucket) {
  using C = AppCategory;
  namespace p = param;
  auto g = base;
  switch (cat) {
    case C::navigation:
      g[p::brightness] = std::max<Value>(g[p::brightness] + 500, 1600);
      g[p::location_mode] = kLocationHigh;
      g[p::screen_timeout] = 600;
      g[p::mobile_data] = 1;
      break;
    case C::video:
      g[p::brightness] += 300;
      g[p::refresh_rate] = std::max<Value>(g[p::refresh_rate], 60);
      g[p::screen_timeout] = 1800;
      g[p::media_volume] = std::clamp<Value>(g[p::media_volume] + 20, 60, 160);
      g[p::auto_rotation] = 1;
      break;
    case C::meeting:
      g[p::brightness] += 100;
      if (g[p::wifi] == 0 && g[p::mobile_data] == 0) g[p::wifi] = 1;
      g[p::media_volume] = std::max<Value>(g[p::media_volume], 60);
      g[p::notification_volume] = std::min<Value>(g[p::notification_volume], 2);
      g[p::screen_timeout] = 600;
      break;
    case C::social: g[p::screen_timeout] = std::min<Value>(g[p::screen_timeout], 60); break;
    case C::feed:
      g[p::brightness] -= 100;
      g[p::screen_timeout] = std::min<Value>(g[p::screen_timeout], 60);
      break;
    case C::music:
      g[p::brightness] = std::min<Value>(g[p::brightness], 300 + g[p::brightness] / 20);
      g[p::refresh_rate] = 60;
      g[p::screen_timeout] = 15;
      g[p::media_volume] = std::clamp<Value>(g[p::media_volume] + 20, 60, 160);
      g[p::bluetooth] = 1;
      break;
    case C::reading:
      g[p::brightness] = std::max<Value>(g[p::brightness] - 300, 300);
      g[p::refresh_rate] = 60;
      g[p::screen_timeout] = 300;
      break;
    case C::idle: break;
  }
  const bool keeps_pace = cat == C::navigation || cat == C::video || cat == C::meeting;
  if (bucket == BatteryBucket::mid) {
    g[p::brightness] = g[p::brightness] * 85 / 100;
    if (g[p::refresh_rate] == 120) g[p::refresh_rate] = 90;
    if (g[p::cpu_governor] == kPerformance) g[p::cpu_governor] = kSchedutil;
    if (g[p::cpu_cores_online] == 0xFF) g[p::cpu_cores_online] = 0x3F;
    if (g[p::bg_process_limit] == -1 || g[p::bg_process_limit] > 3) g[p::bg_process_limit] = 3;
    g[p::dark_mode] = 1;
    if (cat != C::navigation) g[p::nfc] = 0;
    if (cat != C::navigation && cat != C::video) g[p::auto_rotation] = 0;
  } else if (bucket == BatteryBucket::low) {
    g[p::brightness] = g[p::brightness] * 65 / 100;
    g[p::refresh_rate] = 60;
    g[p::cpu_governor] = keeps_pace ? kSchedutil : kPowersave;
    if (g[p::cpu_cores_online] == 0xFF) g[p::cpu_cores_online] = 0x3F;
    else g[p::cpu_cores_online] = 0x0F;
    g[p::bg_process_limit] = 2;
    g[p::auto_sync] = 0;
    g[p::dark_mode] = 1;
    if (!keeps_pace) g[p::screen_timeout] = std::min<Value>(g[p::screen_timeout], 60);
  }
  g[p::brightness] = clamp_brightness(static_cast<double>(g[p::brightness]));
  return g;
}

inline std::vector<ProfileSeed> profile_seeds() {
  namespace p = param;
  auto base = [](Value bright, Value refresh, Value timeout, Value dark, Value rot, Value wifi, Value bt,
                 Value nfc, Value data, Value loc, Value gov, Value cores, Value bg, Value media,
                 Value notif, Value ring, Value alarm, Value sync) {
    return std::map<ParamId, Value>{
        {p::brightness, bright}, {p::refresh_rate, refresh}, {p::screen_timeout, timeout},
        {p::dark_mode, dark},    {p::auto_rotation, rot},    {p::wifi, wifi},
        {p::bluetooth, bt},      {p::nfc, nfc},              {p::mobile_data, data},
        {p::location_mode, loc}, {p::cpu_governor, gov},     {p::cpu_cores_online, cores},
        {p::bg_process_limit, bg}, {p::media_volume, media}, {p::notification_volume, notif},
        {p::ring_volume, ring},  {p::alarm_volume, alarm},   {p::auto_sync, sync}};
  };
  return {
      {"Power User", base(2400, 120, 60, 0, 1, 1, 1, 1, 1, 3, kPerformance, 0xFF, -1, 100, 8, 8, 10, 1),
       {{p::refresh_rate, 0.8}, {p::cpu_governor, 0.2}}},
      {"Student", base(1200, 90, 30, 1, 1, 1, 1, 0, 1, 2, kSchedutil, 0xFF, -1, 90, 6, 6, 12, 1),
       {{p::media_volume, 0.9}}},
      {"Commuter", base(1800, 60, 30, 1, 0, 0, 1, 1, 1, 3, kSchedutil, 0x3F, 3, 110, 10, 10, 10, 1),
       {{p::mobile_data, 0.7}}},
      {"Professional", base(1400, 90, 120, 0, 0, 1, 1, 0, 1, 2, kSchedutil, 0xFF, 4, 70, 4, 12, 10, 1),
       {{p::ring_volume, 0.6}}},
      {"Traveler", base(2000, 60, 60, 1, 1, 0, 0, 0, 1, 3, kPowersave, 0x3F, 2, 80, 8, 8, 14, 0),
       {{p::location_mode, 0.7}}},
  };
}

// Override probabilities common to every preset. Brightness and media volume
// are the two measured values; parameters the user cannot see are rarely
// touched.
inline std::map<ParamId, double> common_override_prob() {
  namespace p = param;
  return {{p::brightness, 0.79},         {p::refresh_rate, 0.5},   {p::screen_timeout, 0.5},
          {p::dark_mode, 0.5},           {p::auto_rotation, 0.4},  {p::wifi, 0.5},
          {p::bluetooth, 0.5},           {p::nfc, 0.2},            {p::mobile_data, 0.5},
          {p::location_mode, 0.5},       {p::cpu_governor, 0.05},  {p::cpu_cores_online, 0.05},
          {p::bg_process_limit, 0.05},   {p::media_volume, 0.86},  {p::notification_volume, 0.3},
          {p::ring_volume, 0.3},         {p::alarm_volume, 0.2},   {p::auto_sync, 0.3}};
}

}  // namespace detail

inline UserProfile make_preset_profile(const detail::ProfileSeed& seed, const CapabilityProfile& caps) {
  UserProfile u;
  u.name = seed.name;
  for (AppCategory c : kBenchCategories)
    for (auto b : {BatteryBucket::high, BatteryBucket::mid, BatteryBucket::low})
      u.gt[{c, b}] = detail::derive_gt(seed.base, c, b);
  u.override_prob = detail::common_override_prob();
  for (const auto& [id, q] : seed.prob) u.override_prob[id] = q;
  for (const auto& spec : caps.parameters)
    if (spec.is_continuous()) u.tolerance[spec.id] = 0.10;
  return u;
}

inline std::vector<UserProfile> default_profiles(const CapabilityProfile& caps) {
  std::vector<UserProfile> out;
  for (const auto& s : detail::profile_seeds()) out.push_back(make_preset_profile(s, caps));
  return out;
}

// File stem for a profile name: lower case, spaces as underscores.
inline std::string profile_stem(const std::string& name) {
  std::string s;
  for (char ch : name) s += ch == ' ' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

inline ScenarioPack default_scenario_pack() {
  using C = AppCategory;
  ScenarioPack pack;
  auto task = [&](std::string id, std::string app, C cat, std::vector<ScriptStep> script) {
    pack.tasks.push_back({std::move(id), std::move(app), cat, 30, std::move(script)});
  };
  task("nav_drive", "com.maps", C::navigation,
       {{0, "turn_by_turn", "Turn left onto Main St in 200 m"},
        {15, "route_overview", "Arrive 08:52, 14 km remaining"}});
  task("nav_transit", "com.transit", C::navigation,
       {{0, "turn_by_turn", "Line 4 towards Central, 3 stops"}, {20, "route_overview", "Walk 300 m"}});
  task("video_series", "com.tube", C::video,
       {{0, "actively_watching", "Episode 3: The Harbour"}, {20, "browsing_comments", "1.2k comments"}});
  task("video_clips", "com.clips", C::video,
       {{0, "actively_watching", "Trending now"}, {10, "browsing_comments", "Reply to @sam"}});
  task("meeting_call", "com.meet", C::meeting,
       {{0, "video_call", "Weekly sync, 5 participants"}, {20, "screen_share", "Presenting slides"}});
  task("meeting_webinar", "com.webinar", C::meeting,
       {{0, "listening", "Q3 planning webinar"}, {15, "video_call", "Ask a question: call +1 415 555 0132"}});
  task("social_photos", "com.instagram", C::social,
       {{0, "browsing", "Stories from friends"}, {15, "composing", "Write a caption"}});
  task("social_chat", "com.chat", C::social,
       {{0, "messaging", "alex@example.com: see you at 7"}, {20, "browsing", "Group: Climbing club"}});
  task("music_stream", "com.music", C::music,
       {{0, "foreground_playback", "Now playing: Blue in Green"},
        {5, "background_playback", "Screen off, playing"}});
  task("music_podcast", "com.podcast", C::music,
       {{0, "background_playback", "Episode 211, 42 min left"}});
  task("feed_news", "com.news", C::feed,
       {{0, "scrolling", "Top stories"}, {20, "reading_article", "Markets close higher"}});
  task("feed_forum", "com.forum", C::feed,
       {{0, "scrolling", "Hot posts"}, {10, "reading_article", "Thread 4829173"}});
  task("reading_book", "com.books", C::reading, {{0, "reading", "Chapter 12"}});
  task("reading_articles", "com.articles", C::reading,
       {{0, "reading", "Long read: the tide tables"}, {25, "browsing", "Saved articles"}});

  pack.schedule = {{7 * 60 + 30, "nav_drive"},      {8 * 60 + 15, "feed_news"},
                   {9 * 60, "reading_articles"},    {10 * 60, "meeting_call"},
                   {12 * 60 + 30, "social_chat"},   {14 * 60, "meeting_webinar"},
                   {15 * 60, "feed_forum"},         {16 * 60, "music_stream"},
                   {17 * 60 + 15, "nav_transit"},   {18 * 60 + 30, "social_photos"},
                   {19 * 60 + 30, "video_series"},  {20 * 60 + 30, "video_clips"},
                   {21 * 60 + 30, "reading_book"},  {22 * 60 + 15, "music_podcast"}};
  return pack;
}

}  // namespace powerlens

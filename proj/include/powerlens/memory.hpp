#pragma once

// Two memory tiers. STM is session-scoped: user locks, the last state the
// system executed, and the raw event log. LPM is one persistent page per app:
// stable context rules, a candidate buffer, and a general profile. The
// extractor (`distill`) turns an immutable log snapshot into a new page.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "powerlens/device_model.hpp"

namespace powerlens {

// ---------------------------------------------------------------------------
// Context signature

enum class BatteryBucket { high, mid, low };
enum class DayClass { weekday, weekend };
enum class TimeSlot { morning, afternoon, evening, night };

inline constexpr std::string_view to_string(BatteryBucket b) {
  switch (b) {
    case BatteryBucket::high: return "high";
    case BatteryBucket::mid: return "mid";
    case BatteryBucket::low: return "low";
  }
  return "?";
}
inline constexpr std::string_view to_string(DayClass d) {
  return d == DayClass::weekday ? "weekday" : "weekend";
}
inline constexpr std::string_view to_string(TimeSlot t) {
  switch (t) {
    case TimeSlot::morning: return "morning";
    case TimeSlot::afternoon: return "afternoon";
    case TimeSlot::evening: return "evening";
    case TimeSlot::night: return "night";
  }
  return "?";
}

inline std::optional<BatteryBucket> parse_battery_bucket(std::string_view s) {
  for (auto b : {BatteryBucket::high, BatteryBucket::mid, BatteryBucket::low})
    if (to_string(b) == s) return b;
  return std::nullopt;
}
inline std::optional<DayClass> parse_day_class(std::string_view s) {
  for (auto d : {DayClass::weekday, DayClass::weekend})
    if (to_string(d) == s) return d;
  return std::nullopt;
}
inline std::optional<TimeSlot> parse_time_slot(std::string_view s) {
  for (auto t : {TimeSlot::morning, TimeSlot::afternoon, TimeSlot::evening, TimeSlot::night})
    if (to_string(t) == s) return t;
  return std::nullopt;
}

// High > 60, Mid 30..60 inclusive, Low < 30.
inline BatteryBucket bucket_of(int battery_pct) {
  if (battery_pct > 60) return BatteryBucket::high;
  if (battery_pct >= 30) return BatteryBucket::mid;
  return BatteryBucket::low;
}

// Day 0 is a Monday; days 5 and 6 of each week are the weekend.
inline DayClass day_class_of(int day) {
  int d = ((day % 7) + 7) % 7;
  return d >= 5 ? DayClass::weekend : DayClass::weekday;
}

// morning 06-12, afternoon 12-18, evening 18-23, night 23-06.
inline TimeSlot slot_of(int minute_of_day) {
  int m = ((minute_of_day % 1440) + 1440) % 1440;
  if (m >= 6 * 60 && m < 12 * 60) return TimeSlot::morning;
  if (m >= 12 * 60 && m < 18 * 60) return TimeSlot::afternoon;
  if (m >= 18 * 60 && m < 23 * 60) return TimeSlot::evening;
  return TimeSlot::night;
}

// A query signature has every field populated. A stored rule signature may
// leave sub_activity, battery, day_class or slot empty, meaning "any"; only
// generalization produces such wildcards.
struct ContextSignature {
  AppCategory app_category = AppCategory::idle;
  std::optional<std::string> sub_activity;
  std::optional<BatteryBucket> battery;
  std::optional<DayClass> day_class;
  std::optional<TimeSlot> slot;

  bool complete() const { return sub_activity && battery && day_class && slot; }
  int wildcards() const { return !sub_activity + !battery + !day_class + !slot; }

  std::string key() const {
    std::string k(to_string(app_category));
    k += '/';
    k += sub_activity ? *sub_activity : "*";
    k += '/';
    k += battery ? std::string(to_string(*battery)) : "*";
    k += '/';
    k += day_class ? std::string(to_string(*day_class)) : "*";
    k += '/';
    k += slot ? std::string(to_string(*slot)) : "*";
    return k;
  }

  friend bool operator==(const ContextSignature&, const ContextSignature&) = default;
};

inline ContextSignature make_signature(AppCategory category, std::string sub_activity,
                                       int battery_pct, SimClock clock) {
  return {category, std::move(sub_activity), bucket_of(battery_pct), day_class_of(clock.day),
          slot_of(clock.minute)};
}

// ---------------------------------------------------------------------------
// Rule fragments

enum class PrefCmp { at_least, at_most, exactly };

inline constexpr std::string_view to_string(PrefCmp c) {
  switch (c) {
    case PrefCmp::at_least: return ">=";
    case PrefCmp::at_most: return "<=";
    case PrefCmp::exactly: return "=";
  }
  return "?";
}
inline std::optional<PrefCmp> parse_pref_cmp(std::string_view s) {
  for (auto c : {PrefCmp::at_least, PrefCmp::at_most, PrefCmp::exactly})
    if (to_string(c) == s) return c;
  return std::nullopt;
}

// A learned preference on one parameter, e.g. "brightness >= 1200".
struct Preference {
  ParamId target;
  PrefCmp cmp = PrefCmp::exactly;
  Value value = 0;

  bool satisfied_by(Value v) const {
    switch (cmp) {
      case PrefCmp::at_least: return v >= value;
      case PrefCmp::at_most: return v <= value;
      case PrefCmp::exactly: return v == value;
    }
    return false;
  }
  // The value closest to `v` that satisfies the preference.
  Value enforce(Value v) const { return satisfied_by(v) ? v : value; }
  bool same_direction(const Preference& o) const { return target == o.target && cmp == o.cmp; }

  friend bool operator==(const Preference&, const Preference&) = default;
};

// A rule's policy fragment: at most one preference per parameter, sorted by target.
using Fragment = std::vector<Preference>;

inline void put_preference(Fragment& f, const Preference& p) {
  auto it = std::find_if(f.begin(), f.end(), [&](const Preference& x) { return x.target == p.target; });
  if (it != f.end())
    *it = p;
  else
    f.push_back(p);
  std::sort(f.begin(), f.end(), [](const auto& a, const auto& b) { return a.target < b.target; });
}

struct CandidateRule {
  ContextSignature signature;
  Preference fragment;
  double confidence = 0.5;
  int last_update_day = 0;
  int observations_today = 0;  // 0 or 1; refers to last_update_day

  std::string key() const { return signature.key() + "|" + fragment.target; }
};

struct ContextRule {
  ContextSignature signature;
  Fragment fragment;
  double confidence = 0.8;
  int last_update_day = 0;

  std::string key() const { return signature.key(); }
};

// ---------------------------------------------------------------------------
// Confidence

inline constexpr double kDecay = 0.93;
inline constexpr double kRewardStrong = 0.2;
inline constexpr double kRewardWeak = 0.08;
inline constexpr double kRewardConflict = -0.5;
inline constexpr double kSeedConfidence = 0.5;
inline constexpr double kPromoteThreshold = 0.8;
inline constexpr double kEvictThreshold = 0.1;

enum class Reward { strong, weak, conflict, none };

inline constexpr double reward_value(Reward r) {
  switch (r) {
    case Reward::strong: return kRewardStrong;
    case Reward::weak: return kRewardWeak;
    case Reward::conflict: return kRewardConflict;
    case Reward::none: return 0.0;
  }
  return 0.0;
}

// c_new = clamp(c_old * 0.93^dt + r, 0, 1)
inline double update_confidence(double c_old, int dt_days, Reward r) {
  if (dt_days < 0) throw InvalidValueError("negative elapsed days");
  double c = c_old * std::pow(kDecay, dt_days) + reward_value(r);
  return std::clamp(c, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Events and STM

enum class Strength { strong, weak };

inline constexpr std::string_view to_string(Strength s) { return s == Strength::strong ? "STRONG" : "WEAK"; }

struct FeedbackEvent {
  SimClock time;
  ParamId param;
  Value old_value = 0;
  Value new_value = 0;
  Strength strength = Strength::strong;
  ContextSignature signature;
  std::string app;
  int session = 0;
};

// One executed policy (an AUTO record).
struct AutoRecord {
  SimClock time;
  std::string app;
  int session = 0;
  ContextSignature signature;
  Policy executed;
  std::map<ParamId, std::pair<Value, Value>> changes;  // param -> (before, after)
  std::vector<std::string> matched_rules;               // ContextRule::key() of rules applied
};

// Device values observed when a session closed.
struct SessionEnd {
  SimClock time;
  std::string app;
  int session = 0;
  std::map<ParamId, Value> values;
  bool had_strong = false;
};

using LogEntry = std::variant<FeedbackEvent, AutoRecord, SessionEnd>;
using EventLog = std::vector<LogEntry>;

struct Override {
  ParamId param;
  Value old_value;
  Value new_value;
  friend bool operator==(const Override&, const Override&) = default;
};

// {p : cur(p) != prev(p) and p not in attributed}, in parameter order.
inline std::vector<Override> state_diff(const DeviceState& prev, const DeviceState& cur,
                                        const std::set<ParamId>& attributed) {
  if (prev.values.size() != cur.values.size())
    throw ProfileMismatchError("states cover different parameter sets");
  std::vector<Override> out;
  auto a = prev.values.begin();
  auto b = cur.values.begin();
  for (; a != prev.values.end(); ++a, ++b) {
    if (a->first != b->first) throw ProfileMismatchError("states cover different parameter sets");
    if (a->second != b->second && !attributed.count(a->first))
      out.push_back({a->first, a->second, b->second});
  }
  return out;
}

class ShortTermMemory {
 public:
  const std::map<ParamId, Value>& locks() const { return locks_; }
  const std::optional<DeviceState>& last_known_state() const { return last_known_; }
  const EventLog& log() const { return log_; }
  const std::string& session_app() const { return session_app_; }
  int session_id() const { return session_id_; }
  bool session_open() const { return open_; }

  // Closes the open session (if any) and opens one for `app`. Closing emits a
  // WEAK event for every parameter the system changed during the session and
  // the user left alone, then a SessionEnd snapshot; locks are cleared.
  void begin_session(const std::string& app, SimClock now) {
    end_session(now);
    session_app_ = app;
    ++session_id_;
    open_ = true;
  }

  void end_session(SimClock now) {
    if (!open_) return;
    open_ = false;
    std::map<ParamId, FeedbackEvent> uncontested;
    std::set<ParamId> overridden;
    bool had_strong = false;
    for (std::size_t i = session_start_; i < log_.size(); ++i) {
      if (const auto* e = std::get_if<FeedbackEvent>(&log_[i])) {
        if (e->strength == Strength::strong) {
          overridden.insert(e->param);
          had_strong = true;
        }
      } else if (const auto* r = std::get_if<AutoRecord>(&log_[i])) {
        for (const auto& [p, ch] : r->changes) {
          auto it = uncontested.find(p);
          if (it == uncontested.end())
            uncontested[p] = {r->time, p, ch.first, ch.second, Strength::weak, r->signature,
                              r->app, r->session};
          else {
            it->second.new_value = ch.second;
            it->second.time = r->time;
            it->second.signature = r->signature;
          }
        }
      }
    }
    for (auto& [p, e] : uncontested)
      if (!overridden.count(p) && e.old_value != e.new_value) log_.push_back(e);
    SessionEnd end{now, session_app_, session_id_, {}, had_strong};
    if (last_known_) end.values = last_known_->values;
    log_.push_back(std::move(end));
    locks_.clear();
    session_start_ = log_.size();
  }

  // Lock the parameter at the user's value and log a STRONG event.
  void record_override(const Override& o, const ContextSignature& sig, SimClock now) {
    locks_[o.param] = o.new_value;
    log_.push_back(FeedbackEvent{now, o.param, o.old_value, o.new_value, Strength::strong, sig,
                                 session_app_, session_id_});
  }

  // Execution phase only.
  void record_execution(AutoRecord record, DeviceState state) {
    log_.push_back(std::move(record));
    last_known_ = std::move(state);
  }

  void set_last_known_state(DeviceState s) { last_known_ = std::move(s); }

  // Hands the log to the extractor and starts a fresh one. The open session's
  // entries stay so that its close still sees them.
  EventLog take_log() {
    EventLog out(log_.begin(), log_.begin() + static_cast<std::ptrdiff_t>(session_start_));
    log_.erase(log_.begin(), log_.begin() + static_cast<std::ptrdiff_t>(session_start_));
    session_start_ = 0;
    return out;
  }

 private:
  std::map<ParamId, Value> locks_;
  std::optional<DeviceState> last_known_;
  EventLog log_;
  std::size_t session_start_ = 0;
  std::string session_app_;
  int session_id_ = 0;
  bool open_ = false;
};

// ---------------------------------------------------------------------------
// LPM page and retrieval

enum class RetrievalLevel { exact, relax_time, relax_time_battery, general };

inline constexpr std::string_view to_string(RetrievalLevel l) {
  switch (l) {
    case RetrievalLevel::exact: return "exact";
    case RetrievalLevel::relax_time: return "relax_time";
    case RetrievalLevel::relax_time_battery: return "relax_time_battery";
    case RetrievalLevel::general: return "general";
  }
  return "?";
}

struct Retrieval {
  std::vector<ContextRule> rules;
  RetrievalLevel level = RetrievalLevel::general;
};

class LpmPage {
 public:
  std::string app;
  std::vector<CandidateRule> candidates;
  std::map<ParamId, Value> general;
  std::vector<FeedbackEvent> pending;  // STRONG events the analyzer could not handle yet
  int version = 0;

  const std::vector<ContextRule>& rules() const { return rules_; }

  const ContextRule* find_rule(const ContextSignature& sig) const {
    for (const auto& r : rules_)
      if (r.signature == sig) return &r;
    return nullptr;
  }

  // Replacement semantics: at most one rule per exact signature.
  void put_rule(ContextRule r) {
    for (auto& x : rules_) {
      if (x.signature == r.signature) {
        x = std::move(r);
        reindex();
        return;
      }
    }
    rules_.push_back(std::move(r));
    reindex();
  }

  void set_rules(std::vector<ContextRule> rules) {
    rules_.clear();
    for (auto& r : rules) put_rule(std::move(r));
    reindex();
  }

  template <class Pred>
  void erase_rules_if(Pred pred) {
    rules_.erase(std::remove_if(rules_.begin(), rules_.end(), pred), rules_.end());
    reindex();
  }

  ContextRule* mutable_rule(const std::string& key) {
    for (auto& r : rules_)
      if (r.key() == key) return &r;
    return nullptr;
  }

  // Exact index first, then the index without time period, then without time
  // period and battery bucket, then the general profile. Wildcard fields of
  // a stored signature match anything.
  Retrieval retrieve(const ContextSignature& q) const {
    if (!q.complete()) throw InvalidValueError("retrieval needs a complete signature");
    const std::string any = "*";
    const std::string cat(to_string(q.app_category));
    const std::array<std::string, 2> subs{*q.sub_activity, any};
    const std::array<std::string, 2> bats{std::string(to_string(*q.battery)), any};
    const std::array<std::string, 2> days{std::string(to_string(*q.day_class)), any};
    const std::array<std::string, 2> slots{std::string(to_string(*q.slot)), any};

    Retrieval out;
    std::set<std::size_t> hits;
    for (const auto& s : subs)
      for (const auto& b : bats)
        for (const auto& d : days)
          for (const auto& t : slots) probe(exact_, join({cat, s, b, d, t}), hits);
    if (!hits.empty()) return collect(hits, RetrievalLevel::exact);
    for (const auto& s : subs)
      for (const auto& b : bats) probe(no_time_, join({cat, s, b}), hits);
    if (!hits.empty()) return collect(hits, RetrievalLevel::relax_time);
    for (const auto& s : subs) probe(no_time_battery_, join({cat, s}), hits);
    if (!hits.empty()) return collect(hits, RetrievalLevel::relax_time_battery);
    return out;
  }

 private:
  std::vector<ContextRule> rules_;
  std::unordered_map<std::string, std::vector<std::size_t>> exact_, no_time_, no_time_battery_;

  static std::string join(std::initializer_list<std::string> parts) {
    std::string k;
    for (const auto& p : parts) {
      if (!k.empty()) k += '/';
      k += p;
    }
    return k;
  }

  static void probe(const std::unordered_map<std::string, std::vector<std::size_t>>& idx,
                    const std::string& key, std::set<std::size_t>& hits) {
    auto it = idx.find(key);
    if (it != idx.end()) hits.insert(it->second.begin(), it->second.end());
  }

  Retrieval collect(const std::set<std::size_t>& hits, RetrievalLevel level) const {
    Retrieval r;
    r.level = level;
    for (auto i : hits) r.rules.push_back(rules_[i]);
    return r;
  }

  void reindex() {
    exact_.clear();
    no_time_.clear();
    no_time_battery_.clear();
    for (std::size_t i = 0; i < rules_.size(); ++i) {
      const auto& s = rules_[i].signature;
      const std::string cat(to_string(s.app_category));
      const std::string sub = s.sub_activity ? *s.sub_activity : "*";
      const std::string bat = s.battery ? std::string(to_string(*s.battery)) : "*";
      const std::string day = s.day_class ? std::string(to_string(*s.day_class)) : "*";
      const std::string slot = s.slot ? std::string(to_string(*s.slot)) : "*";
      exact_[join({cat, sub, bat, day, slot})].push_back(i);
      no_time_[join({cat, sub, bat})].push_back(i);
      no_time_battery_[join({cat, sub})].push_back(i);
    }
  }
};

// Per parameter, the preference of the most specific rule (fewest
// wildcards), ties broken by higher confidence then signature key.
inline std::map<ParamId, std::pair<Preference, std::string>> resolve_preferences(
    const std::vector<ContextRule>& rules) {
  std::vector<const ContextRule*> order;
  for (const auto& r : rules) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](const ContextRule* a, const ContextRule* b) {
    if (a->signature.wildcards() != b->signature.wildcards())
      return a->signature.wildcards() < b->signature.wildcards();
    if (a->confidence != b->confidence) return a->confidence > b->confidence;
    return a->key() < b->key();
  });
  std::map<ParamId, std::pair<Preference, std::string>> out;
  for (const auto* r : order)
    for (const auto& p : r->fragment) out.emplace(p.target, std::make_pair(p, r->key()));
  return out;
}

// ---------------------------------------------------------------------------
// Intent analysis

struct CandidateProposal {
  ContextSignature signature;
  Preference fragment;
};

class IntentAnalyzer {
 public:
  virtual ~IntentAnalyzer() = default;
  // Throws BackendError when the analysis cannot be produced.
  virtual CandidateProposal analyze(const FeedbackEvent& e) = 0;
  virtual bool approve_generalization(const ContextRule&, const ContextRule&, const ContextRule&) {
    return true;
  }
};

// A change upward becomes "keep at least the new value", downward "keep at
// most the new value"; the signature is the event's.
class HeuristicAnalyzer : public IntentAnalyzer {
 public:
  CandidateProposal analyze(const FeedbackEvent& e) override {
    PrefCmp cmp = e.new_value > e.old_value   ? PrefCmp::at_least
                  : e.new_value < e.old_value ? PrefCmp::at_most
                                              : PrefCmp::exactly;
    return {e.signature, {e.param, cmp, e.new_value}};
  }
};

// ---------------------------------------------------------------------------
// Generalization

namespace detail {

// Index of the single differing field (0 sub, 1 battery, 2 day_class, 3 slot),
// or -1 when the signatures differ in zero or several fields or in category.
inline int single_difference(const ContextSignature& a, const ContextSignature& b) {
  if (a.app_category != b.app_category) return -1;
  int diff = -1, n = 0;
  if (a.sub_activity != b.sub_activity) diff = 0, ++n;
  if (a.battery != b.battery) diff = 1, ++n;
  if (a.day_class != b.day_class) diff = 2, ++n;
  if (a.slot != b.slot) diff = 3, ++n;
  return n == 1 ? diff : -1;
}

}  // namespace detail

// Merges the first pair of rules with equal fragments whose signatures differ
// in exactly one field; that field becomes a wildcard. Confidence is the
// smaller of the two.
inline std::optional<ContextRule> generalize(const std::vector<ContextRule>& rules,
                                             IntentAnalyzer& analyzer) {
  for (std::size_t i = 0; i < rules.size(); ++i) {
    for (std::size_t j = i + 1; j < rules.size(); ++j) {
      const auto& a = rules[i];
      const auto& b = rules[j];
      if (a.fragment != b.fragment) continue;
      int field = detail::single_difference(a.signature, b.signature);
      if (field < 0) continue;
      ContextRule merged = a;
      switch (field) {
        case 0: merged.signature.sub_activity.reset(); break;
        case 1: merged.signature.battery.reset(); break;
        case 2: merged.signature.day_class.reset(); break;
        case 3: merged.signature.slot.reset(); break;
      }
      merged.confidence = std::min(a.confidence, b.confidence);
      merged.last_update_day = std::max(a.last_update_day, b.last_update_day);
      if (analyzer.approve_generalization(a, b, merged)) return merged;
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Distillation

struct DistillConfig {
  double promote_threshold = kPromoteThreshold;
  double evict_threshold = kEvictThreshold;
  bool generalize = true;
};

struct DistillStats {
  int promoted = 0;
  int evicted_candidates = 0;
  int evicted_rules = 0;
  int seeded = 0;
  int generalized = 0;
};

namespace detail {

inline int reward_rank(Reward r) {
  switch (r) {
    case Reward::strong: return 3;
    case Reward::weak: return 2;
    case Reward::conflict: return 1;
    case Reward::none: return 0;
  }
  return 0;
}

struct Observation {
  int day;
  std::size_t seq;  // log order, for deterministic tie-breaks
  Strength strength;
  CandidateProposal proposal;
};

}  // namespace detail

// One extractor run over a log snapshot for `page.app`.
//  - Sessions without STRONG events give a weak reward to every stable rule
//    their cycles applied.
//  - STRONG events go through the analyzer. A new (signature, parameter) key
//    seeds a candidate at 0.5; an existing candidate gets a strong reward when
//    the direction agrees and a conflict penalty when it does not.
//  - WEAK events reward an existing candidate whose preference the system's
//    value satisfies. They never seed.
//  - Each key takes at most one reward per day, the strongest.
//  - Untouched candidates and rules decay to `today`. Candidates at or above
//    the promotion threshold become stable, merged into the rule of the same
//    exact signature (replacing any preference on the same parameter);
//    anything below the eviction threshold is dropped.
inline LpmPage distill(const EventLog& snapshot, const LpmPage& page, IntentAnalyzer& analyzer,
                       int today, const DistillConfig& cfg = {}, DistillStats* stats = nullptr) {
  DistillStats st;
  LpmPage out = page;
  out.pending.clear();

  // Session summaries.
  std::map<int, bool> session_strong;
  for (const auto& e : snapshot) {
    if (const auto* f = std::get_if<FeedbackEvent>(&e)) {
      if (f->app != page.app) continue;
      if (f->strength == Strength::strong) session_strong[f->session] = true;
      else session_strong.emplace(f->session, false);
    } else if (const auto* r = std::get_if<AutoRecord>(&e)) {
      if (r->app == page.app) session_strong.emplace(r->session, false);
    }
  }

  // Stable-rule weak rewards, one per rule per day.
  std::map<std::string, std::set<int>> rule_days;
  for (const auto& e : snapshot) {
    const auto* r = std::get_if<AutoRecord>(&e);
    if (!r || r->app != page.app || session_strong[r->session]) continue;
    for (const auto& k : r->matched_rules) rule_days[k].insert(r->time.day);
  }

  // Candidate observations.
  std::map<std::string, std::vector<detail::Observation>> obs;
  std::size_t seq = 0;
  auto observe = [&](const FeedbackEvent& f) {
    try {
      CandidateProposal cp = analyzer.analyze(f);
      std::string key = cp.signature.key() + "|" + cp.fragment.target;
      obs[key].push_back({f.time.day, seq++, f.strength, std::move(cp)});
    } catch (const BackendError&) {
      if (f.strength == Strength::strong) out.pending.push_back(f);
    }
  };
  for (const auto& f : page.pending) observe(f);
  for (const auto& e : snapshot) {
    const auto* f = std::get_if<FeedbackEvent>(&e);
    if (f && f->app == page.app) observe(*f);
  }

  std::map<std::string, std::size_t> cand_index;
  for (std::size_t i = 0; i < out.candidates.size(); ++i) cand_index[out.candidates[i].key()] = i;

  for (auto& [key, list] : obs) {
    std::stable_sort(list.begin(), list.end(),
                     [](const auto& a, const auto& b) { return a.day < b.day || (a.day == b.day && a.seq < b.seq); });
    std::size_t i = 0;
    while (i < list.size()) {
      const int day = list[i].day;
      std::size_t j = i;
      while (j < list.size() && list[j].day == day) ++j;
      auto it = cand_index.find(key);
      if (it == cand_index.end()) {
        // Seed from the day's latest STRONG observation, if any.
        const detail::Observation* seed = nullptr;
        for (std::size_t k = i; k < j; ++k)
          if (list[k].strength == Strength::strong) seed = &list[k];
        if (seed) {
          CandidateRule c{seed->proposal.signature, seed->proposal.fragment, kSeedConfidence, day, 1};
          cand_index[key] = out.candidates.size();
          out.candidates.push_back(std::move(c));
          ++st.seeded;
        }
      } else {
        CandidateRule& c = out.candidates[it->second];
        if (c.last_update_day == day && c.observations_today > 0) {
          i = j;
          continue;
        }
        Reward best = Reward::none;
        const detail::Observation* best_obs = nullptr;
        for (std::size_t k = i; k < j; ++k) {
          const auto& o = list[k];
          Reward r;
          if (o.strength == Strength::weak)
            r = c.fragment.satisfied_by(o.proposal.fragment.value) ? Reward::weak : Reward::none;
          else
            r = o.proposal.fragment.same_direction(c.fragment) ? Reward::strong : Reward::conflict;
          if (detail::reward_rank(r) >= detail::reward_rank(best) && r != Reward::none) {
            best = r;
            best_obs = &o;
          }
        }
        if (best != Reward::none && day >= c.last_update_day) {
          c.confidence = update_confidence(c.confidence, day - c.last_update_day, best);
          c.last_update_day = day;
          c.observations_today = 1;
          if (best == Reward::strong) c.fragment = best_obs->proposal.fragment;
        }
      }
      i = j;
    }
  }

  // Stable rules: weak rewards by day, then decay to today.
  std::vector<ContextRule> rules = out.rules();
  for (auto& r : rules) {
    auto it = rule_days.find(r.key());
    if (it != rule_days.end()) {
      for (int day : it->second) {
        if (day <= r.last_update_day) continue;
        r.confidence = update_confidence(r.confidence, day - r.last_update_day, Reward::weak);
        r.last_update_day = day;
      }
    }
    if (today > r.last_update_day) {
      r.confidence = update_confidence(r.confidence, today - r.last_update_day, Reward::none);
      r.last_update_day = today;
    }
  }
  for (auto& c : out.candidates) {
    if (today > c.last_update_day) {
      c.confidence = update_confidence(c.confidence, today - c.last_update_day, Reward::none);
      c.last_update_day = today;
      c.observations_today = 0;
    }
  }

  // Promotion, most confident first so that ties resolve deterministically.
  std::vector<CandidateRule> keep;
  std::vector<CandidateRule> promote;
  for (auto& c : out.candidates) {
    if (c.confidence >= cfg.promote_threshold)
      promote.push_back(std::move(c));
    else if (c.confidence < cfg.evict_threshold)
      ++st.evicted_candidates;
    else
      keep.push_back(std::move(c));
  }
  std::sort(promote.begin(), promote.end(), [](const auto& a, const auto& b) { return a.key() < b.key(); });
  for (auto& c : promote) {
    auto it = std::find_if(rules.begin(), rules.end(),
                           [&](const ContextRule& r) { return r.signature == c.signature; });
    if (it == rules.end()) {
      rules.push_back({c.signature, {c.fragment}, c.confidence, c.last_update_day});
    } else {
      put_preference(it->fragment, c.fragment);
      it->confidence = c.confidence;
      it->last_update_day = c.last_update_day;
    }
    ++st.promoted;
  }
  out.candidates = std::move(keep);

  const auto before = rules.size();
  rules.erase(std::remove_if(rules.begin(), rules.end(),
                             [&](const ContextRule& r) { return r.confidence < cfg.evict_threshold; }),
              rules.end());
  st.evicted_rules = static_cast<int>(before - rules.size());

  if (cfg.generalize && st.promoted > 0) {
    while (auto merged = generalize(rules, analyzer)) {
      // Drop the two inputs: the rules with the merged fragment that the
      // merged signature covers in exactly the generalized field.
      std::vector<ContextRule> next;
      int removed = 0;
      for (auto& r : rules) {
        bool input = removed < 2 && r.fragment == merged->fragment &&
                     detail::single_difference(r.signature, merged->signature) >= 0;
        if (input) ++removed;
        else next.push_back(std::move(r));
      }
      auto same = std::find_if(next.begin(), next.end(),
                               [&](const ContextRule& r) { return r.signature == merged->signature; });
      if (same != next.end())
        *same = *merged;
      else
        next.push_back(*merged);
      rules = std::move(next);
      ++st.generalized;
    }
  }

  std::sort(rules.begin(), rules.end(), [](const auto& a, const auto& b) { return a.key() < b.key(); });
  std::sort(out.candidates.begin(), out.candidates.end(),
            [](const auto& a, const auto& b) { return a.key() < b.key(); });
  out.set_rules(std::move(rules));
  ++out.version;
  if (stats) *stats = st;
  return out;
}

// Per parameter: mode of observed session-end values for discrete, binary
// and bitmask parameters (ties to the lower value); lower median for
// continuous ones. Parameters never observed keep `prior`.
inline std::map<ParamId, Value> aggregate_general_profile(
    const CapabilityProfile& profile, const std::map<ParamId, Value>& prior,
    const std::vector<SessionEnd>& observations) {
  std::map<ParamId, Value> out = prior;
  for (const auto& spec : profile.parameters) {
    std::vector<Value> seen;
    for (const auto& o : observations) {
      auto it = o.values.find(spec.id);
      if (it != o.values.end()) seen.push_back(it->second);
    }
    if (seen.empty()) continue;
    std::sort(seen.begin(), seen.end());
    if (spec.is_continuous()) {
      out[spec.id] = seen[(seen.size() - 1) / 2];
    } else {
      Value best = seen.front();
      std::size_t best_n = 0;
      for (std::size_t i = 0; i < seen.size();) {
        std::size_t j = i;
        while (j < seen.size() && seen[j] == seen[i]) ++j;
        if (j - i > best_n) {
          best_n = j - i;
          best = seen[i];
        }
        i = j;
      }
      out[spec.id] = best;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON and persistence

inline Json to_json(const ContextSignature& s) {
  return Json{{"app_category", std::string(to_string(s.app_category))},
              {"sub_activity", s.sub_activity ? *s.sub_activity : "*"},
              {"battery", s.battery ? std::string(to_string(*s.battery)) : "*"},
              {"day_class", s.day_class ? std::string(to_string(*s.day_class)) : "*"},
              {"slot", s.slot ? std::string(to_string(*s.slot)) : "*"}};
}

inline ContextSignature signature_from_json(const Json& j, const std::string& path) {
  using namespace detail;
  ContextSignature s;
  auto cat = parse_app_category(require_string(j, "app_category", path));
  if (!cat) throw SchemaError(path + ".app_category", "unknown category");
  s.app_category = *cat;
  auto field = [&](const char* name, auto parse, auto& slot) {
    std::string v = require_string(j, name, path);
    if (v == "*") return;
    auto parsed = parse(v);
    if (!parsed) throw SchemaError(path + "." + name, "unknown value " + v);
    slot = *parsed;
  };
  std::string sub = require_string(j, "sub_activity", path);
  if (sub != "*") s.sub_activity = sub;
  field("battery", parse_battery_bucket, s.battery);
  field("day_class", parse_day_class, s.day_class);
  field("slot", parse_time_slot, s.slot);
  return s;
}

inline Json to_json(const Preference& p) {
  return Json{{"target", p.target}, {"cmp", std::string(to_string(p.cmp))}, {"value", p.value}};
}

inline Preference preference_from_json(const Json& j, const std::string& path) {
  using namespace detail;
  Preference p;
  p.target = require_string(j, "target", path);
  auto cmp = parse_pref_cmp(require_string(j, "cmp", path));
  if (!cmp) throw SchemaError(path + ".cmp", "unknown comparison");
  p.cmp = *cmp;
  p.value = static_cast<Value>(require_int(j, "value", path));
  return p;
}

inline Json to_json(const FeedbackEvent& e) {
  return Json{{"day", e.time.day},
              {"minute", e.time.minute},
              {"param", e.param},
              {"old", e.old_value},
              {"new", e.new_value},
              {"strength", std::string(to_string(e.strength))},
              {"signature", to_json(e.signature)},
              {"app", e.app},
              {"session", e.session}};
}

inline FeedbackEvent feedback_event_from_json(const Json& j, const std::string& path) {
  using namespace detail;
  FeedbackEvent e;
  e.time.day = static_cast<int>(require_int(j, "day", path));
  e.time.minute = static_cast<int>(require_int(j, "minute", path));
  e.param = require_string(j, "param", path);
  e.old_value = static_cast<Value>(require_int(j, "old", path));
  e.new_value = static_cast<Value>(require_int(j, "new", path));
  std::string s = require_string(j, "strength", path);
  if (s != "STRONG" && s != "WEAK") throw SchemaError(path + ".strength", "unknown strength");
  e.strength = s == "STRONG" ? Strength::strong : Strength::weak;
  e.signature = signature_from_json(require(j, "signature", path), path + ".signature");
  e.app = require_string(j, "app", path);
  e.session = static_cast<int>(require_int(j, "session", path));
  return e;
}

inline Json to_json(const LpmPage& page) {
  Json rules = Json::array();
  for (const auto& r : page.rules()) {
    Json frag = Json::array();
    for (const auto& p : r.fragment) frag.push_back(to_json(p));
    rules.push_back({{"signature", to_json(r.signature)},
                     {"fragment", frag},
                     {"confidence", r.confidence},
                     {"last_update_day", r.last_update_day}});
  }
  Json cands = Json::array();
  for (const auto& c : page.candidates)
    cands.push_back({{"signature", to_json(c.signature)},
                     {"fragment", to_json(c.fragment)},
                     {"confidence", c.confidence},
                     {"last_update_day", c.last_update_day},
                     {"observations_today", c.observations_today}});
  Json pending = Json::array();
  for (const auto& e : page.pending) pending.push_back(to_json(e));
  return Json{{"app", page.app},     {"rules", rules},     {"candidates", cands},
              {"general", page.general}, {"pending", pending}, {"version", page.version}};
}

inline LpmPage page_from_json(const Json& j, const std::string& path = "$") {
  using namespace detail;
  LpmPage page;
  page.app = require_string(j, "app", path);
  page.version = static_cast<int>(require_int(j, "version", path));
  std::vector<ContextRule> rules;
  const Json& rs = require_array(j, "rules", path);
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const std::string p = index_path(path + ".rules", i);
    ContextRule r;
    r.signature = signature_from_json(require(rs[i], "signature", p), p + ".signature");
    const Json& frag = require_array(rs[i], "fragment", p);
    for (std::size_t k = 0; k < frag.size(); ++k)
      put_preference(r.fragment, preference_from_json(frag[k], index_path(p + ".fragment", k)));
    r.confidence = require_number(rs[i], "confidence", p);
    r.last_update_day = static_cast<int>(require_int(rs[i], "last_update_day", p));
    if (r.confidence < 0 || r.confidence > 1) throw SchemaError(p + ".confidence", "outside [0,1]");
    rules.push_back(std::move(r));
  }
  page.set_rules(std::move(rules));
  const Json& cs = require_array(j, "candidates", path);
  for (std::size_t i = 0; i < cs.size(); ++i) {
    const std::string p = index_path(path + ".candidates", i);
    CandidateRule c;
    c.signature = signature_from_json(require(cs[i], "signature", p), p + ".signature");
    c.fragment = preference_from_json(require(cs[i], "fragment", p), p + ".fragment");
    c.confidence = require_number(cs[i], "confidence", p);
    c.last_update_day = static_cast<int>(require_int(cs[i], "last_update_day", p));
    c.observations_today = static_cast<int>(require_int(cs[i], "observations_today", p));
    if (c.confidence < 0 || c.confidence > 1) throw SchemaError(p + ".confidence", "outside [0,1]");
    if (c.observations_today < 0 || c.observations_today > 1)
      throw SchemaError(p + ".observations_today", "must be 0 or 1");
    page.candidates.push_back(std::move(c));
  }
  const Json& g = require(j, "general", path);
  if (!g.is_object()) throw SchemaError(path + ".general", "expected object");
  for (auto it = g.begin(); it != g.end(); ++it) {
    if (!it.value().is_number_integer()) throw SchemaError(path + ".general." + it.key(), "expected integer");
    page.general[it.key()] = it.value().get<Value>();
  }
  if (j.contains("pending")) {
    const Json& ps = require_array(j, "pending", path);
    for (std::size_t i = 0; i < ps.size(); ++i)
      page.pending.push_back(feedback_event_from_json(ps[i], index_path(path + ".pending", i)));
  }
  return page;
}

inline std::string page_file(const std::string& app, const std::string& root) {
  return (std::filesystem::path(root) / (app + ".json")).string();
}

// Writes through a temporary file and a rename, so a reader sees either the
// old page or the new one.
inline void persist_page(const LpmPage& page, const std::string& root) {
  std::filesystem::create_directories(root);
  const std::string path = page_file(page.app, root);
  const std::string tmp = path + ".tmp";
  write_text_file(tmp, canonical_dump(to_json(page)));
  std::filesystem::rename(tmp, path);
}

// Missing file: empty page. Unreadable or malformed file: CorruptFileError;
// the file is left as it is.
inline LpmPage load_page(const std::string& app, const std::string& root) {
  const std::string path = page_file(app, root);
  if (!std::filesystem::exists(path)) {
    LpmPage p;
    p.app = app;
    return p;
  }
  try {
    LpmPage p = page_from_json(read_json_file(path));
    if (p.app != app) throw SchemaError("$.app", "page belongs to " + p.app);
    return p;
  } catch (const Error& e) {
    throw CorruptFileError(path + ": " + e.what());
  } catch (const Json::exception& e) {
    throw CorruptFileError(path + ": " + e.what());
  }
}

// Event-log CSV: timestamp, param, old, new, strength, signature fields.
inline std::string event_log_csv(const EventLog& log) {
  std::string out = "day,minute,app,session,param,old,new,strength,category,sub_activity,battery,day_class,slot\n";
  for (const auto& e : log) {
    const auto* f = std::get_if<FeedbackEvent>(&e);
    if (!f) continue;
    const auto& s = f->signature;
    out += std::to_string(f->time.day) + "," + std::to_string(f->time.minute) + "," + f->app + "," +
           std::to_string(f->session) + "," + f->param + "," + std::to_string(f->old_value) + "," +
           std::to_string(f->new_value) + "," + std::string(to_string(f->strength)) + "," +
           std::string(to_string(s.app_category)) + "," + (s.sub_activity ? *s.sub_activity : "*") +
           "," + (s.battery ? std::string(to_string(*s.battery)) : "*") + "," +
           (s.day_class ? std::string(to_string(*s.day_class)) : "*") + "," +
           (s.slot ? std::string(to_string(*s.slot)) : "*") + "\n";
  }
  return out;
}

}  // namespace powerlens

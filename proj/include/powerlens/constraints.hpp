#pragma once

// Safety constraints of the form  condition -> [policy] predicate, and the
// verifier that corrects or rejects proposed actions so that the post-state
// of every executed policy satisfies them.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "powerlens/device_model.hpp"

namespace powerlens {

enum class BatteryCmp { lt, le, gt, ge };
enum class PredCmp { ge, le, eq, in };
enum class RuleKind { hard, contextual };
enum class CorrectionStrategy { clamp_to_boundary, reject_action };

inline constexpr std::string_view to_string(BatteryCmp c) {
  switch (c) {
    case BatteryCmp::lt: return "<";
    case BatteryCmp::le: return "<=";
    case BatteryCmp::gt: return ">";
    case BatteryCmp::ge: return ">=";
  }
  return "?";
}
inline constexpr std::string_view to_string(PredCmp c) {
  switch (c) {
    case PredCmp::ge: return ">=";
    case PredCmp::le: return "<=";
    case PredCmp::eq: return "=";
    case PredCmp::in: return "in";
  }
  return "?";
}
inline constexpr std::string_view to_string(RuleKind k) {
  return k == RuleKind::hard ? "hard" : "contextual";
}
inline constexpr std::string_view to_string(CorrectionStrategy s) {
  return s == CorrectionStrategy::clamp_to_boundary ? "clamp_to_boundary" : "reject_action";
}

// What the verifier knows about the current situation.
struct VerifyContext {
  AppCategory app_category = AppCategory::idle;
  AppCategory activity_type = AppCategory::idle;
  int battery_pct = 100;
};

struct Atom {
  enum class Kind { app_category, activity_type, battery, always_true };
  Kind kind = Kind::always_true;
  std::set<AppCategory> members;
  BatteryCmp cmp = BatteryCmp::lt;
  int threshold = 0;

  bool holds(const VerifyContext& ctx) const {
    switch (kind) {
      case Kind::app_category: return members.count(ctx.app_category) > 0;
      case Kind::activity_type: return members.count(ctx.activity_type) > 0;
      case Kind::battery:
        switch (cmp) {
          case BatteryCmp::lt: return ctx.battery_pct < threshold;
          case BatteryCmp::le: return ctx.battery_pct <= threshold;
          case BatteryCmp::gt: return ctx.battery_pct > threshold;
          case BatteryCmp::ge: return ctx.battery_pct >= threshold;
        }
        return false;
      case Kind::always_true: return true;
    }
    return false;
  }
};

// Conjunction of atoms.
struct Condition {
  std::vector<Atom> atoms;

  bool holds(const VerifyContext& ctx) const {
    return std::all_of(atoms.begin(), atoms.end(), [&](const Atom& a) { return a.holds(ctx); });
  }
  bool has(Atom::Kind k) const {
    return std::any_of(atoms.begin(), atoms.end(), [&](const Atom& a) { return a.kind == k; });
  }
};

// One comparison on one parameter.
struct Bound {
  ParamId target;
  PredCmp cmp = PredCmp::ge;
  std::vector<Value> bound;  // one value, or the member set for `in`

  bool holds(Value v) const {
    switch (cmp) {
      case PredCmp::ge: return v >= bound.front();
      case PredCmp::le: return v <= bound.front();
      case PredCmp::eq: return v == bound.front();
      case PredCmp::in: return std::find(bound.begin(), bound.end(), v) != bound.end();
    }
    return false;
  }
};

// Post-state predicate. Usually a single bound; several alternatives form a
// disjunction ("mobile data on OR wifi on").
struct StatePredicate {
  std::vector<Bound> any_of;

  bool holds(const DeviceState& s) const {
    return std::any_of(any_of.begin(), any_of.end(),
                       [&](const Bound& b) { return b.holds(s.at(b.target)); });
  }
  bool single() const { return any_of.size() == 1; }
};

struct ConstraintRule {
  std::string id;
  RuleKind kind = RuleKind::hard;
  Condition condition;
  StatePredicate predicate;
  CorrectionStrategy strategy = CorrectionStrategy::clamp_to_boundary;
};

using ConstraintSet = std::vector<ConstraintRule>;

struct Verdict {
  enum class Kind { approved, corrected, rejected };
  Kind kind = Kind::approved;
  ParamId target;
  std::optional<Value> old_value;
  std::optional<Value> new_value;
  std::string rule_id;
  bool lock_conflict = false;  // a hard rule overrode a user lock
};

struct Injection {
  Action action;
  std::string rule_id;
};

struct VerificationReport {
  std::vector<Verdict> verdicts;            // one per input action, input order
  std::vector<Injection> injected;          // enforcement on parameters the policy did not target
  std::vector<std::string> violated_rules;  // on the unverified post-state
  std::vector<std::string> exempted;        // "rule:param", contextual rules yielding to user locks

  std::size_t count(Verdict::Kind k) const {
    return static_cast<std::size_t>(std::count_if(
        verdicts.begin(), verdicts.end(), [&](const Verdict& v) { return v.kind == k; }));
  }
  bool all_approved() const { return count(Verdict::Kind::approved) == verdicts.size() && injected.empty(); }
  bool lock_conflict() const {
    return std::any_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.lock_conflict; });
  }
};

struct VerifiedPolicy {
  Policy policy;
  VerificationReport report;
};

inline ConstraintSet applicable(const ConstraintSet& rules, const VerifyContext& ctx) {
  ConstraintSet out;
  for (const auto& r : rules)
    if (r.condition.holds(ctx)) out.push_back(r);
  return out;
}

inline ConstraintSet hard_only(const ConstraintSet& rules) {
  ConstraintSet out;
  for (const auto& r : rules)
    if (r.kind == RuleKind::hard) out.push_back(r);
  return out;
}

// Applicable rules whose predicate fails on `state`. A contextual failure is
// exempt when the policy LOCKs every parameter the predicate mentions.
struct PredicateFailure {
  std::string rule_id;
  RuleKind kind;
  std::vector<ParamId> targets;
};

inline std::vector<PredicateFailure> predicate_failures(const ConstraintSet& rules,
                                                        const VerifyContext& ctx,
                                                        const DeviceState& state,
                                                        const Policy* policy = nullptr) {
  std::vector<PredicateFailure> out;
  for (const auto& r : applicable(rules, ctx)) {
    if (r.predicate.holds(state)) continue;
    PredicateFailure f{r.id, r.kind, {}};
    bool all_locked = r.kind == RuleKind::contextual && policy != nullptr;
    for (const auto& b : r.predicate.any_of) {
      f.targets.push_back(b.target);
      if (all_locked) {
        const Action* a = policy->find(b.target);
        all_locked = a && a->verb == Verb::lock;
      }
    }
    if (!all_locked) out.push_back(std::move(f));
  }
  return out;
}

namespace detail {

struct ParamBound {
  const ConstraintRule* rule;
  Bound bound;
};

inline std::vector<Value> feasible_values(const ParameterSpec& spec,
                                          const std::vector<ParamBound>& bounds, bool hard_only) {
  std::vector<Value> out;
  for (Value v : spec.domain_values()) {
    bool ok = true;
    for (const auto& pb : bounds) {
      if (hard_only && pb.rule->kind != RuleKind::hard) continue;
      if (!pb.bound.holds(v)) {
        ok = false;
        break;
      }
    }
    if (ok) out.push_back(v);
  }
  return out;
}

}  // namespace detail

// The alternative of a failing disjunction the verifier enforces: the first
// one an unlocked action writes, else the first unlocked one, else the first.
inline const Bound& choose_alternative(const StatePredicate& pred, const Policy& policy) {
  auto locked = [&](const Bound& b) {
    const Action* a = policy.find(b.target);
    return a && a->verb == Verb::lock;
  };
  for (const auto& b : pred.any_of) {
    const Action* a = policy.find(b.target);
    if (a && a->writes() && !locked(b)) return b;
  }
  for (const auto& b : pred.any_of)
    if (!locked(b)) return b;
  return pred.any_of.front();
}

// Verifies `policy` against the applicable rules and returns the corrected
// policy together with a report holding one verdict per input action.
//
// Value-domain legality is checked first: out-of-domain values are corrected
// to the nearest valid value (rule id "capability"). Then, for every
// applicable predicate that fails on the post-state:
//   - a value-writing action on the parameter is clamped to the nearest
//     compliant value, or removed under reject_action;
//   - a KEEP/DEFER action or an untargeted parameter already out of
//     compliance is enforced with a SET to the nearest compliant value;
//   - a user LOCK yields only to hard rules; contextual rules are exempted
//     on locked parameters and the exemption is reported.
// Throws ContradictionError if the predicates on one parameter admit no value.
inline VerifiedPolicy verify(const CapabilityProfile& profile, const Policy& policy,
                             const DeviceState& state, const VerifyContext& ctx,
                             const ConstraintSet& rules) {
  VerificationReport report;
  const ConstraintSet active = applicable(rules, ctx);

  Policy working;
  std::map<ParamId, std::size_t> verdict_of;
  for (const auto& a : policy) {
    const ParameterSpec& spec = profile.at(a.target);
    Verdict v{Verdict::Kind::approved, a.target, written_value(spec, a), std::nullopt, {}, false};
    Action legal = a;
    if (a.value && !spec.contains(*a.value)) {
      legal.value = validate_value(spec, *a.value).nearest;
      v.kind = Verdict::Kind::corrected;
      v.new_value = legal.value;
      v.rule_id = "capability";
    }
    verdict_of[a.target] = report.verdicts.size();
    report.verdicts.push_back(v);
    working.add(std::move(legal));
  }

  {
    const DeviceState hypothetical = apply_policy(profile, state, working);
    for (const auto& r : active)
      if (!r.predicate.holds(hypothetical)) report.violated_rules.push_back(r.id);
  }

  std::set<std::string> exempted;
  auto correct = [&](const ParamId& target, Value new_value, const std::string& rule_id,
                     bool lock_conflict) {
    const Action* cur = working.find(target);
    Action replacement = Action::set(target, new_value, cur ? cur->reason : std::string{},
                                     cur ? cur->priority : Priority::high);
    replacement.reason = "verified: " + rule_id + (replacement.reason.empty() ? "" : "; ") +
                         replacement.reason;
    working.put(std::move(replacement));
    auto it = verdict_of.find(target);
    if (it != verdict_of.end()) {
      Verdict& v = report.verdicts[it->second];
      v.kind = Verdict::Kind::corrected;
      v.new_value = new_value;
      v.rule_id = rule_id;
      v.lock_conflict = v.lock_conflict || lock_conflict;
    }
  };

  // Corrections on one parameter can only break a disjunctive predicate
  // that also mentions it, so a few passes reach a fixed point.
  for (int pass = 0; pass < 4; ++pass) {
    const DeviceState post = apply_policy(profile, state, working);
    std::map<ParamId, std::vector<detail::ParamBound>> by_param;
    for (const auto& r : active) {
      if (r.predicate.single()) {
        by_param[r.predicate.any_of.front().target].push_back({&r, r.predicate.any_of.front()});
        continue;
      }
      if (r.predicate.holds(post)) continue;
      by_param[choose_alternative(r.predicate, working).target].push_back(
          {&r, choose_alternative(r.predicate, working)});
    }

    bool changed = false;
    for (const auto& [target, bounds] : by_param) {
      const ParameterSpec& spec = profile.at(target);
      const std::vector<Value> feasible = detail::feasible_values(spec, bounds, false);
      if (feasible.empty()) {
        std::string ids;
        for (const auto& pb : bounds) ids += (ids.empty() ? "" : ", ") + pb.rule->id;
        throw ContradictionError("constraints on " + target + " are jointly unsatisfiable: " + ids);
      }
      const Value current = post.at(target);
      const detail::ParamBound* first_fail = nullptr;
      const detail::ParamBound* first_hard_fail = nullptr;
      for (const auto& pb : bounds) {
        if (pb.bound.holds(current)) continue;
        if (!first_fail) first_fail = &pb;
        if (!first_hard_fail && pb.rule->kind == RuleKind::hard) first_hard_fail = &pb;
      }
      if (!first_fail) continue;

      const Action* action = working.find(target);
      if (action && action->verb == Verb::lock) {
        if (first_hard_fail) {
          const auto hard_ok = detail::feasible_values(spec, bounds, true);
          correct(target, nearest_in(hard_ok, current), first_hard_fail->rule->id, true);
          changed = true;
        } else {
          for (const auto& pb : bounds)
            if (!pb.bound.holds(current)) exempted.insert(pb.rule->id + ":" + target);
        }
        continue;
      }

      const ConstraintRule& rule = *first_fail->rule;
      if (action && action->writes() && rule.strategy == CorrectionStrategy::reject_action) {
        working.remove(target);
        auto it = verdict_of.find(target);
        if (it != verdict_of.end()) {
          Verdict& v = report.verdicts[it->second];
          v.kind = Verdict::Kind::rejected;
          v.new_value.reset();
          v.rule_id = rule.id;
        }
        const Value before = state.at(target);
        const bool before_ok = std::all_of(bounds.begin(), bounds.end(),
                                           [&](const auto& pb) { return pb.bound.holds(before); });
        if (!before_ok) {
          Action inj = Action::set(target, nearest_in(feasible, before), "enforce " + rule.id,
                                   Priority::high);
          report.injected.push_back({inj, rule.id});
          working.add(std::move(inj));
        }
      } else if (action) {
        correct(target, nearest_in(feasible, current), rule.id, false);
      } else {
        Action inj = Action::set(target, nearest_in(feasible, current), "enforce " + rule.id,
                                 Priority::high);
        report.injected.push_back({inj, rule.id});
        working.add(std::move(inj));
      }
      changed = true;
    }
    if (!changed) break;
  }

  report.exempted.assign(exempted.begin(), exempted.end());
  return {std::move(working), std::move(report)};
}

// ---------------------------------------------------------------------------
// Constraint pack document
//
//   {"rules": [{"id": str, "kind": "hard"|"contextual",
//               "when": [atom...],
//               "require": {"target", "cmp", "bound"} | {"any": [{...}, ...]},
//               "strategy": "clamp_to_boundary"|"reject_action"}]}
//
// Atom forms:
//   {"app_category": ["navigation", ...]}
//   {"activity_type": ["video", ...]}
//   {"battery": {"cmp": "<"|"<="|">"|">=", "threshold": 0..100}}
//   {"always": true}

inline Json to_json(const Atom& a) {
  auto names = [](const std::set<AppCategory>& s) {
    Json arr = Json::array();
    for (auto c : s) arr.push_back(to_string(c));
    return arr;
  };
  switch (a.kind) {
    case Atom::Kind::app_category: return Json{{"app_category", names(a.members)}};
    case Atom::Kind::activity_type: return Json{{"activity_type", names(a.members)}};
    case Atom::Kind::battery:
      return Json{{"battery", {{"cmp", to_string(a.cmp)}, {"threshold", a.threshold}}}};
    case Atom::Kind::always_true: return Json{{"always", true}};
  }
  return Json::object();
}

inline Json to_json(const Bound& b) {
  Json j{{"target", b.target}, {"cmp", to_string(b.cmp)}};
  if (b.cmp == PredCmp::in)
    j["bound"] = b.bound;
  else
    j["bound"] = b.bound.front();
  return j;
}

inline Json to_json(const ConstraintRule& r) {
  Json when = Json::array();
  for (const auto& a : r.condition.atoms) when.push_back(to_json(a));
  Json require;
  if (r.predicate.single()) {
    require = to_json(r.predicate.any_of.front());
  } else {
    Json any = Json::array();
    for (const auto& b : r.predicate.any_of) any.push_back(to_json(b));
    require = Json{{"any", any}};
  }
  return Json{{"id", r.id},
              {"kind", to_string(r.kind)},
              {"when", when},
              {"require", require},
              {"strategy", to_string(r.strategy)}};
}

inline Json to_json(const ConstraintSet& rules) {
  Json arr = Json::array();
  for (const auto& r : rules) arr.push_back(to_json(r));
  return Json{{"rules", arr}};
}

inline std::string serialize_constraints(const ConstraintSet& rules) {
  return canonical_dump(to_json(rules));
}

namespace detail {

inline std::set<AppCategory> parse_members(const Json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw SchemaError(path, "expected non-empty array of categories");
  std::set<AppCategory> out;
  for (const auto& e : j) {
    if (!e.is_string()) throw SchemaError(path, "expected category name");
    auto c = parse_app_category(e.get<std::string>());
    if (!c) throw SchemaError(path, "unknown category " + e.get<std::string>());
    out.insert(*c);
  }
  return out;
}

inline Atom parse_atom(const Json& j, const std::string& path) {
  if (!j.is_object() || j.size() != 1) throw SchemaError(path, "atom must have exactly one key");
  Atom a;
  if (j.contains("app_category")) {
    a.kind = Atom::Kind::app_category;
    a.members = parse_members(j["app_category"], path + ".app_category");
  } else if (j.contains("activity_type")) {
    a.kind = Atom::Kind::activity_type;
    a.members = parse_members(j["activity_type"], path + ".activity_type");
  } else if (j.contains("battery")) {
    a.kind = Atom::Kind::battery;
    const Json& b = j["battery"];
    const std::string cmp = require_string(b, "cmp", path + ".battery");
    if (cmp == "<") a.cmp = BatteryCmp::lt;
    else if (cmp == "<=") a.cmp = BatteryCmp::le;
    else if (cmp == ">") a.cmp = BatteryCmp::gt;
    else if (cmp == ">=") a.cmp = BatteryCmp::ge;
    else throw SchemaError(path + ".battery.cmp", "unknown comparison '" + cmp + "'");
    a.threshold = static_cast<int>(require_int(b, "threshold", path + ".battery"));
    if (a.threshold < 0 || a.threshold > 100)
      throw SchemaError(path + ".battery.threshold", "threshold outside 0-100");
  } else if (j.contains("always")) {
    a.kind = Atom::Kind::always_true;
  } else {
    throw SchemaError(path, "unknown atom form");
  }
  return a;
}

inline Bound parse_bound(const Json& j, const std::string& path, const CapabilityProfile& profile) {
  Bound b;
  b.target = require_string(j, "target", path);
  const ParameterSpec* spec = profile.find(b.target);
  if (!spec) throw SchemaError(path + ".target", "unknown parameter " + b.target);
  const std::string cmp = require_string(j, "cmp", path);
  if (cmp == ">=") b.cmp = PredCmp::ge;
  else if (cmp == "<=") b.cmp = PredCmp::le;
  else if (cmp == "=") b.cmp = PredCmp::eq;
  else if (cmp == "in") b.cmp = PredCmp::in;
  else throw SchemaError(path + ".cmp", "unknown comparison '" + cmp + "'");
  const Json& bound = require(j, "bound", path);
  if (b.cmp == PredCmp::in) {
    if (!bound.is_array() || bound.empty()) throw SchemaError(path + ".bound", "expected value set");
    for (const auto& v : bound) b.bound.push_back(v.get<Value>());
  } else {
    if (!bound.is_number_integer()) throw SchemaError(path + ".bound", "expected integer");
    b.bound.push_back(bound.get<Value>());
  }
  for (Value v : b.bound)
    if (!spec->contains(v)) throw SchemaError(path + ".bound", "bound outside the domain of " + b.target);
  return b;
}

}  // namespace detail

inline ConstraintSet load_constraints(const Json& doc, const CapabilityProfile& profile) {
  using namespace detail;
  ConstraintSet out;
  const Json& rules = require_array(doc, "rules", "$");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < rules.size(); ++i) {
    const std::string path = index_path("$.rules", i);
    const Json& rj = rules[i];
    ConstraintRule r;
    r.id = require_string(rj, "id", path);
    if (!ids.insert(r.id).second) throw SchemaError(path + ".id", "duplicate rule id " + r.id);
    const std::string kind = require_string(rj, "kind", path);
    if (kind == "hard") r.kind = RuleKind::hard;
    else if (kind == "contextual") r.kind = RuleKind::contextual;
    else throw SchemaError(path + ".kind", "unknown rule kind '" + kind + "'");
    const Json& when = require_array(rj, "when", path);
    if (when.empty()) throw SchemaError(path + ".when", "condition needs at least one atom");
    for (std::size_t k = 0; k < when.size(); ++k)
      r.condition.atoms.push_back(parse_atom(when[k], index_path(path + ".when", k)));
    if (r.kind == RuleKind::hard && r.condition.has(Atom::Kind::activity_type) &&
        !r.condition.has(Atom::Kind::app_category) && !r.condition.has(Atom::Kind::battery))
      throw SchemaError(path + ".when", "hard rules bind to app category or battery");
    if (r.kind == RuleKind::contextual && !r.condition.has(Atom::Kind::app_category) &&
        !r.condition.has(Atom::Kind::activity_type))
      throw SchemaError(path + ".when", "contextual rules need a category or activity atom");
    const Json& req = require(rj, "require", path);
    if (req.is_object() && req.contains("any")) {
      const Json& any = req["any"];
      if (!any.is_array() || any.empty()) throw SchemaError(path + ".require.any", "expected alternatives");
      for (std::size_t k = 0; k < any.size(); ++k)
        r.predicate.any_of.push_back(parse_bound(any[k], index_path(path + ".require.any", k), profile));
    } else {
      r.predicate.any_of.push_back(parse_bound(req, path + ".require", profile));
    }
    const std::string strategy = require_string(rj, "strategy", path);
    if (strategy == "clamp_to_boundary") r.strategy = CorrectionStrategy::clamp_to_boundary;
    else if (strategy == "reject_action") r.strategy = CorrectionStrategy::reject_action;
    else throw SchemaError(path + ".strategy", "unknown strategy '" + strategy + "'");
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace powerlens

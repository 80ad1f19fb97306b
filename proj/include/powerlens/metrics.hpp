#pragma once

// Benchmark metrics: weighted action accuracy, user experience score, energy
// saving and constraint violation rate.

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "powerlens/constraints.hpp"
#include "powerlens/device_model.hpp"
#include "powerlens/simulator.hpp"

namespace powerlens {

using Weights = std::map<ParamId, double>;

// Relative band lookup for continuous parameters.
using ToleranceFn = std::function<double(const ParamId&)>;

inline ToleranceFn uniform_tolerance(double tol = 0.10) {
  return [tol](const ParamId&) { return tol; };
}

// Acc = sum w_k s_k / sum w_k * 100 over the weighted parameters, where s_k
// is 1 on an exact match (discrete) or a match within the band (continuous).
inline double action_accuracy(const CapabilityProfile& caps, const std::map<ParamId, Value>& executed,
                              const std::map<ParamId, Value>& gt, const Weights& w,
                              const ToleranceFn& tol = uniform_tolerance()) {
  double num = 0.0, den = 0.0;
  for (const auto& [id, wk] : w) {
    if (wk <= 0) continue;
    const auto& spec = caps.at(id);
    den += wk;
    if (within_tolerance(spec, executed.at(id), gt.at(id), tol(id))) num += wk;
  }
  return den == 0.0 ? 100.0 : num / den * 100.0;
}

// Weights sum to 1 over the parameters with nonzero weight; all-zero input
// stays all-zero.
inline Weights normalize(Weights w) {
  double s = 0.0;
  for (const auto& [id, x] : w) s += x;
  if (s > 0)
    for (auto& [id, x] : w) x /= s;
  return w;
}

// Per (category, bucket) cell: population variance across profiles of each
// parameter's GT value scaled to its domain span. Averaged over the cells
// present in every profile, then normalized.
inline Weights compute_acc_weights(const CapabilityProfile& caps, const std::vector<UserProfile>& profiles) {
  Weights w;
  for (const auto& spec : caps.parameters) w[spec.id] = 0.0;
  if (profiles.empty()) return w;
  std::set<Cell> cells;
  for (const auto& [cell, vec] : profiles.front().gt) {
    bool everywhere = true;
    for (const auto& p : profiles) everywhere = everywhere && p.gt.count(cell);
    if (everywhere) cells.insert(cell);
  }
  if (cells.empty()) return w;
  for (const auto& spec : caps.parameters) {
    const double span = static_cast<double>(spec.highest() - spec.lowest());
    double acc = 0.0;
    for (const auto& cell : cells) {
      double mean = 0.0;
      for (const auto& p : profiles) mean += p.gt.at(cell).at(spec.id) / span;
      mean /= static_cast<double>(profiles.size());
      double var = 0.0;
      for (const auto& p : profiles) {
        const double d = p.gt.at(cell).at(spec.id) / span - mean;
        var += d * d;
      }
      acc += var / static_cast<double>(profiles.size());
    }
    w[spec.id] = acc / static_cast<double>(cells.size());
  }
  return normalize(w);
}

// w_k proportional to the override probability p_k.
inline Weights ues_weights(const std::map<ParamId, double>& override_prob) {
  return normalize(override_prob);
}

inline Weights ues_weights(const CapabilityProfile& caps, const UserProfile& profile) {
  std::map<ParamId, double> p;
  for (const auto& spec : caps.parameters) p[spec.id] = profile.prob(spec.id);
  return ues_weights(p);
}

// UES = 5 (1 - sum w_k [param_k outside GT_k +- tolerance]).
inline double ues(const CapabilityProfile& caps, const std::map<ParamId, Value>& executed,
                  const std::map<ParamId, Value>& gt, const Weights& w,
                  const ToleranceFn& tol = uniform_tolerance()) {
  double dev = 0.0;
  for (const auto& [id, wk] : w)
    if (!within_tolerance(caps.at(id), executed.at(id), gt.at(id), tol(id))) dev += wk;
  return 5.0 * (1.0 - dev);
}

// ES = (E_stock - E_method) / E_stock * 100; zero when the stock energy is zero.
inline double energy_saving(double e_method, double e_stock) {
  return e_stock == 0.0 ? 0.0 : (e_stock - e_method) / e_stock * 100.0;
}

enum class ViolationStage { pre, post };

inline constexpr std::string_view to_string(ViolationStage s) { return s == ViolationStage::pre ? "pre" : "post"; }

struct ViolationCount {
  long violating = 0;
  long total = 0;

  // Percent; 0 when no actions were observed (check `total` for n = 0).
  double rate() const { return total == 0 ? 0.0 : 100.0 * static_cast<double>(violating) / total; }
  ViolationCount& operator+=(const ViolationCount& o) {
    violating += o.violating;
    total += o.total;
    return *this;
  }
};

// Counts the policy's writing actions, and those whose target belongs to an
// applicable rule whose predicate fails after applying the policy to `pre`.
// Out-of-domain values are clamped before application.
inline ViolationCount count_violations(const CapabilityProfile& caps, const ConstraintSet& rules,
                                       const VerifyContext& ctx, const DeviceState& pre, const Policy& policy) {
  ViolationCount c;
  Policy legal;
  for (const auto& a : policy) {
    Action x = a;
    if (x.value && !caps.at(x.target).contains(*x.value)) x.value = validate_value(caps.at(x.target), *x.value).nearest;
    legal.add(x);
  }
  const DeviceState post = apply_policy(caps, pre, legal);
  std::set<ParamId> failing;
  for (const auto& f : predicate_failures(rules, ctx, post))
    failing.insert(f.targets.begin(), f.targets.end());
  for (const auto& a : legal) {
    if (!written_value(caps.at(a.target), a)) continue;
    ++c.total;
    if (failing.count(a.target)) ++c.violating;
  }
  return c;
}

// One decision as seen by the violation metric.
struct DecisionAudit {
  VerifyContext ctx;
  DeviceState pre;
  Policy evaluated;  // before verification
  Policy executed;   // what reached the device
};

inline ViolationCount violation_count(const CapabilityProfile& caps, const ConstraintSet& rules,
                                      const std::vector<DecisionAudit>& audits, ViolationStage stage) {
  ViolationCount total;
  for (const auto& a : audits)
    total += count_violations(caps, rules, a.ctx, a.pre, stage == ViolationStage::pre ? a.evaluated : a.executed);
  return total;
}

inline double violation_rate(const CapabilityProfile& caps, const ConstraintSet& rules,
                             const std::vector<DecisionAudit>& audits, ViolationStage stage) {
  return violation_count(caps, rules, audits, stage).rate();
}

}  // namespace powerlens

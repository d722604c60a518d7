#pragma once

#include <cmath>
#include <limits>
#include <optional>

#include "evadmm/objectives.hpp"
#include "evadmm/rng.hpp"

namespace evadmm {

/// Communication threshold as a function of the iteration index.
struct ThresholdSchedule {
  enum class Kind { Constant, PowerDecay };

  Kind kind = Kind::Constant;
  double delta0 = 0.0;
  double exponent = 0.0;  // Delta_k = delta0 / (k+1)^exponent

  static ThresholdSchedule constant(double d0) { return {Kind::Constant, d0, 0.0}; }
  static ThresholdSchedule power_decay(double d0, double t) {
    return {Kind::PowerDecay, d0, t};
  }

  double at(int k) const {
    if (kind == Kind::Constant) return delta0;
    return delta0 / std::pow(static_cast<double>(k) + 1.0, exponent);
  }
  double max_value() const { return delta0; }
};

/// Send-on-delta rule. vanilla(D) == randomized(D, 0); random_only(p) ==
/// randomized(inf, p).
struct TriggerPolicy {
  enum class Kind { Vanilla, Randomized, RandomOnly };

  Kind kind = Kind::Vanilla;
  ThresholdSchedule schedule;
  double p_trig = 0.0;

  static TriggerPolicy vanilla(ThresholdSchedule s) { return {Kind::Vanilla, s, 0.0}; }
  static TriggerPolicy vanilla(double delta) {
    return vanilla(ThresholdSchedule::constant(delta));
  }
  static TriggerPolicy randomized(ThresholdSchedule s, double p) {
    return {Kind::Randomized, s, p};
  }
  static TriggerPolicy random_only(double p) {
    return {Kind::RandomOnly,
            ThresholdSchedule::constant(std::numeric_limits<double>::infinity()), p};
  }

  /// Event rule: fire iff the deviation strictly exceeds Delta_k, plus a
  /// probabilistic draw for the randomized variants.
  bool fires(double deviation, int k, CounterRng& rng) const {
    switch (kind) {
      case Kind::Vanilla:
        return deviation > schedule.at(k);
      case Kind::Randomized:
        if (deviation > schedule.at(k)) return true;
        return rng.bernoulli(p_trig);
      case Kind::RandomOnly:
        return rng.bernoulli(p_trig);
    }
    return false;
  }

  bool has_finite_threshold() const {
    return kind != Kind::RandomOnly && std::isfinite(schedule.delta0);
  }
};

/// Bernoulli drop per message plus the declared payload bound chi_bar.
/// A finite chi_bar arms the run-time assertion on realized |chi|.
struct DropModel {
  double p_drop = 0.0;
  double chi_bar = std::numeric_limits<double>::infinity();

  bool declared() const { return std::isfinite(chi_bar); }
};

/// Sender-side register for one event channel. On fire the delta
/// current - last_sent is produced and the register advances (also when the
/// delivery is subsequently dropped; the receiver-side loss is what the
/// reset repairs).
class EventChannel {
 public:
  void reset_to(const Vec& value) { last_sent_ = value; }

  const Vec& last_sent() const { return last_sent_; }

  std::optional<Vec> maybe_send(const Vec& current, const TriggerPolicy& policy, int k,
                                CounterRng& rng) {
    if (last_sent_.size() == 0) last_sent_ = Vec::Zero(current.size());
    const double dev = (current - last_sent_).norm();
    if (!policy.fires(dev, k, rng)) return std::nullopt;
    Vec delta = current - last_sent_;
    last_sent_ = current;
    return delta;
  }

 private:
  Vec last_sent_;
};

/// Spec-level trigger operation on explicit registers.
struct TriggerOutcome {
  bool sent = false;
  Vec delta;
};

inline TriggerOutcome maybe_trigger(const Vec& current, Vec& last_sent,
                                    const TriggerPolicy& policy, int k, CounterRng& rng) {
  TriggerOutcome out;
  const double dev = (current - last_sent).norm();
  if (policy.fires(dev, k, rng)) {
    out.sent = true;
    out.delta = current - last_sent;
    last_sent = current;
  }
  return out;
}

}  // namespace evadmm

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "acta/common.hpp"
#include "acta/geo.hpp"

namespace acta::protocol {

enum class Phase { OpenLoopNudges, ClosedLoopNfb };

inline const char* to_string(Phase p) { return p == Phase::OpenLoopNudges ? "open_loop_nudges" : "closed_loop_nfb"; }

inline Phase parse_phase(std::string_view s) {
  if (s == "open_loop_nudges") return Phase::OpenLoopNudges;
  if (s == "closed_loop_nfb") return Phase::ClosedLoopNfb;
  fail(ErrorCode::ScenarioInvalid, "unknown phase '" + std::string(s) + "'");
}

enum class DisturbanceKind { AuditoryQuestion };

struct DisturbanceSpec {
  std::string id;
  double trigger_ts_offset_s = 0.0;
  DisturbanceKind kind = DisturbanceKind::AuditoryQuestion;
  std::string payload;
  double response_deadline_s = 10.0;
  bool consumed = false;
};

struct SessionPlan {
  int session_index = 1;  // 1-based
  int n_sessions = 2;
  Phase phase = Phase::OpenLoopNudges;
  std::string path_id;
  std::vector<double> nudge_probability;           // per landmark, index k-1
  std::vector<double> previous_nudge_probability;  // executed values of the prior session
  std::vector<DisturbanceSpec> disturbances;
  bool pure_nfb = false;  // closed-loop final session: no nudges at all
  bool active = false;

  bool is_final() const { return session_index == n_sessions; }
};

enum class FeedbackKind { Nudge, NfbEncourage, NfbReinforce, Reward, NoOp };

inline const char* to_string(FeedbackKind k) {
  switch (k) {
    case FeedbackKind::Nudge: return "nudge";
    case FeedbackKind::NfbEncourage: return "nfb_encourage";
    case FeedbackKind::NfbReinforce: return "nfb_reinforce";
    case FeedbackKind::Reward: return "reward";
    case FeedbackKind::NoOp: return "no_op";
  }
  return "?";
}

inline FeedbackKind parse_feedback_kind(std::string_view s) {
  for (auto k : {FeedbackKind::Nudge, FeedbackKind::NfbEncourage, FeedbackKind::NfbReinforce, FeedbackKind::Reward,
                 FeedbackKind::NoOp})
    if (s == to_string(k)) return k;
  fail(ErrorCode::CorruptLog, "unknown feedback kind '" + std::string(s) + "'");
}

enum class Rationale {
  Scheduled,
  CaseA,
  CaseB,
  CaseC_NoIntervention,
  CaseC_Intervention,
  Unclassified,
  DestinationReached,
};

inline const char* to_string(Rationale r) {
  switch (r) {
    case Rationale::Scheduled: return "scheduled";
    case Rationale::CaseA: return "case_a";
    case Rationale::CaseB: return "case_b";
    case Rationale::CaseC_NoIntervention: return "case_c_no_intervention";
    case Rationale::CaseC_Intervention: return "case_c_intervention";
    case Rationale::Unclassified: return "unclassified";
    case Rationale::DestinationReached: return "destination_reached";
  }
  return "?";
}

inline Rationale parse_rationale(std::string_view s) {
  for (auto r : {Rationale::Scheduled, Rationale::CaseA, Rationale::CaseB, Rationale::CaseC_NoIntervention,
                 Rationale::CaseC_Intervention, Rationale::Unclassified, Rationale::DestinationReached})
    if (s == to_string(r)) return r;
  fail(ErrorCode::CorruptLog, "unknown rationale '" + std::string(s) + "'");
}

struct FeedbackEvent {
  double ts = 0.0;
  FeedbackKind kind = FeedbackKind::NoOp;
  std::optional<std::string> place_id;
  Rationale rationale = Rationale::Scheduled;
};

enum class LocationClass { Landmark, NonRelevant, Neither };

/// What to do when the classifier disagrees with the walker's location.
enum class CaseCPolicy { NoOp, DeliverNudge };

inline const char* to_string(CaseCPolicy p) { return p == CaseCPolicy::NoOp ? "no_op" : "deliver_nudge"; }

inline CaseCPolicy parse_case_c_policy(std::string_view s) {
  if (s == "no_op") return CaseCPolicy::NoOp;
  if (s == "deliver_nudge") return CaseCPolicy::DeliverNudge;
  fail(ErrorCode::ScenarioInvalid, "unknown case-c policy '" + std::string(s) + "'");
}

struct Decision {
  FeedbackKind kind = FeedbackKind::NoOp;
  Rationale rationale = Rationale::Scheduled;

  friend bool operator==(const Decision&, const Decision&) = default;
};

/// Closed-loop feedback rule. A scheduled nudge suppresses neurofeedback for
/// the same encounter; an attended landmark is encouraged, an unattended
/// non-relevant place is reinforced, any mismatch falls to the policy.
inline Decision decide_feedback(LocationClass location, AttentionLabel label, bool nudge_fired,
                                CaseCPolicy policy = CaseCPolicy::NoOp) {
  if (nudge_fired) return {FeedbackKind::NoOp, Rationale::Scheduled};
  if (location == LocationClass::Neither) return {FeedbackKind::NoOp, Rationale::Scheduled};
  if (location == LocationClass::Landmark && label == AttentionLabel::Attention)
    return {FeedbackKind::NfbEncourage, Rationale::CaseA};
  if (location == LocationClass::NonRelevant && label == AttentionLabel::NonAttention)
    return {FeedbackKind::NfbReinforce, Rationale::CaseB};
  if (policy == CaseCPolicy::DeliverNudge && location == LocationClass::Landmark)
    return {FeedbackKind::Nudge, Rationale::CaseC_Intervention};
  return {FeedbackKind::NoOp, Rationale::CaseC_NoIntervention};
}

/// Vanishing-cue schedule: per-landmark probability falls linearly from 1 in
/// the first session to 0 in the last.
inline std::vector<SessionPlan> plan_sessions(const geo::PathSpec& path, int n_sessions, Phase phase) {
  if (n_sessions < 2) fail(ErrorCode::TooFewSessions, "need at least 2 sessions");
  std::vector<SessionPlan> plans;
  plans.reserve(static_cast<std::size_t>(n_sessions));
  for (int s = 1; s <= n_sessions; ++s) {
    SessionPlan plan;
    plan.session_index = s;
    plan.n_sessions = n_sessions;
    plan.phase = phase;
    plan.path_id = path.id;
    const double p = 1.0 - static_cast<double>(s - 1) / static_cast<double>(n_sessions - 1);
    plan.nudge_probability.assign(path.landmarks.size(), p);
    if (s > 1) plan.previous_nudge_probability = plans.back().nudge_probability;
    plan.pure_nfb = phase == Phase::ClosedLoopNfb && s == n_sessions;
    plans.push_back(std::move(plan));
  }
  return plans;
}

inline constexpr double kAdjustHighCompletion = 0.9;
inline constexpr double kAdjustLowCompletion = 0.5;
inline constexpr double kAdjustFactor = 0.5;

/// Performance-driven tweak of a not-yet-started plan. The first and final
/// sessions are the schedule's fixed endpoints and are returned unchanged.
inline SessionPlan adjust_plan(const SessionPlan& plan, const geo::BehavioralReport& performance) {
  if (plan.active) fail(ErrorCode::PlanAlreadyActive, "plan already started");
  SessionPlan out = plan;
  if (plan.session_index <= 1 || plan.is_final()) return out;
  if (performance.completion_rate >= kAdjustHighCompletion) {
    for (double& p : out.nudge_probability) p = std::max(0.0, p * kAdjustFactor);
  } else if (performance.completion_rate < kAdjustLowCompletion) {
    for (std::size_t k = 0; k < out.nudge_probability.size(); ++k) {
      const double prev = k < plan.previous_nudge_probability.size() ? plan.previous_nudge_probability[k] : 1.0;
      out.nudge_probability[k] = std::min(1.0, std::max(out.nudge_probability[k], prev));
    }
  }
  return out;
}

/// Returns disturbances whose trigger offset has elapsed and marks them consumed.
inline std::vector<DisturbanceSpec> inject_disturbances(SessionPlan& plan, double now_offset_s) {
  std::vector<DisturbanceSpec> due;
  for (auto& d : plan.disturbances) {
    if (d.consumed || d.trigger_ts_offset_s > now_offset_s) continue;
    d.consumed = true;
    due.push_back(d);
  }
  return due;
}

enum class Latch { Unvisited, Approaching, Resolved };

struct Encounter {
  Latch latch = Latch::Unvisited;
  bool inside = false;
  std::optional<double> entry_ts;
  std::optional<double> resolved_ts;
  bool nudge_fired = false;
};

/// Classifier output on one EEG window.
struct Classification {
  AttentionLabel label = AttentionLabel::NonAttention;
  double confidence = 0.5;
  double window_start_ts = 0.0;
};

/// Per-session geofence state machine. Single owner; feed positions in
/// timestamp order.
class SessionController {
 public:
  SessionController(const geo::PathSpec& path, SessionPlan plan, std::uint64_t seed,
                    CaseCPolicy policy = CaseCPolicy::NoOp)
      : path_(path), plan_(std::move(plan)), policy_(policy) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (std::size_t k = 0; k < path_.landmarks.size(); ++k) draws_.push_back(uni(rng));
    for (const auto* p : places()) state_[p->id] = Encounter{};
    if (plan_.nudge_probability.size() != path_.landmarks.size())
      fail(ErrorCode::InvalidConfig, "plan/landmark count mismatch");
  }

  void start() {
    plan_.active = true;
    started_ = true;
  }
  void finish() { finished_ = true; }
  bool active() const { return started_ && !finished_; }

  const SessionPlan& plan() const { return plan_; }
  SessionPlan& mutable_plan() { return plan_; }
  CaseCPolicy policy() const { return policy_; }
  void set_policy(CaseCPolicy p) { policy_ = p; }
  const std::map<std::string, Encounter>& encounters() const { return state_; }

  /// True while the walker is inside any geofence or an encounter awaits classification.
  bool in_encounter() const {
    for (const auto& [id, e] : state_)
      if (e.inside || e.latch == Latch::Approaching) return true;
    return false;
  }

  void set_nudge_probability(const std::string& landmark_id, double p) {
    for (std::size_t k = 0; k < path_.landmarks.size(); ++k) {
      if (path_.landmarks[k].id == landmark_id) {
        plan_.nudge_probability[k] = std::clamp(p, 0.0, 1.0);
        return;
      }
    }
    fail(ErrorCode::UnknownPlace, "no landmark '" + landmark_id + "'");
  }

  std::vector<FeedbackEvent> on_position(const geo::GeoPoint& pos, double ts,
                                         const std::optional<Classification>& classification = std::nullopt) {
    if (!active()) fail(ErrorCode::SessionNotActive, "session controller not active");
    if (plan_.phase == Phase::OpenLoopNudges && classification)
      fail(ErrorCode::InvalidConfig, "open-loop sessions take no classifier output");

    std::vector<FeedbackEvent> out;
    for (const geo::Place* place : places()) {
      Encounter& e = state_[place->id];
      const bool inside = geo::is_within(pos, *place);
      const bool exited = e.inside && !inside;
      e.inside = inside;

      if (e.latch == Latch::Unvisited && inside) {
        e.entry_ts = ts;
        enter(*place, e, ts, out);
      }
      if (e.latch == Latch::Approaching) {
        const bool fresh = classification && classification->window_start_ts >= *e.entry_ts;
        if (fresh || exited) resolve_closed_loop(*place, e, ts, classification, out);
      }
    }
    return out;
  }

 private:
  std::vector<const geo::Place*> places() const {
    std::vector<const geo::Place*> ps;
    for (const auto& p : path_.landmarks) ps.push_back(&p);
    for (const auto& p : path_.non_relevant) ps.push_back(&p);
    ps.push_back(&path_.destination);
    return ps;
  }

  void emit(std::vector<FeedbackEvent>& out, double ts, const geo::Place& place, Decision d) {
    out.push_back({ts, d.kind, place.id, d.rationale});
  }

  void enter(const geo::Place& place, Encounter& e, double ts, std::vector<FeedbackEvent>& out) {
    switch (place.kind) {
      case geo::PlaceKind::Destination:
        emit(out, ts, place, {FeedbackKind::Reward, Rationale::DestinationReached});
        e.latch = Latch::Resolved;
        e.resolved_ts = ts;
        return;
      case geo::PlaceKind::Landmark: {
        const auto k = static_cast<std::size_t>(place.landmark_index - 1);
        e.nudge_fired = !plan_.pure_nfb && draws_[k] < plan_.nudge_probability[k];
        if (e.nudge_fired) {
          emit(out, ts, place, {FeedbackKind::Nudge, Rationale::Scheduled});
          e.latch = Latch::Resolved;
          e.resolved_ts = ts;
          return;
        }
        break;
      }
      default:
        break;
    }
    if (plan_.phase == Phase::OpenLoopNudges) {
      emit(out, ts, place, {FeedbackKind::NoOp, Rationale::Scheduled});
      e.latch = Latch::Resolved;
      e.resolved_ts = ts;
      return;
    }
    e.latch = Latch::Approaching;
  }

  void resolve_closed_loop(const geo::Place& place, Encounter& e, double ts, const std::optional<Classification>& c,
                           std::vector<FeedbackEvent>& out) {
    const LocationClass loc =
        place.kind == geo::PlaceKind::Landmark ? LocationClass::Landmark : LocationClass::NonRelevant;
    Decision d{FeedbackKind::NoOp, Rationale::Unclassified};
    if (c) d = decide_feedback(loc, c->label, e.nudge_fired, policy_);
    emit(out, ts, place, d);
    e.latch = Latch::Resolved;
    e.resolved_ts = ts;
  }

  geo::PathSpec path_;
  SessionPlan plan_;
  CaseCPolicy policy_;
  std::vector<double> draws_;
  std::map<std::string, Encounter> state_;
  bool started_ = false;
  bool finished_ = false;
};

}  // namespace acta::protocol

#include <gtest/gtest.h>

#include <random>

#include "acta/protocol.hpp"
#include "fixtures.hpp"

using namespace acta;
using namespace acta::protocol;

namespace {

using AL = AttentionLabel;

struct Row {
  LocationClass loc;
  AL label;
  bool nudge;
  FeedbackKind kind;
  Rationale why;
};

// Case table written out by hand from the encounter rules.
const std::vector<Row> kTable = {
    {LocationClass::Landmark, AL::Attention, false, FeedbackKind::NfbEncourage, Rationale::CaseA},
    {LocationClass::Landmark, AL::NonAttention, false, FeedbackKind::NoOp, Rationale::CaseC_NoIntervention},
    {LocationClass::NonRelevant, AL::Attention, false, FeedbackKind::NoOp, Rationale::CaseC_NoIntervention},
    {LocationClass::NonRelevant, AL::NonAttention, false, FeedbackKind::NfbReinforce, Rationale::CaseB},
    {LocationClass::Neither, AL::Attention, false, FeedbackKind::NoOp, Rationale::Scheduled},
    {LocationClass::Neither, AL::NonAttention, false, FeedbackKind::NoOp, Rationale::Scheduled},
    {LocationClass::Landmark, AL::Attention, true, FeedbackKind::NoOp, Rationale::Scheduled},
    {LocationClass::Landmark, AL::NonAttention, true, FeedbackKind::NoOp, Rationale::Scheduled},
    {LocationClass::NonRelevant, AL::Attention, true, FeedbackKind::NoOp, Rationale::Scheduled},
    {LocationClass::NonRelevant, AL::NonAttention, true, FeedbackKind::NoOp, Rationale::Scheduled},
    {LocationClass::Neither, AL::Attention, true, FeedbackKind::NoOp, Rationale::Scheduled},
    {LocationClass::Neither, AL::NonAttention, true, FeedbackKind::NoOp, Rationale::Scheduled},
};

SessionPlan plan_for(int s, int n, Phase phase) {
  return plan_sessions(fixtures::l_route(), n, phase)[static_cast<std::size_t>(s - 1)];
}

/// Walks the fixture route; the classifier reports `label` for every window,
/// each window starting at the current tick.
std::vector<FeedbackEvent> run(SessionController& ctl, std::optional<AL> label, double speed = 1.2) {
  ctl.start();
  std::vector<FeedbackEvent> all;
  const auto traj = fixtures::walk(fixtures::l_route(), speed, 0.5);
  for (const auto& s : traj.samples) {
    std::optional<Classification> c;
    if (label) c = Classification{*label, 0.9, s.t};
    auto ev = ctl.on_position(s.pos, s.t, c);
    all.insert(all.end(), ev.begin(), ev.end());
  }
  ctl.finish();
  return all;
}

int count(const std::vector<FeedbackEvent>& ev, FeedbackKind k) {
  return static_cast<int>(std::count_if(ev.begin(), ev.end(), [&](const auto& e) { return e.kind == k; }));
}

}  // namespace

TEST(DecideFeedback, FullCaseTableWithDefaultPolicy) {
  ASSERT_EQ(kTable.size(), 12u);
  for (const auto& r : kTable) {
    const auto d = decide_feedback(r.loc, r.label, r.nudge);
    EXPECT_EQ(d.kind, r.kind);
    EXPECT_EQ(d.rationale, r.why);
  }
}

TEST(DecideFeedback, DeliverNudgePolicyOnlyChangesLandmarkMismatch) {
  for (const auto& r : kTable) {
    const auto d = decide_feedback(r.loc, r.label, r.nudge, CaseCPolicy::DeliverNudge);
    if (r.loc == LocationClass::Landmark && r.why == Rationale::CaseC_NoIntervention) {
      EXPECT_EQ(d, (Decision{FeedbackKind::Nudge, Rationale::CaseC_Intervention}));
    } else {
      EXPECT_EQ(d, (Decision{r.kind, r.why}));
    }
  }
}

TEST(PlanSessions, LinearlyVanishingCue) {
  const auto plans = plan_sessions(fixtures::l_route(), 5, Phase::OpenLoopNudges);
  const double expect[] = {1.0, 0.75, 0.5, 0.25, 0.0};
  for (int s = 0; s < 5; ++s) {
    for (double p : plans[static_cast<std::size_t>(s)].nudge_probability) EXPECT_DOUBLE_EQ(p, expect[s]);
    EXPECT_FALSE(plans[static_cast<std::size_t>(s)].pure_nfb);
  }
  EXPECT_TRUE(plans.back().is_final());
  EXPECT_EQ(plans[2].previous_nudge_probability, plans[1].nudge_probability);
}

TEST(PlanSessions, ClosedLoopFinalSessionIsPureNfb) {
  const auto plans = plan_sessions(fixtures::l_route(), 3, Phase::ClosedLoopNfb);
  EXPECT_TRUE(plans.back().pure_nfb);
  EXPECT_FALSE(plans.front().pure_nfb);
}

TEST(PlanSessions, NeedsTwoSessions) {
  try {
    plan_sessions(fixtures::l_route(), 1, Phase::OpenLoopNudges);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewSessions);
  }
}

TEST(AdjustPlan, HighCompletionHalvesLowCompletionRestores) {
  const auto plan = plan_for(3, 5, Phase::OpenLoopNudges);  // p = 0.5, previous 0.75
  geo::BehavioralReport good, bad, mid;
  good.completion_rate = 0.95;
  bad.completion_rate = 0.25;
  mid.completion_rate = 0.7;
  for (double p : adjust_plan(plan, good).nudge_probability) EXPECT_DOUBLE_EQ(p, 0.25);
  for (double p : adjust_plan(plan, bad).nudge_probability) EXPECT_DOUBLE_EQ(p, 0.75);
  EXPECT_EQ(adjust_plan(plan, mid).nudge_probability, plan.nudge_probability);
}

TEST(AdjustPlan, EndpointsAndActivePlans) {
  geo::BehavioralReport bad;
  bad.completion_rate = 0.0;
  const auto first = plan_for(1, 4, Phase::OpenLoopNudges);
  const auto last = plan_for(4, 4, Phase::OpenLoopNudges);
  EXPECT_EQ(adjust_plan(first, bad).nudge_probability, first.nudge_probability);
  EXPECT_EQ(adjust_plan(last, bad).nudge_probability, last.nudge_probability);
  auto active = plan_for(2, 4, Phase::OpenLoopNudges);
  active.active = true;
  try {
    adjust_plan(active, bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PlanAlreadyActive);
  }
}

TEST(InjectDisturbances, ConsumedOnce) {
  auto plan = plan_for(1, 2, Phase::OpenLoopNudges);
  plan.disturbances = {{"d1", 30.0, DisturbanceKind::AuditoryQuestion, "", 10.0, false},
                       {"d2", 90.0, DisturbanceKind::AuditoryQuestion, "", 10.0, false}};
  EXPECT_TRUE(inject_disturbances(plan, 10.0).empty());
  auto due = inject_disturbances(plan, 45.0);
  ASSERT_EQ(due.size(), 1u);
  EXPECT_EQ(due[0].id, "d1");
  EXPECT_TRUE(inject_disturbances(plan, 60.0).empty());
  EXPECT_EQ(inject_disturbances(plan, 1000.0).size(), 1u);
}

TEST(SessionController, FirstSessionNudgesEveryLandmark) {
  SessionController ctl(fixtures::l_route(), plan_for(1, 4, Phase::OpenLoopNudges), 11);
  const auto ev = run(ctl, std::nullopt);
  EXPECT_EQ(count(ev, FeedbackKind::Nudge), 4);
  EXPECT_EQ(count(ev, FeedbackKind::Reward), 1);
  EXPECT_EQ(count(ev, FeedbackKind::NfbEncourage) + count(ev, FeedbackKind::NfbReinforce), 0);
}

TEST(SessionController, FinalSessionNeverNudges) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SessionController ctl(fixtures::l_route(), plan_for(4, 4, Phase::OpenLoopNudges), seed);
    EXPECT_EQ(count(run(ctl, std::nullopt), FeedbackKind::Nudge), 0);
  }
}

TEST(SessionController, ClosedLoopAgreementCases) {
  SessionController attend(fixtures::l_route(), plan_for(3, 3, Phase::ClosedLoopNfb), 5);
  const auto a = run(attend, AL::Attention);
  EXPECT_EQ(count(a, FeedbackKind::NfbEncourage), 4);
  EXPECT_EQ(count(a, FeedbackKind::NfbReinforce), 0);

  SessionController idle(fixtures::l_route(), plan_for(3, 3, Phase::ClosedLoopNfb), 5);
  const auto b = run(idle, AL::NonAttention);
  EXPECT_EQ(count(b, FeedbackKind::NfbReinforce), 3);
  EXPECT_EQ(count(b, FeedbackKind::NfbEncourage), 0);
}

TEST(SessionController, EncounterWithoutClassificationIsUnclassified) {
  SessionController ctl(fixtures::l_route(), plan_for(3, 3, Phase::ClosedLoopNfb), 5);
  const auto ev = run(ctl, std::nullopt);
  int unclassified = 0;
  for (const auto& e : ev)
    if (e.rationale == Rationale::Unclassified) ++unclassified;
  EXPECT_EQ(unclassified, 7);
}

TEST(SessionController, StaleWindowsDoNotResolveEncounters) {
  SessionController ctl(fixtures::l_route(), plan_for(3, 3, Phase::ClosedLoopNfb), 5);
  ctl.start();
  const auto inside = fixtures::at(150, 0);
  auto ev = ctl.on_position(inside, 100.0, Classification{AL::Attention, 0.9, 98.0});
  EXPECT_TRUE(ev.empty());
  EXPECT_TRUE(ctl.in_encounter());
  ev = ctl.on_position(inside, 101.0, Classification{AL::Attention, 0.9, 100.0});
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0].kind, FeedbackKind::NfbEncourage);
  EXPECT_FALSE(ctl.in_encounter() && ctl.encounters().at("lm1").latch == Latch::Approaching);
}

TEST(SessionController, GuardsAndCommands) {
  SessionController ctl(fixtures::l_route(), plan_for(1, 2, Phase::OpenLoopNudges), 5);
  try {
    ctl.on_position(fixtures::at(0, 0), 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SessionNotActive);
  }
  try {
    ctl.set_nudge_probability("nope", 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownPlace);
  }
  ctl.start();
  EXPECT_THROW(ctl.on_position(fixtures::at(0, 0), 0.0, Classification{}), Error);
}

TEST(SessionController, OperatorProbabilityTakesEffect) {
  SessionController ctl(fixtures::l_route(), plan_for(2, 2, Phase::OpenLoopNudges), 5);
  ctl.set_nudge_probability("lm3", 1.0);
  const auto ev = run(ctl, std::nullopt);
  ASSERT_EQ(count(ev, FeedbackKind::Nudge), 1);
  for (const auto& e : ev)
    if (e.kind == FeedbackKind::Nudge) {
      EXPECT_EQ(e.place_id, "lm3");
    }
}

TEST(SessionControllerProperty, DeliveryInvariantsHoldAcrossSeeds) {
  std::mt19937_64 rng(99);
  std::bernoulli_distribution coin(0.5);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const int n = 2 + static_cast<int>(seed % 5);
    const Phase phase = seed % 2 ? Phase::ClosedLoopNfb : Phase::OpenLoopNudges;
    for (int s = 1; s <= n; ++s) {
      SessionController ctl(fixtures::l_route(), plan_for(s, n, phase), mix_seed(seed, static_cast<std::uint64_t>(s)));
      ctl.start();
      std::map<std::string, int> non_noop;
      std::map<std::string, bool> nudged;
      for (const auto& smp : fixtures::walk(fixtures::l_route(), 1.2, 0.5).samples) {
        std::optional<Classification> c;
        if (phase == Phase::ClosedLoopNfb) c = Classification{coin(rng) ? AL::Attention : AL::NonAttention, 0.7, smp.t};
        for (const auto& e : ctl.on_position(smp.pos, smp.t, c)) {
          if (e.kind != FeedbackKind::NoOp) ++non_noop[*e.place_id];
          if (e.kind == FeedbackKind::Nudge) nudged[*e.place_id] = true;
          const bool nfb = e.kind == FeedbackKind::NfbEncourage || e.kind == FeedbackKind::NfbReinforce;
          if (phase == Phase::OpenLoopNudges) {
            EXPECT_FALSE(nfb);
          }
          if (nfb) {
            EXPECT_FALSE(nudged.count(*e.place_id));
          }
          if (s == n) {
            EXPECT_NE(e.kind, FeedbackKind::Nudge);
          }
        }
      }
      for (const auto& [id, k] : non_noop) EXPECT_LE(k, 1) << id;
      if (s == 1) {
        EXPECT_EQ(nudged.size(), 4u);
      }
    }
  }
}

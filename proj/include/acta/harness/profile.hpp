#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "acta/common.hpp"

namespace acta::harness {

enum class Exclusion { SeverePsychiatric, ContinuousMedicalAssistance, NotIndependentDaily, MotorImpairment };

inline const char* to_string(Exclusion e) {
  switch (e) {
    case Exclusion::SeverePsychiatric: return "severe_psychiatric";
    case Exclusion::ContinuousMedicalAssistance: return "continuous_medical_assistance";
    case Exclusion::NotIndependentDaily: return "not_independent_daily";
    case Exclusion::MotorImpairment: return "motor_impairment";
  }
  return "?";
}

inline Exclusion parse_exclusion(std::string_view s) {
  for (auto e : {Exclusion::SeverePsychiatric, Exclusion::ContinuousMedicalAssistance, Exclusion::NotIndependentDaily,
                 Exclusion::MotorImpairment})
    if (s == to_string(e)) return e;
  fail(ErrorCode::ScenarioInvalid, "unknown exclusion '" + std::string(s) + "'");
}

struct ParticipantProfile {
  std::string id = "p01";
  int age_years = 72;
  bool mci_diagnosed = true;
  bool informatics_entry_level = true;
  std::set<Exclusion> exclusions;
};

inline constexpr int kMinAge = 65;
inline constexpr int kMaxAge = 85;

struct Eligibility {
  bool eligible = false;
  std::vector<std::string> reasons;  // every violated criterion, in a fixed order
};

inline Eligibility validate_profile(const ParticipantProfile& p) {
  Eligibility r;
  if (p.age_years < kMinAge || p.age_years > kMaxAge) r.reasons.emplace_back("age");
  if (!p.mci_diagnosed) r.reasons.emplace_back("mci_diagnosed");
  if (!p.informatics_entry_level) r.reasons.emplace_back("informatics_entry_level");
  for (auto e : p.exclusions) r.reasons.emplace_back(to_string(e));
  r.eligible = r.reasons.empty();
  return r;
}

}  // namespace acta::harness

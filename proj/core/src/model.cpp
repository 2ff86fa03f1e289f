#include "aipat/model.hpp"

namespace aipat {

const RubricCriterion* Rubric::find(const std::string& criterion_id) const {
  for (const auto& c : criteria) {
    if (c.id == criterion_id) return &c;
  }
  return nullptr;
}

const Question* Exam::find(const std::string& question_id) const {
  for (const auto& q : questions) {
    if (q.id == question_id) return &q;
  }
  return nullptr;
}

bool integrity_transition_allowed(IntegrityStatus from, IntegrityStatus to) {
  using S = IntegrityStatus;
  switch (from) {
    case S::unverified: return to == S::verified || to == S::flagged;
    case S::flagged: return to == S::verified || to == S::penalized;
    case S::verified:
    case S::penalized: return false;
  }
  return false;
}

bool appeal_transition_allowed(AppealState from, AppealState to) {
  using S = AppealState;
  switch (from) {
    case S::submitted: return to == S::under_review;
    case S::under_review: return to == S::proposed;
    case S::proposed: return to == S::resolved_changed || to == S::resolved_unchanged;
    case S::resolved_changed:
    case S::resolved_unchanged: return to == S::published;
    case S::published: return false;
  }
  return false;
}

std::string GraderIdentity::key() const {
  if (kind == GraderKind::human) {
    return "human:" + label + "|session=" + std::to_string(session_index);
  }
  return "model:" + label + "|t=" + temperature.to_string() + "|run=" + std::to_string(run_index);
}

}  // namespace aipat

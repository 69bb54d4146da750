#include "learnpath/recommendation.hpp"

namespace learnpath {

void to_json(nlohmann::json& j, const ScoredCandidate& c) {
  j = nlohmann::json{{"question_id", c.question_id}, {"score", c.score}, {"details", c.details}};
}

void to_json(nlohmann::json& j, const Recommendation& r) {
  j = nlohmann::json{{"question_id", r.question_id}, {"ranking", r.ranking}};
  if (r.concept_id) j["concept_id"] = *r.concept_id;
}

}  // namespace learnpath

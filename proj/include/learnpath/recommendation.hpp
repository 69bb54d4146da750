#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace learnpath {

struct ScoredCandidate {
  std::string question_id;
  double score = 0.0;
  // Strategy specific indicators (estimated rating, p_correct, q_value, ...).
  std::map<std::string, double> details;
};

// The chosen question plus the per-candidate scores that led to it, best first.
struct Recommendation {
  std::string question_id;
  std::optional<std::string> concept_id;
  std::vector<ScoredCandidate> ranking;
};

void to_json(nlohmann::json& j, const ScoredCandidate& c);
void to_json(nlohmann::json& j, const Recommendation& r);

}  // namespace learnpath

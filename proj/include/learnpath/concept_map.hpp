#pragma once

#include "learnpath/domain.hpp"
#include "learnpath/recommendation.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace learnpath {

struct Concept {
  std::string id;
  std::set<std::string> question_ids;
};

// `from` should be mastered before `to`; weight is the dependence strength.
struct Arc {
  std::string from;
  std::string to;
  double weight = 1.0;
};

// Weighted prerequisite digraph over concepts, each labeled with questions.
// Cycles are allowed; concepts of one strongly connected component do not
// gate each other.
class ConceptMap {
public:
  ConceptMap() = default;
  ConceptMap(std::vector<Concept> concepts, std::vector<Arc> arcs);

  const std::vector<Concept>& concepts() const { return concepts_; }  // sorted by id
  const std::vector<Arc>& arcs() const { return arcs_; }
  std::size_t size() const { return concepts_.size(); }

  const Concept* find(std::string_view id) const;
  const Concept& at(std::string_view id) const;  // UnknownConcept if absent

  // Index of the strongly connected component containing `id`.
  std::size_t component(std::string_view id) const;
  std::size_t component_count() const { return component_count_; }

  // In-neighbours outside the concept's own component, sorted by id.
  const std::vector<std::string>& prerequisites(std::string_view id) const;
  // Arcs into `id` from outside its component.
  std::vector<Arc> prerequisite_arcs(std::string_view id) const;

  // Concepts whose label contains the question, sorted by id.
  std::vector<std::string> concepts_of_question(std::string_view question_id) const;

  // One human-readable warning per cycle (non-trivial component).
  const std::vector<std::string>& warnings() const { return warnings_; }

private:
  std::size_t index_of(std::string_view id) const;

  std::vector<Concept> concepts_;
  std::vector<Arc> arcs_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::vector<std::size_t> component_;
  std::size_t component_count_ = 0;
  std::vector<std::vector<std::string>> prerequisites_;
  std::map<std::string, std::vector<std::string>, std::less<>> question_concepts_;
  std::vector<std::string> warnings_;
};

// Nodes CSV `concept_id,question_ids` (';'-separated); arcs CSV `from,to,weight`.
ConceptMap load_concept_map(const std::filesystem::path& nodes_path, const std::filesystem::path& arcs_path);
ConceptMap parse_concept_map(std::string_view nodes_csv, std::string_view arcs_csv);

struct MasteryCriterion {
  double min_correct_fraction = 0.7;
  double min_coverage_fraction = 0.5;

  void validate() const;
};

struct ConceptProgress {
  std::size_t answered = 0;  // distinct questions with a non-skipped answer
  std::size_t correct = 0;   // of those, latest answer correct
  std::size_t total = 0;
};

ConceptProgress concept_progress(const Concept& c, std::span<const InteractionEvent> history);

// Coverage and correctness thresholds over the latest answer per question.
bool concept_mastered(const Concept& c, std::span<const InteractionEvent> history, const MasteryCriterion& criterion);

struct NextConcept {
  std::optional<std::string> concept_id;  // nullopt: every concept is done
  bool forced = false;                    // picked by ignoring blocking arcs (Stuck)
};

// Among unfinished concepts whose prerequisites are all in `done`, the one
// with most incoming weight from `done`; ties by smallest id.
NextConcept next_concept(const ConceptMap& map, const std::set<std::string>& done);

struct IndicatorProfile {
  double correct_fraction = 0.0;    // student's correct share in the concept so far
  double coverage = 0.0;            // share of the question's keywords not yet seen this session
  double p_correct_estimate = 0.0;

  bool operator==(const IndicatorProfile&) const = default;
};

struct WalkConfig {
  double p_correct_weight = 0.7;
  double novelty_weight = 0.3;
  MasteryCriterion mastery;
};

// Estimated probability that the student answers a question correctly.
using CorrectnessEstimator = std::function<double(std::string_view question_id)>;

double scalarize(const IndicatorProfile& profile, const WalkConfig& config);

// Greedy pick inside a concept over `pool` questions not yet asked.
// Throws ConceptExhausted when none remain.
Recommendation next_question_in_concept(const Concept& c, const SessionState& session,
                                        std::span<const std::string> pool, const QuestionBank& bank,
                                        std::span<const InteractionEvent> history,
                                        const CorrectnessEstimator& estimator, const WalkConfig& config);

// Two-level walk: concept tour on top, greedy question choice inside.
// `history` holds every answer of the student that counts toward mastery
// (it normally includes the current session). Returns nullopt when every
// concept is mastered; throws PoolExhausted when unmastered concepts have no
// unasked pool questions left.
std::optional<Recommendation> recommend_concept_walk(const SessionState& session, const ConceptMap& map,
                                                     std::span<const std::string> pool, const QuestionBank& bank,
                                                     std::span<const InteractionEvent> history,
                                                     const CorrectnessEstimator& estimator,
                                                     const WalkConfig& config = {});

}  // namespace learnpath

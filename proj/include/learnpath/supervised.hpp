#pragma once

#include "learnpath/domain.hpp"
#include "learnpath/forest.hpp"
#include "learnpath/recommendation.hpp"

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace learnpath {

// Layout of a feature vector:
//   [background fields in name order]
//   [candidate: is_difficult, teacher_level, population success rate]
//   [session aggregates over answers so far, see kSessionFeatureNames]
// Categorical background fields are encoded as the index of the value in the
// sorted category list seen at schema build time (unknown values map to -1).
class FeatureSchema {
public:
  static constexpr int kVersion = 1;

  FeatureSchema() = default;
  // Fields and category vocabularies are taken from the imputed profiles.
  explicit FeatureSchema(std::span<const BackgroundProfile> profiles);

  std::size_t dimension() const;
  std::vector<std::string> feature_names() const;
  const std::vector<std::string>& fields() const { return fields_; }

  std::vector<double> encode_background(const BackgroundProfile* profile) const;

  bool operator==(const FeatureSchema&) const = default;

  friend void to_json(nlohmann::json& j, const FeatureSchema& s);
  friend void from_json(const nlohmann::json& j, FeatureSchema& s);

private:
  std::vector<std::string> fields_;
  std::map<std::string, std::vector<std::string>> categories_;  // categorical fields only
  std::map<std::string, double> defaults_;  // encoded mode, used for users without a profile
};

inline const std::vector<std::string> kCandidateFeatureNames = {"cand_difficult", "cand_teacher_level",
                                                                "cand_success_rate"};
inline const std::vector<std::string> kSessionFeatureNames = {
    "sess_answered",     "sess_correct_frac", "sess_skipped",        "sess_dont_know",
    "sess_mean_elapsed", "sess_mean_clicks",  "sess_mean_difficult", "sess_mean_success_rate"};

// Fixed-length statistics over the answers already given in the session.
// All zeros before the first answer.
std::vector<double> session_aggregates(std::span<const InteractionEvent> prior, const QuestionBank& bank,
                                       const SuccessRates& rates);

std::vector<double> build_features(const FeatureSchema& schema, const BackgroundProfile* profile,
                                   std::span<const InteractionEvent> prior, const Question& candidate,
                                   const QuestionBank& bank, const SuccessRates& rates);

struct SupervisedDataset {
  std::vector<TrainingRow> correctness;  // label 1 = correct
  std::vector<TrainingRow> time;         // label = elapsed_ms, clipped
  double time_clip_ms = 0.0;
};

// One row per non-skipped answer in the log, featurized with the answers that
// preceded it in the same session. Time labels are clipped at the 99th
// percentile.
SupervisedDataset build_training_set(const FeatureSchema& schema, std::span<const InteractionEvent> log,
                                     const std::map<std::string, BackgroundProfile>& profiles,
                                     const QuestionBank& bank, const SuccessRates& rates);

struct SupervisedModel {
  FeatureSchema schema;
  std::optional<ForestModel> correctness;  // nullopt: cold model
  std::optional<ForestModel> time;
};

struct SupervisedTrainConfig {
  ForestConfig forest;  // mode is overridden per model
};

// Trains both forests; leaves the model cold when the log has fewer than two
// usable rows.
SupervisedModel train_supervised(std::span<const InteractionEvent> log, std::span<const BackgroundProfile> profiles,
                                 const QuestionBank& bank, const SupervisedTrainConfig& config = {});

void to_json(nlohmann::json& j, const SupervisedModel& m);
void from_json(const nlohmann::json& j, SupervisedModel& m);

struct CandidateEstimate {
  std::string question_id;
  double p_correct = 0.0;
  double expected_time_ms = 0.0;
};

// One estimate per pool question. Throws SchemaMismatch when the models were
// trained on a different feature layout and EmptyPool on an empty pool.
std::vector<CandidateEstimate> estimate_candidates(const SupervisedModel& model, const SessionState& session,
                                                   const BackgroundProfile* profile, std::span<const std::string> pool,
                                                   const QuestionBank& bank, const SuccessRates& rates);

struct HeuristicConfig {
  double lambda = 0.3;
  double t_ref_ms = 120000.0;
};

// Utility p - lambda * min(t / t_ref, 1), argmax with smallest-id ties, after
// removing questions already answered correctly in earlier tests (unless that
// removes everything). Throws EmptyEstimates.
Recommendation select_by_heuristic(std::span<const CandidateEstimate> estimates, const HeuristicConfig& config,
                                   const std::set<std::string>& served_correct);

double heuristic_utility(const CandidateEstimate& e, const HeuristicConfig& config);

// Full bottom-layer step: estimate unasked pool questions, then select. A cold
// model falls back to teacher_level ascending.
Recommendation recommend_supervised(const SessionState& session, const SupervisedModel& model,
                                    const BackgroundProfile* profile, std::span<const std::string> pool,
                                    const QuestionBank& bank, const SuccessRates& rates,
                                    const std::set<std::string>& served_correct, const HeuristicConfig& config = {});

// Questions the user answered correctly in sessions other than `current_session`.
std::set<std::string> served_correct_before(std::span<const InteractionEvent> log, std::string_view user_id,
                                            std::string_view current_session);

}  // namespace learnpath

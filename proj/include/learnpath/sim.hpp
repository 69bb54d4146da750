#pragma once

#include "learnpath/concept_map.hpp"
#include "learnpath/domain.hpp"
#include "learnpath/strategy.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

namespace learnpath {

struct TimeModel {
  double base_ms = 20000.0;
  double difficult_ms = 20000.0;  // added for Difficult questions
  double noise_ms = 10000.0;      // uniform in [0, noise_ms)
};

struct SimulatedStudent {
  std::string id;
  std::map<std::string, double> skill;  // per keyword, missing = 0
  double discrimination = 1.5;
  double dont_know_rate = 0.1;
  TimeModel time;

  void validate() const;  // InvalidValue
};

inline constexpr double kBasicOffset = 0.0;
inline constexpr double kDifficultOffset = 1.0;

// logistic(a * (mean keyword skill - difficulty offset)).
double p_correct(const SimulatedStudent& student, const Question& question);

// Correct with probability p, otherwise DontKnow with probability
// dont_know_rate, otherwise Wrong. Session and timestamp are left to the caller.
InteractionEvent simulate_answer(const SimulatedStudent& student, const Question& question, std::mt19937_64& rng);

// Practice raises the skill on the question's keywords by `gain`, or by
// `gated_gain` while some prerequisite concept of the question is unmastered.
struct LearningDynamics {
  double gain = 0.5;
  double gated_gain = 0.0;
};

bool prerequisites_met(const ConceptMap& map, const Question& question, std::span<const InteractionEvent> history,
                       const MasteryCriterion& mastery);
void apply_learning(SimulatedStudent& student, const Question& question, bool prerequisites_ok,
                    const LearningDynamics& dynamics);

struct StudentPopulation {
  double skill_mean = -1.0;
  double skill_sd = 0.0;
  double discrimination = 1.5;
  double dont_know_rate = 0.1;
  TimeModel time;
  LearningDynamics learning;
};

struct ExperimentConfig {
  QuestionBank bank;
  ConceptMap map;
  std::optional<std::string> topic;  // nullopt: the whole bank
  std::vector<std::string> strategies;
  std::size_t population = 0;
  std::vector<std::uint64_t> seeds;
  std::size_t session_length = 5;
  std::size_t max_questions = 200;
  std::size_t warmup_students = 0;  // random-strategy students whose log trains cf and supervised
  StudentPopulation students;
  MasteryCriterion mastery;
  nlohmann::json echo;  // the parsed config, copied into the summary
};

// Paths in `j` are resolved against `base_dir`. Throws ConfigError naming the field.
ExperimentConfig parse_experiment_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct RunRecord {
  std::string strategy;
  std::size_t student = 0;
  std::uint64_t seed = 0;
  std::size_t questions_to_mastery = 0;  // max_questions when mastery was not reached
  bool mastered = false;
  double correct_rate = 0.0;
  double coverage = 0.0;                       // share of pool keywords seen
  std::vector<double> correct_rate_by_session;  // running correct rate after each session
  std::vector<std::vector<std::string>> transcripts;  // questions served, per session
};

struct ExperimentResult {
  std::vector<RunRecord> runs;  // strategy-major, then seed, then student

  // Mean questions-to-mastery per strategy.
  std::map<std::string, double> mean_questions_to_mastery() const;
};

ExperimentResult run_experiment(const ExperimentConfig& config);

// Header `strategy,student,seed,questions_to_mastery,correct_rate,coverage`,
// rates with six decimals.
std::string results_csv(const ExperimentResult& result);
nlohmann::json results_summary(const ExperimentConfig& config, const ExperimentResult& result);
// Writes results.csv and summary.json into `dir`, creating it if needed.
void write_experiment_outputs(const ExperimentConfig& config, const ExperimentResult& result,
                              const std::filesystem::path& dir);

// Pool for the configured topic, sorted by id.
std::vector<std::string> experiment_pool(const ExperimentConfig& config);

}  // namespace learnpath

#pragma once

#include "learnpath/concept_map.hpp"
#include "learnpath/domain.hpp"
#include "learnpath/recommendation.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace learnpath {

// Tabular abstraction of the learner: which concepts are mastered, how well
// the current session goes, and where the walk currently is.
struct LearningState {
  std::vector<bool> concept_mastery;  // one bit per concept, in map order
  int progress_bucket = 0;            // floor(4 * correct share of the session)
  std::optional<std::string> current_concept;

  // Stable text key, e.g. "0110|2|C3" ("-" for no concept).
  std::string encode() const;
  bool operator==(const LearningState&) const = default;
};

// Bucket of a correct share in [0,1]: 0..4 in steps of 0.25.
int progress_bucket(double correct_share);

LearningState observe_state(const ConceptMap& map, std::span<const InteractionEvent> history,
                            std::span<const InteractionEvent> session_events,
                            const std::optional<std::string>& current_concept, const MasteryCriterion& mastery = {});

// Q(state, action) with 0 for every unseen pair.
class QTable {
public:
  double get(std::string_view state, std::string_view action) const;
  void set(const std::string& state, const std::string& action, double value);
  // Largest Q over `actions`; 0 when `actions` is empty.
  double max_over(std::string_view state, std::span<const std::string> actions) const;

  std::size_t size() const;
  const std::map<std::string, std::map<std::string, double, std::less<>>, std::less<>>& entries() const {
    return q_;
  }
  bool operator==(const QTable&) const = default;

private:
  std::map<std::string, std::map<std::string, double, std::less<>>, std::less<>> q_;
};

void to_json(nlohmann::json& j, const QTable& t);
void from_json(const nlohmann::json& j, QTable& t);
void save_qtable(const QTable& t, const std::filesystem::path& path);
QTable load_qtable(const std::filesystem::path& path);

struct RewardSpec {
  double gamma = 0.9;
  double alpha_lr = 0.1;
  double epsilon = 0.2;
  double epsilon_decay = 0.99;  // applied once per episode
  double r_complete = 10.0;
  double correct_factor = 1.0;
  double wrong_factor = 0.25;
  double dont_know_factor = 0.0;
  double time_weight = 0.0;  // optional penalty per minute of elapsed time

  void validate() const;  // ConfigError
};

// (1 - success rate of the question) times the outcome factor, minus the
// optional time penalty. Skipped answers earn nothing.
double dense_reward(const InteractionEvent& answer, const SuccessRates& rates, const RewardSpec& spec = {});
double dense_reward(std::string_view question_id, Outcome outcome, std::span<const InteractionEvent> events,
                    const RewardSpec& spec = {});

// r_complete scaled by the covered share of `required` (r_complete when
// `required` is empty).
double sparse_reward(std::span<const std::string> path, const std::set<std::string>& required,
                     double r_complete = 10.0);

// One Q-learning step. An empty `next_actions` marks a terminal successor.
void q_update(QTable& table, const std::string& state, const std::string& action, double reward,
              std::string_view next_state, std::span<const std::string> next_actions, const RewardSpec& spec);

// With probability epsilon a uniform choice, otherwise argmax Q with
// smallest-id ties. `actions` must be non-empty.
std::string epsilon_greedy(const QTable& table, std::string_view state, std::span<const std::string> actions,
                           double epsilon, std::mt19937_64& rng);

// Episode bookkeeping: dense updates per step, sparse reward spread evenly
// over the episode's pairs at the end, epsilon decay per episode.
class QLearner {
public:
  explicit QLearner(RewardSpec spec = {}, QTable table = {});

  const QTable& table() const { return table_; }
  QTable& table() { return table_; }
  const RewardSpec& spec() const { return spec_; }
  double epsilon() const { return epsilon_; }

  void step(const std::string& state, const std::string& action, double reward, std::string_view next_state,
            std::span<const std::string> next_actions);
  void end_episode(double sparse);

private:
  RewardSpec spec_;
  QTable table_;
  double epsilon_;
  std::vector<std::pair<std::string, std::string>> episode_;
};

struct PlannedPath {
  std::vector<std::string> concepts;
  double cost = 0.0;
};

// Covers `required` in an order that never puts a concept before one of its
// prerequisites. Each round enters the cheapest reachable required concept,
// where reaching it costs its not-yet-visited prerequisite closure. Concepts
// missing from `costs` cost 0; an infinite cost blocks a concept and makes
// anything depending on it Infeasible.
PlannedPath plan_path_dijkstra(const ConceptMap& map, const std::set<std::string>& required,
                               const std::map<std::string, double>& costs);

// Mean (1 - success rate) over each concept's questions.
std::map<std::string, double> concept_failure_costs(const ConceptMap& map, const SuccessRates& rates);

// `from,to` rows meaning "from comes before to".
std::vector<Arc> parse_topic_order(std::string_view csv_text);
std::vector<Arc> load_topic_order(const std::filesystem::path& path);

// First concept of `path` that is neither mastered nor out of unasked pool
// questions; nullopt when the path is finished.
std::optional<std::string> current_path_concept(const ConceptMap& map, std::span<const std::string> path,
                                                const SessionState& session, std::span<const std::string> pool,
                                                std::span<const InteractionEvent> history,
                                                const MasteryCriterion& mastery = {});

// Epsilon-greedy over the unasked pool questions of the current path concept
// (all unasked pool questions once the path is finished). The ranking carries
// raw Q-values. Throws EmptyPool.
Recommendation recommend_rl(const SessionState& session, const QTable& table, const ConceptMap& map,
                            std::span<const std::string> path, std::span<const std::string> pool,
                            std::span<const InteractionEvent> history, double epsilon, std::mt19937_64& rng,
                            const MasteryCriterion& mastery = {});

}  // namespace learnpath

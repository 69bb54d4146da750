#pragma once

#include "learnpath/cluster.hpp"
#include "learnpath/collab_filter.hpp"
#include "learnpath/concept_map.hpp"
#include "learnpath/domain.hpp"
#include "learnpath/recommendation.hpp"
#include "learnpath/rl.hpp"
#include "learnpath/supervised.hpp"

#include <memory>
#include <mutex>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace learnpath {

enum class Layer { Top, Bottom, Control };
std::string_view to_string(Layer layer);

struct StrategyInfo {
  std::string name;
  Layer layer;
};

// The five strategies plus the random control, in a fixed order.
const std::vector<StrategyInfo>& strategy_catalog();
bool is_known_strategy(std::string_view name);

// Everything a strategy may read when choosing. Spans must outlive the call.
struct StrategyContext {
  const QuestionBank& bank;
  const ConceptMap& map;
  std::span<const InteractionEvent> log;      // all recorded answers, every user
  std::span<const InteractionEvent> history;  // this student's answers, current session included
  const BackgroundProfile* profile = nullptr;
  std::mt19937_64& rng;
};

// Q-learning state shared by every session of the rl strategy. Updates are
// serialized; recommendations read under the same lock.
class RlAgent {
public:
  explicit RlAgent(RewardSpec spec = {}, QTable table = {});

  Recommendation recommend(const SessionState& session, std::span<const std::string> pool,
                           const StrategyContext& ctx);
  // Dense update for the answer just recorded in `session`.
  void learn(const SessionState& session, std::span<const std::string> pool, const StrategyContext& ctx);
  // Sparse reward over the session's pairs, then epsilon decay.
  void finish(const SessionState& session, std::span<const std::string> pool, const StrategyContext& ctx);

  QTable table() const;
  double epsilon() const;
  // Drops zero entries; returns the number removed.
  std::size_t compact();

  MasteryCriterion mastery;

private:
  struct Pending {
    std::string state;
    std::string action;
  };
  std::vector<std::string> planned_path(std::span<const std::string> pool, const StrategyContext& ctx) const;
  std::vector<std::string> actions_for(const SessionState& session, std::span<const std::string> pool,
                                       const std::vector<std::string>& path, const StrategyContext& ctx,
                                       std::string& state_key) const;

  mutable std::mutex mu_;
  QLearner learner_;
  std::map<std::string, Pending> pending_;  // by session id
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> episodes_;
};

// Immutable model set a strategy reads from. Null models mean "not trained".
struct StrategyResources {
  std::shared_ptr<const FactorModel> factor;
  std::shared_ptr<const SupervisedModel> supervised;
  std::shared_ptr<RlAgent> rl;
  WalkConfig walk;
  HybridConfig hybrid;
  KMeansConfig kmeans;
  ScoreWeights score_weights;
  HeuristicConfig heuristic;
};

// Next-question contract shared by every strategy: given the session so far
// and the pool, return an unasked pool question. Throws EmptyPool when none
// is left.
class Strategy {
public:
  virtual ~Strategy() = default;
  virtual const StrategyInfo& info() const = 0;
  virtual Recommendation next(const SessionState& session, std::span<const std::string> pool,
                              const StrategyContext& ctx) = 0;
  // Called after each answer has been recorded in `session`.
  virtual void observe(const SessionState&, std::span<const std::string>, const StrategyContext&) {}
  // Called once when the session ends.
  virtual void finish(const SessionState&, std::span<const std::string>, const StrategyContext&) {}
};

// Throws InvalidValue for unknown names.
std::unique_ptr<Strategy> make_strategy(std::string_view name, const StrategyResources& resources);

// Uniform choice over the unasked pool questions. Throws EmptyPool.
Recommendation random_baseline(std::span<const std::string> pool, std::mt19937_64& rng);

}  // namespace learnpath

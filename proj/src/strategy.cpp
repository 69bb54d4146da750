#include "learnpath/strategy.hpp"

#include "learnpath/error.hpp"

#include <algorithm>

namespace learnpath {

std::string_view to_string(Layer layer) {
  switch (layer) {
    case Layer::Top: return "top";
    case Layer::Bottom: return "bottom";
    case Layer::Control: return "control";
  }
  return "?";
}

const std::vector<StrategyInfo>& strategy_catalog() {
  static const std::vector<StrategyInfo> catalog = {
      {"concept_map", Layer::Top},
      {"collaborative_filtering", Layer::Bottom},
      {"clustering", Layer::Top},
      {"supervised", Layer::Bottom},
      {"reinforcement_learning", Layer::Top},
      {"random", Layer::Control},
  };
  return catalog;
}

bool is_known_strategy(std::string_view name) {
  const auto& c = strategy_catalog();
  return std::any_of(c.begin(), c.end(), [&](const StrategyInfo& s) { return s.name == name; });
}

Recommendation random_baseline(std::span<const std::string> pool, std::mt19937_64& rng) {
  if (pool.empty()) throw Error(ErrorCode::EmptyPool, "no questions to choose from");
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  Recommendation rec;
  rec.question_id = pool[pick(rng)];
  rec.ranking.push_back({rec.question_id, 1.0 / static_cast<double>(pool.size()), {}});
  return rec;
}

namespace {

const StrategyInfo& info_of(std::string_view name) {
  for (const auto& s : strategy_catalog()) {
    if (s.name == name) return s;
  }
  throw Error(ErrorCode::InvalidValue, "unknown strategy '" + std::string(name) + "'");
}

std::vector<std::string> unasked_or_throw(const SessionState& session, std::span<const std::string> pool) {
  auto out = session.unasked(pool);
  if (out.empty()) throw Error(ErrorCode::EmptyPool, "no unasked questions in the pool");
  return out;
}

// Concepts of the pool questions, first-seen order of `ids`.
std::vector<std::string> concepts_touched(const ConceptMap& map, std::span<const std::string> ids) {
  std::vector<std::string> out;
  for (const auto& q : ids) {
    for (const auto& c : map.concepts_of_question(q)) {
      if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
    }
  }
  return out;
}

class ConceptMapStrategy : public Strategy {
public:
  explicit ConceptMapStrategy(WalkConfig walk) : walk_(walk) {}
  const StrategyInfo& info() const override { return info_of("concept_map"); }

  Recommendation next(const SessionState& session, std::span<const std::string> pool,
                      const StrategyContext& ctx) override {
    auto unasked = unasked_or_throw(session, pool);
    SuccessRates rates(ctx.log);
    auto estimator = [&](std::string_view q) { return rates.rate(q); };
    try {
      if (auto rec = recommend_concept_walk(session, ctx.map, pool, ctx.bank, ctx.history, estimator, walk_)) {
        return *rec;
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::PoolExhausted) throw;
    }
    // Every reachable concept is done: keep the test going in id order.
    Recommendation rec;
    rec.question_id = unasked.front();
    for (const auto& q : unasked) rec.ranking.push_back({q, 0.0, {{"fallback", 1.0}}});
    return rec;
  }

private:
  WalkConfig walk_;
};

class CollaborativeStrategy : public Strategy {
public:
  CollaborativeStrategy(std::shared_ptr<const FactorModel> model, HybridConfig config)
      : model_(std::move(model)), config_(config) {}
  const StrategyInfo& info() const override { return info_of("collaborative_filtering"); }

  Recommendation next(const SessionState& session, std::span<const std::string> pool,
                      const StrategyContext& ctx) override {
    unasked_or_throw(session, pool);
    static const FactorModel untrained;
    const FactorModel& model = model_ ? *model_ : untrained;
    auto matrix = build_rating_matrix(ctx.log, ctx.bank);
    return recommend_collaborative(session, matrix, model, pool, ctx.bank, config_);
  }

private:
  std::shared_ptr<const FactorModel> model_;
  HybridConfig config_;
};

class ClusterStrategy : public Strategy {
public:
  ClusterStrategy(KMeansConfig kmeans, ScoreWeights weights) : kmeans_(kmeans), weights_(weights) {}
  const StrategyInfo& info() const override { return info_of("clustering"); }

  Recommendation next(const SessionState& session, std::span<const std::string> pool,
                      const StrategyContext& ctx) override {
    unasked_or_throw(session, pool);
    SuccessRates rates(ctx.log);
    std::vector<QuestionScore> scores;
    std::vector<Question> questions;
    for (const auto& q : pool) {
      scores.push_back(phase1_score(ctx.bank.at(q), rates, weights_));
      questions.push_back(ctx.bank.at(q));
    }
    auto config = kmeans_;
    config.k = std::min(config.k, scores.size());
    auto clustering = phase2_cluster(scores, config);
    KeywordGraph graph(questions);
    return phase4_next(session, clustering, graph, pool);
  }

private:
  KMeansConfig kmeans_;
  ScoreWeights weights_;
};

class SupervisedStrategy : public Strategy {
public:
  SupervisedStrategy(std::shared_ptr<const SupervisedModel> model, HeuristicConfig config)
      : model_(std::move(model)), config_(config) {}
  const StrategyInfo& info() const override { return info_of("supervised"); }

  Recommendation next(const SessionState& session, std::span<const std::string> pool,
                      const StrategyContext& ctx) override {
    unasked_or_throw(session, pool);
    static const SupervisedModel cold;
    const SupervisedModel& model = model_ ? *model_ : cold;
    SuccessRates rates(ctx.log);
    auto served = served_correct_before(ctx.log, session.user_id, session.session_id);
    return recommend_supervised(session, model, ctx.profile, pool, ctx.bank, rates, served, config_);
  }

private:
  std::shared_ptr<const SupervisedModel> model_;
  HeuristicConfig config_;
};

class RlStrategy : public Strategy {
public:
  explicit RlStrategy(std::shared_ptr<RlAgent> agent)
      : agent_(agent ? std::move(agent) : std::make_shared<RlAgent>()) {}
  const StrategyInfo& info() const override { return info_of("reinforcement_learning"); }

  Recommendation next(const SessionState& session, std::span<const std::string> pool,
                      const StrategyContext& ctx) override {
    return agent_->recommend(session, pool, ctx);
  }
  void observe(const SessionState& session, std::span<const std::string> pool, const StrategyContext& ctx) override {
    agent_->learn(session, pool, ctx);
  }
  void finish(const SessionState& session, std::span<const std::string> pool, const StrategyContext& ctx) override {
    agent_->finish(session, pool, ctx);
  }

private:
  std::shared_ptr<RlAgent> agent_;
};

class RandomStrategy : public Strategy {
public:
  const StrategyInfo& info() const override { return info_of("random"); }

  Recommendation next(const SessionState& session, std::span<const std::string> pool,
                      const StrategyContext& ctx) override {
    return random_baseline(unasked_or_throw(session, pool), ctx.rng);
  }
};

}  // namespace

std::unique_ptr<Strategy> make_strategy(std::string_view name, const StrategyResources& r) {
  if (name == "concept_map") return std::make_unique<ConceptMapStrategy>(r.walk);
  if (name == "collaborative_filtering") return std::make_unique<CollaborativeStrategy>(r.factor, r.hybrid);
  if (name == "clustering") return std::make_unique<ClusterStrategy>(r.kmeans, r.score_weights);
  if (name == "supervised") return std::make_unique<SupervisedStrategy>(r.supervised, r.heuristic);
  if (name == "reinforcement_learning") return std::make_unique<RlStrategy>(r.rl);
  if (name == "random") return std::make_unique<RandomStrategy>();
  throw Error(ErrorCode::InvalidValue, "unknown strategy '" + std::string(name) + "'");
}

RlAgent::RlAgent(RewardSpec spec, QTable table) : learner_(spec, std::move(table)) {}

QTable RlAgent::table() const {
  std::lock_guard lock(mu_);
  return learner_.table();
}

double RlAgent::epsilon() const {
  std::lock_guard lock(mu_);
  return learner_.epsilon();
}

std::size_t RlAgent::compact() {
  std::lock_guard lock(mu_);
  QTable kept;
  std::size_t removed = 0;
  for (const auto& [s, row] : learner_.table().entries()) {
    for (const auto& [a, v] : row) {
      if (v == 0.0) {
        ++removed;
      } else {
        kept.set(s, a, v);
      }
    }
  }
  learner_.table() = std::move(kept);
  return removed;
}

std::vector<std::string> RlAgent::planned_path(std::span<const std::string> pool, const StrategyContext& ctx) const {
  auto required_list = concepts_touched(ctx.map, pool);
  std::set<std::string> required(required_list.begin(), required_list.end());
  if (required.empty()) return {};
  auto costs = concept_failure_costs(ctx.map, SuccessRates(ctx.log));
  return plan_path_dijkstra(ctx.map, required, costs).concepts;
}

std::vector<std::string> RlAgent::actions_for(const SessionState& session, std::span<const std::string> pool,
                                              const std::vector<std::string>& path, const StrategyContext& ctx,
                                              std::string& state_key) const {
  auto unasked = session.unasked(pool);
  auto concept_id = current_path_concept(ctx.map, path, session, pool, ctx.history, mastery);
  state_key = observe_state(ctx.map, ctx.history, session.events, concept_id, mastery).encode();
  if (!concept_id) return unasked;
  std::vector<std::string> out;
  const auto& c = ctx.map.at(*concept_id);
  for (const auto& q : unasked) {
    if (c.question_ids.count(q)) out.push_back(q);
  }
  return out;
}

Recommendation RlAgent::recommend(const SessionState& session, std::span<const std::string> pool,
                                  const StrategyContext& ctx) {
  std::lock_guard lock(mu_);
  auto path = planned_path(pool, ctx);
  auto rec = recommend_rl(session, learner_.table(), ctx.map, path, pool, ctx.history, learner_.epsilon(), ctx.rng,
                          mastery);
  auto state = observe_state(ctx.map, ctx.history, session.events, rec.concept_id, mastery).encode();
  pending_[session.session_id] = {state, rec.question_id};
  return rec;
}

void RlAgent::learn(const SessionState& session, std::span<const std::string> pool, const StrategyContext& ctx) {
  std::lock_guard lock(mu_);
  auto it = pending_.find(session.session_id);
  const auto* last = session.last_event();
  if (it == pending_.end() || !last || last->question_id != it->second.action) return;
  Pending p = it->second;
  pending_.erase(it);

  double reward = dense_reward(*last, SuccessRates(ctx.log), learner_.spec());
  std::string next_state;
  std::vector<std::string> next_actions;
  if (!session.finished) next_actions = actions_for(session, pool, planned_path(pool, ctx), ctx, next_state);
  q_update(learner_.table(), p.state, p.action, reward, next_state, next_actions, learner_.spec());
  episodes_[session.session_id].emplace_back(p.state, p.action);
}

void RlAgent::finish(const SessionState& session, std::span<const std::string> pool, const StrategyContext& ctx) {
  std::lock_guard lock(mu_);
  pending_.erase(session.session_id);
  auto node = episodes_.extract(session.session_id);
  auto required_list = concepts_touched(ctx.map, pool);
  std::set<std::string> required(required_list.begin(), required_list.end());
  auto visited = concepts_touched(ctx.map, session.asked);
  double sparse = sparse_reward(visited, required, learner_.spec().r_complete);
  if (!node.empty() && !node.mapped().empty()) {
    const auto& pairs = node.mapped();
    double share = sparse / static_cast<double>(pairs.size());
    for (const auto& [s, a] : pairs) {
      learner_.table().set(s, a, learner_.table().get(s, a) + learner_.spec().alpha_lr * share);
    }
  }
  learner_.end_episode(0.0);
}

}  // namespace learnpath

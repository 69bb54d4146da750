#include "learnpath/rl.hpp"

#include "learnpath/csv.hpp"
#include "learnpath/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>

namespace learnpath {

std::string LearningState::encode() const {
  std::string key;
  key.reserve(concept_mastery.size() + 8);
  for (bool b : concept_mastery) key += b ? '1' : '0';
  key += '|';
  key += std::to_string(progress_bucket);
  key += '|';
  key += current_concept.value_or("-");
  return key;
}

int progress_bucket(double correct_share) {
  double s = std::clamp(correct_share, 0.0, 1.0);
  return std::clamp(static_cast<int>(std::floor(s * 4.0 + 1e-12)), 0, 4);
}

LearningState observe_state(const ConceptMap& map, std::span<const InteractionEvent> history,
                            std::span<const InteractionEvent> session_events,
                            const std::optional<std::string>& current_concept, const MasteryCriterion& mastery) {
  LearningState s;
  for (const auto& c : map.concepts()) s.concept_mastery.push_back(concept_mastered(c, history, mastery));
  std::size_t answered = 0, correct = 0;
  for (const auto& e : session_events) {
    if (e.outcome == Outcome::Skipped) continue;
    ++answered;
    correct += e.outcome == Outcome::Correct;
  }
  s.progress_bucket = answered == 0 ? 0 : progress_bucket(static_cast<double>(correct) / answered);
  s.current_concept = current_concept;
  return s;
}

double QTable::get(std::string_view state, std::string_view action) const {
  auto row = q_.find(state);
  if (row == q_.end()) return 0.0;
  auto it = row->second.find(action);
  return it == row->second.end() ? 0.0 : it->second;
}

void QTable::set(const std::string& state, const std::string& action, double value) {
  if (!std::isfinite(value)) throw Error(ErrorCode::InvalidValue, "non-finite Q-value for " + state + "/" + action);
  q_[state][action] = value;
}

double QTable::max_over(std::string_view state, std::span<const std::string> actions) const {
  if (actions.empty()) return 0.0;
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& a : actions) best = std::max(best, get(state, a));
  return best;
}

std::size_t QTable::size() const {
  std::size_t n = 0;
  for (const auto& [s, row] : q_) n += row.size();
  return n;
}

void to_json(nlohmann::json& j, const QTable& t) {
  j = nlohmann::json::object();
  for (const auto& [s, row] : t.entries()) {
    auto& out = j[s];
    out = nlohmann::json::object();
    for (const auto& [a, v] : row) out[a] = v;
  }
}

void from_json(const nlohmann::json& j, QTable& t) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "Q-table must be a JSON object");
  t = QTable();
  for (const auto& [s, row] : j.items()) {
    if (!row.is_object()) throw Error(ErrorCode::ParseError, "Q-table row '" + s + "' must be an object");
    for (const auto& [a, v] : row.items()) {
      if (!v.is_number()) throw Error(ErrorCode::ParseError, "Q-value " + s + "/" + a + " is not a number");
      t.set(s, a, v.get<double>());
    }
  }
}

void save_qtable(const QTable& t, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << nlohmann::json(t).dump() << '\n';
}

QTable load_qtable(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in).get<QTable>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

void RewardSpec::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigError, what); };
  if (!(gamma >= 0.0 && gamma < 1.0)) fail("gamma must lie in [0, 1)");
  if (!(alpha_lr > 0.0 && alpha_lr <= 1.0)) fail("alpha_lr must lie in (0, 1]");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) fail("epsilon must lie in [0, 1]");
  if (!(epsilon_decay > 0.0 && epsilon_decay <= 1.0)) fail("epsilon_decay must lie in (0, 1]");
  if (!(r_complete >= 0.0) || !std::isfinite(r_complete)) fail("r_complete must be a non-negative number");
  for (double f : {correct_factor, wrong_factor, dont_know_factor, time_weight}) {
    if (!std::isfinite(f)) fail("reward factors must be finite");
  }
}

namespace {

double outcome_factor(Outcome o, const RewardSpec& spec) {
  switch (o) {
    case Outcome::Correct: return spec.correct_factor;
    case Outcome::Wrong: return spec.wrong_factor;
    case Outcome::DontKnow: return spec.dont_know_factor;
    case Outcome::Skipped: return 0.0;
  }
  return 0.0;
}

double reward_from_rate(double rate, const InteractionEvent& answer, const RewardSpec& spec) {
  if (answer.outcome == Outcome::Skipped) return 0.0;
  double r = (1.0 - rate) * outcome_factor(answer.outcome, spec);
  return r - spec.time_weight * static_cast<double>(answer.elapsed_ms) / 60000.0;
}

}  // namespace

double dense_reward(const InteractionEvent& answer, const SuccessRates& rates, const RewardSpec& spec) {
  return reward_from_rate(rates.rate(answer.question_id), answer, spec);
}

double dense_reward(std::string_view question_id, Outcome outcome, std::span<const InteractionEvent> events,
                    const RewardSpec& spec) {
  InteractionEvent e;
  e.question_id = std::string(question_id);
  e.outcome = outcome;
  return reward_from_rate(question_success_rate(question_id, events), e, spec);
}

double sparse_reward(std::span<const std::string> path, const std::set<std::string>& required, double r_complete) {
  if (required.empty()) return r_complete;
  std::set<std::string> seen(path.begin(), path.end());
  std::size_t hit = 0;
  for (const auto& r : required) hit += seen.count(r);
  if (hit == required.size()) return r_complete;
  return r_complete * static_cast<double>(hit) / static_cast<double>(required.size());
}

void q_update(QTable& table, const std::string& state, const std::string& action, double reward,
              std::string_view next_state, std::span<const std::string> next_actions, const RewardSpec& spec) {
  double q = table.get(state, action);
  double target = reward + spec.gamma * table.max_over(next_state, next_actions);
  table.set(state, action, q + spec.alpha_lr * (target - q));
}

std::string epsilon_greedy(const QTable& table, std::string_view state, std::span<const std::string> actions,
                           double epsilon, std::mt19937_64& rng) {
  if (actions.empty()) throw Error(ErrorCode::EmptyPool, "no actions to choose from");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (unit(rng) < epsilon) {
    std::uniform_int_distribution<std::size_t> pick(0, actions.size() - 1);
    return actions[pick(rng)];
  }
  const std::string* best = nullptr;
  double best_q = 0.0;
  for (const auto& a : actions) {
    double q = table.get(state, a);
    if (!best || q > best_q || (q == best_q && a < *best)) {
      best = &a;
      best_q = q;
    }
  }
  return *best;
}

QLearner::QLearner(RewardSpec spec, QTable table) : spec_(spec), table_(std::move(table)), epsilon_(spec.epsilon) {
  spec_.validate();
}

void QLearner::step(const std::string& state, const std::string& action, double reward,
                    std::string_view next_state, std::span<const std::string> next_actions) {
  q_update(table_, state, action, reward, next_state, next_actions, spec_);
  episode_.emplace_back(state, action);
}

void QLearner::end_episode(double sparse) {
  if (!episode_.empty()) {
    double share = sparse / static_cast<double>(episode_.size());
    for (const auto& [s, a] : episode_) table_.set(s, a, table_.get(s, a) + spec_.alpha_lr * share);
  }
  episode_.clear();
  epsilon_ *= spec_.epsilon_decay;
}

PlannedPath plan_path_dijkstra(const ConceptMap& map, const std::set<std::string>& required,
                               const std::map<std::string, double>& costs) {
  for (const auto& r : required) map.at(r);
  for (const auto& [id, c] : costs) {
    if (std::isnan(c) || c < 0.0) throw Error(ErrorCode::InvalidValue, "negative cost for concept " + id);
  }
  auto cost_of = [&](const std::string& id) {
    auto it = costs.find(id);
    return it == costs.end() ? 0.0 : it->second;
  };

  std::set<std::string> visited;
  // Not-yet-visited prerequisite closure of `target`, target included.
  auto closure = [&](const std::string& target) {
    std::set<std::string> out;
    std::vector<std::string> stack = {target};
    while (!stack.empty()) {
      auto id = stack.back();
      stack.pop_back();
      if (visited.count(id) || !out.insert(id).second) continue;
      for (const auto& p : map.prerequisites(id)) stack.push_back(p);
    }
    return out;
  };

  PlannedPath path;
  std::set<std::string> pending = required;
  while (!pending.empty()) {
    using Entry = std::pair<double, std::string>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> frontier;
    for (const auto& r : pending) {
      double d = 0.0;
      for (const auto& id : closure(r)) d += cost_of(id);
      if (std::isfinite(d)) frontier.emplace(d, r);
    }
    if (frontier.empty()) {
      throw Error(ErrorCode::Infeasible, "required concept '" + *pending.begin() + "' cannot be reached");
    }
    auto [d, target] = frontier.top();
    auto members = closure(target);

    // Enter the closure in prerequisite order, smallest id first among ready ones.
    while (!members.empty()) {
      const std::string* ready = nullptr;
      for (const auto& id : members) {
        const auto& pre = map.prerequisites(id);
        if (std::none_of(pre.begin(), pre.end(), [&](const std::string& p) { return members.count(p) > 0; })) {
          ready = &id;
          break;
        }
      }
      std::string id = *ready;  // the closure is acyclic: prerequisites skip same-component arcs
      members.erase(id);
      visited.insert(id);
      pending.erase(id);
      path.concepts.push_back(id);
      path.cost += cost_of(id);
    }
  }
  return path;
}

std::map<std::string, double> concept_failure_costs(const ConceptMap& map, const SuccessRates& rates) {
  std::map<std::string, double> out;
  for (const auto& c : map.concepts()) {
    double sum = 0.0;
    for (const auto& q : c.question_ids) sum += 1.0 - rates.rate(q);
    out[c.id] = sum / static_cast<double>(c.question_ids.size());
  }
  return out;
}

std::vector<Arc> parse_topic_order(std::string_view csv_text) {
  auto table = csv::parse(csv_text);
  if (table.header != std::vector<std::string>{"from", "to"}) {
    throw Error(ErrorCode::ParseError, "line 1: expected header from,to");
  }
  std::vector<Arc> arcs;
  for (const auto& row : table.rows) {
    if (row.cells.size() != 2) throw Error(ErrorCode::ParseError, "line " + std::to_string(row.line) + ": expected 2 cells");
    arcs.push_back({csv::trim(row.cells[0]), csv::trim(row.cells[1]), 1.0});
  }
  return arcs;
}

std::vector<Arc> load_topic_order(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_topic_order(text);
}

namespace {

std::vector<std::string> concept_candidates(const Concept& c, const std::vector<std::string>& unasked) {
  std::vector<std::string> out;
  for (const auto& q : unasked) {
    if (c.question_ids.count(q)) out.push_back(q);
  }
  return out;
}

}  // namespace

std::optional<std::string> current_path_concept(const ConceptMap& map, std::span<const std::string> path,
                                                const SessionState& session, std::span<const std::string> pool,
                                                std::span<const InteractionEvent> history,
                                                const MasteryCriterion& mastery) {
  auto unasked = session.unasked(pool);
  for (const auto& id : path) {
    const auto& c = map.at(id);
    if (concept_mastered(c, history, mastery)) continue;
    if (concept_candidates(c, unasked).empty()) continue;
    return id;
  }
  return std::nullopt;
}

Recommendation recommend_rl(const SessionState& session, const QTable& table, const ConceptMap& map,
                            std::span<const std::string> path, std::span<const std::string> pool,
                            std::span<const InteractionEvent> history, double epsilon, std::mt19937_64& rng,
                            const MasteryCriterion& mastery) {
  auto unasked = session.unasked(pool);
  if (unasked.empty()) throw Error(ErrorCode::EmptyPool, "no unasked questions in the pool");
  auto concept_id = current_path_concept(map, path, session, pool, history, mastery);
  auto candidates = concept_id ? concept_candidates(map.at(*concept_id), unasked) : unasked;
  std::sort(candidates.begin(), candidates.end());

  auto state = observe_state(map, history, session.events, concept_id, mastery).encode();
  Recommendation rec;
  rec.question_id = epsilon_greedy(table, state, candidates, epsilon, rng);
  rec.concept_id = concept_id;
  for (const auto& q : candidates) {
    double v = table.get(state, q);
    rec.ranking.push_back({q, v, {{"q_value", v}}});
  }
  std::stable_sort(rec.ranking.begin(), rec.ranking.end(),
                   [](const ScoredCandidate& a, const ScoredCandidate& b) { return a.score > b.score; });
  return rec;
}

}  // namespace learnpath

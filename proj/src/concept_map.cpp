#include "learnpath/concept_map.hpp"

#include "learnpath/csv.hpp"
#include "learnpath/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace learnpath {
namespace {

// Tarjan's algorithm; returns the component index per node.
std::vector<std::size_t> tarjan(const std::vector<std::vector<std::size_t>>& adj, std::size_t& count) {
  const std::size_t n = adj.size();
  constexpr std::size_t kUnset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> index(n, kUnset), low(n, 0), comp(n, kUnset);
  std::vector<bool> on_stack(n, false);
  std::vector<std::size_t> stack;
  std::size_t next_index = 0;
  count = 0;

  std::function<void(std::size_t)> visit = [&](std::size_t v) {
    index[v] = low[v] = next_index++;
    stack.push_back(v);
    on_stack[v] = true;
    for (auto w : adj[v]) {
      if (index[w] == kUnset) {
        visit(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack[w]) {
        low[v] = std::min(low[v], index[w]);
      }
    }
    if (low[v] == index[v]) {
      while (true) {
        auto w = stack.back();
        stack.pop_back();
        on_stack[w] = false;
        comp[w] = count;
        if (w == v) break;
      }
      ++count;
    }
  };
  for (std::size_t v = 0; v < n; ++v) {
    if (index[v] == kUnset) visit(v);
  }
  return comp;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

ConceptMap::ConceptMap(std::vector<Concept> concepts, std::vector<Arc> arcs)
    : concepts_(std::move(concepts)), arcs_(std::move(arcs)) {
  std::sort(concepts_.begin(), concepts_.end(), [](const Concept& a, const Concept& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < concepts_.size(); ++i) {
    const auto& c = concepts_[i];
    if (c.id.empty()) throw Error(ErrorCode::InvalidValue, "empty concept id");
    if (c.question_ids.empty()) throw Error(ErrorCode::EmptyConceptLabel, "concept '" + c.id + "' has no questions");
    if (!index_.emplace(c.id, i).second) throw Error(ErrorCode::DuplicateId, "concept '" + c.id + "'");
    for (const auto& q : c.question_ids) question_concepts_[q].push_back(c.id);
  }

  std::vector<std::vector<std::size_t>> adj(concepts_.size());
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& a : arcs_) {
    if (!index_.count(a.from) || !index_.count(a.to)) {
      throw Error(ErrorCode::DanglingArcEndpoint, "arc " + a.from + " -> " + a.to + " references an unknown concept");
    }
    if (a.from == a.to) throw Error(ErrorCode::InvalidValue, "self-loop on '" + a.from + "'");
    if (!(a.weight > 0.0) || !std::isfinite(a.weight)) {
      throw Error(ErrorCode::InvalidValue, "arc " + a.from + " -> " + a.to + " needs a positive weight");
    }
    if (!seen.emplace(a.from, a.to).second) {
      throw Error(ErrorCode::DuplicateId, "arc " + a.from + " -> " + a.to + " listed twice");
    }
    adj[index_of(a.from)].push_back(index_of(a.to));
  }

  component_ = tarjan(adj, component_count_);

  std::vector<std::vector<std::string>> members(component_count_);
  for (std::size_t i = 0; i < concepts_.size(); ++i) members[component_[i]].push_back(concepts_[i].id);
  for (auto& m : members) {
    if (m.size() < 2) continue;
    std::sort(m.begin(), m.end());
    std::string text = "cycle among concepts:";
    for (const auto& id : m) text += " " + id;
    warnings_.push_back(std::move(text));
  }
  std::sort(warnings_.begin(), warnings_.end());

  prerequisites_.assign(concepts_.size(), {});
  for (const auto& a : arcs_) {
    auto from = index_of(a.from);
    auto to = index_of(a.to);
    if (component_[from] != component_[to]) prerequisites_[to].push_back(a.from);
  }
  for (auto& p : prerequisites_) std::sort(p.begin(), p.end());
}

std::size_t ConceptMap::index_of(std::string_view id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw Error(ErrorCode::UnknownConcept, "unknown concept '" + std::string(id) + "'");
  return it->second;
}

const Concept* ConceptMap::find(std::string_view id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &concepts_[it->second];
}

const Concept& ConceptMap::at(std::string_view id) const { return concepts_[index_of(id)]; }

std::size_t ConceptMap::component(std::string_view id) const { return component_[index_of(id)]; }

const std::vector<std::string>& ConceptMap::prerequisites(std::string_view id) const {
  return prerequisites_[index_of(id)];
}

std::vector<Arc> ConceptMap::prerequisite_arcs(std::string_view id) const {
  auto target = index_of(id);
  std::vector<Arc> out;
  for (const auto& a : arcs_) {
    if (a.to == id && component_[index_of(a.from)] != component_[target]) out.push_back(a);
  }
  return out;
}

std::vector<std::string> ConceptMap::concepts_of_question(std::string_view question_id) const {
  auto it = question_concepts_.find(question_id);
  if (it == question_concepts_.end()) return {};
  return it->second;
}

ConceptMap parse_concept_map(std::string_view nodes_csv, std::string_view arcs_csv) {
  auto nodes = csv::parse(nodes_csv);
  if (nodes.header != std::vector<std::string>{"concept_id", "question_ids"}) {
    throw Error(ErrorCode::ParseError, "nodes line 1: expected header concept_id,question_ids");
  }
  std::vector<Concept> concepts;
  for (const auto& row : nodes.rows) {
    if (row.cells.size() != 2) {
      throw Error(ErrorCode::ParseError, "nodes line " + std::to_string(row.line) + ": expected 2 cells");
    }
    Concept c;
    c.id = csv::trim(row.cells[0]);
    if (c.id.empty()) throw Error(ErrorCode::ParseError, "nodes line " + std::to_string(row.line) + ": empty id");
    for (auto& q : csv::split(row.cells[1], ';')) c.question_ids.insert(std::move(q));
    if (c.question_ids.empty()) {
      throw Error(ErrorCode::EmptyConceptLabel,
                  "nodes line " + std::to_string(row.line) + ": concept '" + c.id + "' has no questions");
    }
    concepts.push_back(std::move(c));
  }

  std::vector<Arc> arcs;
  auto arc_table = csv::parse(arcs_csv);
  if (!arc_table.header.empty() || !arc_table.rows.empty()) {
    if (arc_table.header != std::vector<std::string>{"from", "to", "weight"}) {
      throw Error(ErrorCode::ParseError, "arcs line 1: expected header from,to,weight");
    }
  }
  for (const auto& row : arc_table.rows) {
    auto where = "arcs line " + std::to_string(row.line);
    if (row.cells.size() != 3) throw Error(ErrorCode::ParseError, where + ": expected 3 cells");
    Arc a;
    a.from = csv::trim(row.cells[0]);
    a.to = csv::trim(row.cells[1]);
    auto w = csv::trim(row.cells[2]);
    auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), a.weight);
    if (ec != std::errc() || ptr != w.data() + w.size()) throw Error(ErrorCode::ParseError, where + ": bad weight");
    arcs.push_back(std::move(a));
  }
  return ConceptMap(std::move(concepts), std::move(arcs));
}

ConceptMap load_concept_map(const std::filesystem::path& nodes_path, const std::filesystem::path& arcs_path) {
  return parse_concept_map(slurp(nodes_path), slurp(arcs_path));
}

void MasteryCriterion::validate() const {
  auto ok = [](double v) { return v > 0.0 && v <= 1.0; };
  if (!ok(min_correct_fraction) || !ok(min_coverage_fraction)) {
    throw Error(ErrorCode::InvalidValue, "mastery thresholds must lie in (0, 1]");
  }
}

ConceptProgress concept_progress(const Concept& c, std::span<const InteractionEvent> history) {
  std::unordered_map<std::string, Outcome> latest;
  for (const auto& e : history) {
    if (e.outcome == Outcome::Skipped || !c.question_ids.count(e.question_id)) continue;
    latest[e.question_id] = e.outcome;
  }
  ConceptProgress p;
  p.total = c.question_ids.size();
  p.answered = latest.size();
  for (const auto& [q, o] : latest) {
    if (o == Outcome::Correct) ++p.correct;
  }
  return p;
}

bool concept_mastered(const Concept& c, std::span<const InteractionEvent> history, const MasteryCriterion& criterion) {
  auto p = concept_progress(c, history);
  if (p.answered == 0 || p.total == 0) return false;
  double coverage = static_cast<double>(p.answered) / static_cast<double>(p.total);
  double correct = static_cast<double>(p.correct) / static_cast<double>(p.answered);
  return coverage >= criterion.min_coverage_fraction && correct >= criterion.min_correct_fraction;
}

NextConcept next_concept(const ConceptMap& map, const std::set<std::string>& done) {
  struct Candidate {
    const std::string* id;
    double weight;
  };
  auto pick = [&](bool require_prerequisites) -> std::optional<std::string> {
    std::optional<Candidate> best;
    for (const auto& c : map.concepts()) {
      if (done.count(c.id)) continue;
      const auto& pre = map.prerequisites(c.id);
      if (require_prerequisites &&
          !std::all_of(pre.begin(), pre.end(), [&](const std::string& p) { return done.count(p) > 0; })) {
        continue;
      }
      double w = 0.0;
      for (const auto& a : map.prerequisite_arcs(c.id)) {
        if (done.count(a.from)) w += a.weight;
      }
      // Concepts are visited in id order, so strict > keeps the smallest id on ties.
      if (!best || w > best->weight) best = Candidate{&c.id, w};
    }
    if (!best) return std::nullopt;
    return *best->id;
  };

  bool all_done = std::all_of(map.concepts().begin(), map.concepts().end(),
                              [&](const Concept& c) { return done.count(c.id) > 0; });
  if (all_done) return {};
  if (auto id = pick(true)) return {std::move(id), false};
  // Stuck: no unfinished concept has all prerequisites done. Unreachable when
  // prerequisites are taken over the condensation, kept for safety.
  return {pick(false), true};
}

double scalarize(const IndicatorProfile& profile, const WalkConfig& config) {
  return config.p_correct_weight * profile.p_correct_estimate + config.novelty_weight * profile.coverage;
}

Recommendation next_question_in_concept(const Concept& c, const SessionState& session,
                                        std::span<const std::string> pool, const QuestionBank& bank,
                                        std::span<const InteractionEvent> history,
                                        const CorrectnessEstimator& estimator, const WalkConfig& config) {
  std::set<std::string> seen_keywords;
  for (const auto& id : session.asked) {
    if (const auto* q = bank.find(id)) seen_keywords.insert(q->keywords.begin(), q->keywords.end());
  }
  auto progress = concept_progress(c, history);
  double correct_fraction =
      progress.answered == 0 ? 0.0 : static_cast<double>(progress.correct) / static_cast<double>(progress.answered);

  std::set<std::string> in_pool(pool.begin(), pool.end());
  Recommendation rec;
  rec.concept_id = c.id;
  for (const auto& qid : c.question_ids) {
    if (!in_pool.count(qid) || session.has_asked(qid)) continue;
    const auto& q = bank.at(qid);
    std::size_t covered = 0;
    for (const auto& kw : q.keywords) covered += seen_keywords.count(kw);
    IndicatorProfile profile;
    profile.correct_fraction = correct_fraction;
    profile.coverage = 1.0 - static_cast<double>(covered) / static_cast<double>(q.keywords.size());
    profile.p_correct_estimate = std::clamp(estimator(qid), 0.0, 1.0);
    rec.ranking.push_back({qid,
                           scalarize(profile, config),
                           {{"p_correct", profile.p_correct_estimate},
                            {"coverage", profile.coverage},
                            {"correct_fraction", profile.correct_fraction}}});
  }
  if (rec.ranking.empty()) throw Error(ErrorCode::ConceptExhausted, "concept '" + c.id + "' has no unasked questions");
  std::stable_sort(rec.ranking.begin(), rec.ranking.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.question_id < b.question_id;
  });
  rec.question_id = rec.ranking.front().question_id;
  return rec;
}

std::optional<Recommendation> recommend_concept_walk(const SessionState& session, const ConceptMap& map,
                                                     std::span<const std::string> pool, const QuestionBank& bank,
                                                     std::span<const InteractionEvent> history,
                                                     const CorrectnessEstimator& estimator,
                                                     const WalkConfig& config) {
  std::set<std::string> in_pool(pool.begin(), pool.end());
  std::set<std::string> mastered;
  std::set<std::string> done;  // mastered, or no unasked pool question left this session
  for (const auto& c : map.concepts()) {
    bool is_mastered = concept_mastered(c, history, config.mastery);
    bool has_unasked = std::any_of(c.question_ids.begin(), c.question_ids.end(), [&](const std::string& q) {
      return in_pool.count(q) && !session.has_asked(q);
    });
    if (is_mastered) mastered.insert(c.id);
    if (is_mastered || !has_unasked) done.insert(c.id);
  }
  if (mastered.size() == map.size()) return std::nullopt;

  auto eligible = [&](const std::string& id) {
    if (done.count(id)) return false;
    const auto& pre = map.prerequisites(id);
    return std::all_of(pre.begin(), pre.end(), [&](const std::string& p) { return done.count(p) > 0; });
  };

  // Depth-first: stay in the concept of the last served question while it is
  // still open.
  std::optional<std::string> current;
  if (!session.asked.empty()) {
    for (const auto& id : map.concepts_of_question(session.asked.back())) {
      if (eligible(id)) {
        current = id;
        break;
      }
    }
  }
  if (!current) {
    auto next = next_concept(map, done);
    if (!next.concept_id) {
      throw Error(ErrorCode::PoolExhausted, "every unmastered concept is out of unasked questions");
    }
    current = std::move(next.concept_id);
  }
  return next_question_in_concept(map.at(*current), session, pool, bank, history, estimator, config);
}

}  // namespace learnpath

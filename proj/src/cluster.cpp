#include "learnpath/cluster.hpp"

#include "learnpath/csv.hpp"
#include "learnpath/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>

namespace learnpath {

QuestionScore phase1_score(const Question& q, const SuccessRates& rates, const ScoreWeights& weights) {
  if (q.teacher_level < 1 || q.teacher_level > 5) {
    throw Error(ErrorCode::InvalidValue, q.id + ": teacher_level outside 1..5");
  }
  double total = weights.teacher + weights.students;
  if (!(total > 0.0) || weights.teacher < 0.0 || weights.students < 0.0) {
    throw Error(ErrorCode::InvalidValue, "score weights must be non-negative with a positive sum");
  }
  double teacher = (q.teacher_level - 1) / 4.0;
  double failure = 1.0 - rates.rate(q.id);
  double score = (weights.teacher * teacher + weights.students * failure) / total;
  return {q.id, std::clamp(score, 0.0, 1.0)};
}

QuestionScore phase1_score(const Question& q, std::span<const InteractionEvent> events, const ScoreWeights& weights) {
  return phase1_score(q, SuccessRates(events), weights);
}

std::size_t DifficultyClustering::cluster_of(const std::string& question_id) const {
  auto it = assignments.find(question_id);
  if (it == assignments.end()) throw Error(ErrorCode::UnknownQuestion, "'" + question_id + "' is not clustered");
  return it->second;
}

double within_cluster_sse(std::span<const double> values, std::span<const std::size_t> labels, std::size_t k) {
  std::vector<double> sum(k, 0.0);
  std::vector<std::size_t> count(k, 0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum[labels[i]] += values[i];
    ++count[labels[i]];
  }
  double sse = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    double mean = sum[labels[i]] / static_cast<double>(count[labels[i]]);
    sse += (values[i] - mean) * (values[i] - mean);
  }
  return sse;
}

namespace {

struct LloydRun {
  std::vector<double> centroids;
  std::vector<std::size_t> labels;
  std::vector<double> sse_history;
  double sse = 0.0;
};

std::vector<double> kmeans_plus_plus(std::span<const double> x, std::size_t k, std::mt19937_64& rng) {
  std::vector<double> centers;
  std::uniform_int_distribution<std::size_t> first(0, x.size() - 1);
  centers.push_back(x[first(rng)]);
  std::vector<double> d2(x.size());
  while (centers.size() < k) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (double c : centers) best = std::min(best, (x[i] - c) * (x[i] - c));
      d2[i] = best;
    }
    std::discrete_distribution<std::size_t> pick(d2.begin(), d2.end());
    centers.push_back(x[pick(rng)]);
  }
  return centers;
}

std::size_t nearest(double v, const std::vector<double>& centroids) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < centroids.size(); ++c) {
    if (std::abs(v - centroids[c]) < std::abs(v - centroids[best])) best = c;
  }
  return best;
}

LloydRun lloyd(std::span<const double> x, std::vector<double> centroids, std::size_t max_iters) {
  const std::size_t k = centroids.size();
  LloydRun run;
  run.labels.assign(x.size(), k);  // k = unassigned
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      auto c = nearest(x[i], centroids);
      if (c != run.labels[i]) {
        run.labels[i] = c;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<double> sum(k, 0.0);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      sum[run.labels[i]] += x[i];
      ++count[run.labels[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] > 0) centroids[c] = sum[c] / static_cast<double>(count[c]);
    }
    double sse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double d = x[i] - centroids[run.labels[i]];
      sse += d * d;
    }
    run.sse_history.push_back(sse);
  }
  run.centroids = std::move(centroids);
  run.sse = run.sse_history.empty() ? 0.0 : run.sse_history.back();
  return run;
}

}  // namespace

DifficultyClustering phase2_cluster(std::span<const QuestionScore> scores, const KMeansConfig& config) {
  if (config.k == 0) throw Error(ErrorCode::InvalidValue, "k must be at least 1");
  if (scores.size() < config.k) {
    throw Error(ErrorCode::TooFewPoints, std::to_string(scores.size()) + " scores for k=" + std::to_string(config.k));
  }
  std::vector<double> x;
  x.reserve(scores.size());
  for (const auto& s : scores) x.push_back(s.score);

  // Duplicate scores cannot fill more clusters than there are distinct values.
  std::set<double> distinct(x.begin(), x.end());
  const std::size_t k = std::min(config.k, distinct.size());

  std::mt19937_64 rng(config.seed);
  std::optional<LloydRun> best;
  for (std::size_t r = 0; r < std::max<std::size_t>(1, config.restarts); ++r) {
    auto run = lloyd(x, kmeans_plus_plus(x, k, rng), config.max_iters);
    if (!best || run.sse < best->sse) best = std::move(run);
  }

  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return best->centroids[a] < best->centroids[b];
  });
  std::vector<std::size_t> relabel(k);
  for (std::size_t i = 0; i < k; ++i) relabel[order[i]] = i;

  DifficultyClustering out;
  out.k = k;
  for (std::size_t i = 0; i < k; ++i) out.centroids.push_back(best->centroids[order[i]]);
  for (std::size_t i = 0; i < scores.size(); ++i) out.assignments[scores[i].question_id] = relabel[best->labels[i]];
  out.sse = best->sse;
  out.sse_history = std::move(best->sse_history);
  return out;
}

void write_clustering_csv(const DifficultyClustering& clustering, std::span<const QuestionScore> scores,
                          const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "question_id,score,cluster\n";
  char buf[32];
  for (const auto& s : scores) {
    std::snprintf(buf, sizeof buf, "%.6f", s.score);
    out << csv::escape(s.question_id) << ',' << buf << ',' << clustering.cluster_of(s.question_id) << '\n';
  }
}

KeywordGraph::KeywordGraph(std::span<const Question> questions) {
  for (const auto& q : questions) {
    auto [it, inserted] = keywords_.emplace(q.id, q.keywords);
    if (!inserted) throw Error(ErrorCode::DuplicateId, "question '" + q.id + "' added twice");
    for (const auto& kw : q.keywords) ++degree_[kw];
  }
}

const std::set<std::string>& KeywordGraph::keywords(const std::string& question_id) const {
  auto it = keywords_.find(question_id);
  if (it == keywords_.end()) throw Error(ErrorCode::UnknownQuestion, "'" + question_id + "' is not in the graph");
  return it->second;
}

std::size_t KeywordGraph::keyword_degree(const std::string& keyword) const {
  auto it = degree_.find(keyword);
  return it == degree_.end() ? 0 : it->second;
}

std::size_t KeywordGraph::total_keyword_degree(const std::string& question_id) const {
  std::size_t total = 0;
  for (const auto& kw : keywords(question_id)) total += keyword_degree(kw);
  return total;
}

std::size_t KeywordGraph::edge_count() const {
  std::size_t n = 0;
  for (const auto& [q, kws] : keywords_) n += kws.size();
  return n;
}

double phase3_relevance(const std::string& candidate, const std::string& reference, const KeywordGraph& graph) {
  const auto& a = graph.keywords(candidate);
  const auto& b = graph.keywords(reference);
  double total = 0.0;
  for (const auto& kw : a) {
    if (b.count(kw)) total += static_cast<double>(graph.keyword_degree(kw));
  }
  return total;
}

std::size_t ladder_target(const SessionState& session, const DifficultyClustering& clustering) {
  const auto* last = session.last_event();
  if (!last || clustering.k == 0) return 0;
  auto level = static_cast<long>(clustering.cluster_of(last->question_id));
  switch (last->outcome) {
    case Outcome::Correct: ++level; break;
    case Outcome::Wrong:
    case Outcome::DontKnow: --level; break;
    case Outcome::Skipped: break;
  }
  return static_cast<std::size_t>(std::clamp(level, 0L, static_cast<long>(clustering.k) - 1));
}

Recommendation phase4_next(const SessionState& session, const DifficultyClustering& clustering,
                           const KeywordGraph& graph, std::span<const std::string> pool) {
  std::vector<std::string> candidates;
  for (const auto& id : session.unasked(pool)) {
    if (clustering.assignments.count(id) && graph.contains(id)) candidates.push_back(id);
  }
  if (candidates.empty()) throw Error(ErrorCode::EmptyPool, "no unasked clustered questions in the pool");

  const std::size_t target = ladder_target(session, clustering);
  // Nearest non-empty cluster by centroid distance; ties go to the easier one.
  std::optional<std::size_t> chosen;
  for (std::size_t c = 0; c < clustering.k; ++c) {
    bool nonempty = std::any_of(candidates.begin(), candidates.end(),
                                [&](const std::string& id) { return clustering.cluster_of(id) == c; });
    if (!nonempty) continue;
    double d = std::abs(clustering.centroids[c] - clustering.centroids[target]);
    if (!chosen || d < std::abs(clustering.centroids[*chosen] - clustering.centroids[target])) chosen = c;
  }

  const auto* last = session.last_event();
  Recommendation rec;
  for (const auto& id : candidates) {
    if (clustering.cluster_of(id) != *chosen) continue;
    double relevance = last && graph.contains(last->question_id)
                           ? phase3_relevance(id, last->question_id, graph)
                           : static_cast<double>(graph.total_keyword_degree(id));
    rec.ranking.push_back({id,
                           relevance,
                           {{"cluster", static_cast<double>(*chosen)},
                            {"target_cluster", static_cast<double>(target)}}});
  }
  std::sort(rec.ranking.begin(), rec.ranking.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.question_id < b.question_id;
  });
  rec.question_id = rec.ranking.front().question_id;
  return rec;
}

}  // namespace learnpath

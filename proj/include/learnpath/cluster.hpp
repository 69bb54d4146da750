#pragma once

#include "learnpath/domain.hpp"
#include "learnpath/recommendation.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace learnpath {

struct QuestionScore {
  std::string question_id;
  double score = 0.0;  // 0 easiest .. 1 hardest
};

struct ScoreWeights {
  double teacher = 0.5;
  double students = 0.5;
};

// Fuses the teacher level with the observed failure rate.
QuestionScore phase1_score(const Question& q, const SuccessRates& rates, const ScoreWeights& weights = {});
QuestionScore phase1_score(const Question& q, std::span<const InteractionEvent> events,
                           const ScoreWeights& weights = {});

struct KMeansConfig {
  std::size_t k = 3;
  std::uint64_t seed = 7;
  std::size_t max_iters = 100;
  std::size_t restarts = 10;  // independent k-means++ seedings, lowest SSE kept
};

struct DifficultyClustering {
  std::size_t k = 0;
  std::map<std::string, std::size_t> assignments;
  std::vector<double> centroids;  // ascending, cluster 0 is the easiest
  double sse = 0.0;
  std::vector<double> sse_history;  // within-cluster SSE after each Lloyd iteration of the kept run

  std::size_t cluster_of(const std::string& question_id) const;
};

// Lloyd's algorithm on the 1-D scores with k-means++ seeding. Throws
// TooFewPoints when fewer scores than clusters are given.
DifficultyClustering phase2_cluster(std::span<const QuestionScore> scores, const KMeansConfig& config = {});

// Within-cluster sum of squared distances for a given labeling.
double within_cluster_sse(std::span<const double> values, std::span<const std::size_t> labels, std::size_t k);

void write_clustering_csv(const DifficultyClustering& clustering, std::span<const QuestionScore> scores,
                          const std::filesystem::path& path);

// Bipartite question/keyword graph with cached degrees.
class KeywordGraph {
public:
  KeywordGraph() = default;
  explicit KeywordGraph(std::span<const Question> questions);

  bool contains(const std::string& question_id) const { return keywords_.count(question_id) > 0; }
  const std::set<std::string>& keywords(const std::string& question_id) const;
  std::size_t keyword_degree(const std::string& keyword) const;
  std::size_t question_degree(const std::string& question_id) const { return keywords(question_id).size(); }
  // Sum of keyword degrees over the question's keywords.
  std::size_t total_keyword_degree(const std::string& question_id) const;
  std::size_t edge_count() const;

private:
  std::map<std::string, std::set<std::string>> keywords_;
  std::map<std::string, std::size_t> degree_;
};

// Sum of degree(kw) over keywords shared by the two questions.
double phase3_relevance(const std::string& candidate, const std::string& reference, const KeywordGraph& graph);

// Difficulty ladder: start in cluster 0, one level up after a correct answer,
// one down otherwise. Picks the most relevant question of the target cluster,
// falling back to the nearest non-empty cluster. Throws EmptyPool.
Recommendation phase4_next(const SessionState& session, const DifficultyClustering& clustering,
                           const KeywordGraph& graph, std::span<const std::string> pool);

// Target cluster for the next question given the session so far.
std::size_t ladder_target(const SessionState& session, const DifficultyClustering& clustering);

}  // namespace learnpath

#include "learnpath/cluster.hpp"
#include "learnpath/error.hpp"

#include "../support/oracles.hpp"

#include <doctest.h>

#include <random>

using namespace learnpath;

namespace {

Question question(const std::string& id, int level, std::set<std::string> kws) {
  Question q;
  q.id = id;
  q.options = {"a", "b"};
  q.teacher_level = level;
  q.keywords = std::move(kws);
  return q;
}

std::vector<QuestionScore> scores_of(const std::vector<double>& values) {
  std::vector<QuestionScore> out;
  for (std::size_t i = 0; i < values.size(); ++i) out.push_back({"q" + std::to_string(i), values[i]});
  return out;
}

InteractionEvent answer(const std::string& q, Outcome o) {
  InteractionEvent e;
  e.question_id = q;
  e.outcome = o;
  return e;
}

}  // namespace

TEST_CASE("phase1_score") {
  std::vector<InteractionEvent> all_right = {answer("q", Outcome::Correct)};
  std::vector<InteractionEvent> all_wrong = {answer("q", Outcome::Wrong)};
  std::vector<InteractionEvent> half = {answer("q", Outcome::Correct), answer("q", Outcome::Wrong)};
  CHECK(phase1_score(question("q", 1, {"k"}), all_right).score == 0.0);
  CHECK(phase1_score(question("q", 5, {"k"}), all_wrong).score == 1.0);
  CHECK(phase1_score(question("q", 3, {"k"}), half).score == doctest::Approx(0.5));
  CHECK(phase1_score(question("q", 3, {"k"}), std::vector<InteractionEvent>{}).score == doctest::Approx(0.5));
}

TEST_CASE("phase2_cluster") {
  SUBCASE("k=1 gives the mean") {
    auto s = scores_of({0.2, 0.4, 0.9});
    KMeansConfig cfg;
    cfg.k = 1;
    auto c = phase2_cluster(s, cfg);
    REQUIRE(c.centroids.size() == 1);
    CHECK(c.centroids[0] == doctest::Approx(0.5));
  }
  SUBCASE("two separated groups") {
    auto s = scores_of({0.1, 0.12, 0.9, 0.88});
    KMeansConfig cfg;
    cfg.k = 2;
    auto c = phase2_cluster(s, cfg);
    CHECK(c.cluster_of("q0") == 0);
    CHECK(c.cluster_of("q1") == 0);
    CHECK(c.cluster_of("q2") == 1);
    CHECK(c.cluster_of("q3") == 1);
    CHECK(c.centroids[0] < c.centroids[1]);
  }
  SUBCASE("too few points") {
    auto s = scores_of({0.1, 0.2});
    KMeansConfig cfg;
    cfg.k = 3;
    try {
      phase2_cluster(s, cfg);
      FAIL("expected TooFewPoints");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::TooFewPoints);
    }
  }
  SUBCASE("duplicate scores cap the number of clusters") {
    auto s = scores_of({0.5, 0.5, 0.5, 0.1});
    KMeansConfig cfg;
    cfg.k = 3;
    auto c = phase2_cluster(s, cfg);
    CHECK(c.k == 2);
    CHECK(c.cluster_of("q3") == 0);
  }
}

TEST_CASE("phase2_cluster: seeded properties") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t n = 3 + rng() % 10;
    std::vector<double> values(n);
    for (auto& v : values) v = unit(rng);
    KMeansConfig cfg;
    cfg.k = 1 + rng() % 3;
    cfg.seed = rng();
    auto c = phase2_cluster(scores_of(values), cfg);
    for (std::size_t i = 1; i < c.centroids.size(); ++i) CHECK(c.centroids[i - 1] < c.centroids[i]);
    for (std::size_t i = 1; i < c.sse_history.size(); ++i) {
      CHECK(c.sse_history[i] <= c.sse_history[i - 1] + 1e-12);
    }
    CHECK(c.assignments.size() == n);
    if (n <= 7 && cfg.k <= 2) CHECK(c.sse == doctest::Approx(oracle::best_partition_sse(values, cfg.k)));
  }
}

TEST_CASE("keyword graph and relevance") {
  std::vector<Question> qs = {question("Q1", 1, {"a", "b"}), question("Q2", 1, {"b", "c"}),
                              question("Q3", 1, {"b"}), question("Q4", 1, {"z"})};
  KeywordGraph g(qs);
  CHECK(g.keyword_degree("b") == 3);
  CHECK(g.keyword_degree("a") == 1);
  CHECK(g.edge_count() == 6);
  CHECK(phase3_relevance("Q2", "Q1", g) == 3.0);
  CHECK(phase3_relevance("Q4", "Q1", g) == 0.0);
  CHECK(phase3_relevance("Q1", "Q1", g) == 4.0);  // degree(a) + degree(b)
  for (const auto& a : qs) {
    for (const auto& b : qs) CHECK(phase3_relevance(a.id, b.id, g) == phase3_relevance(b.id, a.id, g));
  }
}

TEST_CASE("phase4_next difficulty ladder") {
  // Three levels, two questions each.
  std::vector<Question> qs = {question("e1", 1, {"x"}), question("e2", 1, {"y", "x"}),
                              question("m1", 3, {"x"}), question("m2", 3, {"y"}),
                              question("h1", 5, {"x"}), question("h2", 5, {"z"})};
  KeywordGraph g(qs);
  std::vector<QuestionScore> scores = {{"e1", 0.0}, {"e2", 0.05}, {"m1", 0.5}, {"m2", 0.55}, {"h1", 1.0}, {"h2", 0.95}};
  KMeansConfig cfg;
  cfg.k = 3;
  auto clustering = phase2_cluster(scores, cfg);
  std::vector<std::string> pool = {"e1", "e2", "m1", "m2", "h1", "h2"};

  SessionState s;
  SUBCASE("fresh session starts easy") {
    auto rec = phase4_next(s, clustering, g, pool);
    CHECK(clustering.cluster_of(rec.question_id) == 0);
    CHECK(rec.question_id == "e2");  // largest total keyword degree
  }
  SUBCASE("correct answer climbs one level") {
    s.record_served("e1");
    s.record_answer(answer("e1", Outcome::Correct));
    CHECK(ladder_target(s, clustering) == 1);
    auto rec = phase4_next(s, clustering, g, pool);
    CHECK(rec.question_id == "m1");  // shares x with e1
  }
  SUBCASE("wrong answer at the bottom stays") {
    s.record_served("e1");
    s.record_answer(answer("e1", Outcome::Wrong));
    CHECK(ladder_target(s, clustering) == 0);
    CHECK(phase4_next(s, clustering, g, pool).question_id == "e2");
  }
  SUBCASE("exhausted level falls back to the nearest non-empty cluster") {
    s.record_served("e1");
    s.record_answer(answer("e1", Outcome::Wrong));
    s.record_served("e2");
    s.record_answer(answer("e2", Outcome::Wrong));
    auto rec = phase4_next(s, clustering, g, pool);
    CHECK(clustering.cluster_of(rec.question_id) == 1);
  }
  SUBCASE("empty pool") {
    std::vector<std::string> none;
    CHECK_THROWS_AS(phase4_next(s, clustering, g, none), Error);
  }
}

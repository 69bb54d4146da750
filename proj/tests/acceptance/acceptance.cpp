// Acceptance suite: one PASS/FAIL line per criterion, each with a time limit.
// Exit status is non-zero when any criterion fails.

#include "learnpath/cluster.hpp"
#include "learnpath/collab_filter.hpp"
#include "learnpath/concept_map.hpp"
#include "learnpath/domain.hpp"
#include "learnpath/error.hpp"
#include "learnpath/forest.hpp"
#include "learnpath/rl.hpp"
#include "learnpath/service.hpp"
#include "learnpath/sim.hpp"
#include "learnpath/strategy.hpp"

#include "../support/benchmarks.hpp"
#include "../support/generators.hpp"
#include "../support/oracles.hpp"
#include "../support/rl_driver.hpp"
#include "../support/service_fixture.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

using namespace learnpath;

namespace {

// Tolerances and limits.
constexpr double kKnnTolerance = 1e-9;
constexpr double kCfHeldOutRmse = 0.75;
constexpr double kCfBaselineMargin = 0.3;
constexpr double kSseTolerance = 1e-9;
constexpr double kForestAccuracy = 0.95;
constexpr double kPlannerTolerance = 1e-9;

struct Outcome_ {
  bool pass = true;
  std::string detail;
};

// Collects failed expectations with a short reason each.
class Checker {
public:
  void expect(bool ok, const std::string& what) {
    ++total_;
    if (!ok) {
      ++failed_;
      if (first_.empty()) first_ = what;
    }
  }
  Outcome_ result(const std::string& summary) const {
    if (failed_ == 0) return {true, summary};
    return {false, std::to_string(failed_) + "/" + std::to_string(total_) + " failed, first: " + first_};
  }

private:
  std::size_t total_ = 0;
  std::size_t failed_ = 0;
  std::string first_;
};

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

Question make_question(const std::string& id, Difficulty d) {
  Question q;
  q.id = id;
  q.options = {"a", "b"};
  q.difficulty = d;
  q.topic = "T";
  return q;
}

InteractionEvent make_event(const std::string& user, const std::string& q, learnpath::Outcome o) {
  InteractionEvent e;
  e.user_id = user;
  e.session_id = user + "-s";
  e.question_id = q;
  e.outcome = o;
  return e;
}

Outcome_ rating_map() {
  Checker c;
  auto basic = make_question("Q", Difficulty::Basic);
  auto hard = make_question("Q", Difficulty::Difficult);
  c.expect(derive_rating(make_event("u", "Q", learnpath::Outcome::DontKnow), basic).value == 1, "dont know -> 1");
  c.expect(derive_rating(make_event("u", "Q", learnpath::Outcome::Wrong), basic).value == 2, "basic wrong -> 2");
  c.expect(derive_rating(make_event("u", "Q", learnpath::Outcome::Correct), basic).value == 3, "basic correct -> 3");
  c.expect(derive_rating(make_event("u", "Q", learnpath::Outcome::Wrong), hard).value == 4, "difficult wrong -> 4");
  c.expect(derive_rating(make_event("u", "Q", learnpath::Outcome::Correct), hard).value == 5, "difficult correct -> 5");
  return c.result("5/5 table rows");
}

RatingMatrix dense(const std::vector<std::vector<int>>& rows) {
  std::vector<std::string> users, questions;
  for (std::size_t u = 0; u < rows.size(); ++u) users.push_back("u" + std::to_string(u + 1));
  for (std::size_t q = 0; q < rows.front().size(); ++q) questions.push_back("q" + std::to_string(q + 1));
  std::vector<RatingMatrix::Entry> entries;
  for (std::size_t u = 0; u < rows.size(); ++u) {
    for (std::size_t q = 0; q < rows[u].size(); ++q) {
      if (rows[u][q] != 0) entries.push_back({u, q, rows[u][q]});
    }
  }
  return RatingMatrix(users, questions, entries);
}

Outcome_ cf_oracle() {
  Checker c;
  // Ratings generated from two latent factors plus per-user and per-item
  // offsets, rounded and clamped to 1..5; 30% observed for training, the rest
  // held out.
  const std::size_t users = 50, items = 40, k = 2;
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> factor(0.0, 1.0), bias(0.0, 0.5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> U(users * k), V(items * k), bu(users), bi(items);
  for (auto& x : U) x = factor(rng);
  for (auto& x : V) x = factor(rng);
  for (auto& x : bu) x = bias(rng);
  for (auto& x : bi) x = bias(rng);
  std::vector<std::string> uid, qid;
  for (std::size_t u = 0; u < users; ++u) uid.push_back("user" + std::to_string(u));
  for (std::size_t i = 0; i < items; ++i) qid.push_back("item" + std::to_string(i));
  std::vector<RatingMatrix::Entry> train;
  std::vector<RatingMatrix::Entry> held;
  for (std::size_t u = 0; u < users; ++u) {
    for (std::size_t i = 0; i < items; ++i) {
      double r = 3.0 + bu[u] + bi[i];
      for (std::size_t f = 0; f < k; ++f) r += U[u * k + f] * V[i * k + f];
      int v = static_cast<int>(std::clamp(std::lround(r), 1L, 5L));
      (unit(rng) < 0.3 ? train : held).push_back({u, i, v});
    }
  }
  RatingMatrix matrix(uid, qid, train);
  FactorConfig cfg;
  cfg.k = 2;
  cfg.epochs = 400;
  cfg.learning_rate = 0.01;
  cfg.regularization = 0.05;
  auto model = train_factor_model(matrix, cfg);

  double mean = 0.0;
  for (const auto& e : train) mean += e.value;
  mean /= static_cast<double>(train.size());
  double se = 0.0, se_base = 0.0;
  for (const auto& e : held) {
    double p = std::clamp(model.raw_predict(*model.user_index(uid[e.user]), *model.question_index(qid[e.question])),
                          1.0, 5.0);
    se += (p - e.value) * (p - e.value);
    se_base += (mean - e.value) * (mean - e.value);
  }
  double rmse_model = std::sqrt(se / static_cast<double>(held.size()));
  double rmse_base = std::sqrt(se_base / static_cast<double>(held.size()));
  c.expect(rmse_model < kCfHeldOutRmse, "held-out rmse " + fmt(rmse_model) + " >= " + fmt(kCfHeldOutRmse));
  c.expect(rmse_base - rmse_model >= kCfBaselineMargin,
           "baseline margin " + fmt(rmse_base - rmse_model) + " < " + fmt(kCfBaselineMargin));

  // 5x5 hand matrix (0 = missing).
  std::vector<std::vector<int>> hand = {
      {5, 3, 0, 1, 4}, {4, 0, 0, 1, 5}, {1, 1, 0, 5, 2}, {1, 0, 0, 4, 3}, {0, 1, 5, 4, 0}};
  auto m = dense(hand);
  // u5 on q1: neighbours u1 (7/sqrt(170)), u2 (1), u3 (21/sqrt(442)), u4 (1).
  double s1 = 7.0 / std::sqrt(170.0), s3 = 21.0 / std::sqrt(442.0);
  double expect_51 = (s1 * 5 + 1.0 * 4 + s3 * 1 + 1.0 * 1) / (s1 + 1.0 + s3 + 1.0);
  auto got_51 = knn_predict(m, 4, 0, 5);
  c.expect(got_51 && std::abs(*got_51 - expect_51) <= kKnnTolerance, "knn u5,q1");
  // u2 on q2: neighbours u1 (41/42), u3 (19/sqrt(1260)), u5 (1).
  double t1 = 41.0 / 42.0, t3 = 19.0 / std::sqrt(1260.0);
  double expect_22 = (t1 * 3 + t3 * 1 + 1.0 * 1) / (t1 + t3 + 1.0);
  auto got_22 = knn_predict(m, 1, 1, 5);
  c.expect(got_22 && std::abs(*got_22 - expect_22) <= kKnnTolerance, "knn u2,q2");
  // Every missing cell against the dense reference, for several neighbourhood sizes.
  std::size_t cells = 0;
  for (std::size_t u = 0; u < 5; ++u) {
    for (std::size_t q = 0; q < 5; ++q) {
      if (hand[u][q] != 0) continue;
      for (std::size_t n : {1u, 2u, 5u}) {
        double ref = oracle::knn_dense(hand, u, q, n);
        auto got = knn_predict(m, u, q, n);
        bool ok = std::isnan(ref) ? !got.has_value() : (got && std::abs(*got - ref) <= kKnnTolerance);
        c.expect(ok, "knn cell u" + std::to_string(u + 1) + ",q" + std::to_string(q + 1) + ",n=" + std::to_string(n));
        ++cells;
      }
    }
  }
  return c.result("held-out rmse " + fmt(rmse_model) + " vs global mean " + fmt(rmse_base) + "; " +
                  std::to_string(cells + 2) + " knn cells within 1e-9");
}

Outcome_ kmeans_optimality() {
  Checker c;
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> value(0.0, 1.0);
  std::size_t cases = 200;
  for (std::size_t t = 0; t < cases; ++t) {
    std::size_t n = 1 + rng() % 8;
    std::size_t k = std::min<std::size_t>(2, n);
    std::vector<QuestionScore> scores;
    std::vector<double> x;
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse grid so duplicates occur.
      double v = std::round(value(rng) * 20.0) / 20.0;
      x.push_back(v);
      scores.push_back({"q" + std::to_string(i), v});
    }
    KMeansConfig cfg;
    cfg.k = k;
    cfg.seed = t;
    auto result = phase2_cluster(scores, cfg);
    double best = oracle::best_partition_sse(x, k);
    c.expect(std::abs(result.sse - best) <= kSseTolerance * std::max(1.0, best),
             "case " + std::to_string(t) + ": sse " + fmt(result.sse, 9) + " vs optimum " + fmt(best, 9));
    for (std::size_t i = 1; i < result.sse_history.size(); ++i) {
      c.expect(result.sse_history[i] <= result.sse_history[i - 1] + 1e-12, "case " + std::to_string(t) + ": sse rose");
    }
  }
  return c.result(std::to_string(cases) + " datasets match the exhaustive optimum; Lloyd SSE non-increasing");
}

std::vector<TrainingRow> separable(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> low(0.0, 4.5), high(5.5, 10.0), noise(-1.0, 1.0);
  std::vector<TrainingRow> rows;
  for (std::size_t i = 0; i < n; ++i) {
    bool positive = i % 2 == 0;
    rows.push_back({{positive ? high(rng) : low(rng), noise(rng), noise(rng)}, positive ? 1.0 : 0.0});
  }
  return rows;
}

Outcome_ forest_sanity() {
  Checker c;
  auto train = separable(200, 11);
  auto test = separable(200, 12);
  ForestConfig cfg;
  auto forest = train_forest(train, cfg);
  std::size_t hits = 0;
  for (const auto& r : test) hits += forest.predict_class(r.features) == static_cast<int>(r.label);
  double acc = static_cast<double>(hits) / static_cast<double>(test.size());
  c.expect(acc >= kForestAccuracy, "accuracy " + fmt(acc) + " < " + fmt(kForestAccuracy));

  auto noisy = separable(150, 13);
  for (std::size_t i = 0; i < noisy.size(); i += 5) noisy[i].label = 1.0 - noisy[i].label;
  ForestConfig one;
  one.n_trees = 1;
  one.bootstrap = false;
  one.max_features = 3;
  one.min_leaf = 1;
  auto single = train_forest(noisy, one);
  std::vector<std::size_t> all(noisy.size());
  std::iota(all.begin(), all.end(), 0);
  DecisionTree::Params p;
  p.max_depth = one.max_depth;
  p.min_leaf = 1;
  std::mt19937_64 unused(0);
  auto tree = DecisionTree::fit(noisy, all, p, unused);
  c.expect(single.trees().size() == 1 && single.trees()[0] == tree, "single-tree forest differs from the tree");
  std::size_t same = 0;
  for (const auto& r : noisy) same += single.predict_probability(r.features) == tree.leaf_for(r.features).value[1];
  c.expect(same == noisy.size(), "predictions differ on " + std::to_string(noisy.size() - same) + " rows");
  return c.result("held-out accuracy " + fmt(acc) + "; single-tree forest identical to CART tree");
}

Outcome_ rl_oracles() {
  Checker c;
  RewardSpec spec;
  spec.epsilon_decay = 0.9995;
  std::vector<oracle::Mdp> mdps;
  {
    oracle::Mdp chain;
    chain.states = 4;
    chain.next = {{1, 0}, {2, 1}, {3, 2}, {3, 3}};
    chain.reward = {{0, 0}, {0, 0}, {1, 0}, {0, 0}};
    chain.terminal = {false, false, false, true};
    mdps.push_back(chain);
  }
  std::mt19937_64 rng(5);
  mdps.push_back(rl_driver::random_mdp(rng, 6, 3, spec.gamma));
  mdps.push_back(rl_driver::random_mdp(rng, 10, 4, spec.gamma));
  for (std::size_t i = 0; i < mdps.size(); ++i) {
    const auto& m = mdps[i];
    auto expected = oracle::greedy_policy(oracle::value_iteration(m, spec.gamma));
    auto q = rl_driver::train(m, spec, 10000, 1000 + i);
    auto got = rl_driver::greedy(q, m);
    for (std::size_t s = 0; s < m.states; ++s) {
      if (m.terminal[s]) continue;
      c.expect(got[s] == expected[s], "mdp " + std::to_string(i) + " state " + std::to_string(s));
    }
    if (i == 0) c.expect(std::abs(q.get("s0", "a0") - 0.81) <= 1e-3, "chain Q(s0, advance) != 0.81");
  }

  std::mt19937_64 grng(77);
  std::size_t cases = 100;
  for (std::size_t t = 0; t < cases; ++t) {
    auto g = gen::random_map(grng, 1 + grng() % 7);
    std::set<std::string> required;
    for (const auto& id : g.nodes) {
      if (grng() % 2) required.insert(id);
    }
    if (required.empty()) required.insert(g.nodes[grng() % g.nodes.size()]);
    auto path = plan_path_dijkstra(g.map, required, g.cost);
    double best = oracle::best_feasible_cost(g.nodes, g.arcs, required, g.cost);
    c.expect(std::abs(path.cost - best) <= kPlannerTolerance, "dag " + std::to_string(t) + ": cost " +
                                                                   fmt(path.cost) + " vs optimum " + fmt(best));
    std::set<std::string> seen;
    for (const auto& id : path.concepts) {
      for (const auto& pre : g.map.prerequisites(id)) {
        c.expect(seen.count(pre) == 1, "dag " + std::to_string(t) + ": " + id + " before prerequisite " + pre);
      }
      c.expect(seen.insert(id).second, "dag " + std::to_string(t) + ": " + id + " repeated");
    }
    for (const auto& r : required) c.expect(seen.count(r) == 1, "dag " + std::to_string(t) + ": misses " + r);
  }
  return c.result("3 MDPs match value-iteration policies; " + std::to_string(cases) +
                  " DAGs at brute-force optimum, all paths feasible");
}

Outcome_ two_level_walk() {
  Checker c;
  std::mt19937_64 rng(31);
  std::size_t sessions = 1000, steps = 0;
  for (std::size_t t = 0; t < sessions; ++t) {
    std::size_t n = 1 + rng() % 10;
    auto g = gen::random_map(rng, n, 1 + rng() % 3, 0.3, /*cycles=*/true);
    std::vector<Question> questions;
    std::vector<std::string> pool;
    for (const auto& concept_ : g.map.concepts()) {
      for (const auto& q : concept_.question_ids) {
        auto question = make_question(q, rng() % 2 ? Difficulty::Basic : Difficulty::Difficult);
        question.keywords = {concept_.id, "k" + std::to_string(rng() % 4)};
        questions.push_back(question);
        pool.push_back(q);
      }
    }
    QuestionBank bank(questions);
    SimulatedStudent student;
    student.id = "u";
    for (const auto& concept_ : g.map.concepts()) student.skill[concept_.id] = std::normal_distribution<double>(0.5, 1.0)(rng);
    SessionState session;
    session.session_id = "s" + std::to_string(t);
    session.user_id = "u";
    session.length_target = pool.size() + 1;  // runs until the walk stops
    std::vector<InteractionEvent> history;
    auto estimator = [](std::string_view) { return 0.5; };
    bool stopped = false;
    for (std::size_t step = 0; step <= pool.size(); ++step) {
      std::optional<Recommendation> rec;
      try {
        rec = recommend_concept_walk(session, g.map, pool, bank, history, estimator);
      } catch (const Error& e) {
        c.expect(e.code() == ErrorCode::PoolExhausted, "unexpected error " + std::string(e.what()));
        stopped = true;
        break;
      }
      if (!rec) {
        stopped = true;
        break;
      }
      ++steps;
      c.expect(!session.has_asked(rec->question_id), "session " + std::to_string(t) + " repeated a question");
      c.expect(rec->concept_id.has_value(), "recommendation without concept");
      if (rec->concept_id) {
        const auto& cid = *rec->concept_id;
        c.expect(g.map.at(cid).question_ids.count(rec->question_id) == 1, "question outside its concept");
        for (const auto& pre : g.map.prerequisites(cid)) {
          const auto& pc = g.map.at(pre);
          bool mastered = concept_mastered(pc, history, {});
          bool exhausted = std::none_of(pc.question_ids.begin(), pc.question_ids.end(),
                                        [&](const std::string& q) { return !session.has_asked(q); });
          c.expect(mastered || exhausted, "session " + std::to_string(t) + ": entered " + cid + " before " + pre);
        }
      }
      if (session.has_asked(rec->question_id)) break;
      session.record_served(rec->question_id);
      auto e = simulate_answer(student, bank.at(rec->question_id), rng);
      e.session_id = session.session_id;
      session.record_answer(e);
      history.push_back(e);
    }
    c.expect(stopped, "session " + std::to_string(t) + " did not terminate within the pool size");
  }

  // Every strategy, short sessions on random maps: no question twice.
  std::size_t strategy_sessions = 0;
  for (std::size_t t = 0; t < 100; ++t) {
    auto g = gen::random_map(rng, 1 + rng() % 10, 2, 0.3, true);
    std::vector<Question> questions;
    std::vector<std::string> pool;
    for (const auto& concept_ : g.map.concepts()) {
      for (const auto& q : concept_.question_ids) {
        auto question = make_question(q, rng() % 2 ? Difficulty::Basic : Difficulty::Difficult);
        question.keywords = {concept_.id};
        question.teacher_level = 1 + static_cast<int>(rng() % 5);
        questions.push_back(question);
        pool.push_back(q);
      }
    }
    QuestionBank bank(questions);
    std::vector<InteractionEvent> log;
    for (const auto& info : strategy_catalog()) {
      auto strategy = make_strategy(info.name, {});
      SessionState session;
      session.session_id = info.name + std::to_string(t);
      session.user_id = "v";
      session.length_target = std::min<std::size_t>(5, pool.size());
      std::vector<InteractionEvent> history;
      std::mt19937_64 srng(t);
      SimulatedStudent student;
      student.id = "v";
      while (!session.finished) {
        StrategyContext ctx{bank, g.map, log, history, nullptr, srng};
        auto rec = strategy->next(session, pool, ctx);
        bool fresh = !session.has_asked(rec.question_id);
        c.expect(fresh, info.name + " repeated a question");
        if (!fresh) break;
        session.record_served(rec.question_id);
        auto e = simulate_answer(student, bank.at(rec.question_id), srng);
        e.session_id = session.session_id;
        session.record_answer(e);
        history.push_back(e);
        log.push_back(e);
        StrategyContext after{bank, g.map, log, history, nullptr, srng};
        strategy->observe(session, pool, after);
      }
      ++strategy_sessions;
    }
  }
  return c.result(std::to_string(sessions) + " walks (" + std::to_string(steps) +
                  " steps) prerequisite-safe and terminating; " + std::to_string(strategy_sessions) +
                  " strategy sessions without repeats");
}

Outcome_ end_to_end_simulation() {
  Checker c;
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 1; s <= 100; ++s) seeds.push_back(s);
  auto cfg = bench::chain_config({"concept_map", "random"}, 1, seeds);
  auto a = run_experiment(cfg);
  auto b = run_experiment(cfg);
  auto means = a.mean_questions_to_mastery();
  double cm = means.at("concept_map"), rnd = means.at("random");
  c.expect(cm <= rnd, "concept_map " + fmt(cm, 2) + " > random " + fmt(rnd, 2));

  // Paired: every seed runs the same student under both strategies.
  std::size_t pairs = 0;
  for (const auto& r : a.runs) pairs += r.strategy == "concept_map";
  c.expect(pairs == seeds.size(), "expected one concept_map run per seed");

  auto dir = std::filesystem::temp_directory_path() / "learnpath-acceptance-sim";
  write_experiment_outputs(cfg, a, dir / "one");
  write_experiment_outputs(cfg, b, dir / "two");
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  };
  auto one = slurp(dir / "one" / "results.csv");
  auto two = slurp(dir / "two" / "results.csv");
  c.expect(!one.empty() && one == two, "results.csv differs between reruns");
  std::filesystem::remove_all(dir);
  return c.result("mean questions to mastery: concept_map " + fmt(cm, 2) + " <= random " + fmt(rnd, 2) +
                  " over 100 paired seeds; results.csv byte-identical");
}

bool leaks_answer_key(const nlohmann::json& j) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) {
      if (k == "correct_index" || k == "answer" || k == "correct_option" || leaks_answer_key(v)) return true;
    }
  } else if (j.is_array()) {
    for (const auto& v : j) {
      if (leaks_answer_key(v)) return true;
    }
  }
  return false;
}

Outcome_ service_contract() {
  Checker c;
  fixture::Server server("learnpath-acceptance");
  auto bank = load_question_bank(server.dir / "bank.csv");
  auto cli = server.client();

  auto created = cli.Post("/api/sessions",
                          nlohmann::json{{"user_id", "alice"}, {"topic", "linear_algebra"}}.dump(), "application/json");
  c.expect(created && created->status == 201, "session creation failed");
  if (!created || created->status != 201) return c.result("");
  auto body = fixture::body(created);
  c.expect(!leaks_answer_key(body), "answer key in the create response");
  c.expect(body["length"] == 5, "default length is not 5");
  std::string sid = body["session_id"];
  auto question = body["question"];
  std::set<std::string> seen;
  nlohmann::json last;
  for (int i = 0; i < 5; ++i) {
    std::string qid = question["question_id"];
    c.expect(seen.insert(qid).second, "question " + qid + " served twice");
    nlohmann::json a = {{"question_id", qid}, {"elapsed_ms", 1500}, {"click_count", 2}};
    if (i == 3) {
      a["dont_know"] = true;
    } else {
      a["choice_index"] = bank.at(qid).correct_index;
    }
    auto r = cli.Post("/api/sessions/" + sid + "/answer", a.dump(), "application/json");
    c.expect(r && r->status == 200, "answer " + std::to_string(i + 1) + " rejected");
    if (!r || r->status != 200) return c.result("");
    last = fixture::body(r);
    c.expect(!leaks_answer_key(last), "answer key in an answer response");
    if (i < 4) {
      c.expect(last.contains("next_question") && !last.contains("summary"), "missing next question");
      question = last["next_question"];
    }
  }
  c.expect(last.contains("summary") && !last.contains("next_question"), "no summary after the fifth answer");
  c.expect(last["summary"]["outcomes"].size() == 5, "summary does not list 5 outcomes");
  c.expect(last["summary"]["score"] == 4, "summary score is not 4");
  auto stale = cli.Post("/api/sessions/" + sid + "/answer",
                        nlohmann::json{{"question_id", question["question_id"]}, {"choice_index", 0}}.dump(),
                        "application/json");
  c.expect(stale && stale->status == 410, "finished session accepted another answer");

  // Concurrent retrain while sessions answer.
  std::atomic<int> failures{0};
  std::atomic<bool> done{false};
  std::atomic<int> retrains{0};
  std::vector<std::thread> workers;
  for (int w = 0; w < 4; ++w) {
    workers.emplace_back([&, w] {
      auto wc = server.client();
      for (int round = 0; round < 3; ++round) {
        nlohmann::json req = {{"user_id", "w" + std::to_string(w)},
                              {"topic", "linear_algebra"},
                              {"strategy", w % 2 ? "collaborative_filtering" : "supervised"}};
        auto r = wc.Post("/api/sessions", req.dump(), "application/json");
        if (!r || r->status != 201) {
          ++failures;
          continue;
        }
        auto j = fixture::body(r);
        std::string id = j["session_id"];
        auto q = j["question"];
        for (int i = 0; i < 5; ++i) {
          auto ar = wc.Post("/api/sessions/" + id + "/answer",
                            nlohmann::json{{"question_id", q["question_id"]}, {"choice_index", i % 2}}.dump(),
                            "application/json");
          if (!ar || ar->status != 200) {
            ++failures;
            break;
          }
          if (i < 4) q = fixture::body(ar)["next_question"];
        }
      }
    });
  }
  std::thread trainer([&] {
    auto tc = server.client();
    for (int n = 0; !done; ++n) {
      auto r = tc.Post("/api/admin/retrain",
                       nlohmann::json{{"strategy", n % 2 ? "collaborative_filtering" : "supervised"}}.dump(),
                       "application/json");
      if (r && r->status == 200) {
        ++retrains;
      } else if (!r || r->status != 503) {
        ++failures;
      }
    }
  });
  for (auto& t : workers) t.join();
  done = true;
  trainer.join();
  c.expect(failures == 0, std::to_string(failures.load()) + " requests failed during retraining");
  c.expect(retrains > 0, "no retrain completed");
  c.expect(server.service->events().size() == 5 + 4 * 3 * 5, "event log size mismatch");
  return c.result("5-question session clean (no answer key, unique questions, summary); " +
                  std::to_string(retrains.load()) + " retrains alongside 12 concurrent sessions");
}

struct Criterion {
  std::string name;
  double limit_s;
  std::function<Outcome_()> run;
};

}  // namespace

int main() {
  std::vector<Criterion> criteria = {
      {"rating_map_exactness", 1.0, rating_map},
      {"cf_oracle", 30.0, cf_oracle},
      {"kmeans_optimality", 30.0, kmeans_optimality},
      {"forest_sanity", 30.0, forest_sanity},
      {"rl_oracles", 60.0, rl_oracles},
      {"two_level_walk", 60.0, two_level_walk},
      {"end_to_end_simulation", 120.0, end_to_end_simulation},
      {"service_contract", 30.0, service_contract},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    auto start = std::chrono::steady_clock::now();
    Outcome_ out;
    try {
      out = cr.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > cr.limit_s) {
      out.pass = false;
      out.detail += " (over the " + fmt(cr.limit_s, 0) + " s limit)";
    }
    failed += !out.pass;
    std::printf("%s  %-24s %7.2f s  %s\n", out.pass ? "PASS" : "FAIL", cr.name.c_str(), secs, out.detail.c_str());
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}

#include "learnpath/sim.hpp"

#include "learnpath/collab_filter.hpp"
#include "learnpath/error.hpp"
#include "learnpath/supervised.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace learnpath {

void SimulatedStudent::validate() const {
  if (!(discrimination > 0.0)) throw Error(ErrorCode::InvalidValue, "discrimination must be positive");
  if (!(dont_know_rate >= 0.0 && dont_know_rate <= 1.0)) {
    throw Error(ErrorCode::InvalidValue, "dont_know_rate must lie in [0, 1]");
  }
}

double p_correct(const SimulatedStudent& student, const Question& question) {
  double sum = 0.0;
  for (const auto& k : question.keywords) {
    auto it = student.skill.find(k);
    if (it != student.skill.end()) sum += it->second;
  }
  double mean = question.keywords.empty() ? 0.0 : sum / static_cast<double>(question.keywords.size());
  double offset = question.difficulty == Difficulty::Difficult ? kDifficultOffset : kBasicOffset;
  return 1.0 / (1.0 + std::exp(-student.discrimination * (mean - offset)));
}

InteractionEvent simulate_answer(const SimulatedStudent& student, const Question& question, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  InteractionEvent e;
  e.user_id = student.id;
  e.question_id = question.id;
  double p = p_correct(student, question);
  double u = unit(rng);
  if (u < p) {
    e.outcome = Outcome::Correct;
  } else {
    e.outcome = unit(rng) < student.dont_know_rate ? Outcome::DontKnow : Outcome::Wrong;
  }
  double t = student.time.base_ms + (question.difficulty == Difficulty::Difficult ? student.time.difficult_ms : 0.0) +
             unit(rng) * student.time.noise_ms;
  e.elapsed_ms = static_cast<std::int64_t>(t);
  e.click_count = 1 + static_cast<std::int64_t>(unit(rng) * 3.0);
  return e;
}

bool prerequisites_met(const ConceptMap& map, const Question& question, std::span<const InteractionEvent> history,
                       const MasteryCriterion& mastery) {
  for (const auto& c : map.concepts_of_question(question.id)) {
    for (const auto& pre : map.prerequisites(c)) {
      if (!concept_mastered(map.at(pre), history, mastery)) return false;
    }
  }
  return true;
}

void apply_learning(SimulatedStudent& student, const Question& question, bool prerequisites_ok,
                    const LearningDynamics& dynamics) {
  double g = prerequisites_ok ? dynamics.gain : dynamics.gated_gain;
  for (const auto& k : question.keywords) student.skill[k] += g;
}

namespace {

[[noreturn]] void config_error(const std::string& field, const std::string& what) {
  throw Error(ErrorCode::ConfigError, "field '" + field + "': " + what);
}

template <typename T>
T number(const nlohmann::json& j, const std::string& field, T fallback) {
  if (!j.contains(field)) return fallback;
  const auto& v = j.at(field);
  if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer() || (std::is_unsigned_v<T> && v.get<std::int64_t>() < 0)) {
      config_error(field, "expected a non-negative integer");
    }
  } else {
    if (!v.is_number()) config_error(field, "expected a number");
  }
  return v.get<T>();
}

std::filesystem::path path_field(const nlohmann::json& j, const std::string& field,
                                 const std::filesystem::path& base) {
  if (!j.contains(field) || !j.at(field).is_string()) config_error(field, "expected a path string");
  std::filesystem::path p = j.at(field).get<std::string>();
  return p.is_absolute() ? p : base / p;
}

}  // namespace

ExperimentConfig parse_experiment_config(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) config_error("<root>", "expected a JSON object");
  ExperimentConfig c;
  c.echo = j;
  try {
    c.bank = load_question_bank(path_field(j, "bank", base_dir));
    c.map = load_concept_map(path_field(j, "concept_nodes", base_dir), path_field(j, "concept_arcs", base_dir));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) throw;
    throw Error(ErrorCode::ConfigError, std::string("loading inputs: ") + e.what());
  }
  if (j.contains("topic")) {
    if (!j["topic"].is_string()) config_error("topic", "expected a string");
    c.topic = j["topic"].get<std::string>();
    if (c.bank.topic_ids(*c.topic).empty()) config_error("topic", "no questions for topic '" + *c.topic + "'");
  }
  if (!j.contains("strategies") || !j["strategies"].is_array()) config_error("strategies", "expected an array");
  for (const auto& s : j["strategies"]) {
    if (!s.is_string() || !is_known_strategy(s.get<std::string>())) {
      config_error("strategies", "unknown strategy " + s.dump());
    }
    c.strategies.push_back(s.get<std::string>());
  }
  c.population = number<std::size_t>(j, "population", 0);
  if (!j.contains("seeds") || !j["seeds"].is_array()) config_error("seeds", "expected an array of integers");
  for (const auto& s : j["seeds"]) {
    if (!s.is_number_integer() || s.get<std::int64_t>() < 0) config_error("seeds", "expected non-negative integers");
    c.seeds.push_back(s.get<std::uint64_t>());
  }
  c.session_length = number<std::size_t>(j, "session_length", 5);
  if (c.session_length == 0) config_error("session_length", "must be at least 1");
  c.max_questions = number<std::size_t>(j, "max_questions", 200);
  c.warmup_students = number<std::size_t>(j, "warmup_students", 0);

  if (j.contains("student")) {
    const auto& s = j["student"];
    if (!s.is_object()) config_error("student", "expected an object");
    auto& p = c.students;
    p.skill_mean = number<double>(s, "skill_mean", p.skill_mean);
    p.skill_sd = number<double>(s, "skill_sd", p.skill_sd);
    p.discrimination = number<double>(s, "discrimination", p.discrimination);
    p.dont_know_rate = number<double>(s, "dont_know_rate", p.dont_know_rate);
    p.learning.gain = number<double>(s, "gain", p.learning.gain);
    p.learning.gated_gain = number<double>(s, "gated_gain", p.learning.gated_gain);
    p.time.base_ms = number<double>(s, "base_ms", p.time.base_ms);
    p.time.difficult_ms = number<double>(s, "difficult_ms", p.time.difficult_ms);
    p.time.noise_ms = number<double>(s, "noise_ms", p.time.noise_ms);
    if (p.skill_sd < 0.0) config_error("student.skill_sd", "must be non-negative");
    if (!(p.discrimination > 0.0)) config_error("student.discrimination", "must be positive");
    if (p.dont_know_rate < 0.0 || p.dont_know_rate > 1.0) config_error("student.dont_know_rate", "must lie in [0, 1]");
  }
  if (j.contains("mastery")) {
    const auto& m = j["mastery"];
    if (!m.is_object()) config_error("mastery", "expected an object");
    c.mastery.min_correct_fraction = number<double>(m, "min_correct_fraction", c.mastery.min_correct_fraction);
    c.mastery.min_coverage_fraction = number<double>(m, "min_coverage_fraction", c.mastery.min_coverage_fraction);
    try {
      c.mastery.validate();
    } catch (const Error& e) {
      config_error("mastery", e.what());
    }
  }
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
  return parse_experiment_config(j, path.parent_path());
}

std::vector<std::string> experiment_pool(const ExperimentConfig& config) {
  if (config.topic) return config.bank.topic_ids(*config.topic);
  std::vector<std::string> ids;
  for (const auto& q : config.bank.questions()) ids.push_back(q.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::map<std::string, double> ExperimentResult::mean_questions_to_mastery() const {
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& r : runs) {
    auto& [sum, n] = acc[r.strategy];
    sum += static_cast<double>(r.questions_to_mastery);
    ++n;
  }
  std::map<std::string, double> out;
  for (const auto& [s, v] : acc) out[s] = v.first / static_cast<double>(v.second);
  return out;
}

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t student, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(student), static_cast<std::uint32_t>(tag)};
  return std::mt19937_64(seq);
}

SimulatedStudent make_student(const ExperimentConfig& config, const std::string& id, std::uint64_t seed,
                              std::uint64_t index, std::uint64_t tag) {
  auto rng = stream(seed, index, tag);
  std::normal_distribution<double> skill(config.students.skill_mean, config.students.skill_sd);
  SimulatedStudent s;
  s.id = id;
  s.discrimination = config.students.discrimination;
  s.dont_know_rate = config.students.dont_know_rate;
  s.time = config.students.time;
  std::set<std::string> keywords;
  for (const auto& q : config.bank.questions()) keywords.insert(q.keywords.begin(), q.keywords.end());
  for (const auto& k : keywords) {
    s.skill[k] = config.students.skill_sd > 0.0 ? skill(rng) : config.students.skill_mean;
  }
  return s;
}

BackgroundProfile profile_of(const SimulatedStudent& s) {
  double sum = 0.0;
  for (const auto& [k, v] : s.skill) sum += v;
  double mean = s.skill.empty() ? 0.0 : sum / static_cast<double>(s.skill.size());
  BackgroundProfile p;
  p.user_id = s.id;
  p.answers["self_rating"] = FieldValue{std::round(mean * 10.0) / 10.0};
  return p;
}

// Concepts that must be mastered: those holding pool questions. With none,
// the whole pool acts as one concept.
std::vector<Concept> goal_concepts(const ExperimentConfig& config, const std::vector<std::string>& pool) {
  std::set<std::string> ids;
  for (const auto& q : pool) {
    for (const auto& c : config.map.concepts_of_question(q)) ids.insert(c);
  }
  std::vector<Concept> out;
  for (const auto& id : ids) out.push_back(config.map.at(id));
  if (out.empty()) out.push_back({"<pool>", std::set<std::string>(pool.begin(), pool.end())});
  return out;
}

bool all_mastered(const std::vector<Concept>& goals, std::span<const InteractionEvent> history,
                  const MasteryCriterion& mastery) {
  return std::all_of(goals.begin(), goals.end(),
                     [&](const Concept& c) { return concept_mastered(c, history, mastery); });
}

struct RunInputs {
  const ExperimentConfig& config;
  const std::vector<std::string>& pool;
  const std::vector<Concept>& goals;
  const std::vector<InteractionEvent>& population_log;
  const std::vector<BackgroundProfile>& population_profiles;
  StrategyResources resources;
};

RunRecord run_one(const RunInputs& in, const std::string& strategy_name, std::size_t index, std::uint64_t seed) {
  const auto& config = in.config;
  RunRecord rec;
  rec.strategy = strategy_name;
  rec.student = index;
  rec.seed = seed;

  auto student = make_student(config, "s" + std::to_string(index), seed, index, 1);
  auto profile = profile_of(student);
  auto answer_rng = stream(seed, index, 2);
  auto strategy_rng = stream(seed, index, 3);

  auto resources = in.resources;
  resources.rl = std::make_shared<RlAgent>();
  resources.rl->mastery = config.mastery;
  resources.walk.mastery = config.mastery;
  auto strategy = make_strategy(strategy_name, resources);

  std::vector<InteractionEvent> log = in.population_log;
  std::vector<InteractionEvent> history;
  std::set<std::string> pool_keywords, seen_keywords;
  for (const auto& q : in.pool) {
    const auto& k = config.bank.at(q).keywords;
    pool_keywords.insert(k.begin(), k.end());
  }

  std::size_t answered = 0, correct = 0;
  std::int64_t clock = 0;
  bool mastered = all_mastered(in.goals, history, config.mastery);
  for (std::size_t s = 0; !mastered && answered < config.max_questions; ++s) {
    SessionState session;
    session.session_id = student.id + "-" + std::to_string(seed) + "-" + std::to_string(s);
    session.user_id = student.id;
    session.topic = config.topic.value_or("");
    session.strategy_name = strategy_name;
    session.length_target = std::min(config.session_length, in.pool.size());
    std::vector<std::string> transcript;

    while (!session.finished && !mastered && answered < config.max_questions) {
      StrategyContext ctx{config.bank, config.map, log, history, &profile, strategy_rng};
      auto pick = strategy->next(session, in.pool, ctx);
      session.record_served(pick.question_id);
      transcript.push_back(pick.question_id);
      const auto& q = config.bank.at(pick.question_id);

      auto e = simulate_answer(student, q, answer_rng);
      e.session_id = session.session_id;
      e.timestamp = clock++;
      apply_learning(student, q, prerequisites_met(config.map, q, history, config.mastery),
                     config.students.learning);
      session.record_answer(e);
      history.push_back(e);
      log.push_back(e);
      seen_keywords.insert(q.keywords.begin(), q.keywords.end());
      ++answered;
      correct += e.outcome == Outcome::Correct;

      StrategyContext after{config.bank, config.map, log, history, &profile, strategy_rng};
      strategy->observe(session, in.pool, after);
      mastered = all_mastered(in.goals, history, config.mastery);
    }
    StrategyContext end{config.bank, config.map, log, history, &profile, strategy_rng};
    strategy->finish(session, in.pool, end);

    // Periodic retraining between sessions, as the service does on demand.
    if (strategy_name == "collaborative_filtering") {
      resources.factor = std::make_shared<FactorModel>(train_factor_model(build_rating_matrix(log, config.bank)));
      strategy = make_strategy(strategy_name, resources);
    } else if (strategy_name == "supervised") {
      auto profiles = in.population_profiles;
      profiles.push_back(profile);
      SupervisedTrainConfig sc;
      sc.forest.n_trees = 20;
      resources.supervised = std::make_shared<SupervisedModel>(train_supervised(log, profiles, config.bank, sc));
      strategy = make_strategy(strategy_name, resources);
    }
    rec.transcripts.push_back(std::move(transcript));
    rec.correct_rate_by_session.push_back(answered ? static_cast<double>(correct) / answered : 0.0);
  }

  rec.mastered = mastered;
  rec.questions_to_mastery = mastered ? answered : config.max_questions;
  rec.correct_rate = answered ? static_cast<double>(correct) / static_cast<double>(answered) : 0.0;
  rec.coverage = pool_keywords.empty() ? 0.0
                                       : static_cast<double>(seen_keywords.size()) /
                                             static_cast<double>(pool_keywords.size());
  return rec;
}

// Random-strategy students that give cf and supervised something to learn from.
void warm_up(const ExperimentConfig& config, const std::vector<std::string>& pool, std::uint64_t seed,
             std::vector<InteractionEvent>& log, std::vector<BackgroundProfile>& profiles) {
  std::int64_t clock = 0;
  for (std::size_t w = 0; w < config.warmup_students; ++w) {
    auto student = make_student(config, "w" + std::to_string(w), seed, w, 4);
    profiles.push_back(profile_of(student));
    auto rng = stream(seed, w, 5);
    SessionState session;
    session.session_id = student.id + "-warmup";
    session.user_id = student.id;
    session.length_target = std::min(config.session_length, pool.size());
    while (!session.finished) {
      auto pick = random_baseline(session.unasked(pool), rng);
      session.record_served(pick.question_id);
      auto e = simulate_answer(student, config.bank.at(pick.question_id), rng);
      e.session_id = session.session_id;
      e.timestamp = clock++;
      session.record_answer(e);
      log.push_back(e);
    }
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  ExperimentResult result;
  if (config.population == 0) return result;
  auto pool = experiment_pool(config);
  if (pool.empty()) throw Error(ErrorCode::ConfigError, "field 'topic': the question pool is empty");
  auto goals = goal_concepts(config, pool);

  for (const auto& name : config.strategies) {
    for (auto seed : config.seeds) {
      std::vector<InteractionEvent> population_log;
      std::vector<BackgroundProfile> population_profiles;
      warm_up(config, pool, seed, population_log, population_profiles);
      StrategyResources resources;
      if (!population_log.empty()) {
        auto matrix = build_rating_matrix(population_log, config.bank);
        if (!matrix.empty()) resources.factor = std::make_shared<FactorModel>(train_factor_model(matrix));
        SupervisedTrainConfig sc;
        sc.forest.n_trees = 20;
        resources.supervised = std::make_shared<SupervisedModel>(
            train_supervised(population_log, population_profiles, config.bank, sc));
      }
      RunInputs in{config, pool, goals, population_log, population_profiles, resources};
      for (std::size_t i = 0; i < config.population; ++i) result.runs.push_back(run_one(in, name, i, seed));
    }
  }
  return result;
}

std::string results_csv(const ExperimentResult& result) {
  std::string out = "strategy,student,seed,questions_to_mastery,correct_rate,coverage\n";
  char buf[64];
  for (const auto& r : result.runs) {
    out += r.strategy;
    out += ',' + std::to_string(r.student) + ',' + std::to_string(r.seed) + ',' +
           std::to_string(r.questions_to_mastery) + ',';
    std::snprintf(buf, sizeof buf, "%.6f,%.6f\n", r.correct_rate, r.coverage);
    out += buf;
  }
  return out;
}

nlohmann::json results_summary(const ExperimentConfig& config, const ExperimentResult& result) {
  nlohmann::json j;
  j["config"] = config.echo;
  j["seeds"] = config.seeds;
  auto means = result.mean_questions_to_mastery();
  for (const auto& name : config.strategies) {
    nlohmann::json s;
    std::size_t runs = 0, mastered = 0;
    double cr = 0.0, cov = 0.0;
    std::vector<std::vector<std::vector<std::string>>> transcripts;
    for (const auto& r : result.runs) {
      if (r.strategy != name) continue;
      ++runs;
      mastered += r.mastered;
      cr += r.correct_rate;
      cov += r.coverage;
      transcripts.push_back(r.transcripts);
    }
    s["runs"] = runs;
    s["mastered_runs"] = mastered;
    s["mean_questions_to_mastery"] = means.count(name) ? means[name] : 0.0;
    s["mean_correct_rate"] = runs ? cr / runs : 0.0;
    s["mean_coverage"] = runs ? cov / runs : 0.0;
    s["transcripts"] = transcripts;
    j["strategies"][name] = s;
  }
  return j;
}

void write_experiment_outputs(const ExperimentConfig& config, const ExperimentResult& result,
                              const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "results.csv", std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + (dir / "results.csv").string());
    out << results_csv(result);
  }
  std::ofstream out(dir / "summary.json", std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + (dir / "summary.json").string());
  out << results_summary(config, result).dump(2) << '\n';
}

}  // namespace learnpath

#include "learnpath/service.hpp"

#include "learnpath/collab_filter.hpp"
#include "learnpath/error.hpp"
#include "learnpath/supervised.hpp"

#include <httplib.h>

#include <cstdlib>
#include <thread>

namespace learnpath {

namespace {

ApiResponse fail(int status, const std::string& code, const std::string& message) {
  return {status, {{"error", code}, {"message", message}}};
}

std::string session_id_for(std::uint64_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sess-%06llu", static_cast<unsigned long long>(n));
  return buf;
}

}  // namespace

ServiceConfig load_service_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "config must be a JSON object");
  ServiceConfig c;
  try {
    c.bind_address = j.value("bind_address", c.bind_address);
    c.port = j.value("port", c.port);
    c.data_dir = j.value("data_dir", c.data_dir.string());
    c.default_strategy = j.value("default_strategy", c.default_strategy);
    c.session_ttl = std::chrono::seconds(j.value("session_ttl_s", static_cast<std::int64_t>(c.session_ttl.count())));
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
  if (c.data_dir.is_relative()) c.data_dir = path.parent_path() / c.data_dir;
  if (!is_known_strategy(c.default_strategy)) {
    throw Error(ErrorCode::ConfigError, "field 'default_strategy': unknown strategy '" + c.default_strategy + "'");
  }
  if (c.port < 0 || c.port > 65535) throw Error(ErrorCode::ConfigError, "field 'port': out of range");
  return c;
}

void apply_env_overrides(ServiceConfig& c) {
  if (const char* v = std::getenv("LEARNPATH_BIND")) c.bind_address = v;
  if (const char* v = std::getenv("LEARNPATH_PORT")) {
    try {
      c.port = std::stoi(v);
    } catch (const std::exception&) {
      throw Error(ErrorCode::ConfigError, "LEARNPATH_PORT is not a number");
    }
  }
  if (const char* v = std::getenv("LEARNPATH_DATA_DIR")) c.data_dir = v;
  if (const char* v = std::getenv("LEARNPATH_DEFAULT_STRATEGY")) {
    if (!is_known_strategy(v)) throw Error(ErrorCode::ConfigError, std::string("unknown default strategy ") + v);
    c.default_strategy = v;
  }
}

SessionService::SessionService(ServiceConfig config, QuestionBank bank, ConceptMap map,
                               std::vector<BackgroundProfile> profiles, Clock clock)
    : config_(std::move(config)),
      bank_(std::move(bank)),
      map_(std::move(map)),
      clock_(std::move(clock)),
      snapshot_(std::make_shared<ModelSnapshot>()),
      rl_(std::make_shared<RlAgent>()) {
  for (auto& p : impute_background(std::move(profiles))) profiles_[p.user_id] = std::move(p);
  if (!config_.data_dir.empty()) {
    std::filesystem::create_directories(config_.data_dir);
    auto path = config_.data_dir / "events.jsonl";
    if (std::filesystem::exists(path)) log_ = read_event_log(path);
    // New session ids continue after those already in the log.
    for (const auto& e : log_) {
      if (e.session_id.rfind("sess-", 0) == 0) {
        try {
          session_counter_ = std::max<std::uint64_t>(session_counter_, std::stoull(e.session_id.substr(5)));
        } catch (const std::exception&) {
        }
      }
    }
    log_file_.open(path, std::ios::binary | std::ios::app);
    if (!log_file_) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  }
}

std::unique_ptr<SessionService> SessionService::open(const ServiceConfig& config) {
  const auto& d = config.data_dir;
  auto bank = load_question_bank(d / "bank.csv");
  auto map = load_concept_map(d / "concept_nodes.csv", d / "concept_arcs.csv");
  std::vector<BackgroundProfile> profiles;
  if (std::filesystem::exists(d / "background.csv")) profiles = load_background(d / "background.csv");
  return std::make_unique<SessionService>(config, std::move(bank), std::move(map), std::move(profiles));
}

std::int64_t SessionService::now_ms() const {
  return std::chrono::duration_cast<std::chrono::milliseconds>(clock_().time_since_epoch()).count();
}

std::shared_ptr<const ModelSnapshot> SessionService::snapshot() const {
  std::lock_guard lock(snapshot_mu_);
  return snapshot_;
}

std::vector<InteractionEvent> SessionService::events() const {
  std::lock_guard lock(log_mu_);
  return log_;
}

StrategyResources SessionService::resources() const {
  auto snap = snapshot();
  StrategyResources r;
  r.factor = snap->factor;
  r.supervised = snap->supervised;
  r.rl = rl_;
  return r;
}

void SessionService::append_event(const InteractionEvent& e) {
  std::lock_guard lock(log_mu_);
  log_.push_back(e);
  if (log_file_.is_open()) {
    log_file_ << to_jsonl(e) << '\n';
    log_file_.flush();
  }
}

Recommendation SessionService::recommend(ApiSession& s, const std::vector<std::string>& pool) {
  auto log = events();
  std::vector<InteractionEvent> history;
  for (const auto& e : log) {
    if (e.user_id == s.state.user_id) history.push_back(e);
  }
  auto profile = profiles_.find(s.state.user_id);
  StrategyContext ctx{bank_, map_, log, history, profile == profiles_.end() ? nullptr : &profile->second, s.rng};
  auto strategy = make_strategy(s.state.strategy_name, resources());
  return strategy->next(s.state, pool, ctx);
}

nlohmann::json SessionService::question_payload(const std::string& question_id, const SessionState& s) const {
  const auto& q = bank_.at(question_id);
  return {{"question_id", q.id},
          {"text", q.text},
          {"options", q.options},
          {"difficulty", std::string(to_string(q.difficulty))},
          {"topic", q.topic},
          {"position", s.asked.size()},
          {"length", s.length_target}};
}

ApiResponse SessionService::create_session(const nlohmann::json& req) {
  if (!req.is_object()) return fail(400, "BadRequest", "expected a JSON object");
  if (!req.contains("user_id") || !req["user_id"].is_string() || req["user_id"].get<std::string>().empty()) {
    return fail(400, "BadRequest", "user_id is required");
  }
  if (!req.contains("topic") || !req["topic"].is_string()) return fail(400, "UnknownTopic", "topic is required");
  std::string strategy = config_.default_strategy;
  if (req.contains("strategy")) {
    if (!req["strategy"].is_string()) return fail(400, "UnknownStrategy", "strategy must be a string");
    strategy = req["strategy"].get<std::string>();
  }
  if (!is_known_strategy(strategy)) return fail(400, "UnknownStrategy", "unknown strategy '" + strategy + "'");
  std::size_t length = 5;
  if (req.contains("length")) {
    if (!req["length"].is_number_integer() || req["length"].get<std::int64_t>() < 1) {
      return fail(400, "BadRequest", "length must be a positive integer");
    }
    length = req["length"].get<std::size_t>();
  }
  auto topic = req["topic"].get<std::string>();
  auto pool = bank_.topic_ids(topic);
  if (pool.empty()) return fail(400, "UnknownTopic", "no questions for topic '" + topic + "'");
  if (pool.size() < length) {
    return fail(409, "InsufficientQuestions",
                "topic '" + topic + "' has " + std::to_string(pool.size()) + " questions, " + std::to_string(length) +
                    " requested");
  }

  auto s = std::make_shared<ApiSession>();
  {
    std::lock_guard lock(sessions_mu_);
    s->state.session_id = session_id_for(++session_counter_);
    s->rng.seed(config_.seed * 1000003ULL + session_counter_);
  }
  s->state.user_id = req["user_id"].get<std::string>();
  s->state.topic = topic;
  s->state.strategy_name = strategy;
  s->state.length_target = length;
  s->last_active = clock_();

  std::lock_guard session_lock(s->mu);
  auto rec = recommend(*s, pool);
  s->state.record_served(rec.question_id);
  s->current_question = rec.question_id;
  {
    std::lock_guard lock(sessions_mu_);
    sessions_[s->state.session_id] = s;
  }
  return {201,
          {{"session_id", s->state.session_id},
           {"strategy", strategy},
           {"length", length},
           {"question", question_payload(rec.question_id, s->state)}}};
}

std::shared_ptr<SessionService::ApiSession> SessionService::find_session(const std::string& id) {
  std::lock_guard lock(sessions_mu_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

ApiResponse SessionService::answer(const std::string& session_id, const nlohmann::json& req) {
  auto s = find_session(session_id);
  if (!s) return fail(404, "UnknownSession", "no session '" + session_id + "'");
  std::lock_guard session_lock(s->mu);
  auto now = clock_();
  if (s->state.finished) return fail(410, "SessionFinished", "session '" + session_id + "' is finished");
  if (now - s->last_active > config_.session_ttl) {
    std::lock_guard lock(sessions_mu_);
    sessions_.erase(session_id);
    return fail(410, "SessionExpired", "session '" + session_id + "' expired");
  }
  if (!req.is_object() || !req.contains("question_id") || !req["question_id"].is_string()) {
    return fail(400, "BadRequest", "question_id is required");
  }
  auto qid = req["question_id"].get<std::string>();
  if (qid != s->current_question) {
    return fail(409, "QuestionMismatch", "question '" + qid + "' is not the one being asked");
  }

  const auto& q = bank_.at(qid);
  int given = 0;
  Outcome outcome = Outcome::Skipped;
  if (req.contains("choice_index") && !req["choice_index"].is_null()) {
    ++given;
    if (!req["choice_index"].is_number_integer()) return fail(400, "BadRequest", "choice_index must be an integer");
    auto c = req["choice_index"].get<std::int64_t>();
    if (c < 0 || c >= static_cast<std::int64_t>(q.options.size())) {
      return fail(400, "BadRequest", "choice_index out of range");
    }
    outcome = c == static_cast<std::int64_t>(q.correct_index) ? Outcome::Correct : Outcome::Wrong;
  }
  if (req.value("dont_know", false)) {
    ++given;
    outcome = Outcome::DontKnow;
  }
  if (req.value("skip", false)) {
    ++given;
    outcome = Outcome::Skipped;
  }
  if (given != 1) return fail(400, "BadRequest", "give exactly one of choice_index, dont_know, skip");
  auto non_negative = [&](const char* field, std::int64_t& out) {
    if (!req.contains(field)) return true;
    if (!req[field].is_number_integer() || req[field].get<std::int64_t>() < 0) return false;
    out = req[field].get<std::int64_t>();
    return true;
  };
  InteractionEvent e;
  if (!non_negative("elapsed_ms", e.elapsed_ms) || !non_negative("click_count", e.click_count)) {
    return fail(400, "BadRequest", "elapsed_ms and click_count must be non-negative integers");
  }
  e.user_id = s->state.user_id;
  e.session_id = session_id;
  e.question_id = qid;
  e.outcome = outcome;
  e.timestamp = std::max(now_ms(), s->last_timestamp);
  s->last_timestamp = e.timestamp;
  s->last_active = now;

  append_event(e);
  s->state.record_answer(e);

  auto pool = bank_.topic_ids(s->state.topic);
  {
    auto log = events();
    std::vector<InteractionEvent> history;
    for (const auto& x : log) {
      if (x.user_id == s->state.user_id) history.push_back(x);
    }
    StrategyContext ctx{bank_, map_, log, history, nullptr, s->rng};
    auto strategy = make_strategy(s->state.strategy_name, resources());
    strategy->observe(s->state, pool, ctx);
    if (s->state.finished) strategy->finish(s->state, pool, ctx);
  }

  nlohmann::json body;
  if (outcome == Outcome::Skipped) {
    body["correct"] = nullptr;
  } else {
    body["correct"] = outcome == Outcome::Correct;
  }
  body["outcome"] = std::string(to_string(outcome));
  if (s->state.finished) {
    s->current_question.clear();
    std::size_t score = 0;
    nlohmann::json outcomes = nlohmann::json::array();
    for (const auto& x : s->state.events) {
      score += x.outcome == Outcome::Correct;
      outcomes.push_back({{"question_id", x.question_id}, {"outcome", std::string(to_string(x.outcome))}});
    }
    body["summary"] = {{"score", score}, {"length", s->state.length_target}, {"outcomes", outcomes}};
    return {200, body};
  }
  auto rec = recommend(*s, pool);
  s->state.record_served(rec.question_id);
  s->current_question = rec.question_id;
  body["next_question"] = question_payload(rec.question_id, s->state);
  return {200, body};
}

ApiResponse SessionService::strategies() const {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& s : strategy_catalog()) list.push_back({{"name", s.name}, {"layer", std::string(to_string(s.layer))}});
  return {200, list};
}

ApiResponse SessionService::retrain(const nlohmann::json& req) {
  if (!req.is_object() || !req.contains("strategy") || !req["strategy"].is_string()) {
    return fail(400, "BadRequest", "strategy is required");
  }
  auto name = req["strategy"].get<std::string>();
  if (!is_known_strategy(name)) return fail(400, "UnknownStrategy", "unknown strategy '" + name + "'");
  if (name != "collaborative_filtering" && name != "supervised" && name != "reinforcement_learning") {
    return fail(400, "NotTrainable", "strategy '" + name + "' has no trainable model");
  }
  bool expected = false;
  if (!training_.compare_exchange_strong(expected, true)) {
    return fail(503, "TrainingInProgress", "another retrain is running");
  }
  struct Reset {
    std::atomic<bool>& flag;
    ~Reset() { flag = false; }
  } reset{training_};

  auto log = events();
  auto base = snapshot();
  auto next = std::make_shared<ModelSnapshot>(*base);
  nlohmann::json saved;
  if (name == "collaborative_filtering") {
    auto matrix = build_rating_matrix(log, bank_);
    if (matrix.empty()) return fail(409, "NotEnoughData", "the event log holds no ratings yet");
    next->factor = std::make_shared<FactorModel>(train_factor_model(matrix));
    saved = *next->factor;
  } else if (name == "supervised") {
    std::vector<BackgroundProfile> profiles;
    for (const auto& [id, p] : profiles_) profiles.push_back(p);
    SupervisedTrainConfig sc;
    sc.forest.n_trees = 50;
    next->supervised = std::make_shared<SupervisedModel>(train_supervised(log, profiles, bank_, sc));
    saved = *next->supervised;
  } else {
    rl_->compact();
    saved = rl_->table();
  }

  std::uint64_t version;
  {
    std::lock_guard lock(snapshot_mu_);
    version = snapshot_->version + 1;
    next->version = version;
    snapshot_ = next;
  }
  if (!config_.data_dir.empty()) {
    auto dir = config_.data_dir / "models";
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / (name + "-v" + std::to_string(version) + ".json"), std::ios::binary | std::ios::trunc);
    out << saved.dump() << '\n';
  }
  return {200, {{"strategy", name}, {"model_version", version}}};
}

ApiResponse SessionService::health() const {
  std::size_t sessions, events;
  {
    std::lock_guard lock(sessions_mu_);
    sessions = sessions_.size();
  }
  {
    std::lock_guard lock(log_mu_);
    events = log_.size();
  }
  return {200,
          {{"status", "ok"},
           {"sessions", sessions},
           {"events", events},
           {"model_version", snapshot()->version},
           {"questions", bank_.size()}}};
}

struct HttpServer::Impl {
  SessionService& service;
  httplib::Server server;
  std::thread thread;

  explicit Impl(SessionService& s) : service(s) {
    auto reply = [](httplib::Response& res, const ApiResponse& r) {
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
    };
    auto parse = [](const httplib::Request& req, nlohmann::json& out) {
      if (req.body.empty()) {
        out = nlohmann::json::object();
        return true;
      }
      out = nlohmann::json::parse(req.body, nullptr, false);
      return !out.is_discarded();
    };
    auto bad_json = fail(400, "BadRequest", "body is not valid JSON");

    server.Post("/api/sessions", [=, this](const httplib::Request& req, httplib::Response& res) {
      nlohmann::json body;
      reply(res, parse(req, body) ? service.create_session(body) : bad_json);
    });
    server.Post(R"(/api/sessions/([^/]+)/answer)", [=, this](const httplib::Request& req, httplib::Response& res) {
      nlohmann::json body;
      reply(res, parse(req, body) ? service.answer(req.matches[1].str(), body) : bad_json);
    });
    server.Get("/api/strategies",
               [=, this](const httplib::Request&, httplib::Response& res) { reply(res, service.strategies()); });
    server.Post("/api/admin/retrain", [=, this](const httplib::Request& req, httplib::Response& res) {
      nlohmann::json body;
      reply(res, parse(req, body) ? service.retrain(body) : bad_json);
    });
    server.Get("/api/health",
               [=, this](const httplib::Request&, httplib::Response& res) { reply(res, service.health()); });
    server.set_exception_handler([=](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const Error& e) {
        reply(res, fail(500, std::string(to_string(e.code())), e.what()));
      } catch (const std::exception& e) {
        reply(res, fail(500, "InternalError", e.what()));
      }
    });
  }
};

HttpServer::HttpServer(SessionService& service) : impl_(std::make_unique<Impl>(service)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void HttpServer::listen(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) throw Error(ErrorCode::IoError, "cannot listen on " + host + ":" + std::to_string(port));
}

void HttpServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace learnpath

#pragma once

#include "learnpath/concept_map.hpp"
#include "learnpath/domain.hpp"
#include "learnpath/strategy.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

namespace learnpath {

struct ServiceConfig {
  std::string bind_address = "127.0.0.1";
  int port = 8080;
  // Holds bank.csv, concept_nodes.csv, concept_arcs.csv, optionally
  // background.csv; events.jsonl and models/ are written here.
  std::filesystem::path data_dir = "data";
  std::string default_strategy = "concept_map";
  std::chrono::seconds session_ttl{2 * 60 * 60};
  std::uint64_t seed = 1;
};

// JSON file with the fields above (session_ttl_s for the ttl); relative
// data_dir resolves against the file's directory. Throws ConfigError.
ServiceConfig load_service_config(const std::filesystem::path& path);
// LEARNPATH_BIND, LEARNPATH_PORT, LEARNPATH_DATA_DIR, LEARNPATH_DEFAULT_STRATEGY.
void apply_env_overrides(ServiceConfig& config);

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

// Models published for recommendation; replaced as a whole on retrain.
struct ModelSnapshot {
  std::uint64_t version = 0;
  std::shared_ptr<const FactorModel> factor;
  std::shared_ptr<const SupervisedModel> supervised;
};

// Transport-independent core of the HTTP service. Thread-safe.
class SessionService {
public:
  using Clock = std::function<std::chrono::system_clock::time_point()>;

  SessionService(ServiceConfig config, QuestionBank bank, ConceptMap map, std::vector<BackgroundProfile> profiles,
                 Clock clock = [] { return std::chrono::system_clock::now(); });
  // Loads inputs from config.data_dir and replays an existing events.jsonl.
  static std::unique_ptr<SessionService> open(const ServiceConfig& config);

  ApiResponse create_session(const nlohmann::json& request);
  ApiResponse answer(const std::string& session_id, const nlohmann::json& request);
  ApiResponse strategies() const;
  ApiResponse retrain(const nlohmann::json& request);
  ApiResponse health() const;

  std::shared_ptr<const ModelSnapshot> snapshot() const;
  std::vector<InteractionEvent> events() const;
  const ServiceConfig& config() const { return config_; }

private:
  struct ApiSession {
    std::mutex mu;
    SessionState state;
    std::string current_question;  // empty once finished
    std::chrono::system_clock::time_point last_active;
    std::int64_t last_timestamp = 0;
    std::mt19937_64 rng;
  };

  std::shared_ptr<ApiSession> find_session(const std::string& id);
  StrategyResources resources() const;
  Recommendation recommend(ApiSession& s, const std::vector<std::string>& pool);
  nlohmann::json question_payload(const std::string& question_id, const SessionState& s) const;
  void append_event(const InteractionEvent& e);
  std::int64_t now_ms() const;

  ServiceConfig config_;
  QuestionBank bank_;
  ConceptMap map_;
  std::map<std::string, BackgroundProfile> profiles_;
  Clock clock_;

  mutable std::mutex log_mu_;
  std::vector<InteractionEvent> log_;
  std::ofstream log_file_;

  mutable std::mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<ApiSession>> sessions_;
  std::uint64_t session_counter_ = 0;

  mutable std::mutex snapshot_mu_;
  std::shared_ptr<const ModelSnapshot> snapshot_;
  std::atomic<bool> training_{false};
  std::shared_ptr<RlAgent> rl_;
};

// Binds the REST endpoints of `service` to an HTTP listener.
class HttpServer {
public:
  explicit HttpServer(SessionService& service);
  ~HttpServer();

  // Binds and serves on a background thread; returns the bound port (pass 0
  // for any free port). Throws IoError when binding fails.
  int start(const std::string& host, int port);
  // Serves on the calling thread until stop().
  void listen(const std::string& host, int port);
  void stop();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace learnpath

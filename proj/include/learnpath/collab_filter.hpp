#pragma once

#include "learnpath/domain.hpp"
#include "learnpath/recommendation.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace learnpath {

struct FactorConfig {
  std::size_t k = 8;
  std::size_t epochs = 50;
  double learning_rate = 0.005;
  double regularization = 0.02;
  double init_stddev = 0.1;
  std::uint64_t seed = 42;
};

// Biased matrix factorization: r(u,q) ~ mean + b_u + b_q + <p_u, q_q>.
struct FactorModel {
  std::vector<std::string> users;
  std::vector<std::string> questions;
  std::size_t k = 0;
  std::vector<double> user_factors;      // users.size() x k, row major
  std::vector<double> question_factors;  // questions.size() x k, row major
  std::vector<double> user_bias;
  std::vector<double> question_bias;
  double global_mean = 0.0;
  std::vector<double> training_rmse;     // one value per epoch

  // Unclamped model output for indices into users/questions.
  double raw_predict(std::size_t user, std::size_t question) const;
  std::optional<std::size_t> user_index(std::string_view id) const;
  std::optional<std::size_t> question_index(std::string_view id) const;

  bool operator==(const FactorModel&) const = default;
};

// SGD over observed entries, shuffled per epoch with a seeded engine.
// Throws EmptyMatrix when there is nothing to fit.
FactorModel train_factor_model(const RatingMatrix& matrix, const FactorConfig& config = {});

double rmse(const FactorModel& model, const RatingMatrix& matrix);

void to_json(nlohmann::json& j, const FactorModel& m);
void from_json(const nlohmann::json& j, FactorModel& m);
void save_factor_model(const FactorModel& model, const std::filesystem::path& path);
FactorModel load_factor_model(const std::filesystem::path& path);

// Cosine similarity over co-rated questions; 0 when nothing is co-rated.
double cosine_similarity(const RatingMatrix& matrix, std::size_t user_a, std::size_t user_b);

// Similarity-weighted mean of the top-n most similar users who rated the
// question. nullopt when no positively similar user rated it.
std::optional<double> knn_predict(const RatingMatrix& matrix, std::size_t user, std::size_t question,
                                  std::size_t n_neighbors);

struct Prediction {
  std::string question_id;
  double estimated_rating = 0.0;  // clamped to [1,5]
  double factor_rating = 0.0;
  std::optional<double> knn_rating;
};

struct HybridConfig {
  double alpha = 0.5;  // weight of the factor model
  std::size_t n_neighbors = 20;
};

// alpha * factor + (1 - alpha) * knn, factor only when knn has no neighbour.
// Throws UnknownUser / UnknownQuestion for cold starts.
Prediction hybrid_predict(const FactorModel& model, const RatingMatrix& matrix, std::string_view user,
                          std::string_view question, const HybridConfig& config = {});

// Highest estimated rating over `pool`, ties by smallest id. Users without
// ratings get the cold-start order (teacher_level ascending, then id);
// questions nobody rated yet rank after every predicted one, in that order.
Recommendation recommend_collaborative(const SessionState& session, const RatingMatrix& matrix,
                                       const FactorModel& model, std::span<const std::string> pool,
                                       const QuestionBank& bank, const HybridConfig& config = {});

// teacher_level ascending, then id.
std::vector<std::string> cold_start_order(std::span<const std::string> pool, const QuestionBank& bank);

}  // namespace learnpath

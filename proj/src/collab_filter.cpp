#include "learnpath/collab_filter.hpp"

#include "learnpath/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace learnpath {
namespace {

std::optional<std::size_t> find_index(const std::vector<std::string>& ids, std::string_view id) {
  auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end()) return std::nullopt;
  return static_cast<std::size_t>(it - ids.begin());
}

}  // namespace

double FactorModel::raw_predict(std::size_t user, std::size_t question) const {
  double dot = 0.0;
  const double* p = &user_factors[user * k];
  const double* q = &question_factors[question * k];
  for (std::size_t f = 0; f < k; ++f) dot += p[f] * q[f];
  return global_mean + user_bias[user] + question_bias[question] + dot;
}

std::optional<std::size_t> FactorModel::user_index(std::string_view id) const { return find_index(users, id); }

std::optional<std::size_t> FactorModel::question_index(std::string_view id) const {
  return find_index(questions, id);
}

double rmse(const FactorModel& model, const RatingMatrix& matrix) {
  if (matrix.empty()) return 0.0;
  double sse = 0.0;
  for (const auto& e : matrix.entries()) {
    double err = static_cast<double>(e.value) - model.raw_predict(e.user, e.question);
    sse += err * err;
  }
  return std::sqrt(sse / static_cast<double>(matrix.entry_count()));
}

FactorModel train_factor_model(const RatingMatrix& matrix, const FactorConfig& config) {
  if (matrix.empty()) throw Error(ErrorCode::EmptyMatrix, "cannot train on a matrix without ratings");
  if (config.k == 0) throw Error(ErrorCode::InvalidValue, "latent dimension must be at least 1");
  if (!(config.learning_rate > 0.0) || config.regularization < 0.0) {
    throw Error(ErrorCode::InvalidValue, "learning_rate must be positive and regularization non-negative");
  }

  FactorModel m;
  m.users = matrix.users();
  m.questions = matrix.questions();
  m.k = config.k;
  const auto nu = m.users.size();
  const auto nq = m.questions.size();

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> init(0.0, config.init_stddev);
  m.user_factors.resize(nu * m.k);
  m.question_factors.resize(nq * m.k);
  for (auto& v : m.user_factors) v = init(rng);
  for (auto& v : m.question_factors) v = init(rng);
  m.user_bias.assign(nu, 0.0);
  m.question_bias.assign(nq, 0.0);

  double sum = 0.0;
  for (const auto& e : matrix.entries()) sum += e.value;
  m.global_mean = sum / static_cast<double>(matrix.entry_count());

  const double lr = config.learning_rate;
  const double reg = config.regularization;
  std::vector<std::size_t> order(matrix.entry_count());
  std::iota(order.begin(), order.end(), 0);
  const auto& entries = matrix.entries();

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (auto idx : order) {
      const auto& e = entries[idx];
      double err = static_cast<double>(e.value) - m.raw_predict(e.user, e.question);
      m.user_bias[e.user] += lr * (err - reg * m.user_bias[e.user]);
      m.question_bias[e.question] += lr * (err - reg * m.question_bias[e.question]);
      double* p = &m.user_factors[e.user * m.k];
      double* q = &m.question_factors[e.question * m.k];
      for (std::size_t f = 0; f < m.k; ++f) {
        double pf = p[f];
        double qf = q[f];
        p[f] += lr * (err * qf - reg * pf);
        q[f] += lr * (err * pf - reg * qf);
      }
    }
    m.training_rmse.push_back(rmse(m, matrix));
  }
  return m;
}

void to_json(nlohmann::json& j, const FactorModel& m) {
  j = nlohmann::json{{"format", "learnpath.factor_model"},
                     {"version", 1},
                     {"k", m.k},
                     {"users", m.users},
                     {"questions", m.questions},
                     {"user_factors", m.user_factors},
                     {"question_factors", m.question_factors},
                     {"user_bias", m.user_bias},
                     {"question_bias", m.question_bias},
                     {"global_mean", m.global_mean},
                     {"training_rmse", m.training_rmse}};
}

void from_json(const nlohmann::json& j, FactorModel& m) {
  if (j.value("format", std::string()) != "learnpath.factor_model") {
    throw Error(ErrorCode::ParseError, "not a factor model document");
  }
  j.at("k").get_to(m.k);
  j.at("users").get_to(m.users);
  j.at("questions").get_to(m.questions);
  j.at("user_factors").get_to(m.user_factors);
  j.at("question_factors").get_to(m.question_factors);
  j.at("user_bias").get_to(m.user_bias);
  j.at("question_bias").get_to(m.question_bias);
  j.at("global_mean").get_to(m.global_mean);
  m.training_rmse = j.value("training_rmse", std::vector<double>{});
  if (m.k == 0 || m.user_factors.size() != m.users.size() * m.k ||
      m.question_factors.size() != m.questions.size() * m.k || m.user_bias.size() != m.users.size() ||
      m.question_bias.size() != m.questions.size()) {
    throw Error(ErrorCode::ParseError, "factor model dimensions are inconsistent");
  }
}

void save_factor_model(const FactorModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << nlohmann::json(model).dump() << '\n';
}

FactorModel load_factor_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in).get<FactorModel>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

double cosine_similarity(const RatingMatrix& matrix, std::size_t user_a, std::size_t user_b) {
  const auto& a = matrix.user_row(user_a);
  const auto& b = matrix.user_row(user_b);
  double dot = 0.0, na = 0.0, nb = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i].first < b[j].first) {
      ++i;
    } else if (b[j].first < a[i].first) {
      ++j;
    } else {
      double x = a[i].second, y = b[j].second;
      dot += x * y;
      na += x * x;
      nb += y * y;
      ++i;
      ++j;
    }
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::optional<double> knn_predict(const RatingMatrix& matrix, std::size_t user, std::size_t question,
                                  std::size_t n_neighbors) {
  if (user >= matrix.user_count()) throw Error(ErrorCode::UnknownUser, "user index out of range");
  struct Neighbor {
    double similarity;
    std::size_t user;
    int rating;
  };
  std::vector<Neighbor> neighbors;
  for (std::size_t v = 0; v < matrix.user_count(); ++v) {
    if (v == user) continue;
    auto r = matrix.get(v, question);
    if (!r) continue;
    double s = cosine_similarity(matrix, user, v);
    if (s > 0.0) neighbors.push_back({s, v, *r});
  }
  if (neighbors.empty() || n_neighbors == 0) return std::nullopt;
  std::sort(neighbors.begin(), neighbors.end(), [](const Neighbor& x, const Neighbor& y) {
    if (x.similarity != y.similarity) return x.similarity > y.similarity;
    return x.user < y.user;
  });
  if (neighbors.size() > n_neighbors) neighbors.resize(n_neighbors);
  double num = 0.0, den = 0.0;
  for (const auto& n : neighbors) {
    num += n.similarity * n.rating;
    den += n.similarity;
  }
  return num / den;
}

Prediction hybrid_predict(const FactorModel& model, const RatingMatrix& matrix, std::string_view user,
                          std::string_view question, const HybridConfig& config) {
  auto mu = model.user_index(user);
  if (!mu) throw Error(ErrorCode::UnknownUser, "no ratings for user '" + std::string(user) + "'");
  auto mq = model.question_index(question);
  if (!mq) throw Error(ErrorCode::UnknownQuestion, "no ratings for question '" + std::string(question) + "'");

  Prediction p;
  p.question_id = std::string(question);
  p.factor_rating = model.raw_predict(*mu, *mq);
  auto xu = matrix.user_index(user);
  auto xq = matrix.question_index(question);
  if (xu && xq) p.knn_rating = knn_predict(matrix, *xu, *xq, config.n_neighbors);
  double blended = p.knn_rating ? config.alpha * p.factor_rating + (1.0 - config.alpha) * *p.knn_rating
                                 : p.factor_rating;
  p.estimated_rating = std::clamp(blended, 1.0, 5.0);
  return p;
}

std::vector<std::string> cold_start_order(std::span<const std::string> pool, const QuestionBank& bank) {
  std::vector<std::string> ids(pool.begin(), pool.end());
  std::sort(ids.begin(), ids.end(), [&](const std::string& a, const std::string& b) {
    int la = bank.at(a).teacher_level;
    int lb = bank.at(b).teacher_level;
    if (la != lb) return la < lb;
    return a < b;
  });
  return ids;
}

Recommendation recommend_collaborative(const SessionState& session, const RatingMatrix& matrix,
                                       const FactorModel& model, std::span<const std::string> pool,
                                       const QuestionBank& bank, const HybridConfig& config) {
  auto candidates = session.unasked(pool);
  if (candidates.empty()) throw Error(ErrorCode::EmptyPool, "no unasked questions in the pool");

  Recommendation rec;
  std::vector<std::string> unknown;
  const bool known_user = model.user_index(session.user_id).has_value();
  for (const auto& qid : candidates) {
    if (!known_user || !model.question_index(qid)) {
      unknown.push_back(qid);
      continue;
    }
    auto p = hybrid_predict(model, matrix, session.user_id, qid, config);
    ScoredCandidate c{qid, p.estimated_rating, {{"factor_rating", p.factor_rating}}};
    if (p.knn_rating) c.details["knn_rating"] = *p.knn_rating;
    rec.ranking.push_back(std::move(c));
  }
  std::sort(rec.ranking.begin(), rec.ranking.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.question_id < b.question_id;
  });
  for (const auto& qid : cold_start_order(unknown, bank)) {
    rec.ranking.push_back({qid, 0.0, {{"cold_start", 1.0}, {"teacher_level", bank.at(qid).teacher_level}}});
  }
  rec.question_id = rec.ranking.front().question_id;
  return rec;
}

}  // namespace learnpath

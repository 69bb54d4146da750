#include "learnpath/supervised.hpp"

#include "learnpath/error.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace learnpath {

FeatureSchema::FeatureSchema(std::span<const BackgroundProfile> profiles) {
  std::map<std::string, std::map<FieldValue, std::size_t>> counts;
  for (const auto& p : profiles) {
    for (const auto& [field, value] : p.answers) {
      auto& c = counts[field];
      if (value) ++c[*value];
    }
  }
  for (const auto& [field, values] : counts) {
    fields_.push_back(field);
    std::vector<std::string> cats;
    for (const auto& [v, n] : values) {
      if (const auto* s = std::get_if<std::string>(&v)) cats.push_back(*s);
    }
    if (!cats.empty()) categories_[field] = cats;  // map keys are already sorted
  }
  // Encoded mode per field (same tie-break as imputation).
  for (const auto& [field, values] : counts) {
    const FieldValue* mode = nullptr;
    std::size_t best = 0;
    for (const auto& [v, n] : values) {
      if (n > best) {
        best = n;
        mode = &v;
      }
    }
    double encoded = 0.0;
    if (mode) {
      if (const auto* d = std::get_if<double>(mode)) {
        encoded = *d;
      } else {
        const auto& cats = categories_[field];
        encoded = static_cast<double>(std::find(cats.begin(), cats.end(), std::get<std::string>(*mode)) - cats.begin());
      }
    }
    defaults_[field] = encoded;
  }
}

std::size_t FeatureSchema::dimension() const {
  return fields_.size() + kCandidateFeatureNames.size() + kSessionFeatureNames.size();
}

std::vector<std::string> FeatureSchema::feature_names() const {
  std::vector<std::string> names;
  for (const auto& f : fields_) names.push_back("bg_" + f);
  names.insert(names.end(), kCandidateFeatureNames.begin(), kCandidateFeatureNames.end());
  names.insert(names.end(), kSessionFeatureNames.begin(), kSessionFeatureNames.end());
  return names;
}

std::vector<double> FeatureSchema::encode_background(const BackgroundProfile* profile) const {
  std::vector<double> out;
  out.reserve(fields_.size());
  for (const auto& field : fields_) {
    double value = defaults_.at(field);
    if (profile) {
      auto it = profile->answers.find(field);
      if (it != profile->answers.end() && it->second) {
        if (const auto* d = std::get_if<double>(&*it->second)) {
          value = *d;
        } else {
          const auto& s = std::get<std::string>(*it->second);
          auto cats = categories_.find(field);
          value = -1.0;
          if (cats != categories_.end()) {
            auto pos = std::find(cats->second.begin(), cats->second.end(), s);
            if (pos != cats->second.end()) value = static_cast<double>(pos - cats->second.begin());
          }
        }
      }
    }
    out.push_back(value);
  }
  return out;
}

void to_json(nlohmann::json& j, const FeatureSchema& s) {
  j = nlohmann::json{{"version", FeatureSchema::kVersion},
                     {"fields", s.fields_},
                     {"categories", s.categories_},
                     {"defaults", s.defaults_}};
}

void from_json(const nlohmann::json& j, FeatureSchema& s) {
  if (j.at("version").get<int>() != FeatureSchema::kVersion) {
    throw Error(ErrorCode::SchemaMismatch, "unsupported feature schema version");
  }
  j.at("fields").get_to(s.fields_);
  j.at("categories").get_to(s.categories_);
  j.at("defaults").get_to(s.defaults_);
}

std::vector<double> session_aggregates(std::span<const InteractionEvent> prior, const QuestionBank& bank,
                                       const SuccessRates& rates) {
  std::vector<double> out(kSessionFeatureNames.size(), 0.0);
  if (prior.empty()) return out;
  double answered = 0, correct = 0, skipped = 0, dont_know = 0, elapsed = 0, clicks = 0, difficult = 0, success = 0;
  for (const auto& e : prior) {
    const auto& q = bank.at(e.question_id);
    if (e.outcome == Outcome::Skipped) {
      ++skipped;
    } else {
      ++answered;
      if (e.outcome == Outcome::Correct) ++correct;
      if (e.outcome == Outcome::DontKnow) ++dont_know;
    }
    elapsed += static_cast<double>(e.elapsed_ms);
    clicks += static_cast<double>(e.click_count);
    difficult += q.difficulty == Difficulty::Difficult ? 1.0 : 0.0;
    success += rates.rate(e.question_id);
  }
  const double n = static_cast<double>(prior.size());
  out[0] = answered;
  out[1] = answered > 0 ? correct / answered : 0.0;
  out[2] = skipped;
  out[3] = dont_know;
  out[4] = elapsed / n;
  out[5] = clicks / n;
  out[6] = difficult / n;
  out[7] = success / n;
  return out;
}

std::vector<double> build_features(const FeatureSchema& schema, const BackgroundProfile* profile,
                                   std::span<const InteractionEvent> prior, const Question& candidate,
                                   const QuestionBank& bank, const SuccessRates& rates) {
  auto x = schema.encode_background(profile);
  x.push_back(candidate.difficulty == Difficulty::Difficult ? 1.0 : 0.0);
  x.push_back(static_cast<double>(candidate.teacher_level));
  x.push_back(rates.rate(candidate.id));
  auto s = session_aggregates(prior, bank, rates);
  x.insert(x.end(), s.begin(), s.end());
  return x;
}

SupervisedDataset build_training_set(const FeatureSchema& schema, std::span<const InteractionEvent> log,
                                     const std::map<std::string, BackgroundProfile>& profiles,
                                     const QuestionBank& bank, const SuccessRates& rates) {
  std::unordered_map<std::string, std::vector<InteractionEvent>> sessions;
  std::vector<std::string> order;
  for (const auto& e : log) {
    auto [it, inserted] = sessions.try_emplace(e.session_id);
    if (inserted) order.push_back(e.session_id);
    it->second.push_back(e);
  }
  SupervisedDataset data;
  for (const auto& sid : order) {
    const auto& events = sessions[sid];
    for (std::size_t i = 0; i < events.size(); ++i) {
      const auto& e = events[i];
      if (e.outcome == Outcome::Skipped) continue;
      auto pit = profiles.find(e.user_id);
      const BackgroundProfile* profile = pit == profiles.end() ? nullptr : &pit->second;
      auto x = build_features(schema, profile, std::span(events).first(i), bank.at(e.question_id), bank, rates);
      data.correctness.push_back({x, e.outcome == Outcome::Correct ? 1.0 : 0.0});
      data.time.push_back({std::move(x), static_cast<double>(e.elapsed_ms)});
    }
  }
  if (!data.time.empty()) {
    std::vector<double> times;
    for (const auto& r : data.time) times.push_back(r.label);
    std::sort(times.begin(), times.end());
    // nearest-rank 99th percentile
    auto rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(times.size())));
    data.time_clip_ms = times[std::max<std::size_t>(rank, 1) - 1];
    for (auto& r : data.time) r.label = std::min(r.label, data.time_clip_ms);
  }
  return data;
}

SupervisedModel train_supervised(std::span<const InteractionEvent> log, std::span<const BackgroundProfile> profiles,
                                 const QuestionBank& bank, const SupervisedTrainConfig& config) {
  SupervisedModel model;
  auto filled = impute_background({profiles.begin(), profiles.end()});
  model.schema = FeatureSchema(filled);
  std::map<std::string, BackgroundProfile> by_user;
  for (auto& p : filled) by_user[p.user_id] = p;

  SuccessRates rates(log);
  auto data = build_training_set(model.schema, log, by_user, bank, rates);
  if (data.correctness.size() < 2) return model;

  auto cfg = config.forest;
  cfg.mode = ForestMode::Classifier;
  model.correctness = train_forest(data.correctness, cfg);
  cfg.mode = ForestMode::Regressor;
  model.time = train_forest(data.time, cfg);
  return model;
}

void to_json(nlohmann::json& j, const SupervisedModel& m) {
  j = nlohmann::json{{"format", "learnpath.supervised"}, {"schema", m.schema}};
  if (m.correctness) j["correctness"] = *m.correctness;
  if (m.time) j["time"] = *m.time;
}

void from_json(const nlohmann::json& j, SupervisedModel& m) {
  if (j.value("format", std::string()) != "learnpath.supervised") {
    throw Error(ErrorCode::ParseError, "not a supervised model document");
  }
  j.at("schema").get_to(m.schema);
  m.correctness.reset();
  m.time.reset();
  if (j.contains("correctness")) m.correctness = j.at("correctness").get<ForestModel>();
  if (j.contains("time")) m.time = j.at("time").get<ForestModel>();
}

std::vector<CandidateEstimate> estimate_candidates(const SupervisedModel& model, const SessionState& session,
                                                   const BackgroundProfile* profile, std::span<const std::string> pool,
                                                   const QuestionBank& bank, const SuccessRates& rates) {
  if (pool.empty()) throw Error(ErrorCode::EmptyPool, "no candidate questions");
  if (!model.correctness || !model.time) throw Error(ErrorCode::InvalidValue, "supervised model is cold");
  const auto d = model.schema.dimension();
  if (model.correctness->n_features() != d || model.time->n_features() != d) {
    throw Error(ErrorCode::SchemaMismatch, "models expect " + std::to_string(model.correctness->n_features()) +
                                               " features, schema has " + std::to_string(d));
  }
  std::vector<CandidateEstimate> out;
  out.reserve(pool.size());
  for (const auto& qid : pool) {
    auto x = build_features(model.schema, profile, session.events, bank.at(qid), bank, rates);
    out.push_back({qid, model.correctness->predict_probability(x), model.time->predict_value(x)});
  }
  return out;
}

double heuristic_utility(const CandidateEstimate& e, const HeuristicConfig& config) {
  return e.p_correct - config.lambda * std::min(e.expected_time_ms / config.t_ref_ms, 1.0);
}

Recommendation select_by_heuristic(std::span<const CandidateEstimate> estimates, const HeuristicConfig& config,
                                   const std::set<std::string>& served_correct) {
  if (estimates.empty()) throw Error(ErrorCode::EmptyEstimates, "nothing to choose from");
  if (!(config.t_ref_ms > 0.0)) throw Error(ErrorCode::InvalidValue, "t_ref must be positive");
  std::vector<const CandidateEstimate*> kept;
  for (const auto& e : estimates) {
    if (!served_correct.count(e.question_id)) kept.push_back(&e);
  }
  bool filter_dropped = kept.empty();
  if (filter_dropped) {
    for (const auto& e : estimates) kept.push_back(&e);
  }
  Recommendation rec;
  for (const auto* e : kept) {
    rec.ranking.push_back({e->question_id,
                           heuristic_utility(*e, config),
                           {{"p_correct", e->p_correct},
                            {"expected_time_ms", e->expected_time_ms},
                            {"filter_dropped", filter_dropped ? 1.0 : 0.0}}});
  }
  std::sort(rec.ranking.begin(), rec.ranking.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.question_id < b.question_id;
  });
  rec.question_id = rec.ranking.front().question_id;
  return rec;
}

Recommendation recommend_supervised(const SessionState& session, const SupervisedModel& model,
                                    const BackgroundProfile* profile, std::span<const std::string> pool,
                                    const QuestionBank& bank, const SuccessRates& rates,
                                    const std::set<std::string>& served_correct, const HeuristicConfig& config) {
  auto candidates = session.unasked(pool);
  if (candidates.empty()) throw Error(ErrorCode::EmptyPool, "no unasked questions in the pool");
  if (!model.correctness || !model.time) {
    std::sort(candidates.begin(), candidates.end(), [&](const std::string& a, const std::string& b) {
      int la = bank.at(a).teacher_level, lb = bank.at(b).teacher_level;
      return la != lb ? la < lb : a < b;
    });
    Recommendation rec;
    for (const auto& id : candidates) {
      rec.ranking.push_back({id, 0.0, {{"cold_start", 1.0}, {"teacher_level", bank.at(id).teacher_level}}});
    }
    rec.question_id = rec.ranking.front().question_id;
    return rec;
  }
  auto estimates = estimate_candidates(model, session, profile, candidates, bank, rates);
  return select_by_heuristic(estimates, config, served_correct);
}

std::set<std::string> served_correct_before(std::span<const InteractionEvent> log, std::string_view user_id,
                                            std::string_view current_session) {
  std::set<std::string> out;
  for (const auto& e : log) {
    if (e.user_id == user_id && e.session_id != current_session && e.outcome == Outcome::Correct) {
      out.insert(e.question_id);
    }
  }
  return out;
}

}  // namespace learnpath

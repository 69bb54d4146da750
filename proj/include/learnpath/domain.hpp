#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include <json.hpp>

namespace learnpath {

enum class Difficulty { Basic, Difficult };
enum class Outcome { Correct, Wrong, DontKnow, Skipped };

std::string_view to_string(Difficulty d);
std::string_view to_string(Outcome o);
Difficulty parse_difficulty(std::string_view text);
Outcome parse_outcome(std::string_view text);

struct Question {
  std::string id;
  std::string text;
  std::vector<std::string> options;
  std::size_t correct_index = 0;
  Difficulty difficulty = Difficulty::Basic;
  int teacher_level = 1;  // 1..5, teacher-assigned level
  std::set<std::string> keywords;
  std::string topic;
};

// Throws InvalidCorrectIndex / InvalidValue when an invariant is broken.
void validate(const Question& q);

// Immutable collection of questions with id lookup. Order is file order.
class QuestionBank {
public:
  QuestionBank() = default;
  explicit QuestionBank(std::vector<Question> questions);

  const std::vector<Question>& questions() const { return questions_; }
  std::size_t size() const { return questions_.size(); }
  bool empty() const { return questions_.empty(); }

  const Question* find(std::string_view id) const;
  const Question& at(std::string_view id) const;  // UnknownQuestion if absent
  bool contains(std::string_view id) const { return find(id) != nullptr; }

  // Question ids of one topic, sorted ascending.
  std::vector<std::string> topic_ids(std::string_view topic) const;
  std::vector<std::string> topics() const;

private:
  std::vector<Question> questions_;
  std::unordered_map<std::string, std::size_t> index_;
};

QuestionBank load_question_bank(const std::filesystem::path& path);
QuestionBank parse_question_bank(std::string_view csv_text);

struct InteractionEvent {
  std::string user_id;
  std::string session_id;
  std::string question_id;
  Outcome outcome = Outcome::Skipped;
  std::int64_t elapsed_ms = 0;
  std::int64_t click_count = 0;
  std::int64_t timestamp = 0;  // UTC milliseconds

  bool operator==(const InteractionEvent&) const = default;
};

void to_json(nlohmann::json& j, const InteractionEvent& e);
void from_json(const nlohmann::json& j, InteractionEvent& e);

// JSONL event log helpers. Reading validates per-session timestamp order.
std::vector<InteractionEvent> read_event_log(const std::filesystem::path& path);
std::vector<InteractionEvent> parse_event_log(std::string_view jsonl);
std::string to_jsonl(const InteractionEvent& e);

struct SessionState {
  std::string session_id;
  std::string user_id;
  std::string topic;
  std::string strategy_name;
  std::vector<std::string> asked;
  std::vector<InteractionEvent> events;
  std::size_t length_target = 5;
  bool finished = false;

  bool has_asked(std::string_view question_id) const;
  const InteractionEvent* last_event() const { return events.empty() ? nullptr : &events.back(); }
  // Appends to `asked`; throws InvalidValue on a repeat.
  void record_served(const std::string& question_id);
  // Appends an answer; the event must reference an asked question.
  void record_answer(const InteractionEvent& event);
  // Ids from `pool` that have not been asked yet, order preserved.
  std::vector<std::string> unasked(std::span<const std::string> pool) const;
};

struct Rating {
  std::string user_id;
  std::string question_id;
  int value = 1;
};

// Implicit rating: DontKnow=1, Basic wrong/right=2/3, Difficult wrong/right=4/5.
Rating derive_rating(const InteractionEvent& event, const Question& q);

// Sparse user x question rating matrix with dense, stable indices
// (ids sorted ascending).
class RatingMatrix {
public:
  struct Entry {
    std::size_t user = 0;
    std::size_t question = 0;
    int value = 0;
  };

  RatingMatrix() = default;
  RatingMatrix(std::vector<std::string> users, std::vector<std::string> questions, std::vector<Entry> entries);

  std::size_t user_count() const { return users_.size(); }
  std::size_t question_count() const { return questions_.size(); }
  std::size_t entry_count() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  const std::vector<std::string>& users() const { return users_; }
  const std::vector<std::string>& questions() const { return questions_; }
  const std::vector<Entry>& entries() const { return entries_; }

  std::optional<std::size_t> user_index(std::string_view id) const;
  std::optional<std::size_t> question_index(std::string_view id) const;

  std::optional<int> get(std::size_t user, std::size_t question) const;
  std::optional<int> get(std::string_view user, std::string_view question) const;

  // Entries of one user sorted by question index.
  const std::vector<std::pair<std::size_t, int>>& user_row(std::size_t user) const { return rows_[user]; }

  bool operator==(const RatingMatrix& other) const;

private:
  std::vector<std::string> users_;
  std::vector<std::string> questions_;
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> user_index_;
  std::unordered_map<std::string, std::size_t> question_index_;
  std::vector<std::vector<std::pair<std::size_t, int>>> rows_;
};

// Latest event per (user, question) wins; Skipped events are omitted.
RatingMatrix build_rating_matrix(std::span<const InteractionEvent> events, const QuestionBank& bank);

using FieldValue = std::variant<double, std::string>;

struct BackgroundProfile {
  std::string user_id;
  std::map<std::string, std::optional<FieldValue>> answers;
};

struct GradeScale {
  double min = 0.0;
  double max = 100.0;
};

// Questionnaire CSV `user_id,<field>...`; empty cells are missing. Cells that
// parse as numbers are numeric. Fields listed in `grade_scales` are rescaled
// to 0..100 and clamped.
std::vector<BackgroundProfile> load_background(const std::filesystem::path& path,
                                               const std::map<std::string, GradeScale>& grade_scales = {});
std::vector<BackgroundProfile> parse_background(std::string_view csv_text,
                                                const std::map<std::string, GradeScale>& grade_scales = {});

double normalize_grade(double value, GradeScale scale);

// Fills every missing field with the mode of that field across profiles.
// Ties go to the smallest number, or the lexicographically first string.
std::vector<BackgroundProfile> impute_background(std::vector<BackgroundProfile> profiles);

inline constexpr double kSuccessRatePrior = 0.5;

// Correct / non-skipped answers for a question; the prior when unattempted.
double question_success_rate(std::string_view question_id, std::span<const InteractionEvent> events,
                             double prior = kSuccessRatePrior);

// Precomputed per-question success counts for repeated lookups.
class SuccessRates {
public:
  SuccessRates() = default;
  explicit SuccessRates(std::span<const InteractionEvent> events, double prior = kSuccessRatePrior);

  void add(const InteractionEvent& event);
  double rate(std::string_view question_id) const;
  std::size_t attempts(std::string_view question_id) const;

private:
  struct Counts {
    std::size_t correct = 0;
    std::size_t attempts = 0;
  };
  std::unordered_map<std::string, Counts> counts_;
  double prior_ = kSuccessRatePrior;
};

}  // namespace learnpath

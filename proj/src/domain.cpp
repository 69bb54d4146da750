#include "learnpath/domain.hpp"

#include "learnpath/csv.hpp"
#include "learnpath/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <tuple>

namespace learnpath {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

template <typename Int>
bool parse_int(std::string_view text, Int& out) {
  auto t = csv::trim(text);
  if (t.empty()) return false;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  return ec == std::errc() && ptr == t.data() + t.size();
}

bool parse_double(std::string_view text, double& out) {
  auto t = csv::trim(text);
  if (t.empty()) return false;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  return ec == std::errc() && ptr == t.data() + t.size() && std::isfinite(out);
}

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + what);
}

}  // namespace

std::string_view to_string(Difficulty d) { return d == Difficulty::Basic ? "basic" : "difficult"; }

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::Correct: return "correct";
    case Outcome::Wrong: return "wrong";
    case Outcome::DontKnow: return "dont_know";
    case Outcome::Skipped: return "skipped";
  }
  return "skipped";
}

Difficulty parse_difficulty(std::string_view text) {
  auto t = lower(csv::trim(text));
  if (t == "basic") return Difficulty::Basic;
  if (t == "difficult") return Difficulty::Difficult;
  throw Error(ErrorCode::InvalidValue, "unknown difficulty '" + std::string(text) + "'");
}

Outcome parse_outcome(std::string_view text) {
  auto t = lower(csv::trim(text));
  if (t == "correct") return Outcome::Correct;
  if (t == "wrong") return Outcome::Wrong;
  if (t == "dont_know" || t == "dontknow") return Outcome::DontKnow;
  if (t == "skipped") return Outcome::Skipped;
  throw Error(ErrorCode::InvalidValue, "unknown outcome '" + std::string(text) + "'");
}

void validate(const Question& q) {
  if (q.id.empty()) throw Error(ErrorCode::InvalidValue, "question id is empty");
  if (q.options.size() < 2) throw Error(ErrorCode::InvalidValue, q.id + ": fewer than two options");
  if (q.correct_index >= q.options.size()) {
    throw Error(ErrorCode::InvalidCorrectIndex, q.id + ": correct_index " + std::to_string(q.correct_index) +
                                                    " with " + std::to_string(q.options.size()) + " options");
  }
  if (q.teacher_level < 1 || q.teacher_level > 5) {
    throw Error(ErrorCode::InvalidValue, q.id + ": teacher_level outside 1..5");
  }
  if (q.keywords.empty()) throw Error(ErrorCode::InvalidValue, q.id + ": no keywords");
}

QuestionBank::QuestionBank(std::vector<Question> questions) : questions_(std::move(questions)) {
  for (std::size_t i = 0; i < questions_.size(); ++i) {
    validate(questions_[i]);
    if (!index_.emplace(questions_[i].id, i).second) {
      throw Error(ErrorCode::DuplicateId, "question id '" + questions_[i].id + "' appears twice");
    }
  }
}

const Question* QuestionBank::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &questions_[it->second];
}

const Question& QuestionBank::at(std::string_view id) const {
  if (const auto* q = find(id)) return *q;
  throw Error(ErrorCode::UnknownQuestion, "unknown question '" + std::string(id) + "'");
}

std::vector<std::string> QuestionBank::topic_ids(std::string_view topic) const {
  std::vector<std::string> ids;
  for (const auto& q : questions_) {
    if (q.topic == topic) ids.push_back(q.id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<std::string> QuestionBank::topics() const {
  std::set<std::string> t;
  for (const auto& q : questions_) t.insert(q.topic);
  return {t.begin(), t.end()};
}

QuestionBank parse_question_bank(std::string_view csv_text) {
  static const std::vector<std::string> kHeader = {"id",          "text",       "opt1",          "opt2",
                                                   "opt3",        "opt4",       "correct_index", "difficulty",
                                                   "teacher_level", "keywords", "topic"};
  auto table = csv::parse(csv_text);
  if (table.header.empty()) parse_fail(1, "missing header");
  if (table.header != kHeader) parse_fail(1, "unexpected header");

  std::vector<Question> questions;
  std::set<std::string> seen;
  for (const auto& row : table.rows) {
    if (row.cells.size() != kHeader.size()) {
      parse_fail(row.line, "expected " + std::to_string(kHeader.size()) + " cells, got " +
                               std::to_string(row.cells.size()));
    }
    Question q;
    q.id = csv::trim(row.cells[0]);
    if (q.id.empty()) parse_fail(row.line, "empty id");
    q.text = row.cells[1];
    bool gap = false;
    for (std::size_t i = 2; i < 6; ++i) {
      if (row.cells[i].empty()) {
        if (i < 4) parse_fail(row.line, "opt1 and opt2 are required");
        gap = true;
        continue;
      }
      if (gap) parse_fail(row.line, "option after an empty option");
      q.options.push_back(row.cells[i]);
    }
    if (!parse_int(row.cells[6], q.correct_index)) parse_fail(row.line, "correct_index is not an integer");
    try {
      q.difficulty = parse_difficulty(row.cells[7]);
    } catch (const Error&) {
      parse_fail(row.line, "difficulty must be basic or difficult");
    }
    if (!parse_int(row.cells[8], q.teacher_level)) parse_fail(row.line, "teacher_level is not an integer");
    for (auto& kw : csv::split(row.cells[9], ';')) q.keywords.insert(std::move(kw));
    q.topic = csv::trim(row.cells[10]);
    if (!seen.insert(q.id).second) {
      throw Error(ErrorCode::DuplicateId, "line " + std::to_string(row.line) + ": duplicate id '" + q.id + "'");
    }
    try {
      validate(q);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::InvalidCorrectIndex) {
        throw Error(ErrorCode::InvalidCorrectIndex, "line " + std::to_string(row.line) + ": " + q.id);
      }
      parse_fail(row.line, e.what());
    }
    questions.push_back(std::move(q));
  }
  return QuestionBank(std::move(questions));
}

QuestionBank load_question_bank(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_question_bank(buffer.str());
}

void to_json(nlohmann::json& j, const InteractionEvent& e) {
  j = nlohmann::json{{"user_id", e.user_id},         {"session_id", e.session_id},
                     {"question_id", e.question_id}, {"outcome", std::string(to_string(e.outcome))},
                     {"elapsed_ms", e.elapsed_ms},   {"click_count", e.click_count},
                     {"timestamp", e.timestamp}};
}

void from_json(const nlohmann::json& j, InteractionEvent& e) {
  j.at("user_id").get_to(e.user_id);
  j.at("session_id").get_to(e.session_id);
  j.at("question_id").get_to(e.question_id);
  e.outcome = parse_outcome(j.at("outcome").get<std::string>());
  j.at("elapsed_ms").get_to(e.elapsed_ms);
  j.at("click_count").get_to(e.click_count);
  j.at("timestamp").get_to(e.timestamp);
  if (e.elapsed_ms < 0 || e.click_count < 0) {
    throw Error(ErrorCode::InvalidValue, "negative elapsed_ms or click_count");
  }
}

std::vector<InteractionEvent> parse_event_log(std::string_view jsonl) {
  std::vector<InteractionEvent> events;
  std::unordered_map<std::string, std::int64_t> last_ts;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= jsonl.size()) {
    auto end = jsonl.find('\n', start);
    auto line = csv::trim(jsonl.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    ++line_no;
    if (!line.empty()) {
      InteractionEvent e;
      try {
        e = nlohmann::json::parse(line).get<InteractionEvent>();
      } catch (const std::exception& ex) {
        parse_fail(line_no, ex.what());
      }
      auto [it, inserted] = last_ts.try_emplace(e.session_id, e.timestamp);
      if (!inserted) {
        if (e.timestamp < it->second) parse_fail(line_no, "timestamp decreases within session " + e.session_id);
        it->second = e.timestamp;
      }
      events.push_back(std::move(e));
    }
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return events;
}

std::vector<InteractionEvent> read_event_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_event_log(buffer.str());
}

std::string to_jsonl(const InteractionEvent& e) { return nlohmann::json(e).dump(); }

bool SessionState::has_asked(std::string_view question_id) const {
  return std::find(asked.begin(), asked.end(), question_id) != asked.end();
}

void SessionState::record_served(const std::string& question_id) {
  if (has_asked(question_id)) {
    throw Error(ErrorCode::InvalidValue, "question '" + question_id + "' already served in session " + session_id);
  }
  asked.push_back(question_id);
}

void SessionState::record_answer(const InteractionEvent& event) {
  if (!has_asked(event.question_id)) {
    throw Error(ErrorCode::InvalidValue, "answer for unserved question '" + event.question_id + "'");
  }
  if (events.size() >= asked.size()) throw Error(ErrorCode::InvalidValue, "more answers than served questions");
  if (!events.empty() && event.timestamp < events.back().timestamp) {
    throw Error(ErrorCode::InvalidValue, "timestamp decreases within session");
  }
  events.push_back(event);
  if (events.size() >= length_target) finished = true;
}

std::vector<std::string> SessionState::unasked(std::span<const std::string> pool) const {
  std::vector<std::string> out;
  for (const auto& id : pool) {
    if (!has_asked(id)) out.push_back(id);
  }
  return out;
}

Rating derive_rating(const InteractionEvent& event, const Question& q) {
  if (event.question_id != q.id) {
    throw Error(ErrorCode::InvalidValue, "event is for '" + event.question_id + "', not '" + q.id + "'");
  }
  int value = 0;
  switch (event.outcome) {
    case Outcome::DontKnow: value = 1; break;
    case Outcome::Wrong: value = q.difficulty == Difficulty::Basic ? 2 : 4; break;
    case Outcome::Correct: value = q.difficulty == Difficulty::Basic ? 3 : 5; break;
    case Outcome::Skipped: throw Error(ErrorCode::SkippedNotRatable, "skipped answer to '" + q.id + "'");
  }
  return Rating{event.user_id, q.id, value};
}

RatingMatrix::RatingMatrix(std::vector<std::string> users, std::vector<std::string> questions,
                           std::vector<Entry> entries)
    : users_(std::move(users)), questions_(std::move(questions)), entries_(std::move(entries)) {
  for (std::size_t i = 0; i < users_.size(); ++i) {
    if (!user_index_.emplace(users_[i], i).second) throw Error(ErrorCode::DuplicateId, "user " + users_[i]);
  }
  for (std::size_t i = 0; i < questions_.size(); ++i) {
    if (!question_index_.emplace(questions_[i], i).second) {
      throw Error(ErrorCode::DuplicateId, "question " + questions_[i]);
    }
  }
  std::sort(entries_.begin(), entries_.end(),
            [](const Entry& a, const Entry& b) { return std::tie(a.user, a.question) < std::tie(b.user, b.question); });
  rows_.resize(users_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.user >= users_.size() || e.question >= questions_.size()) {
      throw Error(ErrorCode::InvalidValue, "rating entry index out of range");
    }
    if (e.value < 1 || e.value > 5) throw Error(ErrorCode::InvalidValue, "rating outside 1..5");
    if (i > 0 && entries_[i - 1].user == e.user && entries_[i - 1].question == e.question) {
      throw Error(ErrorCode::DuplicateId, "duplicate rating entry");
    }
    rows_[e.user].emplace_back(e.question, e.value);
  }
}

std::optional<std::size_t> RatingMatrix::user_index(std::string_view id) const {
  auto it = user_index_.find(std::string(id));
  if (it == user_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> RatingMatrix::question_index(std::string_view id) const {
  auto it = question_index_.find(std::string(id));
  if (it == question_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<int> RatingMatrix::get(std::size_t user, std::size_t question) const {
  const auto& row = rows_.at(user);
  auto it = std::lower_bound(row.begin(), row.end(), question,
                             [](const std::pair<std::size_t, int>& e, std::size_t q) { return e.first < q; });
  if (it == row.end() || it->first != question) return std::nullopt;
  return it->second;
}

std::optional<int> RatingMatrix::get(std::string_view user, std::string_view question) const {
  auto u = user_index(user);
  auto q = question_index(question);
  if (!u || !q) return std::nullopt;
  return get(*u, *q);
}

bool RatingMatrix::operator==(const RatingMatrix& other) const {
  if (users_ != other.users_ || questions_ != other.questions_ || entries_.size() != other.entries_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.user != b.user || a.question != b.question || a.value != b.value) return false;
  }
  return true;
}

RatingMatrix build_rating_matrix(std::span<const InteractionEvent> events, const QuestionBank& bank) {
  // Log order decides "latest" when timestamps tie.
  std::map<std::pair<std::string, std::string>, std::pair<std::int64_t, int>> latest;
  for (const auto& e : events) {
    const auto& q = bank.at(e.question_id);
    if (e.outcome == Outcome::Skipped) continue;
    int value = derive_rating(e, q).value;
    auto key = std::make_pair(e.user_id, e.question_id);
    auto it = latest.find(key);
    if (it == latest.end() || e.timestamp >= it->second.first) latest[key] = {e.timestamp, value};
  }
  std::set<std::string> users;
  std::set<std::string> questions;
  for (const auto& [key, v] : latest) {
    users.insert(key.first);
    questions.insert(key.second);
  }
  std::vector<std::string> user_ids(users.begin(), users.end());
  std::vector<std::string> question_ids(questions.begin(), questions.end());
  std::vector<RatingMatrix::Entry> entries;
  entries.reserve(latest.size());
  for (const auto& [key, v] : latest) {
    auto u = std::lower_bound(user_ids.begin(), user_ids.end(), key.first) - user_ids.begin();
    auto q = std::lower_bound(question_ids.begin(), question_ids.end(), key.second) - question_ids.begin();
    entries.push_back({static_cast<std::size_t>(u), static_cast<std::size_t>(q), v.second});
  }
  return RatingMatrix(std::move(user_ids), std::move(question_ids), std::move(entries));
}

double normalize_grade(double value, GradeScale scale) {
  if (!(scale.max > scale.min)) throw Error(ErrorCode::InvalidValue, "grade scale max must exceed min");
  double v = (value - scale.min) / (scale.max - scale.min) * 100.0;
  return std::clamp(v, 0.0, 100.0);
}

std::vector<BackgroundProfile> parse_background(std::string_view csv_text,
                                                const std::map<std::string, GradeScale>& grade_scales) {
  auto table = csv::parse(csv_text);
  if (table.header.empty() || table.header[0] != "user_id") parse_fail(1, "header must start with user_id");
  std::vector<BackgroundProfile> profiles;
  for (const auto& row : table.rows) {
    if (row.cells.size() != table.header.size()) parse_fail(row.line, "cell count does not match header");
    BackgroundProfile p;
    p.user_id = csv::trim(row.cells[0]);
    if (p.user_id.empty()) parse_fail(row.line, "empty user_id");
    for (std::size_t c = 1; c < table.header.size(); ++c) {
      const auto& field = table.header[c];
      auto cell = csv::trim(row.cells[c]);
      if (cell.empty()) {
        p.answers[field] = std::nullopt;
        continue;
      }
      double number = 0.0;
      if (parse_double(cell, number)) {
        if (auto it = grade_scales.find(field); it != grade_scales.end()) number = normalize_grade(number, it->second);
        p.answers[field] = FieldValue{number};
      } else {
        if (grade_scales.count(field)) parse_fail(row.line, "grade field '" + field + "' is not numeric");
        p.answers[field] = FieldValue{cell};
      }
    }
    profiles.push_back(std::move(p));
  }
  return profiles;
}

std::vector<BackgroundProfile> load_background(const std::filesystem::path& path,
                                               const std::map<std::string, GradeScale>& grade_scales) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_background(buffer.str(), grade_scales);
}

std::vector<BackgroundProfile> impute_background(std::vector<BackgroundProfile> profiles) {
  std::set<std::string> fields;
  for (const auto& p : profiles) {
    for (const auto& [f, v] : p.answers) fields.insert(f);
  }
  for (const auto& field : fields) {
    // std::variant orders every double before every string, and each
    // alternative by its own operator<, which gives the documented tie-break.
    std::map<FieldValue, std::size_t> counts;
    bool any_missing = false;
    for (const auto& p : profiles) {
      auto it = p.answers.find(field);
      if (it == p.answers.end() || !it->second) {
        any_missing = true;
      } else {
        ++counts[*it->second];
      }
    }
    if (!any_missing) continue;
    if (counts.empty()) throw Error(ErrorCode::AllMissing, "field '" + field + "' is missing for every user");
    const FieldValue* mode = nullptr;
    std::size_t best = 0;
    for (const auto& [value, n] : counts) {
      if (n > best) {
        best = n;
        mode = &value;
      }
    }
    for (auto& p : profiles) {
      auto& slot = p.answers[field];
      if (!slot) slot = *mode;
    }
  }
  return profiles;
}

double question_success_rate(std::string_view question_id, std::span<const InteractionEvent> events, double prior) {
  std::size_t correct = 0;
  std::size_t attempts = 0;
  for (const auto& e : events) {
    if (e.question_id != question_id || e.outcome == Outcome::Skipped) continue;
    ++attempts;
    if (e.outcome == Outcome::Correct) ++correct;
  }
  if (attempts == 0) return prior;
  return static_cast<double>(correct) / static_cast<double>(attempts);
}

SuccessRates::SuccessRates(std::span<const InteractionEvent> events, double prior) : prior_(prior) {
  for (const auto& e : events) add(e);
}

void SuccessRates::add(const InteractionEvent& event) {
  if (event.outcome == Outcome::Skipped) return;
  auto& c = counts_[event.question_id];
  ++c.attempts;
  if (event.outcome == Outcome::Correct) ++c.correct;
}

double SuccessRates::rate(std::string_view question_id) const {
  auto it = counts_.find(std::string(question_id));
  if (it == counts_.end() || it->second.attempts == 0) return prior_;
  return static_cast<double>(it->second.correct) / static_cast<double>(it->second.attempts);
}

std::size_t SuccessRates::attempts(std::string_view question_id) const {
  auto it = counts_.find(std::string(question_id));
  return it == counts_.end() ? 0 : it->second.attempts;
}

}  // namespace learnpath

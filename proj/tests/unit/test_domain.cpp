#include "learnpath/domain.hpp"
#include "learnpath/error.hpp"

#include <doctest.h>

#include <random>

using namespace learnpath;

namespace {

const char* kHeader = "id,text,opt1,opt2,opt3,opt4,correct_index,difficulty,teacher_level,keywords,topic\n";

Question make_question(std::string id, Difficulty d, std::set<std::string> kws = {"k"}) {
  Question q;
  q.id = std::move(id);
  q.text = "t";
  q.options = {"a", "b"};
  q.difficulty = d;
  q.keywords = std::move(kws);
  q.topic = "T";
  return q;
}

InteractionEvent event(std::string user, std::string q, Outcome o, std::int64_t ts = 0) {
  InteractionEvent e;
  e.user_id = std::move(user);
  e.session_id = "s";
  e.question_id = std::move(q);
  e.outcome = o;
  e.timestamp = ts;
  return e;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::ConfigError;
}

}  // namespace

TEST_CASE("question bank: header only yields an empty bank") {
  auto bank = parse_question_bank(kHeader);
  CHECK(bank.empty());
}

TEST_CASE("question bank: one row with four options") {
  auto bank = parse_question_bank(std::string(kHeader) +
                                  "Q1,\"What is 2+2, exactly?\",3,4,5,6,2,basic,2,arith;sum,algebra\n");
  REQUIRE(bank.size() == 1);
  const auto& q = bank.at("Q1");
  CHECK(q.options.size() == 4);
  CHECK(q.correct_index == 2);
  CHECK(q.text == "What is 2+2, exactly?");
  CHECK(q.difficulty == Difficulty::Basic);
  CHECK(q.teacher_level == 2);
  CHECK(q.keywords == std::set<std::string>{"arith", "sum"});
  CHECK(q.topic == "algebra");
}

TEST_CASE("question bank: trailing options may be empty") {
  auto bank = parse_question_bank(std::string(kHeader) + "Q1,t,yes,no,,,1,difficult,5,logic,x\n");
  CHECK(bank.at("Q1").options.size() == 2);
}

TEST_CASE("question bank: errors") {
  CHECK(code_of([] { parse_question_bank(std::string(kHeader) + "Q1,t,a,b,c,d,7,basic,1,k,x\n"); }) ==
        ErrorCode::InvalidCorrectIndex);
  CHECK(code_of([] {
          parse_question_bank(std::string(kHeader) + "Q1,t,a,b,c,d,0,basic,1,k,x\nQ1,t,a,b,c,d,0,basic,1,k,x\n");
        }) == ErrorCode::DuplicateId);
  CHECK(code_of([] { parse_question_bank(std::string(kHeader) + "Q1,t,a,b,c,d,0,hard,1,k,x\n"); }) ==
        ErrorCode::ParseError);
  CHECK(code_of([] { parse_question_bank(std::string(kHeader) + "Q1,t,a,b,c,d,0,basic,1,,x\n"); }) ==
        ErrorCode::ParseError);
  CHECK(code_of([] { parse_question_bank(std::string(kHeader) + "Q1,t,a,b\n"); }) == ErrorCode::ParseError);

  try {
    parse_question_bank(std::string(kHeader) + "Q1,t,a,b,c,d,0,basic,1,k,x\nQ2,t,a,b,c,d,x,basic,1,k,x\n");
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("derive_rating: the five implicit rating cases") {
  auto basic = make_question("Q", Difficulty::Basic);
  auto hard = make_question("Q", Difficulty::Difficult);
  CHECK(derive_rating(event("u", "Q", Outcome::DontKnow), basic).value == 1);
  CHECK(derive_rating(event("u", "Q", Outcome::DontKnow), hard).value == 1);
  CHECK(derive_rating(event("u", "Q", Outcome::Wrong), basic).value == 2);
  CHECK(derive_rating(event("u", "Q", Outcome::Correct), basic).value == 3);
  CHECK(derive_rating(event("u", "Q", Outcome::Wrong), hard).value == 4);
  CHECK(derive_rating(event("u", "Q", Outcome::Correct), hard).value == 5);
  CHECK(code_of([&] { derive_rating(event("u", "Q", Outcome::Skipped), basic); }) == ErrorCode::SkippedNotRatable);
}

TEST_CASE("derive_rating: image is exactly 1..5 and leniency ordering holds") {
  std::set<int> image;
  for (auto d : {Difficulty::Basic, Difficulty::Difficult}) {
    for (auto o : {Outcome::Correct, Outcome::Wrong, Outcome::DontKnow}) {
      image.insert(derive_rating(event("u", "Q", o), make_question("Q", d)).value);
    }
  }
  CHECK(image == std::set<int>{1, 2, 3, 4, 5});
  auto r = [](Difficulty d, Outcome o) { return derive_rating(event("u", "Q", o), make_question("Q", d)).value; };
  CHECK(r(Difficulty::Difficult, Outcome::Wrong) > r(Difficulty::Basic, Outcome::Correct));
  CHECK(r(Difficulty::Basic, Outcome::Correct) > r(Difficulty::Basic, Outcome::Wrong));
}

TEST_CASE("build_rating_matrix") {
  QuestionBank bank({make_question("Q1", Difficulty::Basic), make_question("Q2", Difficulty::Difficult)});

  SUBCASE("no events") { CHECK(build_rating_matrix({}, bank).entry_count() == 0); }

  SUBCASE("latest answer wins") {
    std::vector<InteractionEvent> log = {event("u", "Q1", Outcome::Wrong, 1), event("u", "Q1", Outcome::Correct, 2)};
    auto m = build_rating_matrix(log, bank);
    CHECK(m.entry_count() == 1);
    CHECK(m.get("u", "Q1") == 3);
  }

  SUBCASE("dense 3x2") {
    std::vector<InteractionEvent> log;
    for (auto u : {"a", "b", "c"}) {
      log.push_back(event(u, "Q1", Outcome::Correct));
      log.push_back(event(u, "Q2", Outcome::Wrong));
    }
    auto m = build_rating_matrix(log, bank);
    CHECK(m.entry_count() == 6);
    CHECK(m.user_count() == 3);
    CHECK(m.get("b", "Q2") == 4);
  }

  SUBCASE("skips are omitted") {
    std::vector<InteractionEvent> log = {event("u", "Q1", Outcome::Skipped)};
    CHECK(build_rating_matrix(log, bank).empty());
  }

  SUBCASE("unknown question") {
    std::vector<InteractionEvent> log = {event("u", "Q9", Outcome::Correct)};
    CHECK(code_of([&] { build_rating_matrix(log, bank); }) == ErrorCode::UnknownQuestion);
  }
}

TEST_CASE("build_rating_matrix is idempotent over replays") {
  std::vector<Question> qs;
  for (int i = 0; i < 6; ++i) qs.push_back(make_question("Q" + std::to_string(i), i % 2 ? Difficulty::Basic : Difficulty::Difficult));
  QuestionBank bank(qs);
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<InteractionEvent> log;
    for (int i = 0; i < 40; ++i) {
      log.push_back(event("u" + std::to_string(rng() % 5), "Q" + std::to_string(rng() % 6),
                          static_cast<Outcome>(rng() % 4), static_cast<std::int64_t>(i)));
    }
    auto a = build_rating_matrix(log, bank);
    auto b = build_rating_matrix(log, bank);
    CHECK(a == b);
    for (const auto& e : a.entries()) {
      CHECK(e.value >= 1);
      CHECK(e.value <= 5);
    }
  }
}

TEST_CASE("impute_background") {
  auto profile = [](std::string user, std::optional<FieldValue> v) {
    BackgroundProfile p;
    p.user_id = std::move(user);
    p.answers["grade"] = std::move(v);
    return p;
  };

  SUBCASE("mode fills the gap") {
    auto out = impute_background({profile("a", 80.0), profile("b", 80.0), profile("c", std::nullopt)});
    CHECK(std::get<double>(*out[2].answers["grade"]) == 80.0);
  }
  SUBCASE("tie goes to the smallest value") {
    auto out = impute_background({profile("a", 70.0), profile("b", 60.0), profile("c", std::nullopt)});
    CHECK(std::get<double>(*out[2].answers["grade"]) == 60.0);
  }
  SUBCASE("categorical tie goes to the lexicographically first") {
    auto out = impute_background(
        {profile("a", std::string("yes")), profile("b", std::string("no")), profile("c", std::nullopt)});
    CHECK(std::get<std::string>(*out[2].answers["grade"]) == "no");
  }
  SUBCASE("complete input is unchanged") {
    std::vector<BackgroundProfile> in = {profile("a", 10.0), profile("b", 20.0)};
    auto out = impute_background(in);
    CHECK(out[0].answers == in[0].answers);
    CHECK(out[1].answers == in[1].answers);
  }
  SUBCASE("all missing") {
    CHECK(code_of([&] { impute_background({profile("a", std::nullopt), profile("b", std::nullopt)}); }) ==
          ErrorCode::AllMissing);
  }
}

TEST_CASE("background CSV normalizes grades and marks missing cells") {
  auto profiles = parse_background("user_id,math,course\nu1,15,eng\nu2,,\nu3,20,sci\n", {{"math", {0.0, 20.0}}});
  REQUIRE(profiles.size() == 3);
  CHECK(std::get<double>(*profiles[0].answers["math"]) == doctest::Approx(75.0));
  CHECK(!profiles[1].answers["math"].has_value());
  auto filled = impute_background(profiles);
  for (const auto& p : filled) {
    for (const auto& [field, v] : p.answers) {
      REQUIRE(v.has_value());
      if (field == "math") {
        CHECK(std::get<double>(*v) >= 0.0);
        CHECK(std::get<double>(*v) <= 100.0);
      }
    }
  }
  CHECK(std::get<double>(*filled[1].answers["math"]) == doctest::Approx(75.0));
  CHECK(normalize_grade(30.0, {0.0, 20.0}) == 100.0);
}

TEST_CASE("question_success_rate") {
  CHECK(question_success_rate("Q", {}) == 0.5);
  std::vector<InteractionEvent> log = {event("a", "Q", Outcome::Correct), event("b", "Q", Outcome::Correct),
                                       event("c", "Q", Outcome::Correct), event("d", "Q", Outcome::Wrong),
                                       event("e", "Q", Outcome::Skipped), event("f", "R", Outcome::Wrong)};
  CHECK(question_success_rate("Q", log) == 0.75);
  std::vector<InteractionEvent> dk = {event("a", "Q", Outcome::DontKnow), event("b", "Q", Outcome::DontKnow)};
  CHECK(question_success_rate("Q", dk) == 0.0);
  SuccessRates rates(log);
  CHECK(rates.rate("Q") == 0.75);
  CHECK(rates.rate("unseen") == 0.5);
  CHECK(rates.attempts("Q") == 4);
}

TEST_CASE("event log JSONL round trip and ordering check") {
  InteractionEvent e = event("u1", "Q1", Outcome::DontKnow, 100);
  e.elapsed_ms = 1234;
  e.click_count = 3;
  auto line = to_jsonl(e);
  CHECK(line.find("\"outcome\":\"dont_know\"") != std::string::npos);
  auto parsed = parse_event_log(line + "\n" + to_jsonl(event("u1", "Q2", Outcome::Skipped, 150)) + "\n");
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[0] == e);

  auto later = to_jsonl(event("u1", "Q1", Outcome::Correct, 200));
  auto earlier = to_jsonl(event("u1", "Q2", Outcome::Correct, 100));
  CHECK(code_of([&] { parse_event_log(later + "\n" + earlier); }) == ErrorCode::ParseError);
}

TEST_CASE("session state never re-serves a question") {
  SessionState s;
  s.record_served("Q1");
  CHECK_THROWS_AS(s.record_served("Q1"), Error);
  std::vector<std::string> pool = {"Q1", "Q2"};
  CHECK(s.unasked(pool) == std::vector<std::string>{"Q2"});
  CHECK_THROWS_AS(s.record_answer(event("u", "Q2", Outcome::Correct)), Error);
  s.record_answer(event("u", "Q1", Outcome::Correct));
  CHECK(s.events.size() == 1);
}

#pragma once

// The 3-concept chain benchmark: concepts A -> B -> C, four basic questions
// each with one keyword per concept. Students start weak everywhere and only
// learn a concept's keyword once its prerequisites are mastered.

#include "learnpath/sim.hpp"

#include <string>
#include <vector>

namespace bench {

inline learnpath::ExperimentConfig chain_config(std::vector<std::string> strategies, std::size_t population,
                                                std::vector<std::uint64_t> seeds) {
  using namespace learnpath;
  std::vector<Question> qs;
  std::vector<Concept> concepts;
  for (std::string c : {"A", "B", "C"}) {
    Concept node{c, {}};
    for (int i = 0; i < 4; ++i) {
      Question q;
      q.id = c + std::to_string(i);
      q.text = "question " + q.id;
      q.options = {"x", "y", "z"};
      q.correct_index = 0;
      q.teacher_level = c == "A" ? 1 : c == "B" ? 2 : 3;
      q.keywords = {"k" + c};
      q.topic = "chain";
      qs.push_back(q);
      node.question_ids.insert(q.id);
    }
    concepts.push_back(node);
  }
  ExperimentConfig cfg;
  cfg.bank = QuestionBank(qs);
  cfg.map = ConceptMap(concepts, {{"A", "B", 1.0}, {"B", "C", 1.0}});
  cfg.topic = "chain";
  cfg.strategies = std::move(strategies);
  cfg.population = population;
  cfg.seeds = std::move(seeds);
  cfg.session_length = 5;
  cfg.max_questions = 150;
  cfg.students.skill_mean = -1.0;
  cfg.students.skill_sd = 0.3;
  cfg.students.learning.gain = 0.6;
  cfg.students.learning.gated_gain = 0.0;
  return cfg;
}

}  // namespace bench

// Command line front end: run simulations, serve the REST API, check inputs.

#include "learnpath/concept_map.hpp"
#include "learnpath/domain.hpp"
#include "learnpath/error.hpp"
#include "learnpath/service.hpp"
#include "learnpath/sim.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace learnpath;

namespace {

HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

int simulate(const fs::path& config_path, const fs::path& out_dir) {
  auto config = load_experiment_config(config_path);
  auto result = run_experiment(config);
  write_experiment_outputs(config, result, out_dir);
  std::cout << "runs: " << result.runs.size() << "\n";
  for (const auto& [name, mean] : result.mean_questions_to_mastery()) {
    std::cout << name << ": mean questions to mastery " << mean << "\n";
  }
  std::cout << "wrote " << (out_dir / "results.csv").string() << "\n";
  return 0;
}

int serve(const fs::path& config_path) {
  auto config = config_path.empty() ? ServiceConfig{} : load_service_config(config_path);
  apply_env_overrides(config);
  auto service = SessionService::open(config);
  HttpServer server(*service);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "listening on " << config.bind_address << ":" << config.port << " (data " << config.data_dir.string()
            << ")" << std::endl;
  server.listen(config.bind_address, config.port);
  g_server = nullptr;
  return 0;
}

int ingest(const fs::path& bank_path, const fs::path& map_dir, const fs::path& into) {
  auto bank = load_question_bank(bank_path);
  auto map = load_concept_map(map_dir / "concept_nodes.csv", map_dir / "concept_arcs.csv");
  std::size_t unknown = 0;
  for (const auto& c : map.concepts()) {
    for (const auto& q : c.question_ids) {
      if (!bank.contains(q)) {
        std::cerr << "warning: concept " << c.id << " names unknown question " << q << "\n";
        ++unknown;
      }
    }
  }
  for (const auto& w : map.warnings()) std::cerr << "warning: " << w << "\n";
  std::cout << bank.size() << " questions in " << bank.topics().size() << " topics; " << map.size() << " concepts, "
            << map.arcs().size() << " arcs, " << map.component_count() << " components\n";
  if (unknown > 0) {
    std::cerr << unknown << " concept labels reference questions missing from the bank\n";
    return 1;
  }
  if (!into.empty()) {
    fs::create_directories(into);
    fs::copy_file(bank_path, into / "bank.csv", fs::copy_options::overwrite_existing);
    fs::copy_file(map_dir / "concept_nodes.csv", into / "concept_nodes.csv", fs::copy_options::overwrite_existing);
    fs::copy_file(map_dir / "concept_arcs.csv", into / "concept_arcs.csv", fs::copy_options::overwrite_existing);
    std::cout << "copied into " << into.string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"learnpath: adaptive question recommendation"};
  app.require_subcommand(1);

  fs::path sim_config, sim_out = "results";
  auto* sim = app.add_subcommand("simulate", "run a synthetic-student experiment");
  sim->add_option("--config", sim_config, "experiment JSON")->required()->check(CLI::ExistingFile);
  sim->add_option("--out", sim_out, "output directory")->capture_default_str();

  fs::path serve_config;
  auto* srv = app.add_subcommand("serve", "run the HTTP session service");
  srv->add_option("--config", serve_config, "service JSON")->check(CLI::ExistingFile);

  fs::path bank, map_dir, into;
  auto* ing = app.add_subcommand("ingest", "validate a question bank and concept map");
  ing->add_option("--bank", bank, "question bank CSV")->required()->check(CLI::ExistingFile);
  ing->add_option("--map", map_dir, "directory with concept_nodes.csv and concept_arcs.csv")
      ->required()
      ->check(CLI::ExistingDirectory);
  ing->add_option("--into", into, "copy the validated files into this data directory");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sim) return simulate(sim_config, sim_out);
    if (*srv) return serve(serve_config);
    if (*ing) return ingest(bank, map_dir, into);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

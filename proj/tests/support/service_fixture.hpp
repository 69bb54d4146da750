#pragma once

// A small bank and concept map on disk plus an in-process HTTP server.

#include "learnpath/service.hpp"

#include <httplib.h>

#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <string>

namespace fixture {

inline std::filesystem::path write_data_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / (name + "-" + std::to_string(std::random_device{}()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  std::ofstream bank(dir / "bank.csv");
  bank << "id,text,opt1,opt2,opt3,opt4,correct_index,difficulty,teacher_level,keywords,topic\n";
  for (int i = 1; i <= 8; ++i) {
    bank << "LA" << i << ",Linear algebra " << i << ",yes,no,maybe,,"
         << (i % 3) << ',' << (i > 4 ? "difficult" : "basic") << ',' << (1 + (i - 1) / 2) << ",k" << (i % 3)
         << ";vec,linear_algebra\n";
  }
  bank << "AN1,Analysis one,a,b,,,0,basic,1,lim,analysis\n";
  bank << "AN2,Analysis two,a,b,,,1,basic,1,lim,analysis\n";
  std::ofstream nodes(dir / "concept_nodes.csv");
  nodes << "concept_id,question_ids\nVectors,LA1;LA2;LA3\nMatrices,LA4;LA5;LA6\nEigen,LA7;LA8\nLimits,AN1;AN2\n";
  std::ofstream arcs(dir / "concept_arcs.csv");
  arcs << "from,to,weight\nVectors,Matrices,1\nMatrices,Eigen,1\n";
  std::ofstream bg(dir / "background.csv");
  bg << "user_id,math_grade,programming\nalice,2.0,yes\nbob,3.5,no\n";
  return dir;
}

struct Server {
  std::filesystem::path dir;
  std::unique_ptr<learnpath::SessionService> service;
  std::unique_ptr<learnpath::HttpServer> http;
  int port = 0;

  explicit Server(const std::string& name) : dir(write_data_dir(name)) {
    learnpath::ServiceConfig cfg;
    cfg.data_dir = dir;
    service = learnpath::SessionService::open(cfg);
    http = std::make_unique<learnpath::HttpServer>(*service);
    port = http->start("127.0.0.1", 0);
  }
  ~Server() {
    http->stop();
    std::filesystem::remove_all(dir);
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(30, 0);
    return c;
  }
};

inline nlohmann::json body(const httplib::Result& r) { return nlohmann::json::parse(r->body); }

}  // namespace fixture

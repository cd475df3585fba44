#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "pmia/experiment.hpp"

using namespace pmia;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse(const char* text) {
  return json::parse(text, nullptr, true, /*ignore_comments=*/true);
}

}  // namespace

TEST_CASE("unknown config keys abort before computation") {
  CliOverrides ov;
  ov.out = "/tmp/pmia_test_should_not_exist.csv";
  std::remove(ov.out->c_str());
  const json doc = parse(R"({"seed": 1, "bogus_knob": 3})");
  CHECK(run_subcommand("attack-eval", doc, ov) == 2);
  std::ifstream probe(*ov.out);
  CHECK(!probe.good());

  CHECK(run_subcommand("attack-eval", parse(R"({"world": {"pool_size": 8, "oops": 1}})"), ov) ==
        2);
  CHECK(run_subcommand("attack-eval", parse(R"({"game": {"attack": "gradient"}})"), ov) == 2);
  CHECK(run_subcommand("nonsense", parse("{}"), ov) == 2);
}

TEST_CASE("config comments are tolerated and values land") {
  const json doc = parse(R"({
    // standard defaults, shrunk for a fast unit test
    "seed": 9,
    "world": {"pool_size": 8, "selection_size": 2, "dim": 16, "group_size": 1,
              "min_separation": 10.0, "sigma": 1.0, "loose_clusters": 0},
    "game": {"trials": 40, "batch_size": 2},
    "attacks": ["promptmia"],
    "batch_sizes": [1, 2]
  })");
  CliOverrides ov;
  ov.out = "/tmp/pmia_test_attack_eval.csv";
  REQUIRE(run_subcommand("attack-eval", doc, ov) == 0);
  const std::string csv = slurp(*ov.out);
  CHECK(csv.find("attack,M,N,batch") == 0);
  // header + 1 attack x 2 batch sizes
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK(csv.find("promptmia,8,2,1,") != std::string::npos);
  // Member trials are always caught, so the tpr column is exactly 1.
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  while (std::getline(lines, line)) {
    std::vector<std::string> cells;
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    CHECK(cells[11] == "1");
  }
  std::remove(ov.out->c_str());
}

TEST_CASE("attack-eval reruns are byte identical and seeds change results") {
  const json doc = parse(R"({
    "seed": 5,
    "world": {"pool_size": 8, "selection_size": 2, "dim": 16, "group_size": 1,
              "min_separation": 10.0, "sigma": 3.5, "loose_clusters": 0},
    "game": {"trials": 60},
    "attacks": ["naive"],
    "batch_sizes": [4]
  })");
  CliOverrides a, b;
  a.out = "/tmp/pmia_det_a.csv";
  b.out = "/tmp/pmia_det_b.csv";
  REQUIRE(run_subcommand("attack-eval", doc, a) == 0);
  REQUIRE(run_subcommand("attack-eval", doc, b) == 0);
  CHECK(slurp(*a.out) == slurp(*b.out));

  CliOverrides c;
  c.out = "/tmp/pmia_det_c.csv";
  c.seed = 6;
  REQUIRE(run_subcommand("attack-eval", doc, c) == 0);
  CHECK(slurp(*a.out) != slurp(*c.out));
  std::remove(a.out->c_str());
  std::remove(b.out->c_str());
  std::remove(c.out->c_str());
}

TEST_CASE("bound-check emits csv plus json with pass flags") {
  const json doc = parse(R"({
    "seed": 3,
    "trials_per_arm": 4000,
    "worlds": [
      {"sigma": 1.0},
      {"sigma": 2.5, "placement": "embedded"}
    ]
  })");
  CliOverrides ov;
  ov.out = "/tmp/pmia_bound.csv";
  REQUIRE(run_subcommand("bound-check", doc, ov) == 0);
  const std::string csv = slurp(*ov.out);
  CHECK(csv.find("fpr_bound") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  const json rep = json::parse(slurp("/tmp/pmia_bound.json"));
  CHECK(rep.at("worlds").size() == 2);
  for (const auto& w : rep.at("worlds")) {
    CHECK(w.at("fpr_pass").get<bool>());
    CHECK(w.at("adv_pass").get<bool>());
    CHECK(w.at("identity_ok").get<bool>());
    CHECK(w.at("empirical_tpr").get<double>() == 1.0);
    // The embedded full report must agree with the summary bound.
    CHECK(w.at("bound_report").at("fpr_bound").get<double>() ==
          w.at("fpr_bound").get<double>());
  }
  std::remove(ov.out->c_str());
  std::remove("/tmp/pmia_bound.json");
}

TEST_CASE("detect-eval emits one row per method with the documented schema") {
  const json doc = parse(R"({
    "seed": 2,
    "world": {"pool_size": 8, "selection_size": 2, "dim": 12, "group_size": 1,
              "min_separation": 8.0, "sigma": 0.5, "loose_clusters": 0},
    "detect_trials": 10,
    "methods": ["lof", "robust_envelope"]
  })");
  CliOverrides ov;
  ov.out = "/tmp/pmia_detect.csv";
  REQUIRE(run_subcommand("detect-eval", doc, ov) == 0);
  const std::string csv = slurp(*ov.out);
  CHECK(csv.rfind("method,contamination,precision,recall,f1,trials,seed\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK(csv.find("lof,") != std::string::npos);
  CHECK(csv.find("robust_envelope,") != std::string::npos);
  std::remove(ov.out->c_str());
}

TEST_CASE("ablate produces the expected factorial row count") {
  const json doc = parse(R"({
    "seed": 4,
    "world": {"pool_size": 10, "selection_size": 2, "dim": 16, "group_size": 1,
              "min_separation": 8.0, "sigma": 1.0, "loose_clusters": 0},
    "game": {"trials": 30, "batch_size": 2},
    "pool_sizes": [10, 12],
    "selection_sizes": [2],
    "delta_mins": [0.02, 0.2],
    "delta_caps": [0.05],
    "betas": [0.0, 0.5],
    "warmup_rounds_grid": [0, 3]
  })");
  CliOverrides ov;
  ov.out = "/tmp/pmia_ablate.csv";
  REQUIRE(run_subcommand("ablate", doc, ov) == 0);
  const std::string csv = slurp(*ov.out);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 + 1 + 2 + 1 + 2 + 2);
  std::remove(ov.out->c_str());
}

TEST_CASE("bound-check sigma grid shares geometry so the bound is monotone") {
  const json doc = parse(R"({
    "seed": 8,
    "trials_per_arm": 500,
    "worlds": [{"sigma": 0.8}, {"sigma": 1.6}, {"sigma": 3.2}]
  })");
  CliOverrides ov;
  ov.out = "/tmp/pmia_bound_grid.csv";
  REQUIRE(run_subcommand("bound-check", doc, ov) == 0);
  std::ifstream in(*ov.out);
  std::string line;
  std::getline(in, line);  // header
  double prev = -1.0;
  while (std::getline(in, line)) {
    std::stringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    const double bound = std::stod(cells[5]);
    CHECK(bound >= prev);  // non-decreasing in sigma = non-increasing as sigma shrinks
    prev = bound;
  }
  std::remove(ov.out->c_str());
  std::remove("/tmp/pmia_bound_grid.json");
}

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "cli.hpp"
#include "fiem/stepsize.hpp"

namespace fs = std::filesystem;
using fiem::cli::run_cli;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("fiem_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

TEST_CASE("plan: Karimi step size") {
  const Result r = cli({"plan", "--strategy", "karimi", "--vmin", "1", "--L", "1", "--Lv", "1", "--n", "1000", "--kmax", "10"});
  REQUIRE(r.code == 0);
  const auto doc = nlohmann::json::parse(r.out);
  CHECK(doc.at("gamma").get<double>() == doctest::Approx(1.6667e-3).epsilon(1e-4));
}

TEST_CASE("plan: uniform non-uniform weights reproduce case1 at mu = 1/2") {
  const fs::path dir = scratch("weights");
  {
    std::ofstream w(dir / "w.csv");
    for (int k = 0; k < 8; ++k) w << "1\n";
  }
  const Result nu = cli({"plan", "--strategy", "nonuniform", "--n", "500", "--kmax", "8", "--vmin", "0.5", "--weights",
                         (dir / "w.csv").string()});
  const Result c1 = cli({"plan", "--strategy", "case1", "--n", "500", "--kmax", "8", "--vmin", "0.5", "--mu", "0.5"});
  REQUIRE(nu.code == 0);
  REQUIRE(c1.code == 0);
  const double gamma = nlohmann::json::parse(c1.out).at("gamma").get<double>();
  const auto gammas = nlohmann::json::parse(nu.out).at("gamma");
  if (gammas.is_array()) {
    REQUIRE(gammas.size() == 8);
    for (const auto& g : gammas) CHECK(std::abs(g.get<double>() - gamma) <= 1e-12 * gamma);
  } else {
    CHECK(std::abs(gammas.get<double>() - gamma) <= 1e-12 * gamma);
  }
}

TEST_CASE("plan: auto picks case1 for accurate targets") {
  const Result r = cli({"plan", "--strategy", "auto", "--epsilon", "1e-3", "--n", "1000000", "--kmax", "100"});
  REQUIRE(r.code == 0);
  CHECK(nlohmann::json::parse(r.out).at("strategy") == "case1");
}

TEST_CASE("plan: infeasible requests exit with code 2 and name the condition") {
  const Result r = cli({"plan", "--strategy", "case2", "--n", "1000000", "--kmax", "10"});
  CHECK(r.code == 2);
  const auto doc = nlohmann::json::parse(r.out);
  CHECK(doc.at("feasible") == false);
  CHECK(!doc.at("violated_condition").get<std::string>().empty());
}

TEST_CASE("config files fill options, flags override, unknown keys fail") {
  const fs::path dir = scratch("config");
  {
    std::ofstream c(dir / "ok.json");
    c << R"({"n": 1000, "kmax": 10, "strategy": "karimi"})";
    std::ofstream bad(dir / "bad.json");
    bad << R"({"n": 1000, "kmax": 10, "colour": "red"})";
  }
  const Result r = cli({"plan", "--config", (dir / "ok.json").string(), "--n", "8000"});
  REQUIRE(r.code == 0);
  const auto doc = nlohmann::json::parse(r.out);
  CHECK(doc.at("n") == 8000);
  CHECK(doc.at("strategy") == "karimi");
  const Result bad = cli({"plan", "--config", (dir / "bad.json").string()});
  CHECK(bad.code == 1);
  CHECK(bad.err.find("colour") != std::string::npos);
}

TEST_CASE("bad arguments exit with code 1") {
  CHECK(cli({"plan", "--n", "10"}).code == 1);
  CHECK(cli({"nonsense"}).code == 1);
  CHECK(cli({"toy", "--algos", "sgd", "--out", (scratch("bad_algo") / "o").string()}).code == 1);
}

TEST_CASE("toy: outputs are byte-identical across reruns and thread counts") {
  const fs::path dir = scratch("toy");
  const std::vector<std::string> base{"toy", "--seed", "4", "--n", "20", "--kmax", "200", "--replicas", "4", "--algos",
                                      "em,iem,online-em,fiem,opt-fiem"};
  auto with = [&](const std::string& out, const std::string& threads) {
    std::vector<std::string> args = base;
    args.insert(args.end(), {"--out", (dir / out).string(), "--threads", threads});
    return cli(args);
  };
  REQUIRE(with("a", "1").code == 0);
  REQUIRE(with("b", "3").code == 0);
  for (const char* file : {"constants.json", "spec.json", "diagnostics.csv", "aggregates.csv", "estimates.csv"}) {
    CHECK(slurp(dir / "a" / file) == slurp(dir / "b" / file));
    CHECK(!slurp(dir / "a" / file).empty());
  }
  const auto constants = nlohmann::json::parse(slurp(dir / "a" / "constants.json"));
  for (const char* key : {"v_min", "v_max", "L", "L_Vdot", "gamma_fgm", "gamma_karimi"}) CHECK(constants.contains(key));
}

TEST_CASE("toy: a single EM replica is one deterministic path") {
  const fs::path dir = scratch("toy_em");
  REQUIRE(cli({"toy", "--n", "10", "--kmax", "30", "--replicas", "1", "--algos", "em", "--out", (dir / "o").string()})
              .code == 0);
  const std::string diagnostics = slurp(dir / "o" / "diagnostics.csv");
  CHECK(diagnostics.find("em,0,") != std::string::npos);
  CHECK(diagnostics.find("em,1,") == std::string::npos);
}

TEST_CASE("toy: a plan file supplies the schedule") {
  const fs::path dir = scratch("toy_plan");
  const Result plan = cli({"plan", "--n", "15", "--kmax", "40", "--out", (dir / "plan.json").string()});
  REQUIRE(plan.code == 0);
  REQUIRE(cli({"toy", "--n", "15", "--kmax", "40", "--replicas", "2", "--algos", "fiem", "--plan",
               (dir / "plan.json").string(), "--out", (dir / "o").string()})
              .code == 0);
  const auto constants = nlohmann::json::parse(slurp(dir / "o" / "constants.json"));
  CHECK(constants.at("schedule") == (dir / "plan.json").string());
  CHECK(cli({"toy", "--n", "15", "--kmax", "41", "--plan", (dir / "plan.json").string(), "--out",
             (dir / "p").string()})
            .code == 0);
}

TEST_CASE("gmm: synthetic runs are reproducible and keep weights on the simplex") {
  const fs::path dir = scratch("gmm");
  const std::vector<std::string> base{"gmm", "--synthetic", "5,300,2,3,0", "--epochs", "3", "--batch", "20",
                                      "--kswitch", "1", "--replicas", "2", "--algos", "em,iem,online-em,h-fiem"};
  auto with = [&](const std::string& out) {
    std::vector<std::string> args = base;
    args.insert(args.end(), {"--out", (dir / out).string()});
    return cli(args);
  };
  REQUIRE(with("a").code == 0);
  REQUIRE(with("b").code == 0);
  for (const char* file : {"epoch_table.csv", "trajectories.csv", "init_params.json", "summary.json"}) {
    CHECK(slurp(dir / "a" / file) == slurp(dir / "b" / file));
  }
  std::istringstream rows(slurp(dir / "a" / "trajectories.csv"));
  std::string line;
  std::getline(rows, line);
  CHECK(line == "algorithm,replica,epoch,iterations,examples,loglik,total_mass,min_mass,w1,w2");
  while (std::getline(rows, line)) {
    std::vector<std::string> cells;
    std::stringstream cs(line);
    std::string cell;
    while (std::getline(cs, cell, ',')) cells.push_back(cell);
    REQUIRE(cells.size() == 10);
    CHECK(std::stod(cells[8]) + std::stod(cells[9]) == doctest::Approx(1.0).epsilon(1e-10));
    if (cells[0] == "online-em") CHECK(std::stoul(cells[3]) == std::stoul(cells[2]) * 15);
    if (cells[0] == "em") CHECK(std::stoul(cells[4]) == std::stoul(cells[2]) * 300);
  }
}

TEST_CASE("check: identities suite passes") {
  const Result r = cli({"check", "--suite", "identities"});
  CHECK(r.code == 0);
  CHECK(r.out.find("FAIL") == std::string::npos);
  CHECK(r.out.find("PASS") != std::string::npos);
}

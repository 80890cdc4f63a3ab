#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "grader/trainer.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "grader");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = grader::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("grader_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Small trainer settings so that a run takes seconds.
fs::path small_config(const fs::path& dir) {
  const fs::path p = dir / "small.json";
  std::ofstream(p) << R"({"epochs_per_iteration": 2, "batch_size": 64, "tv_goal_samples": 200,
                          "planner": {"population": 50}, "dynamics": {"hidden_size": 8}})";
  return p;
}

std::vector<std::string> train_args(const fs::path& dir, const fs::path& out, const std::string& seed = "0") {
  return {"train", "--env", "stack", "--iterations", "10", "--episodes", "4", "--eval-every", "5",
          "--seed", seed, "--config", small_config(dir).string(), "--out", out.string()};
}

}  // namespace

TEST_CASE("train writes ten records and reruns are identical") {
  const fs::path dir = scratch("train");
  const Result a = invoke(train_args(dir, dir / "a"));
  REQUIRE(a.code == 0);
  const fs::path records = dir / "a" / "stack-i-grader-s0.records.csv";
  REQUIRE(fs::exists(records));
  const auto rows = grader::load_records_csv(records.string());
  CHECK(rows.size() == 10);
  CHECK(fs::exists(dir / "a" / "stack-i-grader-s0.manifest.json"));
  CHECK(fs::exists(dir / "a" / "stack-i-grader-s0.checkpoint.json"));
  CHECK(fs::exists(dir / "a" / "stack-i-grader-s0.buffer.csv"));

  REQUIRE(invoke(train_args(dir, dir / "b")).code == 0);
  CHECK(slurp(records) == slurp(dir / "b" / "stack-i-grader-s0.records.csv"));

  // A second run into the same directory gets a fresh id.
  REQUIRE(invoke(train_args(dir, dir / "a")).code == 0);
  CHECK(fs::exists(dir / "a" / "stack-i-grader-s0-2.records.csv"));
}

TEST_CASE("manifest config reproduces the run configuration") {
  const fs::path dir = scratch("manifest");
  REQUIRE(invoke(train_args(dir, dir)).code == 0);
  const auto m = nlohmann::json::parse(slurp(dir / "stack-i-grader-s0.manifest.json")).get<grader::ExperimentManifest>();
  const auto cfg = m.config.get<grader::TrainerConfig>();
  CHECK(cfg.iterations == 10);
  CHECK(cfg.planner.population == 50);
  CHECK(nlohmann::json(cfg) == m.config);
  CHECK(m.seeds == std::vector<std::uint64_t>{0});
  CHECK_FALSE(m.fingerprint.empty());
}

TEST_CASE("usage errors exit 2") {
  CHECK(invoke({}).code == 2);
  CHECK(invoke({"train"}).code == 2);
  CHECK(invoke({"train", "--env", "maze"}).code == 2);
  CHECK(invoke({"train", "--env", "stack", "--episodes", "0"}).code == 2);
  CHECK(invoke({"train", "--env", "stack", "--variant", "bogus"}).code == 2);
  CHECK(invoke({"export-plots"}).code == 2);
  CHECK(invoke({"eval", "--checkpoint", "x.json", "--env", "stack", "--episodes", "0"}).code == 2);
  CHECK(invoke({"frobnicate"}).code == 2);
}

TEST_CASE("runtime failures exit 1") {
  const fs::path dir = scratch("runtime");
  CHECK(invoke({"discover", "--buffer", (dir / "missing.csv").string()}).code == 1);
  std::ofstream(dir / "bad.csv") << "iteration,train_success\n1,2,3\n";
  CHECK(invoke({"export-plots", (dir / "bad.csv").string()}).code == 1);
  CHECK(invoke({"eval", "--checkpoint", (dir / "missing.json").string(), "--env", "stack"}).code == 1);
}

TEST_CASE("discover, eval and export-plots consume train outputs") {
  const fs::path dir = scratch("pipeline");
  REQUIRE(invoke(train_args(dir, dir, "0")).code == 0);
  REQUIRE(invoke(train_args(dir, dir, "1")).code == 0);
  const std::string base0 = (dir / "stack-i-grader-s0").string();

  const Result d = invoke({"discover", "--buffer", base0 + ".buffer.csv", "--shd", "stack", "--out", dir.string()});
  REQUIRE(d.code == 0);
  CHECK(d.out.find("edges ") != std::string::npos);
  CHECK(d.out.find("shd ") != std::string::npos);

  const Result e = invoke({"eval", "--checkpoint", base0 + ".checkpoint.json", "--env", "stack", "--episodes", "3",
                           "--out", (dir / "eval.json").string()});
  REQUIRE(e.code == 0);
  CHECK(e.out.find("success rate") != std::string::npos);
  CHECK(fs::exists(dir / "eval.json"));
  // Wiring mismatch with an explicit graph file.
  grader::save_graph((dir / "full.json").string(), grader::full_graph(2, 3));
  const Result mismatch = invoke({"eval", "--checkpoint", base0 + ".checkpoint.json", "--env", "stack", "--graph",
                                  (dir / "full.json").string()});
  const auto ckpt_graph = grader::FactoredDynamicsModel::load(base0 + ".checkpoint.json").graph();
  CHECK(mismatch.code == (ckpt_graph == grader::full_graph(2, 3) ? 0 : 1));
  CHECK(invoke({"eval", "--checkpoint", base0 + ".checkpoint.json", "--env", "unlock", "--episodes", "1"}).code == 1);

  const Result x = invoke({"export-plots", base0 + ".records.csv", (dir / "stack-i-grader-s1.records.csv").string(),
                           "--metric", "test_success"});
  REQUIRE(x.code == 0);
  std::istringstream lines(x.out);
  std::string header, line;
  std::getline(lines, header);
  CHECK(header.rfind("# fingerprint", 0) == 0);
  std::getline(lines, header);
  CHECK(header == "iteration,seed,metric,value");
  int n = 0, seed1 = 0;
  while (std::getline(lines, line)) {
    ++n;
    seed1 += line.find(",1,test_success,") != std::string::npos;
  }
  CHECK(n == 20);
  CHECK(seed1 == 10);
}

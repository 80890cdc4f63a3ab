#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "grader/discovery.hpp"
#include "grader/error.hpp"
#include "grader/replay_buffer.hpp"
#include "grader/trainer.hpp"

namespace grader::cli {

namespace fs = std::filesystem;

namespace {

// Thrown for argument combinations CLI11 cannot express.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string default_out_root() {
  if (const char* v = std::getenv("GRADER_OUT_DIR"); v && *v) return v;
  return "runs";
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << j.dump(2) << '\n';
}

const std::vector<std::string> kEnvs = {"stack", "unlock", "crash"};
const std::vector<std::string> kSettings = {"i", "s", "c"};
const std::vector<std::string> kVariants = {"grader", "full", "score", "offline"};

struct TrainArgs {
  std::string env;
  std::string setting = "i";
  std::string variant = "grader";
  std::uint64_t seed = 0;
  std::optional<int> iterations;
  std::optional<int> episodes;
  std::optional<int> eval_every;
  std::string config;
  std::string out = default_out_root();
  bool save_buffer = true;
};

// Configuration problems found before any work starts are usage errors.
template <class F>
auto as_usage(F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
}

TrainerConfig train_config(const TrainArgs& a) {
  TrainerConfig cfg = default_trainer_config(parse_env(a.env), parse_variant(a.variant));
  if (!a.config.empty()) {
    nlohmann::json j = read_json_file(a.config);
    j["env"] = a.env;
    j["variant"] = a.variant;
    if (j.contains("env_config")) j["env_config"]["env"] = a.env;
    cfg = j.get<TrainerConfig>();
  }
  cfg.env_config.env = parse_env(a.env);
  cfg.env_config.setting = parse_setting(a.setting);
  cfg.variant = parse_variant(a.variant);
  cfg.seed = a.seed;
  if (a.iterations) cfg.iterations = *a.iterations;
  if (a.episodes) cfg.eval_episodes = *a.episodes;
  if (a.eval_every) cfg.eval_every = *a.eval_every;
  cfg.validate();
  return cfg;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  TrainerConfig cfg = as_usage([&] { return train_config(a); });

  fs::create_directories(a.out);
  const std::string id =
      unique_experiment_id(a.out, a.env + "-" + a.setting + "-" + a.variant + "-s" + std::to_string(a.seed));
  const fs::path base = fs::path(a.out) / id;
  const std::string records_path = base.string() + ".records.csv";
  const std::string timing_path = base.string() + ".timing.csv";
  const std::string summary_path = base.string() + ".summary.json";
  const std::string checkpoint_path = base.string() + ".checkpoint.json";
  const std::string buffer_path = base.string() + ".buffer.csv";
  if (cfg.checkpoint_dir.empty()) cfg.checkpoint_dir = (fs::path(a.out) / (id + ".checkpoints")).string();

  ExperimentManifest manifest;
  manifest.id = id;
  manifest.config = cfg;
  manifest.seeds = {a.seed};
  manifest.outputs = {{"records", records_path}, {"timing", timing_path}, {"summary", summary_path},
                      {"checkpoint", checkpoint_path}};
  if (a.save_buffer) manifest.outputs["buffer"] = buffer_path;
  manifest.fingerprint = build_fingerprint();
  write_manifest(base.string() + ".manifest.json", manifest);

  RunResult result = run_full(cfg, [&out](const RunRecord& r) {
    if (r.evaluated) {
      out << "iteration " << r.iteration << ": test success " << r.test_success << ", shd " << r.shd_to_reference
          << '\n';
    }
  });
  save_records_csv(records_path, result.records);
  save_records_csv(timing_path, result.records, true);
  nlohmann::json summary = records_summary(result.records);
  summary["id"] = id;
  write_json_file(summary_path, summary);
  result.model.save(checkpoint_path);
  if (a.save_buffer) save_buffer_csv(buffer_path, result.buffer);
  out << "wrote " << records_path << '\n';
  return 0;
}

struct DiscoverArgs {
  std::string buffer;
  std::optional<double> eta;
  std::string conditioning;
  std::string config;
  std::string out = default_out_root();
  std::string shd_env;
  std::uint64_t seed = 0;
};

int cmd_discover(const DiscoverArgs& a, std::ostream& out) {
  const DiscoveryConfig cfg = as_usage([&] {
    DiscoveryConfig c;
    if (!a.config.empty()) c = read_json_file(a.config).get<DiscoveryConfig>();
    if (a.eta) c.eta = *a.eta;
    if (!a.conditioning.empty()) c.conditioning = parse_conditioning(a.conditioning);
    c.seed = a.seed;
    c.validate();
    return c;
  });
  if (!fs::exists(a.buffer)) throw Error("buffer file not found: " + a.buffer);
  const ReplayBuffer buffer = load_buffer_csv(a.buffer);
  if (buffer.empty()) throw EmptyBufferError(a.buffer + ": buffer has no transitions");
  DiscoveryReport report = discover_report(buffer, cfg);
  attach_names(report.graph, buffer.spaces());

  fs::create_directories(a.out);
  const std::string stem = fs::path(a.buffer).stem().string();
  const std::string report_path = (fs::path(a.out) / (stem + ".discovery.json")).string();
  const std::string graph_path = (fs::path(a.out) / (stem + ".graph.json")).string();
  nlohmann::json rj = to_json(report);
  rj["fingerprint"] = build_fingerprint();
  write_json_file(report_path, rj);
  save_graph(graph_path, report.graph);
  out << "edges " << report.graph.edge_count() << '\n';
  for (const auto& w : report.warnings) out << "warning: " << w << '\n';
  if (!a.shd_env.empty()) {
    const TransitionCausalGraph ref = reference_graph(parse_env(a.shd_env));
    if (!ref.same_shape(report.graph)) throw Error("reference graph shape does not match the buffer's factors");
    out << "shd " << shd(report.graph, ref) << '\n';
  }
  out << "wrote " << graph_path << '\n';
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string env;
  std::string setting = "i";
  std::string phase = "test";
  std::string graph;
  int episodes = 30;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  if (a.episodes < 1) throw UsageError("--episodes must be at least 1");
  if (!fs::exists(a.checkpoint)) throw Error("checkpoint not found: " + a.checkpoint);
  const FactoredDynamicsModel model = FactoredDynamicsModel::load(a.checkpoint);
  if (!a.graph.empty()) {
    const TransitionCausalGraph g = load_graph(a.graph);
    if (!(g == model.graph())) throw Error("graph " + a.graph + " does not match the checkpoint's wiring");
  }
  EnvConfig env;
  env.env = parse_env(a.env);
  env.setting = parse_setting(a.setting);
  env.phase = parse_phase(a.phase);
  if (!(make_environment(env)->spaces() == model.spaces())) {
    throw Error("checkpoint factor spaces do not match environment " + a.env);
  }
  const PlannerConfig planner = default_planner_config(env.env);
  const double rate = evaluate(model, env, planner, a.episodes, a.seed);
  const nlohmann::json result{{"env", a.env},        {"setting", a.setting}, {"phase", a.phase},
                              {"episodes", a.episodes}, {"seed", a.seed},      {"success_rate", rate},
                              {"checkpoint", a.checkpoint}, {"fingerprint", build_fingerprint()}};
  out << "success rate " << rate << '\n';
  const std::string path =
      a.out.empty() ? (fs::path(a.checkpoint).parent_path() / (fs::path(a.checkpoint).stem().string() + ".eval.json")).string()
                    : a.out;
  write_json_file(path, result);
  return 0;
}

struct ExportArgs {
  std::vector<std::string> inputs;
  std::string metric;
  std::string out;
};

// Seed from a sibling <id>.manifest.json when present, else the input's
// position.
std::uint64_t seed_for(const std::string& records_path, std::size_t position) {
  std::string p = records_path;
  const std::string suffix = ".records.csv";
  if (p.size() > suffix.size() && p.compare(p.size() - suffix.size(), suffix.size(), suffix) == 0) {
    const std::string manifest = p.substr(0, p.size() - suffix.size()) + ".manifest.json";
    if (fs::exists(manifest)) {
      const ExperimentManifest m = read_json_file(manifest).get<ExperimentManifest>();
      if (!m.seeds.empty()) return m.seeds.front();
    }
  }
  return position;
}

int cmd_export(const ExportArgs& a, std::ostream& out) {
  if (a.inputs.empty()) throw UsageError("export-plots needs at least one records CSV");
  std::vector<LongRow> rows;
  for (std::size_t k = 0; k < a.inputs.size(); ++k) {
    const std::vector<RunRecord> records = load_records_csv(a.inputs[k]);
    const std::vector<LongRow> part = to_long_rows(records, seed_for(a.inputs[k], k), a.metric);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  if (a.out.empty()) {
    write_long_csv(out, rows);
  } else {
    std::ofstream f(a.out);
    if (!f) throw Error("cannot write " + a.out);
    write_long_csv(f, rows);
    out << "wrote " << rows.size() << " rows to " << a.out << '\n';
  }
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Causal-graph model-based RL experiments"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Run the training loop and write records, manifest and checkpoint");
  t->add_option("--env", train.env, "Environment")->required()->check(CLI::IsMember(kEnvs));
  t->add_option("--setting", train.setting, "Goal setting")->check(CLI::IsMember(kSettings));
  t->add_option("--variant", train.variant, "Graph variant")->check(CLI::IsMember(kVariants));
  t->add_option("--seed", train.seed);
  t->add_option("--iterations", train.iterations)->check(CLI::NonNegativeNumber);
  t->add_option("--episodes", train.episodes, "Test episodes per evaluation")->check(CLI::PositiveNumber);
  t->add_option("--eval-every", train.eval_every)->check(CLI::PositiveNumber);
  t->add_option("--config", train.config, "JSON trainer config")->check(CLI::ExistingFile);
  t->add_option("--out", train.out, "Output directory (default $GRADER_OUT_DIR or ./runs)");
  t->add_flag("!--no-buffer", train.save_buffer, "Skip writing the replay buffer");

  DiscoverArgs disc;
  auto* d = app.add_subcommand("discover", "Run causal discovery on a saved replay buffer");
  d->add_option("--buffer", disc.buffer, "Replay-buffer CSV")->required();
  d->add_option("--eta", disc.eta, "p-value threshold")->check(CLI::Range(0.0, 1.0));
  d->add_option("--conditioning", disc.conditioning)
      ->check(CLI::IsMember({"marginal", "all_other_sources", "adaptive"}));
  d->add_option("--config", disc.config, "JSON discovery config")->check(CLI::ExistingFile);
  d->add_option("--out", disc.out);
  d->add_option("--shd", disc.shd_env, "Print SHD to this environment's reference graph")
      ->check(CLI::IsMember(kEnvs));
  d->add_option("--seed", disc.seed);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Success rate of a checkpoint under greedy planning");
  e->add_option("--checkpoint", ev.checkpoint)->required();
  e->add_option("--env", ev.env)->required()->check(CLI::IsMember(kEnvs));
  e->add_option("--setting", ev.setting)->check(CLI::IsMember(kSettings));
  e->add_option("--phase", ev.phase)->check(CLI::IsMember({"train", "test"}));
  e->add_option("--graph", ev.graph, "Graph file the checkpoint must be wired with");
  e->add_option("--episodes", ev.episodes);
  e->add_option("--seed", ev.seed);
  e->add_option("--out", ev.out, "Result JSON path");

  ExportArgs ex;
  auto* x = app.add_subcommand("export-plots", "Merge records CSVs into long format");
  x->add_option("inputs", ex.inputs, "Records CSV files");
  x->add_option("--metric", ex.metric)->check(CLI::IsMember(record_metric_names()));
  x->add_option("--out", ex.out, "Output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (t->parsed()) return cmd_train(train, out);
    if (d->parsed()) return cmd_discover(disc, out);
    if (e->parsed()) return cmd_eval(ev, out);
    if (x->parsed()) return cmd_export(ex, out);
  } catch (const UsageError& ue) {
    err << "usage error: " << ue.what() << '\n';
    return 2;
  } catch (const std::exception& ex_) {
    err << "error: " << ex_.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace grader::cli

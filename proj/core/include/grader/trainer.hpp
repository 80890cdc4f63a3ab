#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "grader/discovery.hpp"
#include "grader/dynamics.hpp"
#include "grader/envs/environment.hpp"
#include "grader/planner.hpp"

namespace grader {

// How the trainer obtains the graph the dynamics model is wired with.
//   grader  - discovery on the interventional buffer on a fixed cadence
//   full    - complete bipartite graph, frozen
//   score   - gate-based score discovery on a cadence
//   offline - discovery once on random-policy data, frozen
//   fixed   - a caller-supplied graph, frozen
enum class Variant { grader, full, score, offline, fixed };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

struct TrainerConfig {
  EnvConfig env_config;
  PlannerConfig planner;
  DiscoveryConfig discovery;
  ScoreConfig score;
  DynamicsConfig dynamics;
  std::size_t buffer_capacity = 4000;
  int epochs_per_iteration = 20;
  int batch_size = 256;
  double learning_rate = 1e-3;
  int iterations = 300;
  Variant variant = Variant::grader;
  int episodes_per_iteration = 1;
  // Graph update cadence in iterations (grader and score variants).
  int discovery_every = 1;
  int score_every = 10;
  // Random-policy episodes for the offline variant; 0 matches the budget of
  // iterations * episodes_per_iteration.
  int offline_episodes = 0;
  int eval_every = 10;
  int eval_episodes = 30;
  // Stop once the 20-iteration moving average of train success changes by
  // less than 0.01 between consecutive windows.
  bool early_stop = false;
  // Prior edge probability used for the logged sparsity term.
  double kl_epsilon = 0.25;
  // Goals drawn for the TV-distance estimate.
  int tv_goal_samples = 2000;
  int tv_bins = 10;
  // Trains a second model on the reference graph to log the ELBO gap.
  bool track_elbo_gap = false;
  std::optional<TransitionCausalGraph> fixed_graph;
  int checkpoint_every = 0;
  std::string checkpoint_dir;
  std::uint64_t seed = 0;

  void validate() const;
};

// Hyper-parameter defaults for an environment (buffer, epochs, learning
// rate, hidden size, planner and cadences).
TrainerConfig default_trainer_config(EnvKind env, Variant variant = Variant::grader);
void to_json(nlohmann::json& j, const TrainerConfig& c);
// Missing keys keep the defaults of the named environment.
void from_json(const nlohmann::json& j, TrainerConfig& c);

struct RunRecord {
  int iteration = 0;
  bool train_success = false;
  // Most recent test-phase evaluation; `evaluated` marks iterations where it
  // was recomputed.
  double test_success = 0.0;
  bool evaluated = false;
  int shd_to_reference = 0;
  int edges = 0;
  double mean_log_likelihood = 0.0;
  double kl_sparsity = 0.0;
  double tv_distance = 0.0;
  // |ELBO(reference) - ELBO(current)|, NaN when not tracked.
  double elbo_gap = 0.0;
  double train_loss = 0.0;
  std::size_t buffer_size = 0;
  double wall_clock_seconds = 0.0;

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

struct RunResult {
  std::vector<RunRecord> records;
  TransitionCausalGraph graph;
  FactoredDynamicsModel model;
  ReplayBuffer buffer;
};

using IterationCallback = std::function<void(const RunRecord&)>;

// Outer loop: one planned episode per round, graph update, rewiring, model
// training and a record per iteration. Errors are rethrown with the
// iteration prefixed; a checkpoint is written first when checkpoint_dir is
// set.
RunResult run_full(const TrainerConfig& config, const IterationCallback& on_iteration = {});
std::vector<RunRecord> run(const TrainerConfig& config);

// Fraction of test-phase episodes that end with reward 1 under planning with
// the learned model. Episode e uses seed derive_seed(seed, e).
double evaluate(const FactoredDynamicsModel& model, const EnvConfig& env_config, const PlannerConfig& planner,
                int n_episodes, std::uint64_t seed, bool use_action_cost = true);

// Same protocol with an arbitrary rollout model, e.g. the environment itself.
double evaluate_with(RolloutModel& model, const EnvConfig& env_config, const PlannerConfig& planner,
                     int n_episodes, std::uint64_t seed, bool use_action_cost = true);

using GoalSampler = std::function<Goal(Rng&)>;

// Total variation between the buffer's next-state distribution projected to
// goal-assigned factors and the goal distribution. Continuous factors are
// binned into `n_bins` cells per component over their bounds. When goals
// assign different factor sets, the mean of the per-factor marginal
// distances is returned. Throws EmptyBufferError on an empty buffer.
double tv_distance_estimate(const ReplayBuffer& buffer, const GoalSampler& goals, int n_goal_samples,
                            std::uint64_t seed, int n_bins = 10);

// Variational objective surrogate: mean log-likelihood minus the sparsity
// term of the model's graph.
double elbo_estimate(const FactoredDynamicsModel& model, const EncodedBatch& batch, double kl_epsilon);

// --- run artifacts ---------------------------------------------------------

struct ExperimentManifest {
  std::string id;
  nlohmann::json config;
  std::vector<std::uint64_t> seeds;
  nlohmann::json outputs;
  std::string fingerprint;
};

// Library version, compiler and source revision captured at build time.
std::string build_fingerprint();
void to_json(nlohmann::json& j, const ExperimentManifest& m);
void from_json(const nlohmann::json& j, ExperimentManifest& m);
// First id of the form base, base-2, base-3, ... without a manifest in dir.
std::string unique_experiment_id(const std::string& dir, const std::string& base);
void write_manifest(const std::string& path, const ExperimentManifest& m);

// CSV with a leading "# fingerprint" comment line. Timing is excluded unless
// requested so that reruns produce identical files.
void write_records_csv(std::ostream& out, const std::vector<RunRecord>& records, bool include_timing = false);
void save_records_csv(const std::string& path, const std::vector<RunRecord>& records, bool include_timing = false);
// Reads files written by write_records_csv; throws ParseError naming the file
// and line on malformed rows.
std::vector<RunRecord> read_records_csv(std::istream& in, const std::string& name = "<stream>");
std::vector<RunRecord> load_records_csv(const std::string& path);
nlohmann::json records_summary(const std::vector<RunRecord>& records);

struct LongRow {
  int iteration = 0;
  std::uint64_t seed = 0;
  std::string metric;
  double value = 0.0;
};

// Tidy (iteration, seed, metric, value) rows; an empty filter keeps every
// metric.
std::vector<LongRow> to_long_rows(const std::vector<RunRecord>& records, std::uint64_t seed,
                                  const std::string& metric_filter = {});
void write_long_csv(std::ostream& out, const std::vector<LongRow>& rows);
const std::vector<std::string>& record_metric_names();

}  // namespace grader

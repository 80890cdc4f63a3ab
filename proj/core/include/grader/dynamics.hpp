#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "grader/graph.hpp"
#include "grader/node_predictor.hpp"
#include "grader/replay_buffer.hpp"

namespace grader {

struct DynamicsConfig {
  int hidden_size = 32;
  // Fixed noise scale of continuous factors, in normalized units.
  double sigma = 0.1;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const DynamicsConfig& c);
void from_json(const nlohmann::json& j, DynamicsConfig& c);

enum class PredictMode { deterministic, sampled };

struct TrainingReport {
  // Mean summed NLL of each optimizer step's minibatch.
  std::vector<double> loss_curve;
  // Mean summed NLL on the fixed validation split after each epoch.
  std::vector<double> validation_nll;
  long steps = 0;
};

struct GradientCheckReport {
  int checked = 0;
  double max_relative_error = 0.0;
  std::string worst_parameter;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = true;
};

// Encodes samples column-wise: sources from (state, action), targets from
// next_state.
EncodedBatch encode_samples(const MdpSpaces& spaces, std::span<const TransitionSample> samples);
EncodedBatch encode_samples(const MdpSpaces& spaces, const ReplayBuffer& buffer, std::span<const std::size_t> rows);
// Sources only, from raw state (Ws x K) and action (Wa x K) columns.
EncodedBatch encode_sources(const MdpSpaces& spaces, const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions);
// Column subset of every matrix in the batch.
EncodedBatch gather(const EncodedBatch& full, std::span<const int> columns);

// Graph-masked factored transition model: target j is predicted by its own
// recurrent predictor fed only with parents_of(graph, j).
class FactoredDynamicsModel {
 public:
  FactoredDynamicsModel(MdpSpaces spaces, TransitionCausalGraph graph, DynamicsConfig config);

  const MdpSpaces& spaces() const { return spaces_; }
  const TransitionCausalGraph& graph() const { return graph_; }
  const DynamicsConfig& config() const { return config_; }
  int num_targets() const { return static_cast<int>(predictors_.size()); }
  const NodePredictor& predictor(int j) const { return predictors_.at(j); }
  NodePredictor& predictor(int j) { return predictors_.at(j); }
  std::size_t parameter_count() const;

  // Deterministic mode returns the mean (continuous, clipped to bounds) or
  // per-component argmax with lowest-index tie-break; sampled mode draws from
  // the predictive distribution using `seed`.
  FactoredState predict(const FactoredState& state, const FactoredAction& action,
                        PredictMode mode = PredictMode::deterministic, std::uint64_t seed = 0) const;

  // Deterministic prediction on K columns at once. `next` receives Ws x K raw
  // values; targets with targets[j] == false are copied from `states`.
  void predict_batch(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions, Eigen::MatrixXd& next,
                     const std::vector<bool>& targets) const;

  // Mean over the batch of the summed per-factor log-likelihood.
  double log_likelihood(std::span<const TransitionSample> batch) const;
  double log_likelihood(const EncodedBatch& batch) const;
  // Per-target mean log-likelihood; throws NumericError naming a non-finite
  // factor.
  std::vector<double> factor_log_likelihood(const EncodedBatch& batch) const;

  // epochs * ceil(n / batch_size) minibatch steps over the training split;
  // every tenth buffer sample forms the fixed validation split. Throws
  // OptimizationError on a non-finite loss.
  TrainingReport train_epochs(const ReplayBuffer& buffer, int epochs, int batch_size, double learning_rate,
                              std::uint64_t seed);

  // Central finite differences on `n_params` parameters chosen uniformly
  // across all predictors.
  GradientCheckReport gradient_check(std::span<const TransitionSample> batch, double epsilon, double tolerance,
                                     int n_params = 100, std::uint64_t seed = 0);

  // Rewires to `graph`; predictors whose parent set changed are
  // re-initialized. Returns the indices of re-initialized targets.
  std::vector<int> rebuild_for_graph(const TransitionCausalGraph& graph);

  nlohmann::json to_checkpoint() const;
  static FactoredDynamicsModel from_checkpoint(const nlohmann::json& j);
  void save(const std::string& path) const;
  static FactoredDynamicsModel load(const std::string& path);

 private:
  std::uint64_t predictor_seed(int target) const;
  void decode_deterministic(int target, const Eigen::MatrixXd& out, const Eigen::MatrixXd& states,
                            Eigen::MatrixXd& next) const;

  MdpSpaces spaces_;
  TransitionCausalGraph graph_;
  DynamicsConfig config_;
  std::vector<NodePredictor> predictors_;
  std::vector<int> generation_;  // bumps on each re-initialization of a target
};

// Targets needed to evaluate the goal: goal factors plus, transitively, the
// state parents of every needed target.
std::vector<bool> relevant_targets(const TransitionCausalGraph& graph, const Goal& goal);

}  // namespace grader

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "grader/dynamics.hpp"
#include "grader/envs/environment.hpp"
#include "grader/graph.hpp"
#include "grader/regression_tree.hpp"
#include "grader/replay_buffer.hpp"

namespace grader {

enum class TestKind { chi_squared, regression_conditional };

// Conditioning used when testing source i against target j:
//   marginal           no conditioning;
//   all_other_sources  every other step-t factor;
//   adaptive           for all-discrete spaces, the target's own previous
//                      value plus every subset (up to max_condition_size) of
//                      the remaining candidate parents, keeping the largest
//                      p-value; spaces with continuous factors fall back to
//                      all_other_sources.
enum class Conditioning { marginal, all_other_sources, adaptive };

std::string to_string(Conditioning c);
Conditioning parse_conditioning(const std::string& s);

// Edge rule: an edge is declared when the independence hypothesis is
// rejected, p < eta. A smaller eta therefore gives a sparser graph.
struct DiscoveryConfig {
  double eta = 0.01;
  Conditioning conditioning = Conditioning::all_other_sources;
  int min_samples = 50;
  // adaptive: largest conditioning subset drawn from the candidates, and the
  // level (independent of eta) that admits a source as a candidate.
  int max_condition_size = 2;
  double candidate_eta = 0.05;
  // Regression test: held-out fraction, tree shape, and row cap.
  double holdout_fraction = 0.3;
  stats::TreeOptions tree;
  int regression_max_samples = 4000;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const DiscoveryConfig& c);
void from_json(const nlohmann::json& j, DiscoveryConfig& c);

struct IndependenceTestResult {
  int source = 0;
  int target = 0;
  double p_value = 1.0;
  double statistic = 0.0;
  TestKind kind = TestKind::chi_squared;
  int n_samples = 0;
  // False when the data cannot support the test (too few samples or no
  // variation); such edges are reported absent.
  bool testable = true;
  std::vector<int> conditioning;
  std::string note;
};

void to_json(nlohmann::json& j, const IndependenceTestResult& r);

// Columns of a buffer prepared once for many tests.
class DiscoveryData {
 public:
  DiscoveryData(const ReplayBuffer& buffer, const DiscoveryConfig& config);

  const MdpSpaces& spaces() const { return spaces_; }
  int size() const { return n_; }
  bool all_discrete() const { return all_discrete_; }

  // Category keys of source i (step t) and target j (step t+1).
  const std::vector<std::int64_t>& source_keys(int i) const { return source_keys_[i]; }
  const std::vector<std::int64_t>& target_keys(int j) const { return target_keys_[j]; }
  bool source_constant(int i) const;
  bool target_constant(int j) const;

  // Regression-test design: encoded sources and targets on a row subset.
  const Eigen::MatrixXd& features() const { return features_; }
  const Eigen::MatrixXd& target_values(int j) const { return target_values_[j]; }
  // Encoded change of continuous target j over the step; empty for discrete
  // targets. Used when the current value of j is conditioned on, which makes
  // it an exact shift of the target.
  const Eigen::MatrixXd& target_deltas(int j) const { return target_deltas_[j]; }
  const std::vector<int>& feature_columns(int i) const { return feature_columns_[i]; }
  const std::vector<int>& train_rows() const { return train_rows_; }
  const std::vector<int>& test_rows() const { return test_rows_; }

 private:
  MdpSpaces spaces_;
  int n_ = 0;
  bool all_discrete_ = true;
  std::vector<std::vector<std::int64_t>> source_keys_;
  std::vector<std::vector<std::int64_t>> target_keys_;
  std::vector<bool> source_const_, target_const_;
  Eigen::MatrixXd features_;
  std::vector<Eigen::MatrixXd> target_values_, target_deltas_;
  std::vector<std::vector<int>> feature_columns_;
  std::vector<int> train_rows_, test_rows_;
};

// Test of source i against target j given the source set `conditioning`.
IndependenceTestResult test_edge_given(const DiscoveryData& data, int i, int j, const std::vector<int>& conditioning,
                                       const DiscoveryConfig& config);

// Test with the conditioning set implied by config.conditioning; adaptive
// reports the largest p-value over its conditioning sets.
IndependenceTestResult test_edge(const ReplayBuffer& buffer, int i, int j, const DiscoveryConfig& config);
IndependenceTestResult test_edge(const DiscoveryData& data, int i, int j, const DiscoveryConfig& config);

struct DiscoveryReport {
  TransitionCausalGraph graph;
  // Deciding test per (source, target), row-major by source.
  std::vector<IndependenceTestResult> tests;
  std::vector<std::string> warnings;
  DiscoveryConfig config;
  int n_samples = 0;
};

nlohmann::json to_json(const DiscoveryReport& r);

// Edge (i, j) present iff test_edge(i, j).p_value < eta.
DiscoveryReport discover_report(const ReplayBuffer& buffer, const DiscoveryConfig& config);
TransitionCausalGraph discover(const ReplayBuffer& buffer, const DiscoveryConfig& config);

// log((1 - eps) / eps) * |edges|; the additive constant of the KL term is
// omitted. Throws DomainError unless eps is in (0, 0.5].
double kl_sparsity(const TransitionCausalGraph& g, double epsilon);

struct ScoreConfig {
  DynamicsConfig dynamics;
  double sparsity_lambda = 0.01;
  int steps = 500;
  int batch_size = 256;
  double learning_rate = 1e-3;
  double gate_learning_rate = 0.02;
  // Initial gate logit; 0 starts every soft edge at 0.5.
  double init_logit = 0.0;
  double cutoff = 0.5;
};

struct ScoreResult {
  SoftAdjacency soft;
  TransitionCausalGraph graph;
  std::vector<double> loss_curve;
};

// Score-based ablation: a fully wired model whose parent inputs are scaled
// by sigmoid gates, trained on NLL + lambda * sum(gates). Throws
// OptimizationError on a non-finite loss.
ScoreResult discover_score(const ReplayBuffer& buffer, const ScoreConfig& config, std::uint64_t seed);

// Offline ablation: a uniform-random policy fills a fresh buffer, then
// discover runs on it.
DiscoveryReport discover_offline(const EnvConfig& env_config, int n_episodes, const DiscoveryConfig& config,
                                 std::uint64_t seed, std::size_t capacity = 0);
ReplayBuffer collect_random(const EnvConfig& env_config, int n_episodes, std::uint64_t seed, std::size_t capacity = 0);

}  // namespace grader

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "grader/mdp.hpp"

namespace grader {

// Bipartite transition causal graph. Sources are the M state factors at step
// t followed by the N action factors; targets are the M state factors at
// step t+1. Edges only run source -> target, so every instance is acyclic.
class TransitionCausalGraph {
 public:
  TransitionCausalGraph() = default;
  TransitionCausalGraph(int num_state, int num_action);

  int num_state() const { return num_state_; }
  int num_action() const { return num_action_; }
  int num_sources() const { return num_state_ + num_action_; }
  int num_targets() const { return num_state_; }

  bool edge(int source, int target) const { return adj_[index(source, target)] != 0; }
  void set_edge(int source, int target, bool present);
  int edge_count() const;
  bool same_shape(const TransitionCausalGraph& other) const;
  // True when every edge of this graph is also in `other`.
  bool is_subgraph_of(const TransitionCausalGraph& other) const;

  // Optional display names, written to and read from graph files.
  std::vector<std::string> source_names;
  std::vector<std::string> target_names;

  friend bool operator==(const TransitionCausalGraph& a, const TransitionCausalGraph& b) {
    return a.num_state_ == b.num_state_ && a.num_action_ == b.num_action_ && a.adj_ == b.adj_;
  }

 private:
  std::size_t index(int source, int target) const;

  int num_state_ = 0;
  int num_action_ = 0;
  std::vector<std::uint8_t> adj_;
};

// Learnable edge weights of the score-based ablation, each in [0, 1].
class SoftAdjacency {
 public:
  SoftAdjacency(int num_state, int num_action, double init = 0.0);

  int num_sources() const { return num_sources_; }
  int num_targets() const { return num_targets_; }
  int num_action() const { return num_sources_ - num_targets_; }
  double weight(int source, int target) const { return w_[source * num_targets_ + target]; }
  // Values are clamped into [0, 1].
  void set_weight(int source, int target, double w);

 private:
  int num_sources_;
  int num_targets_;
  std::vector<double> w_;
};

// Number of (source, target) entries on which the graphs disagree.
int shd(const TransitionCausalGraph& a, const TransitionCausalGraph& b);

TransitionCausalGraph full_graph(int num_state, int num_action);
TransitionCausalGraph empty_graph(int num_state, int num_action);

// Flips exactly k uniformly chosen entries of `reference` that differ from
// `toward`, so shd(result, reference) == k.
TransitionCausalGraph interpolate(const TransitionCausalGraph& reference, const TransitionCausalGraph& toward,
                                  int k, std::uint64_t seed);

TransitionCausalGraph threshold_soft(const SoftAdjacency& soft, double cutoff);

// Parent sources of target j: own previous-step factor j first when present,
// the rest ascending.
std::vector<int> parents_of(const TransitionCausalGraph& g, int target);

// Structural check: shapes consistent and edges only source -> target.
bool is_valid_bipartite(const TransitionCausalGraph& g);

// Node count of the subgraph spanned by edges: sources with an outgoing edge
// plus targets with an incoming edge.
int active_node_count(const TransitionCausalGraph& g);

void attach_names(TransitionCausalGraph& g, const MdpSpaces& spaces);

void to_json(nlohmann::json& j, const TransitionCausalGraph& g);
void from_json(const nlohmann::json& j, TransitionCausalGraph& g);
TransitionCausalGraph load_graph(const std::string& path);
void save_graph(const std::string& path, const TransitionCausalGraph& g);

}  // namespace grader

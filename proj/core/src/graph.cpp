#include "grader/graph.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "grader/error.hpp"
#include "grader/rng.hpp"

namespace grader {

TransitionCausalGraph::TransitionCausalGraph(int num_state, int num_action)
    : num_state_(num_state), num_action_(num_action) {
  if (num_state < 1 || num_action < 0) throw DimensionError("graph needs M >= 1 and N >= 0");
  adj_.assign(static_cast<std::size_t>(num_sources()) * num_targets(), 0);
}

std::size_t TransitionCausalGraph::index(int source, int target) const {
  if (source < 0 || source >= num_sources() || target < 0 || target >= num_targets()) {
    throw RangeError("edge (" + std::to_string(source) + "," + std::to_string(target) + ") out of range");
  }
  return static_cast<std::size_t>(source) * num_targets() + target;
}

void TransitionCausalGraph::set_edge(int source, int target, bool present) {
  adj_[index(source, target)] = present ? 1 : 0;
}

int TransitionCausalGraph::edge_count() const {
  return static_cast<int>(std::count(adj_.begin(), adj_.end(), std::uint8_t{1}));
}

bool TransitionCausalGraph::same_shape(const TransitionCausalGraph& o) const {
  return num_state_ == o.num_state_ && num_action_ == o.num_action_;
}

bool TransitionCausalGraph::is_subgraph_of(const TransitionCausalGraph& o) const {
  if (!same_shape(o)) throw DimensionError("graph shapes differ");
  for (std::size_t k = 0; k < adj_.size(); ++k) {
    if (adj_[k] && !o.adj_[k]) return false;
  }
  return true;
}

SoftAdjacency::SoftAdjacency(int num_state, int num_action, double init)
    : num_sources_(num_state + num_action), num_targets_(num_state) {
  w_.assign(static_cast<std::size_t>(num_sources_) * num_targets_, std::clamp(init, 0.0, 1.0));
}

void SoftAdjacency::set_weight(int source, int target, double w) {
  w_[source * num_targets_ + target] = std::clamp(w, 0.0, 1.0);
}

int shd(const TransitionCausalGraph& a, const TransitionCausalGraph& b) {
  if (!a.same_shape(b)) throw DimensionError("shd: graph shapes differ");
  int d = 0;
  for (int i = 0; i < a.num_sources(); ++i) {
    for (int j = 0; j < a.num_targets(); ++j) d += a.edge(i, j) != b.edge(i, j);
  }
  return d;
}

TransitionCausalGraph full_graph(int num_state, int num_action) {
  if (num_state < 1 || num_action < 1) throw DimensionError("full_graph needs M, N >= 1");
  TransitionCausalGraph g(num_state, num_action);
  for (int i = 0; i < g.num_sources(); ++i) {
    for (int j = 0; j < g.num_targets(); ++j) g.set_edge(i, j, true);
  }
  return g;
}

TransitionCausalGraph empty_graph(int num_state, int num_action) {
  return TransitionCausalGraph(num_state, num_action);
}

TransitionCausalGraph interpolate(const TransitionCausalGraph& reference, const TransitionCausalGraph& toward,
                                  int k, std::uint64_t seed) {
  const int d = shd(reference, toward);
  if (k < 0 || k > d) {
    throw RangeError("interpolate: k=" + std::to_string(k) + " outside [0, " + std::to_string(d) + "]");
  }
  std::vector<std::pair<int, int>> diff;
  for (int i = 0; i < reference.num_sources(); ++i) {
    for (int j = 0; j < reference.num_targets(); ++j) {
      if (reference.edge(i, j) != toward.edge(i, j)) diff.emplace_back(i, j);
    }
  }
  Rng rng(seed);
  std::shuffle(diff.begin(), diff.end(), rng);
  TransitionCausalGraph out = reference;
  for (int n = 0; n < k; ++n) out.set_edge(diff[n].first, diff[n].second, toward.edge(diff[n].first, diff[n].second));
  return out;
}

TransitionCausalGraph threshold_soft(const SoftAdjacency& soft, double cutoff) {
  TransitionCausalGraph g(soft.num_targets(), soft.num_action());
  for (int i = 0; i < soft.num_sources(); ++i) {
    for (int j = 0; j < soft.num_targets(); ++j) g.set_edge(i, j, soft.weight(i, j) >= cutoff);
  }
  return g;
}

std::vector<int> parents_of(const TransitionCausalGraph& g, int target) {
  if (target < 0 || target >= g.num_targets()) throw RangeError("parents_of: target index out of range");
  std::vector<int> out;
  if (g.edge(target, target)) out.push_back(target);
  for (int i = 0; i < g.num_sources(); ++i) {
    if (i != target && g.edge(i, target)) out.push_back(i);
  }
  return out;
}

bool is_valid_bipartite(const TransitionCausalGraph& g) {
  if (g.num_targets() < 1 || g.num_sources() < g.num_targets()) return false;
  // Kahn's algorithm over the unrolled vertex set: sources are nodes
  // [0, M+N), targets are nodes [M+N, 2M+N).
  const int ns = g.num_sources();
  const int nv = ns + g.num_targets();
  std::vector<std::vector<int>> out(nv);
  std::vector<int> indeg(nv, 0);
  for (int i = 0; i < ns; ++i) {
    for (int j = 0; j < g.num_targets(); ++j) {
      if (g.edge(i, j)) {
        out[i].push_back(ns + j);
        ++indeg[ns + j];
      }
    }
  }
  std::vector<int> ready;
  for (int v = 0; v < nv; ++v) {
    if (indeg[v] == 0) ready.push_back(v);
  }
  int visited = 0;
  while (!ready.empty()) {
    const int v = ready.back();
    ready.pop_back();
    ++visited;
    for (int w : out[v]) {
      if (--indeg[w] == 0) ready.push_back(w);
    }
  }
  for (int j = 0; j < g.num_targets(); ++j) {
    if (!out[ns + j].empty()) return false;
  }
  return visited == nv;
}

int active_node_count(const TransitionCausalGraph& g) {
  int n = 0;
  for (int i = 0; i < g.num_sources(); ++i) {
    for (int j = 0; j < g.num_targets(); ++j) {
      if (g.edge(i, j)) {
        ++n;
        break;
      }
    }
  }
  for (int j = 0; j < g.num_targets(); ++j) {
    for (int i = 0; i < g.num_sources(); ++i) {
      if (g.edge(i, j)) {
        ++n;
        break;
      }
    }
  }
  return n;
}

void attach_names(TransitionCausalGraph& g, const MdpSpaces& spaces) {
  g.source_names.clear();
  g.target_names.clear();
  for (const auto& s : spaces.state.spaces()) g.source_names.push_back(s.name);
  for (const auto& s : spaces.action.spaces()) g.source_names.push_back(s.name);
  for (const auto& s : spaces.state.spaces()) g.target_names.push_back(s.name + "'");
}

void to_json(nlohmann::json& j, const TransitionCausalGraph& g) {
  auto sources = g.source_names;
  auto targets = g.target_names;
  if (static_cast<int>(sources.size()) != g.num_sources()) {
    sources.clear();
    for (int i = 0; i < g.num_sources(); ++i) {
      sources.push_back(i < g.num_state() ? "s" + std::to_string(i) : "a" + std::to_string(i - g.num_state()));
    }
  }
  if (static_cast<int>(targets.size()) != g.num_targets()) {
    targets.clear();
    for (int i = 0; i < g.num_targets(); ++i) targets.push_back("s" + std::to_string(i) + "'");
  }
  auto edges = nlohmann::json::array();
  for (int i = 0; i < g.num_sources(); ++i) {
    for (int t = 0; t < g.num_targets(); ++t) {
      if (g.edge(i, t)) edges.push_back({i, t});
    }
  }
  j = nlohmann::json{{"source_names", sources}, {"target_names", targets}, {"edges", edges}};
}

void from_json(const nlohmann::json& j, TransitionCausalGraph& g) {
  auto sources = j.at("source_names").get<std::vector<std::string>>();
  auto targets = j.at("target_names").get<std::vector<std::string>>();
  const int m = static_cast<int>(targets.size());
  const int n = static_cast<int>(sources.size()) - m;
  if (m < 1 || n < 0) throw DimensionError("graph file: need at least as many sources as targets");
  g = TransitionCausalGraph(m, n);
  for (const auto& e : j.at("edges")) {
    if (!e.is_array() || e.size() != 2) throw ConfigError("graph file: each edge must be [source, target]");
    g.set_edge(e[0].get<int>(), e[1].get<int>(), true);
  }
  g.source_names = std::move(sources);
  g.target_names = std::move(targets);
}

TransitionCausalGraph load_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open graph file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("graph file '" + path + "' is not valid JSON: " + e.what());
  }
  return j.get<TransitionCausalGraph>();
}

void save_graph(const std::string& path, const TransitionCausalGraph& g) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << nlohmann::json(g).dump(2) << '\n';
}

}  // namespace grader

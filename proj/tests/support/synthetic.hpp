#pragma once

// Synthetic structural causal models with known bipartite graphs, used as
// oracles by the unit and acceptance tests.

#include <algorithm>
#include <cstdint>
#include <vector>

#include "grader/graph.hpp"
#include "grader/mdp.hpp"
#include "grader/replay_buffer.hpp"
#include "grader/rng.hpp"

namespace grader::testing {

inline MdpSpaces discrete_spaces(const std::vector<int>& state_cards, const std::vector<int>& action_cards) {
  std::vector<FactorSpace> s, a;
  for (std::size_t k = 0; k < state_cards.size(); ++k) s.push_back(FactorSpace::discrete("s" + std::to_string(k), state_cards[k]));
  for (std::size_t k = 0; k < action_cards.size(); ++k) a.push_back(FactorSpace::discrete("a" + std::to_string(k), action_cards[k]));
  return MdpSpaces{FactorLayout(s), FactorLayout(a)};
}

// Buffer sample with an empty goal, which every state satisfies.
inline TransitionSample plain_sample(std::vector<double> s, std::vector<double> a, std::vector<double> next,
                                     std::int64_t id = 0) {
  return TransitionSample{FactoredState(std::move(s)), FactoredAction(std::move(a)), FactoredState(std::move(next)),
                          Goal{}, 1.0, true, id};
}

// Discrete SCM: each target is a random lookup table of its parents, replaced
// by a uniform draw with probability `noise`.
struct DiscreteScm {
  MdpSpaces spaces;
  TransitionCausalGraph graph;
  std::vector<std::vector<int>> parents;  // per target, ascending source index
  std::vector<std::vector<int>> tables;   // per target, mixed-radix over parents
  double noise = 0.1;

  int evaluate(int j, const std::vector<int>& src, Rng& rng) const {
    const int card = spaces.state[j].cardinality;
    if (bernoulli(rng, noise)) return uniform_int(rng, 0, card - 1);
    std::size_t idx = 0;
    for (int p : parents[j]) idx = idx * spaces.source(p).cardinality + src[p];
    return tables[j][idx];
  }
};

// True when every parent changes the table output for some assignment of
// the others.
inline bool every_parent_matters(const DiscreteScm& scm, int j) {
  const auto& ps = scm.parents[j];
  std::vector<int> cards;
  for (int p : ps) cards.push_back(scm.spaces.source(p).cardinality);
  const std::size_t total = scm.tables[j].size();
  for (std::size_t k = 0; k < ps.size(); ++k) {
    std::size_t stride = 1;
    for (std::size_t q = k + 1; q < ps.size(); ++q) stride *= cards[q];
    bool matters = false;
    for (std::size_t idx = 0; idx < total && !matters; ++idx) {
      const std::size_t digit = (idx / stride) % cards[k];
      if (digit + 1 < static_cast<std::size_t>(cards[k]) && scm.tables[j][idx] != scm.tables[j][idx + stride]) {
        matters = true;
      }
    }
    if (!matters) return false;
  }
  return true;
}

// M in [2, max_state], N in [1, max_action], cardinalities in [2, max_card];
// each target keeps its own factor with probability 0.7 and draws up to two
// further parents.
inline DiscreteScm random_scm(std::uint64_t seed, int max_state = 5, int max_action = 3, int max_card = 4,
                              double noise = 0.1) {
  Rng rng(seed);
  const int M = uniform_int(rng, 2, max_state);
  const int N = uniform_int(rng, 1, max_action);
  std::vector<int> sc(M), ac(N);
  for (auto& c : sc) c = uniform_int(rng, 2, max_card);
  for (auto& c : ac) c = uniform_int(rng, 2, max_card);
  DiscreteScm scm;
  scm.spaces = discrete_spaces(sc, ac);
  scm.graph = TransitionCausalGraph(M, N);
  scm.noise = noise;
  const int S = M + N;
  for (int j = 0; j < M; ++j) {
    for (;;) {
      std::vector<int> ps;
      if (bernoulli(rng, 0.7)) ps.push_back(j);
      const std::size_t want = ps.size() + uniform_int(rng, ps.empty() ? 1 : 0, 2);
      while (ps.size() < want) {
        const int p = uniform_int(rng, 0, S - 1);
        if (std::find(ps.begin(), ps.end(), p) == ps.end()) ps.push_back(p);
      }
      std::sort(ps.begin(), ps.end());
      std::size_t total = 1;
      for (int p : ps) total *= scm.spaces.source(p).cardinality;
      std::vector<int> table(total);
      for (auto& v : table) v = uniform_int(rng, 0, sc[j] - 1);
      if (scm.parents.size() <= static_cast<std::size_t>(j)) {
        scm.parents.push_back(ps);
        scm.tables.push_back(table);
      } else {
        scm.parents[j] = ps;
        scm.tables[j] = table;
      }
      if (every_parent_matters(scm, j)) break;
    }
    for (int p : scm.parents[j]) scm.graph.set_edge(p, j, true);
  }
  return scm;
}

// States and actions drawn uniformly and independently at every step (every
// source is intervened on).
inline ReplayBuffer sample_scm(const DiscreteScm& scm, int n, std::uint64_t seed) {
  Rng rng(seed);
  ReplayBuffer buf(scm.spaces, static_cast<std::size_t>(n));
  const int M = scm.spaces.num_state_factors();
  const int S = scm.spaces.num_sources();
  std::vector<int> src(S);
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < S; ++i) src[i] = uniform_int(rng, 0, scm.spaces.source(i).cardinality - 1);
    std::vector<double> s(src.begin(), src.begin() + M), a(src.begin() + M, src.end()), next(M);
    for (int j = 0; j < M; ++j) next[j] = scm.evaluate(j, src, rng);
    buf.push(plain_sample(std::move(s), std::move(a), std::move(next), k));
  }
  return buf;
}

}  // namespace grader::testing

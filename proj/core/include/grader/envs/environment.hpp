#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "grader/graph.hpp"
#include "grader/mdp.hpp"
#include "grader/rng.hpp"

namespace grader {

enum class EnvKind { stack, unlock, crash };
enum class Setting { in_distribution, spuriousness, composition };
enum class Phase { train, test };

std::string to_string(EnvKind e);
std::string to_string(Setting s);
std::string to_string(Phase p);
// Accepts the short forms used on the command line ("stack", "i", "s", "c",
// "train", "test") and the full names. Throws ConfigError otherwise.
EnvKind parse_env(const std::string& s);
Setting parse_setting(const std::string& s);
Phase parse_phase(const std::string& s);

struct EnvConfig {
  EnvKind env = EnvKind::stack;
  Setting setting = Setting::in_distribution;
  Phase phase = Phase::train;
  // 0 selects the environment default (Stack 5, Unlock 15, Crash 30).
  int max_steps = 0;
  std::uint64_t seed = 0;
};

int default_max_steps(EnvKind env);
void to_json(nlohmann::json& j, const EnvConfig& c);
void from_json(const nlohmann::json& j, EnvConfig& c);

struct ResetResult {
  FactoredState state;
  Goal goal;
};

struct StepResult {
  FactoredState next_state;
  double reward = 0.0;
  bool terminal = false;
  // Environment-specific shaping term, kept out of the 0/1 reward.
  double penalty = 0.0;
};

class Environment {
 public:
  explicit Environment(EnvConfig config);
  virtual ~Environment() = default;

  const EnvConfig& config() const { return config_; }
  const MdpSpaces& spaces() const { return spaces_; }
  int max_steps() const { return max_steps_; }
  int steps_taken() const { return t_; }
  const FactoredState& state() const { return state_; }
  const Goal& goal() const { return goal_; }

  // Draws the initial state and a goal from the setting's train or test
  // distribution.
  ResetResult reset(std::uint64_t seed);
  // Throws DomainError for actions outside the action spaces.
  StepResult step(const FactoredAction& action);

  // Initial state and goal drawn jointly (goals may depend on the layout).
  virtual ResetResult sample_start(Rng& rng) const = 0;
  // Goal drawn from the configured distribution without touching the episode.
  Goal sample_goal(Rng& rng) const { return sample_start(rng).goal; }
  // Per-step cost the planner may subtract from its rollout value.
  virtual double action_cost(std::span<const double> /*action*/) const { return 0.0; }
  // Deterministic dynamics, usable as a perfect model.
  virtual FactoredState transition(const FactoredState& s, const FactoredAction& a) const = 0;

 protected:
  virtual double penalty(const FactoredState& /*s*/, const FactoredAction& /*a*/) const { return 0.0; }

  EnvConfig config_;
  MdpSpaces spaces_;
  int max_steps_ = 0;

 private:
  FactoredState state_;
  Goal goal_;
  int t_ = 0;
  bool done_ = true;
};

std::unique_ptr<Environment> make_environment(const EnvConfig& config);

// Directory holding the reference graph files. GRADER_REFERENCE_GRAPH_DIR
// overrides the build-time default.
std::string reference_graph_dir();
// Loads the shipped reference graph; throws ConfigError when missing.
TransitionCausalGraph reference_graph(EnvKind env);

// Self-describing factor-space header (names, kinds, bounds, encoded dims).
nlohmann::json factor_space_header(const Environment& env);

FactoredAction random_action(const FactorLayout& layout, Rng& rng);

}  // namespace grader

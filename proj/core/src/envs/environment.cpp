#include "grader/envs/environment.hpp"

#include <cstdlib>
#include <filesystem>

#include "grader/envs/crash.hpp"
#include "grader/envs/stack.hpp"
#include "grader/envs/unlock.hpp"
#include "grader/error.hpp"

namespace grader {

std::string to_string(EnvKind e) {
  switch (e) {
    case EnvKind::stack: return "stack";
    case EnvKind::unlock: return "unlock";
    case EnvKind::crash: return "crash";
  }
  return "?";
}

std::string to_string(Setting s) {
  switch (s) {
    case Setting::in_distribution: return "i";
    case Setting::spuriousness: return "s";
    case Setting::composition: return "c";
  }
  return "?";
}

std::string to_string(Phase p) { return p == Phase::train ? "train" : "test"; }

EnvKind parse_env(const std::string& s) {
  if (s == "stack") return EnvKind::stack;
  if (s == "unlock") return EnvKind::unlock;
  if (s == "crash") return EnvKind::crash;
  throw ConfigError("unknown environment '" + s + "'");
}

Setting parse_setting(const std::string& s) {
  if (s == "i" || s == "in_distribution") return Setting::in_distribution;
  if (s == "s" || s == "spuriousness") return Setting::spuriousness;
  if (s == "c" || s == "composition") return Setting::composition;
  throw ConfigError("unknown setting '" + s + "'");
}

Phase parse_phase(const std::string& s) {
  if (s == "train") return Phase::train;
  if (s == "test") return Phase::test;
  throw ConfigError("unknown phase '" + s + "'");
}

int default_max_steps(EnvKind env) {
  switch (env) {
    case EnvKind::stack: return 5;
    case EnvKind::unlock: return 15;
    case EnvKind::crash: return 30;
  }
  return 1;
}

void to_json(nlohmann::json& j, const EnvConfig& c) {
  j = nlohmann::json{{"env", to_string(c.env)},
                     {"setting", to_string(c.setting)},
                     {"phase", to_string(c.phase)},
                     {"max_steps", c.max_steps},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, EnvConfig& c) {
  c = EnvConfig{};
  if (j.contains("env")) c.env = parse_env(j.at("env").get<std::string>());
  if (j.contains("setting")) c.setting = parse_setting(j.at("setting").get<std::string>());
  if (j.contains("phase")) c.phase = parse_phase(j.at("phase").get<std::string>());
  c.max_steps = j.value("max_steps", 0);
  c.seed = j.value("seed", std::uint64_t{0});
  if (c.max_steps < 0) throw ConfigError("env: max_steps must be nonnegative");
}

Environment::Environment(EnvConfig config) : config_(config) {
  max_steps_ = config_.max_steps > 0 ? config_.max_steps : default_max_steps(config_.env);
}

ResetResult Environment::reset(std::uint64_t seed) {
  Rng rng(seed);
  ResetResult start = sample_start(rng);
  state_ = start.state;
  goal_ = start.goal;
  t_ = 0;
  done_ = false;
  return start;
}

StepResult Environment::step(const FactoredAction& action) {
  if (done_) throw Error("step: episode is over; call reset first");
  if (static_cast<int>(action.width()) != spaces_.action.width()) {
    throw DomainError("step: action has " + std::to_string(action.width()) + " values, expected " +
                      std::to_string(spaces_.action.width()));
  }
  spaces_.action.validate(action.values);
  StepResult r;
  r.penalty = penalty(state_, action);
  r.next_state = transition(state_, action);
  r.reward = reward(spaces_.state, r.next_state, goal_);
  ++t_;
  r.terminal = r.reward > 0.0 || t_ >= max_steps_;
  state_ = r.next_state;
  done_ = r.terminal;
  return r;
}

std::unique_ptr<Environment> make_environment(const EnvConfig& config) {
  switch (config.env) {
    case EnvKind::stack: return std::make_unique<StackEnv>(config);
    case EnvKind::unlock: return std::make_unique<UnlockEnv>(config);
    case EnvKind::crash: return std::make_unique<CrashEnv>(config);
  }
  throw ConfigError("make_environment: unknown environment");
}

std::string reference_graph_dir() {
  if (const char* env = std::getenv("GRADER_REFERENCE_GRAPH_DIR"); env && *env) return env;
  if (std::filesystem::exists(GRADER_FIXTURE_DIR)) return GRADER_FIXTURE_DIR;
  return GRADER_FIXTURE_DIR_INSTALLED;
}

TransitionCausalGraph reference_graph(EnvKind env) {
  const std::filesystem::path path = std::filesystem::path(reference_graph_dir()) / (to_string(env) + ".json");
  if (!std::filesystem::exists(path)) throw ConfigError("reference graph file not found: " + path.string());
  try {
    return load_graph(path.string());
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("cannot load reference graph " + path.string() + ": " + e.what());
  }
}

nlohmann::json factor_space_header(const Environment& env) {
  return {{"env", to_string(env.config().env)},
          {"max_steps", env.max_steps()},
          {"state_dim", env.spaces().state.encoded_dim()},
          {"action_dim", env.spaces().action.encoded_dim()},
          {"spaces", env.spaces()}};
}

FactoredAction random_action(const FactorLayout& layout, Rng& rng) {
  std::vector<double> v(layout.width());
  for (int i = 0; i < layout.size(); ++i) {
    const FactorSpace& s = layout[i];
    const int off = layout.offset(i);
    for (int k = 0; k < s.width(); ++k) {
      v[off + k] = s.is_discrete() ? uniform_int(rng, 0, s.cardinality - 1) : uniform_real(rng, s.lo[k], s.hi[k]);
    }
  }
  return FactoredAction(std::move(v));
}

}  // namespace grader

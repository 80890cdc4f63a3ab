#include "grader/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <set>

#include "grader/error.hpp"

namespace grader {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::grader: return "grader";
    case Variant::full: return "full";
    case Variant::score: return "score";
    case Variant::offline: return "offline";
    case Variant::fixed: return "fixed";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "grader") return Variant::grader;
  if (s == "full") return Variant::full;
  if (s == "score") return Variant::score;
  if (s == "offline") return Variant::offline;
  if (s == "fixed") return Variant::fixed;
  throw ConfigError("unknown variant '" + s + "'");
}

void TrainerConfig::validate() const {
  if (iterations < 0) throw ConfigError("trainer: iterations must be nonnegative");
  if (buffer_capacity < 1) throw ConfigError("trainer: buffer_capacity must be positive");
  if (epochs_per_iteration < 0) throw ConfigError("trainer: epochs_per_iteration must be nonnegative");
  if (batch_size < 1) throw ConfigError("trainer: batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("trainer: learning_rate must be positive");
  if (episodes_per_iteration < 1) throw ConfigError("trainer: episodes_per_iteration must be positive");
  if (discovery_every < 1 || score_every < 1) throw ConfigError("trainer: discovery cadence must be positive");
  if (eval_every < 1 || eval_episodes < 1) throw ConfigError("trainer: evaluation cadence must be positive");
  if (offline_episodes < 0) throw ConfigError("trainer: offline_episodes must be nonnegative");
  if (!(kl_epsilon > 0.0 && kl_epsilon <= 0.5)) throw ConfigError("trainer: kl_epsilon must be in (0, 0.5]");
  if (tv_goal_samples < 1 || tv_bins < 1) throw ConfigError("trainer: tv settings must be positive");
  if (checkpoint_every < 0) throw ConfigError("trainer: checkpoint_every must be nonnegative");
  if (variant == Variant::fixed && !fixed_graph) throw ConfigError("trainer: fixed variant needs fixed_graph");
  planner.validate();
  discovery.validate();
}

TrainerConfig default_trainer_config(EnvKind env, Variant variant) {
  TrainerConfig c;
  c.env_config.env = env;
  c.planner = default_planner_config(env);
  c.variant = variant;
  switch (env) {
    case EnvKind::stack:
      c.buffer_capacity = 4000;
      c.epochs_per_iteration = 20;
      c.learning_rate = 1e-3;
      c.dynamics.hidden_size = 32;
      c.iterations = 300;
      break;
    case EnvKind::unlock:
      c.buffer_capacity = 10000;
      c.epochs_per_iteration = 5;
      c.learning_rate = 1e-3;
      c.dynamics.hidden_size = 64;
      c.iterations = 300;
      break;
    case EnvKind::crash:
      c.buffer_capacity = 10000;
      c.epochs_per_iteration = 10;
      c.learning_rate = 1e-4;
      c.dynamics.hidden_size = 128;
      c.iterations = 300;
      c.discovery_every = 5;
      break;
  }
  return c;
}

void to_json(nlohmann::json& j, const TrainerConfig& c) {
  j = nlohmann::json{{"env_config", c.env_config},
                     {"planner", c.planner},
                     {"discovery", c.discovery},
                     {"score",
                      {{"sparsity_lambda", c.score.sparsity_lambda},
                       {"steps", c.score.steps},
                       {"batch_size", c.score.batch_size},
                       {"learning_rate", c.score.learning_rate},
                       {"gate_learning_rate", c.score.gate_learning_rate},
                       {"init_logit", c.score.init_logit},
                       {"cutoff", c.score.cutoff}}},
                     {"dynamics", c.dynamics},
                     {"buffer_capacity", c.buffer_capacity},
                     {"epochs_per_iteration", c.epochs_per_iteration},
                     {"batch_size", c.batch_size},
                     {"learning_rate", c.learning_rate},
                     {"iterations", c.iterations},
                     {"variant", to_string(c.variant)},
                     {"episodes_per_iteration", c.episodes_per_iteration},
                     {"discovery_every", c.discovery_every},
                     {"score_every", c.score_every},
                     {"offline_episodes", c.offline_episodes},
                     {"eval_every", c.eval_every},
                     {"eval_episodes", c.eval_episodes},
                     {"early_stop", c.early_stop},
                     {"kl_epsilon", c.kl_epsilon},
                     {"tv_goal_samples", c.tv_goal_samples},
                     {"tv_bins", c.tv_bins},
                     {"track_elbo_gap", c.track_elbo_gap},
                     {"checkpoint_every", c.checkpoint_every},
                     {"checkpoint_dir", c.checkpoint_dir},
                     {"seed", c.seed}};
  j["fixed_graph"] = c.fixed_graph ? nlohmann::json(*c.fixed_graph) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, TrainerConfig& c) {
  EnvConfig env = c.env_config;
  if (j.contains("env_config")) {
    env = j.at("env_config").get<EnvConfig>();
  } else if (j.contains("env")) {
    env.env = parse_env(j.at("env").get<std::string>());
  }
  const Variant variant = j.contains("variant") ? parse_variant(j.at("variant").get<std::string>()) : c.variant;
  c = default_trainer_config(env.env, variant);
  c.env_config = env;
  if (j.contains("planner")) {
    PlannerConfig p = c.planner;
    const nlohmann::json& pj = j.at("planner");
    p.horizon = pj.value("horizon", p.horizon);
    p.population = pj.value("population", p.population);
    p.gamma = pj.value("gamma", p.gamma);
    p.epsilon_greedy = pj.value("epsilon_greedy", p.epsilon_greedy);
    p.use_action_cost = pj.value("use_action_cost", p.use_action_cost);
    c.planner = p;
  }
  if (j.contains("discovery")) c.discovery = j.at("discovery").get<DiscoveryConfig>();
  if (j.contains("dynamics")) {
    nlohmann::json dj = nlohmann::json(c.dynamics);
    dj.update(j.at("dynamics"));
    c.dynamics = dj.get<DynamicsConfig>();
  }
  if (j.contains("score")) {
    const nlohmann::json& s = j.at("score");
    c.score.sparsity_lambda = s.value("sparsity_lambda", c.score.sparsity_lambda);
    c.score.steps = s.value("steps", c.score.steps);
    c.score.batch_size = s.value("batch_size", c.score.batch_size);
    c.score.learning_rate = s.value("learning_rate", c.score.learning_rate);
    c.score.gate_learning_rate = s.value("gate_learning_rate", c.score.gate_learning_rate);
    c.score.init_logit = s.value("init_logit", c.score.init_logit);
    c.score.cutoff = s.value("cutoff", c.score.cutoff);
  }
  c.buffer_capacity = j.value("buffer_capacity", c.buffer_capacity);
  c.epochs_per_iteration = j.value("epochs_per_iteration", c.epochs_per_iteration);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.iterations = j.value("iterations", c.iterations);
  c.episodes_per_iteration = j.value("episodes_per_iteration", c.episodes_per_iteration);
  c.discovery_every = j.value("discovery_every", c.discovery_every);
  c.score_every = j.value("score_every", c.score_every);
  c.offline_episodes = j.value("offline_episodes", c.offline_episodes);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
  c.early_stop = j.value("early_stop", c.early_stop);
  c.kl_epsilon = j.value("kl_epsilon", c.kl_epsilon);
  c.tv_goal_samples = j.value("tv_goal_samples", c.tv_goal_samples);
  c.tv_bins = j.value("tv_bins", c.tv_bins);
  c.track_elbo_gap = j.value("track_elbo_gap", c.track_elbo_gap);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.checkpoint_dir = j.value("checkpoint_dir", c.checkpoint_dir);
  c.seed = j.value("seed", c.seed);
  if (j.contains("fixed_graph") && !j.at("fixed_graph").is_null()) {
    c.fixed_graph = j.at("fixed_graph").get<TransitionCausalGraph>();
  }
  c.validate();
}

namespace {

// Rethrows the in-flight library error with `context` prepended, keeping its
// class.
[[noreturn]] void rethrow_with_context(const std::string& context) {
  try {
    throw;
  } catch (const NumericError& e) {
    throw NumericError(context + e.what(), e.factor_index());
  } catch (const ParseError&) {
    throw;
  } catch (const InvalidGoalError& e) {
    throw InvalidGoalError(context + e.what());
  } catch (const EmptyBufferError& e) {
    throw EmptyBufferError(context + e.what());
  } catch (const DimensionError& e) {
    throw DimensionError(context + e.what());
  } catch (const RangeError& e) {
    throw RangeError(context + e.what());
  } catch (const DomainError& e) {
    throw DomainError(context + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(context + e.what());
  } catch (const ModelInputError& e) {
    throw ModelInputError(context + e.what());
  } catch (const OptimizationError& e) {
    throw OptimizationError(context + e.what());
  } catch (const Error& e) {
    throw Error(context + e.what());
  }
}

// Every tenth buffer sample (the validation split of train_epochs), the most
// recent `cap` of them; all samples when the buffer is too small.
std::vector<std::size_t> monitor_rows(const ReplayBuffer& buffer, std::size_t cap) {
  std::vector<std::size_t> rows;
  for (std::size_t k = 9; k < buffer.size(); k += 10) rows.push_back(k);
  if (rows.empty()) {
    for (std::size_t k = 0; k < buffer.size(); ++k) rows.push_back(k);
  }
  if (rows.size() > cap) rows.erase(rows.begin(), rows.end() - static_cast<std::ptrdiff_t>(cap));
  return rows;
}

std::string checkpoint_path(const std::string& dir, const std::string& tag) {
  return (std::filesystem::path(dir) / ("checkpoint_" + tag + ".json")).string();
}

}  // namespace

double evaluate_with(RolloutModel& model, const EnvConfig& env_config, const PlannerConfig& planner,
                     int n_episodes, std::uint64_t seed, bool use_action_cost) {
  if (n_episodes < 1) throw ConfigError("evaluate: n_episodes must be positive");
  EnvConfig cfg = env_config;
  auto env = make_environment(cfg);
  PlannerConfig greedy = planner;
  greedy.epsilon_greedy = 0.0;
  greedy.use_action_cost = use_action_cost && planner.use_action_cost;
  const ActionCost cost = environment_cost(*env, greedy);
  int successes = 0;
  for (int e = 0; e < n_episodes; ++e) {
    const std::uint64_t ep_seed = derive_seed(seed, static_cast<std::uint64_t>(e));
    ResetResult start = env->reset(ep_seed);
    FactoredState state = start.state;
    double last_reward = 0.0;
    for (int t = 0;; ++t) {
      const PlanResult p = plan(model, state, start.goal, greedy, derive_seed(ep_seed, 0x10000ULL + t), cost);
      const StepResult r = env->step(p.action);
      last_reward = r.reward;
      state = r.next_state;
      if (r.terminal) break;
    }
    if (last_reward > 0.0) ++successes;
  }
  return static_cast<double>(successes) / n_episodes;
}

double evaluate(const FactoredDynamicsModel& model, const EnvConfig& env_config, const PlannerConfig& planner,
                int n_episodes, std::uint64_t seed, bool use_action_cost) {
  if (!(model.spaces() == make_environment(env_config)->spaces())) {
    throw ConfigError("evaluate: model factor spaces do not match the environment");
  }
  LearnedRolloutModel rollout(model);
  return evaluate_with(rollout, env_config, planner, n_episodes, seed, use_action_cost);
}

double tv_distance_estimate(const ReplayBuffer& buffer, const GoalSampler& goals, int n_goal_samples,
                            std::uint64_t seed, int n_bins) {
  if (buffer.empty()) throw EmptyBufferError("tv_distance_estimate: empty buffer");
  if (n_goal_samples < 1 || n_bins < 1) throw ConfigError("tv_distance_estimate: sample and bin counts must be positive");
  const FactorLayout& layout = buffer.spaces().state;

  // Cell index of one component value.
  auto cell = [&](int factor, int component, double v) -> long {
    const FactorSpace& s = layout[factor];
    if (s.is_discrete()) return static_cast<long>(std::lround(v));
    const double lo = s.lo[component];
    const double hi = s.hi[component];
    long b = static_cast<long>(std::floor((v - lo) / (hi - lo) * n_bins));
    return std::clamp<long>(b, 0, n_bins - 1);
  };
  auto append_cells = [&](std::vector<long>& key, int factor, std::span<const double> values) {
    for (int c = 0; c < layout[factor].width(); ++c) key.push_back(cell(factor, c, values[c]));
  };

  Rng rng(seed);
  std::vector<Goal> sampled;
  sampled.reserve(n_goal_samples);
  std::set<std::vector<int>> factor_sets;
  for (int n = 0; n < n_goal_samples; ++n) {
    Goal g = goals(rng);
    g.validate(layout);
    std::sort(g.terms.begin(), g.terms.end(), [](const GoalTerm& a, const GoalTerm& b) { return a.factor < b.factor; });
    std::vector<int> fs;
    for (const auto& t : g.terms) fs.push_back(t.factor);
    factor_sets.insert(fs);
    sampled.push_back(std::move(g));
  }

  using Histogram = std::map<std::vector<long>, double>;
  auto tv = [](const Histogram& p, const Histogram& q) {
    double d = 0.0;
    for (const auto& [k, v] : p) {
      auto it = q.find(k);
      d += std::abs(v - (it == q.end() ? 0.0 : it->second));
    }
    for (const auto& [k, v] : q)
      if (!p.count(k)) d += v;
    return std::min(1.0, 0.5 * d);
  };
  auto histogram_for = [&](const std::vector<int>& factors, Histogram& goal_h, Histogram& state_h) {
    double n_goal = 0.0;
    for (const auto& g : sampled) {
      std::vector<long> key;
      bool has_all = true;
      for (int f : factors) {
        auto it = std::find_if(g.terms.begin(), g.terms.end(), [f](const GoalTerm& t) { return t.factor == f; });
        if (it == g.terms.end()) {
          has_all = false;
          break;
        }
        append_cells(key, f, it->value);
      }
      if (!has_all) continue;
      goal_h[key] += 1.0;
      n_goal += 1.0;
    }
    for (auto& [k, v] : goal_h) v /= n_goal;
    const double w = 1.0 / static_cast<double>(buffer.size());
    for (const auto& s : buffer) {
      std::vector<long> key;
      for (int f : factors) append_cells(key, f, layout.view(s.next_state.values, f));
      state_h[key] += w;
    }
  };

  if (factor_sets.size() == 1) {
    Histogram g, s;
    histogram_for(*factor_sets.begin(), g, s);
    return tv(g, s);
  }
  std::set<int> all;
  for (const auto& fs : factor_sets) all.insert(fs.begin(), fs.end());
  double sum = 0.0;
  for (int f : all) {
    Histogram g, s;
    histogram_for({f}, g, s);
    sum += tv(g, s);
  }
  return sum / static_cast<double>(all.size());
}

double elbo_estimate(const FactoredDynamicsModel& model, const EncodedBatch& batch, double kl_epsilon) {
  return model.log_likelihood(batch) - kl_sparsity(model.graph(), kl_epsilon);
}

RunResult run_full(const TrainerConfig& config, const IterationCallback& on_iteration) {
  config.validate();
  const std::uint64_t seed = config.seed;
  EnvConfig train_cfg = config.env_config;
  train_cfg.phase = Phase::train;
  EnvConfig test_cfg = config.env_config;
  test_cfg.phase = Phase::test;
  auto env = make_environment(train_cfg);
  const MdpSpaces& spaces = env->spaces();
  const int M = spaces.num_state_factors();
  const int N = spaces.num_action_factors();
  const TransitionCausalGraph reference = reference_graph(train_cfg.env);

  TransitionCausalGraph graph;
  switch (config.variant) {
    case Variant::grader:
    case Variant::score: graph = empty_graph(M, N); break;
    case Variant::full: graph = full_graph(M, N); break;
    case Variant::offline: {
      const int n = config.offline_episodes > 0 ? config.offline_episodes
                                                : config.iterations * config.episodes_per_iteration;
      if (n < 1) {
        graph = empty_graph(M, N);
        break;
      }
      DiscoveryConfig dc = config.discovery;
      dc.seed = derive_seed(seed, 0x0ffULL, config.discovery.seed);
      graph = discover_offline(train_cfg, n, dc, derive_seed(seed, 0x0feULL), config.buffer_capacity).graph;
      break;
    }
    case Variant::fixed:
      graph = *config.fixed_graph;
      if (graph.num_state() != M || graph.num_action() != N) {
        throw ConfigError("trainer: fixed_graph shape does not match the environment");
      }
      break;
  }
  attach_names(graph, spaces);

  DynamicsConfig dyn = config.dynamics;
  dyn.seed = derive_seed(seed, 0x0dcULL, config.dynamics.seed);
  FactoredDynamicsModel model(spaces, graph, dyn);
  std::optional<FactoredDynamicsModel> shadow;
  if (config.track_elbo_gap) shadow.emplace(spaces, reference, dyn);
  ReplayBuffer buffer(spaces, config.buffer_capacity);
  LearnedRolloutModel rollout(model);
  const ActionCost cost = environment_cost(*env, config.planner);
  PlannerConfig eval_planner = config.planner;
  eval_planner.epsilon_greedy = 0.0;
  auto goal_env = make_environment(train_cfg);
  const GoalSampler goal_sampler = [&goal_env](Rng& r) { return goal_env->sample_goal(r); };

  std::vector<RunRecord> records;
  double last_test = 0.0;
  std::uint64_t episode = 0;
  std::uint64_t step_counter = 0;
  const auto t_start = std::chrono::steady_clock::now();

  for (int it = 0; it < config.iterations; ++it) {
    try {
      RunRecord rec;
      rec.iteration = it;

      for (int e = 0; e < config.episodes_per_iteration; ++e, ++episode) {
        ResetResult start = env->reset(derive_seed(seed, 0x1ULL, episode));
        FactoredState state = start.state;
        double last_reward = 0.0;
        for (;;) {
          const PlanResult p = act(rollout, state, start.goal, config.planner,
                                   derive_seed(seed, 0x2ULL, step_counter++), cost);
          const StepResult r = env->step(p.action);
          buffer.push(TransitionSample{state, p.action, r.next_state, start.goal, r.reward, r.terminal,
                                       static_cast<std::int64_t>(episode)});
          last_reward = r.reward;
          state = r.next_state;
          if (r.terminal) break;
        }
        rec.train_success = last_reward > 0.0;
      }

      std::optional<TransitionCausalGraph> next_graph;
      if (config.variant == Variant::grader && it % config.discovery_every == 0) {
        DiscoveryConfig dc = config.discovery;
        dc.seed = derive_seed(seed, 0x3ULL, static_cast<std::uint64_t>(it));
        next_graph = discover(buffer, dc);
      } else if (config.variant == Variant::score && it % config.score_every == 0) {
        ScoreConfig sc = config.score;
        sc.dynamics = dyn;
        next_graph = discover_score(buffer, sc, derive_seed(seed, 0x4ULL, static_cast<std::uint64_t>(it))).graph;
      }
      if (next_graph && !(*next_graph == model.graph())) {
        attach_names(*next_graph, spaces);
        model.rebuild_for_graph(*next_graph);
      }

      const int batch = std::min<int>(config.batch_size, static_cast<int>(buffer.size()));
      if (config.epochs_per_iteration > 0) {
        const TrainingReport tr = model.train_epochs(buffer, config.epochs_per_iteration, batch,
                                                     config.learning_rate,
                                                     derive_seed(seed, 0x5ULL, static_cast<std::uint64_t>(it)));
        rec.train_loss = tr.loss_curve.empty() ? 0.0 : tr.loss_curve.back();
        if (shadow) {
          shadow->train_epochs(buffer, config.epochs_per_iteration, batch, config.learning_rate,
                               derive_seed(seed, 0x5ULL, static_cast<std::uint64_t>(it)));
        }
      }

      const std::vector<std::size_t> rows = monitor_rows(buffer, 2000);
      const EncodedBatch monitor = encode_samples(spaces, buffer, rows);
      rec.shd_to_reference = shd(model.graph(), reference);
      rec.edges = model.graph().edge_count();
      rec.mean_log_likelihood = model.log_likelihood(monitor);
      rec.kl_sparsity = kl_sparsity(model.graph(), config.kl_epsilon);
      rec.tv_distance = tv_distance_estimate(buffer, goal_sampler, config.tv_goal_samples,
                                             derive_seed(seed, 0x6ULL), config.tv_bins);
      rec.elbo_gap = shadow ? std::abs(elbo_estimate(*shadow, monitor, config.kl_epsilon) -
                                       elbo_estimate(model, monitor, config.kl_epsilon))
                            : std::numeric_limits<double>::quiet_NaN();
      rec.buffer_size = buffer.size();

      if ((it + 1) % config.eval_every == 0 || it + 1 == config.iterations) {
        last_test = evaluate_with(rollout, test_cfg, eval_planner, config.eval_episodes, derive_seed(seed, 0x7ULL));
        rec.evaluated = true;
      }
      rec.test_success = last_test;
      rec.wall_clock_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

      if (!config.checkpoint_dir.empty() && config.checkpoint_every > 0 && (it + 1) % config.checkpoint_every == 0) {
        std::filesystem::create_directories(config.checkpoint_dir);
        model.save(checkpoint_path(config.checkpoint_dir, std::to_string(it + 1)));
      }
      records.push_back(rec);
      if (on_iteration) on_iteration(rec);

      if (config.early_stop && records.size() >= 40) {
        auto window_mean = [&](std::size_t end) {
          double s = 0.0;
          for (std::size_t k = end - 20; k < end; ++k) s += records[k].train_success ? 1.0 : 0.0;
          return s / 20.0;
        };
        if (std::abs(window_mean(records.size()) - window_mean(records.size() - 20)) < 0.01) break;
      }
    } catch (const Error&) {
      if (!config.checkpoint_dir.empty()) {
        try {
          std::filesystem::create_directories(config.checkpoint_dir);
          model.save(checkpoint_path(config.checkpoint_dir, "error"));
        } catch (...) {
        }
      }
      rethrow_with_context("iteration " + std::to_string(it) + ": ");
    }
  }
  TransitionCausalGraph final_graph = model.graph();
  return RunResult{std::move(records), std::move(final_graph), std::move(model), std::move(buffer)};
}

std::vector<RunRecord> run(const TrainerConfig& config) { return run_full(config).records; }

}  // namespace grader

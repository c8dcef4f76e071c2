#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "drldo/classifier.hpp"
#include "drldo/errors.hpp"
#include "drldo/obfuscator.hpp"
#include "drldo/rng.hpp"

namespace drldo {

/// Discrete action layout over a vocabulary of N opcodes: indices [0, N)
/// increment opcode a by c_increment, indices [N, 2N) decrement opcode a-N by
/// c_decrement.
struct ActionSpace {
  int n_opcodes = 0;
  int c_increment = 1;
  int c_decrement = 1;

  int total_actions() const { return 2 * n_opcodes; }
  bool is_increment(int action) const { return action < n_opcodes; }
  int opcode_of(int action) const {
    return is_increment(action) ? action : action - n_opcodes;
  }
  int delta_of(int action) const {
    return is_increment(action) ? c_increment : -c_decrement;
  }

  bool operator==(const ActionSpace& other) const = default;
};

// Discounting is deliberately absent here: gamma belongs to the agent's
// config, the environment only emits instantaneous rewards.
struct RewardConfig {
  double p_target = 0.75;
  double p_threshold = 0.99;
  double r_goal = 0.0;  // <= 0 selects the default r_goal == max_steps
  double penalty_turn = 0.01;

  bool operator==(const RewardConfig& other) const = default;
};

struct StepInfo {
  double p_malicious = 0.0;
  bool action_rejected = false;

  bool operator==(const StepInfo& other) const = default;
};

/// Goal test: the classifier is near-certain the state is malicious.
inline bool goal_reached(double p_malicious, const RewardConfig& cfg) {
  return p_malicious > cfg.p_threshold;
}

/// Step reward: r_goal on goal, otherwise the probability shaping term
/// (p - p_target) minus the per-turn penalty.
inline double instantaneous_reward(double p_malicious,
                                   const RewardConfig& cfg) {
  if (goal_reached(p_malicious, cfg)) return cfg.r_goal;
  return (p_malicious - cfg.p_target) - cfg.penalty_turn;
}

struct StepResult {
  OpcodeFrequencyVector state;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

/// Episodic de-obfuscation environment. Each episode starts from a sampled
/// obfuscated variant; actions nudge single opcode counts under the
/// net-reduction constraint (counts may never exceed the episode's initial
/// obfuscated level nor drop below zero); the reward drives the frozen
/// classifier's P_malicious above the detection threshold.
class EpisodeEnvironment {
 public:
  EpisodeEnvironment(const ObfuscationRepository& repository,
                     const SurrogateClassifier& classifier,
                     RewardConfig reward_config, int max_steps,
                     std::uint64_t seed, int c_increment = 1,
                     int c_decrement = 1)
      : repository_(&repository),
        classifier_(&classifier),
        reward_config_(reward_config),
        max_steps_(max_steps),
        rng_(seed) {
    if (repository_->variants.empty())
      throw ConfigError("environment: repository has no variants");
    if (max_steps_ <= 0)
      throw ConfigError("environment: max_steps must be positive");
    if (c_increment < 1 || c_decrement < 1)
      throw ConfigError("environment: action constants must be >= 1");
    action_space_ = ActionSpace{classifier_->vocabulary().size(), c_increment,
                                c_decrement};
    if (reward_config_.r_goal <= 0.0)
      reward_config_.r_goal = static_cast<double>(max_steps_);
    if (!(reward_config_.p_target > 0.5 &&
          reward_config_.p_target < reward_config_.p_threshold &&
          reward_config_.p_threshold <= 1.0))
      throw ConfigError(
          "environment: require 0.5 < p_target < p_threshold <= 1.0");
    if (reward_config_.penalty_turn < 0.0)
      throw ConfigError("environment: penalty_turn must be >= 0");
    // one success must outweigh any trajectory of stalling rewards
    const double max_stall_total =
        static_cast<double>(max_steps_) * (1.0 - reward_config_.p_target);
    if (!(reward_config_.r_goal > max_stall_total))
      throw ConfigError(
          "environment: r_goal must exceed max_steps * (1 - p_target)");
  }

  const ActionSpace& action_space() const { return action_space_; }
  const RewardConfig& reward_config() const { return reward_config_; }
  int max_steps() const { return max_steps_; }
  int steps_used() const { return step_counter_; }
  bool done() const { return done_; }
  int action_count() const { return action_space_.total_actions(); }
  int observation_size() const { return action_space_.n_opcodes; }

  const OpcodeFrequencyVector& current_state() const { return current_state_; }
  const OpcodeFrequencyVector& initial_obfuscated_state() const {
    return initial_state_;
  }
  std::size_t current_variant_index() const { return variant_index_; }
  const ObfuscatedVariant& current_variant() const {
    return repository_->variants[variant_index_];
  }

  /// Agent-visible observation: counts scaled into [0, 1].
  std::vector<double> observation() const {
    std::vector<double> obs(current_state_.counts.size());
    for (std::size_t i = 0; i < obs.size(); ++i)
      obs[i] = static_cast<double>(current_state_.counts[i]) /
               static_cast<double>(kMaxOpcodeCount);
    return obs;
  }

  /// Starts a new episode from a uniformly sampled repository variant.
  StepResult reset() {
    return reset_to(rng_.uniform_index(repository_->variants.size()));
  }

  /// Starts a new episode from a specific variant (evaluation and tests).
  StepResult reset_to(std::size_t variant_index) {
    if (variant_index >= repository_->variants.size())
      throw ParameterError("reset_to: variant index out of range");
    variant_index_ = variant_index;
    initial_state_ = repository_->variants[variant_index_].obfuscated_vector;
    current_state_ = initial_state_;
    step_counter_ = 0;
    done_ = false;
    last_p_ = classifier_->predict_malicious(current_state_);
    return StepResult{current_state_, 0.0, false, {last_p_, false}};
  }

  /// True if applying `action` would violate the per-opcode bounds
  /// [0, initial level] and therefore leave the state unchanged.
  bool would_reject(int action) const {
    validate_action(action);
    const auto idx = static_cast<std::size_t>(action_space_.opcode_of(action));
    const int next =
        current_state_.counts[idx] + action_space_.delta_of(action);
    return next < 0 || next > initial_state_.counts[idx];
  }

  StepResult step(int action) {
    if (done_) throw UsageError("step called on a finished episode");
    if (initial_state_.counts.empty())
      throw UsageError("step called before reset");
    validate_action(action);

    const auto idx = static_cast<std::size_t>(action_space_.opcode_of(action));
    const int next =
        current_state_.counts[idx] + action_space_.delta_of(action);
    const bool rejected = next < 0 || next > initial_state_.counts[idx];
    if (!rejected) current_state_.counts[idx] = next;

    ++step_counter_;
    const double p = classifier_->predict_malicious(current_state_);
    last_p_ = p;

    StepResult result;
    result.state = current_state_;
    result.info = {p, rejected};
    result.reward = instantaneous_reward(p, reward_config_);
    result.done = goal_reached(p, reward_config_) || step_counter_ == max_steps_;
    done_ = result.done;
    return result;
  }

  double last_p_malicious() const { return last_p_; }

 private:
  void validate_action(int action) const {
    if (action < 0 || action >= action_space_.total_actions())
      throw ParameterError("invalid action index " + std::to_string(action));
  }

  const ObfuscationRepository* repository_;
  const SurrogateClassifier* classifier_;
  RewardConfig reward_config_;
  ActionSpace action_space_;
  int max_steps_;
  Rng rng_;
  std::size_t variant_index_ = 0;
  OpcodeFrequencyVector initial_state_;
  OpcodeFrequencyVector current_state_;
  int step_counter_ = 0;
  bool done_ = false;
  double last_p_ = 0.0;
};

/// One agent decision: the sampled action with its log-probability and the
/// critic's value estimate for the observed state.
struct AgentChoice {
  int action = 0;
  double log_prob = 0.0;
  double value = 0.0;
};

/// Per-episode record consumed by the training loop and the metrics log.
struct EpisodeTrace {
  std::vector<std::vector<double>> observations;
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<double> log_probs;
  std::vector<double> values;
  std::vector<double> p_malicious;
  double final_p_malicious = 0.0;
  bool reached_goal = false;

  std::size_t size() const { return actions.size(); }
};

/// Runs one full episode on a freshly reset environment, querying `policy`
/// (observation -> AgentChoice) each step.
template <typename Env, typename Policy>
EpisodeTrace episode_rollout(Env& env, Policy&& policy) {
  if (env.done() || env.steps_used() != 0)
    throw UsageError("episode_rollout requires a freshly reset environment");
  EpisodeTrace trace;
  while (true) {
    std::vector<double> obs = env.observation();
    const AgentChoice choice = policy(obs);
    const StepResult result = env.step(choice.action);
    trace.observations.push_back(std::move(obs));
    trace.actions.push_back(choice.action);
    trace.rewards.push_back(result.reward);
    trace.log_probs.push_back(choice.log_prob);
    trace.values.push_back(choice.value);
    trace.p_malicious.push_back(result.info.p_malicious);
    if (result.done) {
      trace.final_p_malicious = result.info.p_malicious;
      trace.reached_goal =
          result.info.p_malicious > env.reward_config().p_threshold;
      break;
    }
  }
  return trace;
}

}  // namespace drldo

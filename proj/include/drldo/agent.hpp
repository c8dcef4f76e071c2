#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "drldo/environment.hpp"
#include "drldo/errors.hpp"
#include "drldo/nets.hpp"
#include "drldo/rng.hpp"
#include "drldo/text_io.hpp"

namespace drldo {

enum class PpoVariant { kClipped, kAdaptiveKl };

struct AdaptiveKlParams {
  double beta_init = 1.0;
  double d_targ = 0.01;

  bool operator==(const AdaptiveKlParams& other) const = default;
};

struct PpoConfig {
  double epsilon = 0.2;          // clip parameter
  double gamma = 0.99;           // discount
  double gae_lambda = 0.95;
  double learning_rate = 3e-4;
  int epochs_per_update = 4;
  int minibatch_size = 64;
  int rollout_episodes = 8;      // episodes collected per update
  double value_loss_coef = 0.5;
  double entropy_coef = 0.0;
  int hidden_units = 64;         // two hidden layers of this width
  PpoVariant variant = PpoVariant::kClipped;
  AdaptiveKlParams adaptive;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(epsilon > 0.0 && epsilon < 1.0))
      throw ConfigError("ppo: epsilon must be in (0, 1)");
    if (!(gamma > 0.0 && gamma <= 1.0))
      throw ConfigError("ppo: gamma must be in (0, 1]");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0))
      throw ConfigError("ppo: gae_lambda must be in [0, 1]");
    if (learning_rate <= 0.0 || epochs_per_update <= 0 ||
        minibatch_size <= 0 || rollout_episodes <= 0 || hidden_units <= 0)
      throw ConfigError("ppo: rates, sizes and counts must be positive");
    if (value_loss_coef < 0.0 || entropy_coef < 0.0)
      throw ConfigError("ppo: loss coefficients must be >= 0");
    if (variant == PpoVariant::kAdaptiveKl &&
        (adaptive.beta_init <= 0.0 || adaptive.d_targ <= 0.0))
      throw ConfigError("ppo: adaptive variant needs positive beta and d_targ");
  }

  bool operator==(const PpoConfig& other) const = default;
};

/// Separate actor and critic networks: two tanh hidden layers each, softmax
/// over the 2N discrete actions on the actor side and a scalar value head on
/// the critic side.
struct PolicyValueNetworks {
  Mlp actor;
  Mlp critic;

  static PolicyValueNetworks initialize(int observation_size, int n_actions,
                                        int hidden_units, std::uint64_t seed) {
    MlpSpec actor_spec{observation_size, {hidden_units, hidden_units},
                       n_actions};
    MlpSpec critic_spec{observation_size, {hidden_units, hidden_units}, 1};
    return PolicyValueNetworks{
        Mlp::initialize(actor_spec, derive_seed(seed, "actor-init"), 5.0 / 3.0,
                        0.01),
        Mlp::initialize(critic_spec, derive_seed(seed, "critic-init"),
                        5.0 / 3.0, 0.01)};
  }

  int observation_size() const { return actor.spec().input; }
  int action_count() const { return actor.spec().output; }

  bool operator==(const PolicyValueNetworks& other) const = default;
};

/// Actor/critic forward pass: action probabilities and state value.
inline std::pair<std::vector<double>, double> policy_forward(
    const PolicyValueNetworks& nets, std::span<const double> observation) {
  if (static_cast<int>(observation.size()) != nets.observation_size())
    throw ParameterError("policy_forward: observation size mismatch");
  for (double v : observation)
    if (!(v >= 0.0 && v <= 1.0))
      throw ParameterError("policy_forward: observation entries must be in "
                           "[0, 1]");
  std::vector<double> logits(static_cast<std::size_t>(nets.action_count()));
  nets.actor.forward(observation, logits);
  std::vector<double> probs(logits.size());
  softmax(logits, probs);
  double value = 0.0;
  nets.critic.forward(observation, {&value, 1});
  return {std::move(probs), value};
}

/// Samples an action index from a probability vector via inverse CDF.
inline std::pair<int, double> sample_action(std::span<const double> probs,
                                            Rng& rng) {
  double total = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0)
      throw NumericError("sample_action: degenerate distribution");
    total += p;
  }
  if (!(std::abs(total - 1.0) < 1e-6))
    throw NumericError("sample_action: probabilities do not sum to 1");
  const double u = rng.uniform() * total;
  double cumulative = 0.0;
  int index = static_cast<int>(probs.size()) - 1;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cumulative += probs[i];
    if (u < cumulative) {
      index = static_cast<int>(i);
      break;
    }
  }
  return {index, std::log(probs[static_cast<std::size_t>(index)])};
}

/// Rollout storage for one update batch: flat arrays with episode boundary
/// markers.
struct Trajectory {
  std::vector<std::vector<double>> observations;
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<double> log_probs;  // under the collection-time policy
  std::vector<double> values;
  std::vector<double> p_malicious;
  std::vector<std::size_t> episode_starts;
  std::vector<double> advantages;
  std::vector<double> returns;
  // full collection-time distributions, kept only for the adaptive-KL variant
  std::vector<std::vector<double>> old_probs;

  std::size_t size() const { return actions.size(); }

  void append_episode(const EpisodeTrace& trace) {
    episode_starts.push_back(size());
    observations.insert(observations.end(), trace.observations.begin(),
                        trace.observations.end());
    actions.insert(actions.end(), trace.actions.begin(), trace.actions.end());
    rewards.insert(rewards.end(), trace.rewards.begin(), trace.rewards.end());
    log_probs.insert(log_probs.end(), trace.log_probs.begin(),
                     trace.log_probs.end());
    values.insert(values.end(), trace.values.begin(), trace.values.end());
    p_malicious.insert(p_malicious.end(), trace.p_malicious.begin(),
                       trace.p_malicious.end());
  }
};

/// Generalized advantage estimation per episode (terminal episodes, no
/// bootstrap past the final step), followed by returns = advantages + values.
/// Advantages are left un-normalized here; ppo_update normalizes per batch.
inline void compute_advantages(Trajectory& traj, double gamma, double lambda) {
  if (traj.size() == 0)
    throw ParameterError("compute_advantages: empty trajectory");
  traj.advantages.assign(traj.size(), 0.0);
  traj.returns.assign(traj.size(), 0.0);
  for (std::size_t e = 0; e < traj.episode_starts.size(); ++e) {
    const std::size_t start = traj.episode_starts[e];
    const std::size_t end = e + 1 < traj.episode_starts.size()
                                ? traj.episode_starts[e + 1]
                                : traj.size();
    double gae = 0.0;
    for (std::size_t t = end; t-- > start;) {
      const double next_value = t + 1 < end ? traj.values[t + 1] : 0.0;
      const double delta =
          traj.rewards[t] + gamma * next_value - traj.values[t];
      gae = delta + gamma * lambda * (t + 1 < end ? gae : 0.0);
      traj.advantages[t] = gae;
      traj.returns[t] = gae + traj.values[t];
    }
  }
  for (double a : traj.advantages)
    if (!std::isfinite(a))
      throw NumericError("compute_advantages: non-finite advantage");
}

/// One term of the clipped surrogate: min(r*A, clip(r, 1-eps, 1+eps)*A).
inline double clipped_objective_term(double ratio, double advantage,
                                     double epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

/// Adaptive penalty schedule: beta halves when the measured divergence d is
/// well under target and doubles when well over.
inline double adaptive_kl_beta_update(double beta, double d, double d_targ) {
  if (d <= d_targ / 1.5) return beta / 2.0;
  if (d >= d_targ * 1.5) return beta * 2.0;
  return beta;
}

struct PpoUpdateReport {
  // measured on the full batch before any gradient step (theta == theta_old)
  double initial_surrogate = 0.0;
  double initial_clip_fraction = 0.0;
  // measured on the full batch after the update
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double beta = 0.0;  // adaptive variant only
};

namespace detail {

struct LossAccumulator {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double total() const { return policy_loss + value_loss - entropy_coef * entropy; }
  double entropy_coef = 0.0;
};

/// Computes the PPO loss and parameter gradients for the given sample subset.
/// Shared by ppo_update and the finite-difference tests.
inline LossAccumulator ppo_loss(const PolicyValueNetworks& nets,
                                const Trajectory& traj,
                                std::span<const std::size_t> indices,
                                std::span<const double> advantages,
                                const PpoConfig& cfg, double beta,
                                std::span<double> actor_grad,
                                std::span<double> critic_grad) {
  if (indices.empty()) throw ParameterError("ppo_loss: empty minibatch");
  const auto n_actions = static_cast<std::size_t>(nets.action_count());
  const double inv_batch = 1.0 / static_cast<double>(indices.size());
  LossAccumulator acc;
  acc.entropy_coef = cfg.entropy_coef;

  std::vector<double> logits(n_actions);
  std::vector<double> probs(n_actions);
  std::vector<double> dlogits(n_actions);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t s = indices[k];
    const auto& obs = traj.observations[s];
    const auto action = static_cast<std::size_t>(traj.actions[s]);
    const double advantage = advantages[k];

    MlpCache actor_cache;
    nets.actor.forward(obs, logits, &actor_cache);
    softmax(logits, probs);
    const double log_prob_new = std::log(probs[action]);
    const double ratio = std::exp(log_prob_new - traj.log_probs[s]);
    if (!std::isfinite(ratio))
      throw NumericError("ppo_update: non-finite importance ratio");

    std::fill(dlogits.begin(), dlogits.end(), 0.0);
    double surrogate = 0.0;
    double dsurrogate_dlp = 0.0;  // d(surrogate)/d(log_prob_new)
    if (cfg.variant == PpoVariant::kClipped) {
      const double clipped =
          std::clamp(ratio, 1.0 - cfg.epsilon, 1.0 + cfg.epsilon);
      const double unclipped_term = ratio * advantage;
      const double clipped_term = clipped * advantage;
      surrogate = std::min(unclipped_term, clipped_term);
      // when the clipped branch is active its derivative in r is zero
      dsurrogate_dlp = unclipped_term <= clipped_term ? ratio * advantage : 0.0;
    } else {
      double kl_old_new = 0.0;  // KL(pi_old || pi_new)
      const auto& old = traj.old_probs[s];
      for (std::size_t j = 0; j < n_actions; ++j)
        if (old[j] > 0.0)
          kl_old_new += old[j] * (std::log(old[j]) - std::log(probs[j]));
      surrogate = ratio * advantage - beta * kl_old_new;
      dsurrogate_dlp = ratio * advantage;
      // loss includes +beta*KL/B; d(KL(old||new))/dlogit_j = pi_j - old_j
      for (std::size_t j = 0; j < n_actions; ++j)
        dlogits[j] += inv_batch * beta * (probs[j] - old[j]);
    }

    acc.policy_loss -= surrogate * inv_batch;
    // d(log pi(a)) / dlogits = onehot(a) - pi
    for (std::size_t j = 0; j < n_actions; ++j) {
      const double indicator = j == action ? 1.0 : 0.0;
      dlogits[j] += -inv_batch * dsurrogate_dlp * (indicator - probs[j]);
    }
    double entropy = 0.0;
    for (std::size_t j = 0; j < n_actions; ++j)
      if (probs[j] > 0.0) entropy -= probs[j] * std::log(probs[j]);
    acc.entropy += entropy * inv_batch;
    if (cfg.entropy_coef > 0.0) {
      for (std::size_t j = 0; j < n_actions; ++j) {
        if (probs[j] <= 0.0) continue;
        const double dH = -probs[j] * (std::log(probs[j]) + entropy);
        dlogits[j] += -inv_batch * cfg.entropy_coef * dH;
      }
    }
    nets.actor.backward(actor_cache, dlogits, actor_grad);

    MlpCache critic_cache;
    double value = 0.0;
    nets.critic.forward(obs, {&value, 1}, &critic_cache);
    const double error = value - traj.returns[s];
    acc.value_loss += cfg.value_loss_coef * error * error * inv_batch;
    const double dvalue = 2.0 * cfg.value_loss_coef * error * inv_batch;
    nets.critic.backward(critic_cache, {&dvalue, 1}, critic_grad);
  }
  if (!std::isfinite(acc.policy_loss) || !std::isfinite(acc.value_loss))
    throw NumericError("ppo_update: non-finite loss");
  return acc;
}

}  // namespace detail

/// Mutable optimizer state carried across updates.
struct PpoUpdateState {
  AdamOptimizer actor_adam;
  AdamOptimizer critic_adam;
  Rng shuffle_rng;
  double beta;

  PpoUpdateState(const PolicyValueNetworks& nets, const PpoConfig& cfg)
      : actor_adam(nets.actor.param_count(),
                   {.learning_rate = cfg.learning_rate}),
        critic_adam(nets.critic.param_count(),
                    {.learning_rate = cfg.learning_rate}),
        shuffle_rng(derive_seed(cfg.seed, "ppo-shuffle")),
        beta(cfg.adaptive.beta_init) {}
};

/// Batch statistics of the current policy against the collection-time policy.
inline void surrogate_stats(const PolicyValueNetworks& nets,
                            const Trajectory& traj,
                            std::span<const double> advantages,
                            const PpoConfig& cfg, double& surrogate,
                            double& clip_fraction, double& approx_kl) {
  const auto n_actions = static_cast<std::size_t>(nets.action_count());
  std::vector<double> logits(n_actions);
  std::vector<double> probs(n_actions);
  double surrogate_sum = 0.0, kl_sum = 0.0;
  std::size_t clipped_count = 0;
  for (std::size_t s = 0; s < traj.size(); ++s) {
    nets.actor.forward(traj.observations[s], logits);
    softmax(logits, probs);
    const double lp_new =
        std::log(probs[static_cast<std::size_t>(traj.actions[s])]);
    const double log_ratio = lp_new - traj.log_probs[s];
    const double ratio = std::exp(log_ratio);
    surrogate_sum += clipped_objective_term(ratio, advantages[s], cfg.epsilon);
    if (std::abs(ratio - 1.0) > cfg.epsilon) ++clipped_count;
    kl_sum += (ratio - 1.0) - log_ratio;
  }
  const auto n = static_cast<double>(traj.size());
  surrogate = surrogate_sum / n;
  clip_fraction = static_cast<double>(clipped_count) / n;
  approx_kl = kl_sum / n;
}

/// One PPO update over a collected batch: normalizes advantages, then runs
/// epochs of shuffled minibatch ascent on the surrogate (clipped by default,
/// beta-penalized for the adaptive variant) minus the value loss.
inline PpoUpdateReport ppo_update(PolicyValueNetworks& nets, Trajectory& traj,
                                  const PpoConfig& cfg, PpoUpdateState& state) {
  cfg.validate();
  if (traj.size() == 0) throw ParameterError("ppo_update: empty batch");
  if (traj.advantages.size() != traj.size())
    throw ParameterError("ppo_update: advantages not computed");
  if (cfg.variant == PpoVariant::kAdaptiveKl &&
      traj.old_probs.size() != traj.size())
    throw ParameterError("ppo_update: adaptive variant needs old_probs");

  // normalize advantages over the whole update batch
  std::vector<double> advantages = traj.advantages;
  double mean = std::accumulate(advantages.begin(), advantages.end(), 0.0) /
                static_cast<double>(advantages.size());
  double var = 0.0;
  for (double a : advantages) var += (a - mean) * (a - mean);
  var /= static_cast<double>(advantages.size());
  const double stddev = std::sqrt(var);
  for (auto& a : advantages) a = (a - mean) / (stddev + 1e-8);

  PpoUpdateReport report;
  double kl_unused = 0.0;
  surrogate_stats(nets, traj, advantages, cfg, report.initial_surrogate,
                  report.initial_clip_fraction, kl_unused);

  std::vector<std::size_t> order(traj.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> actor_grad(nets.actor.param_count());
  std::vector<double> critic_grad(nets.critic.param_count());
  std::vector<double> minibatch_adv;
  for (int epoch = 0; epoch < cfg.epochs_per_update; ++epoch) {
    for (std::size_t i = order.size(); i-- > 1;)
      std::swap(order[i], order[state.shuffle_rng.uniform_index(i + 1)]);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.minibatch_size)) {
      const std::size_t stop = std::min(
          order.size(), start + static_cast<std::size_t>(cfg.minibatch_size));
      std::span<const std::size_t> indices(order.data() + start, stop - start);
      minibatch_adv.resize(indices.size());
      for (std::size_t k = 0; k < indices.size(); ++k)
        minibatch_adv[k] = advantages[indices[k]];
      std::fill(actor_grad.begin(), actor_grad.end(), 0.0);
      std::fill(critic_grad.begin(), critic_grad.end(), 0.0);
      const auto acc =
          detail::ppo_loss(nets, traj, indices, minibatch_adv, cfg, state.beta,
                           actor_grad, critic_grad);
      report.policy_loss = acc.policy_loss;
      report.value_loss = acc.value_loss;
      report.entropy = acc.entropy;
      state.actor_adam.step(nets.actor.params(), actor_grad);
      state.critic_adam.step(nets.critic.params(), critic_grad);
    }
  }

  double final_surrogate = 0.0;
  surrogate_stats(nets, traj, advantages, cfg, final_surrogate,
                  report.clip_fraction, report.approx_kl);

  if (cfg.variant == PpoVariant::kAdaptiveKl) {
    // d = E[KL(pi_new || pi_old)] measured after the update
    const auto n_actions = static_cast<std::size_t>(nets.action_count());
    std::vector<double> logits(n_actions), probs(n_actions);
    double d = 0.0;
    for (std::size_t s = 0; s < traj.size(); ++s) {
      nets.actor.forward(traj.observations[s], logits);
      softmax(logits, probs);
      const auto& old = traj.old_probs[s];
      for (std::size_t j = 0; j < n_actions; ++j)
        if (probs[j] > 0.0 && old[j] > 0.0)
          d += probs[j] * (std::log(probs[j]) - std::log(old[j]));
    }
    d /= static_cast<double>(traj.size());
    state.beta = adaptive_kl_beta_update(state.beta, d, cfg.adaptive.d_targ);
  }
  report.beta = state.beta;
  return report;
}

/// Per-episode training log row.
struct EpisodeMetrics {
  int episode = 0;
  double final_p_malicious = 0.0;
  double total_reward = 0.0;
  double total_discounted_reward = 0.0;
  double last_reward = 0.0;
  int steps_used = 0;
};

struct TrainResult {
  PolicyValueNetworks nets;
  std::vector<EpisodeMetrics> episodes;
  std::vector<PpoUpdateReport> updates;
};

/// Full training loop: alternates rollout collection (stochastic policy) and
/// PPO updates for `total_episodes` episodes on the environment produced by
/// `env_factory`.
template <typename EnvFactory>
TrainResult train(EnvFactory&& env_factory, const PpoConfig& cfg,
                  int total_episodes) {
  cfg.validate();
  if (total_episodes <= 0)
    throw ParameterError("train: total_episodes must be positive");
  auto env = env_factory();

  TrainResult result{
      PolicyValueNetworks::initialize(env.observation_size(),
                                      env.action_count(), cfg.hidden_units,
                                      derive_seed(cfg.seed, "nets")),
      {},
      {}};
  PpoUpdateState state(result.nets, cfg);
  Rng action_rng(derive_seed(cfg.seed, "actions"));
  const bool keep_old_probs = cfg.variant == PpoVariant::kAdaptiveKl;

  int episode = 0;
  while (episode < total_episodes) {
    Trajectory traj;
    const int batch_episodes =
        std::min(cfg.rollout_episodes, total_episodes - episode);
    for (int e = 0; e < batch_episodes; ++e, ++episode) {
      env.reset();
      const EpisodeTrace trace =
          episode_rollout(env, [&](const std::vector<double>& obs) {
            auto [probs, value] = policy_forward(result.nets, obs);
            if (keep_old_probs) traj.old_probs.push_back(probs);
            auto [action, log_prob] = sample_action(probs, action_rng);
            return AgentChoice{action, log_prob, value};
          });
      traj.append_episode(trace);

      EpisodeMetrics metrics;
      metrics.episode = episode;
      metrics.final_p_malicious = trace.final_p_malicious;
      metrics.steps_used = static_cast<int>(trace.size());
      metrics.last_reward = trace.rewards.back();
      double discount = 1.0;
      for (double r : trace.rewards) {
        metrics.total_reward += r;
        metrics.total_discounted_reward += discount * r;
        discount *= cfg.gamma;
      }
      result.episodes.push_back(metrics);
    }
    compute_advantages(traj, cfg.gamma, cfg.gae_lambda);
    result.updates.push_back(ppo_update(result.nets, traj, cfg, state));
  }
  return result;
}

inline std::string serialize_networks(const PolicyValueNetworks& nets) {
  auto dump = [](const char* name, const Mlp& net) {
    std::string out;
    out += name;
    out += " " + std::to_string(net.spec().input);
    out += " " + std::to_string(net.spec().hidden.size());
    for (int h : net.spec().hidden) out += " " + std::to_string(h);
    out += " " + std::to_string(net.spec().output);
    out += " " + std::to_string(net.param_count());
    for (double p : net.params()) out += " " + format_double(p);
    out += "\n";
    return out;
  };
  return "drldo-checkpoint v1\n" + dump("actor", nets.actor) +
         dump("critic", nets.critic);
}

inline PolicyValueNetworks deserialize_networks(const std::string& text) {
  const auto lines = split_lines(text);
  if (lines.size() != 3 || lines[0] != "drldo-checkpoint v1")
    throw MalformedFileError("checkpoint file: bad or missing header");
  auto parse_net = [](const std::string& line, const char* name) {
    auto fields = split_fields(line);
    if (fields.size() < 5 || fields[0] != name)
      throw MalformedFileError(std::string("checkpoint file: expected ") +
                               name);
    MlpSpec spec;
    spec.input = static_cast<int>(parse_int(fields[1], "checkpoint input"));
    const auto n_hidden =
        static_cast<std::size_t>(parse_int(fields[2], "checkpoint hidden"));
    for (std::size_t i = 0; i < n_hidden; ++i)
      spec.hidden.push_back(
          static_cast<int>(parse_int(fields[3 + i], "checkpoint hidden size")));
    spec.output = static_cast<int>(
        parse_int(fields[3 + n_hidden], "checkpoint output"));
    const auto n_params = static_cast<std::size_t>(
        parse_int(fields[4 + n_hidden], "checkpoint params"));
    if (fields.size() != 5 + n_hidden + n_params)
      throw MalformedFileError("checkpoint file: parameter count mismatch");
    Mlp net(spec);
    if (net.param_count() != n_params)
      throw MalformedFileError("checkpoint file: parameter count mismatch");
    for (std::size_t i = 0; i < n_params; ++i)
      net.params()[i] =
          parse_double(fields[5 + n_hidden + i], "checkpoint param");
    return net;
  };
  return PolicyValueNetworks{parse_net(lines[1], "actor"),
                             parse_net(lines[2], "critic")};
}

inline void save_checkpoint(const PolicyValueNetworks& nets,
                            const std::string& path) {
  write_text_file(path, serialize_networks(nets));
}

inline PolicyValueNetworks load_checkpoint(const std::string& path) {
  return deserialize_networks(read_text_file(path));
}

}  // namespace drldo

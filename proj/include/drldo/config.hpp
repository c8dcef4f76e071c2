#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "drldo/agent.hpp"
#include "drldo/classifier.hpp"
#include "drldo/environment.hpp"
#include "drldo/errors.hpp"
#include "drldo/metrics.hpp"
#include "drldo/text_io.hpp"

namespace drldo {

struct CorpusConfig {
  int vocab_size = 64;
  int n_benign = 500;
  int n_malicious = 500;
  double separation = 0.8;

  bool operator==(const CorpusConfig& other) const = default;
};

struct ObfuscatorConfig {
  int variants_per_malware = 3;
  long long budget = 0;  // <= 0 selects 50 * vocab_size
  double epsilon = 0.5;

  bool operator==(const ObfuscatorConfig& other) const = default;
};

struct EnvironmentConfig {
  RewardConfig reward;
  int max_steps = 200;
  std::uint64_t seed = 0;

  bool operator==(const EnvironmentConfig& other) const = default;
};

/// Everything one `run-all` needs; round-trips losslessly through JSON.
/// Stage seeds are derived from the single global `seed` at run time.
struct PipelineConfig {
  int version = 1;
  std::uint64_t seed = 7;
  std::string out_dir = "out";
  CorpusConfig corpus;
  double classifier_split = 0.7;
  ClassifierHyperparams classifier;
  ObfuscatorConfig obfuscator;
  EnvironmentConfig environment;
  PpoConfig ppo;
  int episodes = 2000;
  ReportConfig report;

  void validate() const {
    if (version != 1) throw ConfigError("unsupported config version");
    if (corpus.vocab_size < 1 || corpus.vocab_size > kMaxVocabularySize)
      throw ConfigError("corpus.vocab_size must be in [1, 1612]");
    if (corpus.n_benign <= 0 || corpus.n_malicious <= 0)
      throw ConfigError("corpus sample counts must be positive");
    if (!(corpus.separation > 0.0 && corpus.separation <= 1.0))
      throw ConfigError("corpus.separation must be in (0, 1]");
    if (!(classifier_split > 0.0 && classifier_split < 1.0))
      throw ConfigError("classifier_split must be in (0, 1)");
    if (obfuscator.variants_per_malware <= 0)
      throw ConfigError("obfuscator.variants_per_malware must be positive");
    if (!(obfuscator.epsilon >= 0.0 && obfuscator.epsilon < 1.0))
      throw ConfigError("obfuscator.epsilon must be in [0, 1)");
    if (environment.max_steps <= 0)
      throw ConfigError("environment.max_steps must be positive");
    if (episodes <= 0) throw ConfigError("episodes must be positive");
    if (report.moving_average_window <= 0 || report.probability_bins <= 0 ||
        report.similarity_bins <= 0)
      throw ConfigError("report windows and bins must be positive");
    ppo.validate();
  }

  bool operator==(const PipelineConfig& other) const = default;
};

// ---- JSON mapping ----

inline void to_json(nlohmann::json& j, const CorpusConfig& c) {
  j = {{"vocab_size", c.vocab_size},
       {"n_benign", c.n_benign},
       {"n_malicious", c.n_malicious},
       {"separation", c.separation}};
}
inline void from_json(const nlohmann::json& j, CorpusConfig& c) {
  j.at("vocab_size").get_to(c.vocab_size);
  j.at("n_benign").get_to(c.n_benign);
  j.at("n_malicious").get_to(c.n_malicious);
  j.at("separation").get_to(c.separation);
}

inline void to_json(nlohmann::json& j, const ClassifierHyperparams& c) {
  j = {{"hidden_units", c.hidden_units},
       {"epochs", c.epochs},
       {"learning_rate", c.learning_rate},
       {"weight_decay", c.weight_decay},
       {"accuracy_floor", c.accuracy_floor},
       {"target_logit", c.target_logit},
       {"seed", c.seed}};
}
inline void from_json(const nlohmann::json& j, ClassifierHyperparams& c) {
  j.at("hidden_units").get_to(c.hidden_units);
  j.at("epochs").get_to(c.epochs);
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("weight_decay").get_to(c.weight_decay);
  j.at("accuracy_floor").get_to(c.accuracy_floor);
  j.at("target_logit").get_to(c.target_logit);
  j.at("seed").get_to(c.seed);
}

inline void to_json(nlohmann::json& j, const ObfuscatorConfig& c) {
  j = {{"variants_per_malware", c.variants_per_malware},
       {"budget", c.budget},
       {"epsilon", c.epsilon}};
}
inline void from_json(const nlohmann::json& j, ObfuscatorConfig& c) {
  j.at("variants_per_malware").get_to(c.variants_per_malware);
  j.at("budget").get_to(c.budget);
  j.at("epsilon").get_to(c.epsilon);
}

inline void to_json(nlohmann::json& j, const RewardConfig& c) {
  j = {{"p_target", c.p_target},
       {"p_threshold", c.p_threshold},
       {"r_goal", c.r_goal},
       {"penalty_turn", c.penalty_turn}};
}
inline void from_json(const nlohmann::json& j, RewardConfig& c) {
  j.at("p_target").get_to(c.p_target);
  j.at("p_threshold").get_to(c.p_threshold);
  j.at("r_goal").get_to(c.r_goal);
  j.at("penalty_turn").get_to(c.penalty_turn);
}

inline void to_json(nlohmann::json& j, const EnvironmentConfig& c) {
  j = {{"reward", c.reward}, {"max_steps", c.max_steps}, {"seed", c.seed}};
}
inline void from_json(const nlohmann::json& j, EnvironmentConfig& c) {
  j.at("reward").get_to(c.reward);
  j.at("max_steps").get_to(c.max_steps);
  j.at("seed").get_to(c.seed);
}

inline void to_json(nlohmann::json& j, const PpoConfig& c) {
  j = {{"epsilon", c.epsilon},
       {"gamma", c.gamma},
       {"gae_lambda", c.gae_lambda},
       {"learning_rate", c.learning_rate},
       {"epochs_per_update", c.epochs_per_update},
       {"minibatch_size", c.minibatch_size},
       {"rollout_episodes", c.rollout_episodes},
       {"value_loss_coef", c.value_loss_coef},
       {"entropy_coef", c.entropy_coef},
       {"hidden_units", c.hidden_units},
       {"variant",
        c.variant == PpoVariant::kClipped ? "clipped" : "adaptive_kl"},
       {"beta_init", c.adaptive.beta_init},
       {"d_targ", c.adaptive.d_targ},
       {"seed", c.seed}};
}
inline void from_json(const nlohmann::json& j, PpoConfig& c) {
  j.at("epsilon").get_to(c.epsilon);
  j.at("gamma").get_to(c.gamma);
  j.at("gae_lambda").get_to(c.gae_lambda);
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("epochs_per_update").get_to(c.epochs_per_update);
  j.at("minibatch_size").get_to(c.minibatch_size);
  j.at("rollout_episodes").get_to(c.rollout_episodes);
  j.at("value_loss_coef").get_to(c.value_loss_coef);
  j.at("entropy_coef").get_to(c.entropy_coef);
  j.at("hidden_units").get_to(c.hidden_units);
  const auto variant = j.at("variant").get<std::string>();
  if (variant == "clipped") {
    c.variant = PpoVariant::kClipped;
  } else if (variant == "adaptive_kl") {
    c.variant = PpoVariant::kAdaptiveKl;
  } else {
    throw ConfigError("ppo.variant must be 'clipped' or 'adaptive_kl'");
  }
  j.at("beta_init").get_to(c.adaptive.beta_init);
  j.at("d_targ").get_to(c.adaptive.d_targ);
  j.at("seed").get_to(c.seed);
}

inline void to_json(nlohmann::json& j, const ReportConfig& c) {
  j = {{"moving_average_window", c.moving_average_window},
       {"probability_bins", c.probability_bins},
       {"similarity_bins", c.similarity_bins}};
}
inline void from_json(const nlohmann::json& j, ReportConfig& c) {
  j.at("moving_average_window").get_to(c.moving_average_window);
  j.at("probability_bins").get_to(c.probability_bins);
  j.at("similarity_bins").get_to(c.similarity_bins);
}

inline void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = {{"config_version", c.version},
       {"seed", c.seed},
       {"out_dir", c.out_dir},
       {"corpus", c.corpus},
       {"classifier_split", c.classifier_split},
       {"classifier", c.classifier},
       {"obfuscator", c.obfuscator},
       {"environment", c.environment},
       {"ppo", c.ppo},
       {"episodes", c.episodes},
       {"report", c.report}};
}
inline void from_json(const nlohmann::json& j, PipelineConfig& c) {
  j.at("config_version").get_to(c.version);
  j.at("seed").get_to(c.seed);
  j.at("out_dir").get_to(c.out_dir);
  j.at("corpus").get_to(c.corpus);
  j.at("classifier_split").get_to(c.classifier_split);
  j.at("classifier").get_to(c.classifier);
  j.at("obfuscator").get_to(c.obfuscator);
  j.at("environment").get_to(c.environment);
  j.at("ppo").get_to(c.ppo);
  j.at("episodes").get_to(c.episodes);
  j.at("report").get_to(c.report);
}

inline void save_config(const PipelineConfig& cfg, const std::string& path) {
  nlohmann::json j = cfg;
  write_text_file(path, j.dump(2) + "\n");
}

inline PipelineConfig load_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw MalformedFileError("config file: " + std::string(e.what()));
  }
  try {
    PipelineConfig cfg = j.get<PipelineConfig>();
    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedFileError("config file: " + std::string(e.what()));
  }
}

}  // namespace drldo

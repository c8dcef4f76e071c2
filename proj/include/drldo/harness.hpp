#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "drldo/agent.hpp"
#include "drldo/classifier.hpp"
#include "drldo/config.hpp"
#include "drldo/corpus.hpp"
#include "drldo/environment.hpp"
#include "drldo/errors.hpp"
#include "drldo/metrics.hpp"
#include "drldo/obfuscator.hpp"

namespace drldo {

enum class PipelineStage {
  kCorpus,
  kClassifier,
  kObfuscator,
  kAgent,
  kEvaluate,
  kReport,
};

inline const char* to_string(PipelineStage stage) {
  switch (stage) {
    case PipelineStage::kCorpus: return "gen-corpus";
    case PipelineStage::kClassifier: return "train-ids";
    case PipelineStage::kObfuscator: return "obfuscate";
    case PipelineStage::kAgent: return "train-agent";
    case PipelineStage::kEvaluate: return "evaluate";
    case PipelineStage::kReport: return "report";
  }
  return "unknown";
}

/// Any failure inside run_pipeline is rethrown tagged with its stage so the
/// CLI can map it to a distinct exit code. Artifacts of completed stages are
/// left on disk.
class StageError : public Error {
 public:
  StageError(PipelineStage stage, const std::string& what)
      : Error(std::string("stage ") + to_string(stage) + ": " + what),
        stage_(stage) {}
  PipelineStage stage() const { return stage_; }

 private:
  PipelineStage stage_;
};

// ---- artifact file names inside out_dir ----
inline constexpr const char* kCorpusFile = "corpus.txt";
inline constexpr const char* kClassifierFile = "classifier.txt";
inline constexpr const char* kRepositoryFile = "repository.txt";
inline constexpr const char* kCheckpointFile = "checkpoint.txt";
inline constexpr const char* kTrainingMetricsFile = "training_metrics.csv";
inline constexpr const char* kEvaluationMetricsFile = "evaluation_metrics.csv";
inline constexpr const char* kMaFinalPFile = "report_ma_final_p_malicious.csv";
inline constexpr const char* kRewardSeriesFile = "report_reward_series.csv";
inline constexpr const char* kHistPAfterFile = "report_hist_p_after.csv";
inline constexpr const char* kHistSimOriginalFile =
    "report_hist_sim_to_original.csv";
inline constexpr const char* kHistSimObfuscatedFile =
    "report_hist_sim_to_obfuscated.csv";
inline constexpr const char* kEvaluationReportFile = "evaluation_report.json";

inline std::string artifact_path(const PipelineConfig& cfg, const char* name) {
  return (std::filesystem::path(cfg.out_dir) / name).string();
}

/// Runs `policy` (environment -> action) over every repository variant and
/// records one evaluation row per variant.
template <typename PolicyFn>
std::vector<EvaluationRow> evaluate_with_policy(
    PolicyFn&& policy, const ObfuscationRepository& repository,
    const SurrogateClassifier& classifier, const EnvironmentConfig& env_cfg) {
  if (repository.variants.empty())
    throw ParameterError("evaluate: repository has no variants");
  if (classifier.fingerprint() != repository.classifier_fingerprint)
    throw ConfigError(
        "evaluate: classifier fingerprint does not match the repository "
        "screening classifier");
  EpisodeEnvironment env(repository, classifier, env_cfg.reward,
                         env_cfg.max_steps, /*seed=*/0);
  std::vector<EvaluationRow> rows;
  rows.reserve(repository.variants.size());
  for (std::size_t i = 0; i < repository.variants.size(); ++i) {
    const StepResult initial = env.reset_to(i);
    double p_after = initial.info.p_malicious;
    while (!env.done()) {
      const StepResult result = env.step(policy(env));
      p_after = result.info.p_malicious;
    }
    const auto& variant = repository.variants[i];
    EvaluationRow row;
    row.variant_id = variant.variant_id;
    row.p_malicious_before = initial.info.p_malicious;
    row.p_malicious_after = p_after;
    row.sim_to_original =
        pearson_similarity(env.current_state(), repository.original_of(variant));
    row.sim_to_obfuscated =
        pearson_similarity(env.current_state(), variant.obfuscated_vector);
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Evaluates the trained policy over the whole repository: one episode per
/// variant, actions sampled from the policy's own distribution with a seed
/// derived per variant, so reruns are byte-identical.
inline std::vector<EvaluationRow> evaluate(
    const PolicyValueNetworks& nets, const ObfuscationRepository& repository,
    const SurrogateClassifier& classifier, const EnvironmentConfig& env_cfg,
    std::uint64_t seed = 0) {
  Rng rng(seed);
  return evaluate_with_policy(
      [&nets, &rng, seed](const EpisodeEnvironment& env) {
        if (env.steps_used() == 0)
          rng = Rng(derive_seed(seed, "evaluate-variant",
                                env.current_variant_index()));
        auto [probs, value] = policy_forward(nets, env.observation());
        return sample_action(probs, rng).first;
      },
      repository, classifier, env_cfg);
}

inline void write_report_files(const PipelineConfig& cfg,
                               const ReportTables& tables) {
  write_text_file(artifact_path(cfg, kMaFinalPFile),
                  series_csv("final_p_malicious_ma",
                             tables.ma_final_p_malicious));
  write_text_file(artifact_path(cfg, kRewardSeriesFile),
                  reward_series_csv(tables));
  write_text_file(artifact_path(cfg, kHistPAfterFile),
                  histogram_csv(tables.evaluation.hist_p_after));
  write_text_file(artifact_path(cfg, kHistSimOriginalFile),
                  histogram_csv(tables.evaluation.hist_sim_to_original));
  write_text_file(artifact_path(cfg, kHistSimObfuscatedFile),
                  histogram_csv(tables.evaluation.hist_sim_to_obfuscated));

  const auto& ev = tables.evaluation;
  nlohmann::json j;
  j["n_variants"] = ev.n_variants;
  j["mean_p_after"] = ev.mean_p_after;
  j["median_p_after"] = ev.median_p_after;
  j["fraction_detected"] = ev.fraction_detected;
  j["mean_sim_to_original"] = ev.mean_sim_to_original;
  j["mean_sim_to_obfuscated"] = ev.mean_sim_to_obfuscated;
  auto hist_json = [](const std::vector<HistogramBin>& bins) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& b : bins)
      arr.push_back({{"lo", b.lo}, {"hi", b.hi}, {"count", b.count}});
    return arr;
  };
  j["hist_p_after"] = hist_json(ev.hist_p_after);
  j["hist_sim_to_original"] = hist_json(ev.hist_sim_to_original);
  j["hist_sim_to_obfuscated"] = hist_json(ev.hist_sim_to_obfuscated);
  write_text_file(artifact_path(cfg, kEvaluationReportFile), j.dump(2) + "\n");
}

struct PipelineResult {
  Corpus corpus;
  SurrogateClassifier classifier;
  ObfuscationRepository repository;
  PolicyValueNetworks nets;
  MetricsLog metrics;
  ReportTables report;
};

namespace detail {
template <typename Fn>
auto run_stage(PipelineStage stage, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}
}  // namespace detail

/// Executes the full pipeline: corpus -> frozen classifier -> obfuscation
/// repository -> PPO training -> greedy evaluation -> report files. Every
/// artifact lands in cfg.out_dir; the whole run is a deterministic function
/// of the config (stage seeds derive from the global seed).
inline PipelineResult run_pipeline(const PipelineConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  PipelineResult result;

  detail::run_stage(PipelineStage::kCorpus, [&] {
    const auto vocab = OpcodeVocabulary::synthetic(cfg.corpus.vocab_size);
    result.corpus = generate_corpus(vocab, cfg.corpus.n_benign,
                                    cfg.corpus.n_malicious,
                                    derive_seed(cfg.seed, "stage-corpus"),
                                    cfg.corpus.separation);
    save_corpus(result.corpus, artifact_path(cfg, kCorpusFile));
    return 0;
  });

  detail::run_stage(PipelineStage::kClassifier, [&] {
    ClassifierHyperparams hyper = cfg.classifier;
    hyper.seed = derive_seed(cfg.seed, "stage-classifier", hyper.seed);
    result.classifier =
        train_classifier(result.corpus, cfg.classifier_split, hyper);
    save_classifier(result.classifier, artifact_path(cfg, kClassifierFile));
    return 0;
  });

  detail::run_stage(PipelineStage::kObfuscator, [&] {
    result.repository = build_repository(
        result.classifier, result.corpus, cfg.obfuscator.variants_per_malware,
        derive_seed(cfg.seed, "stage-obfuscator"), cfg.obfuscator.budget,
        cfg.obfuscator.epsilon);
    save_repository(result.repository, artifact_path(cfg, kRepositoryFile));
    return 0;
  });

  detail::run_stage(PipelineStage::kAgent, [&] {
    PpoConfig ppo = cfg.ppo;
    ppo.seed = derive_seed(cfg.seed, "stage-agent", ppo.seed);
    TrainResult trained = train(
        [&] {
          return EpisodeEnvironment(result.repository, result.classifier,
                                    cfg.environment.reward,
                                    cfg.environment.max_steps,
                                    derive_seed(cfg.seed, "stage-environment",
                                                cfg.environment.seed));
        },
        ppo, cfg.episodes);
    result.nets = std::move(trained.nets);
    result.metrics.episodes = std::move(trained.episodes);
    save_checkpoint(result.nets, artifact_path(cfg, kCheckpointFile));
    write_text_file(artifact_path(cfg, kTrainingMetricsFile),
                    training_metrics_csv(result.metrics.episodes));
    return 0;
  });

  detail::run_stage(PipelineStage::kEvaluate, [&] {
    result.metrics.evaluations =
        evaluate(result.nets, result.repository, result.classifier,
                 cfg.environment, derive_seed(cfg.seed, "stage-evaluate"));
    write_text_file(artifact_path(cfg, kEvaluationMetricsFile),
                    evaluation_metrics_csv(result.metrics.evaluations));
    return 0;
  });

  detail::run_stage(PipelineStage::kReport, [&] {
    result.report = build_report(result.metrics, cfg.report);
    write_report_files(cfg, result.report);
    return 0;
  });

  return result;
}

}  // namespace drldo

// drldo: train a PPO agent that de-obfuscates opcode-frequency vectors so a
// frozen classifier detects them again. Stages run individually or end to end
// (run-all); every subcommand reads the shared JSON config plus overrides.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "drldo/config.hpp"
#include "drldo/harness.hpp"

namespace {

constexpr int kExitConfigError = 2;

int stage_exit_code(drldo::PipelineStage stage) {
  switch (stage) {
    case drldo::PipelineStage::kCorpus: return 10;
    case drldo::PipelineStage::kClassifier: return 11;
    case drldo::PipelineStage::kObfuscator: return 12;
    case drldo::PipelineStage::kAgent: return 13;
    case drldo::PipelineStage::kEvaluate: return 14;
    case drldo::PipelineStage::kReport: return 15;
  }
  return 1;
}

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
};

void add_common_flags(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path,
                  "Pipeline config file (JSON); defaults apply when omitted");
  cmd->add_option("--seed", args.seed, "Override the global seed");
  cmd->add_option("--out-dir", args.out_dir, "Override the output directory");
}

drldo::PipelineConfig resolve_config(const CommonArgs& args) {
  drldo::PipelineConfig cfg;
  if (!args.config_path.empty()) cfg = drldo::load_config(args.config_path);
  if (args.seed) cfg.seed = *args.seed;
  if (args.out_dir) cfg.out_dir = *args.out_dir;
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  return cfg;
}

using drldo::artifact_path;

void run_gen_corpus(const drldo::PipelineConfig& cfg) {
  const auto vocab = drldo::OpcodeVocabulary::synthetic(cfg.corpus.vocab_size);
  const auto corpus = drldo::generate_corpus(
      vocab, cfg.corpus.n_benign, cfg.corpus.n_malicious,
      drldo::derive_seed(cfg.seed, "stage-corpus"), cfg.corpus.separation);
  drldo::save_corpus(corpus, artifact_path(cfg, drldo::kCorpusFile));
  std::cout << "corpus: " << corpus.samples.size() << " samples ("
            << corpus.count(drldo::SampleLabel::kBenign) << " benign, "
            << corpus.count(drldo::SampleLabel::kMalicious) << " malicious) -> "
            << artifact_path(cfg, drldo::kCorpusFile) << "\n";
}

void run_train_ids(const drldo::PipelineConfig& cfg) {
  const auto corpus =
      drldo::load_corpus(artifact_path(cfg, drldo::kCorpusFile));
  drldo::ClassifierHyperparams hyper = cfg.classifier;
  hyper.seed = drldo::derive_seed(cfg.seed, "stage-classifier", hyper.seed);
  const auto classifier =
      drldo::train_classifier(corpus, cfg.classifier_split, hyper);
  drldo::save_classifier(classifier,
                         artifact_path(cfg, drldo::kClassifierFile));
  const auto& report = classifier.training_report();
  std::cout << "classifier: held-out accuracy " << report.held_out_accuracy
            << ", fpr " << report.held_out_fpr << ", fingerprint "
            << classifier.fingerprint() << "\n";
}

void run_obfuscate(const drldo::PipelineConfig& cfg) {
  const auto corpus =
      drldo::load_corpus(artifact_path(cfg, drldo::kCorpusFile));
  const auto classifier =
      drldo::load_classifier(artifact_path(cfg, drldo::kClassifierFile));
  const auto repo = drldo::build_repository(
      classifier, corpus, cfg.obfuscator.variants_per_malware,
      drldo::derive_seed(cfg.seed, "stage-obfuscator"), cfg.obfuscator.budget,
      cfg.obfuscator.epsilon);
  drldo::save_repository(repo, artifact_path(cfg, drldo::kRepositoryFile));
  std::cout << "repository: " << repo.variants.size() << " evading variants of "
            << repo.originals.size() << " malware samples\n";
}

void run_train_agent(const drldo::PipelineConfig& cfg) {
  const auto classifier =
      drldo::load_classifier(artifact_path(cfg, drldo::kClassifierFile));
  const auto repo =
      drldo::load_repository(artifact_path(cfg, drldo::kRepositoryFile),
                             classifier.vocabulary().size());
  drldo::PpoConfig ppo = cfg.ppo;
  ppo.seed = drldo::derive_seed(cfg.seed, "stage-agent", ppo.seed);
  const auto trained = drldo::train(
      [&] {
        return drldo::EpisodeEnvironment(
            repo, classifier, cfg.environment.reward, cfg.environment.max_steps,
            drldo::derive_seed(cfg.seed, "stage-environment",
                               cfg.environment.seed));
      },
      ppo, cfg.episodes);
  drldo::save_checkpoint(trained.nets,
                         artifact_path(cfg, drldo::kCheckpointFile));
  drldo::write_text_file(artifact_path(cfg, drldo::kTrainingMetricsFile),
                         drldo::training_metrics_csv(trained.episodes));
  double tail = 0.0;
  const std::size_t tail_n = std::min<std::size_t>(100, trained.episodes.size());
  for (std::size_t i = trained.episodes.size() - tail_n;
       i < trained.episodes.size(); ++i)
    tail += trained.episodes[i].final_p_malicious;
  std::cout << "agent: " << trained.episodes.size()
            << " episodes trained; mean final P_malicious over last " << tail_n
            << " episodes: " << tail / static_cast<double>(tail_n) << "\n";
}

void run_evaluate(const drldo::PipelineConfig& cfg) {
  const auto classifier =
      drldo::load_classifier(artifact_path(cfg, drldo::kClassifierFile));
  const auto repo =
      drldo::load_repository(artifact_path(cfg, drldo::kRepositoryFile),
                             classifier.vocabulary().size());
  const auto nets =
      drldo::load_checkpoint(artifact_path(cfg, drldo::kCheckpointFile));
  const auto rows =
      drldo::evaluate(nets, repo, classifier, cfg.environment,
                      drldo::derive_seed(cfg.seed, "stage-evaluate"));
  drldo::write_text_file(artifact_path(cfg, drldo::kEvaluationMetricsFile),
                         drldo::evaluation_metrics_csv(rows));
  const auto report = drldo::build_evaluation_report(rows, cfg.report);
  std::cout << "evaluate: " << report.n_variants
            << " variants; mean P_malicious after " << report.mean_p_after
            << "; detected fraction " << report.fraction_detected << "\n";
}

void run_report(const drldo::PipelineConfig& cfg) {
  drldo::MetricsLog log;
  log.episodes = drldo::parse_training_metrics_csv(drldo::read_text_file(
      artifact_path(cfg, drldo::kTrainingMetricsFile)));
  log.evaluations = drldo::parse_evaluation_metrics_csv(drldo::read_text_file(
      artifact_path(cfg, drldo::kEvaluationMetricsFile)));
  const auto tables = drldo::build_report(log, cfg.report);
  drldo::write_report_files(cfg, tables);
  std::cout << "report: wrote series and histogram files to " << cfg.out_dir
            << "\n";
}

void run_all(const drldo::PipelineConfig& cfg) {
  const auto result = drldo::run_pipeline(cfg);
  const auto& ev = result.report.evaluation;
  std::cout << "run-all complete\n"
            << "  classifier accuracy: "
            << result.classifier.training_report().held_out_accuracy << "\n"
            << "  repository variants: " << result.repository.variants.size()
            << "\n"
            << "  mean P_malicious after de-obfuscation: " << ev.mean_p_after
            << "\n"
            << "  detected fraction: " << ev.fraction_detected << "\n"
            << "  mean similarity to original: " << ev.mean_sim_to_original
            << "\n"
            << "  mean similarity to obfuscated: " << ev.mean_sim_to_obfuscated
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DRL-based de-obfuscation pipeline for opcode-frequency "
               "malware features"};
  app.require_subcommand(1);

  struct Command {
    const char* name;
    const char* help;
    drldo::PipelineStage stage;
    void (*run)(const drldo::PipelineConfig&);
  };
  const Command commands[] = {
      {"gen-corpus", "Generate the synthetic labeled corpus",
       drldo::PipelineStage::kCorpus, run_gen_corpus},
      {"train-ids", "Train and freeze the surrogate detector",
       drldo::PipelineStage::kClassifier, run_train_ids},
      {"obfuscate", "Build the obfuscated-variant repository",
       drldo::PipelineStage::kObfuscator, run_obfuscate},
      {"train-agent", "Train the PPO de-obfuscation agent",
       drldo::PipelineStage::kAgent, run_train_agent},
      {"evaluate", "Greedy-evaluate the trained agent on every variant",
       drldo::PipelineStage::kEvaluate, run_evaluate},
      {"report", "Build plot-ready series, histograms and the summary report",
       drldo::PipelineStage::kReport, run_report},
      {"run-all", "Run every stage end to end",
       drldo::PipelineStage::kCorpus, run_all},
  };

  CommonArgs args;
  for (const auto& command : commands)
    add_common_flags(app.add_subcommand(command.name, command.help), args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfigError;
  }

  for (const auto& command : commands) {
    if (!app.get_subcommand(command.name)->parsed()) continue;
    drldo::PipelineConfig cfg;
    try {
      cfg = resolve_config(args);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitConfigError;
    }
    try {
      command.run(cfg);
      return 0;
    } catch (const drldo::StageError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return stage_exit_code(e.stage());
    } catch (const drldo::ConfigError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitConfigError;
    } catch (const drldo::MalformedFileError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitConfigError;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return stage_exit_code(command.stage);
    }
  }
  return kExitConfigError;
}

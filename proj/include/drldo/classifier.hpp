#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "drldo/corpus.hpp"
#include "drldo/errors.hpp"
#include "drldo/nets.hpp"
#include "drldo/rng.hpp"
#include "drldo/text_io.hpp"

namespace drldo {

struct TrainingReport {
  double held_out_accuracy = 0.0;
  double held_out_fpr = 0.0;
  int train_samples = 0;
  int held_out_samples = 0;

  bool operator==(const TrainingReport& other) const = default;
};

struct ClassifierHyperparams {
  int hidden_units = 0;  // 0 selects the plain logistic model
  int epochs = 600;
  double learning_rate = 0.05;
  double weight_decay = 1e-4;
  double accuracy_floor = 0.95;
  // After fitting, the logit scale is recalibrated so the median |logit| on
  // the training set hits this value. Keeps the frozen model's probability
  // sharpness stable across corpora; <= 0 disables.
  double target_logit = 6.0;
  std::uint64_t seed = 1;

  bool operator==(const ClassifierHyperparams& other) const = default;
};

/// Frozen probabilistic detector mapping an opcode-frequency vector to
/// P_malicious. Stands in for the pre-trained IDS classifier: once frozen it
/// is never retrained, reconfigured, or recalibrated.
class SurrogateClassifier {
 public:
  SurrogateClassifier() = default;

  SurrogateClassifier(OpcodeVocabulary vocabulary, Mlp model)
      : vocabulary_(std::move(vocabulary)), model_(std::move(model)) {
    if (model_.spec().input != vocabulary_.size() || model_.spec().output != 1)
      throw ParameterError("classifier model does not match vocabulary");
  }

  const OpcodeVocabulary& vocabulary() const { return vocabulary_; }
  const Mlp& model() const { return model_; }
  const TrainingReport& training_report() const { return report_; }
  bool frozen() const { return frozen_; }
  double input_scale() const { return kInputScale; }

  void set_parameters(std::vector<double> params) {
    if (frozen_)
      throw UsageError("classifier is frozen; parameters are immutable");
    if (params.size() != model_.param_count())
      throw ParameterError("parameter count mismatch");
    model_.params() = std::move(params);
  }

  void set_training_report(const TrainingReport& report) {
    if (frozen_)
      throw UsageError("classifier is frozen; parameters are immutable");
    report_ = report;
  }

  void freeze() { frozen_ = true; }

  /// P(malicious | v). Pure function of (parameters, v); requires freeze().
  double predict_malicious(const OpcodeFrequencyVector& v) const {
    if (!frozen_)
      throw UsageError("classifier must be frozen before prediction");
    return score(v);
  }

  /// Raw logit during training (no freeze requirement).
  double score_logit(std::span<const double> scaled_input) const {
    double logit = 0.0;
    model_.forward(scaled_input, {&logit, 1});
    return logit;
  }

  std::string serialize() const {
    std::string out;
    out += "drldo-classifier v1\n";
    out += "vocab " + std::to_string(vocabulary_.size());
    for (const auto& name : vocabulary_.names()) out += " " + name;
    out += "\narch " + std::to_string(model_.spec().input);
    out += " " + std::to_string(model_.spec().hidden.size());
    for (int h : model_.spec().hidden) out += " " + std::to_string(h);
    out += " " + std::to_string(model_.spec().output);
    out += "\ninput-scale " + format_double(kInputScale);
    out += "\nfrozen " + std::to_string(frozen_ ? 1 : 0);
    out += "\nreport " + format_double(report_.held_out_accuracy) + " " +
           format_double(report_.held_out_fpr) + " " +
           std::to_string(report_.train_samples) + " " +
           std::to_string(report_.held_out_samples);
    out += "\nparams " + std::to_string(model_.param_count());
    for (double p : model_.params()) out += " " + format_double(p);
    out += "\n";
    return out;
  }

  /// Stable identity of the frozen artifact; the pipeline uses it to prove
  /// that screening and evaluation saw byte-identical classifiers.
  std::string fingerprint() const { return hex64(fnv1a64(serialize())); }

  static SurrogateClassifier deserialize(const std::string& text) {
    const auto lines = split_lines(text);
    std::size_t at = 0;
    auto next_fields = [&](const std::string& key) {
      if (at >= lines.size())
        throw MalformedFileError("classifier file: unexpected end of file");
      auto fields = split_fields(lines[at++]);
      if (fields.empty() || fields[0] != key)
        throw MalformedFileError("classifier file: expected '" + key + "'");
      return fields;
    };
    if (at >= lines.size() || lines[at++] != "drldo-classifier v1")
      throw MalformedFileError("classifier file: bad or missing header");

    auto vocab_fields = next_fields("vocab");
    const auto vocab_size =
        static_cast<std::size_t>(parse_int(vocab_fields[1], "classifier vocab"));
    if (vocab_fields.size() != vocab_size + 2)
      throw MalformedFileError("classifier file: vocab name count mismatch");
    OpcodeVocabulary vocab({vocab_fields.begin() + 2, vocab_fields.end()});

    auto arch_fields = next_fields("arch");
    if (arch_fields.size() < 4)
      throw MalformedFileError("classifier file: bad arch record");
    MlpSpec spec;
    spec.input = static_cast<int>(parse_int(arch_fields[1], "arch input"));
    const auto n_hidden =
        static_cast<std::size_t>(parse_int(arch_fields[2], "arch hidden"));
    if (arch_fields.size() != n_hidden + 4)
      throw MalformedFileError("classifier file: arch layer count mismatch");
    for (std::size_t i = 0; i < n_hidden; ++i)
      spec.hidden.push_back(
          static_cast<int>(parse_int(arch_fields[3 + i], "arch hidden size")));
    spec.output =
        static_cast<int>(parse_int(arch_fields.back(), "arch output"));

    auto scale_fields = next_fields("input-scale");
    if (scale_fields.size() != 2 ||
        parse_double(scale_fields[1], "input-scale") != kInputScale)
      throw MalformedFileError("classifier file: unsupported input scale");

    auto frozen_fields = next_fields("frozen");
    if (frozen_fields.size() != 2)
      throw MalformedFileError("classifier file: bad frozen record");
    const bool frozen = parse_int(frozen_fields[1], "frozen") != 0;

    auto report_fields = next_fields("report");
    if (report_fields.size() != 5)
      throw MalformedFileError("classifier file: bad report record");
    TrainingReport report;
    report.held_out_accuracy = parse_double(report_fields[1], "report");
    report.held_out_fpr = parse_double(report_fields[2], "report");
    report.train_samples =
        static_cast<int>(parse_int(report_fields[3], "report"));
    report.held_out_samples =
        static_cast<int>(parse_int(report_fields[4], "report"));

    auto param_fields = next_fields("params");
    const auto n_params =
        static_cast<std::size_t>(parse_int(param_fields[1], "params"));
    if (param_fields.size() != n_params + 2)
      throw MalformedFileError("classifier file: parameter count mismatch");
    std::vector<double> params;
    params.reserve(n_params);
    for (std::size_t i = 2; i < param_fields.size(); ++i)
      params.push_back(parse_double(param_fields[i], "params"));
    if (at != lines.size())
      throw MalformedFileError("classifier file: trailing content");

    SurrogateClassifier classifier(std::move(vocab), Mlp(std::move(spec)));
    classifier.set_parameters(std::move(params));
    classifier.set_training_report(report);
    if (frozen) classifier.freeze();
    return classifier;
  }

  bool operator==(const SurrogateClassifier& other) const = default;

 private:
  static constexpr double kInputScale = 10000.0;

  double score(const OpcodeFrequencyVector& v) const {
    v.validate(vocabulary_.size());
    std::vector<double> scaled(v.counts.size());
    for (std::size_t i = 0; i < scaled.size(); ++i)
      scaled[i] = static_cast<double>(v.counts[i]) / kInputScale;
    return sigmoid(score_logit(scaled));
  }

  OpcodeVocabulary vocabulary_;
  Mlp model_;
  TrainingReport report_;
  bool frozen_ = false;
};

inline double predict_malicious(const SurrogateClassifier& classifier,
                                const OpcodeFrequencyVector& v) {
  return classifier.predict_malicious(v);
}

/// Trains, calibrates, and freezes a surrogate classifier on a labeled
/// corpus. `split` is the training fraction of each class (stratified); the
/// remainder is held out for the accuracy/FPR report.
inline SurrogateClassifier train_classifier(
    const Corpus& corpus, double split,
    const ClassifierHyperparams& hyperparams = {}) {
  if (!(split > 0.0 && split < 1.0))
    throw ParameterError("split must be in (0, 1)");
  if (hyperparams.epochs <= 0 || hyperparams.learning_rate <= 0.0)
    throw ParameterError("epochs and learning rate must be positive");
  const int n = corpus.vocabulary.size();

  std::vector<std::size_t> benign_idx, malicious_idx;
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    (corpus.samples[i].label == SampleLabel::kBenign ? benign_idx
                                                     : malicious_idx)
        .push_back(i);
  }
  if (benign_idx.empty() || malicious_idx.empty())
    throw ParameterError("corpus must contain both classes");

  Rng rng(derive_seed(hyperparams.seed, "classifier-split"));
  auto shuffle = [&](std::vector<std::size_t>& v) {
    for (std::size_t i = v.size(); i-- > 1;)
      std::swap(v[i], v[rng.uniform_index(i + 1)]);
  };
  shuffle(benign_idx);
  shuffle(malicious_idx);

  std::vector<std::size_t> train_idx, held_idx;
  for (const auto* cls : {&benign_idx, &malicious_idx}) {
    auto n_train = static_cast<std::size_t>(
        std::lround(split * static_cast<double>(cls->size())));
    n_train = std::clamp<std::size_t>(n_train, 1, cls->size() - 1);
    train_idx.insert(train_idx.end(), cls->begin(), cls->begin() + n_train);
    held_idx.insert(held_idx.end(), cls->begin() + n_train, cls->end());
  }

  MlpSpec spec;
  spec.input = n;
  if (hyperparams.hidden_units > 0)
    spec.hidden.push_back(hyperparams.hidden_units);
  spec.output = 1;
  SurrogateClassifier classifier(
      corpus.vocabulary,
      Mlp::initialize(spec, derive_seed(hyperparams.seed, "classifier-init"),
                      5.0 / 3.0, 0.01));

  std::vector<std::vector<double>> features(train_idx.size());
  std::vector<double> targets(train_idx.size());
  for (std::size_t s = 0; s < train_idx.size(); ++s) {
    const auto& sample = corpus.samples[train_idx[s]];
    sample.vector.validate(n);
    features[s].resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      features[s][static_cast<std::size_t>(i)] =
          static_cast<double>(sample.vector.counts[static_cast<std::size_t>(i)]) /
          classifier.input_scale();
    targets[s] = sample.label == SampleLabel::kMalicious ? 1.0 : 0.0;
  }

  Mlp model = classifier.model();
  AdamOptimizer adam(model.param_count(),
                     {.learning_rate = hyperparams.learning_rate,
                      .weight_decay = hyperparams.weight_decay});
  std::vector<double> grad(model.param_count());
  const double inv_batch = 1.0 / static_cast<double>(features.size());
  for (int epoch = 0; epoch < hyperparams.epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t s = 0; s < features.size(); ++s) {
      MlpCache cache;
      double logit = 0.0;
      model.forward(features[s], {&logit, 1}, &cache);
      const double dlogit = (sigmoid(logit) - targets[s]) * inv_batch;
      model.backward(cache, {&dlogit, 1}, grad);
    }
    adam.step(model.params(), grad);
  }

  if (hyperparams.target_logit > 0.0) {
    std::vector<double> magnitudes(features.size());
    for (std::size_t s = 0; s < features.size(); ++s) {
      double logit = 0.0;
      model.forward(features[s], {&logit, 1});
      magnitudes[s] = std::abs(logit);
    }
    std::nth_element(magnitudes.begin(),
                     magnitudes.begin() + magnitudes.size() / 2,
                     magnitudes.end());
    const double median = magnitudes[magnitudes.size() / 2];
    if (median > 1e-9) {
      // scaling the final affine layer scales every logit linearly
      const double factor = hyperparams.target_logit / median;
      const std::size_t last_layer =
          static_cast<std::size_t>(spec.output) *
          (spec.hidden.empty()
               ? static_cast<std::size_t>(spec.input)
               : static_cast<std::size_t>(spec.hidden.back())) +
          static_cast<std::size_t>(spec.output);
      for (std::size_t i = model.param_count() - last_layer;
           i < model.param_count(); ++i)
        model.params()[i] *= factor;
    }
  }

  classifier.set_parameters(model.params());

  TrainingReport report;
  report.train_samples = static_cast<int>(train_idx.size());
  report.held_out_samples = static_cast<int>(held_idx.size());
  int correct = 0, benign_total = 0, false_positives = 0;
  for (std::size_t idx : held_idx) {
    const auto& sample = corpus.samples[idx];
    std::vector<double> scaled(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      scaled[static_cast<std::size_t>(i)] =
          static_cast<double>(sample.vector.counts[static_cast<std::size_t>(i)]) /
          classifier.input_scale();
    const bool predicted_malicious = classifier.score_logit(scaled) > 0.0;
    const bool is_malicious = sample.label == SampleLabel::kMalicious;
    if (predicted_malicious == is_malicious) ++correct;
    if (!is_malicious) {
      ++benign_total;
      if (predicted_malicious) ++false_positives;
    }
  }
  report.held_out_accuracy =
      static_cast<double>(correct) / static_cast<double>(held_idx.size());
  report.held_out_fpr =
      benign_total == 0
          ? 0.0
          : static_cast<double>(false_positives) /
                static_cast<double>(benign_total);
  classifier.set_training_report(report);

  if (report.held_out_accuracy < hyperparams.accuracy_floor)
    throw TrainingError(
        "classifier held-out accuracy " +
        format_double(report.held_out_accuracy) + " below floor " +
        format_double(hyperparams.accuracy_floor) +
        " (corpus classes are not separable enough)");

  classifier.freeze();
  return classifier;
}

inline void save_classifier(const SurrogateClassifier& classifier,
                            const std::string& path) {
  write_text_file(path, classifier.serialize());
}

inline SurrogateClassifier load_classifier(const std::string& path) {
  return SurrogateClassifier::deserialize(read_text_file(path));
}

}  // namespace drldo

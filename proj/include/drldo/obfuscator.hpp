#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "drldo/classifier.hpp"
#include "drldo/corpus.hpp"
#include "drldo/errors.hpp"
#include "drldo/rng.hpp"
#include "drldo/text_io.hpp"

namespace drldo {

/// A metamorphic-style variant produced by strictly additive junk insertion,
/// screened to evade the frozen classifier.
struct ObfuscatedVariant {
  std::string variant_id;
  std::string original_id;
  OpcodeFrequencyVector original_vector;
  OpcodeFrequencyVector obfuscated_vector;
  std::vector<int> additions;  // obfuscated - original, elementwise >= 0
  double p_malicious_after = 0.0;

  void validate(const SurrogateClassifier& classifier) const {
    const int n = classifier.vocabulary().size();
    original_vector.validate(n);
    obfuscated_vector.validate(n);
    if (static_cast<int>(additions.size()) != n)
      throw ParameterError("variant additions length mismatch");
    for (int i = 0; i < n; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      if (additions[idx] < 0)
        throw ParameterError("variant has a negative addition");
      if (obfuscated_vector.counts[idx] !=
          original_vector.counts[idx] + additions[idx])
        throw ParameterError("variant additions do not match vectors");
    }
    if (!(p_malicious_after < 0.5))
      throw ParameterError("variant does not evade the classifier");
  }

  bool operator==(const ObfuscatedVariant& other) const = default;
};

struct ObfuscationOptions {
  long long budget = 0;    // max total additions across all opcodes
  double epsilon = 0.5;    // probability of an exploratory junk target per addition
  std::uint64_t seed = 0;
};

/// Searches for an evading variant of a detected malicious sample by greedy
/// randomized junk insertion: each step adds +1 to the opcode whose increment
/// most reduces P_malicious, with epsilon-random exploration over the best
/// few candidates so the junk spreads and variants differ, stopping at
/// P_malicious < 0.5 or budget exhaustion. Returns nullopt when the budget
/// runs out without evasion; such candidates are discarded.
inline std::optional<ObfuscatedVariant> obfuscate(
    const SurrogateClassifier& classifier, const LabeledSample& sample,
    const ObfuscationOptions& options) {
  if (sample.label != SampleLabel::kMalicious)
    throw ParameterError("obfuscate: sample must be malicious");
  const int n = classifier.vocabulary().size();
  sample.vector.validate(n);
  const double p_initial = classifier.predict_malicious(sample.vector);
  if (!(p_initial > 0.5))
    throw ParameterError(
        "obfuscate: sample is not detected (P_malicious <= 0.5)");
  if (options.budget < 0) throw ParameterError("obfuscate: negative budget");

  Rng rng(options.seed);
  OpcodeFrequencyVector current = sample.vector;
  std::vector<int> additions(static_cast<std::size_t>(n), 0);
  double p = p_initial;

  const std::size_t explore_pool =
      static_cast<std::size_t>(std::max(4, n / 16));
  std::vector<std::pair<double, int>> candidates;
  for (long long used = 0; used < options.budget && p >= 0.5; ++used) {
    candidates.clear();
    for (int i = 0; i < n; ++i) {
      auto& slot = current.counts[static_cast<std::size_t>(i)];
      if (slot >= kMaxOpcodeCount) continue;
      ++slot;
      const double candidate_p = classifier.predict_malicious(current);
      --slot;
      candidates.emplace_back(candidate_p, i);
    }
    if (candidates.empty()) break;  // every opcode is at the count cap
    std::sort(candidates.begin(), candidates.end());
    int target = candidates.front().second;
    if (rng.uniform() < options.epsilon) {
      const auto pool = std::min(candidates.size(), explore_pool);
      target = candidates[rng.uniform_index(pool)].second;
    }
    ++current.counts[static_cast<std::size_t>(target)];
    ++additions[static_cast<std::size_t>(target)];
    p = classifier.predict_malicious(current);
  }

  if (!(p < 0.5)) return std::nullopt;

  ObfuscatedVariant variant;
  variant.original_id = sample.sample_id;
  variant.original_vector = sample.vector;
  variant.obfuscated_vector = std::move(current);
  variant.additions = std::move(additions);
  variant.p_malicious_after = p;
  return variant;
}

/// The environment's sampling pool: accepted variants plus the metadata
/// dictionary mapping each original malware id to its un-obfuscated vector.
struct ObfuscationRepository {
  std::string classifier_fingerprint;
  std::uint64_t seed = 0;
  std::vector<ObfuscatedVariant> variants;
  std::map<std::string, OpcodeFrequencyVector> originals;

  const OpcodeFrequencyVector& original_of(
      const ObfuscatedVariant& variant) const {
    auto it = originals.find(variant.original_id);
    if (it == originals.end())
      throw ParameterError("repository: unresolved original id " +
                           variant.original_id);
    return it->second;
  }

  bool operator==(const ObfuscationRepository& other) const = default;
};

/// Obfuscates every detected malicious corpus sample `variants_per_malware`
/// times (independent seeds) and keeps the evading results. Malicious samples
/// the classifier already misses are skipped; rejected searches are dropped.
inline ObfuscationRepository build_repository(
    const SurrogateClassifier& classifier, const Corpus& corpus,
    int variants_per_malware, std::uint64_t seed, long long budget = 0,
    double epsilon = 0.5) {
  if (variants_per_malware <= 0)
    throw ParameterError("variants_per_malware must be positive");
  if (budget <= 0) budget = 50LL * classifier.vocabulary().size();

  ObfuscationRepository repo;
  repo.classifier_fingerprint = classifier.fingerprint();
  repo.seed = seed;
  std::uint64_t sample_index = 0;
  for (const auto& sample : corpus.samples) {
    if (sample.label != SampleLabel::kMalicious) continue;
    ++sample_index;
    if (!(classifier.predict_malicious(sample.vector) > 0.5)) continue;
    for (int v = 0; v < variants_per_malware; ++v) {
      ObfuscationOptions options;
      options.budget = budget;
      options.epsilon = epsilon;
      options.seed = derive_seed(seed, "obfuscate",
                                 sample_index * 1000003ULL +
                                     static_cast<std::uint64_t>(v));
      auto variant = obfuscate(classifier, sample, options);
      if (!variant) continue;
      variant->variant_id = sample.sample_id + "/v" + std::to_string(v);
      repo.originals.emplace(sample.sample_id, sample.vector);
      repo.variants.push_back(std::move(*variant));
    }
  }
  if (repo.variants.empty())
    throw TrainingError(
        "repository is empty: no obfuscation evaded the classifier");
  return repo;
}

inline std::string serialize_repository(const ObfuscationRepository& repo) {
  std::string out;
  out += "drldo-repository v1\n";
  out += "classifier " + repo.classifier_fingerprint + "\n";
  out += "seed " + std::to_string(repo.seed) + "\n";
  out += "originals " + std::to_string(repo.originals.size()) + "\n";
  for (const auto& [id, vector] : repo.originals) {
    out += "original " + id;
    for (int c : vector.counts) out += " " + std::to_string(c);
    out += "\n";
  }
  out += "variants " + std::to_string(repo.variants.size()) + "\n";
  for (const auto& v : repo.variants) {
    out += "variant " + v.variant_id + " " + v.original_id + " " +
           format_double(v.p_malicious_after);
    for (int a : v.additions) out += " " + std::to_string(a);
    out += "\n";
  }
  return out;
}

inline void save_repository(const ObfuscationRepository& repo,
                            const std::string& path) {
  write_text_file(path, serialize_repository(repo));
}

inline ObfuscationRepository parse_repository(const std::string& text,
                                              int vocab_size) {
  const auto lines = split_lines(text);
  std::size_t at = 0;
  auto next_fields = [&](const std::string& key) {
    if (at >= lines.size())
      throw MalformedFileError("repository file: unexpected end of file");
    auto fields = split_fields(lines[at++]);
    if (fields.empty() || fields[0] != key)
      throw MalformedFileError("repository file: expected '" + key + "'");
    return fields;
  };
  if (at >= lines.size() || lines[at++] != "drldo-repository v1")
    throw MalformedFileError("repository file: bad or missing header");

  ObfuscationRepository repo;
  auto classifier_fields = next_fields("classifier");
  if (classifier_fields.size() != 2)
    throw MalformedFileError("repository file: bad classifier record");
  repo.classifier_fingerprint = classifier_fields[1];
  auto seed_fields = next_fields("seed");
  if (seed_fields.size() != 2)
    throw MalformedFileError("repository file: bad seed record");
  repo.seed = static_cast<std::uint64_t>(
      std::strtoull(seed_fields[1].c_str(), nullptr, 10));

  const auto vocab = static_cast<std::size_t>(vocab_size);
  auto originals_fields = next_fields("originals");
  const auto n_originals =
      static_cast<std::size_t>(parse_int(originals_fields[1], "originals"));
  for (std::size_t i = 0; i < n_originals; ++i) {
    auto fields = next_fields("original");
    if (fields.size() != vocab + 2)
      throw MalformedFileError("repository file: bad original record");
    OpcodeFrequencyVector vector;
    vector.counts.reserve(vocab);
    for (std::size_t k = 2; k < fields.size(); ++k)
      vector.counts.push_back(
          static_cast<int>(parse_int(fields[k], "original count")));
    vector.validate(vocab_size);
    repo.originals.emplace(fields[1], std::move(vector));
  }

  auto variants_fields = next_fields("variants");
  const auto n_variants =
      static_cast<std::size_t>(parse_int(variants_fields[1], "variants"));
  repo.variants.reserve(n_variants);
  for (std::size_t i = 0; i < n_variants; ++i) {
    auto fields = next_fields("variant");
    if (fields.size() != vocab + 4)
      throw MalformedFileError("repository file: bad variant record");
    ObfuscatedVariant v;
    v.variant_id = fields[1];
    v.original_id = fields[2];
    v.p_malicious_after = parse_double(fields[3], "variant p");
    v.additions.reserve(vocab);
    for (std::size_t k = 4; k < fields.size(); ++k)
      v.additions.push_back(
          static_cast<int>(parse_int(fields[k], "variant addition")));
    auto it = repo.originals.find(v.original_id);
    if (it == repo.originals.end())
      throw MalformedFileError("repository file: unresolved original id " +
                               v.original_id);
    v.original_vector = it->second;
    v.obfuscated_vector = v.original_vector;
    for (std::size_t k = 0; k < vocab; ++k) {
      if (v.additions[k] < 0)
        throw MalformedFileError("repository file: negative addition");
      v.obfuscated_vector.counts[k] += v.additions[k];
    }
    v.obfuscated_vector.validate(vocab_size);
    repo.variants.push_back(std::move(v));
  }
  if (at != lines.size())
    throw MalformedFileError("repository file: trailing content");
  return repo;
}

inline ObfuscationRepository load_repository(const std::string& path,
                                             int vocab_size) {
  return parse_repository(read_text_file(path), vocab_size);
}

}  // namespace drldo

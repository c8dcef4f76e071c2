#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "drldo/errors.hpp"
#include "drldo/rng.hpp"
#include "drldo/stats.hpp"
#include "drldo/text_io.hpp"

namespace drldo {

/// Permissible opcode count range.
inline constexpr int kMaxOpcodeCount = 10000;
/// Upper bound on vocabulary size (full-scale opcode set).
inline constexpr int kMaxVocabularySize = 1612;

/// The ordered set of opcode mnemonics a feature vector is indexed by.
class OpcodeVocabulary {
 public:
  OpcodeVocabulary() = default;

  explicit OpcodeVocabulary(std::vector<std::string> names)
      : names_(std::move(names)) {
    if (names_.empty() || names_.size() > kMaxVocabularySize)
      throw ParameterError("vocabulary size must be in [1, 1612]");
    std::unordered_set<std::string> seen;
    for (const auto& n : names_) {
      if (n.empty() || n.find_first_of(" \t\n") != std::string::npos)
        throw ParameterError("opcode names must be non-empty, no whitespace");
      if (!seen.insert(n).second)
        throw ParameterError("duplicate opcode name: " + n);
    }
  }

  /// A vocabulary of `size` mnemonics: common x86 names first, then opNNN.
  static OpcodeVocabulary synthetic(int size) {
    static constexpr std::array<const char*, 64> kCommon = {
        "mov",   "push",  "pop",   "call",  "ret",   "lea",   "add",
        "sub",   "cmp",   "jmp",   "je",    "jne",   "test",  "xor",
        "and",   "or",    "nop",   "inc",   "dec",   "imul",  "shl",
        "shr",   "jbe",   "ja",    "jb",    "jae",   "jl",    "jle",
        "jg",    "jge",   "movzx", "movsx", "int3",  "leave", "not",
        "neg",   "sbb",   "adc",   "xchg",  "cdq",   "stosb", "lodsb",
        "scasb", "movsb", "rep",   "loop",  "jo",    "jno",   "js",
        "jns",   "jp",    "jnp",   "mul",   "div",   "idiv",  "sar",
        "rol",   "ror",   "rcl",   "rcr",   "bt",    "bts",   "btr",
        "hlt"};
    if (size < 1 || size > kMaxVocabularySize)
      throw ParameterError("vocabulary size must be in [1, 1612]");
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i) {
      if (i < static_cast<int>(kCommon.size())) {
        names.emplace_back(kCommon[static_cast<std::size_t>(i)]);
      } else {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "op%04d", i);
        names.emplace_back(buf);
      }
    }
    return OpcodeVocabulary(std::move(names));
  }

  int size() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }

  bool operator==(const OpcodeVocabulary& other) const = default;

 private:
  std::vector<std::string> names_;
};

/// Whole-number opcode occurrence counts; the RL state and classifier input.
struct OpcodeFrequencyVector {
  std::vector<int> counts;

  int size() const { return static_cast<int>(counts.size()); }

  void validate(int expected_size) const {
    if (size() != expected_size)
      throw ParameterError("frequency vector length " + std::to_string(size()) +
                           " does not match vocabulary size " +
                           std::to_string(expected_size));
    for (int c : counts)
      if (c < 0 || c > kMaxOpcodeCount)
        throw ParameterError("opcode count out of [0, 10000]: " +
                             std::to_string(c));
  }

  bool operator==(const OpcodeFrequencyVector& other) const = default;
};

enum class SampleLabel { kBenign, kMalicious };

inline const char* to_string(SampleLabel label) {
  return label == SampleLabel::kBenign ? "benign" : "malicious";
}

struct LabeledSample {
  OpcodeFrequencyVector vector;
  SampleLabel label = SampleLabel::kBenign;
  std::string sample_id;

  bool operator==(const LabeledSample& other) const = default;
};

/// Class-conditional per-opcode Poisson rates used by the generator.
struct GeneratorParams {
  std::vector<double> rate_benign;
  std::vector<double> rate_malicious;
  double separation = 0.0;

  bool operator==(const GeneratorParams& other) const = default;
};

struct Corpus {
  OpcodeVocabulary vocabulary;
  std::vector<LabeledSample> samples;
  std::uint64_t seed = 0;
  GeneratorParams params;

  int count(SampleLabel label) const {
    return static_cast<int>(
        std::count_if(samples.begin(), samples.end(),
                      [&](const LabeledSample& s) { return s.label == label; }));
  }

  bool operator==(const Corpus& other) const = default;
};

/// Pearson correlation between two frequency vectors (see stats.hpp for the
/// R_ij = C_ij / sqrt(C_ii C_jj) definition).
inline double pearson_similarity(const OpcodeFrequencyVector& a,
                                 const OpcodeFrequencyVector& b) {
  std::vector<double> da(a.counts.begin(), a.counts.end());
  std::vector<double> db(b.counts.begin(), b.counts.end());
  return pearson(da, db);
}

/// Builds the two class rate profiles. A `separation` fraction of opcodes is
/// discriminative; a small subset of those carries a strong rate shift and the
/// rest a weak one, split evenly between malicious-elevated and
/// malicious-depressed directions.
inline GeneratorParams make_generator_params(const OpcodeVocabulary& vocab,
                                             double separation,
                                             std::uint64_t seed) {
  if (!(separation > 0.0 && separation <= 1.0))
    throw ParameterError("separation must be in (0, 1]");
  const int n = vocab.size();
  Rng rng(derive_seed(seed, "corpus-profile"));

  GeneratorParams params;
  params.separation = separation;
  params.rate_benign.resize(static_cast<std::size_t>(n));
  params.rate_malicious.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    params.rate_benign[static_cast<std::size_t>(i)] = rng.uniform(15.0, 60.0);
  params.rate_malicious = params.rate_benign;

  const int discriminative =
      std::max(1, static_cast<int>(std::lround(separation * n)));
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (int i = n - 1; i > 0; --i)
    std::swap(order[static_cast<std::size_t>(i)],
              order[rng.uniform_index(static_cast<std::uint64_t>(i) + 1)]);

  // A balanced block of strongly shifted opcodes plus weakly shifted ones on
  // the rest. Strong benign markers are common in benign files and nearly
  // absent in malware, which makes junk insertion on them plausible and
  // bounds how far a de-obfuscator can dig below the original counts.
  const int strong = std::min(
      discriminative,
      2 * std::max(1, static_cast<int>(std::lround(discriminative / 16.0))));
  for (int k = 0; k < discriminative; ++k) {
    const auto dim = static_cast<std::size_t>(order[static_cast<std::size_t>(k)]);
    if (k < strong) {
      if (k % 2 == 0) {
        params.rate_malicious[dim] =
            params.rate_benign[dim] + rng.uniform(12.0, 16.0);
      } else {
        params.rate_benign[dim] = rng.uniform(10.0, 14.0);
        params.rate_malicious[dim] = rng.uniform(0.5, 2.0);
      }
    } else {
      const double delta = rng.uniform(1.5, 3.5);
      if (k % 2 == 0) {
        params.rate_malicious[dim] = params.rate_benign[dim] + delta;
      } else {
        params.rate_malicious[dim] =
            std::max(params.rate_benign[dim] - delta, 1.0);
      }
    }
  }
  return params;
}

/// Draws a corpus from explicit class profiles. Exposed separately so tests
/// can force degenerate (inseparable) profiles.
inline Corpus generate_corpus_from_params(const OpcodeVocabulary& vocab,
                                          const GeneratorParams& params,
                                          int n_benign, int n_malicious,
                                          std::uint64_t seed) {
  if (n_benign <= 0 || n_malicious <= 0)
    throw ParameterError("sample counts must be positive");
  const auto n = static_cast<std::size_t>(vocab.size());
  if (params.rate_benign.size() != n || params.rate_malicious.size() != n)
    throw ParameterError("generator params do not match vocabulary size");

  Corpus corpus;
  corpus.vocabulary = vocab;
  corpus.seed = seed;
  corpus.params = params;
  corpus.samples.reserve(static_cast<std::size_t>(n_benign + n_malicious));

  auto draw = [&](SampleLabel label, int count, const char* prefix,
                  const std::vector<double>& rates, std::uint64_t stream) {
    Rng rng(stream);
    for (int s = 0; s < count; ++s) {
      LabeledSample sample;
      sample.label = label;
      char buf[24];
      std::snprintf(buf, sizeof(buf), "%s%04d", prefix, s);
      sample.sample_id = buf;
      sample.vector.counts.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const long c = rng.poisson(rates[i]);
        sample.vector.counts[i] =
            static_cast<int>(std::min<long>(c, kMaxOpcodeCount));
      }
      corpus.samples.push_back(std::move(sample));
    }
  };
  draw(SampleLabel::kBenign, n_benign, "b", params.rate_benign,
       derive_seed(seed, "corpus-benign"));
  draw(SampleLabel::kMalicious, n_malicious, "m", params.rate_malicious,
       derive_seed(seed, "corpus-malicious"));
  return corpus;
}

/// Generates a reproducible synthetic corpus whose classes are separable to a
/// degree controlled by `separation` (the fraction of opcodes whose rates
/// differ between classes).
inline Corpus generate_corpus(const OpcodeVocabulary& vocab, int n_benign,
                              int n_malicious, std::uint64_t seed,
                              double separation) {
  if (vocab.size() < 1) throw ParameterError("vocabulary must be non-empty");
  const GeneratorParams params =
      make_generator_params(vocab, separation, seed);
  return generate_corpus_from_params(vocab, params, n_benign, n_malicious,
                                     seed);
}

inline std::string serialize_corpus(const Corpus& corpus) {
  if (corpus.count(SampleLabel::kBenign) == 0 ||
      corpus.count(SampleLabel::kMalicious) == 0)
    throw ParameterError("corpus must contain both classes");
  std::string out;
  out += "drldo-corpus v1\n";
  out += "vocab " + std::to_string(corpus.vocabulary.size());
  for (const auto& name : corpus.vocabulary.names()) out += " " + name;
  out += "\nseed " + std::to_string(corpus.seed);
  out += "\nseparation " + format_double(corpus.params.separation);
  out += "\nrates-benign";
  for (double r : corpus.params.rate_benign) out += " " + format_double(r);
  out += "\nrates-malicious";
  for (double r : corpus.params.rate_malicious) out += " " + format_double(r);
  out += "\nsamples " + std::to_string(corpus.samples.size()) + "\n";
  for (const auto& s : corpus.samples) {
    out += "sample " + s.sample_id + " " + to_string(s.label);
    for (int c : s.vector.counts) out += " " + std::to_string(c);
    out += "\n";
  }
  return out;
}

inline void save_corpus(const Corpus& corpus, const std::string& path) {
  write_text_file(path, serialize_corpus(corpus));
}

inline Corpus parse_corpus(const std::string& text) {
  const auto lines = split_lines(text);
  std::size_t at = 0;
  auto next_line = [&]() -> const std::string& {
    if (at >= lines.size())
      throw MalformedFileError("corpus file: unexpected end of file");
    return lines[at++];
  };
  auto expect_key = [&](const std::string& key) {
    auto fields = split_fields(next_line());
    if (fields.empty() || fields[0] != key)
      throw MalformedFileError("corpus file: expected '" + key + "' record");
    return fields;
  };

  if (next_line() != "drldo-corpus v1")
    throw MalformedFileError("corpus file: bad or missing header");

  Corpus corpus;
  auto vocab_fields = expect_key("vocab");
  const auto vocab_size =
      static_cast<std::size_t>(parse_int(vocab_fields[1], "corpus vocab"));
  if (vocab_fields.size() != vocab_size + 2)
    throw MalformedFileError("corpus file: vocab name count mismatch");
  corpus.vocabulary = OpcodeVocabulary(
      {vocab_fields.begin() + 2, vocab_fields.end()});

  auto seed_fields = expect_key("seed");
  if (seed_fields.size() != 2)
    throw MalformedFileError("corpus file: bad seed record");
  corpus.seed = static_cast<std::uint64_t>(
      std::strtoull(seed_fields[1].c_str(), nullptr, 10));

  auto sep_fields = expect_key("separation");
  if (sep_fields.size() != 2)
    throw MalformedFileError("corpus file: bad separation record");
  corpus.params.separation = parse_double(sep_fields[1], "corpus separation");

  auto parse_rates = [&](const char* key, std::vector<double>& rates) {
    auto fields = expect_key(key);
    if (fields.size() != vocab_size + 1)
      throw MalformedFileError(std::string("corpus file: bad ") + key);
    rates.reserve(vocab_size);
    for (std::size_t i = 1; i < fields.size(); ++i)
      rates.push_back(parse_double(fields[i], key));
  };
  parse_rates("rates-benign", corpus.params.rate_benign);
  parse_rates("rates-malicious", corpus.params.rate_malicious);

  auto count_fields = expect_key("samples");
  if (count_fields.size() != 2)
    throw MalformedFileError("corpus file: bad samples record");
  const auto n_samples =
      static_cast<std::size_t>(parse_int(count_fields[1], "corpus samples"));
  corpus.samples.reserve(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s) {
    auto fields = split_fields(next_line());
    if (fields.size() != vocab_size + 3 || fields[0] != "sample")
      throw MalformedFileError("corpus file: bad sample record " +
                               std::to_string(s));
    LabeledSample sample;
    sample.sample_id = fields[1];
    if (fields[2] == "benign") {
      sample.label = SampleLabel::kBenign;
    } else if (fields[2] == "malicious") {
      sample.label = SampleLabel::kMalicious;
    } else {
      throw MalformedFileError("corpus file: bad label '" + fields[2] + "'");
    }
    sample.vector.counts.reserve(vocab_size);
    for (std::size_t i = 3; i < fields.size(); ++i)
      sample.vector.counts.push_back(
          static_cast<int>(parse_int(fields[i], "sample count")));
    sample.vector.validate(static_cast<int>(vocab_size));
    corpus.samples.push_back(std::move(sample));
  }
  if (at != lines.size())
    throw MalformedFileError("corpus file: trailing content");
  return corpus;
}

inline Corpus load_corpus(const std::string& path) {
  return parse_corpus(read_text_file(path));
}

}  // namespace drldo

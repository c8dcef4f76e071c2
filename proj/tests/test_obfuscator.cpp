#include "drldo/obfuscator.hpp"

#include <gtest/gtest.h>

#include "drldo/errors.hpp"
#include "test_support.hpp"

namespace drldo {
namespace {

const LabeledSample& first_detected_malicious() {
  const auto& f = testing::small_fixture();
  for (const auto& sample : f.corpus.samples) {
    if (sample.label == SampleLabel::kMalicious &&
        f.classifier.predict_malicious(sample.vector) > 0.5)
      return sample;
  }
  throw std::logic_error("fixture has no detected malicious sample");
}

TEST(Obfuscate, ProducesStrictlyAdditiveEvadingVariant) {
  const auto& f = testing::small_fixture();
  const auto& sample = first_detected_malicious();
  ObfuscationOptions options;
  options.budget = 50LL * f.classifier.vocabulary().size();
  options.seed = 42;
  const auto variant = obfuscate(f.classifier, sample, options);
  ASSERT_TRUE(variant.has_value());
  variant->validate(f.classifier);
  EXPECT_LT(variant->p_malicious_after, 0.5);
  EXPECT_LT(f.classifier.predict_malicious(variant->obfuscated_vector), 0.5);
  for (std::size_t i = 0; i < variant->additions.size(); ++i) {
    EXPECT_GE(variant->obfuscated_vector.counts[i],
              variant->original_vector.counts[i]);
  }
  EXPECT_EQ(variant->original_vector, sample.vector);
}

TEST(Obfuscate, ZeroBudgetIsRejection) {
  const auto& f = testing::small_fixture();
  ObfuscationOptions options;
  options.budget = 0;
  EXPECT_FALSE(obfuscate(f.classifier, first_detected_malicious(), options)
                   .has_value());
}

TEST(Obfuscate, BenignOrUndetectedInputIsAParameterError) {
  const auto& f = testing::small_fixture();
  ObfuscationOptions options;
  options.budget = 10;
  for (const auto& sample : f.corpus.samples) {
    if (sample.label == SampleLabel::kBenign) {
      EXPECT_THROW(obfuscate(f.classifier, sample, options), ParameterError);
      break;
    }
  }
  LabeledSample undetected = first_detected_malicious();
  undetected.vector.counts.assign(undetected.vector.counts.size(), 0);
  if (!(f.classifier.predict_malicious(undetected.vector) > 0.5))
    EXPECT_THROW(obfuscate(f.classifier, undetected, options), ParameterError);
}

TEST(Obfuscate, DeterministicPerSeed) {
  const auto& f = testing::small_fixture();
  const auto& sample = first_detected_malicious();
  ObfuscationOptions options;
  options.budget = 50LL * f.classifier.vocabulary().size();
  options.seed = 7;
  const auto a = obfuscate(f.classifier, sample, options);
  const auto b = obfuscate(f.classifier, sample, options);
  ASSERT_TRUE(a.has_value());
  EXPECT_EQ(*a, *b);
}

TEST(BuildRepository, EveryStoredVariantEvades) {
  const auto& f = testing::small_fixture();
  ASSERT_FALSE(f.repository.variants.empty());
  for (const auto& variant : f.repository.variants) {
    variant.validate(f.classifier);
    EXPECT_LT(f.classifier.predict_malicious(variant.obfuscated_vector), 0.5);
  }
  EXPECT_EQ(f.repository.classifier_fingerprint, f.classifier.fingerprint());
}

TEST(BuildRepository, MetadataJoinReconstructsOriginals) {
  const auto& f = testing::small_fixture();
  for (const auto& variant : f.repository.variants) {
    const auto& original = f.repository.original_of(variant);
    EXPECT_EQ(original, variant.original_vector);
    OpcodeFrequencyVector reconstructed = variant.obfuscated_vector;
    for (std::size_t i = 0; i < reconstructed.counts.size(); ++i)
      reconstructed.counts[i] -= variant.additions[i];
    EXPECT_EQ(reconstructed, original);
    // the original is a corpus malware sample the classifier detects
    EXPECT_GT(f.classifier.predict_malicious(original), 0.5);
  }
}

TEST(BuildRepository, DeterministicPerSeed) {
  const auto& f = testing::small_fixture();
  const auto again = build_repository(f.classifier, f.corpus, 2, 21);
  EXPECT_EQ(again, f.repository);
}

TEST(BuildRepository, ParameterAndEmptyErrors) {
  const auto& f = testing::small_fixture();
  EXPECT_THROW(build_repository(f.classifier, f.corpus, 0, 1), ParameterError);
  // a one-addition budget cannot evade, so every search is discarded
  EXPECT_THROW(build_repository(f.classifier, f.corpus, 1, 1, /*budget=*/1),
               TrainingError);
}

TEST(RepositoryIo, RoundTripIsLossless) {
  const auto& f = testing::small_fixture();
  const auto path = testing::temp_dir("repository-io") + "/repository.txt";
  save_repository(f.repository, path);
  const auto loaded = load_repository(path, f.classifier.vocabulary().size());
  EXPECT_EQ(loaded, f.repository);
}

TEST(RepositoryIo, HeaderCarriesFingerprintAndSeed) {
  const auto& f = testing::small_fixture();
  const auto text = serialize_repository(f.repository);
  const auto lines = split_lines(text);
  ASSERT_GE(lines.size(), 3u);
  EXPECT_EQ(lines[0], "drldo-repository v1");
  EXPECT_EQ(lines[1], "classifier " + f.classifier.fingerprint());
  EXPECT_EQ(lines[2], "seed 21");
}

// the repository layout is an external interface; this freezes it
TEST(RepositoryIo, GoldenFileFormat) {
  ObfuscationRepository repo;
  repo.classifier_fingerprint = "00deadbeef00cafe";
  repo.seed = 99;
  repo.originals.emplace("m0000", OpcodeFrequencyVector{{5, 0, 7}});
  ObfuscatedVariant v;
  v.variant_id = "m0000/v0";
  v.original_id = "m0000";
  v.original_vector = {{5, 0, 7}};
  v.additions = {0, 12, 3};
  v.obfuscated_vector = {{5, 12, 10}};
  v.p_malicious_after = 0.25;
  repo.variants.push_back(v);
  const std::string expected =
      "drldo-repository v1\n"
      "classifier 00deadbeef00cafe\n"
      "seed 99\n"
      "originals 1\n"
      "original m0000 5 0 7\n"
      "variants 1\n"
      "variant m0000/v0 m0000 0.25 0 12 3\n";
  EXPECT_EQ(serialize_repository(repo), expected);
  EXPECT_EQ(parse_repository(expected, 3), repo);
}

TEST(RepositoryIo, MalformedFilesAreRejected) {
  const auto& f = testing::small_fixture();
  auto text = serialize_repository(f.repository);
  text.resize(text.size() / 3);
  EXPECT_THROW(parse_repository(text, f.classifier.vocabulary().size()),
               MalformedFileError);
  EXPECT_THROW(parse_repository("nope\n", 4), MalformedFileError);
}

}  // namespace
}  // namespace drldo

#include "drldo/corpus.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "drldo/errors.hpp"
#include "test_support.hpp"

namespace drldo {
namespace {

TEST(Vocabulary, SyntheticNamesAreUniqueAndSized) {
  const auto vocab = OpcodeVocabulary::synthetic(100);
  EXPECT_EQ(vocab.size(), 100);
  std::set<std::string> unique(vocab.names().begin(), vocab.names().end());
  EXPECT_EQ(unique.size(), 100u);
  EXPECT_EQ(vocab.names()[0], "mov");
  EXPECT_THROW(OpcodeVocabulary::synthetic(0), ParameterError);
  EXPECT_THROW(OpcodeVocabulary::synthetic(kMaxVocabularySize + 1),
               ParameterError);
  EXPECT_THROW(OpcodeVocabulary({"mov", "mov"}), ParameterError);
}

TEST(GenerateCorpus, DeskScaleInvariants) {
  const auto vocab = OpcodeVocabulary::synthetic(64);
  const auto corpus = generate_corpus(vocab, 500, 500, 7, 0.8);
  EXPECT_EQ(corpus.samples.size(), 1000u);
  EXPECT_EQ(corpus.count(SampleLabel::kBenign), 500);
  EXPECT_EQ(corpus.count(SampleLabel::kMalicious), 500);
  for (const auto& sample : corpus.samples) {
    ASSERT_EQ(sample.vector.size(), 64);
    for (int c : sample.vector.counts) {
      EXPECT_GE(c, 0);
      EXPECT_LE(c, kMaxOpcodeCount);
    }
  }
}

TEST(GenerateCorpus, SingleOpcodeClassesHaveDifferentRates) {
  const auto vocab = OpcodeVocabulary::synthetic(1);
  const auto corpus = generate_corpus(vocab, 1, 1, 0, 1.0);
  ASSERT_EQ(corpus.samples.size(), 2u);
  EXPECT_NE(corpus.params.rate_benign[0], corpus.params.rate_malicious[0]);
}

TEST(GenerateCorpus, DeterministicPerSeed) {
  const auto vocab = OpcodeVocabulary::synthetic(24);
  const auto a = generate_corpus(vocab, 20, 20, 123, 0.5);
  const auto b = generate_corpus(vocab, 20, 20, 123, 0.5);
  EXPECT_EQ(a, b);
  EXPECT_EQ(serialize_corpus(a), serialize_corpus(b));
  const auto c = generate_corpus(vocab, 20, 20, 124, 0.5);
  EXPECT_NE(a, c);
}

TEST(GenerateCorpus, CountsStayInRangeAcrossSeeds) {
  const auto vocab = OpcodeVocabulary::synthetic(8);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto corpus = generate_corpus(vocab, 15, 15, seed, 0.6);
    for (const auto& sample : corpus.samples)
      for (int c : sample.vector.counts) {
        ASSERT_GE(c, 0);
        ASSERT_LE(c, kMaxOpcodeCount);
      }
  }
}

TEST(GenerateCorpus, ParameterErrors) {
  const auto vocab = OpcodeVocabulary::synthetic(4);
  EXPECT_THROW(generate_corpus(vocab, 0, 5, 1, 0.5), ParameterError);
  EXPECT_THROW(generate_corpus(vocab, 5, 0, 1, 0.5), ParameterError);
  EXPECT_THROW(generate_corpus(vocab, 5, 5, 1, 0.0), ParameterError);
  EXPECT_THROW(generate_corpus(vocab, 5, 5, 1, 1.5), ParameterError);
}

TEST(PearsonSimilarity, WorksOnFrequencyVectors) {
  const OpcodeFrequencyVector v{{1, 2, 3, 4}};
  const OpcodeFrequencyVector w{{1, 2, 3, 5}};
  EXPECT_NEAR(pearson_similarity(v, v), 1.0, 1e-12);
  EXPECT_NEAR(pearson_similarity(v, w), 6.5 / std::sqrt(5.0 * 8.75), 1e-12);
  const OpcodeFrequencyVector flat{{2, 2, 2, 2}};
  EXPECT_THROW(pearson_similarity(v, flat), NumericError);
}

TEST(CorpusIo, RoundTripIsLossless) {
  const auto vocab = OpcodeVocabulary::synthetic(12);
  const auto corpus = generate_corpus(vocab, 10, 10, 99, 0.7);
  const auto path = testing::temp_dir("corpus-roundtrip") + "/corpus.txt";
  save_corpus(corpus, path);
  EXPECT_EQ(load_corpus(path), corpus);
}

TEST(CorpusIo, TruncatedFileIsMalformed) {
  const auto vocab = OpcodeVocabulary::synthetic(6);
  const auto corpus = generate_corpus(vocab, 5, 5, 3, 0.5);
  auto text = serialize_corpus(corpus);
  text.resize(text.size() / 2);
  EXPECT_THROW(parse_corpus(text), MalformedFileError);
  EXPECT_THROW(parse_corpus("not a corpus\n"), MalformedFileError);
  EXPECT_THROW(load_corpus("/nonexistent/path/corpus.txt"), IoError);
}

TEST(CorpusIo, SavingASingleClassCorpusIsRejected) {
  const auto vocab = OpcodeVocabulary::synthetic(4);
  auto corpus = generate_corpus(vocab, 3, 3, 1, 0.5);
  corpus.samples.erase(
      std::remove_if(corpus.samples.begin(), corpus.samples.end(),
                     [](const LabeledSample& s) {
                       return s.label == SampleLabel::kMalicious;
                     }),
      corpus.samples.end());
  EXPECT_THROW(serialize_corpus(corpus), ParameterError);
  Corpus empty;
  empty.vocabulary = vocab;
  EXPECT_THROW(serialize_corpus(empty), ParameterError);
}

// The corpus file layout is an external interface; this freezes it.
TEST(CorpusIo, GoldenFileFormat) {
  GeneratorParams params;
  params.separation = 1.0;
  params.rate_benign = {4.0, 8.5};
  params.rate_malicious = {9.0, 2.5};
  const auto vocab = OpcodeVocabulary::synthetic(2);
  const auto corpus = generate_corpus_from_params(vocab, params, 2, 1, 5);
  const std::string expected =
      "drldo-corpus v1\n"
      "vocab 2 mov push\n"
      "seed 5\n"
      "separation 1\n"
      "rates-benign 4 8.5\n"
      "rates-malicious 9 2.5\n"
      "samples 3\n"
      "sample b0000 benign 7 5\n"
      "sample b0001 benign 4 6\n"
      "sample m0000 malicious 6 2\n";
  EXPECT_EQ(serialize_corpus(corpus), expected);
}

}  // namespace
}  // namespace drldo

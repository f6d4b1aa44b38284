#include "partedit/dataset.hpp"
#include "partedit/tokenizer.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

namespace partedit {
namespace {

TokenId id_of(std::string_view word) {
  const auto vocab = vocabulary();
  const auto it = std::find(vocab.begin(), vocab.end(), word);
  EXPECT_NE(it, vocab.end()) << word;
  return static_cast<TokenId>(it - vocab.begin());
}

std::string serialize(const std::vector<Triplet>& data) {
  std::ostringstream out;
  write_dataset(out, data);
  return out.str();
}

TEST(Tokenizer, LowercasesAndPrependsFirstToken) {
  const std::vector<TokenId> expected{kFirstToken, id_of("the"), id_of("legs"), id_of("are"), id_of("longer")};
  EXPECT_EQ(tokenize("The legs are LONGER"), expected);
}

TEST(Tokenizer, UnknownWordsBecomeMarker) {
  const std::vector<TokenId> expected{kFirstToken, id_of("the"), id_of("legs"), id_of("are"), kUnknownToken};
  EXPECT_EQ(tokenize("the legs are purple"), expected);
}

TEST(Tokenizer, VocabularyIsSmallAndUnique) {
  const auto vocab = vocabulary();
  EXPECT_EQ(vocab.size(), vocabulary_size());
  EXPECT_LE(vocab.size(), 60u);
  EXPECT_EQ(std::set<std::string_view>(vocab.begin(), vocab.end()).size(), vocab.size());
}

TEST(Tokenizer, RoundTripOnTemplateUtterances) {
  for (Part part : {Part::legs, Part::seat, Part::back, Part::armrests}) {
    for (Attribute a : {Attribute::length, Attribute::thickness, Attribute::width}) {
      for (Direction d : {Direction::increase, Direction::decrease}) {
        if (!find_axis(part, a)) continue;
        const std::string text = describe_change(part, a, d);
        EXPECT_EQ(detokenize(tokenize(text)), normalize_text(text));
      }
    }
  }
  const auto data = generate_dataset(DatasetConfig{.contexts = 300}, 3);
  for (const auto& t : data) {
    for (const auto& u : t.utterances) {
      EXPECT_EQ(detokenize(u.tokens), normalize_text(u.text));
      EXPECT_EQ(u.tokens, tokenize(u.text));
    }
  }
}

TEST(Tokenizer, NormalizeCollapsesWhitespace) {
  EXPECT_EQ(normalize_text("  The   Seat\tis  WIDER "), "the seat is wider");
  EXPECT_EQ(normalize_text(""), "");
}

TEST(GenerateDataset, ByteIdenticalForSameSeed) {
  const DatasetConfig cfg{.contexts = 1000};
  const auto a = serialize(generate_dataset(cfg, 7));
  const auto b = serialize(generate_dataset(cfg, 7));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, serialize(generate_dataset(cfg, 8)));
}

TEST(GenerateDataset, InvalidConfigIsConfigError) {
  EXPECT_THROW(generate_dataset(DatasetConfig{.contexts = 0}, 1), ConfigError);
  EXPECT_THROW(generate_dataset(DatasetConfig{.multi_axis_fraction = 1.5}, 1), ConfigError);
  EXPECT_THROW(generate_dataset(DatasetConfig{.factor_min = 2.0, .factor_max = 1.5}, 1), ConfigError);
}

TEST(GenerateDataset, GroundTruthSignsMatchUtterances) {
  const auto data = generate_dataset(DatasetConfig{}, 11);
  for (const auto& t : data) {
    ASSERT_TRUE(ground_truth_consistent(t)) << "context " << t.context_id;
    ASSERT_NO_THROW(validate(t.source));
    ASSERT_NO_THROW(validate(t.target));
  }
}

TEST(GenerateDataset, UntouchedParametersAreEqual) {
  const auto data = generate_dataset(DatasetConfig{.contexts = 500}, 5);
  for (const auto& t : data) {
    std::set<Param> mentioned;
    for (const auto& u : t.utterances) mentioned.insert(find_axis(u.part, u.attribute)->param);
    for (std::size_t i = 0; i < kParamCount; ++i) {
      if (mentioned.count(static_cast<Param>(i)) == 0) {
        EXPECT_EQ(t.source.values[i], t.target.values[i]);
      }
    }
  }
}

TEST(GenerateDataset, UtterancesOfOneLabelerAreIndependentAxes) {
  const auto data = generate_dataset(DatasetConfig{}, 13);
  for (const auto& t : data) {
    std::set<std::pair<Part, Attribute>> axes;
    for (const auto& u : t.utterances) {
      EXPECT_TRUE(axes.emplace(u.part, u.attribute).second);
      EXPECT_EQ(u.context_id, t.context_id);
      EXPECT_EQ(u.labeler_id, t.labeler_id);
    }
    EXPECT_GE(t.utterances.size(), 1u);
    EXPECT_LE(t.utterances.size(), 3u);
  }
}

TEST(GenerateDataset, MultiAxisFractionWithinThreePercent) {
  for (double fraction : {0.3, 0.6}) {
    const DatasetConfig cfg{.contexts = 5000, .multi_axis_fraction = fraction};
    const auto data = generate_dataset(cfg, 17);
    std::map<std::uint32_t, std::size_t> per_context;
    for (const auto& t : data) per_context.try_emplace(t.context_id, t.utterances.size());
    std::size_t multi = 0;
    for (const auto& [id, n] : per_context) multi += n >= 2;
    EXPECT_NEAR(static_cast<double>(multi) / per_context.size(), fraction, 0.03);
  }
}

TEST(GenerateDataset, SplitIsEightyTenTenByContext) {
  const auto data = generate_dataset(DatasetConfig{.contexts = 2000}, 19);
  std::map<std::uint32_t, Split> split;
  for (const auto& t : data) {
    const auto [it, inserted] = split.emplace(t.context_id, t.split);
    EXPECT_EQ(it->second, t.split);
  }
  std::map<Split, std::size_t> count;
  for (const auto& [id, s] : split) ++count[s];
  EXPECT_EQ(count[Split::train], 1600u);
  EXPECT_EQ(count[Split::val], 200u);
  EXPECT_EQ(count[Split::test], 200u);
}

TEST(GenerateDataset, SomeContextsHaveTwoLabelers) {
  const auto data = generate_dataset(DatasetConfig{.contexts = 1000}, 23);
  std::map<std::uint32_t, std::set<std::uint32_t>> labelers;
  for (const auto& t : data) labelers[t.context_id].insert(t.labeler_id);
  std::size_t two = 0;
  for (const auto& [id, s] : labelers) {
    EXPECT_LE(s.size(), 2u);
    two += s.size() == 2;
  }
  EXPECT_NEAR(two / 1000.0, 0.5, 0.06);
}

TEST(DatasetFile, RoundTripSkipsRecordLines) {
  const auto data = generate_dataset(DatasetConfig{.contexts = 200}, 29);
  const std::string text = R"({"record":"header","seed":29})" "\n" + serialize(data);
  std::istringstream in(text);
  const auto back = read_dataset(in);
  ASSERT_EQ(back.size(), data.size());
  EXPECT_EQ(serialize(back), serialize(data));
}

TEST(DatasetFile, MalformedLineIsRejected) {
  std::istringstream in("{\"context_id\": 1}\n");
  EXPECT_ANY_THROW(read_dataset(in));
}

}  // namespace
}  // namespace partedit

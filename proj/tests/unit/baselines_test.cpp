#include <gtest/gtest.h>

#include <string>

#include "support/oracles.hpp"
#include "zeroem/baselines.hpp"
#include "zeroem/rng.hpp"

namespace zeroem {
namespace {

std::string random_short(Rng& rng, const std::string& alphabet) {
  std::string s(rng.uniform_index(16), ' ');
  for (auto& c : s) c = alphabet[rng.uniform_index(alphabet.size())];
  return s;
}

TEST(RatcliffObershelp, MatchesTextbookOracle) {
  Rng rng(42);
  for (int i = 0; i < 2000; ++i) {
    const std::string alphabet = i % 2 ? "abc" : "abcdefgh ,.";
    const std::string a = random_short(rng, alphabet);
    const std::string b = random_short(rng, alphabet);
    EXPECT_NEAR(ratcliff_obershelp(a, b), testing::gestalt_ratio(a, b), 1e-12) << a << " | " << b;
  }
}

TEST(RatcliffObershelp, KnownValues) {
  EXPECT_DOUBLE_EQ(ratcliff_obershelp("abcd", "bcde"), 0.75);
  EXPECT_DOUBLE_EQ(ratcliff_obershelp("abcd", "abxd"), 0.75);
  EXPECT_DOUBLE_EQ(ratcliff_obershelp("", ""), 1.0);
  EXPECT_DOUBLE_EQ(ratcliff_obershelp("aaaa", "zzzz"), 0.0);
  EXPECT_DOUBLE_EQ(ratcliff_obershelp("Sony TV, 1.99", "sony tv, 1.99"), 0.7692307692307693);
  // Code points, not bytes.
  EXPECT_DOUBLE_EQ(ratcliff_obershelp("na\xC3\xAFve caf\xC3\xA9", "naive cafe"), 0.8);
}

TEST(RatcliffObershelp, PopularElementHeuristicOnLongSecondArgument) {
  std::string a, b;
  for (int i = 0; i < 80; ++i) a += "ab ";
  for (int i = 0; i < 70; ++i) b += "ba ";
  b += "ab";
  EXPECT_DOUBLE_EQ(ratcliff_obershelp(a, b), 0.0);
  EXPECT_DOUBLE_EQ(ratcliff_obershelp(a, b, false), 0.022123893805309734);
  EXPECT_DOUBLE_EQ(ratcliff_obershelp("hello world", "hello " + std::string(250, 'o') + " world"),
                   0.08058608058608059);
}

TEST(RatcliffObershelp, ArgumentOrderMatters) {
  // Different tie resolution makes the score depend on which side is left.
  bool asymmetric = false;
  Rng rng(9);
  for (int i = 0; i < 2000 && !asymmetric; ++i) {
    const std::string a = random_short(rng, "ab");
    const std::string b = random_short(rng, "ab");
    asymmetric = ratcliff_obershelp(a, b) != ratcliff_obershelp(b, a);
  }
  EXPECT_TRUE(asymmetric);
}

TEST(StringSim, JoinsValuesAndUsesStrictThreshold) {
  Record l{{Value{"abcd"}, Value{}}};
  Record r{{Value{"abxd"}, Value{}}};
  EXPECT_EQ(join_record(l, ", "), "abcd, ");
  const auto p = stringsim_predict(l, r);
  EXPECT_NEAR(p.score, testing::gestalt_ratio("abcd, ", "abxd, "), 1e-12);
  EXPECT_EQ(p.label, p.score > 0.5 ? Label::kMatch : Label::kNonMatch);

  // Exactly 0.5 is not a match.
  Record x{{Value{"ab"}}};
  Record y{{Value{"ac"}}};
  const auto half = stringsim_predict(x, y);
  EXPECT_DOUBLE_EQ(half.score, 0.5);
  EXPECT_EQ(half.label, Label::kNonMatch);

  Record same{{Value{"x"}, Value{"y"}}};
  EXPECT_EQ(stringsim_predict(same, same).label, Label::kMatch);
  EXPECT_DOUBLE_EQ(stringsim_predict(same, same).score, 1.0);
}

TEST(StringSim, MatcherPredictsInOrder) {
  const StringSimMatcher m;
  std::vector<LabeledPair> pairs(3);
  pairs[0].left.values = {"aaaa"};
  pairs[0].right.values = {"zzzz"};
  pairs[1].left.values = {"same"};
  pairs[1].right.values = {"same"};
  pairs[2].left.values = {Value{}};
  pairs[2].right.values = {Value{}};
  const auto preds = m.predict(pairs, {});
  ASSERT_EQ(preds.size(), 3u);
  EXPECT_EQ(preds[0].label, Label::kNonMatch);
  EXPECT_EQ(preds[1].label, Label::kMatch);
  EXPECT_EQ(preds[2].label, Label::kMatch);
  EXPECT_EQ(m.id(), "stringsim");
  EXPECT_FALSE(m.provenance());
}

}  // namespace
}  // namespace zeroem

#include <gtest/gtest.h>

#include "support/fixtures.hpp"
#include "zeroem/tokenizer.hpp"

namespace zeroem {
namespace {

TEST(ByteTokenizer, RoundTrip) {
  const ByteTokenizer t;
  const std::string text = "Record A is <p>COL caf\xC3\xA9</p>.";
  const auto ids = t.encode(text);
  ASSERT_EQ(ids.size(), text.size());
  EXPECT_EQ(ids[0], 'R');
  EXPECT_EQ(ids[text.find('\xC3')], 0xC3);
  EXPECT_EQ(t.decode(ids), text);
  EXPECT_EQ(t.vocab_size(), 258);
  EXPECT_NE(t.pad_id(), t.cls_id());
  EXPECT_EQ(t.encode(std::string("\xFF\x00", 2)), (std::vector<TokenId>{255, 0}));
}

TEST(Gpt2Pretokenizer, SplitPattern) {
  using V = std::vector<std::string>;
  EXPECT_EQ(Gpt2BpeTokenizer::pretokenize("Hello world's  test"), (V{"Hello", " world", "'s", " ", " test"}));
  EXPECT_EQ(Gpt2BpeTokenizer::pretokenize("$1.29 abc123"), (V{"$", "1", ".", "29", " abc", "123"}));
  EXPECT_EQ(Gpt2BpeTokenizer::pretokenize("a  "), (V{"a", "  "}));
  EXPECT_EQ(Gpt2BpeTokenizer::pretokenize("<p>COL x</p>."), (V{"<", "p", ">", "COL", " x", "</", "p", ">."}));
}

// GPT-2's printable-byte table, written out independently.
std::vector<std::string> byte_symbols() {
  std::vector<int> direct;
  for (int b = 33; b <= 126; ++b) direct.push_back(b);
  for (int b = 161; b <= 172; ++b) direct.push_back(b);
  for (int b = 174; b <= 255; ++b) direct.push_back(b);
  std::vector<int> cps(256, -1);
  for (int b : direct) cps[b] = b;
  int next = 256;
  for (int b = 0; b < 256; ++b)
    if (cps[b] < 0) cps[b] = next++;
  std::vector<std::string> out;
  for (int cp : cps) {
    std::string s;
    if (cp < 0x80) {
      s += static_cast<char>(cp);
    } else {
      s += static_cast<char>(0xC0 | (cp >> 6));
      s += static_cast<char>(0x80 | (cp & 0x3F));
    }
    out.push_back(s);
  }
  return out;
}

Gpt2BpeTokenizer tiny_bpe() {
  std::unordered_map<std::string, TokenId> vocab;
  const auto symbols = byte_symbols();
  for (std::size_t b = 0; b < 256; ++b) vocab[symbols[b]] = static_cast<TokenId>(b);
  const std::string space = symbols[' '];
  std::vector<std::pair<std::string, std::string>> merges = {{"l", "l"}, {"h", "e"}, {"he", "ll"}, {space, "w"}};
  TokenId next = 256;
  for (const auto& [a, b] : merges) vocab[a + b] = next++;
  vocab["<|endoftext|>"] = next;
  return Gpt2BpeTokenizer(vocab, merges);
}

TEST(Gpt2Bpe, MergesByRank) {
  const auto t = tiny_bpe();
  const auto symbols = byte_symbols();
  // "hello" -> he + ll (via l+l, h+e, he+ll) + o; " world" -> Ġw + o r l d.
  const auto ids = t.encode("hello world");
  const std::vector<TokenId> want = {258, 'o', 259, 'o', 'r', 'l', 'd'};
  EXPECT_EQ(ids, want);
  EXPECT_EQ(t.decode(ids), "hello world");
  EXPECT_EQ(t.pad_id(), 260);
  EXPECT_EQ(t.vocab_size(), 261);
  const std::string odd = "caf\xC3\xA9 \x01\tx";
  EXPECT_EQ(t.decode(t.encode(odd)), odd);
}

TEST(Gpt2Bpe, SaveAndLoad) {
  const auto t = tiny_bpe();
  testing::TempDir tmp("bpe");
  t.save(tmp.path());
  const auto back = load_tokenizer(tmp.path());
  EXPECT_EQ(back->kind(), "gpt2-bpe");
  EXPECT_EQ(back->encode("hello world"), t.encode("hello world"));
  EXPECT_THROW(Gpt2BpeTokenizer::load(tmp / "absent"), LoadError);
  std::unordered_map<std::string, TokenId> partial = {{"a", 0}};
  EXPECT_THROW(Gpt2BpeTokenizer(partial, {}), LoadError);
}

TEST(Tokenizer, Factory) {
  EXPECT_EQ(make_tokenizer("byte")->kind(), "byte");
  EXPECT_THROW(make_tokenizer("sentencepiece"), std::exception);
  testing::TempDir tmp("tok");
  ByteTokenizer{}.save(tmp.path());
  EXPECT_EQ(load_tokenizer(tmp.path())->kind(), "byte");
}

}  // namespace
}  // namespace zeroem

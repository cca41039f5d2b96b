#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace zeroem {

using TokenId = std::int32_t;

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;

  /// "byte" or "gpt2-bpe".
  virtual std::string kind() const = 0;
  virtual std::vector<TokenId> encode(std::string_view text) const = 0;
  /// Concatenated bytes of `ids`; may end inside a multi-byte character.
  virtual std::string decode(const std::vector<TokenId>& ids) const = 0;
  virtual TokenId vocab_size() const = 0;
  virtual TokenId pad_id() const = 0;
  /// Token prepended for encoder-only pooling.
  virtual TokenId cls_id() const = 0;
  /// Writes tokenizer.json plus any vocabulary files into `dir`.
  virtual void save(const std::filesystem::path& dir) const = 0;
};

/// One token per byte; 256 is padding/end-of-text, 257 is the classification token.
class ByteTokenizer final : public Tokenizer {
 public:
  std::string kind() const override { return "byte"; }
  std::vector<TokenId> encode(std::string_view text) const override;
  std::string decode(const std::vector<TokenId>& ids) const override;
  TokenId vocab_size() const override { return 258; }
  TokenId pad_id() const override { return 256; }
  TokenId cls_id() const override { return 257; }
  void save(const std::filesystem::path& dir) const override;
};

/// Byte-level BPE with the GPT-2 vocabulary files (vocab.json, merges.txt).
/// Pre-tokenization follows the GPT-2 split pattern; non-ASCII code points
/// other than Unicode spaces are treated as letters.
class Gpt2BpeTokenizer final : public Tokenizer {
 public:
  Gpt2BpeTokenizer(std::unordered_map<std::string, TokenId> vocab, std::vector<std::pair<std::string, std::string>> merges);

  /// Throws LoadError when either file is missing or malformed.
  static std::unique_ptr<Gpt2BpeTokenizer> load(const std::filesystem::path& dir);

  std::string kind() const override { return "gpt2-bpe"; }
  std::vector<TokenId> encode(std::string_view text) const override;
  std::string decode(const std::vector<TokenId>& ids) const override;
  TokenId vocab_size() const override { return static_cast<TokenId>(id_to_token_.size()); }
  TokenId pad_id() const override { return eos_; }
  TokenId cls_id() const override { return eos_; }
  void save(const std::filesystem::path& dir) const override;

  /// Pre-tokenizer pieces of `text` (exposed for tests).
  static std::vector<std::string> pretokenize(std::string_view text);

 private:
  const std::vector<TokenId>& bpe(const std::string& piece) const;

  std::unordered_map<std::string, TokenId> vocab_;
  std::vector<std::string> id_to_token_;
  std::vector<std::pair<std::string, std::string>> merges_;
  std::map<std::pair<std::string, std::string>, std::size_t> ranks_;
  TokenId eos_ = 0;
  mutable std::unordered_map<std::string, std::vector<TokenId>> cache_;
  mutable std::mutex cache_mutex_;
};

std::unique_ptr<Tokenizer> make_tokenizer(std::string_view kind, const std::filesystem::path& vocab_dir = {});

/// Reads tokenizer.json from `dir` and the vocabulary files it refers to.
std::unique_ptr<Tokenizer> load_tokenizer(const std::filesystem::path& dir);

}  // namespace zeroem

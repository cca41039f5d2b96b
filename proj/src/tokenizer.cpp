#include "zeroem/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "zeroem/core_model.hpp"
#include "zeroem/util.hpp"

namespace zeroem {

namespace {

enum class CharClass { kLetter, kNumber, kSpace, kOther };

// Decodes one UTF-8 sequence at `i`; invalid bytes come back as a single byte of class kOther.
std::pair<char32_t, std::size_t> next_codepoint(std::string_view s, std::size_t i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  if (b0 < 0x80) return {b0, 1};
  std::size_t len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    return {0xFFFFFFFF, 1};
  }
  if (i + len > s.size()) return {0xFFFFFFFF, 1};
  for (std::size_t k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) return {0xFFFFFFFF, 1};
    cp = (cp << 6) | (b & 0x3F);
  }
  return {cp, len};
}

bool is_unicode_space(char32_t cp) {
  return cp == 0x85 || cp == 0xA0 || cp == 0x1680 || (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 ||
         cp == 0x2029 || cp == 0x202F || cp == 0x205F || cp == 0x3000;
}

CharClass classify(char32_t cp) {
  if (cp == 0xFFFFFFFF) return CharClass::kOther;
  if (cp < 0x80) {
    const auto c = static_cast<unsigned char>(cp);
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) return CharClass::kLetter;
    if (c >= '0' && c <= '9') return CharClass::kNumber;
    if (c == ' ' || (c >= 0x09 && c <= 0x0D)) return CharClass::kSpace;
    return CharClass::kOther;
  }
  if (is_unicode_space(cp)) return CharClass::kSpace;
  if ((cp >= 0xA1 && cp <= 0xBF) || cp == 0xD7 || cp == 0xF7 || (cp >= 0x2010 && cp <= 0x2027) ||
      (cp >= 0x2030 && cp <= 0x205E) || (cp >= 0x20A0 && cp <= 0x20CF))
    return CharClass::kOther;
  return CharClass::kLetter;
}

std::array<std::string, 256> byte_encoder() {
  std::array<std::string, 256> out;
  std::vector<int> direct;
  for (int b = '!'; b <= '~'; ++b) direct.push_back(b);
  for (int b = 0xA1; b <= 0xAC; ++b) direct.push_back(b);
  for (int b = 0xAE; b <= 0xFF; ++b) direct.push_back(b);
  std::array<char32_t, 256> map{};
  std::array<bool, 256> seen{};
  for (int b : direct) {
    map[static_cast<std::size_t>(b)] = static_cast<char32_t>(b);
    seen[static_cast<std::size_t>(b)] = true;
  }
  char32_t next = 256;
  for (std::size_t b = 0; b < 256; ++b)
    if (!seen[b]) map[b] = next++;
  for (std::size_t b = 0; b < 256; ++b) {
    const char32_t cp = map[b];
    std::string s;
    if (cp < 0x80) {
      s.push_back(static_cast<char>(cp));
    } else {
      s.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
    out[b] = s;
  }
  return out;
}

const std::array<std::string, 256>& bytes_to_symbols() {
  static const auto table = byte_encoder();
  return table;
}

const std::unordered_map<std::string, unsigned char>& symbols_to_bytes() {
  static const auto table = [] {
    std::unordered_map<std::string, unsigned char> m;
    const auto& enc = bytes_to_symbols();
    for (std::size_t b = 0; b < 256; ++b) m[enc[b]] = static_cast<unsigned char>(b);
    return m;
  }();
  return table;
}

// Splits a symbol string (UTF-8 of mapped code points) into single symbols.
std::vector<std::string> split_symbols(std::string_view s) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < s.size();) {
    const auto len = next_codepoint(s, i).second;
    out.emplace_back(s.substr(i, len));
    i += len;
  }
  return out;
}

}  // namespace

std::vector<TokenId> ByteTokenizer::encode(std::string_view text) const {
  std::vector<TokenId> ids(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) ids[i] = static_cast<unsigned char>(text[i]);
  return ids;
}

std::string ByteTokenizer::decode(const std::vector<TokenId>& ids) const {
  std::string out;
  for (TokenId id : ids)
    if (id >= 0 && id < 256) out.push_back(static_cast<char>(id));
  return out;
}

void ByteTokenizer::save(const std::filesystem::path& dir) const {
  write_file_atomic(dir / "tokenizer.json", nlohmann::json{{"kind", kind()}}.dump(2) + "\n");
}

Gpt2BpeTokenizer::Gpt2BpeTokenizer(std::unordered_map<std::string, TokenId> vocab,
                                   std::vector<std::pair<std::string, std::string>> merges)
    : vocab_(std::move(vocab)), merges_(std::move(merges)) {
  TokenId max_id = -1;
  for (const auto& [tok, id] : vocab_) max_id = std::max(max_id, id);
  id_to_token_.resize(static_cast<std::size_t>(max_id + 1));
  for (const auto& [tok, id] : vocab_) id_to_token_[static_cast<std::size_t>(id)] = tok;
  for (std::size_t i = 0; i < merges_.size(); ++i) ranks_.emplace(merges_[i], i);
  const auto it = vocab_.find("<|endoftext|>");
  eos_ = it != vocab_.end() ? it->second : max_id;
  for (const auto& sym : bytes_to_symbols())
    if (!vocab_.count(sym)) throw LoadError("BPE vocabulary lacks byte symbol '" + sym + "'");
}

std::unique_ptr<Gpt2BpeTokenizer> Gpt2BpeTokenizer::load(const std::filesystem::path& dir) {
  std::unordered_map<std::string, TokenId> vocab;
  try {
    const auto j = nlohmann::json::parse(read_file(dir / "vocab.json"));
    for (auto it = j.begin(); it != j.end(); ++it) vocab[it.key()] = it.value().get<TokenId>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError((dir / "vocab.json").string() + ": " + e.what());
  }
  std::vector<std::pair<std::string, std::string>> merges;
  std::istringstream in(read_file(dir / "merges.txt"));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.starts_with("#version")) continue;
    const auto space = line.find(' ');
    if (space == std::string::npos) throw LoadError((dir / "merges.txt").string() + ": malformed line '" + line + "'");
    merges.emplace_back(line.substr(0, space), line.substr(space + 1));
  }
  return std::make_unique<Gpt2BpeTokenizer>(std::move(vocab), std::move(merges));
}

std::vector<std::string> Gpt2BpeTokenizer::pretokenize(std::string_view s) {
  std::vector<std::string> out;
  const std::size_t n = s.size();
  auto class_at = [&](std::size_t i) { return classify(next_codepoint(s, i).first); };
  auto run_end = [&](std::size_t i, CharClass c) {
    while (i < n && class_at(i) == c) i += next_codepoint(s, i).second;
    return i;
  };
  auto other_end = [&](std::size_t i) {
    while (i < n) {
      const auto c = class_at(i);
      if (c != CharClass::kOther) break;
      i += next_codepoint(s, i).second;
    }
    return i;
  };
  static const std::array<std::string_view, 7> kContractions = {"'s", "'t", "'re", "'ve", "'m", "'ll", "'d"};

  std::size_t i = 0;
  while (i < n) {
    if (s[i] == '\'') {
      bool matched = false;
      for (auto c : kContractions) {
        if (s.substr(i, c.size()) == c) {
          out.emplace_back(c);
          i += c.size();
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    std::size_t j = (s[i] == ' ' && i + 1 < n) ? i + 1 : i;
    const CharClass c = class_at(j);
    if (c != CharClass::kSpace) {
      const std::size_t end = c == CharClass::kOther ? other_end(j) : run_end(j, c);
      out.emplace_back(s.substr(i, end - i));
      i = end;
      continue;
    }
    // Whitespace run: leave the last space to prefix the following word.
    const std::size_t end = run_end(i, CharClass::kSpace);
    std::size_t stop = end;
    if (end < n) {
      std::size_t last = i;
      for (std::size_t k = i; k < end; k += next_codepoint(s, k).second) last = k;
      if (last > i) stop = last;
    }
    out.emplace_back(s.substr(i, stop - i));
    i = stop;
  }
  return out;
}

const std::vector<TokenId>& Gpt2BpeTokenizer::bpe(const std::string& piece) const {
  {
    std::lock_guard lock(cache_mutex_);
    if (auto it = cache_.find(piece); it != cache_.end()) return it->second;
  }
  std::string mapped;
  for (char ch : piece) mapped += bytes_to_symbols()[static_cast<unsigned char>(ch)];
  std::vector<std::string> word = split_symbols(mapped);
  while (word.size() > 1) {
    std::size_t best_rank = std::numeric_limits<std::size_t>::max();
    std::size_t best_at = 0;
    for (std::size_t k = 0; k + 1 < word.size(); ++k) {
      const auto it = ranks_.find({word[k], word[k + 1]});
      if (it != ranks_.end() && it->second < best_rank) {
        best_rank = it->second;
        best_at = k;
      }
    }
    if (best_rank == std::numeric_limits<std::size_t>::max()) break;
    const std::string first = word[best_at];
    const std::string second = word[best_at + 1];
    std::vector<std::string> merged;
    for (std::size_t k = 0; k < word.size();) {
      if (k + 1 < word.size() && word[k] == first && word[k + 1] == second) {
        merged.push_back(first + second);
        k += 2;
      } else {
        merged.push_back(word[k]);
        ++k;
      }
    }
    word = std::move(merged);
  }
  std::vector<TokenId> ids;
  for (const auto& sym : word) {
    const auto it = vocab_.find(sym);
    if (it != vocab_.end()) {
      ids.push_back(it->second);
    } else {
      for (const auto& single : split_symbols(sym)) ids.push_back(vocab_.at(single));
    }
  }
  std::lock_guard lock(cache_mutex_);
  return cache_.emplace(piece, std::move(ids)).first->second;
}

std::vector<TokenId> Gpt2BpeTokenizer::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const auto& piece : pretokenize(text)) {
    const auto& part = bpe(piece);
    ids.insert(ids.end(), part.begin(), part.end());
  }
  return ids;
}

std::string Gpt2BpeTokenizer::decode(const std::vector<TokenId>& ids) const {
  std::string out;
  const auto& back = symbols_to_bytes();
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size() || id == eos_) continue;
    for (const auto& sym : split_symbols(id_to_token_[static_cast<std::size_t>(id)])) {
      const auto it = back.find(sym);
      if (it != back.end()) out.push_back(static_cast<char>(it->second));
    }
  }
  return out;
}

void Gpt2BpeTokenizer::save(const std::filesystem::path& dir) const {
  nlohmann::ordered_json vocab = nlohmann::ordered_json::object();
  for (std::size_t id = 0; id < id_to_token_.size(); ++id) vocab[id_to_token_[id]] = id;
  write_file_atomic(dir / "vocab.json", vocab.dump());
  std::string merges = "#version: 0.2\n";
  for (const auto& [a, b] : merges_) merges += a + " " + b + "\n";
  write_file_atomic(dir / "merges.txt", merges);
  write_file_atomic(dir / "tokenizer.json", nlohmann::json{{"kind", kind()}}.dump(2) + "\n");
}

std::unique_ptr<Tokenizer> make_tokenizer(std::string_view kind, const std::filesystem::path& vocab_dir) {
  if (kind == "byte") return std::make_unique<ByteTokenizer>();
  if (kind == "gpt2-bpe") {
    if (vocab_dir.empty()) throw LoadError("gpt2-bpe tokenizer needs a directory with vocab.json and merges.txt");
    return Gpt2BpeTokenizer::load(vocab_dir);
  }
  throw ValidationError("unknown tokenizer kind '" + std::string(kind) + "'");
}

std::unique_ptr<Tokenizer> load_tokenizer(const std::filesystem::path& dir) {
  std::string kind;
  try {
    kind = nlohmann::json::parse(read_file(dir / "tokenizer.json")).at("kind").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError((dir / "tokenizer.json").string() + ": " + e.what());
  }
  return make_tokenizer(kind, dir);
}

}  // namespace zeroem

#pragma once

#include <cstdint>
#include <filesystem>
#include <unistd.h>
#include <string>
#include <vector>

#include "zeroem/core_model.hpp"
#include "zeroem/corpus_builder.hpp"
#include "zeroem/rng.hpp"
#include "zeroem/serializer.hpp"

namespace zeroem::testing {

inline std::string random_word(Rng& rng, char lo, char hi, std::size_t min_len = 5, std::size_t max_len = 8) {
  std::string w(min_len + rng.uniform_index(max_len - min_len + 1), ' ');
  for (auto& c : w) c = static_cast<char>(lo + rng.uniform_index(static_cast<std::size_t>(hi - lo + 1)));
  return w;
}

// Positives repeat the same random a-z words on both sides; negatives draw the
// left side from a-m and the right side from n-z.
inline FineTuneCorpus separable_corpus(std::size_t n, std::uint64_t seed, std::size_t attributes = 3) {
  Rng rng(seed);
  FineTuneCorpus c;
  c.excluded_target = "target";
  c.sources = {"synthetic"};
  for (std::size_t i = 0; i < n; ++i) {
    const bool match = i % 2 == 0;
    std::vector<Value> left, right;
    for (std::size_t a = 0; a < attributes; ++a) {
      if (match) {
        const std::string w = random_word(rng, 'a', 'z');
        left.emplace_back(w);
        right.emplace_back(w);
      } else {
        left.emplace_back(random_word(rng, 'a', 'm'));
        right.emplace_back(random_word(rng, 'n', 'z'));
      }
    }
    SerializedSample s;
    s.text = serialize_record_pair(left, right);
    s.label = label_from_bool(match);
    s.source_dataset = "synthetic";
    c.samples.push_back(std::move(s));
  }
  return c;
}

inline std::vector<std::string> texts(const FineTuneCorpus& c) {
  std::vector<std::string> out;
  for (const auto& s : c.samples) out.push_back(s.text);
  return out;
}

// Pairs whose matches share nearly all tokens and whose non-matches share none.
// `planted` extra positives are token-disjoint, built exactly like negatives.
struct SeparableDataset {
  PairDataset dataset;
  std::vector<std::size_t> planted;  // indices into dataset.train
};

inline std::vector<std::string> words(Rng& rng, std::size_t n, char lo, char hi) {
  std::vector<std::string> w;
  for (std::size_t i = 0; i < n; ++i) w.push_back(random_word(rng, lo, hi, 4, 7));
  return w;
}

inline std::string join(const std::vector<std::string>& w) {
  std::string s;
  for (const auto& x : w) s += (s.empty() ? "" : " ") + x;
  return s;
}

inline SeparableDataset separable_pair_dataset(std::size_t n, std::size_t planted, std::uint64_t seed) {
  Rng rng(seed);
  SeparableDataset out;
  auto& d = out.dataset;
  d.name = "separable";
  d.domain = "synthetic";
  d.attributes = {AttributeName("title"), AttributeName("brand"), AttributeName("price")};
  // Both sides use the same word lengths, so only token overlap tells the classes apart.
  auto mirror = [&](const std::string& text) {
    std::string out = text;
    for (auto& c : out)
      if (c != ' ') c = static_cast<char>('n' + rng.uniform_index(13));
    return out;
  };
  auto disjoint_pair = [&](Label label) {
    LabeledPair p;
    p.label = label;
    const std::string title = join(words(rng, 3, 'a', 'm'));
    const std::string brand = random_word(rng, 'a', 'm', 4, 7);
    // Price tokens: left 10-39 and 99, right 50-89 and 49, so no token is shared.
    p.left.values = {title, brand, std::to_string(10 + rng.uniform_index(30)) + ".99"};
    p.right.values = {mirror(title), mirror(brand), std::to_string(50 + rng.uniform_index(40)) + ".49"};
    return p;
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (i % 3 == 0) {
      LabeledPair p;
      p.label = Label::kMatch;
      const auto title = words(rng, 3, 'a', 'z');
      const std::string brand = random_word(rng, 'a', 'z', 4, 7);
      const std::string price = std::to_string(10 + rng.uniform_index(90)) + ".99";
      p.left.values = {join(title), brand, price};
      p.right.values = {join(title), brand, price};
      d.train.push_back(std::move(p));
    } else {
      d.train.push_back(disjoint_pair(Label::kNonMatch));
    }
  }
  for (std::size_t k = 0; k < planted; ++k) {
    const std::size_t at = rng.uniform_index(d.train.size() + 1);
    d.train.insert(d.train.begin() + static_cast<std::ptrdiff_t>(at), disjoint_pair(Label::kMatch));
    for (auto& i : out.planted)
      if (i >= at) ++i;
    out.planted.push_back(at);
  }
  return out;
}

// Value text carries its attribute, a dataset marker and the pair index, so
// samples can be traced back: "<attr> dsq<k>q p<i> words...".
inline std::string tagged_value(Rng& rng, const std::string& attribute, std::size_t dataset, std::size_t pair) {
  std::string v = attribute + " dsq" + std::to_string(dataset) + "q p" + std::to_string(pair);
  for (std::size_t k = 1 + rng.uniform_index(3); k > 0; --k) v += " " + random_word(rng, 'a', 'z', 3, 6);
  return v;
}

inline const std::vector<std::string>& attribute_pool() {
  static const std::vector<std::string> pool = {"title", "brand", "price", "year", "city", "name"};
  return pool;
}

// Negative-heavy datasets (positives at most a third of each split), random
// schemas drawn from a shared pool, some missing values.
inline std::vector<PairDataset> random_collection(Rng& rng, std::size_t count, std::size_t max_train) {
  std::vector<PairDataset> out;
  for (std::size_t k = 0; k < count; ++k) {
    PairDataset d;
    d.name = "d" + std::to_string(k);
    d.domain = "synthetic";
    auto pool = attribute_pool();
    rng.shuffle(pool);
    const std::size_t n_attr = 1 + rng.uniform_index(4);
    for (std::size_t a = 0; a < n_attr; ++a) d.attributes.emplace_back(pool[a]);
    const std::size_t n = rng.uniform_index(max_train + 1);
    const double pos_rate = 0.05 + 0.28 * rng.uniform01();
    const double missing = 0.15 * rng.uniform01();
    for (std::size_t i = 0; i < n; ++i) {
      LabeledPair p;
      p.label = label_from_bool(i == 0 || rng.uniform01() < pos_rate);
      for (std::size_t a = 0; a < n_attr; ++a) {
        const std::string& attr = d.attributes[a].str();
        p.left.values.push_back(rng.uniform01() < missing ? Value{} : Value{tagged_value(rng, attr, k, i)});
        p.right.values.push_back(rng.uniform01() < missing ? Value{} : Value{tagged_value(rng, attr, k, i)});
      }
      if (!p.left.values[0]) p.left.values[0] = tagged_value(rng, d.attributes[0].str(), k, i);
      d.train.push_back(std::move(p));
    }
    // Keep negatives at least twice the positives.
    std::size_t pos = 0;
    for (const auto& p : d.train) pos += p.is_match();
    for (std::size_t i = 0; i < d.train.size() && 3 * pos > d.train.size(); ++i) {
      if (i > 0 && d.train[i].is_match()) {
        d.train[i].label = Label::kNonMatch;
        --pos;
      }
    }
    out.push_back(std::move(d));
  }
  return out;
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("zeroem-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace zeroem::testing

#include "zeroem/baselines.hpp"

#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include "zeroem/util.hpp"

namespace zeroem {

namespace {

struct Block {
  std::size_t a = 0;
  std::size_t b = 0;
  std::size_t size = 0;
};

// Longest-block search with the same tie-breaking as difflib.SequenceMatcher:
// earliest start in `a`, then earliest start in `b`. Popular elements of `b`
// are excluded from the index but may still extend a block.
class GestaltMatcher {
 public:
  GestaltMatcher(const std::u32string& a, const std::u32string& b, bool autojunk) : a_(a), b_(b) {
    for (std::size_t j = 0; j < b_.size(); ++j) index_[b_[j]].push_back(j);
    const std::size_t n = b_.size();
    if (autojunk && n >= 200) {
      const std::size_t ntest = n / 100 + 1;
      for (auto it = index_.begin(); it != index_.end();) {
        it = it->second.size() > ntest ? index_.erase(it) : std::next(it);
      }
    }
  }

  Block longest(std::size_t alo, std::size_t ahi, std::size_t blo, std::size_t bhi) const {
    Block best{alo, blo, 0};
    std::unordered_map<std::size_t, std::size_t> run;
    std::unordered_map<std::size_t, std::size_t> next_run;
    for (std::size_t i = alo; i < ahi; ++i) {
      next_run.clear();
      auto it = index_.find(a_[i]);
      if (it != index_.end()) {
        for (std::size_t j : it->second) {
          if (j < blo) continue;
          if (j >= bhi) break;
          std::size_t k = 1;
          if (j > 0) {
            auto prev = run.find(j - 1);
            if (prev != run.end()) k = prev->second + 1;
          }
          next_run[j] = k;
          if (k > best.size) best = {i + 1 - k, j + 1 - k, k};
        }
      }
      std::swap(run, next_run);
    }
    // Nothing is junk when no junk predicate is supplied, so blocks extend
    // over any equal neighbours (including popular elements).
    while (best.a > alo && best.b > blo && a_[best.a - 1] == b_[best.b - 1]) {
      --best.a;
      --best.b;
      ++best.size;
    }
    while (best.a + best.size < ahi && best.b + best.size < bhi && a_[best.a + best.size] == b_[best.b + best.size])
      ++best.size;
    return best;
  }

  std::size_t matched_characters() const {
    std::size_t total = 0;
    std::vector<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>> queue{{0, a_.size(), 0, b_.size()}};
    while (!queue.empty()) {
      const auto [alo, ahi, blo, bhi] = queue.back();
      queue.pop_back();
      const Block m = longest(alo, ahi, blo, bhi);
      if (m.size == 0) continue;
      total += m.size;
      if (alo < m.a && blo < m.b) queue.emplace_back(alo, m.a, blo, m.b);
      if (m.a + m.size < ahi && m.b + m.size < bhi) queue.emplace_back(m.a + m.size, ahi, m.b + m.size, bhi);
    }
    return total;
  }

 private:
  const std::u32string& a_;
  const std::u32string& b_;
  std::unordered_map<char32_t, std::vector<std::size_t>> index_;
};

}  // namespace

double ratcliff_obershelp(std::string_view a, std::string_view b, bool autojunk) {
  const std::u32string ua = utf8_to_codepoints(a);
  const std::u32string ub = utf8_to_codepoints(b);
  const std::size_t total = ua.size() + ub.size();
  if (total == 0) return 1.0;
  const GestaltMatcher matcher(ua, ub, autojunk);
  return 2.0 * static_cast<double>(matcher.matched_characters()) / static_cast<double>(total);
}

std::string join_record(const Record& record, std::string_view separator) {
  std::string out;
  for (std::size_t i = 0; i < record.values.size(); ++i) {
    if (i) out += separator;
    if (record.values[i]) out += *record.values[i];
  }
  return out;
}

MatchPrediction stringsim_predict(const Record& left, const Record& right, const StringSimConfig& config) {
  const double score =
      ratcliff_obershelp(join_record(left, config.separator), join_record(right, config.separator), config.autojunk);
  return {label_from_bool(score > config.threshold), score};
}

std::vector<MatchPrediction> StringSimMatcher::predict(std::span<const LabeledPair> pairs,
                                                       std::span<const AttributeName>) const {
  std::vector<MatchPrediction> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(stringsim_predict(p.left, p.right, config_));
  return out;
}

}  // namespace zeroem

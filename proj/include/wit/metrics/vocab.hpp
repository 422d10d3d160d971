// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace wit {

using TokenId = std::size_t;
using TokenSeq = std::vector<TokenId>;

inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string w;
  while (is >> w) {
    std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    out.push_back(std::move(w));
  }
  return out;
}

/// Token <-> id mapping with reserved <PAD>, <UNK>, <EOS> ids 0, 1, 2.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kEos = 2;
  static constexpr std::size_t kDefaultMinCount = 3;
  static constexpr std::size_t kDefaultMaxLen = 15;

  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

  /// Ids assigned in the given order after the reserved tokens.
  explicit Vocabulary(const std::vector<std::string>& words, std::size_t max_len = kDefaultMaxLen)
      : max_len_(max_len) {
    for (const char* r : {"<PAD>", "<UNK>", "<EOS>"}) push(r);
    for (const auto& w : words) {
      if (index_.count(w)) throw std::invalid_argument("duplicate vocabulary token: " + w);
      push(w);
    }
  }

  /// Lowercase, whitespace-tokenize, drop tokens seen fewer than min_count
  /// times; ids by descending frequency then lexicographic order.
  static Vocabulary build(const std::vector<std::string>& captions, std::size_t min_count = kDefaultMinCount,
                          std::size_t max_len = kDefaultMaxLen) {
    if (captions.empty()) throw std::invalid_argument("build_vocab: empty corpus");
    std::map<std::string, std::size_t> counts;
    for (const auto& c : captions)
      for (auto& w : tokenize(c)) ++counts[w];
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (const auto& [w, n] : counts)
      if (n >= min_count && w != "<PAD>" && w != "<UNK>" && w != "<EOS>") kept.emplace_back(w, n);
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> words;
    for (auto& [w, n] : kept) words.push_back(w);
    return Vocabulary(words, max_len);
  }

  std::size_t size() const { return tokens_.size(); }
  std::size_t max_len() const { return max_len_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool contains(const std::string& w) const { return index_.count(w) != 0; }
  TokenId id(const std::string& w) const {
    auto it = index_.find(w);
    return it == index_.end() ? kUnk : it->second;
  }
  const std::string& token(TokenId id) const {
    if (id >= tokens_.size()) throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
    return tokens_[id];
  }

  /// Content tokens truncated to max_len, then <EOS>. No padding.
  TokenSeq encode(const std::string& sentence) const {
    TokenSeq out;
    for (const auto& w : tokenize(sentence)) {
      if (out.size() == max_len_) break;
      out.push_back(id(w));
    }
    out.push_back(kEos);
    return out;
  }

  /// encode() padded with <PAD> to max_len + 1 slots.
  TokenSeq encode_padded(const std::string& sentence) const {
    auto out = encode(sentence);
    out.resize(max_len_ + 1, kPad);
    return out;
  }

  /// Space-joined tokens up to (not including) the first <EOS>; <PAD> skipped.
  std::string decode(const TokenSeq& ids) const {
    std::string s;
    for (auto t : ids) {
      if (t == kEos) break;
      if (t == kPad) continue;
      if (!s.empty()) s += ' ';
      s += token(t);
    }
    return s;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.max_len_ == b.max_len_;
  }

 private:
  void push(const std::string& w) {
    index_.emplace(w, tokens_.size());
    tokens_.push_back(w);
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  std::size_t max_len_ = kDefaultMaxLen;
};

/// Content tokens of a sequence: everything before the first <EOS>, minus <PAD>.
inline TokenSeq strip_special(const TokenSeq& s) {
  TokenSeq out;
  for (auto t : s) {
    if (t == Vocabulary::kEos) break;
    if (t != Vocabulary::kPad) out.push_back(t);
  }
  return out;
}

}  // namespace wit

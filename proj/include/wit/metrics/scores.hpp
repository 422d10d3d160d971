// SPDX-License-Identifier: Apache-2.0
//
// Corpus caption metrics over token-id sequences: BLEU-4, ROUGE-L, CIDEr.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <vector>

#include "wit/metrics/vocab.hpp"

namespace wit {

using RefSet = std::vector<TokenSeq>;
using NgramCounts = std::map<TokenSeq, std::size_t>;

inline NgramCounts count_ngrams(const TokenSeq& s, std::size_t n) {
  NgramCounts out;
  if (s.size() < n) return out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++out[TokenSeq(s.begin() + static_cast<std::ptrdiff_t>(i),
                                                                 s.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return out;
}

namespace detail {

inline void check_corpus(const std::vector<TokenSeq>& cands, const std::vector<RefSet>& refs, const char* metric) {
  if (cands.empty()) throw std::invalid_argument(std::string(metric) + ": empty candidate list");
  if (cands.size() != refs.size())
    throw std::invalid_argument(std::string(metric) + ": candidate and reference counts differ");
  for (const auto& r : refs)
    if (r.empty()) throw std::invalid_argument(std::string(metric) + ": candidate without references");
}

}  // namespace detail

/// Corpus BLEU-4: clipped n-gram precisions pooled over the corpus, uniform
/// geometric mean, brevity penalty against the closest reference length.
/// No smoothing, so any zero precision gives 0.
inline double bleu4(const std::vector<TokenSeq>& cands, const std::vector<RefSet>& refs) {
  detail::check_corpus(cands, refs, "bleu4");
  constexpr std::size_t kMaxN = 4;
  std::array<double, kMaxN> matched{}, total{};
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const auto& c = cands[i];
    cand_len += static_cast<double>(c.size());
    std::size_t best = refs[i][0].size();
    for (const auto& r : refs[i]) {
      const auto d = [&](std::size_t len) { return len > c.size() ? len - c.size() : c.size() - len; };
      if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
    }
    ref_len += static_cast<double>(best);
    for (std::size_t n = 1; n <= kMaxN; ++n) {
      NgramCounts max_ref;
      for (const auto& r : refs[i])
        for (const auto& [g, k] : count_ngrams(r, n)) max_ref[g] = std::max(max_ref[g], k);
      for (const auto& [g, k] : count_ngrams(c, n)) {
        auto it = max_ref.find(g);
        matched[n - 1] += static_cast<double>(std::min(k, it == max_ref.end() ? 0 : it->second));
        total[n - 1] += static_cast<double>(k);
      }
    }
  }
  if (cand_len == 0.0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < kMaxN; ++n) {
    if (matched[n] == 0.0 || total[n] == 0.0) return 0.0;
    log_sum += std::log(matched[n] / total[n]);
  }
  const double bp = cand_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  return bp * std::exp(log_sum / kMaxN);
}

inline std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline constexpr double kRougeBeta = 1.2;

/// Sentence ROUGE-L: best LCS precision and best LCS recall over the
/// references combined into an F-measure with beta = 1.2.
inline double rouge_l_sentence(const TokenSeq& cand, const RefSet& refs) {
  if (cand.empty() || refs.empty()) return 0.0;
  double p = 0.0, r = 0.0;
  for (const auto& ref : refs) {
    if (ref.empty()) continue;
    const double l = static_cast<double>(lcs_length(cand, ref));
    p = std::max(p, l / static_cast<double>(cand.size()));
    r = std::max(r, l / static_cast<double>(ref.size()));
  }
  if (p == 0.0 || r == 0.0) return 0.0;
  const double b2 = kRougeBeta * kRougeBeta;
  return (1.0 + b2) * p * r / (r + b2 * p);
}

inline double rouge_l(const std::vector<TokenSeq>& cands, const std::vector<RefSet>& refs) {
  detail::check_corpus(cands, refs, "rouge_l");
  double s = 0.0;
  for (std::size_t i = 0; i < cands.size(); ++i) s += rouge_l_sentence(cands[i], refs[i]);
  return s / static_cast<double>(cands.size());
}

/// Document frequencies of 1..4-grams; a document is one video's reference set.
struct CorpusStats {
  std::array<NgramCounts, 4> df;
  std::size_t documents = 0;

  static CorpusStats build(const std::vector<RefSet>& corpus) {
    CorpusStats st;
    st.documents = corpus.size();
    for (const auto& refs : corpus)
      for (std::size_t n = 1; n <= 4; ++n) {
        std::set<TokenSeq> seen;
        for (const auto& r : refs)
          for (const auto& [g, k] : count_ngrams(r, n)) seen.insert(g);
        for (const auto& g : seen) ++st.df[n - 1][g];
      }
    return st;
  }

  double idf(std::size_t n, const TokenSeq& gram) const {
    auto it = df[n - 1].find(gram);
    const double d = it == df[n - 1].end() ? 1.0 : std::max<double>(1.0, static_cast<double>(it->second));
    return std::log(static_cast<double>(documents) / d);
  }
};

namespace detail {

inline std::map<TokenSeq, double> tfidf(const TokenSeq& s, std::size_t n, const CorpusStats& st) {
  std::map<TokenSeq, double> v;
  for (const auto& [g, k] : count_ngrams(s, n)) v[g] = static_cast<double>(k) * st.idf(n, g);
  return v;
}

inline double cosine(const std::map<TokenSeq, double>& a, const std::map<TokenSeq, double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (const auto& [g, x] : a) {
    na += x * x;
    auto it = b.find(g);
    if (it != b.end()) dot += x * it->second;
  }
  for (const auto& [g, y] : b) nb += y * y;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace detail

inline constexpr double kCiderScale = 10.0;

/// Plain CIDEr of one candidate: 10 x mean over n = 1..4 of the mean TF-IDF
/// cosine against each reference. No length penalty or count clipping.
inline double cider_sentence(const TokenSeq& cand, const RefSet& refs, const CorpusStats& st) {
  if (st.documents == 0) throw std::invalid_argument("cider: empty corpus statistics");
  if (refs.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto vc = detail::tfidf(cand, n, st);
    double s = 0.0;
    for (const auto& r : refs) s += detail::cosine(vc, detail::tfidf(r, n, st));
    total += s / static_cast<double>(refs.size());
  }
  return kCiderScale * total / 4.0;
}

inline double cider(const std::vector<TokenSeq>& cands, const std::vector<RefSet>& refs, const CorpusStats& st) {
  detail::check_corpus(cands, refs, "cider");
  if (st.documents == 0) throw std::invalid_argument("cider: empty corpus statistics");
  double s = 0.0;
  for (std::size_t i = 0; i < cands.size(); ++i) s += cider_sentence(cands[i], refs[i], st);
  return s / static_cast<double>(cands.size());
}

}  // namespace wit

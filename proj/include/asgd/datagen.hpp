// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "asgd/rng.hpp"

namespace asgd {

/// Transition structure of the synthetic language. Both patterns are
/// circulant (every row is a rotation of displacement weights), so the
/// stationary distribution is uniform and the per-token entropy floor is
/// analytic.
enum class MarkovPattern { peaked, uniform };

inline MarkovPattern markov_pattern_from(std::string_view name) {
  if (name == "peaked") return MarkovPattern::peaked;
  if (name == "uniform") return MarkovPattern::uniform;
  throw std::invalid_argument("unknown pattern '" + std::string(name) +
                              "' (expected peaked|uniform)");
}

inline const char* to_string(MarkovPattern p) {
  return p == MarkovPattern::peaked ? "peaked" : "uniform";
}

/// Probability of moving from token i to token (i + d) mod vocab, as a
/// function of the displacement d in [0, vocab). The peaked pattern
/// concentrates mass on the next few tokens so the language is learnable;
/// uniform is the zero-structure control.
inline std::vector<double> displacement_weights(MarkovPattern p, int vocab) {
  if (vocab < 2) throw std::invalid_argument("vocab must be >= 2");
  std::vector<double> w(static_cast<std::size_t>(vocab), 1.0);
  if (p == MarkovPattern::peaked) {
    w[1] += 200.0;
    if (vocab > 2) w[2] += 30.0;
    if (vocab > 3) w[3] += 10.0;
  }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& x : w) x /= total;
  return w;
}

/// Conditional entropy H(next | prev) of the chain, in nats per token.
inline double markov_conditional_entropy(MarkovPattern p, int vocab) {
  double h = 0;
  for (double q : displacement_weights(p, vocab))
    if (q > 0) h -= q * std::log(q);
  return h;
}

struct Corpus {
  std::vector<std::vector<int>> sentences;
  std::uint64_t seed = 0;
  int vocab = 0;
  MarkovPattern pattern = MarkovPattern::peaked;

  long total_tokens() const {
    long n = 0;
    for (const auto& s : sentences) n += static_cast<long>(s.size());
    return n;
  }
};

/// Expected per-token cross-entropy of the true generating process on this
/// corpus: ln(vocab) for each sentence-initial token (uniform start) plus
/// the chain's conditional entropy for every following token.
inline double corpus_entropy_floor(const Corpus& c) {
  const double h_cond = markov_conditional_entropy(c.pattern, c.vocab);
  const double h_init = std::log(static_cast<double>(c.vocab));
  double total = 0;
  long tokens = 0;
  for (const auto& s : c.sentences) {
    total += h_init + h_cond * static_cast<double>(s.size() - 1);
    tokens += static_cast<long>(s.size());
  }
  if (tokens == 0) throw std::invalid_argument("empty corpus");
  return total / static_cast<double>(tokens);
}

/// Seeded order-1 Markov corpus. Sentence lengths are uniform in
/// [len_min, len_max]; the first token is uniform (the chain's stationary
/// distribution). Same arguments give a bit-identical corpus; each sentence
/// has its own derived stream so the corpus is stable under n_sentences.
inline Corpus gen_corpus(std::uint64_t seed, long n_sentences, int vocab,
                         int len_min, int len_max, MarkovPattern pattern) {
  if (vocab < 2) throw std::invalid_argument("vocab must be >= 2");
  if (len_min < 1 || len_min > len_max)
    throw std::invalid_argument("need 1 <= len_min <= len_max");
  if (n_sentences < 0) throw std::invalid_argument("n_sentences must be >= 0");

  const auto weights = displacement_weights(pattern, vocab);
  std::vector<double> cdf(weights.size());
  std::partial_sum(weights.begin(), weights.end(), cdf.begin());

  Corpus c;
  c.seed = seed;
  c.vocab = vocab;
  c.pattern = pattern;
  c.sentences.reserve(static_cast<std::size_t>(n_sentences));
  for (long i = 0; i < n_sentences; ++i) {
    Rng rng(derive_seed(derive_seed(seed, "sentence"), static_cast<std::uint64_t>(i)));
    const int len = len_min + static_cast<int>(rng.below(
                                  static_cast<std::uint64_t>(len_max - len_min + 1)));
    std::vector<int> s(static_cast<std::size_t>(len));
    s[0] = static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab)));
    for (int t = 1; t < len; ++t) {
      const double u = rng.next_double();
      const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
      const int d = static_cast<int>(std::min<std::ptrdiff_t>(
          it - cdf.begin(), static_cast<std::ptrdiff_t>(vocab - 1)));
      s[static_cast<std::size_t>(t)] = (s[static_cast<std::size_t>(t - 1)] + d) % vocab;
    }
    c.sentences.push_back(std::move(s));
  }
  return c;
}

struct PackedBatch {
  std::vector<std::size_t> sentence_indices;
  long tokens = 0;
  bool oversized = false;  // single sentence longer than the budget
};

struct PackedBatches {
  std::vector<PackedBatch> batches;
  long word_budget = 0;

  long total_tokens() const {
    long n = 0;
    for (const auto& b : batches) n += b.tokens;
    return n;
  }
  double mean_batch_tokens() const {
    return batches.empty() ? 0.0
                           : static_cast<double>(total_tokens()) /
                                 static_cast<double>(batches.size());
  }
  long max_batch_tokens() const {
    long m = 0;
    for (const auto& b : batches) m = std::max(m, b.tokens);
    return m;
  }
};

/// Greedy in-order packing core: walk the given sentence order, extending
/// the current batch while its token total stays within the budget. A
/// sentence longer than the whole budget becomes its own flagged batch.
inline PackedBatches pack_in_order(const Corpus& corpus,
                                   const std::vector<std::size_t>& order,
                                   long word_budget) {
  if (word_budget < 1) throw std::invalid_argument("word_budget must be >= 1");
  PackedBatches out;
  out.word_budget = word_budget;
  PackedBatch cur;
  auto flush = [&] {
    if (!cur.sentence_indices.empty()) out.batches.push_back(std::move(cur));
    cur = PackedBatch{};
  };
  for (std::size_t idx : order) {
    const long len = static_cast<long>(corpus.sentences[idx].size());
    if (len > word_budget) {
      flush();
      out.batches.push_back({{idx}, len, true});
      continue;
    }
    if (cur.tokens + len > word_budget) flush();
    cur.sentence_indices.push_back(idx);
    cur.tokens += len;
  }
  flush();
  return out;
}

/// Shuffle sentences by seed, length-sort within consecutive windows of
/// sort_window sentences (maxi-batch style), then pack greedily.
inline PackedBatches pack_batches(const Corpus& corpus, long word_budget,
                                  std::uint64_t seed, std::size_t sort_window = 1000) {
  if (sort_window < 1) throw std::invalid_argument("sort_window must be >= 1");
  std::vector<std::size_t> order(corpus.sentences.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "pack_shuffle"));
  rng.shuffle(order);
  for (std::size_t w = 0; w < order.size(); w += sort_window) {
    const auto end = std::min(order.size(), w + sort_window);
    std::stable_sort(order.begin() + static_cast<std::ptrdiff_t>(w),
                     order.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) {
                       return corpus.sentences[a].size() < corpus.sentences[b].size();
                     });
  }
  return pack_in_order(corpus, order, word_budget);
}

/// Deterministic batch order for one epoch: a seeded permutation of all
/// packed batches, each yielded exactly once.
inline std::vector<std::size_t> epoch_stream(const PackedBatches& packed,
                                             std::uint64_t epoch_seed) {
  if (packed.batches.empty()) throw std::invalid_argument("empty packing");
  std::vector<std::size_t> order(packed.batches.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(epoch_seed, "epoch"));
  rng.shuffle(order);
  return order;
}

}  // namespace asgd

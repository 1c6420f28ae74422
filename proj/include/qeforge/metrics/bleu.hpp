#pragma once

#include <array>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "qeforge/error.hpp"
#include "qeforge/metrics/tokenize.hpp"

namespace qeforge::metrics {

inline constexpr int kBleuOrder = 4;

/// Corpus BLEU with clipped n-gram counts and exponential brevity penalty.
///
/// A zero match count at order >= 2 is replaced by 1 / (2 * hypothesis n-gram
/// count). Orders for which the hypotheses contain no n-grams at all (very
/// short corpora) are left out of the geometric mean; `effective_order` says
/// how many were used.
struct BleuScore {
  double score = 0.0;
  std::array<double, kBleuOrder> precisions{};  // smoothed values entering the mean
  std::array<std::size_t, kBleuOrder> matches{};
  std::array<std::size_t, kBleuOrder> totals{};
  int effective_order = 0;
  double brevity_penalty = 1.0;
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;
};

namespace detail {
using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

inline NgramCounts ngrams(const std::vector<std::string>& toks, std::size_t n) {
  NgramCounts out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i)
    ++out[std::vector<std::string>(toks.begin() + static_cast<long>(i),
                                   toks.begin() + static_cast<long>(i + n))];
  return out;
}
}  // namespace detail

inline BleuScore bleu(std::span<const std::string> hyps, std::span<const std::string> refs) {
  if (hyps.size() != refs.size())
    throw ValidationError("BLEU: " + std::to_string(hyps.size()) + " hypotheses vs " +
                          std::to_string(refs.size()) + " references");
  if (hyps.empty()) throw ValidationError("BLEU: empty corpus");

  BleuScore b;
  for (std::size_t k = 0; k < hyps.size(); ++k) {
    const auto h = tokenize_tercom(hyps[k]);
    const auto r = tokenize_tercom(refs[k]);
    b.hyp_len += h.size();
    b.ref_len += r.size();
    for (std::size_t n = 1; n <= kBleuOrder; ++n) {
      const auto hc = detail::ngrams(h, n);
      const auto rc = detail::ngrams(r, n);
      for (const auto& [gram, count] : hc) {
        b.totals[n - 1] += count;
        if (auto it = rc.find(gram); it != rc.end()) b.matches[n - 1] += std::min(count, it->second);
      }
    }
  }
  if (b.hyp_len == 0) {
    b.brevity_penalty = 0.0;  // limit of exp(1 - r/h) as h -> 0
    return b;
  }
  b.brevity_penalty =
      b.hyp_len > b.ref_len
          ? 1.0
          : std::exp(1.0 - static_cast<double>(b.ref_len) / static_cast<double>(b.hyp_len));
  if (b.matches[0] == 0) {
    b.effective_order = 1;
    return b;
  }

  double log_sum = 0.0;
  for (int n = 0; n < kBleuOrder; ++n) {
    if (b.totals[n] == 0) break;
    const double total = static_cast<double>(b.totals[n]);
    double p = static_cast<double>(b.matches[n]) / total;
    if (b.matches[n] == 0) p = 1.0 / (2.0 * total);
    b.precisions[n] = p;
    log_sum += std::log(p);
    ++b.effective_order;
  }
  b.score = 100.0 * b.brevity_penalty * std::exp(log_sum / b.effective_order);
  return b;
}

inline BleuScore bleu(const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
  return bleu(std::span<const std::string>(hyps), std::span<const std::string>(refs));
}

}  // namespace qeforge::metrics

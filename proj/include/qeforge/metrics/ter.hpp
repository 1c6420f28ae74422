#pragma once

// Translation edit rate: word-level Levenshtein distance plus block shifts,
// normalized by reference length.
//
// The shift search first runs a greedy loop: every candidate block move
// (length <= kMaxShiftSize, move distance <= kMaxShiftDistance) is scored by
// the Levenshtein distance it leaves, and the best one is applied while it
// cuts the distance by at least 2 (a shift costs one edit itself). Ties go to
// the smallest start, then shortest block, then smallest destination.
//
// Greedy shifting can miss optima that need an initially unprofitable move,
// so hypotheses of at most kExactSearchMaxTokens tokens are then refined by a
// breadth-first search over shift sequences, bounded above by the greedy
// result and below by the bag-of-words distance.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "qeforge/error.hpp"
#include "qeforge/metrics/tokenize.hpp"

namespace qeforge::metrics {

inline constexpr std::size_t kMaxShiftSize = 10;
inline constexpr std::size_t kMaxShiftDistance = 50;
inline constexpr std::size_t kExactSearchMaxTokens = 8;

struct TERScore {
  std::size_t insertions = 0;  // reference words missing from the hypothesis
  std::size_t deletions = 0;   // hypothesis words absent from the reference
  std::size_t substitutions = 0;
  std::size_t shifts = 0;
  std::size_t ref_len = 0;

  std::size_t edits() const { return insertions + deletions + substitutions + shifts; }
  double score() const { return static_cast<double>(edits()) / static_cast<double>(ref_len); }

  friend bool operator==(const TERScore&, const TERScore&) = default;
};

/// One applied greedy shift, for inspection.
struct ShiftStep {
  std::size_t start = 0;
  std::size_t length = 0;
  std::size_t dest = 0;  // index of the block's first word after the move
  std::size_t distance_before = 0;
  std::size_t distance_after = 0;
};

namespace detail {

using Ids = std::vector<int>;

inline std::size_t levenshtein(const Ids& hyp, const Ids& ref, std::vector<std::size_t>& row) {
  const std::size_t m = ref.size();
  row.resize(m + 1);
  for (std::size_t j = 0; j <= m; ++j) row[j] = j;
  for (std::size_t i = 1; i <= hyp.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    const int h = hyp[i - 1];
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t up = row[j];
      const std::size_t sub = diag + (h == ref[j - 1] ? 0 : 1);
      row[j] = std::min({up + 1, row[j - 1] + 1, sub});
      diag = up;
    }
  }
  return row[m];
}

/// Edit breakdown of an optimal alignment. Backtrace preference: diagonal,
/// then deletion, then insertion.
inline TERScore edit_breakdown(const Ids& hyp, const Ids& ref) {
  const std::size_t n = hyp.size(), m = ref.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      at(i, j) = std::min({at(i - 1, j) + 1, at(i, j - 1) + 1,
                           at(i - 1, j - 1) + (hyp[i - 1] == ref[j - 1] ? 0 : 1)});
  TERScore s;
  s.ref_len = m;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = hyp[i - 1] == ref[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (same ? 0 : 1)) {
        if (!same) ++s.substitutions;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++s.deletions;
      --i;
    } else {
      ++s.insertions;
      --j;
    }
  }
  return s;
}

inline void apply_shift(const Ids& in, std::size_t start, std::size_t len, std::size_t dest,
                        Ids& out) {
  // Remove the block, then reinsert it so that it begins at `dest`.
  out.clear();
  out.reserve(in.size());
  std::size_t rest = 0;  // index into the sequence with the block removed
  auto rest_at = [&](std::size_t k) { return k < start ? in[k] : in[k + len]; };
  const std::size_t rest_size = in.size() - len;
  for (; rest < dest; ++rest) out.push_back(rest_at(rest));
  out.insert(out.end(), in.begin() + static_cast<long>(start),
             in.begin() + static_cast<long>(start + len));
  for (; rest < rest_size; ++rest) out.push_back(rest_at(rest));
}

/// Calls visit(start, len, dest, shifted) for every admissible block move.
template <typename Visitor>
void for_each_shift(const Ids& seq, Ids& scratch, Visitor&& visit) {
  const std::size_t n = seq.size();
  for (std::size_t start = 0; start < n; ++start) {
    for (std::size_t len = 1; len <= std::min(kMaxShiftSize, n - start); ++len) {
      for (std::size_t dest = 0; dest + len <= n; ++dest) {
        if (dest == start) continue;
        const std::size_t dist = dest > start ? dest - start : start - dest;
        if (dist > kMaxShiftDistance) continue;
        apply_shift(seq, start, len, dest, scratch);
        visit(start, len, dest, scratch);
      }
    }
  }
}

inline std::pair<Ids, Ids> intern(const std::vector<std::string>& hyp,
                                  const std::vector<std::string>& ref) {
  std::unordered_map<std::string_view, int> ids;
  auto id_of = [&](const std::string& w) {
    return ids.try_emplace(w, static_cast<int>(ids.size())).first->second;
  };
  Ids h, r;
  for (const auto& w : ref) r.push_back(id_of(w));
  for (const auto& w : hyp) h.push_back(id_of(w));
  return {std::move(h), std::move(r)};
}

struct GreedyResult {
  Ids shifted;
  std::size_t shifts = 0;
};

inline GreedyResult greedy_shifts(Ids hyp, const Ids& ref, std::vector<ShiftStep>* trace) {
  std::vector<std::size_t> row;
  Ids scratch;
  std::size_t shifts = 0;
  while (true) {
    const std::size_t current = levenshtein(hyp, ref, row);
    if (current < 2) break;
    std::size_t best_gain = 1;
    ShiftStep best{};
    bool found = false;
    for_each_shift(hyp, scratch, [&](std::size_t start, std::size_t len, std::size_t dest,
                                     const Ids& shifted) {
      const std::size_t after = levenshtein(shifted, ref, row);
      if (after < current && current - after > best_gain) {
        best_gain = current - after;
        best = {start, len, dest, current, after};
        found = true;
      }
    });
    if (!found) break;
    apply_shift(hyp, best.start, best.length, best.dest, scratch);
    hyp.swap(scratch);
    ++shifts;
    if (trace) trace->push_back(best);
  }
  return {std::move(hyp), shifts};
}

inline std::size_t bag_lower_bound(const Ids& hyp, const Ids& ref) {
  std::unordered_map<int, long> counts;
  for (int w : ref) ++counts[w];
  std::size_t common = 0;
  for (int w : hyp)
    if (counts[w]-- > 0) ++common;
  return std::max(hyp.size(), ref.size()) - common;
}

// Shifts permute the hypothesis, so a state is a sequence over the (at most
// kExactSearchMaxTokens) distinct hypothesis ids; 8 bits per position suffice.
inline std::uint64_t pack(const Ids& seq, const std::unordered_map<int, int>& local) {
  std::uint64_t key = 0;
  for (int w : seq) key = (key << 8) | static_cast<std::uint64_t>(local.at(w) + 1);
  return key;
}

/// Exact minimum of (#shifts + Levenshtein) when it beats `best_total`.
inline void exact_refine(const Ids& hyp, const Ids& ref, GreedyResult& best,
                         std::size_t& best_total) {
  const std::size_t lower = bag_lower_bound(hyp, ref);
  if (best_total <= lower) return;
  std::vector<std::size_t> row;
  Ids scratch;
  std::unordered_map<int, int> local;
  for (int w : hyp) local.try_emplace(w, static_cast<int>(local.size()));
  std::unordered_set<std::uint64_t> seen{pack(hyp, local)};
  std::vector<Ids> frontier{hyp}, next;
  for (std::size_t depth = 1; depth + lower < best_total && !frontier.empty(); ++depth) {
    next.clear();
    for (const auto& state : frontier) {
      for_each_shift(state, scratch,
                     [&](std::size_t, std::size_t, std::size_t, const Ids& shifted) {
                       if (!seen.insert(pack(shifted, local)).second) return;
                       const std::size_t total = depth + levenshtein(shifted, ref, row);
                       if (total < best_total) {
                         best_total = total;
                         best = {shifted, depth};
                       }
                       next.push_back(shifted);
                     });
    }
    frontier.swap(next);
  }
}

}  // namespace detail

/// The greedy shift loop alone, without exact refinement.
inline TERScore ter_greedy(const std::vector<std::string>& hyp, const std::vector<std::string>& ref,
                           std::vector<ShiftStep>* trace = nullptr) {
  if (ref.empty()) throw Error("undefined TER: empty reference");
  auto [h, r] = detail::intern(hyp, ref);
  auto g = detail::greedy_shifts(std::move(h), r, trace);
  TERScore s = detail::edit_breakdown(g.shifted, r);
  s.shifts = g.shifts;
  return s;
}

inline TERScore ter(const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
  if (ref.empty()) throw Error("undefined TER: empty reference");
  auto [h, r] = detail::intern(hyp, ref);
  auto best = detail::greedy_shifts(h, r, nullptr);
  if (h.size() <= kExactSearchMaxTokens) {
    std::vector<std::size_t> row;
    std::size_t total = best.shifts + detail::levenshtein(best.shifted, r, row);
    detail::exact_refine(h, r, best, total);
  }
  TERScore s = detail::edit_breakdown(best.shifted, r);
  s.shifts = best.shifts;
  return s;
}

inline TERScore ter_sentence(std::string_view hyp, std::string_view ref,
                             TokenizeOptions opt = {}) {
  return ter(tokenize_tercom(hyp, opt), tokenize_tercom(ref, opt));
}

/// "ins\tdel\tsub\tshft\tref_len\tscore" with six fractional digits.
inline std::string format_batch_line(const TERScore& s) {
  char score[32];
  std::snprintf(score, sizeof score, "%.6f", s.score());
  return std::to_string(s.insertions) + '\t' + std::to_string(s.deletions) + '\t' +
         std::to_string(s.substitutions) + '\t' + std::to_string(s.shifts) + '\t' +
         std::to_string(s.ref_len) + '\t' + score;
}

struct BatchSummary {
  std::size_t pairs = 0;
  std::size_t total_edits = 0;
  std::size_t total_ref_len = 0;

  double corpus_ter() const {
    return total_ref_len ? static_cast<double>(total_edits) / static_cast<double>(total_ref_len)
                         : 0.0;
  }
};

/// Scores hyp<TAB>ref lines. Throws on the first malformed line; callers that
/// write to a file must write to a temporary and rename on success.
inline std::vector<TERScore> score_batch(std::istream& in, TokenizeOptions opt = {}) {
  std::vector<TERScore> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
      throw ValidationError("malformed pair at line " + std::to_string(lineno) +
                            ": expected hyp<TAB>ref");
    const auto ref = tokenize_tercom(std::string_view(line).substr(tab + 1), opt);
    if (ref.empty())
      throw ValidationError("undefined TER: empty reference at line " + std::to_string(lineno));
    out.push_back(ter(tokenize_tercom(std::string_view(line).substr(0, tab), opt), ref));
  }
  return out;
}

inline BatchSummary write_batch(std::ostream& out, const std::vector<TERScore>& scores) {
  BatchSummary sum;
  for (const auto& s : scores) {
    out << format_batch_line(s) << '\n';
    ++sum.pairs;
    sum.total_edits += s.edits();
    sum.total_ref_len += s.ref_len;
  }
  return sum;
}

}  // namespace qeforge::metrics

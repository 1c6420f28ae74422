#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "qeforge/error.hpp"
#include "qeforge/log.hpp"
#include "qeforge/modeling/encoder.hpp"
#include "qeforge/random.hpp"

namespace qeforge::modeling {

inline constexpr std::size_t kMaxRenderedTokens = 200;

/// Cuts `ids` to `limit`, removing from the tail of the TRG segment first and
/// then from the tail of the SRC segment. Segment bounds are given as
/// [src_begin, src_end) and [tgt_begin, tgt_end). Returns true if anything
/// was removed.
inline bool truncate_segments(std::vector<int>& ids, std::size_t src_begin, std::size_t src_end,
                              std::size_t tgt_begin, std::size_t tgt_end, std::size_t limit) {
  if (ids.size() <= limit) return false;
  std::size_t excess = ids.size() - limit;
  const std::size_t from_tgt = std::min(excess, tgt_end - tgt_begin);
  ids.erase(ids.begin() + static_cast<std::ptrdiff_t>(tgt_end - from_tgt),
            ids.begin() + static_cast<std::ptrdiff_t>(tgt_end));
  excess -= from_tgt;
  const std::size_t from_src = std::min(excess, src_end - src_begin);
  ids.erase(ids.begin() + static_cast<std::ptrdiff_t>(src_end - from_src),
            ids.begin() + static_cast<std::ptrdiff_t>(src_end));
  excess -= from_src;
  if (excess) ids.resize(limit);
  return true;
}

/// Token embeddings plus learned position embeddings, one tanh mixing layer
/// shared across positions, mean pooling.
class ToyEncoder final : public EncoderBackend {
 public:
  ToyEncoder(Vocabulary vocab, std::size_t hidden_width, std::uint64_t seed,
             std::size_t max_len = kMaxRenderedTokens)
      : vocab_(std::move(vocab)), h_(hidden_width), max_len_(max_len) {
    if (h_ < 8) throw ValidationError("hidden_width must be at least 8");
    if (max_len_ < 4) throw ValidationError("max_len must be at least 4");
    for (int b = 0; b < 256; ++b) {
      auto id = vocab_.find(byte_token(static_cast<unsigned char>(b)));
      if (!id) throw ValidationError("vocabulary lacks byte-fallback tokens");
      byte_ids_[static_cast<std::size_t>(b)] = *id;
    }
    Rng rng(seed);
    emb_.resize(vocab_.size() * h_);
    pos_.resize(max_len_ * h_);
    w_.resize(h_ * h_);
    b_.assign(h_, 0.0);
    for (auto& x : emb_) x = rng.normal(0.0, 0.1);
    for (auto& x : pos_) x = rng.normal(0.0, 0.02);
    const double scale = 1.0 / std::sqrt(static_cast<double>(h_));
    for (auto& x : w_) x = rng.normal(0.0, scale);
    resize_grads();
  }

  ToyEncoder(const ToyEncoder& o)
      : vocab_(o.vocab_), h_(o.h_), max_len_(o.max_len_), byte_ids_(o.byte_ids_), emb_(o.emb_), pos_(o.pos_), w_(o.w_),
        b_(o.b_), g_emb_(o.g_emb_), g_pos_(o.g_pos_), g_w_(o.g_w_), g_b_(o.g_b_),
        truncations_(o.truncations_.load()) {}

  std::string name() const override { return "toy"; }
  std::size_t hidden_width() const override { return h_; }
  std::size_t max_len() const { return max_len_; }
  const Vocabulary& vocabulary() const override { return vocab_; }
  std::size_t truncations() const override { return truncations_; }

  nlohmann::json config() const override {
    return {{"backend", "toy"}, {"hidden_width", h_}, {"max_len", max_len_}};
  }

  std::span<const double> embedding_row(int id) const {
    return {emb_.data() + static_cast<std::size_t>(id) * h_, h_};
  }

  void extend_vocabulary(std::span<const std::string> tags, std::uint64_t seed) override {
    for (std::size_t i = 0; i < tags.size(); ++i) {
      if (vocab_.contains(tags[i]))
        throw ValidationError("token '" + tags[i] + "' already in vocabulary");
      for (std::size_t j = 0; j < i; ++j)
        if (tags[j] == tags[i]) throw ValidationError("duplicate tag '" + tags[i] + "'");
    }
    const std::size_t old_rows = vocab_.size();
    std::vector<double> mean(h_, 0.0);
    for (std::size_t r = 0; r < old_rows; ++r)
      for (std::size_t k = 0; k < h_; ++k) mean[k] += emb_[r * h_ + k];
    for (auto& m : mean) m /= static_cast<double>(old_rows);
    Rng rng(seed);
    for (const auto& t : tags) {
      vocab_.add(t);
      for (std::size_t k = 0; k < h_; ++k) emb_.push_back(mean[k] + rng.normal(0.0, 0.02));
    }
    resize_grads();
  }

  /// Token ids for a rendered input, truncated to max_len.
  std::vector<int> token_ids(std::string_view rendered) const {
    const auto pieces = whitespace_pieces(rendered);
    std::vector<int> ids;
    // Segment boundaries in id space, filled in when the template is recognised.
    std::size_t src_b = 0, src_e = 0, tgt_b = 0, tgt_e = 0;
    std::size_t first_sep = pieces.size(), last_sep = pieces.size();
    for (std::size_t i = 0; i < pieces.size(); ++i)
      if (pieces[i] == SpecialTokens::sep) {
        if (first_sep == pieces.size()) first_sep = i;
        last_sep = i;
      }
    std::size_t tgt_piece_end = last_sep;
    if (last_sep > 0 && last_sep < pieces.size() &&
        (pieces[last_sep - 1] == SpecialTokens::id_tag ||
         pieces[last_sep - 1] == SpecialTokens::ood_tag))
      tgt_piece_end = last_sep - 1;
    const bool templated = !pieces.empty() && pieces[0] == SpecialTokens::bos &&
                           first_sep < last_sep && tgt_piece_end > first_sep;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      if (templated && i == 1) src_b = ids.size();
      if (templated && i == first_sep) src_e = ids.size();
      if (templated && i == first_sep + 1) tgt_b = ids.size();
      if (templated && i == tgt_piece_end) tgt_e = ids.size();
      append_piece(pieces[i], ids);
    }
    bool cut = false;
    if (templated) {
      cut = truncate_segments(ids, src_b, src_e, tgt_b, tgt_e, max_len_);
    } else if (ids.size() > max_len_) {
      ids.resize(max_len_);
      cut = true;
    }
    if (cut) {
      const auto n = ++truncations_;
      if (n <= 3) log::notice("input truncated to " + std::to_string(max_len_) + " tokens");
    }
    return ids;
  }

  using EncoderBackend::encode;
  std::vector<double> encode(std::string_view rendered) const override {
    return run(token_ids(rendered), nullptr);
  }

  std::vector<double> encode_traced(std::string_view rendered,
                                    std::unique_ptr<Trace>& trace) const override {
    auto t = std::make_unique<ToyTrace>();
    t->ids = token_ids(rendered);
    auto pooled = run(t->ids, t.get());
    trace = std::move(t);
    return pooled;
  }

  void backward(const Trace& trace, std::span<const double> d_pooled) override {
    const auto& t = dynamic_cast<const ToyTrace&>(trace);
    const std::size_t n = t.ids.size();
    if (n == 0) return;
    const double inv = 1.0 / static_cast<double>(n);
    std::vector<double> dz(h_), dx(h_);
    for (std::size_t p = 0; p < n; ++p) {
      const double* x = &t.x[p * h_];
      const double* a = &t.a[p * h_];
      for (std::size_t k = 0; k < h_; ++k) dz[k] = d_pooled[k] * inv * (1.0 - a[k] * a[k]);
      std::fill(dx.begin(), dx.end(), 0.0);
      for (std::size_t r = 0; r < h_; ++r) {
        const double d = dz[r];
        g_b_[r] += d;
        double* gw = &g_w_[r * h_];
        const double* w = &w_[r * h_];
        for (std::size_t c = 0; c < h_; ++c) {
          gw[c] += d * x[c];
          dx[c] += w[c] * d;
        }
      }
      double* ge = &g_emb_[static_cast<std::size_t>(t.ids[p]) * h_];
      double* gp = &g_pos_[p * h_];
      for (std::size_t k = 0; k < h_; ++k) {
        ge[k] += dx[k];
        gp[k] += dx[k];
      }
    }
  }

  std::vector<ParamGroup> parameters() override {
    return {{"embeddings", emb_, g_emb_},
            {"positions", pos_, g_pos_},
            {"mix.weight", w_, g_w_},
            {"mix.bias", b_, g_b_}};
  }

  std::unique_ptr<EncoderBackend> clone() const override {
    return std::make_unique<ToyEncoder>(*this);
  }

 private:
  struct ToyTrace final : Trace {
    std::vector<int> ids;
    std::vector<double> x, a;
  };

  void append_piece(std::string_view piece, std::vector<int>& ids) const {
    if (auto id = vocab_.find(piece)) {
      ids.push_back(*id);
      return;
    }
    for (unsigned char c : piece) ids.push_back(byte_ids_[c]);
  }

  std::vector<double> run(const std::vector<int>& ids, ToyTrace* trace) const {
    std::vector<double> pooled(h_, 0.0);
    const std::size_t n = ids.size();
    if (n == 0) return pooled;
    std::vector<double> x(h_), a(h_);
    if (trace) {
      trace->x.resize(n * h_);
      trace->a.resize(n * h_);
    }
    for (std::size_t p = 0; p < n; ++p) {
      const double* e = &emb_[static_cast<std::size_t>(ids[p]) * h_];
      const double* q = &pos_[p * h_];
      for (std::size_t k = 0; k < h_; ++k) x[k] = e[k] + q[k];
      for (std::size_t r = 0; r < h_; ++r) {
        double s = b_[r];
        const double* w = &w_[r * h_];
        for (std::size_t c = 0; c < h_; ++c) s += w[c] * x[c];
        a[r] = std::tanh(s);
        pooled[r] += a[r];
      }
      if (trace) {
        std::copy(x.begin(), x.end(), trace->x.begin() + static_cast<std::ptrdiff_t>(p * h_));
        std::copy(a.begin(), a.end(), trace->a.begin() + static_cast<std::ptrdiff_t>(p * h_));
      }
    }
    for (auto& v : pooled) v /= static_cast<double>(n);
    return pooled;
  }

  void resize_grads() {
    g_emb_.resize(emb_.size(), 0.0);
    g_pos_.resize(pos_.size(), 0.0);
    g_w_.resize(w_.size(), 0.0);
    g_b_.resize(b_.size(), 0.0);
  }

  Vocabulary vocab_;
  std::size_t h_;
  std::size_t max_len_;
  std::array<int, 256> byte_ids_{};
  std::vector<double> emb_, pos_, w_, b_;
  std::vector<double> g_emb_, g_pos_, g_w_, g_b_;
  mutable std::atomic<std::size_t> truncations_{0};
};

/// Toy encoder over the base vocabulary built from `spec`.
inline std::unique_ptr<ToyEncoder> toy_encoder(std::uint64_t seed, std::size_t hidden_width,
                                               const VocabSpec& spec) {
  return std::make_unique<ToyEncoder>(base_vocabulary(spec), hidden_width, seed);
}

}  // namespace qeforge::modeling

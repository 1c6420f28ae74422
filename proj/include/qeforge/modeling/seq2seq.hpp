#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "qeforge/corpus.hpp"
#include "qeforge/early_stopping.hpp"
#include "qeforge/error.hpp"
#include "qeforge/hash.hpp"
#include "qeforge/modeling/encoder.hpp"
#include "qeforge/modeling/optimizer.hpp"
#include "qeforge/modeling/vocabulary.hpp"
#include "qeforge/random.hpp"
#include "qeforge/translator.hpp"
#include "qeforge/unicode.hpp"

namespace qeforge::modeling {

struct Seq2SeqConfig {
  std::size_t hidden_width = 48;
  /// Characters kept per side; longer texts are cut at the tail.
  std::size_t max_len = 64;
  std::size_t max_vocab = 512;
  std::size_t batch_size = 16;
  std::size_t eval_interval = 100;
  std::size_t patience = 5;
  std::size_t max_updates = 4000;
  std::uint64_t seed = 8;
  OptimizerConfig optimizer{.lr = 5e-3, .weight_decay = 0.0, .clip_norm = 5.0};

  void validate() const {
    if (hidden_width < 8) throw ValidationError("seq2seq hidden_width must be at least 8");
    if (max_len < 1 || batch_size < 1 || eval_interval < 1 || patience < 1)
      throw ValidationError("seq2seq max_len, batch_size, eval_interval and patience must be >= 1");
    if (max_updates < eval_interval)
      throw ValidationError("seq2seq max_updates must be at least eval_interval");
    optimizer.validate();
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(Seq2SeqConfig, hidden_width, max_len, max_vocab,
                                                batch_size, eval_interval, patience, max_updates,
                                                seed, optimizer)

/// Character-level encoder-decoder with dot-product attention.
///
/// Encoder states h_i = tanh(We (Es[c_i] + Ps[i]) + be) over the source
/// characters and a closing EOS. Decoder step t forms a query
/// q = tanh(Wq (Et[y_{t-1}] + Pt[t]) + bq), attends over h, and predicts
/// softmax(V tanh(Wo [context; q] + bo) + bv).
class ToySeq2Seq final : public Translator {
 public:
  static constexpr int kBos = 0, kEos = 1, kUnk = 2;

  ToySeq2Seq(Vocabulary chars, std::size_t hidden_width, std::size_t max_len, std::uint64_t seed)
      : chars_(std::move(chars)), d_(hidden_width), max_len_(max_len), seed_(seed) {
    if (chars_.size() < 3 || chars_.token(kBos) != "<s>" || chars_.token(kEos) != "</s>" ||
        chars_.token(kUnk) != "<unk>")
      throw ValidationError("character vocabulary must start with <s>, </s>, <unk>");
    const std::size_t v = chars_.size(), d = d_, l = max_len_ + 1;
    Rng rng(seed);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(d));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(2 * d));
    auto init = [&](Block& b, std::string name, std::size_t n, double sd) {
      b.name = std::move(name);
      b.value.resize(n);
      for (auto& x : b.value) x = sd > 0 ? rng.normal(0.0, sd) : 0.0;
      b.grad.assign(n, 0.0);
    };
    init(es_, "src.embeddings", v * d, 0.5);
    init(ps_, "src.positions", l * d, 0.5);
    init(we_, "enc.weight", d * d, s1);
    init(be_, "enc.bias", d, 0);
    init(et_, "tgt.embeddings", v * d, 0.5);
    init(pt_, "tgt.positions", l * d, 0.5);
    init(wq_, "query.weight", d * d, s1);
    init(bq_, "query.bias", d, 0);
    init(wo_, "out.weight", d * 2 * d, s2);
    init(bo_, "out.bias", d, 0);
    init(vw_, "proj.weight", v * d, s1);
    init(bv_, "proj.bias", v, 0);
  }

  /// Specials followed by the most frequent characters of both sides.
  static Vocabulary build_vocabulary(std::span<const ParallelSample> pairs, std::size_t max_vocab) {
    std::map<std::string, std::size_t> counts;
    auto count = [&](std::string_view s) {
      unicode::for_each_unit(s, [&](const unicode::Unit& u) { ++counts[std::string(u.bytes)]; });
    };
    for (const auto& p : pairs) {
      count(p.src);
      count(p.ref);
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocabulary v;
    v.add("<s>");
    v.add("</s>");
    v.add("<unk>");
    for (const auto& [c, n] : ranked) {
      if (v.size() >= std::max<std::size_t>(max_vocab, 3)) break;
      if (!v.contains(c)) v.add(c);
    }
    return v;
  }

  const Vocabulary& vocabulary() const { return chars_; }
  std::size_t hidden_width() const { return d_; }
  std::size_t max_len() const { return max_len_; }

  std::string name() const override { return "toy-seq2seq"; }

  nlohmann::json config() const {
    return {{"backend", "toy-seq2seq"}, {"hidden_width", d_}, {"max_len", max_len_}};
  }

  std::uint64_t fingerprint() const override {
    Fingerprint fp;
    fp.text(name());
    for (const auto& t : chars_.tokens()) fp.text(t);
    for (const Block* b : blocks()) {
      fp.text(b->name);
      fp.doubles(b->value);
    }
    return fp.value();
  }

  std::vector<int> encode_text(std::string_view s) const {
    std::vector<int> ids;
    unicode::for_each_unit(s, [&](const unicode::Unit& u) {
      if (ids.size() >= max_len_) return;
      auto id = chars_.find(u.bytes);
      ids.push_back(id ? *id : kUnk);
    });
    return ids;
  }

  std::vector<ParamGroup> parameters() {
    std::vector<ParamGroup> out;
    for (Block* b : blocks()) out.push_back({b->name, b->value, b->grad});
    return out;
  }

  void zero_grad() {
    for (Block* b : blocks()) std::fill(b->grad.begin(), b->grad.end(), 0.0);
  }

  /// Summed cross-entropy over target characters plus EOS; when `grad_scale`
  /// is non-zero, gradients of grad_scale * loss are accumulated.
  double pair_loss(std::string_view src, std::string_view ref, double grad_scale = 0.0,
                   std::size_t* tokens = nullptr) {
    const auto x = encode_text(src);
    auto y = encode_text(ref);
    y.push_back(kEos);
    if (tokens) *tokens += y.size();
    Encoded enc = run_encoder(x);
    std::vector<Step> steps;
    steps.reserve(y.size());
    double total = 0.0;
    int prev = kBos;
    for (std::size_t t = 0; t < y.size(); ++t) {
      steps.push_back(run_step(enc, prev, t));
      total -= std::log(std::max(steps.back().p[static_cast<std::size_t>(y[t])], 1e-300));
      prev = y[t];
    }
    if (grad_scale != 0.0) backward(enc, steps, y, grad_scale);
    return total;
  }

  /// Mean per-character cross-entropy over a corpus, no gradients.
  double corpus_loss(std::span<const ParallelSample> pairs) const {
    auto& self = const_cast<ToySeq2Seq&>(*this);
    double total = 0.0;
    std::size_t tokens = 0;
    for (const auto& p : pairs) total += self.pair_loss(p.src, p.ref, 0.0, &tokens);
    return tokens ? total / static_cast<double>(tokens) : 0.0;
  }

  std::string greedy(std::string_view src) const {
    const auto x = encode_text(src);
    const Encoded enc = run_encoder(x);
    const std::size_t limit = std::min(max_len_, 2 * x.size() + 8);
    std::string out;
    int prev = kBos;
    for (std::size_t t = 0; t <= limit && t <= max_len_; ++t) {
      const Step s = run_step(enc, prev, t);
      const auto best = static_cast<int>(std::max_element(s.p.begin(), s.p.end()) - s.p.begin());
      if (best == kEos) break;
      if (best != kBos && best != kUnk) out += chars_.token(best);
      prev = best;
    }
    return out;
  }

  std::vector<std::string> translate(std::span<const std::string> sources) const override {
    std::vector<std::string> out;
    out.reserve(sources.size());
    for (const auto& s : sources) out.push_back(greedy(s));
    return out;
  }

 private:
  struct Block {
    std::string name;
    std::vector<double> value, grad;
  };

  struct Encoded {
    std::vector<int> ids;  // source ids plus EOS
    std::vector<double> x, h;
  };

  struct Step {
    int prev;
    std::size_t t;
    std::vector<double> u, q, alpha, c, o, p;
  };

  std::vector<Block*> blocks() {
    return {&es_, &ps_, &we_, &be_, &et_, &pt_, &wq_, &bq_, &wo_, &bo_, &vw_, &bv_};
  }
  std::vector<const Block*> blocks() const {
    return {&es_, &ps_, &we_, &be_, &et_, &pt_, &wq_, &bq_, &wo_, &bo_, &vw_, &bv_};
  }

  // out = tanh(W in + b), W is rows x cols row-major.
  static void affine_tanh(const std::vector<double>& w, const std::vector<double>& b,
                          const double* in, std::size_t rows, std::size_t cols, double* out) {
    for (std::size_t r = 0; r < rows; ++r) {
      double s = b[r];
      const double* wr = &w[r * cols];
      for (std::size_t c = 0; c < cols; ++c) s += wr[c] * in[c];
      out[r] = std::tanh(s);
    }
  }

  // Given d(out) for out = tanh(W in + b): accumulates dW, db and adds W^T dz to d_in.
  static void affine_tanh_backward(const std::vector<double>& w, Block& gw, Block& gb,
                                   const double* in, const double* out, const double* d_out,
                                   std::size_t rows, std::size_t cols, double* d_in) {
    for (std::size_t r = 0; r < rows; ++r) {
      const double dz = d_out[r] * (1.0 - out[r] * out[r]);
      if (dz == 0.0) continue;
      gb.grad[r] += dz;
      double* g = &gw.grad[r * cols];
      const double* wr = &w[r * cols];
      for (std::size_t c = 0; c < cols; ++c) {
        g[c] += dz * in[c];
        d_in[c] += wr[c] * dz;
      }
    }
  }

  Encoded run_encoder(const std::vector<int>& src) const {
    Encoded e;
    e.ids = src;
    e.ids.push_back(kEos);
    const std::size_t n = e.ids.size(), d = d_;
    e.x.resize(n * d);
    e.h.resize(n * d);
    for (std::size_t i = 0; i < n; ++i) {
      const double* emb = &es_.value[static_cast<std::size_t>(e.ids[i]) * d];
      const double* pos = &ps_.value[i * d];
      for (std::size_t k = 0; k < d; ++k) e.x[i * d + k] = emb[k] + pos[k];
      affine_tanh(we_.value, be_.value, &e.x[i * d], d, d, &e.h[i * d]);
    }
    return e;
  }

  Step run_step(const Encoded& enc, int prev, std::size_t t) const {
    const std::size_t d = d_, n = enc.ids.size(), v = chars_.size();
    const std::size_t tp = std::min(t, max_len_);
    Step s;
    s.prev = prev;
    s.t = tp;
    s.u.resize(d);
    s.q.resize(d);
    const double* emb = &et_.value[static_cast<std::size_t>(prev) * d];
    const double* pos = &pt_.value[tp * d];
    for (std::size_t k = 0; k < d; ++k) s.u[k] = emb[k] + pos[k];
    affine_tanh(wq_.value, bq_.value, s.u.data(), d, d, s.q.data());
    s.alpha.resize(n);
    double mx = -1e300;
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += s.q[k] * enc.h[i * d + k];
      s.alpha[i] = dot;
      mx = std::max(mx, dot);
    }
    double z = 0.0;
    for (auto& a : s.alpha) z += (a = std::exp(a - mx));
    for (auto& a : s.alpha) a /= z;
    std::vector<double> cat(2 * d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < d; ++k) cat[k] += s.alpha[i] * enc.h[i * d + k];
    for (std::size_t k = 0; k < d; ++k) cat[d + k] = s.q[k];
    s.c.assign(cat.begin(), cat.end());
    s.o.resize(d);
    affine_tanh(wo_.value, bo_.value, cat.data(), d, 2 * d, s.o.data());
    s.p.resize(v);
    mx = -1e300;
    for (std::size_t r = 0; r < v; ++r) {
      double l = bv_.value[r];
      const double* w = &vw_.value[r * d];
      for (std::size_t k = 0; k < d; ++k) l += w[k] * s.o[k];
      s.p[r] = l;
      mx = std::max(mx, l);
    }
    z = 0.0;
    for (auto& p : s.p) z += (p = std::exp(p - mx));
    for (auto& p : s.p) p /= z;
    return s;
  }

  void backward(const Encoded& enc, const std::vector<Step>& steps, const std::vector<int>& y,
                double scale) {
    const std::size_t d = d_, n = enc.ids.size(), v = chars_.size();
    std::vector<double> dh(n * d, 0.0);
    std::vector<double> dlogit(v), d_o(d), d_cat(2 * d), d_q(d), d_alpha(n), d_u(d);
    for (std::size_t t = 0; t < steps.size(); ++t) {
      const Step& s = steps[t];
      for (std::size_t r = 0; r < v; ++r) dlogit[r] = scale * s.p[r];
      dlogit[static_cast<std::size_t>(y[t])] -= scale;
      std::fill(d_o.begin(), d_o.end(), 0.0);
      for (std::size_t r = 0; r < v; ++r) {
        const double g = dlogit[r];
        bv_.grad[r] += g;
        double* gw = &vw_.grad[r * d];
        const double* w = &vw_.value[r * d];
        for (std::size_t k = 0; k < d; ++k) {
          gw[k] += g * s.o[k];
          d_o[k] += w[k] * g;
        }
      }
      std::fill(d_cat.begin(), d_cat.end(), 0.0);
      affine_tanh_backward(wo_.value, wo_, bo_, s.c.data(), s.o.data(), d_o.data(), d, 2 * d,
                           d_cat.data());
      // Attention: context = sum_i alpha_i h_i, scores = q . h_i.
      for (std::size_t k = 0; k < d; ++k) d_q[k] = d_cat[d + k];
      double weighted = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double g = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          g += d_cat[k] * enc.h[i * d + k];
          dh[i * d + k] += s.alpha[i] * d_cat[k];
        }
        d_alpha[i] = g;
        weighted += s.alpha[i] * g;
      }
      for (std::size_t i = 0; i < n; ++i) {
        const double ds = s.alpha[i] * (d_alpha[i] - weighted);
        for (std::size_t k = 0; k < d; ++k) {
          d_q[k] += ds * enc.h[i * d + k];
          dh[i * d + k] += ds * s.q[k];
        }
      }
      std::fill(d_u.begin(), d_u.end(), 0.0);
      affine_tanh_backward(wq_.value, wq_, bq_, s.u.data(), s.q.data(), d_q.data(), d, d,
                           d_u.data());
      double* ge = &et_.grad[static_cast<std::size_t>(s.prev) * d];
      double* gp = &pt_.grad[s.t * d];
      for (std::size_t k = 0; k < d; ++k) {
        ge[k] += d_u[k];
        gp[k] += d_u[k];
      }
    }
    std::vector<double> d_x(d);
    for (std::size_t i = 0; i < n; ++i) {
      std::fill(d_x.begin(), d_x.end(), 0.0);
      affine_tanh_backward(we_.value, we_, be_, &enc.x[i * d], &enc.h[i * d], &dh[i * d], d, d,
                           d_x.data());
      double* ge = &es_.grad[static_cast<std::size_t>(enc.ids[i]) * d];
      double* gp = &ps_.grad[i * d];
      for (std::size_t k = 0; k < d; ++k) {
        ge[k] += d_x[k];
        gp[k] += d_x[k];
      }
    }
  }

  Vocabulary chars_;
  std::size_t d_;
  std::size_t max_len_;
  std::uint64_t seed_;
  Block es_, ps_, we_, be_, et_, pt_, wq_, bq_, wo_, bo_, vw_, bv_;
};

struct Seq2SeqEval {
  std::size_t updates = 0;
  double dev_loss = 0.0;
};

struct Seq2SeqRun {
  std::unique_ptr<ToySeq2Seq> model;  // best by dev loss
  std::vector<Seq2SeqEval> history;
  std::size_t updates = 0;
  bool early_stopped = false;
};

/// Teacher-forced training with dev-loss early stopping; returns the best model.
inline Seq2SeqRun train_seq2seq(std::span<const ParallelSample> train,
                                std::span<const ParallelSample> dev, const Seq2SeqConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw ValidationError("translator training corpus is empty");
  if (dev.empty()) dev = train.first(std::min<std::size_t>(train.size(), 64));
  auto model = std::make_unique<ToySeq2Seq>(ToySeq2Seq::build_vocabulary(train, cfg.max_vocab),
                                            cfg.hidden_width, cfg.max_len, cfg.seed);
  AdamW opt(cfg.optimizer);
  Seq2SeqRun run;
  std::vector<double> losses;
  std::vector<std::size_t> order;
  std::size_t cursor = 0, epoch = 0;
  while (run.updates < cfg.max_updates) {
    model->zero_grad();
    std::size_t tokens = 0;
    std::vector<std::size_t> batch;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        order = permutation(train.size(), derive_seed(cfg.seed, ++epoch));
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }
    for (auto i : batch) tokens += model->encode_text(train[i].ref).size() + 1;
    const double scale = 1.0 / static_cast<double>(tokens);
    for (auto i : batch) model->pair_loss(train[i].src, train[i].ref, scale);
    opt.step(model->parameters());
    ++run.updates;
    if (run.updates % cfg.eval_interval == 0) {
      const double dev_loss = model->corpus_loss(dev);
      losses.push_back(dev_loss);
      run.history.push_back({run.updates, dev_loss});
      if (best_index(losses) == losses.size() - 1) run.model = std::make_unique<ToySeq2Seq>(*model);
      if (should_stop(losses, cfg.patience)) {
        run.early_stopped = true;
        break;
      }
    }
  }
  if (!run.model) run.model = std::move(model);
  return run;
}

}  // namespace qeforge::modeling

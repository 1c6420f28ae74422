#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "qeforge/error.hpp"
#include "qeforge/hash.hpp"
#include "qeforge/modeling/encoder.hpp"
#include "qeforge/random.hpp"

namespace qeforge::modeling {

/// Encoder plus an affine head producing one raw scalar per input.
class QEModel {
 public:
  /// Empty placeholder; assign a real model before use.
  QEModel() = default;

  QEModel(std::unique_ptr<EncoderBackend> backend, std::uint64_t seed)
      : backend_(std::move(backend)) {
    if (!backend_) throw ValidationError("QEModel needs a backend");
    const std::size_t h = backend_->hidden_width();
    Rng rng(derive_seed(seed, 0x4845414455ULL));
    head_w_.resize(h);
    for (auto& w : head_w_) w = rng.normal(0.0, 1.0 / std::sqrt(static_cast<double>(h)));
    head_b_.assign(1, 0.0);
    g_w_.assign(h, 0.0);
    g_b_.assign(1, 0.0);
  }

  QEModel(const QEModel& o)
      : backend_(o.backend_ ? o.backend_->clone() : nullptr), head_w_(o.head_w_), head_b_(o.head_b_), g_w_(o.g_w_),
        g_b_(o.g_b_) {}
  QEModel& operator=(const QEModel& o) {
    if (this != &o) *this = QEModel(o);
    return *this;
  }
  QEModel(QEModel&&) noexcept = default;
  QEModel& operator=(QEModel&&) noexcept = default;

  bool empty() const { return !backend_; }
  EncoderBackend& backend() { return *backend_; }
  const EncoderBackend& backend() const { return *backend_; }

  double predict(std::string_view rendered) const { return head(backend_->encode(rendered)); }

  /// One prediction per input, in input order. Each input is scored on its
  /// own, so results do not depend on batch composition.
  std::vector<double> forward(std::span<const std::string> batch) const {
    std::vector<double> out;
    out.reserve(batch.size());
    for (const auto& s : batch) out.push_back(predict(s));
    return out;
  }

  /// Accumulates gradients of the batch MSE; returns the batch loss.
  double accumulate_gradients(std::span<const std::string> batch, std::span<const double> labels) {
    if (batch.size() != labels.size() || batch.empty())
      throw ValidationError("batch and label counts differ or are zero");
    const double scale = 2.0 / static_cast<double>(batch.size());
    double total = 0.0;
    std::vector<double> d_pooled(head_w_.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      std::unique_ptr<Trace> trace;
      const auto pooled = backend_->encode_traced(batch[i], trace);
      const double err = head(pooled) - labels[i];
      total += err * err;
      const double d = scale * err;
      for (std::size_t k = 0; k < head_w_.size(); ++k) {
        g_w_[k] += d * pooled[k];
        d_pooled[k] = d * head_w_[k];
      }
      g_b_[0] += d;
      backend_->backward(*trace, d_pooled);
    }
    return total / static_cast<double>(batch.size());
  }

  std::vector<ParamGroup> parameters() {
    auto groups = backend_->parameters();
    groups.push_back({"head.weight", head_w_, g_w_});
    groups.push_back({"head.bias", head_b_, g_b_});
    return groups;
  }

  void zero_grad() {
    for (auto& g : parameters())
      for (auto& x : g.grad) x = 0.0;
  }

  std::uint64_t parameter_hash() const {
    Fingerprint fp;
    for (const auto& g : const_cast<QEModel*>(this)->parameters()) {
      fp.text(g.name);
      fp.doubles(g.value);
    }
    return fp.value();
  }

 private:
  double head(const std::vector<double>& pooled) const {
    double s = head_b_[0];
    for (std::size_t k = 0; k < head_w_.size(); ++k) s += head_w_[k] * pooled[k];
    return s;
  }

  std::unique_ptr<EncoderBackend> backend_;
  std::vector<double> head_w_, head_b_, g_w_, g_b_;
};

/// Mean squared error.
inline double loss(std::span<const double> preds, std::span<const double> labels) {
  if (preds.size() != labels.size())
    throw ValidationError("loss: " + std::to_string(preds.size()) + " predictions vs " +
                          std::to_string(labels.size()) + " labels");
  if (preds.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += (preds[i] - labels[i]) * (preds[i] - labels[i]);
  return s / static_cast<double>(preds.size());
}

inline std::vector<double> forward(const QEModel& model, std::span<const std::string> batch) {
  return model.forward(batch);
}

/// Writes parameter groups as: magic, group count, then per group
/// (name length, name, value count, little-endian doubles).
inline void save_parameters(std::span<const ParamGroup> groups, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  auto put_u64 = [&](std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
  };
  out.write("QEFP0001", 8);
  put_u64(groups.size());
  for (const auto& g : groups) {
    put_u64(g.name.size());
    out.write(g.name.data(), static_cast<std::streamsize>(g.name.size()));
    put_u64(g.value.size());
    for (double d : g.value) {
      std::uint64_t bits;
      std::memcpy(&bits, &d, 8);
      put_u64(bits);
    }
  }
  if (!out) throw Error("failed writing " + path.string());
}

/// Reads values written by save_parameters into groups of matching names and sizes.
inline void load_parameters(std::span<ParamGroup> groups, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  auto get_u64 = [&]() {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw ValidationError("truncated " + path.string());
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  };
  char magic[8];
  if (!in.read(magic, 8) || std::string_view(magic, 8) != "QEFP0001")
    throw ValidationError("not a parameter file: " + path.string());
  if (get_u64() != groups.size()) throw ValidationError("parameter group count mismatch");
  for (auto& g : groups) {
    const auto len = get_u64();
    std::string name(len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(len));
    if (name != g.name) throw ValidationError("expected group '" + g.name + "', found '" + name + "'");
    if (get_u64() != g.value.size())
      throw ValidationError("size mismatch for parameter group '" + g.name + "'");
    for (auto& d : g.value) {
      const auto bits = get_u64();
      std::memcpy(&d, &bits, 8);
    }
  }
}

}  // namespace qeforge::modeling

#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "qeforge/modeling/vocabulary.hpp"

namespace qeforge::modeling {

/// A named block of trainable values with a same-shaped gradient buffer.
struct ParamGroup {
  std::string name;
  std::span<double> value;
  std::span<double> grad;
};

/// Per-input state kept by a training forward pass for the backward pass.
struct Trace {
  virtual ~Trace() = default;
};

/// Pooled-representation encoder used under the QE regression head.
class EncoderBackend {
 public:
  virtual ~EncoderBackend() = default;

  virtual std::string name() const = 0;
  virtual std::size_t hidden_width() const = 0;
  virtual const Vocabulary& vocabulary() const = 0;
  std::size_t vocab_size() const { return vocabulary().size(); }

  /// Appends `tags` to the vocabulary; existing rows keep their values.
  virtual void extend_vocabulary(std::span<const std::string> tags, std::uint64_t seed) = 0;

  virtual std::vector<double> encode(std::string_view rendered) const = 0;
  virtual std::vector<double> encode_traced(std::string_view rendered,
                                            std::unique_ptr<Trace>& trace) const = 0;
  /// Accumulates parameter gradients given d(loss)/d(pooled).
  virtual void backward(const Trace& trace, std::span<const double> d_pooled) = 0;

  virtual std::vector<ParamGroup> parameters() = 0;
  virtual std::unique_ptr<EncoderBackend> clone() const = 0;

  /// Architecture settings needed to rebuild an empty backend of the same shape.
  virtual nlohmann::json config() const = 0;

  /// Number of inputs cut to the maximum length since construction.
  virtual std::size_t truncations() const = 0;

  void zero_grad() {
    for (auto& g : parameters())
      for (auto& x : g.grad) x = 0.0;
  }

  std::vector<std::vector<double>> encode(std::span<const std::string> batch) const {
    std::vector<std::vector<double>> out;
    out.reserve(batch.size());
    for (const auto& s : batch) out.push_back(encode(s));
    return out;
  }
};

}  // namespace qeforge::modeling

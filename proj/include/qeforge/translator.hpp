#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace qeforge {

/// Source-to-target text mapping. translate() returns one output per input
/// and is deterministic.
class Translator {
 public:
  virtual ~Translator() = default;
  virtual std::vector<std::string> translate(std::span<const std::string> sources) const = 0;
  virtual std::string name() const = 0;
  /// Content hash identifying the translator's behaviour.
  virtual std::uint64_t fingerprint() const = 0;
};

/// Echoes every input.
class IdentityTranslator final : public Translator {
 public:
  std::vector<std::string> translate(std::span<const std::string> sources) const override {
    return {sources.begin(), sources.end()};
  }
  std::string name() const override { return "identity"; }
  std::uint64_t fingerprint() const override { return 0x1D1D1D1DULL; }
};

}  // namespace qeforge

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>

#include "json.hpp"
#include "qeforge/error.hpp"
#include "qeforge/modeling/toy_encoder.hpp"

namespace qeforge::modeling {

/// Builds an encoder from its config() document and a vocabulary.
using EncoderFactory = std::function<std::unique_ptr<EncoderBackend>(
    const nlohmann::json& config, Vocabulary vocab, std::uint64_t seed)>;

inline std::map<std::string, EncoderFactory>& encoder_registry() {
  static std::map<std::string, EncoderFactory> registry{
      {"toy",
       [](const nlohmann::json& cfg, Vocabulary vocab, std::uint64_t seed) {
         return std::make_unique<ToyEncoder>(std::move(vocab), cfg.value("hidden_width", 32),
                                             seed, cfg.value("max_len", kMaxRenderedTokens));
       }},
  };
  return registry;
}

inline void register_encoder(const std::string& name, EncoderFactory factory) {
  encoder_registry()[name] = std::move(factory);
}

inline bool is_translator_backend(const std::string& name) { return name == "toy-seq2seq"; }

inline std::unique_ptr<EncoderBackend> make_encoder(const nlohmann::json& config, Vocabulary vocab,
                                                    std::uint64_t seed) {
  const std::string name = config.value("backend", "");
  auto& reg = encoder_registry();
  auto it = reg.find(name);
  if (it == reg.end()) {
    std::string known;
    for (const auto& [k, _] : reg) known += (known.empty() ? "" : ", ") + k;
    if (is_translator_backend(name))
      throw ValidationError("backend '" + name + "' is a translator, not an encoder");
    throw ValidationError("unknown encoder backend '" + name + "' (known: " + known + ")");
  }
  return it->second(config, std::move(vocab), seed);
}

}  // namespace qeforge::modeling

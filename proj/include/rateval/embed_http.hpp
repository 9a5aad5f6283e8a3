#pragma once

#include <memory>

#include "rateval/embed.hpp"
#include "rateval/http.hpp"

namespace rateval::embed {

/// Vendor-neutral embedding endpoint:
///   request  {"model": <name>, "input": [<text>, ...]}
///   response {"embeddings": [[<real>, ...], ...]}
class HttpProvider final : public EmbeddingProvider {
 public:
  explicit HttpProvider(const EmbeddingProviderConfig& config)
      : endpoint_(http::Endpoint::parse(config.endpoint.value_or(""))),
        model_(config.model_name.value_or("")),
        bearer_(http::credential_from_env(config.api_key_env)) {}

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override {
    io::json body{{"model", model_}, {"input", io::json::array()}};
    for (const auto& t : texts) body["input"].push_back(t);
    auto reply = http::post_json(endpoint_, body, bearer_);
    auto it = reply.find("embeddings");
    if (it == reply.end() || !it->is_array()) throw ProviderError("embedding reply lacks an 'embeddings' array");
    std::vector<EmbeddingVector> out;
    out.reserve(it->size());
    for (const auto& row : *it) {
      if (!row.is_array()) throw ProviderError("embedding reply row is not an array");
      std::vector<double> values;
      values.reserve(row.size());
      for (const auto& x : row) {
        if (!x.is_number()) throw ProviderError("embedding reply has a non-numeric value");
        values.push_back(x.get<double>());
      }
      out.emplace_back(std::move(values));
    }
    return out;
  }

 private:
  http::Endpoint endpoint_;
  std::string model_;
  std::optional<std::string> bearer_;
};

inline std::unique_ptr<EmbeddingProvider> make_provider(const EmbeddingProviderConfig& config) {
  config.validate();
  switch (config.kind) {
    case ProviderKind::fallback:
      return std::make_unique<FallbackProvider>(config.dim);
    case ProviderKind::file:
      return std::make_unique<FileProvider>(*config.endpoint, config.dim);
    case ProviderKind::http:
      return std::make_unique<HttpProvider>(config);
  }
  throw ConfigError("unknown embedding provider kind");
}

}  // namespace rateval::embed

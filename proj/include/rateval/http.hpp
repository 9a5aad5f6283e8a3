#pragma once

#include <chrono>
#include <cstdlib>
#include <optional>
#include <string>

#include "httplib.h"
#include "rateval/error.hpp"
#include "rateval/io.hpp"

namespace rateval::http {

/// "http://host:port/some/path" split into the client base and request path.
struct Endpoint {
  std::string base;
  std::string path;

  static Endpoint parse(const std::string& url) {
    auto scheme = url.find("://");
    if (scheme == std::string::npos) throw ConfigError("endpoint URL needs a scheme: " + url);
    auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, "/"};
    return {url.substr(0, slash), url.substr(slash)};
  }
};

/// Reads a credential from the named environment variable. The value is never
/// logged or echoed into manifests.
inline std::optional<std::string> credential_from_env(const std::optional<std::string>& var) {
  if (!var || var->empty()) return std::nullopt;
  const char* value = std::getenv(var->c_str());
  if (!value || !*value) throw ConfigError("credential environment variable " + *var + " is not set");
  return std::string(value);
}

/// POSTs a JSON body and returns the parsed JSON reply. Connection failures,
/// 429 and 5xx raise TransportError; other non-2xx statuses raise ProviderError.
inline io::json post_json(const Endpoint& endpoint, const io::json& body, const std::optional<std::string>& bearer,
                          std::chrono::seconds timeout = std::chrono::seconds(60)) {
  httplib::Client client(endpoint.base);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  if (bearer) headers.emplace("Authorization", "Bearer " + *bearer);
  auto res = client.Post(endpoint.path, headers, body.dump(), "application/json");
  if (!res) {
    throw TransportError("request to " + endpoint.base + endpoint.path + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status == 429 || res->status >= 500) {
    throw TransportError("endpoint returned HTTP " + std::to_string(res->status));
  }
  if (res->status < 200 || res->status >= 300) {
    throw ProviderError("endpoint returned HTTP " + std::to_string(res->status));
  }
  try {
    return io::json::parse(res->body);
  } catch (const io::json::parse_error& e) {
    throw ProviderError(std::string("endpoint returned invalid JSON: ") + e.what());
  }
}

}  // namespace rateval::http

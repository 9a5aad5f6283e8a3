#pragma once

#include <memory>

#include "rateval/http.hpp"
#include "rateval/raterclient.hpp"

namespace rateval::raterclient {

/// Chat endpoint speaking {model, messages, temperature}. Accepted reply
/// shapes: {"content": ...}, {"message": {"content": ...}} and the
/// choices/usage layout of OpenAI-compatible servers.
class HttpChatTransport final : public ChatTransport {
 public:
  explicit HttpChatTransport(const ChatModelConfig& config)
      : endpoint_(http::Endpoint::parse(config.endpoint)), bearer_(http::credential_from_env(config.api_key_env)) {}

  ChatResponse complete(const ChatRequest& request) override {
    return parse_reply(http::post_json(endpoint_, request.to_json(), bearer_));
  }

  static ChatResponse parse_reply(const io::json& reply) {
    ChatResponse out;
    auto text_of = [](const io::json& v) -> std::string {
      if (!v.is_string()) throw ProviderError("chat reply content is not a string");
      return v.get<std::string>();
    };
    if (auto c = reply.find("choices"); c != reply.end()) {
      if (!c->is_array() || c->empty()) throw ProviderError("chat reply has no choices");
      const auto& first = c->front();
      out.content = text_of(first.at("message").at("content"));
      if (auto f = first.find("finish_reason"); f != first.end() && f->is_string()) out.finish_reason = f->get<std::string>();
    } else if (auto m = reply.find("message"); m != reply.end() && m->is_object()) {
      out.content = text_of(m->at("content"));
    } else if (auto t = reply.find("content"); t != reply.end()) {
      out.content = text_of(*t);
    } else {
      throw ProviderError("chat reply has no assistant text");
    }
    if (auto u = reply.find("usage"); u != reply.end() && u->is_object()) {
      out.prompt_tokens = u->value("prompt_tokens", std::size_t{0});
      out.completion_tokens = u->value("completion_tokens", std::size_t{0});
    }
    return out;
  }

 private:
  http::Endpoint endpoint_;
  std::optional<std::string> bearer_;
};

/// Credentials are resolved here, so a missing key fails before any request.
inline std::shared_ptr<ChatTransport> make_transport(const ChatModelConfig& config, const ScoreScale& scale = {}) {
  if (config.is_stub()) return std::make_shared<StubChatTransport>(scale);
  return std::make_shared<HttpChatTransport>(config);
}

}  // namespace rateval::raterclient

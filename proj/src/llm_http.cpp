#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <nlohmann/json.hpp>

#include "confx/agent.hpp"

namespace confx {

std::string HttpLlmClient::complete(const std::vector<ChatMessage>& conversation,
                                    const Sampling& sampling) {
  auto scheme = endpoint_.find("://");
  if (scheme == std::string::npos) throw LlmTransportError("endpoint must be an http(s) URL: " + endpoint_);
  auto slash = endpoint_.find('/', scheme + 3);
  std::string origin = endpoint_.substr(0, slash);
  std::string path = slash == std::string::npos ? "/" : endpoint_.substr(slash);

  nlohmann::json messages = nlohmann::json::array();
  for (const ChatMessage& m : conversation) messages.push_back({{"role", m.role}, {"content", m.content}});
  nlohmann::json body{{"model", model_},
                      {"messages", messages},
                      {"temperature", sampling.temperature},
                      {"top_p", sampling.top_p}};

  httplib::Client client(origin);
  client.set_connection_timeout(30);
  client.set_read_timeout(300);
  httplib::Headers headers{{"Authorization", "Bearer " + api_key_}};
  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) throw LlmTransportError("request to " + origin + " failed: " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw LlmTransportError("HTTP " + std::to_string(res->status) + " from " + endpoint_ + ": " + res->body);
  }
  try {
    auto doc = nlohmann::json::parse(res->body);
    return doc.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw LlmTransportError(std::string("unexpected response shape: ") + e.what());
  }
}

}  // namespace confx

#include <httplib.h>

#include "metaplan/conversation.hpp"
#include "metaplan/json_io.hpp"

namespace metaplan {

HttpChatModel::HttpChatModel(Options options) : options_(std::move(options)) {}

std::string HttpChatModel::reply(const std::vector<Message>& conversation, const ModelQuery&) {
  json messages = json::array();
  for (const auto& m : conversation) {
    std::string content = m.text;
    if (m.scene_payload) content += "\n\nScene graph:\n" + m.scene_payload->to_text();
    messages.push_back({{"role", std::string(to_string(m.role))}, {"content", content}});
  }
  json body{{"model", options_.model}, {"temperature", options_.temperature}, {"messages", messages}};

  httplib::Client client(options_.base_url);
  client.set_read_timeout(options_.timeout_seconds, 0);
  httplib::Headers headers;
  if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);
  auto res = client.Post("/v1/chat/completions", headers, body.dump(), "application/json");
  if (!res) throw ModelError("chat request failed: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw ModelError("chat request returned HTTP " + std::to_string(res->status) + ": " + res->body);
  try {
    json reply = json::parse(res->body);
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const std::exception& e) {
    throw ModelError(std::string("malformed chat response: ") + e.what());
  }
}

}  // namespace metaplan

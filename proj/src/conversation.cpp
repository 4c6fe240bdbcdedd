#include "metaplan/conversation.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "metaplan/json_io.hpp"

namespace metaplan {

std::string_view to_string(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "?";
}

std::optional<Role> role_from_string(std::string_view s) {
  if (s == "system") return Role::System;
  if (s == "user") return Role::User;
  if (s == "assistant") return Role::Assistant;
  return std::nullopt;
}

std::string PromptCache::validation_error() const {
  std::size_t i = 0;
  while (i < messages.size() && messages[i].role == Role::System) ++i;
  Role expected = Role::User;
  for (; i < messages.size(); ++i) {
    const Message& m = messages[i];
    if (m.role != expected)
      return "message " + std::to_string(i) + " is " + std::string(to_string(m.role)) + ", expected " +
             std::string(to_string(expected));
    if (m.role == Role::Assistant && m.scene_payload)
      return "assistant message " + std::to_string(i) + " carries a scene payload";
    expected = expected == Role::User ? Role::Assistant : Role::User;
  }
  return {};
}

std::string conversation_digest(const std::vector<Message>& messages) {
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    h ^= 0xff;  // field separator
    h *= 1099511628211ull;
  };
  for (const auto& m : messages) {
    mix(to_string(m.role));
    mix(m.text);
    mix(m.scene_payload ? m.scene_payload->to_text() : std::string_view{});
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

bool is_planner_stage(std::string_view tag) {
  return tag == "1" || tag == "2" || tag == "3" || tag == "4" || tag == "5" || tag == "repair";
}

Transcript parse_variant(const json& j, const std::map<std::string, std::string>& shared_defaults) {
  Transcript t;
  t.defaults = shared_defaults;
  if (j.contains("defaults"))
    for (const auto& [k, v] : j.at("defaults").items()) t.defaults[k] = v.get<std::string>();
  for (const auto& r : j.at("records")) {
    TranscriptRecord rec;
    const json& stage = r.at("stage");
    rec.stage = stage.is_number_integer() ? std::to_string(stage.get<int>()) : stage.get<std::string>();
    if (rec.stage.empty()) throw std::runtime_error("transcript record without stage");
    if (stage.is_number_integer() && (stage.get<int>() < 1 || stage.get<int>() > 5))
      throw std::runtime_error("transcript stage out of range: " + rec.stage);
    rec.reply = r.at("reply").get<std::string>();
    if (r.contains("action")) rec.action_index = r.at("action").get<int>();
    if (r.contains("digest")) rec.digest = r.at("digest").get<std::string>();
    t.records.push_back(std::move(rec));
  }
  return t;
}

}  // namespace

TranscriptFile parse_transcript(std::string_view json_text) {
  json j = json::parse(json_text);
  TranscriptFile file;
  file.version = j.value("version", 0);
  if (file.version != kTranscriptVersion)
    throw std::runtime_error("unsupported transcript version " + std::to_string(file.version));
  file.label = j.value("label", std::string{});
  std::map<std::string, std::string> defaults;
  if (j.contains("defaults"))
    for (const auto& [k, v] : j.at("defaults").items()) defaults[k] = v.get<std::string>();
  if (j.contains("variants")) {
    for (const auto& v : j.at("variants")) file.variants.push_back(parse_variant(v, defaults));
  } else {
    file.variants.push_back(parse_variant(j, defaults));
  }
  if (file.variants.empty()) throw std::runtime_error("transcript has no variants");
  return file;
}

TranscriptFile load_transcript(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open transcript " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_transcript(ss.str());
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

ScriptedModel::ScriptedModel(Transcript transcript, std::string tag)
    : transcript_(std::move(transcript)), consumed_(transcript_.records.size(), false), tag_(std::move(tag)) {}

std::string ScriptedModel::reply(const std::vector<Message>& conversation, const ModelQuery& query) {
  ++calls_;
  std::optional<std::string> digest;
  for (std::size_t i = 0; i < transcript_.records.size(); ++i) {
    if (consumed_[i]) continue;
    const TranscriptRecord& r = transcript_.records[i];
    if (r.stage != query.tag) continue;
    if (r.action_index && r.action_index != query.action_index) continue;
    if (r.digest) {
      if (!digest) digest = conversation_digest(conversation);
      if (*r.digest != *digest) continue;
    }
    consumed_[i] = true;
    return r.reply;
  }
  if (auto it = transcript_.defaults.find(query.tag); it != transcript_.defaults.end()) return it->second;
  if (is_planner_stage(query.tag))
    throw ModelError("transcript has no reply for stage " + query.tag);
  return {};
}

Clock system_clock() {
  return [] {
    auto now = std::chrono::system_clock::now();
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count();
    std::time_t secs = static_cast<std::time_t>(ms / 1000);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                  tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms % 1000));
    return std::string(buf);
  };
}

Clock fixed_clock(std::string timestamp) {
  return [ts = std::move(timestamp)] { return ts; };
}

}  // namespace metaplan

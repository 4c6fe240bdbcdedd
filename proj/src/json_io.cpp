#include "metaplan/json_io.hpp"

namespace metaplan {

void to_json(json& j, const Vec3& v) { j = json::array({v.x, v.y, v.z}); }

void from_json(const json& j, Vec3& v) {
  if (!j.is_array() || j.size() != 3) throw std::runtime_error("expected [x, y, z]");
  v = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

void to_json(json& j, const Quat& q) { j = json::array({q.w, q.x, q.y, q.z}); }

void from_json(const json& j, Quat& q) {
  if (!j.is_array() || j.size() != 4) throw std::runtime_error("expected [w, x, y, z]");
  q = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

void to_json(json& j, const Pose6D& p) { j = json{{"position", p.position}, {"orientation", p.orientation}}; }

void from_json(const json& j, Pose6D& p) {
  p.position = j.at("position").get<Vec3>();
  p.orientation = j.contains("orientation") ? j.at("orientation").get<Quat>() : Quat::identity();
}

void to_json(json& j, const MetaAction& a) {
  j = json{{"pre", a.pre == GripperState::Open ? "open" : "close"},
           {"motion", a.motion == MotionKind::Move ? "move" : "rotate"},
           {"preposition", std::string(to_string(a.location.preposition))},
           {"object", a.location.object_ref ? json(*a.location.object_ref) : json(nullptr)},
           {"post", a.post == GripperState::Open ? "open" : "close"}};
}

void from_json(const json& j, MetaAction& a) {
  // Route through the line grammar so both forms share one validator.
  std::string line = j.at("pre").get<std::string>() + ", " + j.at("motion").get<std::string>() + ", " +
                     j.at("preposition").get<std::string>() + ", ";
  if (j.contains("object") && !j.at("object").is_null()) line += j.at("object").get<std::string>();
  line += ", " + j.at("post").get<std::string>();
  a = parse_meta_action(line);
}

json plan_to_json(const std::vector<MetaAction>& actions) {
  json arr = json::array();
  for (const auto& a : actions) arr.push_back(a);
  return arr;
}

std::vector<MetaAction> plan_from_json(const json& j) {
  if (!j.is_array()) throw std::runtime_error("plan must be a JSON array");
  std::vector<MetaAction> out;
  for (const auto& item : j) out.push_back(item.get<MetaAction>());
  return out;
}

void to_json(json& j, const SceneGraph& g) {
  json nodes = json::array();
  for (const auto& n : g.nodes) nodes.push_back({{"name", n.name}, {"category", n.category}, {"pose", n.pose}});
  json edges = json::array();
  for (const auto& e : g.edges)
    edges.push_back({{"subject", e.subject}, {"relation", std::string(to_string(e.relation))}, {"object", e.object}});
  j = json{{"nodes", nodes}, {"edges", edges}};
}

void from_json(const json& j, SceneGraph& g) {
  g = {};
  for (const auto& n : j.at("nodes"))
    g.nodes.push_back({n.at("name").get<std::string>(), n.value("category", std::string{}), n.at("pose").get<Pose6D>()});
  for (const auto& e : j.at("edges")) {
    auto rel = relation_from_string(e.at("relation").get<std::string>());
    if (!rel) throw std::runtime_error("unknown relation '" + e.at("relation").get<std::string>() + "'");
    g.edges.push_back({e.at("subject").get<std::string>(), *rel, e.at("object").get<std::string>()});
  }
  if (auto err = g.validation_error(); !err.empty()) throw std::runtime_error(err);
}

void to_json(json& j, const Message& m) {
  j = json{{"role", std::string(to_string(m.role))}, {"text", m.text}};
  if (m.scene_payload) j["scene"] = *m.scene_payload;
}

void from_json(const json& j, Message& m) {
  auto role = role_from_string(j.at("role").get<std::string>());
  if (!role) throw std::runtime_error("unknown role '" + j.at("role").get<std::string>() + "'");
  m.role = *role;
  m.text = j.at("text").get<std::string>();
  m.scene_payload.reset();
  if (j.contains("scene") && !j.at("scene").is_null()) {
    if (m.role == Role::Assistant) throw std::runtime_error("assistant message carries a scene payload");
    m.scene_payload = j.at("scene").get<SceneGraph>();
  }
}

void to_json(json& j, const PromptCache& c) {
  j = json{{"messages", c.messages}, {"model_tag", c.model_tag}, {"created_at", c.created_at}};
}

void from_json(const json& j, PromptCache& c) {
  c.messages = j.at("messages").get<std::vector<Message>>();
  c.model_tag = j.value("model_tag", std::string{});
  c.created_at = j.value("created_at", std::string{});
  if (auto err = c.validation_error(); !err.empty()) throw std::runtime_error("prompt cache: " + err);
}

}  // namespace metaplan

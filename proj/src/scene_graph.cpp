#include "metaplan/scene_graph.hpp"

#include <cstdio>
#include <set>

namespace metaplan {

namespace {

constexpr std::pair<Relation, std::string_view> kRelationNames[] = {
    {Relation::On, "on"},           {Relation::In, "in"},           {Relation::LeftOf, "left-of"},
    {Relation::RightOf, "right-of"}, {Relation::FrontOf, "front-of"}, {Relation::Behind, "behind"},
};

std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v == 0.0 ? 0.0 : v);
  return buf;
}

}  // namespace

std::string_view to_string(Relation r) {
  for (const auto& [rel, name] : kRelationNames)
    if (rel == r) return name;
  return "?";
}

std::optional<Relation> relation_from_string(std::string_view s) {
  for (const auto& [rel, name] : kRelationNames)
    if (name == s) return rel;
  return std::nullopt;
}

const SceneNode* SceneGraph::find(std::string_view name) const {
  for (const auto& n : nodes)
    if (n.name == name) return &n;
  return nullptr;
}

std::string SceneGraph::validation_error() const {
  std::set<std::string_view> names;
  for (const auto& n : nodes) {
    if (n.name.empty()) return "scene node with empty name";
    if (!names.insert(n.name).second) return "duplicate scene node '" + n.name + "'";
  }
  for (const auto& e : edges) {
    if (!names.count(e.subject)) return "edge subject '" + e.subject + "' is not a node";
    if (!names.count(e.object)) return "edge object '" + e.object + "' is not a node";
  }
  return {};
}

std::string SceneGraph::to_text() const {
  std::string out = "objects:\n";
  for (const auto& n : nodes) {
    const Vec3& p = n.pose.position;
    out += "- " + n.name + " (" + n.category + ") at (" + fmt3(p.x) + ", " + fmt3(p.y) + ", " +
           fmt3(p.z) + ")\n";
  }
  out += "relations:\n";
  for (const auto& e : edges) {
    out += "- ";
    out += to_string(e.relation);
    out += "(" + e.subject + ", " + e.object + ")\n";
  }
  return out;
}

}  // namespace metaplan

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "metaplan/geometry.hpp"

namespace metaplan {

enum class Relation { On, In, LeftOf, RightOf, FrontOf, Behind };

std::string_view to_string(Relation r);  // "on", "in", "left-of", ...
std::optional<Relation> relation_from_string(std::string_view s);

struct SceneNode {
  std::string name;
  std::string category;
  Pose6D pose;

  bool operator==(const SceneNode&) const = default;
};

struct SceneEdge {
  std::string subject;
  Relation relation = Relation::On;
  std::string object;

  bool operator==(const SceneEdge&) const = default;
};

struct SceneGraph {
  std::vector<SceneNode> nodes;
  std::vector<SceneEdge> edges;

  bool operator==(const SceneGraph&) const = default;

  const SceneNode* find(std::string_view name) const;
  bool empty() const { return nodes.empty() && edges.empty(); }

  /// Empty string when node names are unique and every edge references a node.
  std::string validation_error() const;

  /// Deterministic text rendering used in prompts and digests.
  std::string to_text() const;
};

}  // namespace metaplan

#pragma once

// nlohmann/json bindings for the shared domain types.

#include <json.hpp>

#include "metaplan/conversation.hpp"
#include "metaplan/geometry.hpp"
#include "metaplan/meta_action.hpp"
#include "metaplan/rag_store.hpp"
#include "metaplan/scene_graph.hpp"

namespace metaplan {

using json = nlohmann::json;

void to_json(json& j, const Vec3& v);
void from_json(const json& j, Vec3& v);
void to_json(json& j, const Quat& q);  // [w, x, y, z]
void from_json(const json& j, Quat& q);
void to_json(json& j, const Pose6D& p);
void from_json(const json& j, Pose6D& p);

/// {pre, motion, preposition, object, post}; object is null when absent.
void to_json(json& j, const MetaAction& a);
void from_json(const json& j, MetaAction& a);

json plan_to_json(const std::vector<MetaAction>& actions);
std::vector<MetaAction> plan_from_json(const json& j);

void to_json(json& j, const SceneGraph& g);
void from_json(const json& j, SceneGraph& g);
void to_json(json& j, const Message& m);
void from_json(const json& j, Message& m);
void to_json(json& j, const PromptCache& c);
void from_json(const json& j, PromptCache& c);

json vote_to_json(const Vote& v);
Vote vote_from_json(const json& j);
/// One "record" line of the store file.
json record_to_json(const PlanRecord& r);
PlanRecord record_from_json(const json& j);

}  // namespace metaplan

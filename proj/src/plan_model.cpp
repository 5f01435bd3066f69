/*
    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/

#include "xrguide/plan_model.hpp"

#include "xrguide/error.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <utility>

namespace xrguide
{

namespace
{

std::string trim(std::string_view text)
{
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos)
        return {};
    const auto last = text.find_last_not_of(" \t\r\n");
    return std::string(text.substr(first, last - first + 1));
}

std::string lower(std::string_view text)
{
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

[[noreturn]] void violation(const std::string & path, std::string reason)
{
    throw Error(ErrorCode::SchemaViolation, std::move(reason), path);
}

const Json & require(const Json & object, const char * key, const std::string & path)
{
    auto it = object.find(key);
    if (it == object.end())
        violation(path + "." + key, "missing required field");
    return *it;
}

std::string require_string(const Json & object, const char * key, const std::string & path)
{
    const Json & value = require(object, key, path);
    if (!value.is_string())
        violation(path + "." + key, std::string("expected string, got ") + value.type_name());
    return value.get<std::string>();
}

bool require_bool(const Json & object, const char * key, const std::string & path)
{
    const Json & value = require(object, key, path);
    if (!value.is_boolean())
        violation(path + "." + key, std::string("expected boolean, got ") + value.type_name());
    return value.get<bool>();
}

const Json & require_array(const Json & object, const char * key, const std::string & path)
{
    const Json & value = require(object, key, path);
    if (!value.is_array())
        violation(path + "." + key, std::string("expected array, got ") + value.type_name());
    return value;
}

Json extras_of(const Json & object, std::initializer_list<std::string_view> known)
{
    Json extras = Json::object();
    for (auto it = object.begin(); it != object.end(); ++it)
    {
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            extras[it.key()] = it.value();
    }
    return extras;
}

void append_extras(Json & target, const Json & extras)
{
    if (!extras.is_object())
        return;
    for (auto it = extras.begin(); it != extras.end(); ++it)
        target[it.key()] = it.value();
}

template <typename Enum, std::size_t N>
std::optional<Enum> lookup(std::string_view text, const std::array<std::pair<std::string_view, Enum>, N> & table) noexcept
{
    for (const auto & [name, value] : table)
        if (name == text)
            return value;
    return std::nullopt;
}

template <typename Enum, std::size_t N>
std::string_view name_of(Enum value, const std::array<std::pair<std::string_view, Enum>, N> & table) noexcept
{
    for (const auto & [name, candidate] : table)
        if (candidate == value)
            return name;
    return "?";
}

constexpr std::array<std::pair<std::string_view, StepType>, 4> kStepTypes{{
    {"R2R", StepType::R2R},
    {"R2V", StepType::R2V},
    {"V2R", StepType::V2R},
    {"V2V", StepType::V2V},
}};
constexpr std::array<std::pair<std::string_view, DomainTag>, 2> kDomainTags{{{"Real", DomainTag::Real}, {"Virtual", DomainTag::Virtual}}};
constexpr std::array<std::pair<std::string_view, WaypointKind>, 4> kWaypointKinds{{
    {"target", WaypointKind::Target},
    {"endtarget", WaypointKind::EndTarget},
    {"starttarget", WaypointKind::StartTarget},
    {"object", WaypointKind::Object},
}};
constexpr std::array<std::pair<std::string_view, ObjectViz>, 2> kObjectViz{{{"Outline", ObjectViz::Outline}, {"ShapePreview", ObjectViz::ShapePreview}}};
constexpr std::array<std::pair<std::string_view, ActionViz>, 3> kActionViz{{
    {"Arrow", ActionViz::Arrow},
    {"Gesture", ActionViz::Gesture},
    {"Tool", ActionViz::Tool},
}};
constexpr std::array<std::pair<std::string_view, VizViolation>, 6> kViolations{{
    {"MissingTarget", VizViolation::MissingTarget},
    {"MissingEndTarget", VizViolation::MissingEndTarget},
    {"MissingRotationTarget", VizViolation::MissingRotationTarget},
    {"ConflictingMotion", VizViolation::ConflictingMotion},
    {"EmptyObjectName", VizViolation::EmptyObjectName},
    {"BannedObjectName", VizViolation::BannedObjectName},
}};
constexpr std::array<std::pair<std::string_view, StepStatus>, 5> kStatuses{{
    {"Pending", StepStatus::Pending},
    {"Active", StepStatus::Active},
    {"AwaitingVerification", StepStatus::AwaitingVerification},
    {"Completed", StepStatus::Completed},
    {"Failed", StepStatus::Failed},
}};

Waypoint waypoint_from_json(const Json & value, const std::string & path)
{
    if (!value.is_object())
        violation(path, std::string("expected object, got ") + value.type_name());
    Waypoint wp;
    const std::string type = require_string(value, "type", path);
    const auto kind = waypoint_kind_from(type);
    if (!kind)
        violation(path + ".type", "invalid waypoint type '" + type + "'");
    wp.kind = *kind;
    wp.object_name = trim(require_string(value, "objectName", path));
    if (wp.object_name.empty())
        violation(path + ".objectName", "empty objectName");
    if (is_banned_object_name(wp.object_name))
        violation(path + ".objectName", "ambiguous objectName '" + wp.object_name + "'");
    wp.extras = extras_of(value, {"type", "objectName"});
    return wp;
}

} // namespace

StepType classify_step(DomainTag referent, DomainTag action) noexcept
{
    if (referent == DomainTag::Real)
        return action == DomainTag::Real ? StepType::R2R : StepType::R2V;
    return action == DomainTag::Real ? StepType::V2R : StepType::V2V;
}

const Waypoint * VizSpec::find(WaypointKind kind) const noexcept
{
    for (const auto & wp : waypoints)
        if (wp.kind == kind)
            return &wp;
    return nullptr;
}

bool is_banned_object_name(std::string_view name) noexcept
{
    const std::string norm = lower(trim(name));
    return norm == "prompt" || norm == "area";
}

std::vector<VizViolation> validate_viz(const VizSpec & spec)
{
    std::vector<VizViolation> report;
    const bool has_target = spec.find(WaypointKind::Target) != nullptr;
    if (!has_target)
        report.push_back(VizViolation::MissingTarget);
    const bool arrow = spec.action_viz == ActionViz::Arrow;
    if (arrow && spec.needs_translation && (!has_target || spec.find(WaypointKind::EndTarget) == nullptr))
        report.push_back(VizViolation::MissingEndTarget);
    if (arrow && spec.needs_rotation && !has_target)
        report.push_back(VizViolation::MissingRotationTarget);
    if (spec.needs_translation && spec.needs_rotation)
        report.push_back(VizViolation::ConflictingMotion);
    for (const auto & wp : spec.waypoints)
    {
        if (trim(wp.object_name).empty())
        {
            report.push_back(VizViolation::EmptyObjectName);
            break;
        }
    }
    for (const auto & wp : spec.waypoints)
    {
        if (is_banned_object_name(wp.object_name))
        {
            report.push_back(VizViolation::BannedObjectName);
            break;
        }
    }
    return report;
}

bool is_terminal(StepStatus status) noexcept
{
    return status == StepStatus::Completed || status == StepStatus::Failed;
}

std::size_t TaskPlan::original_count() const noexcept
{
    return static_cast<std::size_t>(std::count_if(steps.begin(), steps.end(), [](const PlanStep & s) { return !s.is_substep(); }));
}

const PlanStep * TaskPlan::find_id(int id) const noexcept
{
    for (const auto & step : steps)
        if (step.id == id)
            return &step;
    return nullptr;
}

PlanStep * TaskPlan::find_id(int id) noexcept
{
    for (auto & step : steps)
        if (step.id == id)
            return &step;
    return nullptr;
}

int TaskPlan::next_id() const noexcept
{
    int next = 0;
    for (const auto & step : steps)
        next = std::max(next, step.id + 1);
    return next;
}

VizSpec viz_from_json(const Json & value, const std::string & path)
{
    if (!value.is_object())
        violation(path, std::string("expected object, got ") + value.type_name());

    VizSpec spec;
    const std::string object_viz = require_string(value, "objectViz", path);
    const auto ov = object_viz_from(object_viz);
    if (!ov)
        violation(path + ".objectViz", "invalid objectViz '" + object_viz + "'");
    spec.object_viz = *ov;

    const Json & action = require(value, "actionViz", path);
    if (action.is_string())
    {
        const std::string text = action.get<std::string>();
        if (text != "null")
        {
            const auto av = action_viz_from(text);
            if (!av)
                violation(path + ".actionViz", "invalid actionViz '" + text + "'");
            spec.action_viz = *av;
        }
    }
    else if (!action.is_null())
        violation(path + ".actionViz", std::string("expected string or null, got ") + action.type_name());

    const Json & types = require_array(value, "actionType", path);
    for (std::size_t i = 0; i < types.size(); ++i)
    {
        if (!types[i].is_string())
            violation(path + ".actionType[" + std::to_string(i) + "]", std::string("expected string, got ") + types[i].type_name());
        std::string token = lower(trim(types[i].get<std::string>()));
        if (token.empty())
            violation(path + ".actionType[" + std::to_string(i) + "]", "empty action token");
        spec.action_types.push_back(std::move(token));
    }

    spec.needs_translation = require_bool(value, "needsTranslation", path);
    spec.needs_rotation = require_bool(value, "needsRotation", path);

    const Json & waypoints = require_array(value, "waypoints", path);
    for (std::size_t i = 0; i < waypoints.size(); ++i)
        spec.waypoints.push_back(waypoint_from_json(waypoints[i], path + ".waypoints[" + std::to_string(i) + "]"));

    spec.extras = extras_of(value, {"objectViz", "actionViz", "actionType", "needsTranslation", "needsRotation", "waypoints"});
    return spec;
}

Json to_json(const VizSpec & spec)
{
    Json out = Json::object();
    out["objectViz"] = to_string(spec.object_viz);
    out["actionViz"] = spec.action_viz ? Json(to_string(*spec.action_viz)) : Json(nullptr);
    out["actionType"] = spec.action_types;
    out["needsTranslation"] = spec.needs_translation;
    out["needsRotation"] = spec.needs_rotation;
    Json waypoints = Json::array();
    for (const auto & wp : spec.waypoints)
    {
        Json item = Json::object();
        item["type"] = to_string(wp.kind);
        item["objectName"] = wp.object_name;
        append_extras(item, wp.extras);
        waypoints.push_back(std::move(item));
    }
    out["waypoints"] = std::move(waypoints);
    append_extras(out, spec.extras);
    return out;
}

std::optional<std::size_t> match_next(const std::vector<std::string> & steps, std::string_view next)
{
    const std::string wanted = trim(next);
    if (wanted.empty())
        return std::nullopt;
    for (std::size_t i = 0; i < steps.size(); ++i)
        if (trim(steps[i]) == wanted)
            return i;

    std::optional<std::size_t> best;
    std::size_t best_len = 0;
    for (std::size_t i = 0; i < steps.size(); ++i)
    {
        const std::string prefix = trim(steps[i]) + std::string(kSubstepSeparator);
        if (wanted.size() > prefix.size() && wanted.compare(0, prefix.size(), prefix) == 0 && prefix.size() > best_len)
        {
            best = i;
            best_len = prefix.size();
        }
    }
    return best;
}

PlannerResponseDoc plan_document_from_json(const Json & doc)
{
    const std::string root = "$";
    if (!doc.is_object())
        violation(root, std::string("expected object, got ") + doc.type_name());

    PlannerResponseDoc out;
    out.goal = require_string(doc, "goal", root);
    const Json & steps = require_array(doc, "steps", root);
    for (std::size_t i = 0; i < steps.size(); ++i)
    {
        if (!steps[i].is_string())
            violation("$.steps[" + std::to_string(i) + "]", std::string("expected string, got ") + steps[i].type_name());
        out.steps.push_back(steps[i].get<std::string>());
    }

    const Json & response = require(doc, "plannerResponse", root);
    const std::string rpath = "$.plannerResponse";
    if (!response.is_object())
        violation(rpath, std::string("expected object, got ") + response.type_name());
    out.next = require_string(response, "next", rpath);
    if (auto it = response.find("check"); it != response.end() && !it->is_null())
    {
        if (!it->is_string())
            violation(rpath + ".check", std::string("expected string, got ") + it->type_name());
        out.check = it->get<std::string>();
    }
    out.success = require_bool(response, "success", rpath);
    out.viz = viz_from_json(require(response, "viz", rpath), rpath + ".viz");

    out.extras = extras_of(doc, {"goal", "steps", "plannerResponse"});
    out.response_extras = extras_of(response, {"next", "check", "success", "viz"});

    if (!match_next(out.steps, out.next))
        throw Error(ErrorCode::AmbiguousNext, "'" + out.next + "' names no step", rpath + ".next");
    return out;
}

PlannerResponseDoc parse_plan_document(std::string_view raw)
{
    return plan_document_from_json(extract_json(raw));
}

Json to_json(const PlannerResponseDoc & doc)
{
    Json out = Json::object();
    out["goal"] = doc.goal;
    out["steps"] = doc.steps;
    Json response = Json::object();
    response["next"] = doc.next;
    response["check"] = doc.check;
    response["success"] = doc.success;
    response["viz"] = to_json(doc.viz);
    append_extras(response, doc.response_extras);
    out["plannerResponse"] = std::move(response);
    append_extras(out, doc.extras);
    return out;
}

std::string serialize(const PlannerResponseDoc & doc)
{
    return to_json(doc).dump(2);
}

std::vector<DomainPair> domain_tags_from(const PlannerResponseDoc & doc)
{
    auto it = doc.extras.find("stepDomains");
    if (it == doc.extras.end() || !it->is_array() || it->size() != doc.steps.size())
        return {};
    std::vector<DomainPair> out;
    for (const auto & item : *it)
    {
        if (!item.is_object())
            return {};
        auto referent = item.find("referent");
        auto action = item.find("action");
        if (referent == item.end() || action == item.end() || !referent->is_string() || !action->is_string())
            return {};
        const auto r = domain_tag_from(referent->get<std::string>());
        const auto a = domain_tag_from(action->get<std::string>());
        if (!r || !a)
            return {};
        out.push_back({*r, *a});
    }
    return out;
}

std::string_view to_string(StepType value) noexcept { return name_of(value, kStepTypes); }
std::string_view to_string(DomainTag value) noexcept { return name_of(value, kDomainTags); }
std::string_view to_string(WaypointKind value) noexcept { return name_of(value, kWaypointKinds); }
std::string_view to_string(ObjectViz value) noexcept { return name_of(value, kObjectViz); }
std::string_view to_string(ActionViz value) noexcept { return name_of(value, kActionViz); }
std::string_view to_string(VizViolation value) noexcept { return name_of(value, kViolations); }
std::string_view to_string(StepStatus value) noexcept { return name_of(value, kStatuses); }

std::optional<StepType> step_type_from(std::string_view text) noexcept { return lookup(text, kStepTypes); }
std::optional<DomainTag> domain_tag_from(std::string_view text) noexcept { return lookup(text, kDomainTags); }
std::optional<WaypointKind> waypoint_kind_from(std::string_view text) noexcept { return lookup(text, kWaypointKinds); }
std::optional<ObjectViz> object_viz_from(std::string_view text) noexcept { return lookup(text, kObjectViz); }
std::optional<ActionViz> action_viz_from(std::string_view text) noexcept { return lookup(text, kActionViz); }
std::optional<StepStatus> step_status_from(std::string_view text) noexcept { return lookup(text, kStatuses); }

Json to_json(const PlanStep & step)
{
    Json out = Json::object();
    out["index"] = step.index;
    out["id"] = step.id;
    out["instruction"] = step.instruction;
    out["check"] = step.verification_rule;
    out["stepType"] = to_string(step.step_type);
    out["status"] = to_string(step.status);
    out["parent"] = step.parent_id ? Json(*step.parent_id) : Json(nullptr);
    out["skipped"] = step.skipped;
    out["viz"] = step.viz ? to_json(*step.viz) : Json(nullptr);
    return out;
}

PlanStep plan_step_from_json(const Json & value)
{
    const std::string path = "step";
    PlanStep step;
    step.index = require(value, "index", path).get<int>();
    step.id = require(value, "id", path).get<int>();
    step.instruction = require_string(value, "instruction", path);
    step.verification_rule = require_string(value, "check", path);
    const auto type = step_type_from(require_string(value, "stepType", path));
    const auto status = step_status_from(require_string(value, "status", path));
    if (!type || !status)
        violation(path, "bad stepType/status");
    step.step_type = *type;
    step.status = *status;
    if (const Json & parent = require(value, "parent", path); !parent.is_null())
        step.parent_id = parent.get<int>();
    step.skipped = require_bool(value, "skipped", path);
    if (const Json & viz = require(value, "viz", path); !viz.is_null())
        step.viz = viz_from_json(viz, path + ".viz");
    return step;
}

Json to_json(const TaskPlan & plan)
{
    Json out = Json::object();
    out["goal"] = plan.goal;
    Json steps = Json::array();
    for (const auto & step : plan.steps)
        steps.push_back(to_json(step));
    out["steps"] = std::move(steps);
    out["activeIndex"] = plan.active_index ? Json(*plan.active_index) : Json(nullptr);
    out["flags"] = plan.flags;
    return out;
}

TaskPlan task_plan_from_json(const Json & value)
{
    TaskPlan plan;
    plan.goal = require_string(value, "goal", "plan");
    for (const auto & step : require_array(value, "steps", "plan"))
        plan.steps.push_back(plan_step_from_json(step));
    if (const Json & active = require(value, "activeIndex", "plan"); !active.is_null())
        plan.active_index = active.get<int>();
    for (const auto & flag : require_array(value, "flags", "plan"))
        plan.flags.push_back(flag.get<std::string>());
    return plan;
}

} // namespace xrguide

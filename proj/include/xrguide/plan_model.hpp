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

#pragma once

#include "xrguide/json_text.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace xrguide
{

/// Cross-reality step taxonomy: <referent domain>2<action domain>.
enum class StepType
{
    R2R,
    R2V,
    V2R,
    V2V,
};

enum class DomainTag
{
    Real,
    Virtual,
};

struct DomainPair
{
    DomainTag referent = DomainTag::Real;
    DomainTag action = DomainTag::Real;

    bool operator==(const DomainPair &) const = default;
};

StepType classify_step(DomainTag referent, DomainTag action) noexcept;

enum class WaypointKind
{
    Target,
    EndTarget,
    StartTarget,
    Object,
};

struct Waypoint
{
    WaypointKind kind = WaypointKind::Target;
    std::string object_name;
    Json extras = Json::object();

    bool operator==(const Waypoint &) const = default;
};

enum class ObjectViz
{
    Outline,
    ShapePreview,
};

enum class ActionViz
{
    Arrow,
    Gesture,
    Tool,
};

/// How one step is visualized: an object-state layer plus an optional action layer.
struct VizSpec
{
    ObjectViz object_viz = ObjectViz::Outline;
    std::optional<ActionViz> action_viz;
    /// Open vocabulary, lowercase. Only "translation" and "rotation" carry engine semantics.
    std::vector<std::string> action_types;
    bool needs_translation = false;
    bool needs_rotation = false;
    std::vector<Waypoint> waypoints;
    Json extras = Json::object();

    const Waypoint * find(WaypointKind kind) const noexcept;

    bool operator==(const VizSpec &) const = default;
};

enum class VizViolation
{
    MissingTarget,
    MissingEndTarget,
    MissingRotationTarget,
    ConflictingMotion,
    EmptyObjectName,
    BannedObjectName,
};

/// Empty iff every VizSpec invariant holds.
std::vector<VizViolation> validate_viz(const VizSpec & spec);

/// Object names the planner must never use ("prompt", "area"), compared trimmed and case-insensitively.
bool is_banned_object_name(std::string_view name) noexcept;

enum class StepStatus
{
    Pending,
    Active,
    AwaitingVerification,
    Completed,
    Failed,
};

bool is_terminal(StepStatus status) noexcept;

struct PlanStep
{
    /// Position in TaskPlan::steps; renumbered when a sub-plan is spliced in.
    int index = 0;
    /// Stable identity for the lifetime of the plan. Original steps get 0..n-1 in plan order.
    int id = 0;
    std::string instruction;
    /// Cached when the step becomes active.
    std::optional<VizSpec> viz;
    std::string verification_rule;
    StepType step_type = StepType::R2R;
    StepStatus status = StepStatus::Pending;
    /// Set for sub-steps: the id of the Original step they refine.
    std::optional<int> parent_id;
    bool skipped = false;

    bool is_substep() const noexcept { return parent_id.has_value(); }

    bool operator==(const PlanStep &) const = default;
};

struct TaskPlan
{
    std::string goal;
    std::vector<PlanStep> steps;
    /// Position of the execution cursor, if any step is in progress.
    std::optional<int> active_index;
    /// Non-fatal findings, e.g. "PlanSizeOutOfRange", "MissingDomainTags".
    std::vector<std::string> flags;

    std::size_t original_count() const noexcept;
    const PlanStep * find_id(int id) const noexcept;
    PlanStep * find_id(int id) noexcept;
    int next_id() const noexcept;

    bool operator==(const TaskPlan &) const = default;
};

inline constexpr std::size_t kMinPlanSteps = 3;
inline constexpr std::size_t kMaxPlanSteps = 12;
inline constexpr std::string_view kSubstepSeparator = " / ";

/// The planner reply wire shape:
/// {goal, steps, plannerResponse:{next, check, success, viz:{...}}}.
struct PlannerResponseDoc
{
    std::string goal;
    std::vector<std::string> steps;
    std::string next;
    std::string check;
    bool success = false;
    VizSpec viz;
    /// Unknown keys, preserved for round-trip.
    Json extras = Json::object();
    Json response_extras = Json::object();

    bool operator==(const PlannerResponseDoc &) const = default;
};

/// Parse a model reply into a validated document (fences and surrounding prose tolerated).
/// Throws Error with NoJsonFound, SchemaViolation or AmbiguousNext.
PlannerResponseDoc parse_plan_document(std::string_view raw);

/// Validate an already-extracted JSON document.
PlannerResponseDoc plan_document_from_json(const Json & doc);

Json to_json(const PlannerResponseDoc & doc);
std::string serialize(const PlannerResponseDoc & doc);

/// `path` prefixes SchemaViolation locations.
VizSpec viz_from_json(const Json & value, const std::string & path);
Json to_json(const VizSpec & spec);

/// Index of the step `next` names, either verbatim or as "<step> / <sub-step>".
std::optional<std::size_t> match_next(const std::vector<std::string> & steps, std::string_view next);

/// Per-step domain tags from the optional "stepDomains" extension key. Empty when absent or malformed.
std::vector<DomainPair> domain_tags_from(const PlannerResponseDoc & doc);

std::string_view to_string(StepType value) noexcept;
std::string_view to_string(DomainTag value) noexcept;
std::string_view to_string(WaypointKind value) noexcept;
std::string_view to_string(ObjectViz value) noexcept;
std::string_view to_string(ActionViz value) noexcept;
std::string_view to_string(VizViolation value) noexcept;
std::string_view to_string(StepStatus value) noexcept;

std::optional<StepType> step_type_from(std::string_view text) noexcept;
std::optional<DomainTag> domain_tag_from(std::string_view text) noexcept;
std::optional<WaypointKind> waypoint_kind_from(std::string_view text) noexcept;
std::optional<ObjectViz> object_viz_from(std::string_view text) noexcept;
std::optional<ActionViz> action_viz_from(std::string_view text) noexcept;
std::optional<StepStatus> step_status_from(std::string_view text) noexcept;

Json to_json(const PlanStep & step);
PlanStep plan_step_from_json(const Json & value);
Json to_json(const TaskPlan & plan);
TaskPlan task_plan_from_json(const Json & value);

} // namespace xrguide

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

#include "xrguide/directive_renderer.hpp"

#include "xrguide/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cctype>

namespace xrguide
{

namespace
{

constexpr std::array<std::pair<std::string_view, DirectiveKind>, 10> kKinds{{
    {"Outline", DirectiveKind::Outline},
    {"ShapePreview", DirectiveKind::ShapePreview},
    {"AnimatedShapePreview", DirectiveKind::AnimatedShapePreview},
    {"ArrowTranslation", DirectiveKind::ArrowTranslation},
    {"ArrowRotation", DirectiveKind::ArrowRotation},
    {"GestureOverlay", DirectiveKind::GestureOverlay},
    {"ToolOverlay", DirectiveKind::ToolOverlay},
    {"StatePanel", DirectiveKind::StatePanel},
    {"AudioCue", DirectiveKind::AudioCue},
    {"ReferenceImage", DirectiveKind::ReferenceImage},
}};

std::string lower(std::string_view text)
{
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool contains_word(const std::string & haystack, const std::string & word)
{
    for (auto pos = haystack.find(word); pos != std::string::npos; pos = haystack.find(word, pos + 1))
    {
        const bool left = pos == 0 || !std::isalnum(static_cast<unsigned char>(haystack[pos - 1]));
        const auto end = pos + word.size();
        const bool right = end == haystack.size() || !std::isalnum(static_cast<unsigned char>(haystack[end]));
        if (left && right)
            return true;
    }
    return false;
}

bool is_motion_token(const std::string & token)
{
    return token == "translation" || token == "rotation";
}

const WorldAnchor * find_anchor(const StepAnchors & anchors, WaypointKind kind)
{
    auto it = anchors.waypoints.find(kind);
    return it == anchors.waypoints.end() ? nullptr : &it->second;
}

Json status_json(const PlanStep & step)
{
    return step.skipped ? Json("Skipped") : Json(to_string(step.status));
}

} // namespace

std::string_view to_string(DirectiveKind kind) noexcept
{
    for (const auto & [name, value] : kKinds)
        if (value == kind)
            return name;
    return "StatePanel";
}

std::optional<DirectiveKind> directive_kind_from(std::string_view text) noexcept
{
    for (const auto & [name, value] : kKinds)
        if (name == text)
            return value;
    return std::nullopt;
}

bool is_object_directive(DirectiveKind kind) noexcept
{
    return kind == DirectiveKind::Outline || kind == DirectiveKind::ShapePreview || kind == DirectiveKind::AnimatedShapePreview;
}

bool is_action_directive(DirectiveKind kind) noexcept
{
    return kind == DirectiveKind::ArrowTranslation || kind == DirectiveKind::ArrowRotation || kind == DirectiveKind::GestureOverlay
        || kind == DirectiveKind::ToolOverlay;
}

std::string_view to_string(AudioCueKind kind) noexcept
{
    return kind == AudioCueKind::Correct ? "Correct" : "Error";
}

Json to_json(const GuidanceDirective & directive)
{
    Json out{{"kind", to_string(directive.kind)}};
    Json anchors = Json::array();
    for (const auto & anchor : directive.anchors)
        anchors.push_back(to_json(anchor));
    out["anchors"] = std::move(anchors);
    if (directive.rotation)
        out["rotation"] = to_json(*directive.rotation);
    if (directive.asset)
        out["asset"] = to_json(*directive.asset);
    out["payload"] = directive.payload;
    out["sourceBox"] = directive.source_box ? to_json(*directive.source_box) : Json();
    return out;
}

Json to_json(const DirectiveBatch & batch)
{
    Json directives = Json::array();
    for (const auto & d : batch.directives)
        directives.push_back(to_json(d));
    return Json{{"schemaVersion", batch.schema_version},
                {"batchId", batch.batch_id},
                {"stepId", batch.step_id},
                {"stepIndex", batch.step_index},
                {"directives", std::move(directives)}};
}

AssetCatalog AssetCatalog::load(const std::filesystem::path & dir, AssetCache & cache)
{
    const auto path = dir / "catalog.json";
    const auto json = Json::parse(read_file(path), nullptr, false);
    if (json.is_discarded() || !json.is_object())
        throw Error(ErrorCode::SchemaViolation, "catalog is not a JSON object", path.string());
    AssetCatalog catalog;
    for (const auto & [key, kind] : {std::pair{"gestures", ActionViz::Gesture}, std::pair{"tools", ActionViz::Tool}})
    {
        const auto it = json.find(key);
        if (it == json.end())
            continue;
        for (const auto & item : *it)
        {
            if (!item.is_object() || !item.contains("name") || !item.contains("file"))
                throw Error(ErrorCode::SchemaViolation, "catalog entry needs name and file", std::string("$.") + key);
            Entry entry;
            entry.name = lower(item["name"].get<std::string>());
            for (const auto & alias : item.value("aliases", Json::array()))
                entry.aliases.push_back(lower(alias.get<std::string>()));
            const auto file = item["file"].get<std::string>();
            entry.asset = cache.add(read_file(dir / file), AssetKind::Image, "catalog:" + file);
            catalog.add(kind, std::move(entry));
        }
    }
    return catalog;
}

void AssetCatalog::add(ActionViz kind, Entry entry)
{
    (kind == ActionViz::Tool ? tools_ : gestures_).push_back(std::move(entry));
}

std::optional<std::pair<std::string, AssetRef>> AssetCatalog::match(ActionViz kind, const std::vector<std::string> & tokens) const
{
    const auto & entries = kind == ActionViz::Tool ? tools_ : gestures_;
    for (const auto & raw : tokens)
    {
        const auto token = lower(raw);
        for (const auto & entry : entries)
        {
            if (token == entry.name || contains_word(token, entry.name))
                return std::pair{entry.name, entry.asset};
            for (const auto & alias : entry.aliases)
                if (token == alias || contains_word(token, alias))
                    return std::pair{entry.name, entry.asset};
        }
    }
    return std::nullopt;
}

GuidanceDirective render_state_panel(const TaskPlan & plan)
{
    GuidanceDirective panel;
    panel.kind = DirectiveKind::StatePanel;
    std::string current;
    Json status = "Done";
    std::string next;
    std::size_t completed = 0;
    for (const auto & step : plan.steps)
        if (!step.is_substep() && (step.status == StepStatus::Completed || step.skipped))
            ++completed;
    if (plan.active_index && *plan.active_index >= 0 && *plan.active_index < static_cast<int>(plan.steps.size()))
    {
        const auto & active = plan.steps[*plan.active_index];
        current = active.instruction;
        status = status_json(active);
        for (auto i = static_cast<std::size_t>(*plan.active_index) + 1; i < plan.steps.size(); ++i)
            if (plan.steps[i].status == StepStatus::Pending)
            {
                next = plan.steps[i].instruction;
                break;
            }
    }
    panel.payload = Json{{"goal", plan.goal},
                         {"current", current},
                         {"status", status},
                         {"next", next},
                         {"progress", {{"completed", completed}, {"total", plan.original_count()}}}};
    return panel;
}

GuidanceDirective render_feedback(bool success)
{
    GuidanceDirective cue;
    cue.kind = DirectiveKind::AudioCue;
    cue.payload = Json{{"cue", to_string(success ? AudioCueKind::Correct : AudioCueKind::Error)}};
    return cue;
}

RenderResult render_step(const TaskPlan & plan, const PlanStep & step, const StepAnchors & anchors, const StepAssets & assets,
                         const AssetCatalog & catalog, int batch_id)
{
    RenderResult result;
    auto & batch = result.batch;
    batch.batch_id = batch_id;
    batch.step_id = step.id;
    batch.step_index = step.index;
    batch.directives.push_back(render_state_panel(plan));

    if (!step.viz)
        throw Error(ErrorCode::MissingAnchor, "step has no visualization", "viz");
    const auto & viz = *step.viz;
    const auto warn = [&](std::string message)
    {
        spdlog::warn("step {}: {}", step.id, message);
        result.warnings.push_back(std::move(message));
    };

    const Waypoint * target_wp = viz.find(WaypointKind::Target);
    if (!target_wp)
        target_wp = viz.find(WaypointKind::Object);
    const WorldAnchor * target = find_anchor(anchors, WaypointKind::Target);
    if (!target)
        target = find_anchor(anchors, WaypointKind::Object);
    if (!target)
        throw Error(ErrorCode::MissingAnchor, "no anchor for the target waypoint", "target");
    const std::string label = target_wp ? target_wp->object_name : std::string();

    std::optional<TranslationCue> translation;
    std::optional<RotationCue3D> rotation;
    if (viz.needs_translation)
    {
        if (anchors.motion && std::holds_alternative<TranslationCue>(*anchors.motion))
            translation = std::get<TranslationCue>(*anchors.motion);
        else if (const auto * end = find_anchor(anchors, WaypointKind::EndTarget))
            translation = TranslationCue{*target, *end};
        else
            throw Error(ErrorCode::MissingAnchor, "translation needs an endtarget anchor", "endtarget");
    }
    else if (viz.needs_rotation)
    {
        if (!anchors.motion || !std::holds_alternative<RotationCue3D>(*anchors.motion))
            throw Error(ErrorCode::MissingAnchor, "rotation needs a resolved rotation cue", "rotation");
        rotation = std::get<RotationCue3D>(*anchors.motion);
    }

    bool shape = viz.object_viz == ObjectViz::ShapePreview;
    if (shape && !assets.mask)
    {
        warn("ShapePreview has no mask; showing Outline");
        shape = false;
    }
    const bool arrow = viz.action_viz == ActionViz::Arrow;
    const char * motion_name = translation ? "translation" : rotation ? "rotation" : "none";

    auto place_motion = [&](GuidanceDirective & d)
    {
        if (translation)
        {
            d.anchors = {translation->start, translation->end};
            d.source_box = translation->start.source_box;
        }
        else if (rotation)
        {
            d.anchors = {rotation->pivot};
            d.rotation = rotation;
            d.source_box = rotation->pivot.source_box;
        }
        else
        {
            d.anchors = {*target};
            d.source_box = target->source_box;
        }
    };

    if (shape && arrow && (translation || rotation))
    {
        GuidanceDirective animated;
        animated.kind = DirectiveKind::AnimatedShapePreview;
        place_motion(animated);
        animated.asset = assets.mask;
        animated.payload = Json{{"label", label},
                                {"motion", motion_name},
                                {"durationS", kPreviewLoopSeconds},
                                {"loop", true},
                                {"interpolation", "linear"}};
        batch.directives.push_back(std::move(animated));
    }
    else
    {
        GuidanceDirective object;
        object.kind = shape ? DirectiveKind::ShapePreview : DirectiveKind::Outline;
        object.anchors = {*target};
        object.source_box = target->source_box;
        object.payload = Json{{"label", label}};
        if (shape)
            object.asset = assets.mask;
        batch.directives.push_back(std::move(object));

        if (arrow)
        {
            if (shape)
                warn("Arrow without motion; showing a static ShapePreview");
            else if (!translation && !rotation)
                warn("Arrow without translation or rotation; no action directive");
            if (translation || rotation)
            {
                GuidanceDirective action;
                action.kind = translation ? DirectiveKind::ArrowTranslation : DirectiveKind::ArrowRotation;
                place_motion(action);
                action.payload = Json{{"label", label}, {"motion", motion_name}};
                if (translation)
                    if (const auto * end = viz.find(WaypointKind::EndTarget))
                        action.payload["endLabel"] = end->object_name;
                batch.directives.push_back(std::move(action));
            }
        }
        else if (viz.action_viz)
        {
            GuidanceDirective action;
            action.kind = *viz.action_viz == ActionViz::Tool ? DirectiveKind::ToolOverlay : DirectiveKind::GestureOverlay;
            place_motion(action);
            action.payload = Json{{"label", label}, {"motion", motion_name}};
            if (const auto hit = catalog.match(*viz.action_viz, viz.action_types))
            {
                action.asset = hit->second;
                action.payload["token"] = hit->first;
            }
            else
            {
                std::string badge = lower(to_string(*viz.action_viz));
                for (const auto & token : viz.action_types)
                    if (!is_motion_token(token))
                    {
                        badge = token;
                        break;
                    }
                warn("no catalog image for '" + badge + "'; sending a text badge");
                action.payload["badge"] = badge;
            }
            batch.directives.push_back(std::move(action));
        }
    }

    if (assets.reference)
    {
        GuidanceDirective reference;
        reference.kind = DirectiveKind::ReferenceImage;
        reference.anchors = {*target};
        reference.asset = assets.reference;
        reference.source_box = target->source_box;
        batch.directives.push_back(std::move(reference));
    }
    return result;
}

} // namespace xrguide

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

#include "xrguide/asset.hpp"
#include "xrguide/media_pipeline.hpp"
#include "xrguide/plan_model.hpp"
#include "xrguide/spatial.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace xrguide
{

enum class DirectiveKind
{
    Outline,
    ShapePreview,
    AnimatedShapePreview,
    ArrowTranslation,
    ArrowRotation,
    GestureOverlay,
    ToolOverlay,
    StatePanel,
    AudioCue,
    ReferenceImage,
};

std::string_view to_string(DirectiveKind kind) noexcept;
std::optional<DirectiveKind> directive_kind_from(std::string_view text) noexcept;
bool is_object_directive(DirectiveKind kind) noexcept;
bool is_action_directive(DirectiveKind kind) noexcept;

enum class AudioCueKind
{
    Correct,
    Error,
};

std::string_view to_string(AudioCueKind kind) noexcept;

struct GuidanceDirective
{
    DirectiveKind kind = DirectiveKind::StatePanel;
    std::vector<WorldAnchor> anchors;
    std::optional<RotationCue3D> rotation;
    std::optional<AssetRef> asset;
    Json payload = Json::object();
    /// Where the directive sits in the localization frame, for 2D overlays.
    std::optional<NormBox> source_box;
};

inline constexpr int kDirectiveSchemaVersion = 1;

/// A complete replacement for whatever the client shows for `step_id`.
struct DirectiveBatch
{
    int schema_version = kDirectiveSchemaVersion;
    int batch_id = 0;
    int step_id = 0;
    int step_index = 0;
    std::vector<GuidanceDirective> directives;
};

Json to_json(const GuidanceDirective & directive);
Json to_json(const DirectiveBatch & batch);

/// Named gesture and tool images, matched against action-type tokens.
class AssetCatalog
{
public:
    struct Entry
    {
        std::string name;
        std::vector<std::string> aliases;
        AssetRef asset;
    };

    AssetCatalog() = default;
    /// Reads <dir>/catalog.json {"gestures": [{name, file, aliases}], "tools": [...]} and caches every file.
    static AssetCatalog load(const std::filesystem::path & dir, AssetCache & cache);

    void add(ActionViz kind, Entry entry);
    /// First token (in order) naming an entry of the given kind.
    std::optional<std::pair<std::string, AssetRef>> match(ActionViz kind, const std::vector<std::string> & tokens) const;
    std::size_t size() const noexcept { return gestures_.size() + tools_.size(); }

private:
    std::vector<Entry> gestures_;
    std::vector<Entry> tools_;
};

/// Localization results for one activation of a step.
struct StepAnchors
{
    std::map<WaypointKind, WorldAnchor> waypoints;
    std::optional<MotionCue> motion;
};

struct StepAssets
{
    std::optional<AssetRef> mask;
    std::optional<AssetRef> reference;
};

struct RenderResult
{
    DirectiveBatch batch;
    std::vector<std::string> warnings;
};

inline constexpr double kPreviewLoopSeconds = 2.0;

/// StatePanel, one object-state directive, at most one action directive, then an optional
/// ReferenceImage. ShapePreview with Arrow collapses into one AnimatedShapePreview.
/// Throws MissingAnchor when a waypoint the spec needs has no anchor.
RenderResult render_step(const TaskPlan & plan, const PlanStep & step, const StepAnchors & anchors, const StepAssets & assets,
                         const AssetCatalog & catalog, int batch_id);

GuidanceDirective render_state_panel(const TaskPlan & plan);
GuidanceDirective render_feedback(bool success);

} // namespace xrguide

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
#include "xrguide/norm_box.hpp"
#include "xrguide/plan_model.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace xrguide
{

enum class PromptKind
{
    InitialPlan,
    DuringTask,
    RotationLocalize,
    TransformLocalize,
    RelevanceScore,
    VoiceAnswer,
};

std::string_view to_string(PromptKind kind) noexcept;
std::optional<PromptKind> prompt_kind_from(std::string_view text) noexcept;

struct RenderedPrompt
{
    PromptKind kind = PromptKind::InitialPlan;
    std::string text;
    std::vector<AssetRef> attachments;
    /// sha256 over kind, text and attachment digests; the replay key.
    std::string context_hash;
};

std::string compute_context_hash(PromptKind kind, std::string_view text, const std::vector<AssetRef> & attachments);

enum class Axis
{
    X,
    Y,
    Z,
};

/// Positive is clockwise seen from the positive side of the axis.
enum class RotationDirection
{
    Positive,
    Negative,
};

std::string_view to_string(Axis axis) noexcept;
std::string_view to_string(RotationDirection direction) noexcept;

struct RotationAnswer
{
    std::string name;
    NormBox pos;
    Axis axis = Axis::Z;
    RotationDirection direction = RotationDirection::Positive;

    bool operator==(const RotationAnswer &) const = default;
};

enum class TransformKind
{
    StartTarget,
    EndTarget,
    Object,
};

std::string_view to_string(TransformKind kind) noexcept;

struct TransformEntry
{
    TransformKind kind = TransformKind::Object;
    std::string name;
    NormBox pos;

    bool operator==(const TransformEntry &) const = default;
};

struct TransformAnswer
{
    std::vector<TransformEntry> entries;

    bool operator==(const TransformAnswer &) const = default;
};

/// A filled-in plannerResponse returned by the during-task verifier.
struct DuringTaskAnswer
{
    bool success = false;
    std::string check;
    std::string next;
    std::optional<VizSpec> viz;
};

struct SubstepDraft
{
    std::string instruction;
    std::string check;
    std::optional<VizSpec> viz;
};

struct RelevanceAnswer
{
    double score = 0.0;
    std::string reason;
};

struct VoiceReply
{
    std::string answer;
    std::optional<VizSpec> updated_viz;
};

/// Renders prompts from template resources and parses the matching replies.
/// Templates are loaded once; rendering is a pure function of the inputs.
class PromptEngine
{
public:
    /// Loads every template from `dir`. Throws Error(Io) when one is missing.
    static PromptEngine load(const std::filesystem::path & dir);
    /// $XRGUIDE_RESOURCES/prompts if set, else the compiled-in resource directory.
    static PromptEngine load_default();
    static std::filesystem::path default_resource_dir();

    RenderedPrompt render_initial_prompt(std::string_view user_goal, const std::vector<AssetRef> & reference_images) const;

    /// `active` must be AwaitingVerification. `pending_check` is the previous verifier's open question, if any.
    RenderedPrompt render_during_task_prompt(
        const PlanStep & active, const PlannerResponseDoc * prior, const AssetRef & frame, std::string_view pending_check = {}) const;

    RenderedPrompt render_rotation_prompt(std::string_view object_name, const std::vector<AssetRef> & frames) const;
    RenderedPrompt render_transform_prompt(std::string_view object_name, const std::vector<AssetRef> & frames) const;

    /// Sub-planning request; travels as a DuringTask call.
    RenderedPrompt render_subplan_prompt(
        const PlanStep & failing, std::string_view failure, const PlannerResponseDoc & prior, const AssetRef & frame) const;

    RenderedPrompt render_relevance_prompt(std::string_view goal, std::string_view step, const AssetRef & image) const;

    RenderedPrompt render_voice_prompt(std::string_view goal, const PlanStep & active, std::string_view question,
                                       const std::optional<AssetRef> & frame) const;

    const std::string & template_text(std::string_view name) const;

private:
    std::map<std::string, std::string, std::less<>> templates_;
};

/// Substitute `{name}` placeholders; `{{` and `}}` are literal braces; any other brace is kept.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string, std::less<>> & vars);

RotationAnswer parse_rotation_answer(std::string_view raw);
TransformAnswer parse_transform_answer(std::string_view raw);
DuringTaskAnswer parse_during_task_answer(std::string_view raw);
std::vector<SubstepDraft> parse_subplan_answer(std::string_view raw);
RelevanceAnswer parse_relevance_answer(std::string_view raw);
VoiceReply parse_voice_answer(std::string_view raw);

/// Build the engine's plan from a validated planner document. Original steps keep
/// document order; the step named by `next` becomes the cursor and holds the doc's viz.
/// Missing tags default every step to R2R and flag the plan.
TaskPlan synthesize_plan(const PlannerResponseDoc & doc, const std::vector<DomainPair> & domain_tags);

/// The plannerResponse a verifier sees for the current cursor step.
PlannerResponseDoc prior_response_for(const TaskPlan & plan, const PlanStep & active, std::string_view pending_check = {});

/// "<parent instruction> / <sub-step instruction>" for sub-steps, the instruction otherwise.
std::string next_text_for(const TaskPlan & plan, const PlanStep & step);

} // namespace xrguide

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

#include "xrguide/prompt_engine.hpp"

#include "xrguide/blob_store.hpp"
#include "xrguide/digest.hpp"
#include "xrguide/error.hpp"

#include <array>
#include <cctype>
#include <cstdlib>

namespace xrguide
{

namespace
{

constexpr std::array<std::pair<std::string_view, PromptKind>, 6> kPromptKinds{{
    {"InitialPlan", PromptKind::InitialPlan},
    {"DuringTask", PromptKind::DuringTask},
    {"RotationLocalize", PromptKind::RotationLocalize},
    {"TransformLocalize", PromptKind::TransformLocalize},
    {"RelevanceScore", PromptKind::RelevanceScore},
    {"VoiceAnswer", PromptKind::VoiceAnswer},
}};

constexpr std::array<std::string_view, 7> kTemplateNames{
    "initial_plan", "during_task", "rotation", "transform", "subplan", "relevance", "voice_answer"};

bool is_ident_char(char c) noexcept
{
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

std::string trim(std::string_view text)
{
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos)
        return {};
    const auto last = text.find_last_not_of(" \t\r\n");
    return std::string(text.substr(first, last - first + 1));
}

RenderedPrompt make_prompt(PromptKind kind, std::string text, std::vector<AssetRef> attachments)
{
    RenderedPrompt prompt;
    prompt.kind = kind;
    prompt.context_hash = compute_context_hash(kind, text, attachments);
    prompt.text = std::move(text);
    prompt.attachments = std::move(attachments);
    return prompt;
}

[[noreturn]] void violation(const std::string & path, std::string reason)
{
    throw Error(ErrorCode::SchemaViolation, std::move(reason), path);
}

const Json & require(const Json & object, const char * key, const std::string & path)
{
    if (!object.is_object())
        violation(path, std::string("expected object, got ") + object.type_name());
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

std::string optional_string(const Json & object, const char * key, const std::string & path)
{
    auto it = object.find(key);
    if (it == object.end() || it->is_null())
        return {};
    if (!it->is_string())
        violation(path + "." + key, std::string("expected string, got ") + it->type_name());
    return it->get<std::string>();
}

NormBox parse_box(const Json & value, const std::string & path)
{
    if (!value.is_array() || value.size() != 4)
        violation(path, "expected [x_min, y_min, x_max, y_max]");
    std::array<long long, 4> v{};
    for (std::size_t i = 0; i < 4; ++i)
    {
        if (!value[i].is_number_integer())
            violation(path + "[" + std::to_string(i) + "]", std::string("expected integer, got ") + value[i].type_name());
        v[i] = value[i].get<long long>();
        if (v[i] < 0 || v[i] > kNormMax)
            throw Error(ErrorCode::OutOfRange, "coordinate " + std::to_string(v[i]) + " outside [0,1000]",
                        path + "[" + std::to_string(i) + "]");
    }
    if (v[0] > v[2])
        violation(path, "x_min > x_max");
    if (v[1] > v[3])
        violation(path, "y_min > y_max");
    return {static_cast<int>(v[0]), static_cast<int>(v[1]), static_cast<int>(v[2]), static_cast<int>(v[3])};
}

std::optional<VizSpec> optional_viz(const Json & object, const char * key, const std::string & path)
{
    auto it = object.find(key);
    if (it == object.end() || it->is_null())
        return std::nullopt;
    return viz_from_json(*it, path + "." + key);
}

VizSpec fallback_viz(const PlanStep & step)
{
    VizSpec viz;
    viz.waypoints.push_back({WaypointKind::Target, step.instruction, Json::object()});
    return viz;
}

} // namespace

std::string_view to_string(PromptKind kind) noexcept
{
    for (const auto & [name, value] : kPromptKinds)
        if (value == kind)
            return name;
    return "?";
}

std::optional<PromptKind> prompt_kind_from(std::string_view text) noexcept
{
    for (const auto & [name, value] : kPromptKinds)
        if (name == text)
            return value;
    return std::nullopt;
}

std::string_view to_string(Axis axis) noexcept
{
    switch (axis)
    {
        case Axis::X: return "X";
        case Axis::Y: return "Y";
        case Axis::Z: return "Z";
    }
    return "?";
}

std::string_view to_string(RotationDirection direction) noexcept
{
    return direction == RotationDirection::Positive ? "Positive" : "Negative";
}

std::string_view to_string(TransformKind kind) noexcept
{
    switch (kind)
    {
        case TransformKind::StartTarget: return "starttarget";
        case TransformKind::EndTarget: return "endtarget";
        case TransformKind::Object: return "object";
    }
    return "?";
}

std::string compute_context_hash(PromptKind kind, std::string_view text, const std::vector<AssetRef> & attachments)
{
    std::string material(to_string(kind));
    material += '\n';
    material += text;
    for (const auto & attachment : attachments)
    {
        material += '\n';
        material += attachment.digest;
    }
    return sha256_hex(material);
}

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string, std::less<>> & vars)
{
    std::string out;
    out.reserve(tmpl.size());
    for (std::size_t i = 0; i < tmpl.size(); ++i)
    {
        const char c = tmpl[i];
        if ((c == '{' || c == '}') && i + 1 < tmpl.size() && tmpl[i + 1] == c)
        {
            out.push_back(c);
            ++i;
            continue;
        }
        if (c == '{')
        {
            std::size_t j = i + 1;
            while (j < tmpl.size() && is_ident_char(tmpl[j]))
                ++j;
            if (j > i + 1 && j < tmpl.size() && tmpl[j] == '}')
            {
                if (auto it = vars.find(tmpl.substr(i + 1, j - i - 1)); it != vars.end())
                {
                    out += it->second;
                    i = j;
                    continue;
                }
            }
        }
        out.push_back(c);
    }
    return out;
}

PromptEngine PromptEngine::load(const std::filesystem::path & dir)
{
    PromptEngine engine;
    for (auto name : kTemplateNames)
        engine.templates_.emplace(std::string(name), read_file(dir / (std::string(name) + ".txt")));
    return engine;
}

std::filesystem::path PromptEngine::default_resource_dir()
{
    if (const char * env = std::getenv("XRGUIDE_RESOURCES"); env != nullptr && *env != '\0')
        return env;
    return XRGUIDE_RESOURCE_DIR;
}

PromptEngine PromptEngine::load_default()
{
    return load(default_resource_dir() / "prompts");
}

const std::string & PromptEngine::template_text(std::string_view name) const
{
    auto it = templates_.find(name);
    if (it == templates_.end())
        throw Error(ErrorCode::Io, "unknown template " + std::string(name));
    return it->second;
}

RenderedPrompt PromptEngine::render_initial_prompt(std::string_view user_goal, const std::vector<AssetRef> & reference_images) const
{
    const std::string goal = trim(user_goal);
    if (goal.empty())
        throw Error(ErrorCode::EmptyGoal, "user goal is empty");
    return make_prompt(PromptKind::InitialPlan, render_template(template_text("initial_plan"), {{"goal", goal}}), reference_images);
}

RenderedPrompt PromptEngine::render_during_task_prompt(
    const PlanStep & active, const PlannerResponseDoc * prior, const AssetRef & frame, std::string_view pending_check) const
{
    if (prior == nullptr)
        throw Error(ErrorCode::MissingPriorResponse, "no prior plannerResponse for step " + std::to_string(active.id));
    if (active.status != StepStatus::AwaitingVerification)
        throw Error(ErrorCode::InvalidTransition, "step " + std::to_string(active.id) + " is not awaiting verification");
    std::string pending;
    if (!trim(pending_check).empty())
        pending = "Open question from the previous check: " + trim(pending_check) + "\n";
    std::string text = render_template(
        template_text("during_task"), {{"step", active.instruction}, {"pending_check", pending}, {"prior", serialize(*prior)}});
    return make_prompt(PromptKind::DuringTask, std::move(text), {frame});
}

RenderedPrompt PromptEngine::render_rotation_prompt(std::string_view object_name, const std::vector<AssetRef> & frames) const
{
    const std::string name = trim(object_name);
    if (name.empty())
        throw Error(ErrorCode::EmptyObjectName, "rotation prompt needs an object name");
    if (frames.empty())
        throw Error(ErrorCode::NoFrame, "rotation prompt needs at least one frame");
    return make_prompt(PromptKind::RotationLocalize, render_template(template_text("rotation"), {{"objectName", name}}), frames);
}

RenderedPrompt PromptEngine::render_transform_prompt(std::string_view object_name, const std::vector<AssetRef> & frames) const
{
    const std::string name = trim(object_name);
    if (name.empty())
        throw Error(ErrorCode::EmptyObjectName, "transform prompt needs an object name");
    if (frames.empty())
        throw Error(ErrorCode::NoFrame, "transform prompt needs at least one frame");
    return make_prompt(PromptKind::TransformLocalize, render_template(template_text("transform"), {{"objectName", name}}), frames);
}

RenderedPrompt PromptEngine::render_subplan_prompt(
    const PlanStep & failing, std::string_view failure, const PlannerResponseDoc & prior, const AssetRef & frame) const
{
    std::string reason = trim(failure);
    if (reason.empty())
        reason = "The scene does not match the expected state of this step.";
    std::string text = render_template(
        template_text("subplan"), {{"step", failing.instruction}, {"failure", reason}, {"prior", serialize(prior)}});
    return make_prompt(PromptKind::DuringTask, std::move(text), {frame});
}

RenderedPrompt PromptEngine::render_relevance_prompt(std::string_view goal, std::string_view step, const AssetRef & image) const
{
    std::string text = render_template(template_text("relevance"), {{"goal", std::string(goal)}, {"step", std::string(step)}});
    return make_prompt(PromptKind::RelevanceScore, std::move(text), {image});
}

RenderedPrompt PromptEngine::render_voice_prompt(
    std::string_view goal, const PlanStep & active, std::string_view question, const std::optional<AssetRef> & frame) const
{
    const std::string viz = active.viz ? dump_compact(to_json(*active.viz)) : std::string("none");
    std::string text = render_template(template_text("voice_answer"),
                                       {{"goal", std::string(goal)}, {"step", active.instruction}, {"viz", viz}, {"question", trim(question)}});
    std::vector<AssetRef> attachments;
    if (frame)
        attachments.push_back(*frame);
    return make_prompt(PromptKind::VoiceAnswer, std::move(text), std::move(attachments));
}

RotationAnswer parse_rotation_answer(std::string_view raw)
{
    const Json doc = extract_json(raw);
    const std::string root = "$";
    RotationAnswer answer;
    answer.name = require_string(doc, "name", root);
    answer.pos = parse_box(require(doc, "pos", root), "$.pos");
    const Json & rotation = require(doc, "rotation", root);
    if (!rotation.is_array() || rotation.size() != 2 || !rotation[0].is_string() || !rotation[1].is_string())
        violation("$.rotation", "expected [axis, direction]");
    const std::string axis = rotation[0].get<std::string>();
    if (axis == "X")
        answer.axis = Axis::X;
    else if (axis == "Y")
        answer.axis = Axis::Y;
    else if (axis == "Z")
        answer.axis = Axis::Z;
    else
        violation("$.rotation[0]", "invalid axis '" + axis + "'");
    const std::string direction = rotation[1].get<std::string>();
    if (direction == "Positive")
        answer.direction = RotationDirection::Positive;
    else if (direction == "Negative")
        answer.direction = RotationDirection::Negative;
    else
        violation("$.rotation[1]", "invalid direction '" + direction + "'");
    return answer;
}

TransformAnswer parse_transform_answer(std::string_view raw)
{
    std::vector<Json> items;
    const Json first = extract_json(raw, true);
    if (first.is_array())
    {
        for (const auto & item : first)
            items.push_back(item);
    }
    else if (auto it = first.find("entries"); it != first.end() && it->is_array())
    {
        for (const auto & item : *it)
            items.push_back(item);
    }
    else
    {
        // An array of objects that never closes is a cut-off reply; salvaging its
        // first entry would silently drop the endtarget.
        const std::string_view fenced = first_fenced_block(raw);
        const std::string_view body = fenced.empty() ? raw : fenced;
        const auto open = body.find('[');
        if (open != std::string_view::npos && open < body.find('{'))
        {
            const auto next = body.find_first_not_of(" \t\r\n", open + 1);
            if (next != std::string_view::npos && body[next] == '{')
                throw Error(ErrorCode::NoJsonFound, "unterminated position list");
        }
        // "Output each position item" - replies often list several bare objects.
        items = extract_all_objects(raw);
        if (items.empty())
            items.push_back(first);
    }
    if (items.empty())
        violation("$", "no position items");

    TransformAnswer answer;
    for (std::size_t i = 0; i < items.size(); ++i)
    {
        const std::string path = "$[" + std::to_string(i) + "]";
        TransformEntry entry;
        const std::string type = require_string(items[i], "type", path);
        if (type == "starttarget")
            entry.kind = TransformKind::StartTarget;
        else if (type == "endtarget")
            entry.kind = TransformKind::EndTarget;
        else if (type == "object")
            entry.kind = TransformKind::Object;
        else
            violation(path + ".type", "invalid type '" + type + "'");
        entry.name = require_string(items[i], "name", path);
        entry.pos = parse_box(require(items[i], "pos", path), path + ".pos");
        answer.entries.push_back(std::move(entry));
    }
    return answer;
}

DuringTaskAnswer parse_during_task_answer(std::string_view raw)
{
    const Json doc = extract_json(raw);
    std::string path = "$";
    const Json * response = &doc;
    if (auto it = doc.find("plannerResponse"); it != doc.end())
    {
        response = &*it;
        path = "$.plannerResponse";
    }
    DuringTaskAnswer answer;
    const Json & success = require(*response, "success", path);
    if (!success.is_boolean())
        violation(path + ".success", std::string("expected boolean, got ") + success.type_name());
    answer.success = success.get<bool>();
    answer.check = trim(optional_string(*response, "check", path));
    answer.next = trim(optional_string(*response, "next", path));
    answer.viz = optional_viz(*response, "viz", path);
    return answer;
}

std::vector<SubstepDraft> parse_subplan_answer(std::string_view raw)
{
    const Json doc = extract_json(raw, true);
    const Json * list = &doc;
    if (doc.is_object())
    {
        list = &require(doc, "substeps", "$");
    }
    if (!list->is_array())
        violation("$.substeps", std::string("expected array, got ") + list->type_name());
    std::vector<SubstepDraft> out;
    for (std::size_t i = 0; i < list->size(); ++i)
    {
        const std::string path = "$.substeps[" + std::to_string(i) + "]";
        const Json & item = (*list)[i];
        SubstepDraft draft;
        draft.instruction = trim(require_string(item, "instruction", path));
        if (draft.instruction.empty())
            violation(path + ".instruction", "empty instruction");
        draft.check = trim(optional_string(item, "check", path));
        draft.viz = optional_viz(item, "viz", path);
        out.push_back(std::move(draft));
    }
    return out;
}

RelevanceAnswer parse_relevance_answer(std::string_view raw)
{
    const Json doc = extract_json(raw);
    const Json & score = require(doc, "score", "$");
    if (!score.is_number())
        violation("$.score", std::string("expected number, got ") + score.type_name());
    RelevanceAnswer answer;
    answer.score = score.get<double>();
    if (!(answer.score >= 0.0 && answer.score <= 1.0))
        throw Error(ErrorCode::OutOfRange, "score outside [0,1]", "$.score");
    answer.reason = optional_string(doc, "reason", "$");
    return answer;
}

VoiceReply parse_voice_answer(std::string_view raw)
{
    const Json doc = extract_json(raw);
    VoiceReply reply;
    reply.answer = trim(require_string(doc, "answer", "$"));
    reply.updated_viz = optional_viz(doc, "updatedViz", "$");
    return reply;
}

TaskPlan synthesize_plan(const PlannerResponseDoc & doc, const std::vector<DomainPair> & domain_tags)
{
    const auto active = match_next(doc.steps, doc.next);
    if (!active)
        throw Error(ErrorCode::AmbiguousNext, "'" + doc.next + "' names no step", "$.plannerResponse.next");
    if (const auto report = validate_viz(doc.viz); !report.empty())
    {
        std::string codes;
        for (auto v : report)
            codes += (codes.empty() ? "" : ",") + std::string(to_string(v));
        violation("$.plannerResponse.viz", "viz invariants violated: " + codes);
    }

    TaskPlan plan;
    plan.goal = doc.goal;
    const bool tagged = domain_tags.size() == doc.steps.size();
    if (!tagged)
        plan.flags.push_back("MissingDomainTags");
    if (doc.steps.size() < kMinPlanSteps || doc.steps.size() > kMaxPlanSteps)
        plan.flags.push_back("PlanSizeOutOfRange");

    for (std::size_t i = 0; i < doc.steps.size(); ++i)
    {
        PlanStep step;
        step.index = static_cast<int>(i);
        step.id = static_cast<int>(i);
        step.instruction = doc.steps[i];
        step.step_type = tagged ? classify_step(domain_tags[i].referent, domain_tags[i].action) : StepType::R2R;
        plan.steps.push_back(std::move(step));
    }
    auto & cursor = plan.steps[*active];
    cursor.viz = doc.viz;
    cursor.verification_rule = doc.check;
    plan.active_index = static_cast<int>(*active);
    return plan;
}

std::string next_text_for(const TaskPlan & plan, const PlanStep & step)
{
    if (step.parent_id)
    {
        if (const PlanStep * parent = plan.find_id(*step.parent_id))
            return parent->instruction + std::string(kSubstepSeparator) + step.instruction;
    }
    return step.instruction;
}

PlannerResponseDoc prior_response_for(const TaskPlan & plan, const PlanStep & active, std::string_view pending_check)
{
    PlannerResponseDoc doc;
    doc.goal = plan.goal;
    for (const auto & step : plan.steps)
        if (!step.is_substep())
            doc.steps.push_back(step.instruction);
    doc.next = next_text_for(plan, active);
    doc.check = std::string(pending_check);
    doc.success = false;
    doc.viz = active.viz ? *active.viz : fallback_viz(active);
    return doc;
}

} // namespace xrguide

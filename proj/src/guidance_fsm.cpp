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

#include "xrguide/guidance_fsm.hpp"

#include "xrguide/error.hpp"

#include <algorithm>

namespace xrguide
{

namespace
{

bool finished(const PlanStep & step) noexcept
{
    return step.status == StepStatus::Completed || step.status == StepStatus::Failed;
}

bool in_progress(const PlanStep & step) noexcept
{
    return step.status == StepStatus::Active || step.status == StepStatus::AwaitingVerification;
}

bool usable(const std::optional<VizSpec> & viz)
{
    return viz && validate_viz(*viz).empty();
}

} // namespace

VerificationOutcome outcome_from(const DuringTaskAnswer & answer)
{
    VerificationOutcome outcome;
    outcome.success = answer.success;
    outcome.check = answer.check;
    outcome.next_hint = answer.next;
    outcome.revised_viz = answer.viz;
    return outcome;
}

VizSpec fallback_viz_for(const PlanStep & step)
{
    VizSpec viz;
    viz.waypoints.push_back({WaypointKind::Target, step.instruction.empty() ? std::string("object") : step.instruction});
    return viz;
}

VizSpec rotate_viz(const VizSpec & viz)
{
    VizSpec next = viz;
    next.object_viz = viz.object_viz == ObjectViz::Outline ? ObjectViz::ShapePreview : ObjectViz::Outline;
    if (viz.action_viz)
    {
        switch (*viz.action_viz)
        {
            case ActionViz::Arrow:
                next.action_viz = ActionViz::Gesture;
                break;
            case ActionViz::Gesture:
                next.action_viz = ActionViz::Tool;
                break;
            case ActionViz::Tool:
                next.action_viz = ActionViz::Arrow;
                break;
        }
    }
    return next;
}

GuidanceFsm::GuidanceFsm(TaskPlan plan, FailurePolicy policy) : plan_(std::move(plan)), policy_(policy)
{
    if (policy_.min_substeps < 1 || policy_.max_substeps < policy_.min_substeps)
        throw Error(ErrorCode::OutOfRange, "substep bounds are inconsistent");
    renumber();
    const auto active = std::count_if(plan_.steps.begin(), plan_.steps.end(), [](const PlanStep & s) { return in_progress(s); });
    if (active == 0)
    {
        // A fresh plan: active_index is only the planner's hint.
        start_hint_ = plan_.active_index;
        plan_.active_index.reset();
    }
}

const PlanStep * GuidanceFsm::cursor() const noexcept
{
    if (!plan_.active_index)
        return nullptr;
    return &plan_.steps[static_cast<std::size_t>(*plan_.active_index)];
}

const FailurePolicyState & GuidanceFsm::failure_state(int step_id) const
{
    static const FailurePolicyState empty{};
    auto it = failures_.find(step_id);
    return it == failures_.end() ? empty : it->second;
}

int GuidanceFsm::position_of(int step_id) const
{
    for (std::size_t i = 0; i < plan_.steps.size(); ++i)
        if (plan_.steps[i].id == step_id)
            return static_cast<int>(i);
    return -1;
}

void GuidanceFsm::renumber()
{
    for (std::size_t i = 0; i < plan_.steps.size(); ++i)
        plan_.steps[i].index = static_cast<int>(i);
}

std::vector<FsmEffect> GuidanceFsm::activate(int index)
{
    if (index < 0 || index >= static_cast<int>(plan_.steps.size()))
        throw Error(ErrorCode::OutOfOrderActivation, "no step at index " + std::to_string(index));
    auto & step = plan_.steps[static_cast<std::size_t>(index)];
    if (step.status != StepStatus::Pending)
        throw Error(ErrorCode::OutOfOrderActivation, "step " + std::to_string(index) + " is " + std::string(to_string(step.status)));
    if (plan_.active_index)
        throw Error(ErrorCode::OutOfOrderActivation, "step " + std::to_string(*plan_.active_index) + " is still active");
    for (int i = 0; i < index; ++i)
    {
        const auto & before = plan_.steps[static_cast<std::size_t>(i)];
        if (finished(before))
            continue;
        if (step.parent_id && before.id == *step.parent_id && in_progress(before))
            continue;
        throw Error(ErrorCode::OutOfOrderActivation, "step " + std::to_string(i) + " is not finished");
    }

    step.status = StepStatus::Active;
    plan_.active_index = index;
    done_ = false;
    pending_check_.clear();
    if (!step.viz && step.parent_id)
        if (const auto * parent = plan_.find_id(*step.parent_id); parent && parent->viz)
            step.viz = parent->viz;
    return {StepActivated{step.id}};
}

std::vector<FsmEffect> GuidanceFsm::start()
{
    if (plan_.active_index)
        throw Error(ErrorCode::InvalidTransition, "plan already started");
    std::vector<FsmEffect> effects;
    if (start_hint_ && *start_hint_ > 0 && *start_hint_ < static_cast<int>(plan_.steps.size()))
    {
        for (int i = 0; i < *start_hint_; ++i)
        {
            auto & step = plan_.steps[static_cast<std::size_t>(i)];
            if (step.status == StepStatus::Pending && !step.is_substep())
            {
                step.status = StepStatus::Completed;
                effects.push_back(StepCompleted{step.id});
            }
        }
    }
    start_hint_.reset();
    for (std::size_t i = 0; i < plan_.steps.size(); ++i)
        if (plan_.steps[i].status == StepStatus::Pending)
        {
            auto more = activate(static_cast<int>(i));
            effects.insert(effects.end(), more.begin(), more.end());
            return effects;
        }
    done_ = true;
    effects.push_back(PlanFinished{});
    return effects;
}

void GuidanceFsm::begin_verification()
{
    if (!plan_.active_index)
        throw Error(ErrorCode::InvalidTransition, "no active step to verify");
    auto & step = plan_.steps[static_cast<std::size_t>(*plan_.active_index)];
    if (step.status != StepStatus::Active)
        throw Error(ErrorCode::InvalidTransition, "step is already awaiting verification");
    step.status = StepStatus::AwaitingVerification;
}

void GuidanceFsm::abort_verification()
{
    if (!plan_.active_index)
        return;
    auto & step = plan_.steps[static_cast<std::size_t>(*plan_.active_index)];
    if (step.status == StepStatus::AwaitingVerification)
        step.status = StepStatus::Active;
}

std::vector<FsmEffect> GuidanceFsm::apply_outcome(const VerificationOutcome & outcome)
{
    if (!plan_.active_index)
        throw Error(ErrorCode::InvalidTransition, "no active step");
    auto & step = plan_.steps[static_cast<std::size_t>(*plan_.active_index)];
    if (!in_progress(step))
        throw Error(ErrorCode::InvalidTransition, "cursor step is not active");

    std::vector<FsmEffect> effects{AudioFeedback{outcome.success}};
    if (!outcome.success)
    {
        step.status = StepStatus::Active;
        if (!outcome.check.empty())
            pending_check_ = outcome.check;
        return effects;
    }

    step.status = StepStatus::Completed;
    effects.push_back(StepCompleted{step.id});
    fired_.erase(step.id);
    auto more = advance();
    effects.insert(effects.end(), more.begin(), more.end());
    if (plan_.active_index && usable(outcome.revised_viz))
        plan_.steps[static_cast<std::size_t>(*plan_.active_index)].viz = outcome.revised_viz;
    return effects;
}

std::vector<FsmEffect> GuidanceFsm::advance()
{
    std::vector<FsmEffect> effects;
    const int current = *plan_.active_index;
    plan_.active_index.reset();

    const auto & step = plan_.steps[static_cast<std::size_t>(current)];
    if (step.parent_id)
    {
        const int parent_id = *step.parent_id;
        const bool open = std::any_of(plan_.steps.begin(), plan_.steps.end(),
                                      [&](const PlanStep & s) { return s.parent_id == parent_id && !finished(s); });
        auto * parent = plan_.find_id(parent_id);
        if (!open && parent && in_progress(*parent))
        {
            parent->status = StepStatus::Completed;
            effects.push_back(StepCompleted{parent_id});
        }
    }

    for (auto i = static_cast<std::size_t>(current) + 1; i < plan_.steps.size(); ++i)
        if (plan_.steps[i].status == StepStatus::Pending)
        {
            auto more = activate(static_cast<int>(i));
            effects.insert(effects.end(), more.begin(), more.end());
            return effects;
        }
    done_ = true;
    effects.push_back(PlanFinished{});
    return effects;
}

RevisionAction GuidanceFsm::on_failure(const VerificationOutcome & outcome)
{
    if (!plan_.active_index)
        throw Error(ErrorCode::InvalidTransition, "no active step");
    auto & step = plan_.steps[static_cast<std::size_t>(*plan_.active_index)];
    auto & state = failures_[step.id];
    ++state.failure_count;
    if (!outcome.check.empty())
        pending_check_ = outcome.check;

    if (policy_.subplans_enabled && !step.is_substep() && !state.subplan_used && state.failure_count >= policy_.subplan_at)
    {
        state.subplan_used = true;
        return InvokeSubPlan{step.id};
    }

    ReviseViz revision;
    if (usable(outcome.revised_viz) && (!step.viz || *outcome.revised_viz != *step.viz))
    {
        revision.viz = *outcome.revised_viz;
        revision.source = "verifier";
    }
    else
    {
        revision.viz = rotate_viz(step.viz ? *step.viz : fallback_viz_for(step));
        revision.source = "rotation";
        ++state.revision_cursor;
    }
    step.viz = revision.viz;
    return revision;
}

std::vector<FsmEffect> GuidanceFsm::splice_subplan(const SubPlan & sub)
{
    const PlanStep * active = cursor();
    if (!active || active->id != sub.parent_id || active->is_substep())
        throw Error(ErrorCode::WrongParent, "sub-plan parent " + std::to_string(sub.parent_id) + " is not the active original step");
    if (std::any_of(plan_.steps.begin(), plan_.steps.end(), [&](const PlanStep & s) { return s.parent_id == sub.parent_id; }))
        throw Error(ErrorCode::WrongParent, "step " + std::to_string(sub.parent_id) + " already has sub-steps");
    if (sub.substeps.size() < policy_.min_substeps)
        throw Error(ErrorCode::SubPlanTooSmall, std::to_string(sub.substeps.size()) + " sub-steps");
    if (sub.substeps.size() > policy_.max_substeps)
        throw Error(ErrorCode::SubPlanTooLarge, std::to_string(sub.substeps.size()) + " sub-steps");

    const int position = *plan_.active_index;
    auto & parent = plan_.steps[static_cast<std::size_t>(position)];
    parent.status = StepStatus::Active;
    failures_[parent.id].subplan_used = true;

    std::vector<PlanStep> inserted;
    std::vector<int> ids;
    int next_id = plan_.next_id();
    for (const auto & draft : sub.substeps)
    {
        PlanStep s;
        s.id = next_id++;
        s.instruction = draft.instruction;
        s.verification_rule = draft.check;
        s.viz = usable(draft.viz) ? draft.viz : parent.viz;
        s.step_type = parent.step_type;
        s.parent_id = parent.id;
        ids.push_back(s.id);
        inserted.push_back(std::move(s));
    }
    plan_.steps.insert(plan_.steps.begin() + position + 1, inserted.begin(), inserted.end());
    renumber();
    plan_.active_index.reset();

    std::vector<FsmEffect> effects{SubPlanSpliced{sub.parent_id, ids}};
    auto more = activate(position + 1);
    effects.insert(effects.end(), more.begin(), more.end());
    return effects;
}

std::vector<FsmEffect> GuidanceFsm::skip(int index, const std::string & reason)
{
    if (index < 0 || index >= static_cast<int>(plan_.steps.size()))
        throw Error(ErrorCode::OutOfRange, "no step at index " + std::to_string(index));
    const auto & target = plan_.steps[static_cast<std::size_t>(index)];
    if (finished(target))
        throw Error(ErrorCode::InvalidTransition, "step " + std::to_string(index) + " is already finished");

    std::vector<int> positions{index};
    if (!target.is_substep())
        for (std::size_t i = 0; i < plan_.steps.size(); ++i)
            if (plan_.steps[i].parent_id == target.id && !finished(plan_.steps[i]))
                positions.push_back(static_cast<int>(i));

    std::vector<FsmEffect> effects;
    bool cursor_hit = false;
    for (int p : positions)
    {
        auto & step = plan_.steps[static_cast<std::size_t>(p)];
        step.status = StepStatus::Failed;
        step.skipped = true;
        fired_.erase(step.id);
        effects.push_back(StepSkipped{step.id, reason});
        cursor_hit = cursor_hit || plan_.active_index == p;
    }
    if (cursor_hit)
    {
        plan_.active_index = *std::max_element(positions.begin(), positions.end());
        auto more = advance();
        effects.insert(effects.end(), more.begin(), more.end());
    }
    return effects;
}

void GuidanceFsm::replace_viz(const VizSpec & viz)
{
    if (!plan_.active_index)
        throw Error(ErrorCode::InvalidTransition, "no active step");
    const auto violations = validate_viz(viz);
    if (!violations.empty())
        throw Error(ErrorCode::SchemaViolation, std::string(to_string(violations.front())), "viz");
    plan_.steps[static_cast<std::size_t>(*plan_.active_index)].viz = viz;
}

void GuidanceFsm::register_signal(int step_id, const std::string & token)
{
    if (token.empty())
        throw Error(ErrorCode::SchemaViolation, "signal token is empty", "token");
    if (!plan_.find_id(step_id))
        throw Error(ErrorCode::OutOfRange, "no step with id " + std::to_string(step_id));
    signals_[token] = step_id;
}

bool GuidanceFsm::has_signal(int step_id) const
{
    return std::any_of(signals_.begin(), signals_.end(), [&](const auto & entry) { return entry.second == step_id; });
}

std::optional<VerificationOutcome> GuidanceFsm::fire_signal(const std::string & token)
{
    auto it = signals_.find(token);
    if (it == signals_.end())
        throw Error(ErrorCode::UnknownSignal, token);
    const PlanStep * step = plan_.find_id(it->second);
    if (!step || finished(*step))
        return std::nullopt;
    if (const auto * active = cursor(); active && active->id == step->id)
    {
        VerificationOutcome outcome;
        outcome.success = true;
        outcome.via_signal = true;
        return outcome;
    }
    fired_[step->id] = true;
    return std::nullopt;
}

std::optional<VerificationOutcome> GuidanceFsm::take_fired_signal()
{
    const auto * active = cursor();
    if (!active)
        return std::nullopt;
    auto it = fired_.find(active->id);
    if (it == fired_.end())
        return std::nullopt;
    fired_.erase(it);
    VerificationOutcome outcome;
    outcome.success = true;
    outcome.via_signal = true;
    return outcome;
}

std::string GuidanceFsm::label_of(int step_id) const
{
    const auto * step = plan_.find_id(step_id);
    if (!step)
        return "?";
    if (!step->parent_id)
    {
        int ordinal = 0;
        for (const auto & s : plan_.steps)
        {
            if (!s.is_substep())
                ++ordinal;
            if (s.id == step_id)
                break;
        }
        return std::to_string(ordinal);
    }
    int ordinal = 0;
    for (const auto & s : plan_.steps)
    {
        if (s.parent_id == step->parent_id)
            ++ordinal;
        if (s.id == step_id)
            break;
    }
    return label_of(*step->parent_id) + "." + std::to_string(ordinal);
}

} // namespace xrguide

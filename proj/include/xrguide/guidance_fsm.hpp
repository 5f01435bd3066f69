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

#include "xrguide/plan_model.hpp"
#include "xrguide/prompt_engine.hpp"

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace xrguide
{

struct VerificationOutcome
{
    bool success = false;
    /// Open question for the next check; ignored on success.
    std::string check;
    std::string next_hint;
    /// On success, the successor's visualization; on failure, a proposed revision.
    std::optional<VizSpec> revised_viz;
    /// Substeps offered alongside a failure, used if the policy sub-plans now.
    std::vector<SubstepDraft> substeps;
    /// True when a completion signal decided the outcome.
    bool via_signal = false;
};

VerificationOutcome outcome_from(const DuringTaskAnswer & answer);

struct FailurePolicy
{
    /// Failure count at which the single sub-plan fires.
    int subplan_at = 2;
    bool subplans_enabled = true;
    std::size_t min_substeps = 2;
    std::size_t max_substeps = 5;
};

struct FailurePolicyState
{
    int failure_count = 0;
    int revision_cursor = 0;
    bool subplan_used = false;
};

struct ReviseViz
{
    VizSpec viz;
    /// "verifier" when the model proposed it, "rotation" otherwise.
    std::string source;
};

struct InvokeSubPlan
{
    int parent_id = 0;
};

using RevisionAction = std::variant<ReviseViz, InvokeSubPlan>;

struct SubPlan
{
    int parent_id = 0;
    std::vector<SubstepDraft> substeps;
};

/// Outline on a target named after the instruction; used when no better visualization is known.
VizSpec fallback_viz_for(const PlanStep & step);

/// Deterministic revision order: Outline <-> ShapePreview, Arrow -> Gesture -> Tool -> Arrow.
VizSpec rotate_viz(const VizSpec & viz);

// Effects a transition produces, in order.
struct StepActivated
{
    int step_id;
};
struct StepCompleted
{
    int step_id;
};
struct StepSkipped
{
    int step_id;
    std::string reason;
};
struct AudioFeedback
{
    bool correct;
};
struct VizRevised
{
    int step_id;
    VizSpec viz;
    std::string source;
};
struct SubPlanRequested
{
    int parent_id;
};
struct SubPlanSpliced
{
    int parent_id;
    std::vector<int> substep_ids;
};
struct PlanFinished
{
};

using FsmEffect = std::variant<StepActivated, StepCompleted, StepSkipped, AudioFeedback, VizRevised, SubPlanRequested, SubPlanSpliced, PlanFinished>;

/// The per-session step lifecycle. A sub-step's parent stays Active as a container while the
/// sub-steps run; the execution cursor (plan.active_index) always names exactly one step.
/// Not thread-safe: the owning session serializes calls.
class GuidanceFsm
{
public:
    explicit GuidanceFsm(TaskPlan plan, FailurePolicy policy = {});

    const TaskPlan & plan() const noexcept { return plan_; }
    const FailurePolicy & policy() const noexcept { return policy_; }
    bool done() const noexcept { return done_; }
    const PlanStep * cursor() const noexcept;
    const FailurePolicyState & failure_state(int step_id) const;
    /// The open question left by the last uncertain check on the cursor step.
    const std::string & pending_check() const noexcept { return pending_check_; }

    /// Pending step -> Active. Everything before it must be finished (its parent excepted).
    /// Throws OutOfOrderActivation.
    std::vector<FsmEffect> activate(int index);
    /// Activates the planner's cursor step (earlier original steps count as already done),
    /// else the first Pending step, else finishes the plan.
    std::vector<FsmEffect> start();

    /// Active cursor -> AwaitingVerification. Throws InvalidTransition when nothing is active.
    void begin_verification();
    /// AwaitingVerification -> Active, no other change (a failed model call).
    void abort_verification();

    /// Applies a verifier outcome to the cursor step. Exactly one AudioFeedback is emitted.
    /// The step must be Active or AwaitingVerification.
    std::vector<FsmEffect> apply_outcome(const VerificationOutcome & outcome);

    /// Failure policy decision for the cursor step; counts the failure.
    RevisionAction on_failure(const VerificationOutcome & outcome);

    /// Inserts sub-steps right after the parent and moves the cursor to the first one.
    /// Throws SubPlanTooSmall, SubPlanTooLarge, WrongParent.
    std::vector<FsmEffect> splice_subplan(const SubPlan & sub);

    /// Operator skip. A skipped cursor advances without audio feedback; a skipped parent
    /// takes its unfinished sub-steps with it.
    std::vector<FsmEffect> skip(int index, const std::string & reason);

    /// Replaces the cursor step's visualization (voice answers, revisions).
    void replace_viz(const VizSpec & viz);

    /// Software completion signals. Firing on the cursor step yields a success outcome; firing
    /// for a later step is remembered until that step is verified. Throws UnknownSignal.
    void register_signal(int step_id, const std::string & token);
    std::optional<VerificationOutcome> fire_signal(const std::string & token);
    /// A remembered signal for the cursor step, consumed on read.
    std::optional<VerificationOutcome> take_fired_signal();
    bool has_signal(int step_id) const;

    /// Labels of activated/completed steps in order: "i" for original i, "i.j" for its j-th sub-step (1-based).
    std::string label_of(int step_id) const;

private:
    int position_of(int step_id) const;
    void renumber();
    std::vector<FsmEffect> advance();

    TaskPlan plan_;
    FailurePolicy policy_;
    std::map<int, FailurePolicyState> failures_;
    std::map<std::string, int> signals_;
    std::map<int, bool> fired_;
    std::optional<int> start_hint_;
    std::string pending_check_;
    bool done_ = false;
};

} // namespace xrguide

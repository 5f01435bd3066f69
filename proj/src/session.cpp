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


#include "xrguide/session.hpp"

#include "xrguide/blob_store.hpp"
#include "xrguide/digest.hpp"
#include "xrguide/error.hpp"

#include <spdlog/spdlog.h>

#include <chrono>

namespace xrguide
{

namespace
{

double wall_clock()
{
    return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

std::string require_string(const Json & payload, const char * key, bool allow_empty = false)
{
    const auto it = payload.find(key);
    if (it == payload.end() || !it->is_string())
        throw Error(ErrorCode::PayloadInvalid, "expected string", key);
    auto value = it->get<std::string>();
    if (!allow_empty && value.empty())
        throw Error(ErrorCode::PayloadInvalid, "must not be empty", key);
    return value;
}

int require_int(const Json & payload, const char * key)
{
    const auto it = payload.find(key);
    if (it == payload.end() || !it->is_number_integer())
        throw Error(ErrorCode::PayloadInvalid, "expected integer", key);
    return it->get<int>();
}

std::optional<EventKind> input_event_for(ClientMessageType type) noexcept
{
    switch (type)
    {
        case ClientMessageType::StartTask:
            return EventKind::SessionStarted;
        case ClientMessageType::FrameUpdate:
            return EventKind::FrameReceived;
        case ClientMessageType::VerifyRequest:
            return EventKind::VerifyRequested;
        case ClientMessageType::VoiceQuery:
            return EventKind::VoiceQuery;
        case ClientMessageType::RegisterSignal:
            return EventKind::SignalRegistered;
        case ClientMessageType::FireSignal:
            return EventKind::SignalFired;
        case ClientMessageType::SkipStep:
            return EventKind::SkipCommand;
        case ClientMessageType::EndSession:
            return EventKind::SessionClosed;
    }
    return std::nullopt;
}

std::optional<ClientMessageType> input_type_for(EventKind kind) noexcept
{
    for (auto type : {ClientMessageType::StartTask, ClientMessageType::FrameUpdate, ClientMessageType::VerifyRequest,
                      ClientMessageType::VoiceQuery, ClientMessageType::RegisterSignal, ClientMessageType::FireSignal,
                      ClientMessageType::SkipStep, ClientMessageType::EndSession})
        if (input_event_for(type) == kind)
            return type;
    return std::nullopt;
}

Json rejected(const Envelope & message)
{
    return Json{{"type", message.type}, {"seq", message.seq}, {"payload", message.payload}};
}

const Waypoint * primary_waypoint(const VizSpec & viz)
{
    if (const auto * w = viz.find(WaypointKind::Target))
        return w;
    if (const auto * w = viz.find(WaypointKind::Object))
        return w;
    return viz.waypoints.empty() ? nullptr : &viz.waypoints.front();
}

const ClipJsonDecoder kClipDecoder;

} // namespace

std::string_view to_string(SessionPhase phase) noexcept
{
    switch (phase)
    {
        case SessionPhase::Idle:
            return "Idle";
        case SessionPhase::Executing:
            return "Executing";
        case SessionPhase::Done:
            return "Done";
        case SessionPhase::Closed:
            return "Closed";
    }
    return "?";
}

SceneFrame scene_frame_from(const Json & payload, AssetCache & cache)
{
    const int width = require_int(payload, "width");
    const int height = require_int(payload, "height");
    if (width <= 0 || height <= 0)
        throw Error(ErrorCode::InvalidFrame, "frame size must be positive");

    SceneFrame scene;
    scene.frame = default_frame(width, height);
    auto & frame = scene.frame;

    if (const auto it = payload.find("image"); it != payload.end())
    {
        if (!it->is_string())
            throw Error(ErrorCode::PayloadInvalid, "expected base64 string", "image");
        frame.image = cache.add(base64_decode(it->get<std::string>()), AssetKind::Image, std::string("frame"));
    }
    else if (const auto digest = payload.find("imageDigest"); digest != payload.end())
    {
        if (!digest->is_string() || !looks_like_digest(digest->get<std::string>()))
            throw Error(ErrorCode::PayloadInvalid, "expected sha256 digest", "imageDigest");
        const auto bytes = cache.store()->get(digest->get<std::string>());
        if (!bytes)
            throw Error(ErrorCode::PayloadInvalid, "no uploaded blob " + digest->get<std::string>(), "imageDigest");
        frame.image = cache.add(*bytes, AssetKind::Image, std::string("frame"));
    }
    else
    {
        throw Error(ErrorCode::PayloadInvalid, "frame needs image or imageDigest", "image");
    }

    if (const auto it = payload.find("intrinsics"); it != payload.end() && !it->is_null())
        frame.intrinsics = intrinsics_from_json(*it);
    if (const auto it = payload.find("pose"); it != payload.end() && !it->is_null())
        frame.pose = pose_from_json(*it);
    if (const auto it = payload.find("timestamp"); it != payload.end())
    {
        if (!it->is_number())
            throw Error(ErrorCode::PayloadInvalid, "expected number", "timestamp");
        frame.timestamp = it->get<double>();
    }

    Json depth_record = frame.depth->to_json();
    if (const auto it = payload.find("depth"); it != payload.end() && !it->is_null())
    {
        if (!it->is_object())
            throw Error(ErrorCode::PayloadInvalid, "expected object", "depth");
        if (const auto c = it->find("constant"); c != it->end())
        {
            if (!c->is_number())
                throw Error(ErrorCode::PayloadInvalid, "expected number", "depth.constant");
            frame.depth = std::make_shared<ConstantDepth>(c->get<double>());
            depth_record = Json{{"constant", c->get<double>()}};
        }
        else if (const auto d = it->find("digest"); d != it->end())
        {
            const auto bytes = d->is_string() ? cache.store()->get(d->get<std::string>()) : std::nullopt;
            if (!bytes)
                throw Error(ErrorCode::PayloadInvalid, "no uploaded depth blob", "depth.digest");
            frame.depth = std::make_shared<DepthGrid>(DepthGrid::decode(*bytes));
            depth_record = Json{{"digest", d->get<std::string>()}};
        }
        else
        {
            auto grid = frame_from_json(Json{{"width", width}, {"height", height}, {"depth", *it}}).depth;
            const auto * cells = dynamic_cast<const DepthGrid *>(grid.get());
            if (!cells)
                throw Error(ErrorCode::PayloadInvalid, "unrecognised depth", "depth");
            depth_record = cells->to_json();
            frame.depth = grid;
        }
    }
    validate_frame(frame);

    scene.record = Json{{"width", width},
                        {"height", height},
                        {"imageDigest", frame.image.digest},
                        {"intrinsics", to_json(frame.intrinsics)},
                        {"pose", to_json(frame.pose)},
                        {"depth", depth_record},
                        {"timestamp", frame.timestamp}};
    return scene;
}

Session::Session(std::string id, std::shared_ptr<const EngineServices> services) : id_(std::move(id)), services_(std::move(services))
{
    if (!valid_session_id(id_))
        throw Error(ErrorCode::PayloadInvalid, "bad session id", "sessionId");
    if (!services_ || !services_->gateway || !services_->cache || !services_->prompts || !services_->catalog)
        throw Error(ErrorCode::ProviderUnavailable, "session services are incomplete");
    if (!services_->log_dir.empty())
        log_ = EventLog(services_->log_dir / (id_ + ".events.jsonl"));
    channel_ = services_->gateway->open(id_);
}

std::vector<Envelope> Session::handle(const Envelope & message)
{
    std::lock_guard lock(mutex_);
    outbox_mark_ = outbox_.size();
    const auto type = client_message_type_from(message.type);
    if (phase_ == SessionPhase::Closed)
        emit_error(ErrorCode::SessionClosed, "session has ended", Json{{"rejected", rejected(message)}});
    else if (last_client_seq_ && message.seq <= *last_client_seq_)
        emit_error(ErrorCode::OutOfOrderSeq, "seq " + std::to_string(message.seq) + " after " + std::to_string(*last_client_seq_),
                   Json{{"rejected", rejected(message)}});
    else if (!type)
    {
        last_client_seq_ = message.seq;
        emit_error(ErrorCode::PayloadInvalid, "unknown message type " + message.type, Json{{"rejected", rejected(message)}});
    }
    else
    {
        last_client_seq_ = message.seq;
        dispatch(*type, message);
    }
    return {outbox_.begin() + static_cast<std::ptrdiff_t>(outbox_mark_), outbox_.end()};
}

void Session::dispatch(ClientMessageType type, const Envelope & message)
{
    Json record = message.payload;
    if (type == ClientMessageType::FrameUpdate)
    {
        try
        {
            auto scene = scene_frame_from(message.payload, *services_->cache);
            record = scene.record;
            frame_ = std::move(scene);
        }
        catch (const Error & e)
        {
            emit_error(e.code(), e.detail(), Json{{"rejected", rejected(message)}});
            return;
        }
    }
    Json input{{"clientSeq", message.seq}};
    for (const auto & [key, value] : record.items())
        input[key] = value;
    emit(*input_event_for(type), std::move(input));

    try
    {
        switch (type)
        {
            case ClientMessageType::StartTask:
                on_start(message.payload);
                break;
            case ClientMessageType::FrameUpdate:
                on_frame(message.payload);
                break;
            case ClientMessageType::VerifyRequest:
                on_verify();
                break;
            case ClientMessageType::VoiceQuery:
                on_voice(message.payload);
                break;
            case ClientMessageType::RegisterSignal:
                on_register(message.payload);
                break;
            case ClientMessageType::FireSignal:
                on_fire(message.payload);
                break;
            case ClientMessageType::SkipStep:
                on_skip(message.payload);
                break;
            case ClientMessageType::EndSession:
                phase_ = SessionPhase::Closed;
                break;
        }
    }
    catch (const Error & e)
    {
        emit_error(e.code(), e.detail());
    }
    catch (const std::exception & e)
    {
        emit_error(ErrorCode::PayloadInvalid, e.what());
    }
}

void Session::on_start(const Json & payload)
{
    const std::string goal = require_string(payload, "prompt");
    if (phase_ != SessionPhase::Idle)
        throw Error(ErrorCode::InvalidTransition, "a session runs a single task");

    std::vector<AssetRef> references;
    if (services_->retrieval)
    {
        try
        {
            for (const auto & asset : retrieve(build_queries(goal, {}).front(), *services_->retrieval, *services_->cache, services_->media.max_results))
                if (asset.kind == AssetKind::Image && references.size() < services_->plan_reference_images)
                    references.push_back(asset);
        }
        catch (const Error & e)
        {
            if (e.code() != ErrorCode::ProviderUnavailable && e.code() != ErrorCode::EmptyResults)
                throw;
        }
    }

    const auto reply = call(services_->prompts->render_initial_prompt(goal, references));
    auto doc = parse_plan_document(reply.text);
    auto plan = synthesize_plan(doc, domain_tags_from(doc));

    std::vector<std::string> instructions;
    for (const auto & step : plan.steps)
        instructions.push_back(step.instruction);
    const RelevanceScorer scorer = [&](const AssetRef & asset, const std::string & step) {
        return parse_relevance_answer(call(services_->prompts->render_relevance_prompt(goal, step, asset)).text);
    };
    const VideoDecoder & decoder = services_->decoder ? *services_->decoder : kClipDecoder;
    media_ = prefetch(goal, instructions, services_->retrieval.get(), *services_->cache, scorer, decoder, services_->media);

    fsm_.emplace(std::move(plan), services_->policy);
    initial_doc_ = std::move(doc);
    phase_ = SessionPhase::Executing;
    const auto effects = fsm_->start();

    Json ready = plan_json();
    Json media = Json::array();
    for (const auto & step : media_.steps)
    {
        Json digests = Json::array();
        for (const auto & asset : step.assets)
            digests.push_back(asset.digest);
        media.push_back(std::move(digests));
    }
    ready["references"] = Json::array();
    for (const auto & asset : references)
        ready["references"].push_back(asset.digest);
    ready["stepMedia"] = std::move(media);
    ready["warnings"] = media_.warnings;
    emit(EventKind::PlanReady, std::move(ready));

    apply_effects(effects, false);

    while (!queued_questions_.empty() && phase_ == SessionPhase::Executing)
    {
        auto question = std::move(queued_questions_.front());
        queued_questions_.pop_front();
        answer_voice(question);
    }
}

void Session::on_frame(const Json &)
{
    if (phase_ != SessionPhase::Executing)
        return;
    const PlanStep * cursor = fsm_->cursor();
    if (!cursor || localized_.count(cursor->id))
        return;
    localize_failed_.erase(cursor->id);
    refresh_active(false);
}

void Session::on_verify()
{
    if (phase_ != SessionPhase::Executing || !fsm_->cursor())
        throw Error(ErrorCode::InvalidTransition, "no step is active");
    if (auto signalled = fsm_->take_fired_signal())
    {
        finish_verification(*signalled);
        return;
    }
    if (!frame_)
        throw Error(ErrorCode::NoFrame, "send a FrameUpdate before verifying");

    fsm_->begin_verification();
    VerificationOutcome outcome;
    try
    {
        const PlanStep & step = *fsm_->cursor();
        const auto prior = prior_response_for(fsm_->plan(), step);
        const auto reply = call(services_->prompts->render_during_task_prompt(step, &prior, frame_->frame.image, fsm_->pending_check()));
        outcome = outcome_from(parse_during_task_answer(reply.text));
    }
    catch (...)
    {
        fsm_->abort_verification();
        throw;
    }
    finish_verification(outcome);
}

void Session::finish_verification(const VerificationOutcome & outcome)
{
    const PlanStep & step = *fsm_->cursor();
    Json result{{"stepId", step.id}, {"stepIndex", step.index}, {"label", fsm_->label_of(step.id)}, {"success", outcome.success}};
    result["check"] = outcome.success ? std::string() : outcome.check;
    result["via"] = outcome.via_signal ? "signal" : "model";

    const auto effects = fsm_->apply_outcome(outcome);
    result["done"] = fsm_->done();
    emit(EventKind::VerificationResult, std::move(result));
    apply_effects(effects, outcome.success);
    if (!outcome.success)
        handle_failure(outcome);
}

void Session::handle_failure(const VerificationOutcome & outcome)
{
    const auto action = fsm_->on_failure(outcome);
    const PlanStep & step = *fsm_->cursor();
    const int failures = fsm_->failure_state(step.id).failure_count;
    if (const auto * revise = std::get_if<ReviseViz>(&action))
    {
        emit(EventKind::VizRevised, Json{{"stepId", step.id}, {"label", fsm_->label_of(step.id)}, {"source", revise->source},
                                         {"failureCount", failures}, {"viz", to_json(revise->viz)}});
        refresh_active(true);
        return;
    }

    const int parent = std::get<InvokeSubPlan>(action).parent_id;
    try
    {
        const auto prior = prior_response_for(fsm_->plan(), step, fsm_->pending_check());
        const std::string failure = outcome.check.empty() ? std::string("the scene does not match the expected result") : outcome.check;
        const auto reply = call(services_->prompts->render_subplan_prompt(step, failure, prior, frame_->frame.image));
        auto drafts = parse_subplan_answer(reply.text);
        const auto effects = fsm_->splice_subplan(SubPlan{parent, std::move(drafts)});

        Json inserted{{"parentId", parent}, {"parentLabel", fsm_->label_of(parent)}, {"substeps", Json::array()}};
        for (const auto & s : fsm_->plan().steps)
            if (s.parent_id == parent)
                inserted["substeps"].push_back(
                    Json{{"id", s.id}, {"index", s.index}, {"label", fsm_->label_of(s.id)}, {"instruction", s.instruction}, {"check", s.verification_rule}});
        emit(EventKind::SubPlanInserted, std::move(inserted));
        apply_effects(effects, true);
    }
    catch (const Error & e)
    {
        // The sub-plan could not be built; fall back to a deterministic revision.
        const PlanStep & current = *fsm_->cursor();
        const auto viz = rotate_viz(current.viz ? *current.viz : fallback_viz_for(current));
        fsm_->replace_viz(viz);
        emit(EventKind::VizRevised, Json{{"stepId", current.id}, {"label", fsm_->label_of(current.id)}, {"source", "rotation"},
                                         {"failureCount", failures}, {"viz", to_json(viz)},
                                         {"reason", "sub-plan unavailable: " + std::string(to_string(e.code()))}});
        refresh_active(true);
    }
}

void Session::apply_effects(const std::vector<FsmEffect> & effects, bool announce)
{
    bool activated = false;
    for (const auto & effect : effects)
    {
        if (const auto * a = std::get_if<StepActivated>(&effect))
        {
            const auto * step = fsm_->plan().find_id(a->step_id);
            emit(EventKind::StepActivated, Json{{"stepId", a->step_id}, {"stepIndex", step->index}, {"label", fsm_->label_of(a->step_id)}});
            activated = true;
        }
        else if (const auto * c = std::get_if<StepCompleted>(&effect))
        {
            emit(EventKind::StepCompleted, Json{{"stepId", c->step_id}, {"label", fsm_->label_of(c->step_id)}});
        }
        else if (const auto * audio = std::get_if<AudioFeedback>(&effect))
        {
            emit(EventKind::AudioCueSent, to_json(render_feedback(audio->correct)));
        }
        else if (std::holds_alternative<PlanFinished>(effect))
        {
            phase_ = SessionPhase::Done;
        }
    }
    if (announce)
        emit(EventKind::PlanUpdated, plan_json());
    if (activated)
        refresh_active(false);
}

void Session::refresh_active(bool relocalize)
{
    const PlanStep * cursor = fsm_ ? fsm_->cursor() : nullptr;
    if (!cursor)
        return;
    const int id = cursor->id;
    if (relocalize)
    {
        localized_.erase(id);
        localize_failed_.erase(id);
    }
    if (!localized_.count(id))
    {
        if (!frame_ || localize_failed_.count(id))
            return;
        auto localized = localize(*cursor);
        if (!localized)
        {
            localize_failed_[id] = true;
            return;
        }
        localized_[id] = std::move(*localized);
    }
    render_active();
}

std::vector<AssetRef> Session::reference_for(const PlanStep & step) const
{
    int original = step.parent_id ? *step.parent_id : step.id;
    if (original < 0 || original >= static_cast<int>(media_.steps.size()))
        return {};
    const auto & assets = media_.steps[static_cast<std::size_t>(original)].assets;
    if (assets.empty())
        return {};
    return {assets.front()};
}

std::optional<Session::Localized> Session::localize(const PlanStep & step)
{
    Localized out;
    if (!step.viz)
    {
        fsm_->replace_viz(fallback_viz_for(step));
        out.warnings.push_back("no visualization from the planner; showing an outline");
    }
    const VizSpec viz = *fsm_->cursor()->viz;
    const Waypoint * primary = primary_waypoint(viz);
    const CameraFrame & frame = frame_->frame;
    const auto references = reference_for(step);
    std::vector<AssetRef> images{frame.image};
    images.insert(images.end(), references.begin(), references.end());

    try
    {
        if (!primary)
            throw Error(ErrorCode::MissingAnchor, "visualization names no waypoint", "target");
        const std::string & name = primary->object_name;
        if (viz.needs_rotation)
        {
            const auto answer = parse_rotation_answer(call(services_->prompts->render_rotation_prompt(name, images)).text);
            auto motion = resolve_motion(viz, answer, frame);
            out.anchors.waypoints[WaypointKind::Target] = std::get<RotationCue3D>(motion).pivot;
            out.anchors.motion = std::move(motion);
        }
        else
        {
            const auto answer = parse_transform_answer(call(services_->prompts->render_transform_prompt(name, images)).text);
            for (const auto & entry : answer.entries)
            {
                const WaypointKind kind = entry.kind == TransformKind::StartTarget ? WaypointKind::StartTarget
                                          : entry.kind == TransformKind::EndTarget ? WaypointKind::EndTarget
                                                                                   : WaypointKind::Object;
                if (!out.anchors.waypoints.count(kind))
                    out.anchors.waypoints[kind] = unproject_box(frame, entry.pos);
            }
            const auto & w = out.anchors.waypoints;
            if (w.count(WaypointKind::StartTarget))
                out.anchors.waypoints[WaypointKind::Target] = w.at(WaypointKind::StartTarget);
            else if (w.count(WaypointKind::Object))
                out.anchors.waypoints[WaypointKind::Target] = w.at(WaypointKind::Object);
            else if (!viz.needs_translation && w.count(WaypointKind::EndTarget))
                out.anchors.waypoints[WaypointKind::Target] = w.at(WaypointKind::EndTarget);
            if (viz.needs_translation)
                out.anchors.motion = resolve_motion(viz, answer, frame);
        }

        if (viz.object_viz == ObjectViz::ShapePreview)
        {
            if (!services_->segmentation)
                out.warnings.push_back("no segmentation backend; ShapePreview shown as an outline");
            else
            {
                const AssetRef & source = references.empty() ? frame.image : references.front();
                try
                {
                    out.assets.mask = segment(source, name, *services_->segmentation, *services_->cache);
                }
                catch (const Error & e)
                {
                    out.warnings.push_back("segmentation failed (" + std::string(to_string(e.code())) + "): " + e.detail());
                }
            }
        }
        if (!references.empty())
            out.assets.reference = references.front();
    }
    catch (const Error & e)
    {
        emit_error(e.code(), e.detail(), Json{{"stepId", step.id}, {"stage", "localization"}});
        return std::nullopt;
    }
    return out;
}

void Session::render_active()
{
    const PlanStep & step = *fsm_->cursor();
    const auto & localized = localized_.at(step.id);
    try
    {
        auto result = render_step(fsm_->plan(), step, localized.anchors, localized.assets, *services_->catalog, ++batch_counter_);
        Json payload = to_json(result.batch);
        Json warnings = localized.warnings;
        for (auto & w : result.warnings)
            warnings.push_back(std::move(w));
        payload["warnings"] = std::move(warnings);
        emit(EventKind::DirectiveBatchSent, std::move(payload));
    }
    catch (const Error & e)
    {
        emit_error(e.code(), e.detail(), Json{{"stepId", step.id}, {"stage", "render"}});
    }
}

void Session::on_voice(const Json & payload)
{
    const std::string question = require_string(payload, "text");
    if (phase_ == SessionPhase::Idle)
    {
        queued_questions_.push_back(question);
        throw Error(ErrorCode::QueryQueued, "answered once the plan is ready");
    }
    if (phase_ != SessionPhase::Executing || !fsm_->cursor())
        throw Error(ErrorCode::InvalidTransition, "no step is active");
    answer_voice(question);
}

void Session::answer_voice(const std::string & question)
{
    const PlanStep & step = *fsm_->cursor();
    Json answer{{"question", question}, {"stepId", step.id}};
    std::optional<VizSpec> update;
    try
    {
        std::optional<AssetRef> image;
        if (frame_)
            image = frame_->frame.image;
        const auto reply = parse_voice_answer(call(services_->prompts->render_voice_prompt(fsm_->plan().goal, step, question, image)).text);
        answer["text"] = reply.answer;
        if (reply.updated_viz && validate_viz(*reply.updated_viz).empty())
            update = reply.updated_viz;
        else if (reply.updated_viz)
            answer["ignoredViz"] = true;
    }
    catch (const Error & e)
    {
        answer["text"] = "Sorry, I could not answer that right now.";
        answer["error"] = to_string(e.code());
    }
    if (update)
        answer["updatedViz"] = to_json(*update);
    emit(EventKind::VoiceAnswer, std::move(answer));
    if (update)
    {
        fsm_->replace_viz(*update);
        emit(EventKind::VizRevised,
             Json{{"stepId", step.id}, {"label", fsm_->label_of(step.id)}, {"source", "voice"}, {"failureCount", fsm_->failure_state(step.id).failure_count}, {"viz", to_json(*update)}});
        refresh_active(true);
    }
}

void Session::on_register(const Json & payload)
{
    const std::string token = require_string(payload, "token");
    const int index = require_int(payload, "stepIndex");
    if (!fsm_)
        throw Error(ErrorCode::InvalidTransition, "register signals after PlanReady");
    const auto & steps = fsm_->plan().steps;
    if (index < 0 || index >= static_cast<int>(steps.size()))
        throw Error(ErrorCode::OutOfRange, "no step at index " + std::to_string(index), "stepIndex");
    fsm_->register_signal(steps[static_cast<std::size_t>(index)].id, token);
}

void Session::on_fire(const Json & payload)
{
    const std::string token = require_string(payload, "token");
    if (!fsm_)
        throw Error(ErrorCode::InvalidTransition, "no plan yet");
    if (auto outcome = fsm_->fire_signal(token); outcome && phase_ == SessionPhase::Executing)
        finish_verification(*outcome);
}

void Session::on_skip(const Json & payload)
{
    const int index = require_int(payload, "index");
    std::string reason = "operator";
    if (payload.contains("reason"))
        reason = require_string(payload, "reason");
    if (!fsm_ || phase_ != SessionPhase::Executing)
        throw Error(ErrorCode::InvalidTransition, "no plan is executing");
    const auto effects = fsm_->skip(index, reason);
    const bool activated = std::any_of(effects.begin(), effects.end(), [](const FsmEffect & e) { return std::holds_alternative<StepActivated>(e); });
    apply_effects(effects, true);
    // The state panel's "next" may have changed under the same cursor.
    if (!activated && fsm_->cursor() && localized_.count(fsm_->cursor()->id))
        render_active();
}

CallResult Session::call(const RenderedPrompt & prompt)
{
    Json record{{"kind", to_string(prompt.kind)}, {"contextHash", prompt.context_hash}};
    try
    {
        auto result = channel_->call(prompt);
        record["profile"] = result.profile;
        record["latency"] = result.latency;
        emit(EventKind::ModelCall, std::move(record));
        return result;
    }
    catch (const Error & e)
    {
        record["profile"] = services_->gateway->profile_for(prompt.kind).name;
        record["error"] = to_string(e.code());
        emit(EventKind::ModelCall, std::move(record));
        throw;
    }
}

const SessionEvent & Session::emit(EventKind kind, Json payload)
{
    const double now = services_->clock ? services_->clock() : wall_clock();
    const auto & event = log_.append(kind, std::move(payload), now);
    if (const auto type = message_for(kind))
        outbox_.push_back(Envelope{std::string(to_string(*type)), id_, event.seq, event.payload});
    return event;
}

void Session::emit_error(ErrorCode code, const std::string & detail, Json extra)
{
    Json payload{{"code", to_string(code)}, {"detail", detail}};
    for (auto & [key, value] : extra.items())
        payload[key] = value;
    spdlog::debug("session {}: {} {}", id_, to_string(code), detail);
    emit(EventKind::Error, std::move(payload));
}

Json Session::plan_json() const
{
    Json out = to_json(fsm_->plan());
    for (auto & step : out["steps"])
        step["label"] = fsm_->label_of(step["id"].get<int>());
    out["done"] = fsm_->done();
    return out;
}

std::vector<Envelope> Session::messages_after(std::uint64_t after) const
{
    std::lock_guard lock(mutex_);
    std::vector<Envelope> out;
    for (const auto & m : outbox_)
        if (m.seq > after)
            out.push_back(m);
    return out;
}

SessionPhase Session::phase() const
{
    std::lock_guard lock(mutex_);
    return phase_;
}

std::optional<TaskPlan> Session::plan() const
{
    std::lock_guard lock(mutex_);
    if (!fsm_)
        return std::nullopt;
    return fsm_->plan();
}

std::vector<SessionEvent> Session::events() const
{
    std::lock_guard lock(mutex_);
    return log_.events();
}

std::optional<std::filesystem::path> Session::log_path() const
{
    return log_.path();
}

Envelope error_envelope(const std::string & session_id, ErrorCode code, const std::string & detail)
{
    return Envelope{"Error", session_id, 0, Json{{"code", to_string(code)}, {"detail", detail}}};
}

SessionManager::SessionManager(std::shared_ptr<const EngineServices> services) : services_(std::move(services)) { }

std::vector<Envelope> SessionManager::handle(const Envelope & message)
{
    if (!valid_session_id(message.session_id))
        return {error_envelope(message.session_id, ErrorCode::PayloadInvalid, "session ids use letters, digits, '-' and '_'")};
    std::shared_ptr<Session> session;
    {
        std::lock_guard lock(mutex_);
        auto it = sessions_.find(message.session_id);
        if (it != sessions_.end())
            session = it->second;
        else if (message.type == to_string(ClientMessageType::StartTask))
        {
            try
            {
                session = std::make_shared<Session>(message.session_id, services_);
            }
            catch (const Error & e)
            {
                return {error_envelope(message.session_id, e.code(), e.detail())};
            }
            sessions_.emplace(message.session_id, session);
        }
    }
    if (!session)
        return {error_envelope(message.session_id, ErrorCode::UnknownSession, "no session " + message.session_id)};
    return session->handle(message);
}

std::vector<Envelope> SessionManager::handle_json(const Json & value)
{
    Envelope envelope;
    try
    {
        envelope = envelope_from_json(value);
    }
    catch (const Error & e)
    {
        const auto id = value.is_object() && value.contains("sessionId") && value["sessionId"].is_string() ? value["sessionId"].get<std::string>() : "";
        return {error_envelope(id, e.code(), e.detail() + (e.path().empty() ? "" : " at " + e.path()))};
    }
    return handle(envelope);
}

std::shared_ptr<Session> SessionManager::find(const std::string & id) const
{
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
}

std::vector<std::string> SessionManager::session_ids() const
{
    std::lock_guard lock(mutex_);
    std::vector<std::string> ids;
    for (const auto & [id, session] : sessions_)
        ids.push_back(id);
    return ids;
}

std::vector<Envelope> inputs_from(const std::vector<SessionEvent> & events, const std::string & session_id)
{
    std::vector<Envelope> inputs;
    for (const auto & event : events)
    {
        if (const auto type = input_type_for(event.kind))
        {
            Envelope e{std::string(to_string(*type)), session_id, 0, Json::object()};
            for (const auto & [key, value] : event.payload.items())
            {
                if (key == "clientSeq")
                    e.seq = value.get<std::uint64_t>();
                else
                    e.payload[key] = value;
            }
            inputs.push_back(std::move(e));
        }
        else if (event.kind == EventKind::Error && event.payload.contains("rejected"))
        {
            const auto & r = event.payload["rejected"];
            inputs.push_back(Envelope{r.value("type", std::string()), session_id, r.value("seq", std::uint64_t{0}), r.value("payload", Json::object())});
        }
    }
    return inputs;
}

ReplayReport replay_session(const std::filesystem::path & log, const std::string & session_id, std::shared_ptr<const EngineServices> services)
{
    ReplayReport report;
    report.original = EventLog::load(log);

    auto quiet = std::make_shared<EngineServices>(*services);
    quiet->log_dir.clear();
    Session session(session_id, quiet);
    const auto attachments = services->gateway->config().fixture_dir / "attachments";
    for (const auto & input : inputs_from(report.original, session_id))
    {
        // Frames reach the log by digest; recorded prompt attachments can supply the bytes.
        if (const auto it = input.payload.find("imageDigest"); it != input.payload.end() && it->is_string())
        {
            const auto digest = it->get<std::string>();
            if (looks_like_digest(digest) && !services->cache->store()->contains(digest) && std::filesystem::exists(attachments / digest))
                services->cache->store()->put(read_file(attachments / digest));
        }
        session.handle(input);
    }

    // Compare in serialized form so number representations cannot differ.
    for (const auto & event : session.events())
        report.replayed.push_back(session_event_from_json(Json::parse(dump_compact(to_json(event)))));
    report.plan = session.plan();

    if (const auto at = first_difference(report.original, report.replayed))
    {
        std::string detail = "event " + std::to_string(*at + 1) + " differs";
        if (*at < report.replayed.size())
        {
            const auto & got = report.replayed[*at];
            detail += ": replay produced " + std::string(to_string(got.kind));
            if (got.kind == EventKind::Error || got.kind == EventKind::ModelCall)
                if (got.payload.contains("code") || got.payload.contains("error"))
                    detail += " " + got.payload.value("code", got.payload.value("error", std::string()));
        }
        throw Error(ErrorCode::FixtureMismatch, detail, log.string());
    }
    return report;
}

} // namespace xrguide

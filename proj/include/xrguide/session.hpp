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

#include "xrguide/directive_renderer.hpp"
#include "xrguide/error.hpp"
#include "xrguide/guidance_fsm.hpp"
#include "xrguide/media_pipeline.hpp"
#include "xrguide/prompt_engine.hpp"
#include "xrguide/protocol.hpp"
#include "xrguide/spatial.hpp"
#include "xrguide/vlm_gateway.hpp"

#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace xrguide
{

/// Everything a session needs from the outside. Shared between sessions, so every member
/// must tolerate concurrent use from different sessions.
struct EngineServices
{
    std::shared_ptr<VlmGateway> gateway;
    std::shared_ptr<AssetCache> cache;
    std::shared_ptr<const PromptEngine> prompts;
    std::shared_ptr<const AssetCatalog> catalog;
    /// Optional: without it steps carry no reference media.
    std::shared_ptr<RetrievalProvider> retrieval;
    /// Optional: without it ShapePreview degrades to Outline.
    std::shared_ptr<SegmentationBackend> segmentation;
    std::shared_ptr<const VideoDecoder> decoder;
    MediaConfig media;
    FailurePolicy policy;
    /// Reference images attached to the planning prompt.
    std::size_t plan_reference_images = 3;
    /// Event logs go to <log_dir>/<session>.events.jsonl; empty keeps them in memory.
    std::filesystem::path log_dir;
    std::function<double()> clock;
};

enum class SessionPhase
{
    Idle,
    Executing,
    Done,
    Closed,
};

std::string_view to_string(SessionPhase phase) noexcept;

/// The latest frame plus the digests it was built from.
struct SceneFrame
{
    CameraFrame frame;
    AssetRef image;
    /// Wire form with blobs by digest; what FrameReceived records.
    Json record;
};

/// Turns a FrameUpdate payload into a frame, storing inline bytes in the cache.
/// Missing intrinsics and pose fall back to default_frame. Throws PayloadInvalid or InvalidFrame.
SceneFrame scene_frame_from(const Json & payload, AssetCache & cache);

/// One task session: the event loop that owns a plan, its gateway channel and its event log.
/// handle() is serialized internally; different sessions never share mutable state.
class Session
{
public:
    Session(std::string id, std::shared_ptr<const EngineServices> services);

    const std::string & id() const noexcept { return id_; }

    /// Processes one client envelope and returns the server messages it produced, each
    /// already persisted as an event. Protocol errors come back as Error messages.
    std::vector<Envelope> handle(const Envelope & message);

    /// Server messages with seq > `after`.
    std::vector<Envelope> messages_after(std::uint64_t after) const;

    SessionPhase phase() const;
    std::optional<TaskPlan> plan() const;
    std::vector<SessionEvent> events() const;
    std::optional<std::filesystem::path> log_path() const;

private:
    struct Localized
    {
        StepAnchors anchors;
        StepAssets assets;
        std::vector<std::string> warnings;
    };

    void dispatch(ClientMessageType type, const Envelope & message);
    void on_start(const Json & payload);
    void on_frame(const Json & payload);
    void on_verify();
    void on_voice(const Json & payload);
    void on_register(const Json & payload);
    void on_fire(const Json & payload);
    void on_skip(const Json & payload);

    void answer_voice(const std::string & question);
    void finish_verification(const VerificationOutcome & outcome);
    void handle_failure(const VerificationOutcome & outcome);
    /// Logs the FSM effects; `announce` adds a PlanUpdated snapshot.
    void apply_effects(const std::vector<FsmEffect> & effects, bool announce);
    void refresh_active(bool relocalize);
    std::optional<Localized> localize(const PlanStep & step);
    void render_active();
    std::vector<AssetRef> reference_for(const PlanStep & step) const;

    CallResult call(const RenderedPrompt & prompt);
    const SessionEvent & emit(EventKind kind, Json payload);
    void emit_error(ErrorCode code, const std::string & detail, Json extra = Json::object());
    Json plan_json() const;

    std::string id_;
    std::shared_ptr<const EngineServices> services_;
    std::unique_ptr<GatewayChannel> channel_;

    mutable std::mutex mutex_;
    EventLog log_;
    std::vector<Envelope> outbox_;
    std::size_t outbox_mark_ = 0;
    std::optional<std::uint64_t> last_client_seq_;
    SessionPhase phase_ = SessionPhase::Idle;
    std::optional<GuidanceFsm> fsm_;
    std::optional<PlannerResponseDoc> initial_doc_;
    PrefetchResult media_;
    std::optional<SceneFrame> frame_;
    std::map<int, Localized> localized_;
    std::map<int, bool> localize_failed_;
    std::deque<std::string> queued_questions_;
    int batch_counter_ = 0;
};

/// Owns the live sessions. Sessions are created by StartTask; everything else must name one.
class SessionManager
{
public:
    explicit SessionManager(std::shared_ptr<const EngineServices> services);

    /// Routes one envelope. Unknown sessions and malformed envelopes yield a bare Error envelope
    /// (seq 0) that is not part of any session log.
    std::vector<Envelope> handle(const Envelope & message);
    std::vector<Envelope> handle_json(const Json & value);

    std::shared_ptr<Session> find(const std::string & id) const;
    std::vector<std::string> session_ids() const;
    const EngineServices & services() const noexcept { return *services_; }

private:
    std::shared_ptr<const EngineServices> services_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
};

Envelope error_envelope(const std::string & session_id, ErrorCode code, const std::string & detail);

struct ReplayReport
{
    std::vector<SessionEvent> original;
    std::vector<SessionEvent> replayed;
    std::optional<TaskPlan> plan;
};

/// Re-runs a recorded session from its event log. `services.gateway` should be in replay mode
/// over the fixtures the session was recorded with. Throws LogCorrupt for an unreadable log and
/// FixtureMismatch when the replayed events (timestamps aside) differ or a model call has no fixture.
ReplayReport replay_session(const std::filesystem::path & log, const std::string & session_id, std::shared_ptr<const EngineServices> services);

/// The client envelopes a recorded log was produced from, in order.
std::vector<Envelope> inputs_from(const std::vector<SessionEvent> & events, const std::string & session_id);

} // namespace xrguide

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

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace xrguide
{

inline constexpr int kProtocolVersion = 1;

enum class ClientMessageType
{
    StartTask,
    FrameUpdate,
    VerifyRequest,
    VoiceQuery,
    RegisterSignal,
    FireSignal,
    SkipStep,
    EndSession,
};

enum class ServerMessageType
{
    PlanReady,
    PlanState,
    DirectiveBatch,
    VerificationResult,
    AudioCue,
    SubPlanInserted,
    Answer,
    Error,
};

std::string_view to_string(ClientMessageType type) noexcept;
std::string_view to_string(ServerMessageType type) noexcept;
std::optional<ClientMessageType> client_message_type_from(std::string_view text) noexcept;
std::optional<ServerMessageType> server_message_type_from(std::string_view text) noexcept;

/// {"type", "sessionId", "seq", "payload"}. seq is per (session, sender) and strictly increasing.
struct Envelope
{
    std::string type;
    std::string session_id;
    std::uint64_t seq = 0;
    Json payload = Json::object();

    bool operator==(const Envelope &) const = default;
};

Json to_json(const Envelope & envelope);
/// Throws PayloadInvalid when the shape is wrong. The type is not checked here.
Envelope envelope_from_json(const Json & value);

/// Letters, digits, '-' and '_', 1 to 64 characters; session ids double as file names.
bool valid_session_id(std::string_view id) noexcept;

enum class EventKind
{
    SessionStarted,
    PlanReady,
    PlanUpdated,
    StepActivated,
    StepCompleted,
    FrameReceived,
    VerifyRequested,
    VerificationResult,
    DirectiveBatchSent,
    AudioCueSent,
    SubPlanInserted,
    VizRevised,
    VoiceQuery,
    VoiceAnswer,
    SignalRegistered,
    SignalFired,
    SkipCommand,
    ModelCall,
    Error,
    SessionClosed,
};

std::string_view to_string(EventKind kind) noexcept;
std::optional<EventKind> event_kind_from(std::string_view text) noexcept;

/// The server message an event is delivered as, if any. The message payload is the event payload.
std::optional<ServerMessageType> message_for(EventKind kind) noexcept;

/// Events recording a client message; replay feeds these back in.
bool is_input_event(EventKind kind) noexcept;

struct SessionEvent
{
    std::uint64_t seq = 0;
    double timestamp = 0;
    EventKind kind = EventKind::SessionStarted;
    Json payload = Json::object();

    bool operator==(const SessionEvent &) const = default;
};

Json to_json(const SessionEvent & event);
SessionEvent session_event_from_json(const Json & value);

/// Append-only JSONL event history. Each append is flushed before it returns, so a
/// message built from the event is never sent ahead of its record.
class EventLog
{
public:
    /// In memory only.
    EventLog() = default;
    /// Creates (truncating) the file and its directory.
    explicit EventLog(const std::filesystem::path & path);

    const SessionEvent & append(EventKind kind, Json payload, double timestamp);
    const std::vector<SessionEvent> & events() const noexcept { return events_; }
    const std::optional<std::filesystem::path> & path() const noexcept { return path_; }

    /// Throws LogCorrupt("line N: ...") at the first unreadable or out-of-sequence line, Io when missing.
    static std::vector<SessionEvent> load(const std::filesystem::path & path);

private:
    std::optional<std::filesystem::path> path_;
    std::ofstream out_;
    std::vector<SessionEvent> events_;
};

/// Same kinds and payloads in the same order, timestamps ignored. Returns the first differing
/// position, or nullopt when equal.
std::optional<std::size_t> first_difference(const std::vector<SessionEvent> & a, const std::vector<SessionEvent> & b);

} // namespace xrguide

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


#include "xrguide/protocol.hpp"

#include "xrguide/error.hpp"

#include <array>
#include <utility>

namespace xrguide
{

namespace
{

constexpr std::array<std::pair<ClientMessageType, std::string_view>, 8> kClientNames{{
    {ClientMessageType::StartTask, "StartTask"},
    {ClientMessageType::FrameUpdate, "FrameUpdate"},
    {ClientMessageType::VerifyRequest, "VerifyRequest"},
    {ClientMessageType::VoiceQuery, "VoiceQuery"},
    {ClientMessageType::RegisterSignal, "RegisterSignal"},
    {ClientMessageType::FireSignal, "FireSignal"},
    {ClientMessageType::SkipStep, "SkipStep"},
    {ClientMessageType::EndSession, "EndSession"},
}};

constexpr std::array<std::pair<ServerMessageType, std::string_view>, 8> kServerNames{{
    {ServerMessageType::PlanReady, "PlanReady"},
    {ServerMessageType::PlanState, "PlanState"},
    {ServerMessageType::DirectiveBatch, "DirectiveBatch"},
    {ServerMessageType::VerificationResult, "VerificationResult"},
    {ServerMessageType::AudioCue, "AudioCue"},
    {ServerMessageType::SubPlanInserted, "SubPlanInserted"},
    {ServerMessageType::Answer, "Answer"},
    {ServerMessageType::Error, "Error"},
}};

constexpr std::array<std::pair<EventKind, std::string_view>, 20> kEventNames{{
    {EventKind::SessionStarted, "SessionStarted"},
    {EventKind::PlanReady, "PlanReady"},
    {EventKind::PlanUpdated, "PlanUpdated"},
    {EventKind::StepActivated, "StepActivated"},
    {EventKind::StepCompleted, "StepCompleted"},
    {EventKind::FrameReceived, "FrameReceived"},
    {EventKind::VerifyRequested, "VerifyRequested"},
    {EventKind::VerificationResult, "VerificationResult"},
    {EventKind::DirectiveBatchSent, "DirectiveBatchSent"},
    {EventKind::AudioCueSent, "AudioCueSent"},
    {EventKind::SubPlanInserted, "SubPlanInserted"},
    {EventKind::VizRevised, "VizRevised"},
    {EventKind::VoiceQuery, "VoiceQuery"},
    {EventKind::VoiceAnswer, "VoiceAnswer"},
    {EventKind::SignalRegistered, "SignalRegistered"},
    {EventKind::SignalFired, "SignalFired"},
    {EventKind::SkipCommand, "SkipCommand"},
    {EventKind::ModelCall, "ModelCall"},
    {EventKind::Error, "Error"},
    {EventKind::SessionClosed, "SessionClosed"},
}};

template <typename E, std::size_t N>
std::string_view name_of(const std::array<std::pair<E, std::string_view>, N> & table, E value) noexcept
{
    for (const auto & [v, name] : table)
        if (v == value)
            return name;
    return "?";
}

template <typename E, std::size_t N>
std::optional<E> value_of(const std::array<std::pair<E, std::string_view>, N> & table, std::string_view text) noexcept
{
    for (const auto & [v, name] : table)
        if (name == text)
            return v;
    return std::nullopt;
}

} // namespace

std::string_view to_string(ClientMessageType type) noexcept
{
    return name_of(kClientNames, type);
}

std::string_view to_string(ServerMessageType type) noexcept
{
    return name_of(kServerNames, type);
}

std::string_view to_string(EventKind kind) noexcept
{
    return name_of(kEventNames, kind);
}

std::optional<ClientMessageType> client_message_type_from(std::string_view text) noexcept
{
    return value_of(kClientNames, text);
}

std::optional<ServerMessageType> server_message_type_from(std::string_view text) noexcept
{
    return value_of(kServerNames, text);
}

std::optional<EventKind> event_kind_from(std::string_view text) noexcept
{
    return value_of(kEventNames, text);
}

std::optional<ServerMessageType> message_for(EventKind kind) noexcept
{
    switch (kind)
    {
        case EventKind::PlanReady:
            return ServerMessageType::PlanReady;
        case EventKind::PlanUpdated:
            return ServerMessageType::PlanState;
        case EventKind::DirectiveBatchSent:
            return ServerMessageType::DirectiveBatch;
        case EventKind::VerificationResult:
            return ServerMessageType::VerificationResult;
        case EventKind::AudioCueSent:
            return ServerMessageType::AudioCue;
        case EventKind::SubPlanInserted:
            return ServerMessageType::SubPlanInserted;
        case EventKind::VoiceAnswer:
            return ServerMessageType::Answer;
        case EventKind::Error:
            return ServerMessageType::Error;
        default:
            return std::nullopt;
    }
}

bool is_input_event(EventKind kind) noexcept
{
    switch (kind)
    {
        case EventKind::SessionStarted:
        case EventKind::FrameReceived:
        case EventKind::VerifyRequested:
        case EventKind::VoiceQuery:
        case EventKind::SignalRegistered:
        case EventKind::SignalFired:
        case EventKind::SkipCommand:
        case EventKind::SessionClosed:
            return true;
        default:
            return false;
    }
}

Json to_json(const Envelope & envelope)
{
    return Json{{"type", envelope.type}, {"sessionId", envelope.session_id}, {"seq", envelope.seq}, {"payload", envelope.payload}};
}

Envelope envelope_from_json(const Json & value)
{
    if (!value.is_object())
        throw Error(ErrorCode::PayloadInvalid, "envelope must be an object");
    Envelope e;
    const auto type = value.find("type");
    if (type == value.end() || !type->is_string())
        throw Error(ErrorCode::PayloadInvalid, "missing string", "type");
    e.type = type->get<std::string>();
    const auto session = value.find("sessionId");
    if (session == value.end() || !session->is_string())
        throw Error(ErrorCode::PayloadInvalid, "missing string", "sessionId");
    e.session_id = session->get<std::string>();
    const auto seq = value.find("seq");
    if (seq == value.end() || !seq->is_number_unsigned())
        throw Error(ErrorCode::PayloadInvalid, "missing non-negative integer", "seq");
    e.seq = seq->get<std::uint64_t>();
    if (const auto payload = value.find("payload"); payload != value.end() && !payload->is_null())
    {
        if (!payload->is_object())
            throw Error(ErrorCode::PayloadInvalid, "payload must be an object", "payload");
        e.payload = *payload;
    }
    return e;
}

bool valid_session_id(std::string_view id) noexcept
{
    if (id.empty() || id.size() > 64)
        return false;
    for (char c : id)
    {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_';
        if (!ok)
            return false;
    }
    return true;
}

Json to_json(const SessionEvent & event)
{
    return Json{{"seq", event.seq}, {"timestamp", event.timestamp}, {"kind", to_string(event.kind)}, {"payload", event.payload}};
}

SessionEvent session_event_from_json(const Json & value)
{
    if (!value.is_object())
        throw Error(ErrorCode::SchemaViolation, "event must be an object");
    SessionEvent e;
    const auto seq = value.find("seq");
    if (seq == value.end() || !seq->is_number_unsigned())
        throw Error(ErrorCode::SchemaViolation, "missing seq", "seq");
    e.seq = seq->get<std::uint64_t>();
    const auto ts = value.find("timestamp");
    if (ts == value.end() || !ts->is_number())
        throw Error(ErrorCode::SchemaViolation, "missing timestamp", "timestamp");
    e.timestamp = ts->get<double>();
    const auto kind = value.find("kind");
    if (kind == value.end() || !kind->is_string())
        throw Error(ErrorCode::SchemaViolation, "missing kind", "kind");
    const auto parsed = event_kind_from(kind->get<std::string>());
    if (!parsed)
        throw Error(ErrorCode::SchemaViolation, "unknown kind " + kind->get<std::string>(), "kind");
    e.kind = *parsed;
    const auto payload = value.find("payload");
    if (payload == value.end() || !payload->is_object())
        throw Error(ErrorCode::SchemaViolation, "missing payload", "payload");
    e.payload = *payload;
    return e;
}

EventLog::EventLog(const std::filesystem::path & path) : path_(path)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_)
        throw Error(ErrorCode::Io, "cannot open event log " + path.string());
}

const SessionEvent & EventLog::append(EventKind kind, Json payload, double timestamp)
{
    SessionEvent event;
    event.seq = events_.size() + 1;
    event.timestamp = timestamp;
    event.kind = kind;
    event.payload = std::move(payload);
    if (out_.is_open())
    {
        out_ << dump_compact(to_json(event)) << '\n';
        out_.flush();
        if (!out_)
            throw Error(ErrorCode::Io, "event log write failed");
    }
    events_.push_back(std::move(event));
    return events_.back();
}

std::vector<SessionEvent> EventLog::load(const std::filesystem::path & path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::Io, "cannot read event log " + path.string());
    std::vector<SessionEvent> events;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line))
    {
        ++number;
        if (line.empty())
            continue;
        const bool complete = !in.eof();
        try
        {
            auto event = session_event_from_json(Json::parse(line));
            if (event.seq != events.size() + 1)
                throw Error(ErrorCode::SchemaViolation, "expected seq " + std::to_string(events.size() + 1));
            events.push_back(std::move(event));
        }
        catch (const std::exception & e)
        {
            throw Error(ErrorCode::LogCorrupt, "line " + std::to_string(number) + ": " + e.what(), path.string());
        }
        // A final line without its newline was cut mid-write.
        if (!complete)
            throw Error(ErrorCode::LogCorrupt, "line " + std::to_string(number) + ": truncated record", path.string());
    }
    return events;
}

std::optional<std::size_t> first_difference(const std::vector<SessionEvent> & a, const std::vector<SessionEvent> & b)
{
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i)
        if (a[i].seq != b[i].seq || a[i].kind != b[i].kind || a[i].payload != b[i].payload)
            return i;
    if (a.size() != b.size())
        return n;
    return std::nullopt;
}

} // namespace xrguide

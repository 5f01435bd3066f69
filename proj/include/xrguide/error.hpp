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

#include <stdexcept>
#include <string>
#include <string_view>

namespace xrguide
{

/// Every failure the engine can report. The string form is what travels on the
/// wire in Error{code, detail} messages, so names are stable.
enum class ErrorCode
{
    // parsing / schema
    NoJsonFound,
    SchemaViolation,
    AmbiguousNext,
    OutOfRange,
    // prompts
    EmptyGoal,
    MissingPriorResponse,
    EmptyObjectName,
    // gateway
    Timeout,
    TransportError,
    ReplayMiss,
    // media
    ProviderUnavailable,
    EmptyResults,
    DecodeError,
    SegmentationUnavailable,
    NoObjectFound,
    // fsm
    OutOfOrderActivation,
    InvalidTransition,
    SubPlanTooLarge,
    SubPlanTooSmall,
    WrongParent,
    QueryQueued,
    UnknownSignal,
    // spatial
    InvalidFrame,
    NoDepthAvailable,
    MissingEndTarget,
    // renderer
    MissingAnchor,
    MissingAsset,
    // session
    UnknownSession,
    OutOfOrderSeq,
    PayloadInvalid,
    NoFrame,
    SessionClosed,
    LogCorrupt,
    FixtureMismatch,
    // harness
    ScenarioInvalid,
    LabelMismatch,
    Io,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error
{
public:
    Error(ErrorCode code, std::string detail, std::string path = {});

    ErrorCode code() const noexcept { return code_; }
    /// Location inside a document (e.g. "plannerResponse.viz.waypoints[0].objectName"), may be empty.
    const std::string & path() const noexcept { return path_; }
    const std::string & detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
    std::string path_;
};

} // namespace xrguide

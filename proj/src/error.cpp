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

#include "xrguide/error.hpp"

namespace xrguide
{

std::string_view to_string(ErrorCode code) noexcept
{
    switch (code)
    {
        case ErrorCode::NoJsonFound: return "NoJsonFound";
        case ErrorCode::SchemaViolation: return "SchemaViolation";
        case ErrorCode::AmbiguousNext: return "AmbiguousNext";
        case ErrorCode::OutOfRange: return "OutOfRange";
        case ErrorCode::EmptyGoal: return "EmptyGoal";
        case ErrorCode::MissingPriorResponse: return "MissingPriorResponse";
        case ErrorCode::EmptyObjectName: return "EmptyObjectName";
        case ErrorCode::Timeout: return "Timeout";
        case ErrorCode::TransportError: return "TransportError";
        case ErrorCode::ReplayMiss: return "ReplayMiss";
        case ErrorCode::ProviderUnavailable: return "ProviderUnavailable";
        case ErrorCode::EmptyResults: return "EmptyResults";
        case ErrorCode::DecodeError: return "DecodeError";
        case ErrorCode::SegmentationUnavailable: return "SegmentationUnavailable";
        case ErrorCode::NoObjectFound: return "NoObjectFound";
        case ErrorCode::OutOfOrderActivation: return "OutOfOrderActivation";
        case ErrorCode::InvalidTransition: return "InvalidTransition";
        case ErrorCode::SubPlanTooLarge: return "SubPlanTooLarge";
        case ErrorCode::SubPlanTooSmall: return "SubPlanTooSmall";
        case ErrorCode::WrongParent: return "WrongParent";
        case ErrorCode::QueryQueued: return "QueryQueued";
        case ErrorCode::UnknownSignal: return "UnknownSignal";
        case ErrorCode::InvalidFrame: return "InvalidFrame";
        case ErrorCode::NoDepthAvailable: return "NoDepthAvailable";
        case ErrorCode::MissingEndTarget: return "MissingEndTarget";
        case ErrorCode::MissingAnchor: return "MissingAnchor";
        case ErrorCode::MissingAsset: return "MissingAsset";
        case ErrorCode::UnknownSession: return "UnknownSession";
        case ErrorCode::OutOfOrderSeq: return "OutOfOrderSeq";
        case ErrorCode::PayloadInvalid: return "PayloadInvalid";
        case ErrorCode::NoFrame: return "NoFrame";
        case ErrorCode::SessionClosed: return "SessionClosed";
        case ErrorCode::LogCorrupt: return "LogCorrupt";
        case ErrorCode::FixtureMismatch: return "FixtureMismatch";
        case ErrorCode::ScenarioInvalid: return "ScenarioInvalid";
        case ErrorCode::LabelMismatch: return "LabelMismatch";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

namespace
{
std::string compose(ErrorCode code, const std::string & detail, const std::string & path)
{
    std::string out(to_string(code));
    if (!path.empty())
        out += " at " + path;
    if (!detail.empty())
        out += ": " + detail;
    return out;
}
}

Error::Error(ErrorCode code, std::string detail, std::string path)
    : std::runtime_error(compose(code, detail, path)), code_(code), detail_(std::move(detail)), path_(std::move(path))
{
}

} // namespace xrguide

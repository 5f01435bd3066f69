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

#include "xrguide/digest.hpp"
#include "xrguide/error.hpp"
#include "xrguide/vlm_gateway.hpp"

#include "http_util.hpp"

namespace xrguide
{

namespace
{

std::string mime_type_of(std::string_view bytes)
{
    if (bytes.starts_with("\x89PNG"))
        return "image/png";
    if (bytes.starts_with("\xFF\xD8\xFF"))
        return "image/jpeg";
    if (bytes.starts_with("RIFF") && bytes.size() > 12 && bytes.substr(8, 4) == "WEBP")
        return "image/webp";
    return "application/octet-stream";
}

std::string reply_text(const std::string & body)
{
    const auto json = Json::parse(body, nullptr, false);
    if (json.is_discarded() || !json.is_object())
        return body;
    if (auto it = json.find("text"); it != json.end() && it->is_string())
        return it->get<std::string>();
    const auto pointer = Json::json_pointer("/choices/0/message/content");
    if (json.contains(pointer) && json.at(pointer).is_string())
        return json.at(pointer).get<std::string>();
    throw Error(ErrorCode::TransportError, "response has no text field");
}

} // namespace

HttpBackend::HttpBackend(std::string api_key) : api_key_(std::move(api_key))
{
}

BackendReply HttpBackend::complete(const RenderedPrompt & prompt, const ModelProfile & profile, const BlobStore & blobs)
{
    if (profile.endpoint.empty())
        throw Error(ErrorCode::ProviderUnavailable, "profile has no endpoint", profile.name);
    Json images = Json::array();
    for (const auto & asset : prompt.attachments)
    {
        auto bytes = blobs.get(asset.digest);
        if (!bytes)
            throw Error(ErrorCode::TransportError, "attachment not in blob store", asset.digest);
        images.push_back({{"digest", asset.digest}, {"mimeType", mime_type_of(*bytes)}, {"data", base64_encode(*bytes)}});
    }
    const Json body{{"model", profile.model}, {"kind", to_string(prompt.kind)}, {"text", prompt.text}, {"images", images}};

    const auto endpoint = detail::split_endpoint(profile.endpoint);
    auto client = detail::make_client(endpoint.origin, profile.timeout_s);
    httplib::Headers headers;
    if (!api_key_.empty())
        headers.emplace("Authorization", "Bearer " + api_key_);

    auto response = client->Post(endpoint.path, headers, body.dump(), "application/json");
    if (!response)
    {
        const auto error = response.error();
        if (detail::is_timeout(error))
            throw Error(ErrorCode::Timeout, httplib::to_string(error), profile.endpoint);
        throw Error(ErrorCode::TransportError, httplib::to_string(error), profile.endpoint);
    }
    if (response->status < 200 || response->status >= 300)
        throw Error(ErrorCode::TransportError, "HTTP " + std::to_string(response->status), profile.endpoint);
    return BackendReply{reply_text(response->body), std::nullopt};
}

} // namespace xrguide

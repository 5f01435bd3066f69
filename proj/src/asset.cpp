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

#include "xrguide/asset.hpp"

#include "xrguide/error.hpp"

namespace xrguide
{

std::string_view to_string(AssetKind kind) noexcept
{
    switch (kind)
    {
        case AssetKind::Image: return "Image";
        case AssetKind::VideoClip: return "VideoClip";
        case AssetKind::Keyframe: return "Keyframe";
        case AssetKind::Mask: return "Mask";
    }
    return "?";
}

std::optional<AssetKind> asset_kind_from(std::string_view text) noexcept
{
    for (auto kind : {AssetKind::Image, AssetKind::VideoClip, AssetKind::Keyframe, AssetKind::Mask})
        if (to_string(kind) == text)
            return kind;
    return std::nullopt;
}

Json to_json(const AssetRef & asset)
{
    Json out = Json::object();
    out["digest"] = asset.digest;
    out["kind"] = to_string(asset.kind);
    if (asset.source_url)
        out["sourceUrl"] = *asset.source_url;
    if (asset.step_index)
        out["stepIndex"] = *asset.step_index;
    if (asset.parent)
        out["parent"] = *asset.parent;
    if (asset.timestamp)
        out["timestamp"] = *asset.timestamp;
    return out;
}

AssetRef asset_from_json(const Json & value)
{
    if (!value.is_object() || !value.contains("digest") || !value["digest"].is_string())
        throw Error(ErrorCode::PayloadInvalid, "asset needs a digest");
    AssetRef asset;
    asset.digest = value["digest"].get<std::string>();
    if (auto it = value.find("kind"); it != value.end())
    {
        const auto kind = it->is_string() ? asset_kind_from(it->get<std::string>()) : std::nullopt;
        if (!kind)
            throw Error(ErrorCode::PayloadInvalid, "bad asset kind");
        asset.kind = *kind;
    }
    if (auto it = value.find("sourceUrl"); it != value.end() && it->is_string())
        asset.source_url = it->get<std::string>();
    if (auto it = value.find("stepIndex"); it != value.end() && it->is_number_integer())
        asset.step_index = it->get<int>();
    if (auto it = value.find("parent"); it != value.end() && it->is_string())
        asset.parent = it->get<std::string>();
    if (auto it = value.find("timestamp"); it != value.end() && it->is_number())
        asset.timestamp = it->get<double>();
    return asset;
}

} // namespace xrguide

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

#include <optional>
#include <string>
#include <string_view>

namespace xrguide
{

enum class AssetKind
{
    Image,
    VideoClip,
    Keyframe,
    Mask,
};

std::string_view to_string(AssetKind kind) noexcept;
std::optional<AssetKind> asset_kind_from(std::string_view text) noexcept;

/// Content-addressed reference to bytes held by the asset cache.
struct AssetRef
{
    std::string digest;
    AssetKind kind = AssetKind::Image;
    std::optional<std::string> source_url;
    std::optional<int> step_index;
    /// Masks point at the image they were cut from; keyframes at their clip.
    std::optional<std::string> parent;
    /// Keyframes only: seconds from clip start.
    std::optional<double> timestamp;

    bool operator==(const AssetRef &) const = default;
};

Json to_json(const AssetRef & asset);
AssetRef asset_from_json(const Json & value);

} // namespace xrguide

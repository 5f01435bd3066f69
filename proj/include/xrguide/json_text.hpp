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

#include <json.hpp>

#include <string>
#include <string_view>
#include <vector>

namespace xrguide
{

/// Insertion-ordered JSON keeps serialized documents in the appendix key order.
using Json = nlohmann::ordered_json;

/// Locate the JSON value in a model reply. Strategy, in order: the whole text,
/// the first ``` fenced block, the first balanced top-level object (or array
/// when `allow_array`). Throws Error(NoJsonFound) when nothing parses.
Json extract_json(std::string_view raw, bool allow_array = false);

/// Every balanced top-level object in `raw` that parses, in order of appearance.
std::vector<Json> extract_all_objects(std::string_view raw);

/// Text of the first ``` fenced block, without the fence or its language tag.
std::string_view first_fenced_block(std::string_view raw) noexcept;

/// Human-readable JSON type name for schema errors.
std::string_view json_type_name(const Json & value) noexcept;

/// Deterministic compact serialization.
std::string dump_compact(const Json & value);

} // namespace xrguide

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

#include "xrguide/json_text.hpp"

#include "xrguide/error.hpp"

#include <optional>

namespace xrguide
{

namespace
{

std::optional<Json> try_parse(std::string_view text, bool allow_array)
{
    Json value = Json::parse(text.begin(), text.end(), nullptr, false);
    if (value.is_discarded())
        return std::nullopt;
    if (value.is_object() || (allow_array && value.is_array()))
        return value;
    return std::nullopt;
}

/// Offset one past the close bracket matching raw[start], or npos.
std::size_t balanced_end(std::string_view raw, std::size_t start)
{
    const char open = raw[start];
    const char close = open == '{' ? '}' : ']';
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < raw.size(); ++i)
    {
        const char c = raw[i];
        if (in_string)
        {
            if (escaped)
                escaped = false;
            else if (c == '\\')
                escaped = true;
            else if (c == '"')
                in_string = false;
            continue;
        }
        if (c == '"')
            in_string = true;
        else if (c == open)
            ++depth;
        else if (c == close)
        {
            if (--depth == 0)
                return i + 1;
        }
    }
    return std::string_view::npos;
}

std::optional<Json> first_balanced(std::string_view raw, bool allow_array)
{
    for (std::size_t i = 0; i < raw.size(); ++i)
    {
        if (raw[i] != '{' && !(allow_array && raw[i] == '['))
            continue;
        const std::size_t end = balanced_end(raw, i);
        if (end == std::string_view::npos)
            continue;
        if (auto parsed = try_parse(raw.substr(i, end - i), allow_array))
            return parsed;
    }
    return std::nullopt;
}

} // namespace

std::string_view first_fenced_block(std::string_view raw) noexcept
{
    const std::size_t open = raw.find("```");
    if (open == std::string_view::npos)
        return {};
    std::size_t body = raw.find('\n', open + 3);
    if (body == std::string_view::npos)
        return {};
    ++body;
    const std::size_t close = raw.find("```", body);
    if (close == std::string_view::npos)
        return {};
    return raw.substr(body, close - body);
}

Json extract_json(std::string_view raw, bool allow_array)
{
    if (auto whole = try_parse(raw, allow_array))
        return *whole;
    if (auto fenced = first_fenced_block(raw); !fenced.empty())
    {
        if (auto parsed = try_parse(fenced, allow_array))
            return *parsed;
    }
    if (auto balanced = first_balanced(raw, allow_array))
        return *balanced;
    throw Error(ErrorCode::NoJsonFound, "no balanced JSON value in " + std::to_string(raw.size()) + " bytes");
}

std::vector<Json> extract_all_objects(std::string_view raw)
{
    std::vector<Json> out;
    std::size_t i = 0;
    while (i < raw.size())
    {
        if (raw[i] != '{')
        {
            ++i;
            continue;
        }
        const std::size_t end = balanced_end(raw, i);
        if (end == std::string_view::npos)
            break;
        if (auto parsed = try_parse(raw.substr(i, end - i), false))
        {
            out.push_back(std::move(*parsed));
            i = end;
        }
        else
            ++i;
    }
    return out;
}

std::string_view json_type_name(const Json & value) noexcept
{
    return value.type_name();
}

std::string dump_compact(const Json & value)
{
    return value.dump(-1, ' ', false, Json::error_handler_t::replace);
}

} // namespace xrguide

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

#include <string>
#include <string_view>

namespace xrguide
{

/// Lowercase hex SHA-256 of `bytes`. Used for content addressing and prompt keys.
std::string sha256_hex(std::string_view bytes);

std::string base64_encode(std::string_view bytes);

/// Throws Error(PayloadInvalid) on malformed input.
std::string base64_decode(std::string_view text);

/// True when `s` is 64 lowercase hex characters.
bool looks_like_digest(std::string_view s) noexcept;

} // namespace xrguide

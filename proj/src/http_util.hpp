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

#include "xrguide/error.hpp"

#include <httplib.h>

#include <memory>
#include <string>

namespace xrguide::detail
{

struct Endpoint
{
    std::string origin;
    std::string path;
};

inline Endpoint split_endpoint(const std::string & url)
{
    const auto scheme = url.find("://");
    if (scheme == std::string::npos)
        throw Error(ErrorCode::TransportError, "endpoint must include a scheme", url);
    const auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos)
        return {url, "/"};
    return {url.substr(0, slash), url.substr(slash)};
}

inline std::unique_ptr<httplib::Client> make_client(const std::string & origin, double timeout_s)
{
    auto client = std::make_unique<httplib::Client>(origin);
    const auto seconds = static_cast<time_t>(timeout_s);
    const auto micros = static_cast<time_t>((timeout_s - static_cast<double>(seconds)) * 1e6);
    client->set_connection_timeout(seconds, micros);
    client->set_read_timeout(seconds, micros);
    client->set_write_timeout(seconds, micros);
    client->set_follow_location(true);
    return client;
}

inline bool is_timeout(httplib::Error error) noexcept
{
    return error == httplib::Error::Read || error == httplib::Error::ConnectionTimeout;
}

} // namespace xrguide::detail

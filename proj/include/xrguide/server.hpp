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

#include "xrguide/session.hpp"

#include <filesystem>
#include <memory>
#include <string>
#include <thread>

namespace xrguide
{

struct ServerConfig
{
    std::string host = "127.0.0.1";
    /// 0 picks a free port.
    int port = 8787;
    std::size_t max_blob_bytes = 64u << 20;
    /// Served at "/" when set (the browser console build).
    std::filesystem::path static_dir;
};

/// Plain-HTTP transport over a SessionManager:
///   POST /v1/messages                          envelope in, {"messages": [...]} out
///   GET  /v1/sessions/{id}/messages?after=N    server messages with seq > N
///   POST /v1/blobs                             raw bytes in, {"digest"} out
///   GET  /v1/blobs/{digest}                    raw bytes
///   GET  /v1/health
class HttpServer
{
public:
    HttpServer(std::shared_ptr<SessionManager> sessions, ServerConfig config);
    ~HttpServer();
    HttpServer(const HttpServer &) = delete;
    HttpServer & operator=(const HttpServer &) = delete;

    /// Binds the socket and returns the port. Throws Io when binding fails.
    int bind();
    /// Serves on the calling thread until stop().
    void serve();
    /// bind() plus serve() on a background thread.
    int start();
    void stop();
    int port() const noexcept { return port_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::shared_ptr<SessionManager> sessions_;
    ServerConfig config_;
    int port_ = 0;
    std::thread thread_;
};

} // namespace xrguide

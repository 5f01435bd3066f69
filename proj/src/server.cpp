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


#include "xrguide/server.hpp"

#include "xrguide/digest.hpp"
#include "xrguide/error.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

namespace xrguide
{

namespace
{

constexpr const char * kJson = "application/json";

Json messages_json(const std::vector<Envelope> & messages)
{
    Json out = Json::array();
    for (const auto & m : messages)
        out.push_back(to_json(m));
    return Json{{"messages", std::move(out)}};
}

int status_for(const std::vector<Envelope> & replies)
{
    // Only transport-level failures (seq 0 errors outside any session) change the status.
    if (replies.size() == 1 && replies.front().seq == 0 && replies.front().type == "Error")
    {
        const auto code = replies.front().payload.value("code", std::string());
        return code == "UnknownSession" ? 404 : 400;
    }
    return 200;
}

} // namespace

struct HttpServer::Impl
{
    httplib::Server server;
};

HttpServer::HttpServer(std::shared_ptr<SessionManager> sessions, ServerConfig config)
    : impl_(std::make_unique<Impl>()), sessions_(std::move(sessions)), config_(std::move(config))
{
    auto & server = impl_->server;
    server.set_payload_max_length(config_.max_blob_bytes);

    server.Get("/v1/health", [this](const httplib::Request &, httplib::Response & res) {
        Json body{{"status", "ok"}, {"protocol", kProtocolVersion}, {"gatewayMode", to_string(sessions_->services().gateway->mode())}};
        res.set_content(dump_compact(body), kJson);
    });

    server.Post("/v1/messages", [this](const httplib::Request & req, httplib::Response & res) {
        std::vector<Envelope> replies;
        try
        {
            replies = sessions_->handle_json(Json::parse(req.body));
        }
        catch (const Json::parse_error & e)
        {
            replies = {error_envelope("", ErrorCode::PayloadInvalid, e.what())};
        }
        res.status = status_for(replies);
        res.set_content(dump_compact(messages_json(replies)), kJson);
    });

    server.Get(R"(/v1/sessions/([A-Za-z0-9_-]+)/messages)", [this](const httplib::Request & req, httplib::Response & res) {
        const std::string id = req.matches[1];
        auto session = sessions_->find(id);
        if (!session)
        {
            res.status = 404;
            res.set_content(dump_compact(messages_json({error_envelope(id, ErrorCode::UnknownSession, "no session " + id)})), kJson);
            return;
        }
        std::uint64_t after = 0;
        if (req.has_param("after"))
        {
            try
            {
                after = std::stoull(req.get_param_value("after"));
            }
            catch (const std::exception &)
            {
                res.status = 400;
                res.set_content(dump_compact(messages_json({error_envelope(id, ErrorCode::PayloadInvalid, "after must be an integer")})), kJson);
                return;
            }
        }
        res.set_content(dump_compact(messages_json(session->messages_after(after))), kJson);
    });

    server.Post("/v1/blobs", [this](const httplib::Request & req, httplib::Response & res) {
        const auto digest = sessions_->services().cache->store()->put(req.body);
        res.set_content(dump_compact(Json{{"digest", digest}, {"size", req.body.size()}}), kJson);
    });

    server.Get(R"(/v1/blobs/([0-9a-f]{64}))", [this](const httplib::Request & req, httplib::Response & res) {
        const auto bytes = sessions_->services().cache->store()->get(req.matches[1].str());
        if (!bytes)
        {
            res.status = 404;
            return;
        }
        res.set_content(*bytes, "application/octet-stream");
    });

    if (!config_.static_dir.empty())
        server.set_mount_point("/", config_.static_dir.string());
}

HttpServer::~HttpServer()
{
    stop();
}

int HttpServer::bind()
{
    auto & server = impl_->server;
    if (config_.port == 0)
        port_ = server.bind_to_any_port(config_.host);
    else
        port_ = server.bind_to_port(config_.host, config_.port) ? config_.port : -1;
    if (port_ <= 0)
        throw Error(ErrorCode::Io, "cannot bind " + config_.host + ":" + std::to_string(config_.port));
    return port_;
}

void HttpServer::serve()
{
    spdlog::info("listening on http://{}:{}", config_.host, port_);
    impl_->server.listen_after_bind();
}

int HttpServer::start()
{
    const int port = bind();
    thread_ = std::thread([this] { serve(); });
    impl_->server.wait_until_ready();
    return port;
}

void HttpServer::stop()
{
    impl_->server.stop();
    if (thread_.joinable())
        thread_.join();
}

} // namespace xrguide

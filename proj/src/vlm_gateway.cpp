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

#include "xrguide/vlm_gateway.hpp"

#include "xrguide/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <limits>

namespace xrguide
{

namespace
{

double wall_clock()
{
    using namespace std::chrono;
    return duration<double>(system_clock::now().time_since_epoch()).count();
}

std::string env_or(const char * name, std::string fallback)
{
    const char * value = std::getenv(name);
    return value && *value ? std::string(value) : std::move(fallback);
}

} // namespace

std::string_view to_string(GatewayMode mode) noexcept
{
    switch (mode)
    {
        case GatewayMode::Live:
            return "live";
        case GatewayMode::Record:
            return "record";
        case GatewayMode::Replay:
            return "replay";
    }
    return "replay";
}

std::optional<GatewayMode> gateway_mode_from(std::string_view text) noexcept
{
    for (auto mode : {GatewayMode::Live, GatewayMode::Record, GatewayMode::Replay})
        if (to_string(mode) == text)
            return mode;
    return std::nullopt;
}

Json to_json(const CallRecord & record)
{
    return Json{{"contextHash", record.context_hash},
                {"kind", to_string(record.kind)},
                {"profile", record.profile},
                {"requestText", record.request_text},
                {"attachmentDigests", record.attachment_digests},
                {"responseText", record.response_text},
                {"latency", record.latency},
                {"timestamp", record.timestamp}};
}

CallRecord call_record_from_json(const Json & value)
{
    auto field = [&](const char * key) -> const Json &
    {
        auto it = value.find(key);
        if (it == value.end())
            throw Error(ErrorCode::SchemaViolation, "missing field", std::string("$.") + key);
        return *it;
    };
    try
    {
        CallRecord record;
        record.context_hash = field("contextHash").get<std::string>();
        const auto kind = prompt_kind_from(field("kind").get<std::string>());
        if (!kind)
            throw Error(ErrorCode::SchemaViolation, "unknown prompt kind", "$.kind");
        record.kind = *kind;
        record.profile = field("profile").get<std::string>();
        record.request_text = field("requestText").get<std::string>();
        record.attachment_digests = field("attachmentDigests").get<std::vector<std::string>>();
        record.response_text = field("responseText").get<std::string>();
        record.latency = field("latency").get<double>();
        record.timestamp = value.value("timestamp", 0.0);
        if (record.latency < 0)
            throw Error(ErrorCode::OutOfRange, "negative latency", "$.latency");
        return record;
    }
    catch (const Json::exception & e)
    {
        throw Error(ErrorCode::SchemaViolation, e.what());
    }
}

std::vector<CallRecord> load_call_records(const std::filesystem::path & path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::Io, "cannot open fixture", path.string());
    std::vector<CallRecord> records;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line))
    {
        ++number;
        if (line.empty())
            continue;
        const auto parsed = Json::parse(line, nullptr, false);
        try
        {
            if (parsed.is_discarded())
                throw Error(ErrorCode::SchemaViolation, "not JSON");
            records.push_back(call_record_from_json(parsed));
        }
        catch (const Error & e)
        {
            throw Error(ErrorCode::LogCorrupt, "line " + std::to_string(number) + ": " + e.detail(), path.string());
        }
    }
    return records;
}

void ScriptedBackend::push(PromptKind kind, std::string text, double latency)
{
    std::lock_guard lock(mutex_);
    queued_[kind].push_back(BackendReply{std::move(text), latency});
}

BackendReply ScriptedBackend::complete(const RenderedPrompt & prompt, const ModelProfile & profile, const BlobStore &)
{
    {
        std::lock_guard lock(mutex_);
        ++calls_;
        auto it = queued_.find(prompt.kind);
        if (it != queued_.end() && !it->second.empty())
        {
            auto reply = std::move(it->second.front());
            it->second.pop_front();
            return reply;
        }
    }
    if (!responder_)
        throw Error(ErrorCode::TransportError, "scripted backend has no reply for " + std::string(to_string(prompt.kind)));
    return responder_(prompt, profile);
}

std::size_t ScriptedBackend::pending() const
{
    std::lock_guard lock(mutex_);
    std::size_t n = 0;
    for (const auto & [kind, queue] : queued_)
        n += queue.size();
    return n;
}

LatencySummary summarize(const std::vector<double> & latencies)
{
    LatencySummary s;
    if (latencies.empty())
        return s;
    s.count = latencies.size();
    s.min = std::numeric_limits<double>::infinity();
    s.max = -std::numeric_limits<double>::infinity();
    double total = 0;
    for (double v : latencies)
    {
        total += v;
        s.min = std::min(s.min, v);
        s.max = std::max(s.max, v);
    }
    s.mean = total / static_cast<double>(s.count);
    return s;
}

void LatencyMetrics::add(PromptKind kind, const std::string & profile, double latency)
{
    std::lock_guard lock(mutex_);
    latencies_[{kind, profile}].push_back(latency);
}

void LatencyMetrics::add_timeout(PromptKind kind, const std::string & profile)
{
    std::lock_guard lock(mutex_);
    ++timeouts_[{kind, profile}];
}

std::map<std::pair<PromptKind, std::string>, LatencySummary> LatencyMetrics::summary() const
{
    std::lock_guard lock(mutex_);
    std::map<std::pair<PromptKind, std::string>, LatencySummary> out;
    for (const auto & [key, values] : latencies_)
        out[key] = summarize(values);
    for (const auto & [key, n] : timeouts_)
        out[key].timeouts = n;
    return out;
}

LatencySummary LatencyMetrics::summary(PromptKind kind, const std::string & profile) const
{
    const auto all = summary();
    auto it = all.find({kind, profile});
    return it == all.end() ? LatencySummary{} : it->second;
}

LatencySummary LatencyMetrics::profile_summary(const std::string & profile) const
{
    std::lock_guard lock(mutex_);
    std::vector<double> values;
    std::size_t timeouts = 0;
    for (const auto & [key, v] : latencies_)
        if (key.second == profile)
            values.insert(values.end(), v.begin(), v.end());
    for (const auto & [key, n] : timeouts_)
        if (key.second == profile)
            timeouts += n;
    auto s = summarize(values);
    s.timeouts = timeouts;
    return s;
}

Json LatencyMetrics::to_json() const
{
    Json out = Json::array();
    for (const auto & [key, s] : summary())
        out.push_back({{"kind", to_string(key.first)},
                       {"profile", key.second},
                       {"count", s.count},
                       {"mean", s.mean},
                       {"min", s.min},
                       {"max", s.max},
                       {"timeouts", s.timeouts}});
    return out;
}

GatewayConfig GatewayConfig::defaults()
{
    GatewayConfig config;
    config.profiles.emplace(std::string(kFastProfile), ModelProfile{std::string(kFastProfile), "", "gemini-2.5-flash", 30.0});
    config.profiles.emplace(std::string(kStrongProfile), ModelProfile{std::string(kStrongProfile), "", "gemini-2.5-pro", 90.0});
    config.routing = {
        {PromptKind::InitialPlan, std::string(kFastProfile)},
        {PromptKind::DuringTask, std::string(kFastProfile)},
        {PromptKind::RelevanceScore, std::string(kFastProfile)},
        {PromptKind::VoiceAnswer, std::string(kFastProfile)},
        {PromptKind::RotationLocalize, std::string(kStrongProfile)},
        {PromptKind::TransformLocalize, std::string(kStrongProfile)},
    };
    config.clock = wall_clock;
    return config;
}

GatewayConfig GatewayConfig::from_env()
{
    auto config = defaults();
    if (const auto mode = gateway_mode_from(env_or("XRGUIDE_MODE", "replay")))
        config.mode = *mode;
    else
        throw Error(ErrorCode::SchemaViolation, "XRGUIDE_MODE must be live, record or replay");
    config.fixture_dir = env_or("XRGUIDE_FIXTURE_DIR", "fixtures");
    auto & fast = config.profiles.find(kFastProfile)->second;
    auto & strong = config.profiles.find(kStrongProfile)->second;
    fast.endpoint = env_or("XRGUIDE_FAST_ENDPOINT", env_or("XRGUIDE_ENDPOINT", ""));
    strong.endpoint = env_or("XRGUIDE_STRONG_ENDPOINT", fast.endpoint);
    fast.model = env_or("XRGUIDE_FAST_MODEL", fast.model);
    strong.model = env_or("XRGUIDE_STRONG_MODEL", strong.model);
    if (const char * timeout = std::getenv("XRGUIDE_TIMEOUT_S"))
    {
        const double t = std::atof(timeout);
        if (t > 0)
            fast.timeout_s = strong.timeout_s = t;
    }
    return config;
}

GatewayChannel::GatewayChannel(VlmGateway & gateway, std::string session_id) : gateway_(gateway), session_id_(std::move(session_id))
{
}

std::size_t GatewayChannel::unconsumed() const
{
    return static_cast<std::size_t>(std::count(consumed_.begin(), consumed_.end(), false));
}

CallResult GatewayChannel::call(const RenderedPrompt & prompt)
{
    return call(prompt, gateway_.profile_for(prompt.kind));
}

CallResult GatewayChannel::call(const RenderedPrompt & prompt, const ModelProfile & profile)
{
    if (prompt.context_hash != compute_context_hash(prompt.kind, prompt.text, prompt.attachments))
        throw Error(ErrorCode::SchemaViolation, "prompt context hash is stale", "context_hash");
    auto result = gateway_.config_.mode == GatewayMode::Replay ? replay(prompt, profile) : forward(prompt, profile);
    ++kind_calls_[prompt.kind];
    gateway_.metrics_.add(prompt.kind, result.profile, result.latency);
    return result;
}

CallResult GatewayChannel::replay(const RenderedPrompt & prompt, const ModelProfile & profile)
{
    std::optional<std::size_t> hit;
    for (std::size_t i = 0; i < records_.size() && !hit; ++i)
        if (!consumed_[i] && records_[i].context_hash == prompt.context_hash)
            hit = i;
    if (!hit && !gateway_.config_.strict_replay)
    {
        std::size_t seen = 0;
        const std::size_t wanted = kind_calls_[prompt.kind];
        for (std::size_t i = 0; i < records_.size(); ++i)
        {
            if (records_[i].kind != prompt.kind)
                continue;
            if (seen++ == wanted)
            {
                if (!consumed_[i])
                {
                    spdlog::debug("replay {}: {} served by position {}", session_id_, to_string(prompt.kind), wanted);
                    hit = i;
                }
                break;
            }
        }
    }
    if (!hit)
        throw Error(ErrorCode::ReplayMiss, prompt.context_hash, std::string(to_string(prompt.kind)));
    consumed_[*hit] = true;
    const auto & record = records_[*hit];
    return CallResult{record.response_text, record.latency, record.profile.empty() ? profile.name : record.profile};
}

CallResult GatewayChannel::forward(const RenderedPrompt & prompt, const ModelProfile & profile)
{
    const double started = gateway_.config_.clock();
    const auto t0 = std::chrono::steady_clock::now();
    BackendReply reply;
    try
    {
        ++gateway_.backend_calls_;
        reply = gateway_.backend_->complete(prompt, profile, *gateway_.blobs_);
    }
    catch (const Error & e)
    {
        if (e.code() == ErrorCode::Timeout)
            gateway_.metrics_.add_timeout(prompt.kind, profile.name);
        throw;
    }
    const double measured = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double latency = reply.latency.value_or(measured);

    if (gateway_.config_.mode == GatewayMode::Record)
    {
        CallRecord record;
        record.context_hash = prompt.context_hash;
        record.kind = prompt.kind;
        record.profile = profile.name;
        record.request_text = prompt.text;
        for (const auto & a : prompt.attachments)
            record.attachment_digests.push_back(a.digest);
        record.response_text = reply.text;
        record.latency = latency;
        record.timestamp = started;

        std::lock_guard lock(gateway_.fixture_mutex_);
        const auto dir = gateway_.config_.fixture_dir;
        for (const auto & digest : record.attachment_digests)
        {
            const auto target = dir / "attachments" / digest;
            if (std::filesystem::exists(target))
                continue;
            if (auto bytes = gateway_.blobs_->get(digest))
                write_file(target, *bytes);
        }
        std::ofstream out(dir / (session_id_ + ".jsonl"), std::ios::binary | std::ios::app);
        if (!out)
            throw Error(ErrorCode::Io, "cannot append fixture", (dir / (session_id_ + ".jsonl")).string());
        out << dump_compact(to_json(record)) << '\n';
        out.flush();
        records_.push_back(std::move(record));
        consumed_.push_back(true);
    }
    return CallResult{std::move(reply.text), latency, profile.name};
}

VlmGateway::VlmGateway(GatewayConfig config, std::shared_ptr<ModelBackend> backend, std::shared_ptr<const BlobStore> blobs)
    : config_(std::move(config)), backend_(std::move(backend)), blobs_(std::move(blobs))
{
    if (!config_.clock)
        config_.clock = wall_clock;
    if (!blobs_)
        blobs_ = std::make_shared<MemoryBlobStore>();
    for (const auto & [name, profile] : config_.profiles)
        if (!(profile.timeout_s > 0))
            throw Error(ErrorCode::OutOfRange, "profile timeout must be positive", "profiles." + name);
    if (config_.mode != GatewayMode::Replay && !backend_)
        throw Error(ErrorCode::ProviderUnavailable, "live and record modes need a backend");
}

std::unique_ptr<GatewayChannel> VlmGateway::open(const std::string & session_id)
{
    std::unique_ptr<GatewayChannel> channel(new GatewayChannel(*this, session_id));
    const auto path = config_.fixture_dir / (session_id + ".jsonl");
    if (config_.mode == GatewayMode::Replay)
    {
        if (std::filesystem::exists(path))
            channel->records_ = load_call_records(path);
        channel->consumed_.assign(channel->records_.size(), false);
    }
    else if (config_.mode == GatewayMode::Record)
    {
        std::lock_guard lock(fixture_mutex_);
        write_file(path, "");
    }
    return channel;
}

const ModelProfile & VlmGateway::profile_for(PromptKind kind) const
{
    auto route = config_.routing.find(kind);
    const std::string name = route == config_.routing.end() ? std::string(kFastProfile) : route->second;
    auto it = config_.profiles.find(name);
    if (it == config_.profiles.end())
        throw Error(ErrorCode::ProviderUnavailable, "no profile named " + name);
    return it->second;
}

} // namespace xrguide

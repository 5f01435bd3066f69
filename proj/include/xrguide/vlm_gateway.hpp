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

#include "xrguide/blob_store.hpp"
#include "xrguide/json_text.hpp"
#include "xrguide/prompt_engine.hpp"

#include <atomic>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace xrguide
{

struct ModelProfile
{
    std::string name;
    std::string endpoint;
    std::string model;
    double timeout_s = 60.0;
};

inline constexpr std::string_view kFastProfile = "fast";
inline constexpr std::string_view kStrongProfile = "strong";

enum class GatewayMode
{
    Live,
    Record,
    Replay,
};

std::string_view to_string(GatewayMode mode) noexcept;
std::optional<GatewayMode> gateway_mode_from(std::string_view text) noexcept;

struct CallRecord
{
    std::string context_hash;
    PromptKind kind = PromptKind::InitialPlan;
    std::string profile;
    std::string request_text;
    std::vector<std::string> attachment_digests;
    std::string response_text;
    double latency = 0;
    double timestamp = 0;

    bool operator==(const CallRecord &) const = default;
};

Json to_json(const CallRecord & record);
CallRecord call_record_from_json(const Json & value);

/// Reads a fixture file. Throws LogCorrupt naming the 1-based line of the first bad record.
std::vector<CallRecord> load_call_records(const std::filesystem::path & path);

struct BackendReply
{
    std::string text;
    /// When set, reported instead of the measured wall-clock time.
    std::optional<double> latency;
};

/// Whatever actually answers prompts. Attachments are resolved through `blobs`.
class ModelBackend
{
public:
    virtual ~ModelBackend() = default;
    virtual BackendReply complete(const RenderedPrompt & prompt, const ModelProfile & profile, const BlobStore & blobs) = 0;
};

/// POSTs {model, text, images:[{digest, mimeType, data}]} and expects {"text": ...} (or any JSON with a
/// string at choices[0].message.content, or a plain-text body).
class HttpBackend final : public ModelBackend
{
public:
    explicit HttpBackend(std::string api_key);
    BackendReply complete(const RenderedPrompt & prompt, const ModelProfile & profile, const BlobStore & blobs) override;

private:
    std::string api_key_;
};

/// Deterministic stand-in used to author fixtures and in tests.
class ScriptedBackend final : public ModelBackend
{
public:
    using Responder = std::function<BackendReply(const RenderedPrompt &, const ModelProfile &)>;

    ScriptedBackend() = default;
    explicit ScriptedBackend(Responder responder) : responder_(std::move(responder)) { }

    /// Queue a reply for the next call of `kind`. Queued replies win over the responder.
    void push(PromptKind kind, std::string text, double latency = 0.0);
    BackendReply complete(const RenderedPrompt & prompt, const ModelProfile & profile, const BlobStore & blobs) override;
    std::size_t calls() const noexcept { return calls_; }
    std::size_t pending() const;

private:
    Responder responder_;
    mutable std::mutex mutex_;
    std::map<PromptKind, std::deque<BackendReply>> queued_;
    std::size_t calls_ = 0;
};

struct LatencySummary
{
    std::size_t count = 0;
    double mean = 0;
    double min = 0;
    double max = 0;
    std::size_t timeouts = 0;
};

LatencySummary summarize(const std::vector<double> & latencies);

/// Latency aggregation per (kind, profile); thread-safe.
class LatencyMetrics
{
public:
    void add(PromptKind kind, const std::string & profile, double latency);
    void add_timeout(PromptKind kind, const std::string & profile);
    std::map<std::pair<PromptKind, std::string>, LatencySummary> summary() const;
    LatencySummary summary(PromptKind kind, const std::string & profile) const;
    /// Over every completed call of `profile`, all kinds together.
    LatencySummary profile_summary(const std::string & profile) const;
    Json to_json() const;

private:
    mutable std::mutex mutex_;
    std::map<std::pair<PromptKind, std::string>, std::vector<double>> latencies_;
    std::map<std::pair<PromptKind, std::string>, std::size_t> timeouts_;
};

struct GatewayConfig
{
    GatewayMode mode = GatewayMode::Replay;
    /// Holds <session>.jsonl files and attachments/<digest>.
    std::filesystem::path fixture_dir;
    std::map<std::string, ModelProfile, std::less<>> profiles;
    std::map<PromptKind, std::string> routing;
    /// Replay only by exact context hash, never by call position.
    bool strict_replay = false;
    std::function<double()> clock;

    /// Defaults: verification, relevance, voice and planning on the fast profile; localization on the strong one.
    static GatewayConfig defaults();
    /// XRGUIDE_MODE, XRGUIDE_FIXTURE_DIR, XRGUIDE_FAST_ENDPOINT, XRGUIDE_FAST_MODEL, XRGUIDE_STRONG_ENDPOINT,
    /// XRGUIDE_STRONG_MODEL, XRGUIDE_TIMEOUT_S layered over defaults().
    static GatewayConfig from_env();
};

struct CallResult
{
    std::string text;
    double latency = 0;
    std::string profile;
};

class VlmGateway;

/// One session's view of the gateway: owns the fixture file and the replay cursor.
/// Calls through a channel must be serialized by the caller.
class GatewayChannel
{
public:
    CallResult call(const RenderedPrompt & prompt);
    CallResult call(const RenderedPrompt & prompt, const ModelProfile & profile);

    const std::string & session_id() const noexcept { return session_id_; }
    /// Records written (record mode) or loaded (replay mode).
    const std::vector<CallRecord> & records() const noexcept { return records_; }
    std::size_t unconsumed() const;

private:
    friend class VlmGateway;
    GatewayChannel(VlmGateway & gateway, std::string session_id);

    CallResult replay(const RenderedPrompt & prompt, const ModelProfile & profile);
    CallResult forward(const RenderedPrompt & prompt, const ModelProfile & profile);

    VlmGateway & gateway_;
    std::string session_id_;
    std::vector<CallRecord> records_;
    std::vector<bool> consumed_;
    std::map<PromptKind, std::size_t> kind_calls_;
};

/// The single choke point for model calls.
class VlmGateway
{
public:
    VlmGateway(GatewayConfig config, std::shared_ptr<ModelBackend> backend, std::shared_ptr<const BlobStore> blobs);

    /// Replay mode loads <fixture_dir>/<session_id>.jsonl (a missing file replays as empty);
    /// record mode truncates it.
    std::unique_ptr<GatewayChannel> open(const std::string & session_id);

    const ModelProfile & profile_for(PromptKind kind) const;
    const GatewayConfig & config() const noexcept { return config_; }
    GatewayMode mode() const noexcept { return config_.mode; }
    const LatencyMetrics & metrics() const noexcept { return metrics_; }
    /// Calls that reached the backend. Always zero in replay mode.
    std::size_t backend_calls() const noexcept { return backend_calls_.load(); }

private:
    friend class GatewayChannel;

    GatewayConfig config_;
    std::shared_ptr<ModelBackend> backend_;
    std::shared_ptr<const BlobStore> blobs_;
    LatencyMetrics metrics_;
    std::atomic<std::size_t> backend_calls_{0};
    std::mutex fixture_mutex_;
};

} // namespace xrguide

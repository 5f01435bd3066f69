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

#include "xrguide/guidance_fsm.hpp"
#include "xrguide/protocol.hpp"
#include "xrguide/session.hpp"
#include "xrguide/vlm_gateway.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace xrguide
{

enum class ActionKind
{
    SendFrame,
    Verify,
    Voice,
    RegisterSignal,
    FireSignal,
    Skip,
    End,
};

std::string_view to_string(ActionKind kind) noexcept;

struct ScenarioAction
{
    ActionKind kind = ActionKind::Verify;
    int frame = 0;
    int index = 0;
    std::string text;
    std::string token;
    std::string reason;
};

/// One assertion over the event stream. `spec` keeps the type-specific fields.
struct Expectation
{
    std::string type;
    Json spec;
};

struct Scenario
{
    std::string name;
    std::string prompt;
    /// FrameUpdate payload templates; an "image": {"color": [r, g, b]} entry is synthesized.
    std::vector<Json> frames;
    std::vector<ScenarioAction> script;
    std::vector<Expectation> expectations;
    /// Directory the relative paths below resolve against.
    std::filesystem::path dir;
    std::filesystem::path fixture_dir;
    /// Authoring script for record mode: {"replies": [...], "defaults": {...}}.
    std::filesystem::path model_file;
    std::optional<std::filesystem::path> retrieval_manifest;
    Json segmentation = Json::object();
    FailurePolicy policy;
};

/// Throws ScenarioInvalid for structural problems, e.g. a Verify before any SendFrame.
Scenario scenario_from_json(const Json & value, const std::filesystem::path & dir);
Scenario load_scenario(const std::filesystem::path & path);
/// Every <dir>/*/scenario.json, sorted by name.
std::vector<Scenario> load_scenarios(const std::filesystem::path & dir);

/// "P6" bytes of a solid-colour image; the synthetic frames are built from these.
std::string synthetic_image(int width, int height, int r, int g, int b);

/// Backend that plays a scenario's model file: queued replies per kind, then per-kind defaults.
std::shared_ptr<ScriptedBackend> scripted_backend_from(const std::filesystem::path & model_file);

struct RunOptions
{
    GatewayMode mode = GatewayMode::Replay;
    /// Event logs land here; empty keeps them in memory.
    std::filesystem::path log_dir;
    /// Overrides the scenario's own fixture directory.
    std::optional<std::filesystem::path> fixture_dir;
    /// Record and live modes; record mode defaults to the scenario's model file.
    std::shared_ptr<ModelBackend> backend;
};

struct ScenarioReport
{
    std::string name;
    bool passed = false;
    std::vector<std::string> failures;
    std::optional<std::filesystem::path> log_path;
    Json metrics = Json::object();
    /// Every DirectiveBatch payload in order, serialized.
    std::vector<std::string> directives;
    std::vector<SessionEvent> events;
    std::optional<TaskPlan> plan;
    SessionPhase phase = SessionPhase::Idle;
    std::size_t backend_calls = 0;
};

Json to_json(const ScenarioReport & report);

/// Builds the offline engine a scenario runs against.
std::shared_ptr<EngineServices> scenario_services(const Scenario & scenario, const RunOptions & options);

/// Runs the script through an in-process session, then checks every expectation.
/// Assertion failures are collected, not thrown.
ScenarioReport run_scenario(const Scenario & scenario, const RunOptions & options = {});
std::vector<ScenarioReport> run_scenarios(const std::vector<Scenario> & scenarios, const RunOptions & options, bool parallel);

/// Failure messages, empty when every expectation holds.
std::vector<std::string> check_expectations(const std::vector<Expectation> & expectations, const std::vector<SessionEvent> & events,
                                            const std::optional<TaskPlan> & plan, SessionPhase phase);

} // namespace xrguide

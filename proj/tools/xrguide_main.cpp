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


#include "xrguide/blob_store.hpp"
#include "xrguide/error.hpp"
#include "xrguide/eval_report.hpp"
#include "xrguide/server.hpp"
#include "xrguide/sim_harness.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <csignal>
#include <cstdlib>
#include <iostream>

using namespace xrguide;

namespace
{

enum Exit
{
    kOk = 0,
    kFailed = 1,
    kUsage = 2,
    kEngineError = 3,
};

HttpServer * g_server = nullptr;

void on_signal(int)
{
    if (g_server)
        g_server->stop();
}

GatewayMode parse_mode(const std::string & text)
{
    const auto mode = gateway_mode_from(text);
    if (!mode)
        throw Error(ErrorCode::SchemaViolation, "mode must be live, record or replay");
    return *mode;
}

struct ServeOptions
{
    std::string host = "127.0.0.1";
    int port = 8787;
    std::string mode;
    std::string fixture_dir;
    std::string log_dir = "logs";
    std::string static_dir;
    std::string media;
    std::string search_endpoint;
    std::string segmentation_endpoint;
    std::string mock_segmentation;
};

int serve(const ServeOptions & o)
{
    auto store = std::make_shared<MemoryBlobStore>();
    auto cache = std::make_shared<AssetCache>(store);
    auto config = GatewayConfig::from_env();
    if (!o.mode.empty())
        config.mode = parse_mode(o.mode);
    if (!o.fixture_dir.empty())
        config.fixture_dir = o.fixture_dir;
    std::shared_ptr<ModelBackend> backend;
    if (config.mode != GatewayMode::Replay)
        backend = std::make_shared<HttpBackend>(std::getenv("XRGUIDE_API_KEY") ? std::getenv("XRGUIDE_API_KEY") : "");

    auto services = std::make_shared<EngineServices>();
    services->gateway = std::make_shared<VlmGateway>(config, backend, store);
    services->cache = cache;
    services->prompts = std::make_shared<PromptEngine>(PromptEngine::load_default());
    services->catalog = std::make_shared<AssetCatalog>(AssetCatalog::load(PromptEngine::default_resource_dir() / "assets", *cache));
    if (!o.media.empty())
        services->retrieval = std::make_shared<OfflineProvider>(o.media);
    else if (!o.search_endpoint.empty())
        services->retrieval = std::make_shared<HttpSearchProvider>(o.search_endpoint);
    if (!o.segmentation_endpoint.empty())
        services->segmentation = std::make_shared<HttpSegmentation>(o.segmentation_endpoint);
    else if (!o.mock_segmentation.empty())
        services->segmentation = std::make_shared<MockSegmentation>(MockSegmentation::from_json(Json::parse(read_file(o.mock_segmentation))));
    services->log_dir = o.log_dir;

    ServerConfig server_config;
    server_config.host = o.host;
    server_config.port = o.port;
    server_config.static_dir = o.static_dir;
    HttpServer server(std::make_shared<SessionManager>(services), server_config);
    const int port = server.bind();
    spdlog::info("listening on http://{}:{} (gateway {})", o.host, port, to_string(config.mode));
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    server.serve();
    g_server = nullptr;
    return kOk;
}

std::vector<Scenario> collect_scenarios(const std::vector<std::string> & paths)
{
    std::vector<Scenario> out;
    for (const auto & p : paths)
    {
        const std::filesystem::path path(p);
        if (std::filesystem::is_directory(path) && std::filesystem::exists(path / "scenario.json"))
            out.push_back(load_scenario(path / "scenario.json"));
        else if (std::filesystem::is_directory(path))
        {
            auto all = load_scenarios(path);
            out.insert(out.end(), all.begin(), all.end());
        }
        else
            out.push_back(load_scenario(path));
    }
    return out;
}

int simulate(const std::vector<std::string> & paths, bool record, const std::string & log_dir, bool parallel, bool json)
{
    RunOptions options;
    options.mode = record ? GatewayMode::Record : GatewayMode::Replay;
    options.log_dir = log_dir;
    const auto scenarios = collect_scenarios(paths);
    const auto reports = run_scenarios(scenarios, options, parallel);
    bool passed = true;
    Json all = Json::array();
    for (const auto & r : reports)
    {
        passed = passed && r.passed;
        all.push_back(to_json(r));
        if (!json)
        {
            std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << "  " << r.metrics.dump() << "\n";
            for (const auto & f : r.failures)
                std::cout << "  " << f << "\n";
        }
    }
    if (json)
        std::cout << Json{{"passed", passed}, {"scenarios", all}}.dump(2) << "\n";
    return passed ? kOk : kFailed;
}

int evaluate(const std::string & logs, const std::string & labels, bool json)
{
    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_directory(logs))
    {
        for (const auto & entry : std::filesystem::directory_iterator(logs))
            if (entry.path().extension() == ".jsonl")
                files.push_back(entry.path());
        std::sort(files.begin(), files.end());
    }
    else
        files.push_back(logs);
    const auto report = eval_report(files, labels);
    if (json)
        std::cout << to_json(report).dump(2) << "\n";
    else
        std::cout << render_text(report);
    return kOk;
}

struct PlanOptions
{
    std::string prompt;
    std::string scenario;
    std::string mode = "replay";
    std::string fixture_dir;
    std::string session;
    std::string media;
    bool json = false;
};

int plan(PlanOptions o)
{
    Scenario scenario;
    if (!o.scenario.empty())
    {
        scenario = load_scenario(o.scenario);
        if (o.prompt.empty())
            o.prompt = scenario.prompt;
    }
    if (o.prompt.empty())
        throw Error(ErrorCode::EmptyGoal, "give a prompt or --scenario");
    if (!o.session.empty())
        scenario.name = o.session;
    if (scenario.name.empty())
        scenario.name = "plan";
    if (!o.media.empty())
        scenario.retrieval_manifest = std::filesystem::path(o.media);
    if (scenario.fixture_dir.empty())
        scenario.fixture_dir = "fixtures";
    if (scenario.model_file.empty())
        scenario.model_file = "model.json";

    RunOptions options;
    options.mode = parse_mode(o.mode);
    if (!o.fixture_dir.empty())
        options.fixture_dir = std::filesystem::path(o.fixture_dir);
    auto services = scenario_services(scenario, options);
    Session session(scenario.name, services);
    const auto out = session.handle(Envelope{"StartTask", scenario.name, 1, Json{{"prompt", o.prompt}}});
    for (const auto & m : out)
    {
        if (m.type == "Error")
        {
            std::cerr << "error: " << m.payload.dump() << "\n";
            return kEngineError;
        }
        if (m.type != "PlanReady")
            continue;
        if (o.json)
        {
            std::cout << m.payload.dump(2) << "\n";
            return kOk;
        }
        std::cout << m.payload["goal"].get<std::string>() << "\n";
        for (const auto & step : m.payload["steps"])
            std::cout << "  " << step["label"].get<std::string>() << ". [" << step["stepType"].get<std::string>() << "] "
                      << step["instruction"].get<std::string>() << "\n";
        for (const auto & flag : m.payload["flags"])
            std::cout << "  flag: " << flag.get<std::string>() << "\n";
        return kOk;
    }
    std::cerr << "error: no plan was produced\n";
    return kEngineError;
}

} // namespace

int main(int argc, char ** argv)
{
    CLI::App app{"Cross-reality task guidance engine"};
    app.require_subcommand(1);
    std::string log_level = "warn";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

    ServeOptions serve_options;
    auto * serve_cmd = app.add_subcommand("serve", "Run the session server");
    serve_cmd->add_option("--host", serve_options.host);
    serve_cmd->add_option("--port", serve_options.port, "0 picks a free port");
    serve_cmd->add_option("--mode", serve_options.mode, "live, record or replay (default: $XRGUIDE_MODE or replay)");
    serve_cmd->add_option("--fixture-dir", serve_options.fixture_dir);
    serve_cmd->add_option("--log-dir", serve_options.log_dir);
    serve_cmd->add_option("--static-dir", serve_options.static_dir, "Directory served at /");
    serve_cmd->add_option("--media", serve_options.media, "Offline retrieval manifest");
    serve_cmd->add_option("--search-endpoint", serve_options.search_endpoint);
    serve_cmd->add_option("--segmentation-endpoint", serve_options.segmentation_endpoint);
    serve_cmd->add_option("--mock-segmentation", serve_options.mock_segmentation, "JSON file of {label: box}");

    std::vector<std::string> scenario_paths;
    bool record = false;
    bool replay = false;
    bool parallel = false;
    bool sim_json = false;
    std::string sim_log_dir;
    auto * sim_cmd = app.add_subcommand("simulate", "Run scenarios and check their expectations");
    sim_cmd->add_option("scenario", scenario_paths, "scenario.json, a scenario directory, or a directory of them")->required();
    auto * record_flag = sim_cmd->add_flag("--record", record, "Regenerate fixtures from each scenario's model script");
    sim_cmd->add_flag("--replay", replay, "Serve model calls from fixtures (default)")->excludes(record_flag);
    sim_cmd->add_flag("--parallel", parallel, "Run scenarios concurrently");
    sim_cmd->add_flag("--json", sim_json, "Print the report as JSON");
    sim_cmd->add_option("--log-dir", sim_log_dir, "Write event logs here");

    std::string logs;
    std::string labels;
    bool eval_json = false;
    auto * eval_cmd = app.add_subcommand("eval", "Aggregate labelled event logs into metric tables");
    eval_cmd->add_option("logs", logs, "An event log or a directory of them")->required();
    eval_cmd->add_option("labels", labels, "Labels file")->required();
    eval_cmd->add_flag("--json", eval_json);

    PlanOptions plan_options;
    auto * plan_cmd = app.add_subcommand("plan", "Run pre-task planning only and print the plan");
    plan_cmd->add_option("prompt", plan_options.prompt);
    plan_cmd->add_option("--scenario", plan_options.scenario, "Take fixtures, media and segmentation from a scenario");
    plan_cmd->add_option("--mode", plan_options.mode, "live, record or replay");
    plan_cmd->add_option("--fixture-dir", plan_options.fixture_dir);
    plan_cmd->add_option("--session", plan_options.session, "Fixture session name");
    plan_cmd->add_option("--media", plan_options.media, "Offline retrieval manifest");
    plan_cmd->add_flag("--json", plan_options.json);

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(spdlog::level::from_str(log_level));

    try
    {
        if (*serve_cmd)
            return serve(serve_options);
        if (*sim_cmd)
            return simulate(scenario_paths, record, sim_log_dir, parallel, sim_json);
        if (*eval_cmd)
            return evaluate(logs, labels, eval_json);
        if (*plan_cmd)
            return plan(plan_options);
    }
    catch (const Error & e)
    {
        std::cerr << "error: " << to_string(e.code()) << ": " << e.detail();
        if (!e.path().empty())
            std::cerr << " (" << e.path() << ")";
        std::cerr << "\n";
        return e.code() == ErrorCode::ScenarioInvalid ? kUsage : kEngineError;
    }
    return kUsage;
}

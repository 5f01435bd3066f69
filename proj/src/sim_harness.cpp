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


#include "xrguide/sim_harness.hpp"

#include "xrguide/blob_store.hpp"
#include "xrguide/digest.hpp"
#include "xrguide/directive_renderer.hpp"
#include "xrguide/error.hpp"
#include "xrguide/eval_report.hpp"
#include "xrguide/media_pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <future>
#include <map>
#include <set>

namespace xrguide
{

namespace
{

constexpr std::array<std::pair<ActionKind, std::string_view>, 7> kActionNames{{
    {ActionKind::SendFrame, "SendFrame"},
    {ActionKind::Verify, "Verify"},
    {ActionKind::Voice, "Voice"},
    {ActionKind::RegisterSignal, "RegisterSignal"},
    {ActionKind::FireSignal, "FireSignal"},
    {ActionKind::Skip, "Skip"},
    {ActionKind::End, "End"},
}};

const std::set<std::string, std::less<>> kExpectationTypes{
    "PlanHasSteps", "DirectiveKindAt", "VerifyResult", "SubPlanInsertedAt", "AudioCue", "FinalStatus", "ActivationOrder",
    "CompletionOrder", "VizRevised", "VoiceAnswered", "AnchorAt", "Errors", "StepTypes",
};

[[noreturn]] void invalid(const std::string & detail, const std::string & path = {})
{
    throw Error(ErrorCode::ScenarioInvalid, detail, path);
}

std::string need_string(const Json & object, const char * key, const std::string & path)
{
    const auto it = object.find(key);
    if (it == object.end() || !it->is_string() || it->get<std::string>().empty())
        invalid(std::string("expected non-empty string '") + key + "'", path);
    return it->get<std::string>();
}

int need_int(const Json & object, const char * key, const std::string & path)
{
    const auto it = object.find(key);
    if (it == object.end() || !it->is_number_integer())
        invalid(std::string("expected integer '") + key + "'", path);
    return it->get<int>();
}

std::filesystem::path resolve(const std::filesystem::path & dir, const std::string & relative)
{
    const std::filesystem::path p(relative);
    return p.is_absolute() ? p : (dir / p).lexically_normal();
}

Json frame_payload(const Json & tmpl, std::size_t index)
{
    Json out = tmpl;
    const int width = out["width"].get<int>();
    const int height = out["height"].get<int>();
    if (const auto it = out.find("image"); it != out.end() && it->is_object())
    {
        const auto & c = (*it)["color"];
        out["image"] = base64_encode(synthetic_image(width, height, c[0].get<int>(), c[1].get<int>(), c[2].get<int>()));
    }
    if (!out.contains("timestamp"))
        out["timestamp"] = static_cast<double>(index);
    return out;
}

Envelope envelope_for(const ScenarioAction & action, const Scenario & scenario, std::uint64_t seq)
{
    Envelope e{"", scenario.name, seq, Json::object()};
    switch (action.kind)
    {
        case ActionKind::SendFrame:
            e.type = "FrameUpdate";
            e.payload = frame_payload(scenario.frames.at(static_cast<std::size_t>(action.frame)), static_cast<std::size_t>(action.frame));
            break;
        case ActionKind::Verify:
            e.type = "VerifyRequest";
            break;
        case ActionKind::Voice:
            e.type = "VoiceQuery";
            e.payload = Json{{"text", action.text}};
            break;
        case ActionKind::RegisterSignal:
            e.type = "RegisterSignal";
            e.payload = Json{{"stepIndex", action.index}, {"token", action.token}};
            break;
        case ActionKind::FireSignal:
            e.type = "FireSignal";
            e.payload = Json{{"token", action.token}};
            break;
        case ActionKind::Skip:
            e.type = "SkipStep";
            e.payload = Json{{"index", action.index}};
            if (!action.reason.empty())
                e.payload["reason"] = action.reason;
            break;
        case ActionKind::End:
            e.type = "EndSession";
            break;
    }
    return e;
}

// Step id -> display label, as the session announced it.
std::map<int, std::string> step_labels(const std::vector<SessionEvent> & events)
{
    std::map<int, std::string> labels;
    for (const auto & e : events)
    {
        if (e.kind == EventKind::PlanReady || e.kind == EventKind::PlanUpdated)
        {
            for (const auto & step : e.payload["steps"])
                labels[step["id"].get<int>()] = step["label"].get<std::string>();
        }
        else if (e.kind == EventKind::StepActivated)
        {
            labels[e.payload["stepId"].get<int>()] = e.payload["label"].get<std::string>();
        }
        else if (e.kind == EventKind::SubPlanInserted)
        {
            for (const auto & s : e.payload["substeps"])
                labels[s["id"].get<int>()] = s["label"].get<std::string>();
        }
    }
    return labels;
}

std::vector<const SessionEvent *> of_kind(const std::vector<SessionEvent> & events, EventKind kind)
{
    std::vector<const SessionEvent *> out;
    for (const auto & e : events)
        if (e.kind == kind)
            out.push_back(&e);
    return out;
}

std::vector<std::string> kinds_in(const Json & batch)
{
    std::vector<std::string> out;
    for (const auto & d : batch["directives"])
        out.push_back(d["kind"].get<std::string>());
    return out;
}

std::string join(const std::vector<std::string> & items)
{
    std::string out = "[";
    for (std::size_t i = 0; i < items.size(); ++i)
        out += (i ? ", " : "") + items[i];
    return out + "]";
}

class Checker
{
public:
    Checker(const std::vector<SessionEvent> & events, const std::optional<TaskPlan> & plan, SessionPhase phase)
        : events_(events), plan_(plan), phase_(phase), labels_(step_labels(events))
    {
    }

    std::optional<std::string> check(const Expectation & x) const
    {
        const auto & s = x.spec;
        if (x.type == "PlanHasSteps")
            return plan_has_steps(s);
        if (x.type == "DirectiveKindAt")
            return directive_kind_at(s);
        if (x.type == "VerifyResult")
            return verify_result(s);
        if (x.type == "SubPlanInsertedAt")
            return subplan_at(s);
        if (x.type == "AudioCue")
            return audio_cue(s);
        if (x.type == "FinalStatus")
            return final_status(s);
        if (x.type == "ActivationOrder")
            return order(s, EventKind::StepActivated);
        if (x.type == "CompletionOrder")
            return order(s, EventKind::StepCompleted);
        if (x.type == "VizRevised")
            return viz_revised(s);
        if (x.type == "VoiceAnswered")
            return voice_answered(s);
        if (x.type == "AnchorAt")
            return anchor_at(s);
        if (x.type == "Errors")
            return errors(s);
        if (x.type == "StepTypes")
            return step_types(s);
        return "unknown expectation type";
    }

private:
    std::string label_of(const Json & payload) const
    {
        const auto it = labels_.find(payload["stepId"].get<int>());
        return it == labels_.end() ? std::string() : it->second;
    }

    std::optional<std::string> plan_has_steps(const Json & s) const
    {
        const auto ready = of_kind(events_, EventKind::PlanReady);
        if (ready.empty())
            return "no PlanReady";
        const auto n = static_cast<int>(ready.front()->payload["steps"].size());
        if (n < s.value("min", 0) || n > s.value("max", 1 << 30))
            return "plan has " + std::to_string(n) + " steps";
        return std::nullopt;
    }

    std::vector<Json> batches_for(const std::string & label) const
    {
        std::vector<Json> out;
        for (const auto * e : of_kind(events_, EventKind::DirectiveBatchSent))
            if (label_of(e->payload) == label)
                out.push_back(e->payload);
        return out;
    }

    std::optional<std::string> directive_kind_at(const Json & s) const
    {
        const auto label = s.at("step").get<std::string>();
        auto batches = batches_for(label);
        if (batches.empty())
            return "no directive batch for step " + label;
        const auto which = s.value("batch", Json("first"));
        if (which == "first")
            batches.resize(1);
        else if (which == "last")
            batches.erase(batches.begin(), batches.end() - 1);
        else if (which.is_number_integer())
        {
            const auto i = which.get<std::size_t>();
            if (i >= batches.size())
                return "step " + label + " has only " + std::to_string(batches.size()) + " batches";
            batches = {batches[i]};
        }
        for (const auto & batch : batches)
        {
            const auto kinds = kinds_in(batch);
            for (const auto & want : s.value("kinds", Json::array()))
                if (std::find(kinds.begin(), kinds.end(), want.get<std::string>()) == kinds.end())
                    return "batch " + std::to_string(batch["batchId"].get<int>()) + " lacks " + want.get<std::string>() + ", has " + join(kinds);
            for (const auto & banned : s.value("absent", Json::array()))
                if (std::find(kinds.begin(), kinds.end(), banned.get<std::string>()) != kinds.end())
                    return "batch " + std::to_string(batch["batchId"].get<int>()) + " contains " + banned.get<std::string>();
            const auto counts = s.value("counts", Json::object());
            for (const auto & [kind, count] : counts.items())
            {
                const auto n = std::count(kinds.begin(), kinds.end(), kind);
                if (n != count.get<long>())
                    return "batch " + std::to_string(batch["batchId"].get<int>()) + " has " + std::to_string(n) + " " + kind;
            }
        }
        return std::nullopt;
    }

    std::optional<std::string> verify_result(const Json & s) const
    {
        const auto label = s.at("step").get<std::string>();
        std::vector<Json> results;
        for (const auto * e : of_kind(events_, EventKind::VerificationResult))
            if (e->payload["label"] == label)
                results.push_back(e->payload);
        if (results.empty())
            return "step " + label + " was never verified";
        if (s.contains("occurrence"))
        {
            const auto i = s["occurrence"].get<std::size_t>();
            if (i >= results.size())
                return "step " + label + " verified only " + std::to_string(results.size()) + " times";
            results = {results[i]};
        }
        for (const auto & r : results)
        {
            if (s.contains("success") && r["success"] != s["success"])
                continue;
            if (s.contains("via") && r["via"] != s["via"])
                continue;
            return std::nullopt;
        }
        return "no matching verification for step " + label;
    }

    std::optional<std::string> subplan_at(const Json & s) const
    {
        const auto label = s.at("step").get<std::string>();
        for (const auto * e : of_kind(events_, EventKind::SubPlanInserted))
        {
            if (e->payload["parentLabel"] != label)
                continue;
            const auto n = e->payload["substeps"].size();
            if (s.contains("count") && n != s["count"].get<std::size_t>())
                return "sub-plan at " + label + " has " + std::to_string(n) + " steps";
            return std::nullopt;
        }
        return "no sub-plan inserted at step " + label;
    }

    std::optional<std::string> audio_cue(const Json & s) const
    {
        const auto kind = s.at("kind").get<std::string>();
        long n = 0;
        for (const auto * e : of_kind(events_, EventKind::AudioCueSent))
            if (e->payload["payload"]["cue"] == kind)
                ++n;
        if (s.contains("count") ? n != s["count"].get<long>() : n == 0)
            return std::to_string(n) + " " + kind + " cues";
        return std::nullopt;
    }

    std::optional<std::string> final_status(const Json & s) const
    {
        if (s.contains("phase") && s["phase"] != to_string(phase_))
            return "phase is " + std::string(to_string(phase_));
        if (!plan_)
            return s.contains("completed") || s.contains("skipped") ? std::optional<std::string>("no plan") : std::nullopt;
        long completed = 0;
        long skipped = 0;
        for (const auto & step : plan_->steps)
        {
            completed += step.status == StepStatus::Completed;
            skipped += step.skipped;
        }
        if (s.contains("completed") && completed != s["completed"].get<long>())
            return std::to_string(completed) + " steps completed";
        if (s.contains("skipped") && skipped != s["skipped"].get<long>())
            return std::to_string(skipped) + " steps skipped";
        return std::nullopt;
    }

    std::optional<std::string> order(const Json & s, EventKind kind) const
    {
        std::vector<std::string> got;
        for (const auto * e : of_kind(events_, kind))
            got.push_back(e->payload["label"].get<std::string>());
        const auto want = s.at("labels").get<std::vector<std::string>>();
        if (got != want)
            return "order was " + join(got);
        return std::nullopt;
    }

    std::optional<std::string> viz_revised(const Json & s) const
    {
        for (const auto * e : of_kind(events_, EventKind::VizRevised))
        {
            if (s.contains("step") && e->payload["label"] != s["step"])
                continue;
            if (s.contains("source") && e->payload["source"] != s["source"])
                continue;
            return std::nullopt;
        }
        return "no matching viz revision";
    }

    std::optional<std::string> voice_answered(const Json & s) const
    {
        long answered = 0;
        long updated = 0;
        for (const auto * e : of_kind(events_, EventKind::VoiceAnswer))
        {
            answered += !e->payload.contains("error");
            updated += e->payload.contains("updatedViz");
        }
        if (s.contains("count") ? answered != s["count"].get<long>() : answered == 0)
            return std::to_string(answered) + " voice answers";
        if (s.contains("updated") && updated != s["updated"].get<long>())
            return std::to_string(updated) + " voice viz updates";
        return std::nullopt;
    }

    std::optional<std::string> anchor_at(const Json & s) const
    {
        const auto label = s.at("step").get<std::string>();
        const auto batches = batches_for(label);
        if (batches.empty())
            return "no directive batch for step " + label;
        const auto kind = s.at("kind").get<std::string>();
        const auto want = s.at("position").get<std::vector<double>>();
        const double tolerance = s.value("tolerance", 1e-6);
        for (const auto & d : batches.front()["directives"])
        {
            if (d["kind"] != kind)
                continue;
            const auto & anchors = d["anchors"];
            const auto i = s.value("anchor", std::size_t{0});
            if (i >= anchors.size())
                return kind + " has no anchor " + std::to_string(i);
            const auto got = anchors[i]["position"].get<std::vector<double>>();
            for (std::size_t k = 0; k < 3; ++k)
                if (std::abs(got.at(k) - want.at(k)) > tolerance)
                    return kind + " anchor at " + anchors[i]["position"].dump();
            return std::nullopt;
        }
        return "step " + label + " has no " + kind;
    }

    std::optional<std::string> errors(const Json & s) const
    {
        long n = 0;
        for (const auto * e : of_kind(events_, EventKind::Error))
            if (!s.contains("code") || e->payload["code"] == s["code"])
                ++n;
        if (n != s.value("count", 0L))
            return std::to_string(n) + " errors";
        return std::nullopt;
    }

    std::optional<std::string> step_types(const Json & s) const
    {
        const auto ready = of_kind(events_, EventKind::PlanReady);
        if (ready.empty())
            return "no PlanReady";
        std::set<std::string> got;
        for (const auto & step : ready.front()->payload["steps"])
            got.insert(step["stepType"].get<std::string>());
        for (const auto & want : s.at("include"))
            if (!got.count(want.get<std::string>()))
                return "plan has no " + want.get<std::string>() + " step";
        return std::nullopt;
    }

    const std::vector<SessionEvent> & events_;
    const std::optional<TaskPlan> & plan_;
    SessionPhase phase_;
    std::map<int, std::string> labels_;
};

std::string describe(const Expectation & x)
{
    std::string out = x.type;
    if (x.spec.contains("step"))
        out += " step " + x.spec["step"].get<std::string>();
    if (x.spec.contains("kind"))
        out += " " + x.spec["kind"].get<std::string>();
    return out;
}

} // namespace

std::string_view to_string(ActionKind kind) noexcept
{
    for (const auto & [k, name] : kActionNames)
        if (k == kind)
            return name;
    return "?";
}

std::string synthetic_image(int width, int height, int r, int g, int b)
{
    std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    const std::size_t pixels = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    out.reserve(out.size() + 3 * pixels);
    for (std::size_t i = 0; i < pixels; ++i)
    {
        out.push_back(static_cast<char>(r));
        out.push_back(static_cast<char>(g));
        out.push_back(static_cast<char>(b));
    }
    return out;
}

Scenario scenario_from_json(const Json & value, const std::filesystem::path & dir)
{
    if (!value.is_object())
        invalid("scenario must be a JSON object");
    Scenario s;
    s.dir = dir;
    s.name = need_string(value, "name", "name");
    if (!valid_session_id(s.name))
        invalid("name must be a valid session id", "name");
    s.prompt = need_string(value, "prompt", "prompt");

    const auto frames = value.value("frames", Json::array());
    if (!frames.is_array())
        invalid("expected array", "frames");
    for (std::size_t i = 0; i < frames.size(); ++i)
    {
        const auto path = "frames[" + std::to_string(i) + "]";
        const auto & f = frames[i];
        if (!f.is_object())
            invalid("expected object", path);
        if (need_int(f, "width", path) <= 0 || need_int(f, "height", path) <= 0)
            invalid("frame size must be positive", path);
        const auto image = f.find("image");
        if (image == f.end())
            invalid("frame needs an image", path);
        if (image->is_object())
        {
            const auto color = image->find("color");
            if (color == image->end() || !color->is_array() || color->size() != 3)
                invalid("image.color must be [r, g, b]", path);
            for (const auto & c : *color)
                if (!c.is_number_integer() || c.get<int>() < 0 || c.get<int>() > 255)
                    invalid("colour channels are 0..255", path);
        }
        else if (!image->is_string())
            invalid("image must be base64 text or {color}", path);
        s.frames.push_back(f);
    }

    const auto script = value.value("script", Json::array());
    if (!script.is_array())
        invalid("expected array", "script");
    bool have_frame = false;
    for (std::size_t i = 0; i < script.size(); ++i)
    {
        const auto path = "script[" + std::to_string(i) + "]";
        const auto & a = script[i];
        if (!a.is_object())
            invalid("expected object", path);
        const auto name = need_string(a, "action", path);
        const auto it = std::find_if(kActionNames.begin(), kActionNames.end(), [&](const auto & p) { return p.second == name; });
        if (it == kActionNames.end())
            invalid("unknown action " + name, path);
        ScenarioAction action;
        action.kind = it->first;
        switch (action.kind)
        {
            case ActionKind::SendFrame:
                action.frame = need_int(a, "frame", path);
                if (action.frame < 0 || static_cast<std::size_t>(action.frame) >= s.frames.size())
                    invalid("frame index out of range", path);
                have_frame = true;
                break;
            case ActionKind::Verify:
                if (!have_frame)
                    invalid("Verify before any SendFrame", path);
                break;
            case ActionKind::Voice:
                action.text = need_string(a, "text", path);
                break;
            case ActionKind::RegisterSignal:
                action.index = need_int(a, "step", path);
                action.token = need_string(a, "token", path);
                break;
            case ActionKind::FireSignal:
                action.token = need_string(a, "token", path);
                break;
            case ActionKind::Skip:
                action.index = need_int(a, "index", path);
                action.reason = a.value("reason", std::string());
                break;
            case ActionKind::End:
                break;
        }
        s.script.push_back(std::move(action));
    }

    const auto expectations = value.value("expectations", Json::array());
    if (!expectations.is_array())
        invalid("expected array", "expectations");
    for (std::size_t i = 0; i < expectations.size(); ++i)
    {
        const auto path = "expectations[" + std::to_string(i) + "]";
        const auto & x = expectations[i];
        if (!x.is_object())
            invalid("expected object", path);
        auto type = need_string(x, "type", path);
        if (!kExpectationTypes.count(type))
            invalid("unknown expectation " + type, path);
        Json spec = x;
        spec.erase("type");
        s.expectations.push_back(Expectation{std::move(type), std::move(spec)});
    }

    s.fixture_dir = resolve(dir, value.value("fixtures", std::string("fixtures")));
    s.model_file = resolve(dir, value.value("model", std::string("model.json")));
    if (const auto it = value.find("retrieval"); it != value.end() && !it->is_null())
    {
        if (!it->is_string())
            invalid("expected manifest path", "retrieval");
        s.retrieval_manifest = resolve(dir, it->get<std::string>());
    }
    s.segmentation = value.value("segmentation", Json::object());
    if (!s.segmentation.is_object())
        invalid("expected {label: box}", "segmentation");
    if (const auto it = value.find("policy"); it != value.end())
    {
        s.policy.subplan_at = it->value("subplanAt", s.policy.subplan_at);
        s.policy.subplans_enabled = it->value("subplansEnabled", s.policy.subplans_enabled);
    }
    return s;
}

Scenario load_scenario(const std::filesystem::path & path)
{
    std::string text;
    try
    {
        text = read_file(path);
    }
    catch (const Error & e)
    {
        invalid(e.detail(), path.string());
    }
    const auto json = Json::parse(text, nullptr, false);
    if (json.is_discarded())
        invalid("not valid JSON", path.string());
    return scenario_from_json(json, path.parent_path());
}

std::vector<Scenario> load_scenarios(const std::filesystem::path & dir)
{
    std::vector<std::filesystem::path> files;
    for (const auto & entry : std::filesystem::directory_iterator(dir))
        if (entry.is_directory() && std::filesystem::exists(entry.path() / "scenario.json"))
            files.push_back(entry.path() / "scenario.json");
    std::sort(files.begin(), files.end());
    std::vector<Scenario> out;
    for (const auto & f : files)
        out.push_back(load_scenario(f));
    return out;
}

std::shared_ptr<ScriptedBackend> scripted_backend_from(const std::filesystem::path & model_file)
{
    const auto json = Json::parse(read_file(model_file), nullptr, false);
    if (json.is_discarded() || !json.is_object())
        invalid("model file is not a JSON object", model_file.string());

    auto reply_of = [&](const Json & r, const std::string & path) {
        BackendReply reply;
        if (r.contains("json"))
            reply.text = r["json"].dump();
        else if (r.contains("text") && r["text"].is_string())
            reply.text = r["text"].get<std::string>();
        else
            invalid("reply needs json or text", path);
        reply.latency = r.value("latency", 0.0);
        return reply;
    };

    std::map<PromptKind, BackendReply> defaults;
    const auto default_replies = json.value("defaults", Json::object());
    for (const auto & [name, r] : default_replies.items())
    {
        const auto kind = prompt_kind_from(name);
        if (!kind)
            invalid("unknown prompt kind " + name, "defaults");
        defaults[*kind] = reply_of(r, "defaults." + name);
    }
    auto backend = std::make_shared<ScriptedBackend>([defaults](const RenderedPrompt & prompt, const ModelProfile &) {
        const auto it = defaults.find(prompt.kind);
        if (it == defaults.end())
            throw Error(ErrorCode::TransportError, "model script has no reply for " + std::string(to_string(prompt.kind)));
        return it->second;
    });
    const auto replies = json.value("replies", Json::array());
    for (std::size_t i = 0; i < replies.size(); ++i)
    {
        const auto path = "replies[" + std::to_string(i) + "]";
        const auto kind = prompt_kind_from(replies[i].value("kind", std::string()));
        if (!kind)
            invalid("unknown prompt kind", path);
        auto reply = reply_of(replies[i], path);
        backend->push(*kind, reply.text, reply.latency.value_or(0.0));
    }
    return backend;
}

std::shared_ptr<EngineServices> scenario_services(const Scenario & scenario, const RunOptions & options)
{
    auto store = std::make_shared<MemoryBlobStore>();
    auto cache = std::make_shared<AssetCache>(store);
    auto services = std::make_shared<EngineServices>();

    auto config = GatewayConfig::defaults();
    config.mode = options.mode;
    config.fixture_dir = options.fixture_dir.value_or(scenario.fixture_dir);
    config.clock = [] { return 0.0; };
    // Scenarios replay by context hash only, so any prompt drift shows up as a ReplayMiss.
    config.strict_replay = true;
    std::shared_ptr<ModelBackend> backend = options.backend;
    if (!backend && options.mode == GatewayMode::Record)
        backend = scripted_backend_from(scenario.model_file);
    if (!backend && options.mode == GatewayMode::Live)
        backend = std::make_shared<HttpBackend>(std::getenv("XRGUIDE_API_KEY") ? std::getenv("XRGUIDE_API_KEY") : "");
    services->gateway = std::make_shared<VlmGateway>(config, backend, store);

    services->cache = cache;
    services->prompts = std::make_shared<PromptEngine>(PromptEngine::load_default());
    services->catalog = std::make_shared<AssetCatalog>(AssetCatalog::load(PromptEngine::default_resource_dir() / "assets", *cache));
    if (scenario.retrieval_manifest)
        services->retrieval = std::make_shared<OfflineProvider>(*scenario.retrieval_manifest);
    if (!scenario.segmentation.empty())
        services->segmentation = std::make_shared<MockSegmentation>(MockSegmentation::from_json(scenario.segmentation));
    services->policy = scenario.policy;
    services->log_dir = options.log_dir;
    // Virtual time: every event is a tenth of a second after the last, so logs are reproducible.
    auto ticks = std::make_shared<std::atomic<long>>(0);
    services->clock = [ticks] { return static_cast<double>(ticks->fetch_add(1)) / 10.0; };
    return services;
}

std::vector<std::string> check_expectations(const std::vector<Expectation> & expectations, const std::vector<SessionEvent> & events,
                                            const std::optional<TaskPlan> & plan, SessionPhase phase)
{
    const Checker checker(events, plan, phase);
    std::vector<std::string> failures;
    for (std::size_t i = 0; i < expectations.size(); ++i)
    {
        std::optional<std::string> problem;
        try
        {
            problem = checker.check(expectations[i]);
        }
        catch (const std::exception & e)
        {
            problem = std::string("malformed expectation: ") + e.what();
        }
        if (problem)
            failures.push_back("expectation " + std::to_string(i) + " (" + describe(expectations[i]) + "): " + *problem);
    }
    return failures;
}

ScenarioReport run_scenario(const Scenario & scenario, const RunOptions & options)
{
    auto services = scenario_services(scenario, options);
    Session session(scenario.name, services);

    std::uint64_t seq = 0;
    session.handle(Envelope{"StartTask", scenario.name, ++seq, Json{{"prompt", scenario.prompt}}});
    for (const auto & action : scenario.script)
        session.handle(envelope_for(action, scenario, ++seq));

    ScenarioReport report;
    report.name = scenario.name;
    report.events = session.events();
    report.plan = session.plan();
    report.phase = session.phase();
    report.log_path = session.log_path();
    report.backend_calls = services->gateway->backend_calls();
    report.failures = check_expectations(scenario.expectations, report.events, report.plan, report.phase);
    report.passed = report.failures.empty();

    long verifications = 0;
    long model_calls = 0;
    double model_latency = 0;
    long errors = 0;
    for (const auto & e : report.events)
    {
        switch (e.kind)
        {
            case EventKind::DirectiveBatchSent:
                report.directives.push_back(e.payload.dump());
                break;
            case EventKind::VerificationResult:
                ++verifications;
                break;
            case EventKind::ModelCall:
                ++model_calls;
                model_latency += e.payload.value("latency", 0.0);
                break;
            case EventKind::Error:
                ++errors;
                break;
            default:
                break;
        }
    }
    long completed = 0;
    if (report.plan)
        for (const auto & step : report.plan->steps)
            completed += step.status == StepStatus::Completed;
    report.metrics = Json{{"events", report.events.size()},
                          {"directiveBatches", report.directives.size()},
                          {"verifications", verifications},
                          {"completedSteps", completed},
                          {"modelCalls", model_calls},
                          {"modelLatency", round_half_away(model_latency, 3)},
                          {"errors", errors}};
    spdlog::info("scenario {}: {} ({} failures)", scenario.name, report.passed ? "pass" : "FAIL", report.failures.size());
    return report;
}

std::vector<ScenarioReport> run_scenarios(const std::vector<Scenario> & scenarios, const RunOptions & options, bool parallel)
{
    std::vector<ScenarioReport> reports;
    if (!parallel)
    {
        for (const auto & s : scenarios)
            reports.push_back(run_scenario(s, options));
        return reports;
    }
    std::vector<std::future<ScenarioReport>> running;
    for (const auto & s : scenarios)
        running.push_back(std::async(std::launch::async, [&s, &options] { return run_scenario(s, options); }));
    for (auto & f : running)
        reports.push_back(f.get());
    return reports;
}

Json to_json(const ScenarioReport & report)
{
    return Json{{"name", report.name},
                {"passed", report.passed},
                {"failures", report.failures},
                {"eventLog", report.log_path ? Json(report.log_path->string()) : Json()},
                {"phase", to_string(report.phase)},
                {"metrics", report.metrics}};
}

} // namespace xrguide

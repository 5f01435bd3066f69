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


#include "xrguide/eval_report.hpp"

#include "xrguide/blob_store.hpp"
#include "xrguide/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

namespace xrguide
{

namespace
{

constexpr std::array<std::pair<const char *, const char *>, 5> kStepMetrics{{
    {"textInstruction", "TextInstruction"},
    {"visualType", "VisualType"},
    {"keyComponent", "Key Component"},
    {"imageRelevance", "Image Relevance"},
    {"verification", "Verification"},
}};

constexpr std::array<std::pair<const char *, const char *>, 4> kGuidanceTypes{{
    {"targetConfigPreview", "Target Config Preview"},
    {"motion", "Motion"},
    {"staticObject", "Static Object"},
    {"action", "Action"},
}};

struct Group
{
    const char * name;
    std::vector<std::pair<const char *, const char *>> leaves;
};

// Localization call types under their guidance category; leaf names follow the published table.
const std::vector<Group> kLocalizationGroups{
    {"Target Config Preview", {{"tcp", "2D Box"}}},
    {"Motion", {{"translation", "Translation Info"}, {"rotation", "Rotation Info"}}},
    {"Static Object", {{"staticObject", "2D Box"}}},
    {"Action", {{"tool", "Tool"}, {"gesture", "Gesture"}}},
};

[[noreturn]] void mismatch(const std::string & detail, const std::string & path = {})
{
    throw Error(ErrorCode::LabelMismatch, detail, path);
}

bool need_bool(const Json & object, const char * key, const std::string & path)
{
    const auto it = object.find(key);
    if (it == object.end() || !it->is_boolean())
        throw Error(ErrorCode::SchemaViolation, std::string("expected boolean '") + key + "'", path);
    return it->get<bool>();
}

std::string need_text(const Json & object, const char * key, const std::string & path)
{
    const auto it = object.find(key);
    if (it == object.end() || !it->is_string())
        throw Error(ErrorCode::SchemaViolation, std::string("expected string '") + key + "'", path);
    return it->get<std::string>();
}

bool is_localization(const Json & payload)
{
    const auto kind = payload.value("kind", std::string());
    return kind == "RotationLocalize" || kind == "TransformLocalize";
}

struct Tally
{
    long total = 0;
    long correct = 0;
    double latency_sum = 0;
    long timed = 0;

    void add(bool ok, std::optional<double> latency)
    {
        ++total;
        correct += ok;
        if (latency)
        {
            latency_sum += *latency;
            ++timed;
        }
    }
    void merge(const Tally & other)
    {
        total += other.total;
        correct += other.correct;
        latency_sum += other.latency_sum;
        timed += other.timed;
    }
    LocalizationCell cell() const
    {
        LocalizationCell c;
        c.calls = total;
        c.correct = correct;
        c.accuracy = percent_1dp(correct, total);
        c.timed = timed;
        c.mean_latency = timed ? round_half_away(latency_sum / static_cast<double>(timed), 2) : 0.0;
        return c;
    }
};

std::vector<CountRow> fold_steps(const std::vector<NamedLog> & logs, const Json & labels)
{
    std::set<std::pair<std::string, std::string>> logged;
    for (const auto & log : logs)
    {
        for (const auto & e : log.events)
        {
            if (e.kind == EventKind::PlanReady)
                for (const auto & step : e.payload.at("steps"))
                    logged.emplace(log.session, step.at("label").get<std::string>());
            else if (e.kind == EventKind::SubPlanInserted)
                for (const auto & step : e.payload.at("substeps"))
                    logged.emplace(log.session, step.at("label").get<std::string>());
        }
    }

    std::map<std::pair<std::string, std::string>, Json> by_step;
    const auto & entries = labels.value("steps", Json::array());
    for (std::size_t i = 0; i < entries.size(); ++i)
    {
        const auto path = "steps[" + std::to_string(i) + "]";
        const auto key = std::pair{need_text(entries[i], "session", path), need_text(entries[i], "step", path)};
        if (!logged.count(key))
            mismatch("label for step " + key.second + " of " + key.first + " matches no logged step", path);
        if (!by_step.emplace(key, entries[i]).second)
            mismatch("duplicate label for step " + key.second + " of " + key.first, path);
    }
    for (const auto & key : logged)
        if (!by_step.count(key))
            mismatch("logged step " + key.second + " of " + key.first + " has no label");

    std::vector<CountRow> rows;
    for (const auto & [key, name] : kStepMetrics)
        rows.push_back(CountRow{name, 0, 0, 0, 0});
    for (const auto & [key, name] : kGuidanceTypes)
        rows.push_back(CountRow{name, 0, 0, 0, 0});
    CountRow total{"Total", 0, 0, 0, 0};

    for (const auto & [key, label] : by_step)
    {
        const auto path = key.first + ":" + key.second;
        bool all = true;
        for (std::size_t m = 0; m < kStepMetrics.size(); ++m)
        {
            const bool ok = need_bool(label, kStepMetrics[m].first, path);
            rows[m].total += 1;
            rows[m].correct += ok;
            all = all && ok;
        }
        const auto guidance = label.value("guidance", Json::object());
        for (std::size_t g = 0; g < kGuidanceTypes.size(); ++g)
        {
            if (!guidance.contains(kGuidanceTypes[g].first))
                continue;
            auto & row = rows[kStepMetrics.size() + g];
            row.total += 1;
            row.correct += need_bool(guidance, kGuidanceTypes[g].first, path + ".guidance");
        }
        total.total += 1;
        total.correct += all;
    }
    rows.push_back(total);
    for (auto & row : rows)
        row.percent = percent_1dp(row.correct, row.total);
    return rows;
}

std::vector<LocalizationRow> fold_localization(const std::vector<NamedLog> & logs, const Json & labels, std::vector<std::string> & profiles)
{
    std::map<std::pair<std::string, long>, Json> by_call;
    const auto & entries = labels.value("localization", Json::array());
    for (std::size_t i = 0; i < entries.size(); ++i)
    {
        const auto path = "localization[" + std::to_string(i) + "]";
        const auto & entry = entries[i];
        const auto call = entry.find("call");
        if (call == entry.end() || !call->is_number_integer())
            throw Error(ErrorCode::SchemaViolation, "expected integer 'call'", path);
        const auto key = std::pair{need_text(entry, "session", path), call->get<long>()};
        if (!by_call.emplace(key, entry).second)
            mismatch("duplicate label for call " + std::to_string(key.second) + " of " + key.first, path);
    }

    std::set<std::string> known;
    for (const auto & g : kLocalizationGroups)
        for (const auto & leaf : g.leaves)
            known.insert(leaf.first);

    // leaf type -> profile -> tally
    std::map<std::string, std::map<std::string, Tally>> tallies;
    std::set<std::string> seen_profiles;
    std::size_t matched = 0;
    for (const auto & log : logs)
    {
        long ordinal = 0;
        for (const auto & e : log.events)
        {
            if (e.kind != EventKind::ModelCall || !is_localization(e.payload))
                continue;
            const auto key = std::pair{log.session, ordinal++};
            const auto it = by_call.find(key);
            if (it == by_call.end())
                mismatch("localization call " + std::to_string(key.second) + " of " + key.first + " has no label");
            ++matched;
            const auto path = key.first + ":" + std::to_string(key.second);
            const auto type = need_text(it->second, "type", path);
            if (!known.count(type))
                throw Error(ErrorCode::SchemaViolation, "unknown localization type " + type, path);
            const auto profile = e.payload.value("profile", std::string("default"));
            seen_profiles.insert(profile);
            std::optional<double> latency;
            if (const auto l = e.payload.find("latency"); l != e.payload.end() && l->is_number())
                latency = l->get<double>();
            tallies[type][profile].add(need_bool(it->second, "correct", path), latency);
        }
    }
    if (matched != by_call.size())
        mismatch(std::to_string(by_call.size() - matched) + " localization labels match no logged call");

    profiles.assign(seen_profiles.begin(), seen_profiles.end());
    std::vector<LocalizationRow> rows;
    std::map<std::string, Tally> overall;
    for (const auto & group : kLocalizationGroups)
    {
        std::map<std::string, Tally> sum;
        std::vector<LocalizationRow> leaves;
        for (const auto & [type, name] : group.leaves)
        {
            LocalizationRow leaf{name, 1, {}};
            for (const auto & profile : profiles)
            {
                const Tally t = tallies[type][profile];
                leaf.cells[profile] = t.cell();
                sum[profile].merge(t);
            }
            leaves.push_back(std::move(leaf));
        }
        LocalizationRow header{group.name, 0, {}};
        for (const auto & profile : profiles)
        {
            header.cells[profile] = sum[profile].cell();
            overall[profile].merge(sum[profile]);
        }
        rows.push_back(std::move(header));
        for (auto & leaf : leaves)
            rows.push_back(std::move(leaf));
    }
    LocalizationRow total{"Total", 0, {}};
    for (const auto & profile : profiles)
        total.cells[profile] = overall[profile].cell();
    rows.push_back(std::move(total));
    return rows;
}

std::string fixed(double value, int decimals)
{
    std::ostringstream out;
    out << std::fixed << std::setprecision(decimals) << value;
    return out.str();
}

} // namespace

double percent_1dp(long correct, long total)
{
    if (total <= 0)
        return 0.0;
    // tenths of a percent, exact in integers: floor((2000c + t) / 2t) for c >= 0
    const long long tenths = (2000LL * correct + total) / (2LL * total);
    return static_cast<double>(tenths) / 10.0;
}

double round_half_away(double value, int decimals)
{
    const double scale = std::pow(10.0, decimals);
    return std::round(value * scale) / scale;
}

std::string session_of_log(const std::filesystem::path & log)
{
    std::string name = log.filename().string();
    for (const std::string suffix : {".events.jsonl", ".jsonl"})
    {
        if (name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
            return name.substr(0, name.size() - suffix.size());
    }
    return log.stem().string();
}

EvalReport eval_report(const std::vector<NamedLog> & logs, const Json & labels)
{
    if (!labels.is_object())
        throw Error(ErrorCode::SchemaViolation, "labels must be a JSON object");
    EvalReport report;
    report.logs = logs.size();
    report.steps = fold_steps(logs, labels);
    report.localization = fold_localization(logs, labels, report.profiles);
    return report;
}

EvalReport eval_report(const std::vector<std::filesystem::path> & logs, const std::filesystem::path & labels)
{
    std::vector<NamedLog> loaded;
    for (const auto & path : logs)
        loaded.push_back(NamedLog{session_of_log(path), EventLog::load(path)});
    const auto json = Json::parse(read_file(labels), nullptr, false);
    if (json.is_discarded())
        throw Error(ErrorCode::SchemaViolation, "labels file is not valid JSON", labels.string());
    return eval_report(loaded, json);
}

Json to_json(const EvalReport & report)
{
    Json steps = Json::array();
    for (const auto & row : report.steps)
        steps.push_back(Json{{"metric", row.metric}, {"total", row.total}, {"correct", row.correct}, {"percent", row.percent}});
    Json localization = Json::array();
    for (const auto & row : report.localization)
    {
        Json cells = Json::object();
        for (const auto & [profile, c] : row.cells)
            cells[profile] = Json{{"calls", c.calls}, {"correct", c.correct}, {"accuracy", c.accuracy}, {"meanLatency", c.mean_latency}};
        localization.push_back(Json{{"name", row.name}, {"level", row.level}, {"cells", std::move(cells)}});
    }
    return Json{{"logs", report.logs}, {"profiles", report.profiles}, {"steps", std::move(steps)}, {"localization", std::move(localization)}};
}

std::string render_text(const EvalReport & report)
{
    std::ostringstream out;
    out << std::left << std::setw(26) << "Metric" << std::right << std::setw(8) << "Total" << std::setw(10) << "Correct" << std::setw(10)
        << "Percent" << "\n";
    for (const auto & row : report.steps)
        out << std::left << std::setw(26) << row.metric << std::right << std::setw(8) << row.total << std::setw(10) << row.correct
            << std::setw(9) << fixed(row.percent, 1) << "%\n";

    out << "\n" << std::left << std::setw(26) << "Localization";
    for (const auto & profile : report.profiles)
        out << std::right << std::setw(14) << (profile + " acc") << std::setw(14) << (profile + " lat");
    out << "\n";
    for (const auto & row : report.localization)
    {
        out << std::left << std::setw(26) << (std::string(static_cast<std::size_t>(row.level) * 2, ' ') + row.name);
        for (const auto & profile : report.profiles)
        {
            const auto & c = row.cells.at(profile);
            if (c.calls == 0)
                out << std::right << std::setw(14) << "-" << std::setw(14) << "-";
            else
                out << std::right << std::setw(13) << fixed(c.accuracy, 1) << "%" << std::setw(13) << fixed(c.mean_latency, 2) << "s";
        }
        out << "\n";
    }
    return out.str();
}

} // namespace xrguide

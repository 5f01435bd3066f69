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

#include "xrguide/json_text.hpp"
#include "xrguide/protocol.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace xrguide
{

/// Percentage to one decimal, rounded half away from zero on the exact ratio.
double percent_1dp(long correct, long total);

/// Round half away from zero to `decimals` places.
double round_half_away(double value, int decimals);

struct CountRow
{
    std::string metric;
    /// 0 for a top-level row, 1 for a row indented under the previous header.
    int level = 0;
    long total = 0;
    long correct = 0;
    double percent = 0;
};

struct LocalizationCell
{
    long calls = 0;
    long correct = 0;
    double accuracy = 0;
    /// Mean over calls that returned, in seconds; two decimals.
    double mean_latency = 0;
    long timed = 0;
};

struct LocalizationRow
{
    std::string name;
    int level = 0;
    /// Keyed by gateway profile.
    std::map<std::string, LocalizationCell> cells;
};

struct EvalReport
{
    std::vector<CountRow> steps;
    std::vector<LocalizationRow> localization;
    std::vector<std::string> profiles;
    std::size_t logs = 0;
};

struct NamedLog
{
    /// The session id the labels refer to.
    std::string session;
    std::vector<SessionEvent> events;
};

/// Folds labelled logs into the step-quality and localization tables. Labels:
/// {"steps": [{session, step, textInstruction, visualType, keyComponent, imageRelevance, verification,
///             guidance: {targetConfigPreview?, motion?, staticObject?, action?}}],
///  "localization": [{session, call, type: tcp|translation|rotation|staticObject|tool|gesture, correct}]}.
/// Throws LabelMismatch when a logged step or localization call has no label, or a label has nothing to match.
EvalReport eval_report(const std::vector<NamedLog> & logs, const Json & labels);

/// Loads each <session>.events.jsonl and the labels file.
EvalReport eval_report(const std::vector<std::filesystem::path> & logs, const std::filesystem::path & labels);

/// "task01" for ".../task01.events.jsonl".
std::string session_of_log(const std::filesystem::path & log);

Json to_json(const EvalReport & report);
std::string render_text(const EvalReport & report);

} // namespace xrguide

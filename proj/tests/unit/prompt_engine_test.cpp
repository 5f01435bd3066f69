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

#include "xrguide/digest.hpp"
#include "xrguide/error.hpp"
#include "xrguide/prompt_engine.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace xrguide;

namespace
{

const PromptEngine & engine()
{
    static const PromptEngine instance = PromptEngine::load_default();
    return instance;
}

AssetRef image(const std::string & bytes)
{
    AssetRef ref;
    ref.digest = sha256_hex(bytes);
    return ref;
}

template <typename Fn>
ErrorCode code_of(Fn && fn)
{
    try
    {
        fn();
    }
    catch (const Error & e)
    {
        return e.code();
    }
    ADD_FAILURE() << "expected an error";
    return ErrorCode::Io;
}

bool contains(const std::string & haystack, const std::string & needle)
{
    return haystack.find(needle) != std::string::npos;
}

PlanStep awaiting_step(const std::string & instruction)
{
    PlanStep step;
    step.instruction = instruction;
    step.status = StepStatus::AwaitingVerification;
    return step;
}

} // namespace

TEST(RenderTemplate, PlaceholdersAndBraces)
{
    EXPECT_EQ(render_template("a {x} b", {{"x", "1"}}), "a 1 b");
    EXPECT_EQ(render_template("{{name: \"\"}}", {}), "{name: \"\"}");
    EXPECT_EQ(render_template("{\n  \"goal\": \"\"\n}", {}), "{\n  \"goal\": \"\"\n}");
    EXPECT_EQ(render_template("{type: \"object\"}", {{"type", "no"}}), "{type: \"object\"}");
    EXPECT_EQ(render_template("{unknown}", {}), "{unknown}");
}

TEST(InitialPrompt, EmbedsTemplateAndGoal)
{
    const auto prompt = engine().render_initial_prompt("How to fold a paper boat?", {});
    EXPECT_EQ(prompt.kind, PromptKind::InitialPlan);
    EXPECT_TRUE(contains(prompt.text, "Output valid JSON only, do not include extra text or comments."));
    EXPECT_TRUE(contains(prompt.text, "Break into 3–12 steps"));
    EXPECT_TRUE(contains(prompt.text, "SPECIAL RULE: If both objectViz=\"ShapePreview\" AND actionViz=\"Arrow\", the system will animate "
                                      "the ShapePreview image instead of showing an arrow."));
    EXPECT_TRUE(contains(prompt.text, "NEVER use ambiguous words like \"prompt\", \"area\" as the objectName."));
    EXPECT_TRUE(contains(prompt.text, "\"objectName\": \"silver gas knob\""));
    EXPECT_TRUE(contains(prompt.text, "stepDomains"));
    EXPECT_TRUE(prompt.text.ends_with("User goal: How to fold a paper boat?\n"));
    EXPECT_TRUE(prompt.attachments.empty());
}

TEST(InitialPrompt, EmptyGoalAndDeterminism)
{
    EXPECT_EQ(code_of([] { engine().render_initial_prompt("", {}); }), ErrorCode::EmptyGoal);
    EXPECT_EQ(code_of([] { engine().render_initial_prompt("  \n", {}); }), ErrorCode::EmptyGoal);

    const auto a = engine().render_initial_prompt("How to fold a paper boat?", {image("ref")});
    const auto b = engine().render_initial_prompt("How to fold a paper boat?", {image("ref")});
    EXPECT_EQ(a.context_hash, b.context_hash);
    EXPECT_EQ(a.text, b.text);
    EXPECT_NE(a.context_hash, engine().render_initial_prompt("How to fold a paper boat?", {image("other")}).context_hash);
    EXPECT_NE(a.context_hash, engine().render_initial_prompt("How to fold a paper plane?", {image("ref")}).context_hash);
    EXPECT_EQ(a.context_hash.size(), 64u);
}

TEST(DuringTaskPrompt, EmbedsTemplatePriorAndFrame)
{
    const auto prior = parse_plan_document(test::read_source("tests/data/gas_knob.json"));
    const auto frame = image("frame-3");
    const auto prompt = engine().render_during_task_prompt(awaiting_step("Fold the paper in half"), &prior, frame);
    EXPECT_EQ(prompt.kind, PromptKind::DuringTask);
    EXPECT_TRUE(contains(prompt.text, "FILL IN these three fields"));
    EXPECT_TRUE(contains(prompt.text, "only answer true or false"));
    EXPECT_TRUE(contains(prompt.text, "only focus on paper shape when doing origami"));
    EXPECT_TRUE(contains(prompt.text, "\"objectName\": \"silver gas knob\""));
    EXPECT_FALSE(contains(prompt.text, "Open question"));
    ASSERT_EQ(prompt.attachments.size(), 1u);
    EXPECT_EQ(prompt.attachments[0], frame);

    const auto with_check = engine().render_during_task_prompt(awaiting_step("Fold the paper in half"), &prior, frame, "is the crease sharp?");
    EXPECT_TRUE(contains(with_check.text, "Open question from the previous check: is the crease sharp?"));
    EXPECT_NE(with_check.context_hash, prompt.context_hash);
}

TEST(DuringTaskPrompt, Preconditions)
{
    EXPECT_EQ(code_of([] { engine().render_during_task_prompt(awaiting_step("Fold"), nullptr, image("f")); }),
              ErrorCode::MissingPriorResponse);
    const auto prior = parse_plan_document(test::read_source("tests/data/gas_knob.json"));
    PlanStep active = awaiting_step("Fold");
    active.status = StepStatus::Active;
    EXPECT_EQ(code_of([&] { engine().render_during_task_prompt(active, &prior, image("f")); }), ErrorCode::InvalidTransition);
}

TEST(LocalizationPrompts, RotationAndTransform)
{
    const auto rotation = engine().render_rotation_prompt("silver gas knob", {image("a"), image("b")});
    EXPECT_EQ(rotation.kind, PromptKind::RotationLocalize);
    EXPECT_TRUE(contains(rotation.text, "rotate around a pivot point (silver gas knob)"));
    EXPECT_TRUE(contains(rotation.text, "X pointing rightward in the photo,  Y pointing physically upward, and Z pointing toward you"));
    EXPECT_TRUE(contains(rotation.text, "Positive (clockwise) or Negative (CounterClockwise)"));
    EXPECT_TRUE(contains(rotation.text, "{name: \"\", pos: [x_min, y_min, x_max, y_max], rotation: [axis, direction]}"));
    EXPECT_FALSE(contains(rotation.text, "{{"));
    EXPECT_EQ(rotation.attachments.size(), 2u);

    EXPECT_EQ(code_of([] { engine().render_rotation_prompt("", {image("a")}); }), ErrorCode::EmptyObjectName);
    EXPECT_EQ(code_of([] { engine().render_rotation_prompt("knob", {}); }), ErrorCode::NoFrame);

    const auto transform = engine().render_transform_prompt("milk jug", {image("a")});
    EXPECT_EQ(transform.kind, PromptKind::TransformLocalize);
    EXPECT_TRUE(contains(transform.text, "Please identify where milk jug will end up after the in-step guidance."));
    EXPECT_TRUE(contains(transform.text, "{type: \"starttarget | endtarget | object\", name: \"exact waypoint name\""));
    EXPECT_EQ(code_of([] { engine().render_transform_prompt(" ", {image("a")}); }), ErrorCode::EmptyObjectName);
}

TEST(RotationAnswer, Parses)
{
    const auto answer = parse_rotation_answer(test::read_source("tests/data/rotation_answer.json"));
    EXPECT_EQ(answer.name, "knob");
    EXPECT_EQ(answer.pos, (NormBox{450, 520, 560, 640}));
    EXPECT_EQ(answer.axis, Axis::Z);
    EXPECT_EQ(answer.direction, RotationDirection::Positive);

    const auto full = parse_rotation_answer(R"(```json
{"name": "lid", "pos": [0, 0, 1000, 1000], "rotation": ["Y", "Negative"]}
```)");
    EXPECT_EQ(full.pos, (NormBox{0, 0, 1000, 1000}));
    EXPECT_EQ(full.direction, RotationDirection::Negative);
}

TEST(RotationAnswer, Rejects)
{
    auto code = [](const std::string & raw) { return code_of([&] { parse_rotation_answer(raw); }); };
    EXPECT_EQ(code(R"({"name":"k","pos":[600,100,400,200],"rotation":["Z","Positive"]})"), ErrorCode::SchemaViolation);
    EXPECT_EQ(code(R"({"name":"k","pos":[0,300,10,200],"rotation":["Z","Positive"]})"), ErrorCode::SchemaViolation);
    EXPECT_EQ(code(R"({"name":"k","pos":[0,0,1001,10],"rotation":["Z","Positive"]})"), ErrorCode::OutOfRange);
    EXPECT_EQ(code(R"({"name":"k","pos":[-1,0,10,10],"rotation":["Z","Positive"]})"), ErrorCode::OutOfRange);
    EXPECT_EQ(code(R"({"name":"k","pos":[0.5,0,10,10],"rotation":["Z","Positive"]})"), ErrorCode::SchemaViolation);
    EXPECT_EQ(code(R"({"name":"k","pos":[0,0,10,10],"rotation":["W","Positive"]})"), ErrorCode::SchemaViolation);
    EXPECT_EQ(code(R"({"name":"k","pos":[0,0,10,10],"rotation":["Z","Clockwise"]})"), ErrorCode::SchemaViolation);
    EXPECT_EQ(code(R"({"name":"k","pos":[0,0,10],"rotation":["Z","Positive"]})"), ErrorCode::SchemaViolation);
    EXPECT_EQ(code("{name: \"k\"}"), ErrorCode::NoJsonFound);
}

TEST(TransformAnswer, Parses)
{
    const auto single = parse_transform_answer(R"({"type":"endtarget","name":"glass","pos":[700,300,860,520]})");
    ASSERT_EQ(single.entries.size(), 1u);
    EXPECT_EQ(single.entries[0], (TransformEntry{TransformKind::EndTarget, "glass", {700, 300, 860, 520}}));

    const auto pair = parse_transform_answer(test::read_source("tests/data/transform_answer.json"));
    ASSERT_EQ(pair.entries.size(), 2u);
    EXPECT_EQ(pair.entries[0].kind, TransformKind::StartTarget);
    EXPECT_EQ(pair.entries[1].kind, TransformKind::EndTarget);

    const auto lines = parse_transform_answer("Here you go:\n"
                                              R"({"type":"starttarget","name":"cup","pos":[1,2,3,4]})"
                                              "\n"
                                              R"({"type":"endtarget","name":"saucer","pos":[5,6,7,8]})");
    ASSERT_EQ(lines.entries.size(), 2u);
    EXPECT_EQ(lines.entries[1].name, "saucer");
}

TEST(TransformAnswer, Rejects)
{
    auto code = [](const std::string & raw) { return code_of([&] { parse_transform_answer(raw); }); };
    EXPECT_EQ(code(R"({"type":"midtarget","name":"glass","pos":[700,300,860,520]})"), ErrorCode::SchemaViolation);
    EXPECT_EQ(code(R"({"type":"object","name":"glass","pos":[700,300,1200,520]})"), ErrorCode::OutOfRange);
    EXPECT_EQ(code(R"([])"), ErrorCode::SchemaViolation);
    EXPECT_EQ(code("nothing"), ErrorCode::NoJsonFound);
    EXPECT_EQ(code(R"([{"type":"starttarget","name":"cup","pos":[1,2,3,4]},{"type")"), ErrorCode::NoJsonFound);
}

TEST(DuringTaskAnswer, AcceptsFullDocOrResponse)
{
    const auto full = parse_during_task_answer(R"({"goal":"g","steps":["a"],"plannerResponse":{"next":"a","check":"","success":true}})");
    EXPECT_TRUE(full.success);
    EXPECT_FALSE(full.viz);

    const auto bare = parse_during_task_answer(R"({"next":"a / fold corner","check":"is the corner aligned?","success":false,
        "viz":{"objectViz":"ShapePreview","actionViz":"Gesture","actionType":["pinch"],"needsTranslation":false,"needsRotation":false,
        "waypoints":[{"type":"target","objectName":"paper corner"}]}})");
    EXPECT_FALSE(bare.success);
    EXPECT_EQ(bare.check, "is the corner aligned?");
    ASSERT_TRUE(bare.viz);
    EXPECT_EQ(bare.viz->object_viz, ObjectViz::ShapePreview);

    EXPECT_EQ(code_of([] { parse_during_task_answer(R"({"success":"true"})"); }), ErrorCode::SchemaViolation);
    EXPECT_EQ(code_of([] { parse_during_task_answer(R"({"next":"a"})"); }), ErrorCode::SchemaViolation);
}

TEST(OtherAnswers, SubplanRelevanceVoice)
{
    const auto substeps = parse_subplan_answer(R"({"substeps":[{"instruction":"Align the corners","check":"corners meet"},
        {"instruction":"Press the crease","check":"crease is flat"}]})");
    ASSERT_EQ(substeps.size(), 2u);
    EXPECT_EQ(substeps[1].instruction, "Press the crease");
    EXPECT_FALSE(substeps[0].viz);

    EXPECT_DOUBLE_EQ(parse_relevance_answer(R"({"score":0.75,"reason":"shows the fold"})").score, 0.75);
    EXPECT_EQ(code_of([] { parse_relevance_answer(R"({"score":1.5})"); }), ErrorCode::OutOfRange);

    const auto reply = parse_voice_answer(R"({"answer":"Fold the top corners down to the center line.","updatedViz":null})");
    EXPECT_FALSE(reply.updated_viz);
    EXPECT_EQ(reply.answer, "Fold the top corners down to the center line.");
}

TEST(SynthesizePlan, GasKnob)
{
    const auto doc = parse_plan_document(test::read_source("tests/data/gas_knob.json"));
    const auto plan = synthesize_plan(doc, {});
    ASSERT_EQ(plan.steps.size(), 2u);
    EXPECT_EQ(plan.active_index, 1);
    EXPECT_EQ(plan.steps[1].instruction, "Turn the gas knob clockwise to medium position");
    ASSERT_TRUE(plan.steps[1].viz);
    EXPECT_EQ(*plan.steps[1].viz, doc.viz);
    EXPECT_FALSE(plan.steps[0].viz);
    EXPECT_EQ(plan.steps[0].step_type, StepType::R2R);
    EXPECT_EQ(plan.flags, (std::vector<std::string>{"MissingDomainTags", "PlanSizeOutOfRange"}));
    for (const auto & step : plan.steps)
        EXPECT_EQ(step.status, StepStatus::Pending);
}

TEST(SynthesizePlan, TagsSizesAndSingleStep)
{
    auto doc = parse_plan_document(test::read_source("tests/data/gas_knob.json"));
    doc.steps.clear();
    for (int i = 0; i < 13; ++i)
        doc.steps.push_back("Fold crease " + std::to_string(i));
    doc.next = doc.steps[0];
    std::vector<DomainPair> tags(13, DomainPair{DomainTag::Virtual, DomainTag::Real});
    const auto big = synthesize_plan(doc, tags);
    EXPECT_EQ(big.steps.size(), 13u);
    EXPECT_EQ(big.flags, std::vector<std::string>{"PlanSizeOutOfRange"});
    EXPECT_EQ(big.steps[12].step_type, StepType::V2R);

    doc.steps = {"Press the brew button"};
    doc.next = doc.steps[0];
    EXPECT_EQ(synthesize_plan(doc, {{DomainTag::Real, DomainTag::Real}}).active_index, 0);

    doc.next = "Grind beans";
    EXPECT_EQ(code_of([&] { synthesize_plan(doc, {}); }), ErrorCode::AmbiguousNext);

    doc.next = doc.steps[0];
    doc.viz.waypoints.clear();
    EXPECT_EQ(code_of([&] { synthesize_plan(doc, {}); }), ErrorCode::SchemaViolation);
}

TEST(PriorResponse, SubstepNextUsesSeparator)
{
    const auto doc = parse_plan_document(test::read_source("tests/data/gas_knob.json"));
    auto plan = synthesize_plan(doc, {});
    PlanStep sub;
    sub.id = 2;
    sub.index = 2;
    sub.instruction = "grip the knob";
    sub.parent_id = 1;
    plan.steps.push_back(sub);
    const auto prior = prior_response_for(plan, plan.steps[2], "knob visible?");
    EXPECT_EQ(prior.next, "Turn the gas knob clockwise to medium position / grip the knob");
    EXPECT_EQ(prior.steps.size(), 2u);
    EXPECT_EQ(prior.check, "knob visible?");
    EXPECT_EQ(match_next(prior.steps, prior.next), 1u);
}

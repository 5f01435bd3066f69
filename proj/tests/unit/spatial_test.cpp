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

#include "xrguide/error.hpp"
#include "xrguide/spatial.hpp"

#include <gtest/gtest.h>

#include <Eigen/Geometry>

#include <cmath>
#include <limits>
#include <random>

using namespace xrguide;

namespace
{

CameraFrame frame_with(std::shared_ptr<const DepthSource> depth, int width = 640, int height = 480)
{
    CameraFrame frame;
    frame.width = width;
    frame.height = height;
    frame.intrinsics = {500, 500, width / 2.0, height / 2.0};
    frame.depth = std::move(depth);
    frame.timestamp = 12.5;
    return frame;
}

Eigen::Matrix3d random_rotation(std::mt19937_64 & rng)
{
    std::normal_distribution<double> n(0, 1);
    Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
    return q.normalized().toRotationMatrix();
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

} // namespace

TEST(BoxCenter, ExactMidpoints)
{
    EXPECT_EQ(box_center({400, 400, 600, 600}), (NormPoint{500, 500}));
    EXPECT_EQ(box_center({0, 0, 1000, 1000}), (NormPoint{500, 500}));
    EXPECT_EQ(box_center({3, 7, 4, 9}), (NormPoint{3.5, 8}));
}

TEST(BoxOps, StayInRange)
{
    std::mt19937 rng(7);
    std::uniform_int_distribution<int> coord(-3000, 3000);
    for (int i = 0; i < 10000; ++i)
    {
        const auto a = normalize_box(coord(rng), coord(rng), coord(rng), coord(rng));
        const auto b = normalize_box(coord(rng), coord(rng), coord(rng), coord(rng));
        ASSERT_TRUE(a.valid());
        const auto u = box_union(a, b);
        ASSERT_TRUE(u.valid());
        ASSERT_LE(u.x_min, a.x_min);
        ASSERT_GE(u.y_max, b.y_max);
        const auto c = box_center(u);
        ASSERT_TRUE(c.u >= 0 && c.u <= kNormMax && c.v >= 0 && c.v <= kNormMax);
    }
}

TEST(Unproject, PrincipalRay)
{
    auto frame = frame_with(std::make_shared<ConstantDepth>(1.0));
    const auto anchor = unproject(frame, 500, 500);
    EXPECT_EQ(anchor.confidence, AnchorConfidence::DepthHit);
    EXPECT_NEAR((anchor.position - Eigen::Vector3d(0, 0, 1)).norm(), 0, 1e-12);
    EXPECT_EQ(anchor.frame_timestamp, 12.5);
}

TEST(Unproject, RoundTripAgainstIndependentProjector)
{
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> unit(0, 1);
    double worst = 0;
    for (int i = 0; i < 1000; ++i)
    {
        CameraFrame frame;
        frame.width = 320 + static_cast<int>(unit(rng) * 1600);
        frame.height = 240 + static_cast<int>(unit(rng) * 1200);
        frame.intrinsics = {200 + unit(rng) * 1200, 200 + unit(rng) * 1200, unit(rng) * (frame.width - 1), unit(rng) * (frame.height - 1)};
        frame.pose.rotation = random_rotation(rng);
        frame.pose.translation = Eigen::Vector3d(unit(rng) * 4 - 2, unit(rng) * 4 - 2, unit(rng) * 4 - 2);

        // Pick a pixel and depth, lift by hand, then feed the projection back through unproject.
        const double px = unit(rng) * frame.width;
        const double py = unit(rng) * frame.height;
        const double z = 0.2 + unit(rng) * 5;
        const auto & k = frame.intrinsics;
        const Eigen::Vector3d cam((px - k.cx) / k.fx * z, (py - k.cy) / k.fy * z, z);
        const Eigen::Vector3d world = frame.pose.rotation * cam + frame.pose.translation;

        const double u = px / frame.width * 1000.0;
        const double v = py / frame.height * 1000.0;
        frame.depth = std::make_shared<ConstantDepth>(z);
        const auto anchor = unproject(frame, u, v);
        worst = std::max(worst, (anchor.position - world).norm());

        const auto projected = project(frame, world);
        ASSERT_TRUE(projected);
        EXPECT_NEAR(projected->point.u, u, 1e-6);
        EXPECT_NEAR(projected->point.v, v, 1e-6);
        EXPECT_NEAR(projected->depth, z, 1e-9);
    }
    EXPECT_LT(worst, 1e-6);
}

TEST(Unproject, ResolutionInvariance)
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> unit(0, 1);
    for (int i = 0; i < 500; ++i)
    {
        auto small = frame_with(std::make_shared<ConstantDepth>(0.3 + unit(rng) * 3));
        small.intrinsics = {300 + unit(rng) * 500, 300 + unit(rng) * 500, unit(rng) * 639, unit(rng) * 479};
        small.pose.rotation = random_rotation(rng);
        auto large = small;
        large.width *= 2;
        large.height *= 2;
        large.intrinsics = {small.intrinsics.fx * 2, small.intrinsics.fy * 2, small.intrinsics.cx * 2, small.intrinsics.cy * 2};
        const double u = unit(rng) * 1000;
        const double v = unit(rng) * 1000;
        EXPECT_LT((unproject(small, u, v).position - unproject(large, u, v).position).norm(), 1e-9);
    }
}

TEST(Unproject, HoleFallsBackToBoxMedian)
{
    // 10x10 grid over a 100x100 image: the box [300,300,700,700] covers cells 3..6.
    std::vector<float> values(100, 2.0f);
    int k = 0;
    for (int y = 3; y <= 6; ++y)
        for (int x = 3; x <= 6; ++x)
            values[y * 10 + x] = 1.0f + 0.1f * static_cast<float>(k++);
    values[5 * 10 + 5] = 0.0f; // the centre sample is a hole
    values[4 * 10 + 4] = std::numeric_limits<float>::quiet_NaN();
    auto frame = frame_with(std::make_shared<DepthGrid>(10, 10, values), 100, 100);
    frame.intrinsics = {100, 100, 50, 50};

    std::vector<double> valid;
    for (int y = 3; y <= 6; ++y)
        for (int x = 3; x <= 6; ++x)
            if (!((x == 5 && y == 5) || (x == 4 && y == 4)))
                valid.push_back(values[y * 10 + x]);
    std::sort(valid.begin(), valid.end());
    const double expected = 0.5 * (valid[6] + valid[7]);

    const auto anchor = unproject_box(frame, {300, 300, 700, 700});
    EXPECT_EQ(anchor.confidence, AnchorConfidence::DepthFallback);
    EXPECT_NEAR(anchor.position.z(), expected, 1e-6);
    EXPECT_EQ(anchor.source_box, (NormBox{300, 300, 700, 700}));
}

TEST(Unproject, DegenerateBoxUsesNeighbourhood)
{
    std::vector<float> values(100 * 100, 0.0f);
    values[50 * 100 + 52] = 1.5f;
    values[48 * 100 + 49] = 1.5f;
    values[51 * 100 + 48] = 3.0f;
    auto frame = frame_with(std::make_shared<DepthGrid>(100, 100, values), 100, 100);
    frame.intrinsics = {100, 100, 50, 50};
    const auto anchor = unproject(frame, 500, 500);
    EXPECT_EQ(anchor.confidence, AnchorConfidence::DepthFallback);
    EXPECT_NEAR(anchor.position.z(), 1.5, 1e-9);

    std::vector<float> empty(100 * 100, -1.0f);
    frame.depth = std::make_shared<DepthGrid>(100, 100, empty);
    EXPECT_EQ(code_of([&] { unproject(frame, 500, 500); }), ErrorCode::NoDepthAvailable);
    EXPECT_EQ(code_of([&] { unproject_box(frame, {0, 0, 1000, 1000}); }), ErrorCode::NoDepthAvailable);
}

TEST(GuidanceAxes, IdentityPose)
{
    const auto frame = frame_with(std::make_shared<ConstantDepth>(1));
    EXPECT_EQ(guidance_axis_to_world(frame, Axis::X), Eigen::Vector3d(1, 0, 0));
    EXPECT_EQ(guidance_axis_to_world(frame, Axis::Y), Eigen::Vector3d(0, -1, 0));
    EXPECT_EQ(guidance_axis_to_world(frame, Axis::Z), Eigen::Vector3d(0, 0, -1));
}

TEST(GuidanceAxes, QuarterTurnAboutVertical)
{
    auto frame = frame_with(std::make_shared<ConstantDepth>(1));
    // +90 degrees about the camera's vertical axis, written out element by element.
    frame.pose.rotation << 0, 0, 1, 0, 1, 0, -1, 0, 0;
    const auto x = guidance_axis_to_world(frame, Axis::X);
    EXPECT_NEAR((x - Eigen::Vector3d(0, 0, -1)).norm(), 0, 1e-12);
    EXPECT_NEAR(x.norm(), 1, 1e-12);
    const auto z = guidance_axis_to_world(frame, Axis::Z);
    EXPECT_NEAR((z - Eigen::Vector3d(-1, 0, 0)).norm(), 0, 1e-12);
}

TEST(GuidanceAxes, RightHandedOrthonormalTriple)
{
    std::mt19937_64 rng(11);
    auto frame = frame_with(std::make_shared<ConstantDepth>(1));
    for (int i = 0; i < 10000; ++i)
    {
        frame.pose.rotation = random_rotation(rng);
        const auto x = guidance_axis_to_world(frame, Axis::X);
        const auto y = guidance_axis_to_world(frame, Axis::Y);
        const auto z = guidance_axis_to_world(frame, Axis::Z);
        ASSERT_NEAR(x.norm(), 1, 1e-9);
        ASSERT_NEAR(y.norm(), 1, 1e-9);
        ASSERT_NEAR(z.norm(), 1, 1e-9);
        ASSERT_NEAR(x.dot(y), 0, 1e-9);
        ASSERT_NEAR((x.cross(y) - z).norm(), 0, 1e-9);
    }
}

TEST(ResolveMotion, Rotation)
{
    std::mt19937_64 rng(5);
    auto frame = frame_with(std::make_shared<ConstantDepth>(0.8));
    frame.pose.rotation = random_rotation(rng);
    VizSpec spec;
    spec.needs_rotation = true;
    const RotationAnswer answer{"knob", {450, 520, 560, 640}, Axis::Z, RotationDirection::Positive};
    const auto cue = std::get<RotationCue3D>(resolve_motion(spec, answer, frame));
    EXPECT_NEAR((cue.axis - frame.pose.rotation * Eigen::Vector3d(0, 0, -1)).norm(), 0, 1e-12);
    EXPECT_EQ(cue.direction, RotationDirection::Positive);
    EXPECT_NEAR((cue.pivot.position - unproject(frame, 505, 580).position).norm(), 0, 1e-12);
    EXPECT_EQ(cue.pivot.source_box, answer.pos);

    spec.needs_translation = true;
    EXPECT_EQ(code_of([&] { resolve_motion(spec, answer, frame); }), ErrorCode::SchemaViolation);
}

TEST(ResolveMotion, Translation)
{
    const auto frame = frame_with(std::make_shared<ConstantDepth>(0.8));
    VizSpec spec;
    spec.needs_translation = true;
    TransformAnswer answer{{{TransformKind::StartTarget, "milk jug", {120, 340, 260, 610}}, {TransformKind::EndTarget, "glass", {700, 300, 860, 520}}}};
    const auto cue = std::get<TranslationCue>(resolve_motion(spec, answer, frame));
    EXPECT_GT((cue.start.position - cue.end.position).norm(), 0.1);
    EXPECT_EQ(cue.end.source_box, (NormBox{700, 300, 860, 520}));

    TransformAnswer object_only{{{TransformKind::Object, "cup", {0, 0, 10, 10}}, {TransformKind::EndTarget, "shelf", {900, 0, 1000, 10}}}};
    EXPECT_EQ(std::get<TranslationCue>(resolve_motion(spec, object_only, frame)).start.source_box, (NormBox{0, 0, 10, 10}));

    TransformAnswer no_end{{{TransformKind::StartTarget, "milk jug", {120, 340, 260, 610}}}};
    EXPECT_EQ(code_of([&] { resolve_motion(spec, no_end, frame); }), ErrorCode::MissingEndTarget);
}

TEST(Frames, Validation)
{
    auto frame = frame_with(std::make_shared<ConstantDepth>(1));
    EXPECT_NO_THROW(validate_frame(frame));
    auto bad = frame;
    bad.intrinsics.fx = 0;
    EXPECT_EQ(code_of([&] { validate_frame(bad); }), ErrorCode::InvalidFrame);
    bad = frame;
    bad.intrinsics.cx = 640;
    EXPECT_EQ(code_of([&] { validate_frame(bad); }), ErrorCode::InvalidFrame);
    bad = frame;
    bad.pose.rotation(0, 0) = -1; // a reflection
    EXPECT_EQ(code_of([&] { validate_frame(bad); }), ErrorCode::InvalidFrame);
    bad = frame;
    bad.pose.rotation(0, 1) = 1e-3;
    EXPECT_EQ(code_of([&] { validate_frame(bad); }), ErrorCode::InvalidFrame);
    bad = frame;
    bad.depth.reset();
    EXPECT_EQ(code_of([&] { validate_frame(bad); }), ErrorCode::InvalidFrame);
}

TEST(Frames, JsonAndDepthBlob)
{
    std::mt19937_64 rng(9);
    auto frame = frame_with(std::make_shared<DepthGrid>(2, 2, std::vector<float>{0.5f, 1.0f, 1.5f, 2.0f}));
    frame.pose.rotation = random_rotation(rng);
    frame.pose.translation = {0.1, -0.2, 0.3};
    const auto back = frame_from_json(Json::parse(to_json(frame).dump()));
    EXPECT_EQ(back.width, 640);
    EXPECT_EQ(back.intrinsics, frame.intrinsics);
    EXPECT_LT((back.pose.rotation - frame.pose.rotation).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_EQ(back.depth->at(639, 479, 640, 480), 2.0);

    const DepthGrid grid(3, 2, {1, 2, 3, 4, 5, -1});
    const auto decoded = DepthGrid::decode(grid.encode());
    EXPECT_EQ(decoded.width(), 3);
    EXPECT_EQ(decoded.cell(2, 1), -1.0f);
    EXPECT_EQ(grid.encode().size(), 8u + 6 * 4);
    EXPECT_EQ(code_of([&] { DepthGrid::decode(grid.encode().substr(0, 20)); }), ErrorCode::PayloadInvalid);

    const auto fallback = default_frame(1280, 720);
    EXPECT_NO_THROW(validate_frame(fallback));
    EXPECT_NEAR(unproject(fallback, 500, 500).position.z(), 0.6, 1e-12);
}

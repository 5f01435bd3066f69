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
#include "xrguide/media_pipeline.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <thread>

using namespace xrguide;

namespace
{

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

void write(const std::filesystem::path & path, const std::string & text)
{
    std::filesystem::create_directories(path.parent_path());
    std::ofstream(path, std::ios::binary) << text;
}

std::string clip_json(double duration, const std::vector<std::pair<double, std::string>> & frames)
{
    Json out{{"duration_s", duration}, {"frames", Json::array()}};
    for (const auto & [t, bytes] : frames)
        out["frames"].push_back({{"t", t}, {"data", base64_encode(bytes)}});
    return out.dump();
}

RelevanceScorer fixed_scores(std::map<std::string, double> by_bytes, const AssetCache & cache)
{
    return [by_bytes = std::move(by_bytes), &cache](const AssetRef & asset, const std::string &)
    {
        const auto bytes = cache.bytes(asset.digest).value();
        auto it = by_bytes.find(bytes);
        if (it == by_bytes.end())
            throw Error(ErrorCode::TransportError, "no score");
        return RelevanceAnswer{it->second, "fixture"};
    };
}

} // namespace

TEST(Queries, ConstructionRule)
{
    const std::vector<std::string> steps{"Fold the paper in half", "Fold the corners down", "Fold the brim up", "Open the boat"};
    const auto queries = build_queries("Fold a paper boat", steps);
    ASSERT_EQ(queries.size(), 5u);
    EXPECT_EQ(queries[0], "Fold a paper boat");
    EXPECT_EQ(queries[1], "Fold the paper in half Fold a paper boat");
    EXPECT_EQ(build_queries("Fold a paper boat", {}).size(), 1u);
    EXPECT_EQ(queries, build_queries("Fold a paper boat", steps));

    EXPECT_EQ(goal_phrase("How to fold a paper boat?"), "fold a paper boat");
    EXPECT_EQ(goal_phrase("How do I make a latte?"), "make a latte");
    EXPECT_EQ(build_queries("How to fold a paper boat?", {"Crease well"})[1], "Crease well fold a paper boat");
}

TEST(Retrieve, OfflineProviderAndContentAddressing)
{
    test::TempDir dir;
    write(dir / "a.png", "image-a");
    write(dir / "b.png", "image-b");
    write(dir / "c.png", "image-c");
    write(dir / "a-copy.png", "image-a");
    write(dir / "manifest.json", R"({"queries": {"boat": ["a.png", "b.png", "c.png"], "dupes": ["a.png", "a-copy.png"], "none": []}})");
    OfflineProvider provider(dir / "manifest.json");
    AssetCache cache(std::make_shared<MemoryBlobStore>());

    const auto three = retrieve("boat", provider, cache, 8, 2);
    ASSERT_EQ(three.size(), 3u);
    EXPECT_EQ(three[0].digest, sha256_hex("image-a"));
    EXPECT_EQ(three[0].source_url, "fixture:a.png");
    EXPECT_EQ(three[0].step_index, 2);
    EXPECT_EQ(retrieve("dupes", provider, cache, 8).size(), 1u);
    EXPECT_EQ(cache.size(), 3u);
    EXPECT_EQ(retrieve("boat", provider, cache, 2).size(), 2u);
    EXPECT_EQ(cache.size(), 3u);

    EXPECT_EQ(code_of([&] { retrieve("none", provider, cache, 8); }), ErrorCode::EmptyResults);
    EXPECT_EQ(code_of([&] { retrieve("unknown query", provider, cache, 8); }), ErrorCode::EmptyResults);
    OfflineProvider missing(dir / "nope.json");
    EXPECT_EQ(code_of([&] { retrieve("boat", missing, cache, 8); }), ErrorCode::ProviderUnavailable);
    write(dir / "down.json", R"({"unavailable": true})");
    OfflineProvider down(dir / "down.json");
    EXPECT_EQ(code_of([&] { retrieve("boat", down, cache, 8); }), ErrorCode::ProviderUnavailable);
}

TEST(Relevance, ThresholdRankingAndTies)
{
    AssetCache cache(nullptr);
    const auto a = cache.add("a", AssetKind::Image);
    const auto b = cache.add("b", AssetKind::Image);
    const auto c = cache.add("c", AssetKind::Image);
    const auto scored = filter_relevance({a, b, c}, "step", 0.5, fixed_scores({{"a", 0.9}, {"b", 0.4}, {"c", 0.7}}, cache));
    ASSERT_EQ(scored.kept.size(), 2u);
    EXPECT_EQ(scored.kept[0], a);
    EXPECT_EQ(scored.kept[1], c);
    EXPECT_EQ(scored.judgments.size(), 3u);

    EXPECT_TRUE(filter_relevance({a, b, c}, "step", 0.5, fixed_scores({{"a", 0.1}, {"b", 0.2}, {"c", 0.3}}, cache)).kept.empty());

    const auto tie = filter_relevance({a, b}, "step", 0.5, fixed_scores({{"a", 0.7}, {"b", 0.7}}, cache));
    ASSERT_EQ(tie.kept.size(), 2u);
    EXPECT_LT(tie.kept[0].digest, tie.kept[1].digest);

    const auto failed = filter_relevance({a, b}, "step", 0.0, fixed_scores({{"a", 0.7}}, cache));
    ASSERT_EQ(failed.kept.size(), 1u);
    EXPECT_EQ(failed.judgments[1].score, -1.0);

    RelevanceScorer miss = [](const AssetRef &, const std::string &) -> RelevanceAnswer { throw Error(ErrorCode::ReplayMiss, "h"); };
    EXPECT_EQ(code_of([&] { filter_relevance({a}, "step", 0.5, miss); }), ErrorCode::ReplayMiss);
}

TEST(Keyframes, UniformSampling)
{
    EXPECT_EQ(keyframe_times(10, 3), (std::vector<double>{0, 5, 10}));
    EXPECT_EQ(keyframe_times(10, 1), (std::vector<double>{5}));
    EXPECT_TRUE(keyframe_times(10, 0).empty());
    for (std::size_t n = 2; n < 40; ++n)
    {
        const auto times = keyframe_times(7.3, n);
        ASSERT_EQ(times.size(), n);
        EXPECT_EQ(times.front(), 0.0);
        EXPECT_EQ(times.back(), 7.3);
        for (std::size_t i = 1; i < n; ++i)
            ASSERT_GT(times[i], times[i - 1]);
    }

    AssetCache cache(nullptr);
    const auto clip = cache.add(clip_json(10, {{0, "f0"}, {2.5, "f1"}, {5, "f2"}, {7.5, "f3"}, {10, "f4"}}), AssetKind::VideoClip,
                                std::string("fixture:clip"), 1);
    ClipJsonDecoder decoder;
    const auto frames = extract_keyframes(clip, 3, decoder, cache);
    ASSERT_EQ(frames.size(), 3u);
    EXPECT_EQ(cache.bytes(frames[1].digest), "f2");
    EXPECT_EQ(frames[2].timestamp, 10.0);
    for (const auto & f : frames)
    {
        EXPECT_EQ(f.kind, AssetKind::Keyframe);
        EXPECT_EQ(f.parent, clip.digest);
        EXPECT_EQ(f.step_index, 1);
        EXPECT_TRUE(*f.timestamp >= 0 && *f.timestamp <= 10);
    }
    EXPECT_EQ(cache.bytes(extract_keyframes(clip, 1, decoder, cache)[0].digest), "f2");

    const auto corrupt = cache.add("{\"duration_s\": 10, \"frames\": \"oops\"}", AssetKind::VideoClip);
    EXPECT_EQ(code_of([&] { extract_keyframes(corrupt, 3, decoder, cache); }), ErrorCode::DecodeError);
    const auto garbage = cache.add("not a clip", AssetKind::VideoClip);
    EXPECT_EQ(code_of([&] { extract_keyframes(garbage, 3, decoder, cache); }), ErrorCode::DecodeError);
}

TEST(Segmentation, MockContract)
{
    AssetCache cache(nullptr);
    const auto image = cache.add("photo", AssetKind::Image, std::nullopt, 0);
    MockSegmentation mock;
    mock.set("Paper Boat", {100, 100, 300, 400});
    const auto mask_ref = segment(image, "paper boat", mock, cache);
    EXPECT_EQ(mask_ref.kind, AssetKind::Mask);
    EXPECT_EQ(mask_ref.parent, image.digest);
    const auto mask = mask_from_json(Json::parse(cache.bytes(mask_ref.digest).value()));
    ASSERT_EQ(mask.polygons.size(), 1u);
    EXPECT_EQ(mask.polygons[0], (Polygon{{100, 100}, {300, 100}, {300, 400}, {100, 400}}));
    EXPECT_EQ(mask_bounds(mask), (NormBox{100, 100, 300, 400}));
    EXPECT_EQ(code_of([&] { segment(image, "teapot", mock, cache); }), ErrorCode::NoObjectFound);

    EXPECT_EQ(code_of([] { mask_from_json(Json::parse(R"({"parent":"x","polygons":[[[0,0],[1,1]]]})")); }), ErrorCode::SchemaViolation);
    EXPECT_EQ(code_of([] { mask_from_json(Json::parse(R"({"parent":"x","polygons":[[[0,0],[1,1],[2000,1]]]})")); }), ErrorCode::OutOfRange);
    EXPECT_EQ(code_of([] { mask_from_json(Json::parse(R"({"polygons":[[[0,0],[1,1],[2,1]]]})")); }), ErrorCode::SchemaViolation);
}

TEST(Segmentation, HttpContract)
{
    httplib::Server server;
    server.Post("/segment",
                [](const httplib::Request & req, httplib::Response & res)
                {
                    const auto body = Json::parse(req.body);
                    if (body["label"] == "ghost")
                    {
                        res.status = 404;
                        return;
                    }
                    res.set_content(R"({"polygons": [[[120, 80], [640, 90], [600, 720], [140, 700], [100, 400]]]})", "application/json");
                });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    AssetCache cache(nullptr);
    const auto image = cache.add("photo", AssetKind::Image);
    HttpSegmentation backend("http://127.0.0.1:" + std::to_string(port) + "/segment");
    const auto mask = mask_from_json(Json::parse(cache.bytes(segment(image, "coffee mug", backend, cache).digest).value()));
    ASSERT_GE(mask.polygons[0].size(), 3u);
    for (const auto & v : mask.polygons[0])
        EXPECT_TRUE(v.x >= 0 && v.x <= 1000 && v.y >= 0 && v.y <= 1000);
    EXPECT_EQ(code_of([&] { segment(image, "ghost", backend, cache); }), ErrorCode::NoObjectFound);
    server.stop();
    thread.join();

    HttpSegmentation unreachable("http://127.0.0.1:" + std::to_string(port) + "/segment", 0.5);
    EXPECT_EQ(code_of([&] { segment(image, "coffee mug", unreachable, cache); }), ErrorCode::SegmentationUnavailable);
}

TEST(Cache, IdempotentStorage)
{
    auto store = std::make_shared<MemoryBlobStore>();
    AssetCache cache(store);
    const auto first = cache.add("bytes", AssetKind::Image, std::string("u1"));
    const auto second = cache.add("bytes", AssetKind::Image, std::string("u2"));
    EXPECT_EQ(first, second);
    EXPECT_EQ(store->size(), 1u);
    EXPECT_EQ(cache.size(), 1u);

    test::TempDir dir;
    auto disk = std::make_shared<DirectoryBlobStore>(dir.path());
    AssetCache disk_cache(disk);
    disk_cache.add("bytes", AssetKind::Image);
    disk_cache.add("bytes", AssetKind::Image);
    EXPECT_EQ(std::distance(std::filesystem::directory_iterator(dir.path()), std::filesystem::directory_iterator()), 1);
    EXPECT_EQ(disk->get(sha256_hex("bytes")), "bytes");
    EXPECT_FALSE(disk->get("../etc/passwd"));
}

TEST(Prefetch, FiltersThenFallsBackToKeyframes)
{
    test::TempDir dir;
    write(dir / "goal.png", "goal");
    write(dir / "s0-good.png", "s0-good");
    write(dir / "s0-bad.png", "s0-bad");
    write(dir / "s1-bad.png", "s1-bad");
    write(dir / "f0.png", "frame-0");
    write(dir / "f1.png", "frame-1");
    write(dir / "s1.clip.json", R"({"duration_s": 4, "frames": [{"t": 0, "file": "f0.png"}, {"t": 4, "file": "f1.png"}]})");
    const std::vector<std::string> steps{"Fold in half", "Fold corners"};
    const auto queries = build_queries("Fold a boat", steps);
    Json manifest{{"queries", {{queries[0], {"goal.png"}}, {queries[1], {"s0-good.png", "s0-bad.png"}}, {queries[2], {"s1-bad.png", "s1.clip.json"}}}}};
    write(dir / "manifest.json", manifest.dump());

    OfflineProvider provider(dir / "manifest.json");
    AssetCache cache(nullptr);
    ClipJsonDecoder decoder;
    MediaConfig config;
    config.keyframes = 2;
    const auto result = prefetch("Fold a boat", steps, &provider, cache,
                                 fixed_scores({{"s0-good", 0.8}, {"s0-bad", 0.2}, {"s1-bad", 0.1}}, cache), decoder, config);
    ASSERT_EQ(result.goal_assets.size(), 1u);
    ASSERT_EQ(result.steps.size(), 2u);
    ASSERT_EQ(result.steps[0].assets.size(), 1u);
    EXPECT_EQ(cache.bytes(result.steps[0].assets[0].digest), "s0-good");
    ASSERT_EQ(result.steps[1].assets.size(), 2u);
    EXPECT_EQ(result.steps[1].assets[0].kind, AssetKind::Keyframe);
    EXPECT_EQ(cache.bytes(result.steps[1].assets[1].digest), "frame-1");
    EXPECT_TRUE(result.warnings.empty());

    write(dir / "down.json", R"({"unavailable": true})");
    OfflineProvider down(dir / "down.json");
    const auto degraded = prefetch("Fold a boat", steps, &down, cache, fixed_scores({}, cache), decoder, config);
    EXPECT_EQ(degraded.steps.size(), 2u);
    EXPECT_TRUE(degraded.steps[0].assets.empty());
    EXPECT_EQ(degraded.warnings.size(), 1u);
}

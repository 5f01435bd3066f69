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

#include "xrguide/media_pipeline.hpp"

#include "xrguide/digest.hpp"
#include "xrguide/error.hpp"

#include "http_util.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

namespace xrguide
{

namespace
{

std::string trim(std::string_view text)
{
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos)
        return {};
    const auto last = text.find_last_not_of(" \t\r\n");
    return std::string(text.substr(first, last - first + 1));
}

std::string lower(std::string_view text)
{
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

Json parse_clip(std::string_view clip)
{
    auto json = Json::parse(clip, nullptr, false);
    if (json.is_discarded() || !json.is_object())
        throw Error(ErrorCode::DecodeError, "clip is not a JSON object");
    const auto duration = json.find("duration_s");
    if (duration == json.end() || !duration->is_number() || !(duration->get<double>() > 0) || !std::isfinite(duration->get<double>()))
        throw Error(ErrorCode::DecodeError, "clip needs a positive duration_s");
    const auto frames = json.find("frames");
    if (frames == json.end() || !frames->is_array() || frames->empty())
        throw Error(ErrorCode::DecodeError, "clip has no frames");
    for (const auto & frame : *frames)
    {
        if (!frame.is_object() || !frame.contains("t") || !frame["t"].is_number() || !frame.contains("data") || !frame["data"].is_string())
            throw Error(ErrorCode::DecodeError, "clip frame needs numeric t and base64 data");
        const double t = frame["t"].get<double>();
        if (t < 0 || t > duration->get<double>())
            throw Error(ErrorCode::DecodeError, "clip frame time outside the clip");
    }
    return json;
}

MaskPoint point_from_json(const Json & value, const std::string & path)
{
    if (!value.is_array() || value.size() != 2 || !value[0].is_number_integer() || !value[1].is_number_integer())
        throw Error(ErrorCode::SchemaViolation, "expected [x, y] integers", path);
    const auto x = value[0].get<long long>();
    const auto y = value[1].get<long long>();
    if (x < 0 || x > kNormMax || y < 0 || y > kNormMax)
        throw Error(ErrorCode::OutOfRange, "vertex outside [0,1000]", path);
    return {static_cast<int>(x), static_cast<int>(y)};
}

std::vector<Polygon> polygons_from_json(const Json & value, const std::string & path)
{
    if (!value.is_array())
        throw Error(ErrorCode::SchemaViolation, "expected polygon list", path);
    std::vector<Polygon> polygons;
    for (std::size_t i = 0; i < value.size(); ++i)
    {
        const auto ppath = path + "[" + std::to_string(i) + "]";
        if (!value[i].is_array() || value[i].size() < 3)
            throw Error(ErrorCode::SchemaViolation, "polygon needs at least 3 vertices", ppath);
        Polygon polygon;
        for (std::size_t j = 0; j < value[i].size(); ++j)
            polygon.push_back(point_from_json(value[i][j], ppath + "[" + std::to_string(j) + "]"));
        polygons.push_back(std::move(polygon));
    }
    return polygons;
}

Json polygons_json(const std::vector<Polygon> & polygons)
{
    Json out = Json::array();
    for (const auto & polygon : polygons)
    {
        Json p = Json::array();
        for (const auto & v : polygon)
            p.push_back(Json::array({v.x, v.y}));
        out.push_back(std::move(p));
    }
    return out;
}

} // namespace

AssetCache::AssetCache(std::shared_ptr<BlobStore> store) : store_(std::move(store))
{
    if (!store_)
        store_ = std::make_shared<MemoryBlobStore>();
}

AssetRef AssetCache::add(std::string_view bytes, AssetKind kind, std::optional<std::string> source_url, std::optional<int> step_index,
                         std::optional<std::string> parent, std::optional<double> timestamp)
{
    auto digest = store_->put(bytes);
    std::lock_guard lock(mutex_);
    auto [it, inserted] = index_.try_emplace(digest);
    if (inserted)
        it->second = AssetRef{digest, kind, std::move(source_url), step_index, std::move(parent), timestamp};
    return it->second;
}

std::optional<AssetRef> AssetCache::find(std::string_view digest) const
{
    std::lock_guard lock(mutex_);
    auto it = index_.find(digest);
    if (it == index_.end())
        return std::nullopt;
    return it->second;
}

std::optional<std::string> AssetCache::bytes(std::string_view digest) const
{
    return store_->get(digest);
}

std::size_t AssetCache::size() const
{
    std::lock_guard lock(mutex_);
    return index_.size();
}

std::string goal_phrase(std::string_view goal)
{
    std::string text = trim(goal);
    while (!text.empty() && (text.back() == '?' || text.back() == '.' || text.back() == '!'))
        text.pop_back();
    text = trim(text);
    static const std::vector<std::string> prefixes{"how do i ", "how do you ", "how can i ", "how should i ", "how to ", "help me ", "i want to "};
    const auto lowered = lower(text);
    for (const auto & prefix : prefixes)
        if (lowered.starts_with(prefix))
            return trim(text.substr(prefix.size()));
    return text;
}

std::vector<std::string> build_queries(std::string_view goal, const std::vector<std::string> & steps)
{
    std::vector<std::string> queries{trim(goal)};
    const auto phrase = goal_phrase(goal);
    for (const auto & step : steps)
    {
        auto query = trim(step);
        if (!phrase.empty() && lower(query).find(lower(phrase)) == std::string::npos)
            query += " " + phrase;
        queries.push_back(std::move(query));
    }
    return queries;
}

OfflineProvider::OfflineProvider(std::filesystem::path manifest) : manifest_(std::move(manifest))
{
}

std::vector<RetrievedItem> OfflineProvider::search(const std::string & query, std::size_t max_results)
{
    if (!std::filesystem::exists(manifest_))
        throw Error(ErrorCode::ProviderUnavailable, "manifest not found", manifest_.string());
    const auto manifest = Json::parse(read_file(manifest_), nullptr, false);
    if (manifest.is_discarded() || !manifest.is_object())
        throw Error(ErrorCode::ProviderUnavailable, "manifest is not a JSON object", manifest_.string());
    if (manifest.value("unavailable", false))
        throw Error(ErrorCode::ProviderUnavailable, "manifest marks the provider as down", manifest_.string());

    const Json * files = nullptr;
    if (auto queries = manifest.find("queries"); queries != manifest.end() && queries->is_object() && queries->contains(query))
        files = &(*queries)[query];
    else if (auto fallback = manifest.find("fallback"); fallback != manifest.end())
        files = &*fallback;
    if (!files || !files->is_array())
        return {};

    const auto base = manifest_.parent_path();
    std::vector<RetrievedItem> items;
    for (const auto & entry : *files)
    {
        if (items.size() >= max_results)
            break;
        if (!entry.is_string())
            continue;
        const auto name = entry.get<std::string>();
        RetrievedItem item;
        item.source_url = "fixture:" + name;
        item.bytes = read_file(base / name);
        if (name.ends_with(".clip.json"))
        {
            // Inline frame files so the cached clip is self-contained.
            auto clip = Json::parse(item.bytes, nullptr, false);
            if (!clip.is_discarded() && clip.is_object() && clip.contains("frames") && clip["frames"].is_array())
                for (auto & frame : clip["frames"])
                    if (frame.is_object() && frame.contains("file") && frame["file"].is_string())
                    {
                        frame["data"] = base64_encode(read_file(base / frame["file"].get<std::string>()));
                        frame.erase("file");
                    }
            item.bytes = clip.is_discarded() ? item.bytes : dump_compact(clip);
            item.kind = AssetKind::VideoClip;
        }
        items.push_back(std::move(item));
    }
    return items;
}

HttpSearchProvider::HttpSearchProvider(std::string endpoint, double timeout_s) : endpoint_(std::move(endpoint)), timeout_s_(timeout_s)
{
}

std::vector<RetrievedItem> HttpSearchProvider::search(const std::string & query, std::size_t max_results)
{
    const auto endpoint = detail::split_endpoint(endpoint_);
    auto client = detail::make_client(endpoint.origin, timeout_s_);
    httplib::Params params{{"q", query}, {"n", std::to_string(max_results)}};
    auto response = client->Get(endpoint.path, params, httplib::Headers{});
    if (!response || response->status != 200)
        throw Error(ErrorCode::ProviderUnavailable, response ? "HTTP " + std::to_string(response->status) : httplib::to_string(response.error()),
                    endpoint_);
    const auto json = Json::parse(response->body, nullptr, false);
    if (json.is_discarded() || !json.contains("results") || !json["results"].is_array())
        throw Error(ErrorCode::ProviderUnavailable, "search reply has no results array", endpoint_);

    std::vector<RetrievedItem> items;
    for (const auto & result : json["results"])
    {
        if (items.size() >= max_results)
            break;
        if (!result.is_object() || !result.contains("url") || !result["url"].is_string())
            continue;
        const auto url = result["url"].get<std::string>();
        try
        {
            const auto target = detail::split_endpoint(url);
            auto fetch = detail::make_client(target.origin, timeout_s_)->Get(target.path);
            if (!fetch || fetch->status != 200)
            {
                spdlog::warn("skipping {}: download failed", url);
                continue;
            }
            items.push_back({fetch->body, result.value("kind", "image") == "video" ? AssetKind::VideoClip : AssetKind::Image, url});
        }
        catch (const Error & e)
        {
            spdlog::warn("skipping {}: {}", url, e.what());
        }
    }
    return items;
}

std::vector<AssetRef> retrieve(const std::string & query, RetrievalProvider & provider, AssetCache & cache, std::size_t max_results,
                               std::optional<int> step_index)
{
    std::vector<AssetRef> out;
    std::set<std::string> seen;
    for (auto & item : provider.search(query, max_results))
    {
        if (out.size() >= max_results)
            break;
        auto ref = cache.add(item.bytes, item.kind, item.source_url, step_index);
        if (!seen.insert(ref.digest).second)
            continue;
        ref.step_index = step_index;
        out.push_back(std::move(ref));
    }
    if (out.empty())
        throw Error(ErrorCode::EmptyResults, query);
    return out;
}

FilterResult filter_relevance(const std::vector<AssetRef> & assets, const std::string & step, double threshold, const RelevanceScorer & scorer)
{
    FilterResult result;
    for (const auto & asset : assets)
    {
        RelevanceJudgment judgment{asset, -1.0, {}};
        try
        {
            const auto answer = scorer(asset, step);
            judgment.score = answer.score;
            judgment.reason = answer.reason;
        }
        catch (const Error & e)
        {
            if (e.code() == ErrorCode::ReplayMiss)
                throw;
            judgment.reason = e.what();
            spdlog::warn("relevance scoring failed for {}: {}", asset.digest, e.what());
        }
        result.judgments.push_back(judgment);
    }
    std::vector<const RelevanceJudgment *> kept;
    for (const auto & j : result.judgments)
        if (j.score >= 0 && j.score >= threshold)
            kept.push_back(&j);
    std::sort(kept.begin(), kept.end(),
              [](const RelevanceJudgment * a, const RelevanceJudgment * b)
              {
                  if (a->score != b->score)
                      return a->score > b->score;
                  return a->asset.digest < b->asset.digest;
              });
    for (const auto * j : kept)
        result.kept.push_back(j->asset);
    return result;
}

ClipInfo ClipJsonDecoder::probe(std::string_view clip) const
{
    return ClipInfo{parse_clip(clip)["duration_s"].get<double>()};
}

std::string ClipJsonDecoder::frame_at(std::string_view clip, double t) const
{
    const auto json = parse_clip(clip);
    const Json * best = nullptr;
    double best_distance = 0;
    for (const auto & frame : json["frames"])
    {
        const double distance = std::abs(frame["t"].get<double>() - t);
        if (!best || distance < best_distance)
        {
            best = &frame;
            best_distance = distance;
        }
    }
    try
    {
        return base64_decode((*best)["data"].get<std::string>());
    }
    catch (const Error & e)
    {
        throw Error(ErrorCode::DecodeError, e.detail());
    }
}

std::vector<double> keyframe_times(double duration_s, std::size_t n)
{
    if (n == 0)
        return {};
    if (n == 1)
        return {duration_s / 2.0};
    std::vector<double> times;
    for (std::size_t i = 0; i < n; ++i)
        times.push_back(i == n - 1 ? duration_s : duration_s * static_cast<double>(i) / static_cast<double>(n - 1));
    return times;
}

std::vector<AssetRef> extract_keyframes(const AssetRef & video, std::size_t n, const VideoDecoder & decoder, AssetCache & cache)
{
    const auto clip = cache.bytes(video.digest);
    if (!clip)
        throw Error(ErrorCode::DecodeError, "clip bytes not cached", video.digest);
    const auto info = decoder.probe(*clip);
    std::vector<AssetRef> frames;
    for (double t : keyframe_times(info.duration_s, n))
    {
        auto ref = cache.add(decoder.frame_at(*clip, t), AssetKind::Keyframe, video.source_url, video.step_index, video.digest, t);
        // Identical frames at different times share bytes; report the requested time.
        ref.kind = AssetKind::Keyframe;
        ref.parent = video.digest;
        ref.timestamp = t;
        ref.step_index = video.step_index;
        frames.push_back(std::move(ref));
    }
    return frames;
}

Json to_json(const Mask & mask)
{
    return Json{{"parent", mask.parent}, {"label", mask.label}, {"polygons", polygons_json(mask.polygons)}};
}

Mask mask_from_json(const Json & value)
{
    if (!value.is_object())
        throw Error(ErrorCode::SchemaViolation, "expected mask object", "$");
    Mask mask;
    if (!value.contains("parent") || !value["parent"].is_string())
        throw Error(ErrorCode::SchemaViolation, "mask needs its parent image digest", "$.parent");
    mask.parent = value["parent"].get<std::string>();
    mask.label = value.value("label", "");
    mask.polygons = polygons_from_json(value.value("polygons", Json()), "$.polygons");
    if (mask.polygons.empty())
        throw Error(ErrorCode::SchemaViolation, "mask has no polygons", "$.polygons");
    return mask;
}

NormBox mask_bounds(const Mask & mask)
{
    NormBox box{kNormMax, kNormMax, 0, 0};
    for (const auto & polygon : mask.polygons)
        for (const auto & v : polygon)
        {
            box.x_min = std::min(box.x_min, v.x);
            box.y_min = std::min(box.y_min, v.y);
            box.x_max = std::max(box.x_max, v.x);
            box.y_max = std::max(box.y_max, v.y);
        }
    return box.valid() ? box : NormBox{};
}

MockSegmentation MockSegmentation::from_json(const Json & boxes)
{
    MockSegmentation mock;
    if (!boxes.is_object())
        throw Error(ErrorCode::SchemaViolation, "expected {label: box}", "$");
    for (const auto & [label, box] : boxes.items())
    {
        const auto path = "$." + label;
        if (!box.is_array() || box.size() != 4)
            throw Error(ErrorCode::SchemaViolation, "expected [x_min, y_min, x_max, y_max]", path);
        NormBox b{box[0].get<int>(), box[1].get<int>(), box[2].get<int>(), box[3].get<int>()};
        if (!b.valid())
            throw Error(ErrorCode::OutOfRange, "invalid box", path);
        mock.set(label, b);
    }
    return mock;
}

void MockSegmentation::set(const std::string & label, NormBox box)
{
    boxes_[lower(trim(label))] = box;
}

std::vector<Polygon> MockSegmentation::segment(std::string_view, const std::string &, const std::string & label)
{
    auto it = boxes_.find(lower(trim(label)));
    if (it == boxes_.end())
        throw Error(ErrorCode::NoObjectFound, label);
    const auto & b = it->second;
    return {Polygon{{b.x_min, b.y_min}, {b.x_max, b.y_min}, {b.x_max, b.y_max}, {b.x_min, b.y_max}}};
}

HttpSegmentation::HttpSegmentation(std::string endpoint, double timeout_s) : endpoint_(std::move(endpoint)), timeout_s_(timeout_s)
{
}

std::vector<Polygon> HttpSegmentation::segment(std::string_view image_bytes, const std::string & image_digest, const std::string & label)
{
    const auto endpoint = detail::split_endpoint(endpoint_);
    auto client = detail::make_client(endpoint.origin, timeout_s_);
    const Json body{{"imageDigest", image_digest}, {"image", base64_encode(image_bytes)}, {"label", label}};
    auto response = client->Post(endpoint.path, body.dump(), "application/json");
    if (!response)
        throw Error(ErrorCode::SegmentationUnavailable, httplib::to_string(response.error()), endpoint_);
    if (response->status == 404)
        throw Error(ErrorCode::NoObjectFound, label);
    if (response->status != 200)
        throw Error(ErrorCode::SegmentationUnavailable, "HTTP " + std::to_string(response->status), endpoint_);
    const auto json = Json::parse(response->body, nullptr, false);
    if (json.is_discarded() || !json.is_object())
        throw Error(ErrorCode::SegmentationUnavailable, "reply is not a JSON object", endpoint_);
    auto polygons = polygons_from_json(json.value("polygons", Json()), "$.polygons");
    if (polygons.empty())
        throw Error(ErrorCode::NoObjectFound, label);
    return polygons;
}

AssetRef segment(const AssetRef & image, const std::string & label, SegmentationBackend & backend, AssetCache & cache)
{
    const auto bytes = cache.bytes(image.digest);
    if (!bytes)
        throw Error(ErrorCode::SegmentationUnavailable, "image bytes not cached", image.digest);
    Mask mask{image.digest, label, backend.segment(*bytes, image.digest, label)};
    mask = mask_from_json(to_json(mask));
    auto ref = cache.add(dump_compact(to_json(mask)), AssetKind::Mask, std::nullopt, image.step_index, image.digest);
    return ref;
}

PrefetchResult prefetch(std::string_view goal, const std::vector<std::string> & steps, RetrievalProvider * provider, AssetCache & cache,
                        const RelevanceScorer & scorer, const VideoDecoder & decoder, const MediaConfig & config)
{
    PrefetchResult result;
    result.steps.resize(steps.size());
    if (!provider)
    {
        result.warnings.push_back("no retrieval provider configured; steps stay imageless");
        return result;
    }
    const auto queries = build_queries(goal, steps);
    try
    {
        result.goal_assets = retrieve(queries[0], *provider, cache, config.max_results);
    }
    catch (const Error & e)
    {
        if (e.code() == ErrorCode::ProviderUnavailable)
        {
            result.warnings.push_back(std::string("retrieval unavailable: ") + e.what());
            spdlog::warn("{}", result.warnings.back());
            return result;
        }
        if (e.code() != ErrorCode::EmptyResults)
            throw;
        result.warnings.push_back("no results for goal query");
    }

    for (std::size_t i = 0; i < steps.size(); ++i)
    {
        auto & media = result.steps[i];
        std::vector<AssetRef> found;
        try
        {
            found = retrieve(queries[i + 1], *provider, cache, config.max_results, static_cast<int>(i));
        }
        catch (const Error & e)
        {
            if (e.code() != ErrorCode::EmptyResults && e.code() != ErrorCode::ProviderUnavailable)
                throw;
            result.warnings.push_back("step " + std::to_string(i) + ": " + e.what());
            continue;
        }
        std::vector<AssetRef> images;
        std::vector<AssetRef> clips;
        for (auto & ref : found)
            (ref.kind == AssetKind::VideoClip ? clips : images).push_back(ref);

        auto filtered = filter_relevance(images, steps[i], config.threshold, scorer);
        media.assets = std::move(filtered.kept);
        media.judgments = std::move(filtered.judgments);
        if (!media.assets.empty())
            continue;
        if (clips.empty())
        {
            result.warnings.push_back("step " + std::to_string(i) + ": no relevant images and no clips");
            continue;
        }
        try
        {
            media.assets = extract_keyframes(clips.front(), config.keyframes, decoder, cache);
        }
        catch (const Error & e)
        {
            if (e.code() != ErrorCode::DecodeError)
                throw;
            result.warnings.push_back("step " + std::to_string(i) + ": " + e.what());
        }
    }
    return result;
}

} // namespace xrguide

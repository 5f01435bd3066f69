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

#include "xrguide/asset.hpp"
#include "xrguide/blob_store.hpp"
#include "xrguide/norm_box.hpp"
#include "xrguide/prompt_engine.hpp"

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

/// Blob storage plus the metadata that turns bytes into AssetRefs.
class AssetCache
{
public:
    explicit AssetCache(std::shared_ptr<BlobStore> store);

    /// Idempotent on bytes: the first registration wins for metadata.
    AssetRef add(std::string_view bytes, AssetKind kind, std::optional<std::string> source_url = std::nullopt,
                 std::optional<int> step_index = std::nullopt, std::optional<std::string> parent = std::nullopt,
                 std::optional<double> timestamp = std::nullopt);
    std::optional<AssetRef> find(std::string_view digest) const;
    std::optional<std::string> bytes(std::string_view digest) const;
    std::size_t size() const;

    std::shared_ptr<BlobStore> store() const noexcept { return store_; }

private:
    std::shared_ptr<BlobStore> store_;
    mutable std::mutex mutex_;
    std::map<std::string, AssetRef, std::less<>> index_;
};

/// One goal-level query, then one per step: "<instruction> <goal phrase>".
std::vector<std::string> build_queries(std::string_view goal, const std::vector<std::string> & steps);

/// The goal with a leading "how to"/"how do I" and trailing punctuation removed.
std::string goal_phrase(std::string_view goal);

struct RetrievedItem
{
    std::string bytes;
    AssetKind kind = AssetKind::Image;
    std::string source_url;
};

class RetrievalProvider
{
public:
    virtual ~RetrievalProvider() = default;
    /// Throws ProviderUnavailable when the backing service or manifest cannot be reached.
    virtual std::vector<RetrievedItem> search(const std::string & query, std::size_t max_results) = 0;
};

/// Reads a manifest {"queries": {"<query>": ["file", ...]}, "fallback": ["file", ...]} with files
/// relative to the manifest. Files ending in .clip.json are video clips; their frame files are inlined.
class OfflineProvider final : public RetrievalProvider
{
public:
    explicit OfflineProvider(std::filesystem::path manifest);
    std::vector<RetrievedItem> search(const std::string & query, std::size_t max_results) override;

private:
    std::filesystem::path manifest_;
};

/// GET <endpoint>?q=<query>&n=<max> returning {"results": [{"url": ..., "kind": "image"|"video"}]};
/// every url is then fetched.
class HttpSearchProvider final : public RetrievalProvider
{
public:
    explicit HttpSearchProvider(std::string endpoint, double timeout_s = 20.0);
    std::vector<RetrievedItem> search(const std::string & query, std::size_t max_results) override;

private:
    std::string endpoint_;
    double timeout_s_;
};

/// Caches up to `max_results` items, collapsing duplicate bytes. Throws EmptyResults when nothing came back.
std::vector<AssetRef> retrieve(const std::string & query, RetrievalProvider & provider, AssetCache & cache, std::size_t max_results,
                               std::optional<int> step_index = std::nullopt);

struct RelevanceJudgment
{
    AssetRef asset;
    /// -1 when scoring failed.
    double score = 0;
    std::string reason;
};

struct FilterResult
{
    std::vector<AssetRef> kept;
    std::vector<RelevanceJudgment> judgments;
};

using RelevanceScorer = std::function<RelevanceAnswer(const AssetRef & asset, const std::string & step)>;

/// Keeps score >= threshold, ranked by score descending then digest ascending.
FilterResult filter_relevance(const std::vector<AssetRef> & assets, const std::string & step, double threshold, const RelevanceScorer & scorer);

struct ClipInfo
{
    double duration_s = 0;
};

class VideoDecoder
{
public:
    virtual ~VideoDecoder() = default;
    /// Throws DecodeError.
    virtual ClipInfo probe(std::string_view clip) const = 0;
    virtual std::string frame_at(std::string_view clip, double t) const = 0;
};

/// Decodes the pre-split clip format {"duration_s": d, "frames": [{"t": s, "data": base64}]}, nearest frame wins.
class ClipJsonDecoder final : public VideoDecoder
{
public:
    ClipInfo probe(std::string_view clip) const override;
    std::string frame_at(std::string_view clip, double t) const override;
};

/// Sample times for n keyframes: i*d/(n-1), or d/2 when n == 1.
std::vector<double> keyframe_times(double duration_s, std::size_t n);

std::vector<AssetRef> extract_keyframes(const AssetRef & video, std::size_t n, const VideoDecoder & decoder, AssetCache & cache);

struct MaskPoint
{
    int x = 0;
    int y = 0;

    bool operator==(const MaskPoint &) const = default;
};

using Polygon = std::vector<MaskPoint>;

/// Mask bytes on the wire and in the cache: {"parent": digest, "label": text, "polygons": [[[x,y],...],...]}.
struct Mask
{
    std::string parent;
    std::string label;
    std::vector<Polygon> polygons;

    bool operator==(const Mask &) const = default;
};

Json to_json(const Mask & mask);
/// Throws SchemaViolation unless every polygon has >= 3 vertices inside [0,1000].
Mask mask_from_json(const Json & value);
NormBox mask_bounds(const Mask & mask);

class SegmentationBackend
{
public:
    virtual ~SegmentationBackend() = default;
    /// Throws SegmentationUnavailable or NoObjectFound.
    virtual std::vector<Polygon> segment(std::string_view image_bytes, const std::string & image_digest, const std::string & label) = 0;
};

/// Answers with the label's configured bounding box as a 4-vertex rectangle.
class MockSegmentation final : public SegmentationBackend
{
public:
    MockSegmentation() = default;
    /// {"<label>": [x_min, y_min, x_max, y_max], ...}; labels compare case-insensitively.
    static MockSegmentation from_json(const Json & boxes);

    void set(const std::string & label, NormBox box);
    std::vector<Polygon> segment(std::string_view image_bytes, const std::string & image_digest, const std::string & label) override;

private:
    std::map<std::string, NormBox> boxes_;
};

/// POST {imageDigest, image (base64), label} -> {polygons: [[[x,y],...]]}.
class HttpSegmentation final : public SegmentationBackend
{
public:
    explicit HttpSegmentation(std::string endpoint, double timeout_s = 30.0);
    std::vector<Polygon> segment(std::string_view image_bytes, const std::string & image_digest, const std::string & label) override;

private:
    std::string endpoint_;
    double timeout_s_;
};

/// Segments a cached image and caches the resulting mask.
AssetRef segment(const AssetRef & image, const std::string & label, SegmentationBackend & backend, AssetCache & cache);

struct MediaConfig
{
    double threshold = 0.5;
    std::size_t max_results = 8;
    std::size_t keyframes = 5;
};

struct StepMedia
{
    /// Ranked: relevance-kept images first, then keyframes in time order.
    std::vector<AssetRef> assets;
    std::vector<RelevanceJudgment> judgments;
};

struct PrefetchResult
{
    std::vector<AssetRef> goal_assets;
    std::vector<StepMedia> steps;
    std::vector<std::string> warnings;
};

/// Queries, retrieves, filters and (for steps left without images) extracts keyframes.
/// Provider failures degrade to imageless steps with a warning; calls run in a fixed order.
PrefetchResult prefetch(std::string_view goal, const std::vector<std::string> & steps, RetrievalProvider * provider, AssetCache & cache,
                        const RelevanceScorer & scorer, const VideoDecoder & decoder, const MediaConfig & config = {});

} // namespace xrguide

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
#include "xrguide/json_text.hpp"
#include "xrguide/norm_box.hpp"
#include "xrguide/prompt_engine.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace xrguide
{

struct Intrinsics
{
    double fx = 0;
    double fy = 0;
    double cx = 0;
    double cy = 0;

    bool operator==(const Intrinsics &) const = default;
};

/// Camera-to-world rigid transform.
struct Pose
{
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    bool operator==(const Pose & other) const { return rotation == other.rotation && translation == other.translation; }
};

/// Metric Z-depth (distance along the camera forward axis) addressed in image pixels.
/// A sample that is <= 0 or non-finite is a hole.
class DepthSource
{
public:
    virtual ~DepthSource() = default;
    /// Depth at image pixel (px, py) for an image of `width` x `height`.
    virtual double at(double px, double py, int width, int height) const = 0;
    /// Every sample whose cell centre falls inside the pixel rectangle, holes included.
    virtual std::vector<double> samples_in(double x0, double y0, double x1, double y1, int width, int height) const = 0;
    virtual Json to_json() const = 0;
};

class ConstantDepth final : public DepthSource
{
public:
    explicit ConstantDepth(double depth) : depth_(depth) { }
    double at(double, double, int, int) const override { return depth_; }
    std::vector<double> samples_in(double, double, double, double, int, int) const override { return {depth_}; }
    Json to_json() const override;
    double depth() const noexcept { return depth_; }

private:
    double depth_;
};

/// Row-major grid that may be coarser than the image; pixels map to cells by scaling.
class DepthGrid final : public DepthSource
{
public:
    DepthGrid(int width, int height, std::vector<float> values);

    double at(double px, double py, int width, int height) const override;
    std::vector<double> samples_in(double x0, double y0, double x1, double y1, int width, int height) const override;
    Json to_json() const override;

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    float cell(int x, int y) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }

    /// Blob form: u32 width, u32 height, width*height float32, all little-endian.
    std::string encode() const;
    static DepthGrid decode(std::string_view bytes);

private:
    int width_;
    int height_;
    std::vector<float> values_;
};

struct CameraFrame
{
    AssetRef image;
    int width = 0;
    int height = 0;
    Intrinsics intrinsics;
    Pose pose;
    std::shared_ptr<const DepthSource> depth;
    double timestamp = 0;
};

/// Throws InvalidFrame unless intrinsics, principal point, rotation and depth are usable.
void validate_frame(const CameraFrame & frame);

enum class AnchorConfidence
{
    DepthHit,
    DepthFallback,
};

std::string_view to_string(AnchorConfidence value) noexcept;

struct WorldAnchor
{
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    NormBox source_box;
    double frame_timestamp = 0;
    AnchorConfidence confidence = AnchorConfidence::DepthHit;
};

struct RotationCue3D
{
    WorldAnchor pivot;
    Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
    RotationDirection direction = RotationDirection::Positive;
};

struct TranslationCue
{
    WorldAnchor start;
    WorldAnchor end;
};

using MotionCue = std::variant<RotationCue3D, TranslationCue>;

struct NormPoint
{
    double u = 0;
    double v = 0;

    bool operator==(const NormPoint &) const = default;
};

NormPoint box_center(const NormBox & box) noexcept;
/// Clamp into [0,1000] and reorder so min <= max.
NormBox normalize_box(int x0, int y0, int x1, int y1) noexcept;
/// Smallest box covering both.
NormBox box_union(const NormBox & a, const NormBox & b) noexcept;

/// Forward pinhole projection of a world point; the inverse of unproject.
/// Returns normalized coordinates and the Z-depth, nullopt behind the camera.
struct Projection
{
    NormPoint point;
    double depth = 0;
};
std::optional<Projection> project(const CameraFrame & frame, const Eigen::Vector3d & world);

/// Lift a normalized point to the world. Holes fall back to the median depth inside
/// `source_box` (a 5x5 pixel neighbourhood when the box has no area).
WorldAnchor unproject(const CameraFrame & frame, double u, double v, const NormBox & source_box);
WorldAnchor unproject(const CameraFrame & frame, double u, double v);
WorldAnchor unproject_box(const CameraFrame & frame, const NormBox & box);

/// Guidance frame: X right in the photo, Y physically up, Z toward the viewer.
Eigen::Vector3d guidance_axis_to_world(const CameraFrame & frame, Axis axis);

/// Rotation uses the answer's box as pivot. Translation takes its start from the
/// starttarget (else object) entry and its end from the endtarget entry.
MotionCue resolve_motion(const VizSpec & spec, const RotationAnswer & answer, const CameraFrame & frame);
MotionCue resolve_motion(const VizSpec & spec, const TransformAnswer & answer, const CameraFrame & frame);

Json to_json(const NormBox & box);
NormBox norm_box_from_json(const Json & value, const std::string & path);
Json to_json(const WorldAnchor & anchor);
Json to_json(const RotationCue3D & cue);
Json to_json(const Intrinsics & intrinsics);
Intrinsics intrinsics_from_json(const Json & value);
Json to_json(const Pose & pose);
Pose pose_from_json(const Json & value);

/// Synthetic scene: {width, height, intrinsics:{fx,fy,cx,cy}, pose:{rotation:[9, row-major], translation:[3]},
/// depth:{constant:d} | {width, height, values:[...]}}. The image reference is supplied separately.
CameraFrame frame_from_json(const Json & value);
Json to_json(const CameraFrame & frame);

/// Default camera for clients that send no calibration: fx = fy = width, centred principal
/// point, identity pose and a flat 0.6 m depth plane.
CameraFrame default_frame(int width, int height);

} // namespace xrguide

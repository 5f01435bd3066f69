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

#include "xrguide/spatial.hpp"

#include "xrguide/error.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <bit>
#include <cmath>

namespace xrguide
{

namespace
{

bool valid_depth(double d) noexcept
{
    return std::isfinite(d) && d > 0.0;
}

double median(std::vector<double> values)
{
    const auto mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double upper = values[mid];
    if (values.size() % 2 == 1)
        return upper;
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

Json vec_json(const Eigen::Vector3d & v)
{
    return Json::array({v.x(), v.y(), v.z()});
}

double number_at(const Json & object, const char * key, const std::string & path)
{
    auto it = object.find(key);
    if (it == object.end() || !it->is_number())
        throw Error(ErrorCode::InvalidFrame, "expected number", path + "." + key);
    return it->get<double>();
}

void put_u32(std::string & out, std::uint32_t value)
{
    for (int shift = 0; shift < 32; shift += 8)
        out.push_back(static_cast<char>((value >> shift) & 0xFFu));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t offset)
{
    std::uint32_t value = 0;
    for (int i = 0; i < 4; ++i)
        value |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
    return value;
}

} // namespace

Json ConstantDepth::to_json() const
{
    return Json{{"constant", depth_}};
}

DepthGrid::DepthGrid(int width, int height, std::vector<float> values) : width_(width), height_(height), values_(std::move(values))
{
    if (width_ <= 0 || height_ <= 0 || values_.size() != static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_))
        throw Error(ErrorCode::InvalidFrame, "depth grid size does not match its dimensions");
}

double DepthGrid::at(double px, double py, int width, int height) const
{
    const int x = std::clamp(static_cast<int>(std::floor(px * width_ / width)), 0, width_ - 1);
    const int y = std::clamp(static_cast<int>(std::floor(py * height_ / height)), 0, height_ - 1);
    return cell(x, y);
}

std::vector<double> DepthGrid::samples_in(double x0, double y0, double x1, double y1, int width, int height) const
{
    std::vector<double> out;
    const double sx = static_cast<double>(width) / width_;
    const double sy = static_cast<double>(height) / height_;
    for (int y = 0; y < height_; ++y)
    {
        const double cy = (y + 0.5) * sy;
        if (cy < y0 || cy > y1)
            continue;
        for (int x = 0; x < width_; ++x)
        {
            const double cx = (x + 0.5) * sx;
            if (cx >= x0 && cx <= x1)
                out.push_back(cell(x, y));
        }
    }
    return out;
}

Json DepthGrid::to_json() const
{
    return Json{{"width", width_}, {"height", height_}, {"values", values_}};
}

std::string DepthGrid::encode() const
{
    std::string out;
    out.reserve(8 + values_.size() * 4);
    put_u32(out, static_cast<std::uint32_t>(width_));
    put_u32(out, static_cast<std::uint32_t>(height_));
    for (float v : values_)
        put_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

DepthGrid DepthGrid::decode(std::string_view bytes)
{
    if (bytes.size() < 8)
        throw Error(ErrorCode::PayloadInvalid, "depth blob shorter than its header");
    const auto w = get_u32(bytes, 0);
    const auto h = get_u32(bytes, 4);
    if (w == 0 || h == 0 || w > 1u << 14 || h > 1u << 14)
        throw Error(ErrorCode::PayloadInvalid, "depth blob has implausible dimensions");
    const std::size_t count = static_cast<std::size_t>(w) * h;
    if (bytes.size() != 8 + count * 4)
        throw Error(ErrorCode::PayloadInvalid, "depth blob length does not match " + std::to_string(w) + "x" + std::to_string(h));
    std::vector<float> values(count);
    for (std::size_t i = 0; i < count; ++i)
        values[i] = std::bit_cast<float>(get_u32(bytes, 8 + i * 4));
    return DepthGrid(static_cast<int>(w), static_cast<int>(h), std::move(values));
}

void validate_frame(const CameraFrame & frame)
{
    const auto & k = frame.intrinsics;
    if (frame.width <= 0 || frame.height <= 0)
        throw Error(ErrorCode::InvalidFrame, "image size must be positive");
    if (!(std::isfinite(k.fx) && std::isfinite(k.fy) && k.fx > 0 && k.fy > 0))
        throw Error(ErrorCode::InvalidFrame, "focal lengths must be positive", "intrinsics");
    if (!(k.cx >= 0 && k.cx < frame.width && k.cy >= 0 && k.cy < frame.height))
        throw Error(ErrorCode::InvalidFrame, "principal point outside the image", "intrinsics");
    const auto & r = frame.pose.rotation;
    if (!r.allFinite() || !frame.pose.translation.allFinite())
        throw Error(ErrorCode::InvalidFrame, "pose is not finite", "pose");
    if ((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6 || std::abs(r.determinant() - 1.0) > 1e-6)
        throw Error(ErrorCode::InvalidFrame, "rotation is not a proper orthonormal matrix", "pose.rotation");
    if (!frame.depth)
        throw Error(ErrorCode::InvalidFrame, "frame carries no depth", "depth");
}

std::string_view to_string(AnchorConfidence value) noexcept
{
    return value == AnchorConfidence::DepthHit ? "DepthHit" : "DepthFallback";
}

NormPoint box_center(const NormBox & box) noexcept
{
    return {(box.x_min + box.x_max) / 2.0, (box.y_min + box.y_max) / 2.0};
}

NormBox normalize_box(int x0, int y0, int x1, int y1) noexcept
{
    auto clamp = [](int v) { return std::clamp(v, 0, kNormMax); };
    return {clamp(std::min(x0, x1)), clamp(std::min(y0, y1)), clamp(std::max(x0, x1)), clamp(std::max(y0, y1))};
}

NormBox box_union(const NormBox & a, const NormBox & b) noexcept
{
    return normalize_box(std::min(a.x_min, b.x_min), std::min(a.y_min, b.y_min), std::max(a.x_max, b.x_max), std::max(a.y_max, b.y_max));
}

std::optional<Projection> project(const CameraFrame & frame, const Eigen::Vector3d & world)
{
    const Eigen::Vector3d cam = frame.pose.rotation.transpose() * (world - frame.pose.translation);
    if (cam.z() <= 0)
        return std::nullopt;
    const auto & k = frame.intrinsics;
    const double px = k.fx * cam.x() / cam.z() + k.cx;
    const double py = k.fy * cam.y() / cam.z() + k.cy;
    return Projection{{px / frame.width * kNormMax, py / frame.height * kNormMax}, cam.z()};
}

WorldAnchor unproject(const CameraFrame & frame, double u, double v, const NormBox & source_box)
{
    validate_frame(frame);
    const double px = u / kNormMax * frame.width;
    const double py = v / kNormMax * frame.height;

    WorldAnchor anchor;
    anchor.source_box = source_box;
    anchor.frame_timestamp = frame.timestamp;

    double depth = frame.depth->at(px, py, frame.width, frame.height);
    if (!valid_depth(depth))
    {
        std::vector<double> samples;
        if (source_box.x_min == source_box.x_max || source_box.y_min == source_box.y_max)
        {
            for (int dy = -2; dy <= 2; ++dy)
                for (int dx = -2; dx <= 2; ++dx)
                    samples.push_back(frame.depth->at(px + dx, py + dy, frame.width, frame.height));
        }
        else
        {
            const double scale_x = static_cast<double>(frame.width) / kNormMax;
            const double scale_y = static_cast<double>(frame.height) / kNormMax;
            samples = frame.depth->samples_in(source_box.x_min * scale_x, source_box.y_min * scale_y, source_box.x_max * scale_x,
                                              source_box.y_max * scale_y, frame.width, frame.height);
        }
        std::erase_if(samples, [](double d) { return !valid_depth(d); });
        if (samples.empty())
            throw Error(ErrorCode::NoDepthAvailable, "no valid depth sample inside the box");
        depth = median(std::move(samples));
        anchor.confidence = AnchorConfidence::DepthFallback;
    }

    const auto & k = frame.intrinsics;
    const Eigen::Vector3d cam(depth * (px - k.cx) / k.fx, depth * (py - k.cy) / k.fy, depth);
    anchor.position = frame.pose.rotation * cam + frame.pose.translation;
    return anchor;
}

WorldAnchor unproject(const CameraFrame & frame, double u, double v)
{
    const int iu = static_cast<int>(std::lround(u));
    const int iv = static_cast<int>(std::lround(v));
    return unproject(frame, u, v, normalize_box(iu, iv, iu, iv));
}

WorldAnchor unproject_box(const CameraFrame & frame, const NormBox & box)
{
    const auto c = box_center(box);
    return unproject(frame, c.u, c.v, box);
}

Eigen::Vector3d guidance_axis_to_world(const CameraFrame & frame, Axis axis)
{
    Eigen::Vector3d camera;
    switch (axis)
    {
        case Axis::X:
            camera = Eigen::Vector3d::UnitX();
            break;
        case Axis::Y:
            camera = -Eigen::Vector3d::UnitY();
            break;
        case Axis::Z:
            camera = -Eigen::Vector3d::UnitZ();
            break;
    }
    return (frame.pose.rotation * camera).normalized();
}

MotionCue resolve_motion(const VizSpec & spec, const RotationAnswer & answer, const CameraFrame & frame)
{
    if (!spec.needs_rotation || spec.needs_translation)
        throw Error(ErrorCode::SchemaViolation, "rotation answer for a spec that is not rotation-only", "viz.needsRotation");
    RotationCue3D cue;
    cue.pivot = unproject_box(frame, answer.pos);
    cue.axis = guidance_axis_to_world(frame, answer.axis);
    cue.direction = answer.direction;
    return cue;
}

MotionCue resolve_motion(const VizSpec & spec, const TransformAnswer & answer, const CameraFrame & frame)
{
    if (!spec.needs_translation || spec.needs_rotation)
        throw Error(ErrorCode::SchemaViolation, "transform answer for a spec that is not translation-only", "viz.needsTranslation");
    const TransformEntry * start = nullptr;
    const TransformEntry * fallback = nullptr;
    const TransformEntry * end = nullptr;
    for (const auto & entry : answer.entries)
    {
        if (entry.kind == TransformKind::StartTarget && !start)
            start = &entry;
        else if (entry.kind == TransformKind::Object && !fallback)
            fallback = &entry;
        else if (entry.kind == TransformKind::EndTarget && !end)
            end = &entry;
    }
    if (!start)
        start = fallback;
    if (!end)
        throw Error(ErrorCode::MissingEndTarget, "translation needs an endtarget box");
    if (!start)
        throw Error(ErrorCode::MissingAnchor, "translation needs a starttarget or object box", "target");
    return TranslationCue{unproject_box(frame, start->pos), unproject_box(frame, end->pos)};
}

Json to_json(const NormBox & box)
{
    return Json::array({box.x_min, box.y_min, box.x_max, box.y_max});
}

NormBox norm_box_from_json(const Json & value, const std::string & path)
{
    if (!value.is_array() || value.size() != 4)
        throw Error(ErrorCode::SchemaViolation, "expected [x_min, y_min, x_max, y_max]", path);
    std::array<int, 4> v{};
    for (std::size_t i = 0; i < 4; ++i)
    {
        if (!value[i].is_number_integer())
            throw Error(ErrorCode::SchemaViolation, "expected integer", path + "[" + std::to_string(i) + "]");
        const auto n = value[i].get<long long>();
        if (n < 0 || n > kNormMax)
            throw Error(ErrorCode::OutOfRange, "coordinate outside [0,1000]", path + "[" + std::to_string(i) + "]");
        v[i] = static_cast<int>(n);
    }
    NormBox box{v[0], v[1], v[2], v[3]};
    if (!box.valid())
        throw Error(ErrorCode::SchemaViolation, "min exceeds max", path);
    return box;
}

Json to_json(const WorldAnchor & anchor)
{
    return Json{{"position", vec_json(anchor.position)},
                {"sourceBox", to_json(anchor.source_box)},
                {"frameTimestamp", anchor.frame_timestamp},
                {"confidence", to_string(anchor.confidence)}};
}

Json to_json(const RotationCue3D & cue)
{
    return Json{{"pivot", to_json(cue.pivot)}, {"axis", vec_json(cue.axis)}, {"direction", to_string(cue.direction)}};
}

Json to_json(const Intrinsics & k)
{
    return Json{{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}};
}

Intrinsics intrinsics_from_json(const Json & value)
{
    if (!value.is_object())
        throw Error(ErrorCode::InvalidFrame, "expected object", "intrinsics");
    return {number_at(value, "fx", "intrinsics"), number_at(value, "fy", "intrinsics"), number_at(value, "cx", "intrinsics"),
            number_at(value, "cy", "intrinsics")};
}

Json to_json(const Pose & pose)
{
    Json rotation = Json::array();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            rotation.push_back(pose.rotation(r, c));
    return Json{{"rotation", rotation}, {"translation", vec_json(pose.translation)}};
}

Pose pose_from_json(const Json & value)
{
    if (!value.is_object())
        throw Error(ErrorCode::InvalidFrame, "expected object", "pose");
    const auto rotation = value.find("rotation");
    const auto translation = value.find("translation");
    if (rotation == value.end() || !rotation->is_array() || rotation->size() != 9)
        throw Error(ErrorCode::InvalidFrame, "expected 9 row-major values", "pose.rotation");
    if (translation == value.end() || !translation->is_array() || translation->size() != 3)
        throw Error(ErrorCode::InvalidFrame, "expected 3 values", "pose.translation");
    Pose pose;
    for (int i = 0; i < 9; ++i)
    {
        if (!(*rotation)[i].is_number())
            throw Error(ErrorCode::InvalidFrame, "expected number", "pose.rotation[" + std::to_string(i) + "]");
        pose.rotation(i / 3, i % 3) = (*rotation)[i].get<double>();
    }
    for (int i = 0; i < 3; ++i)
    {
        if (!(*translation)[i].is_number())
            throw Error(ErrorCode::InvalidFrame, "expected number", "pose.translation[" + std::to_string(i) + "]");
        pose.translation[i] = (*translation)[i].get<double>();
    }
    return pose;
}

CameraFrame frame_from_json(const Json & value)
{
    if (!value.is_object())
        throw Error(ErrorCode::InvalidFrame, "expected object");
    CameraFrame frame;
    frame.width = static_cast<int>(number_at(value, "width", "$"));
    frame.height = static_cast<int>(number_at(value, "height", "$"));
    frame.intrinsics = intrinsics_from_json(value.value("intrinsics", Json()));
    frame.pose = pose_from_json(value.value("pose", Json()));
    if (auto it = value.find("timestamp"); it != value.end() && it->is_number())
        frame.timestamp = it->get<double>();
    if (auto it = value.find("image"); it != value.end() && it->is_object())
        frame.image = asset_from_json(*it);

    const auto depth = value.find("depth");
    if (depth == value.end() || !depth->is_object())
        throw Error(ErrorCode::InvalidFrame, "expected depth object", "depth");
    if (auto constant = depth->find("constant"); constant != depth->end())
    {
        if (!constant->is_number())
            throw Error(ErrorCode::InvalidFrame, "expected number", "depth.constant");
        frame.depth = std::make_shared<ConstantDepth>(constant->get<double>());
    }
    else
    {
        const auto values = depth->find("values");
        if (values == depth->end() || !values->is_array())
            throw Error(ErrorCode::InvalidFrame, "expected values array", "depth.values");
        std::vector<float> cells;
        cells.reserve(values->size());
        for (const auto & v : *values)
            cells.push_back(v.is_number() ? v.get<float>() : 0.0f);
        frame.depth = std::make_shared<DepthGrid>(static_cast<int>(number_at(*depth, "width", "depth")),
                                                  static_cast<int>(number_at(*depth, "height", "depth")), std::move(cells));
    }
    validate_frame(frame);
    return frame;
}

Json to_json(const CameraFrame & frame)
{
    Json out{{"width", frame.width},
             {"height", frame.height},
             {"intrinsics", to_json(frame.intrinsics)},
             {"pose", to_json(frame.pose)},
             {"timestamp", frame.timestamp}};
    if (!frame.image.digest.empty())
        out["image"] = to_json(frame.image);
    out["depth"] = frame.depth ? frame.depth->to_json() : Json();
    return out;
}

CameraFrame default_frame(int width, int height)
{
    CameraFrame frame;
    frame.width = width;
    frame.height = height;
    frame.intrinsics = {static_cast<double>(width), static_cast<double>(width), width / 2.0, height / 2.0};
    frame.depth = std::make_shared<ConstantDepth>(0.6);
    return frame;
}

} // namespace xrguide

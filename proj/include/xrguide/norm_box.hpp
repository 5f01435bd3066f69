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

#include <array>

namespace xrguide
{

inline constexpr int kNormMax = 1000;

/// Axis-aligned box in normalized image coordinates, 0..1000 inclusive on both axes.
struct NormBox
{
    int x_min = 0;
    int y_min = 0;
    int x_max = 0;
    int y_max = 0;

    bool valid() const noexcept
    {
        return 0 <= x_min && x_min <= x_max && x_max <= kNormMax && 0 <= y_min && y_min <= y_max && y_max <= kNormMax;
    }
    std::array<int, 4> as_array() const noexcept { return {x_min, y_min, x_max, y_max}; }

    bool operator==(const NormBox &) const = default;
};

} // namespace xrguide

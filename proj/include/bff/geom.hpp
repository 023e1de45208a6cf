// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>

namespace bff {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        const double n = norm();
        return {x / n, y / n, z / n};
    }
    bool finite() const {
        return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
    }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

/// Right-handed orthonormal triple attached to a vessel segment.
/// `d` points along the segment axis, `e1`/`e2` span the cross section.
struct Frame {
    Vec3 d{0, 0, 1};
    Vec3 e1{1, 0, 0};
    Vec3 e2{0, 1, 0};

    // Builds a frame around an axis direction; the transverse pair is an
    // arbitrary but deterministic completion.
    static Frame around(const Vec3& axis) {
        Frame f;
        f.d = axis.normalized();
        Vec3 ref = std::fabs(f.d.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
        f.e1 = (ref - f.d * ref.dot(f.d)).normalized();
        f.e2 = f.d.cross(f.e1);
        return f;
    }

    double orthonormality_error() const {
        double e = 0.0;
        e = std::max(e, std::fabs(d.norm() - 1.0));
        e = std::max(e, std::fabs(e1.norm() - 1.0));
        e = std::max(e, std::fabs(e2.norm() - 1.0));
        e = std::max(e, std::fabs(d.dot(e1)));
        e = std::max(e, std::fabs(d.dot(e2)));
        e = std::max(e, std::fabs(e1.dot(e2)));
        return e;
    }

    // New frame whose axis is tilted away from d by `elevation`, in the
    // transverse direction selected by `azimuth`. The transverse pair is
    // re-orthogonalized against the new axis (parallel transport flavour).
    Frame tilted(double azimuth, double elevation) const {
        Frame out;
        const Vec3 t = e1 * std::cos(azimuth) + e2 * std::sin(azimuth);
        out.d = (d * std::cos(elevation) + t * std::sin(elevation)).normalized();
        Vec3 ref = e1 - out.d * e1.dot(out.d);
        if (ref.norm() < 1e-9)
            ref = e2 - out.d * e2.dot(out.d);
        out.e1 = ref.normalized();
        out.e2 = out.d.cross(out.e1);
        return out;
    }
};

}  // namespace bff

#include "roadrl/geometry.hpp"

#include <algorithm>

namespace roadrl {

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
    const Vec2 ab = b - a;
    const double len2 = dot(ab, ab);
    if (len2 == 0.0) {
        return distance(p, a);
    }
    const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
    return distance(p, a + ab * t);
}

std::array<Vec2, 4> OrientedRect::corners() const {
    const Vec2 fwd = unit_from_angle(heading) * (0.5 * length);
    const Vec2 left = Vec2{-std::sin(heading), std::cos(heading)} * (0.5 * width);
    return {center + fwd + left, center - fwd + left, center - fwd - left, center + fwd - left};
}

bool OrientedRect::contains(Vec2 p) const {
    const Vec2 d = p - center;
    const double c = std::cos(heading);
    const double s = std::sin(heading);
    const double along = d.x * c + d.y * s;
    const double across = -d.x * s + d.y * c;
    return std::abs(along) <= 0.5 * length && std::abs(across) <= 0.5 * width;
}

namespace {

// Projects both corner sets onto `axis`; true when the intervals are disjoint.
bool separated_on(Vec2 axis, const std::array<Vec2, 4>& a, const std::array<Vec2, 4>& b) {
    double a_min = dot(axis, a[0]);
    double a_max = a_min;
    double b_min = dot(axis, b[0]);
    double b_max = b_min;
    for (int i = 1; i < 4; ++i) {
        const double pa = dot(axis, a[i]);
        const double pb = dot(axis, b[i]);
        a_min = std::min(a_min, pa);
        a_max = std::max(a_max, pa);
        b_min = std::min(b_min, pb);
        b_max = std::max(b_max, pb);
    }
    return a_max < b_min || b_max < a_min;
}

}  // namespace

bool intersects(const OrientedRect& a, const OrientedRect& b) {
    const auto ca = a.corners();
    const auto cb = b.corners();
    const std::array<Vec2, 4> axes{unit_from_angle(a.heading), unit_from_angle(a.heading + std::numbers::pi / 2),
                                   unit_from_angle(b.heading), unit_from_angle(b.heading + std::numbers::pi / 2)};
    for (const Vec2& axis : axes) {
        if (separated_on(axis, ca, cb)) {
            return false;
        }
    }
    return true;
}

}  // namespace roadrl

#pragma once

#include <array>
#include <cmath>
#include <numbers>

namespace roadrl {

struct Vec2 {
    double x{0.0};
    double y{0.0};

    constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
    constexpr bool operator==(const Vec2&) const = default;
};

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }
inline double distance(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

inline Vec2 unit_from_angle(double angle) { return {std::cos(angle), std::sin(angle)}; }

/// Wraps an angle into (-pi, pi].
inline double normalize_angle(double angle) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double a = std::fmod(angle, two_pi);
    if (a <= -std::numbers::pi) {
        a += two_pi;
    } else if (a > std::numbers::pi) {
        a -= two_pi;
    }
    return a;
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b);

/// Rectangle centred at `center`, its length axis pointing along `heading`.
struct OrientedRect {
    Vec2 center;
    double heading{0.0};
    double length{0.0};
    double width{0.0};

    /// Counter-clockwise, starting at the front-left corner.
    std::array<Vec2, 4> corners() const;
    bool contains(Vec2 p) const;
};

/// Separating-axis test. Touching boundaries count as intersecting.
bool intersects(const OrientedRect& a, const OrientedRect& b);

}  // namespace roadrl

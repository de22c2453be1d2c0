#pragma once

#include <algorithm>
#include <cmath>

namespace rfio {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    constexpr Vec2() = default;
    constexpr Vec2(double x_, double y_) : x(x_), y(y_) {}

    constexpr Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    constexpr Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    constexpr Vec2 operator-() const { return {-x, -y}; }
    constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
    constexpr Vec2 operator/(double s) const { return {x / s, y / s}; }
    Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }
    Vec2& operator-=(const Vec2& o) { x -= o.x; y -= o.y; return *this; }
    Vec2& operator*=(double s) { x *= s; y *= s; return *this; }
    constexpr bool operator==(const Vec2&) const = default;
};

constexpr Vec2 operator*(double s, const Vec2& v) { return {s * v.x, s * v.y}; }

inline constexpr Vec2 e1{1.0, 0.0};
inline constexpr Vec2 e2{0.0, 1.0};

constexpr double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(const Vec2& a, const Vec2& b) { return a.x * b.y - a.y * b.x; }
inline double norm(const Vec2& v) { return std::hypot(v.x, v.y); }
constexpr double norm2(const Vec2& v) { return v.x * v.x + v.y * v.y; }
inline double max_norm(const Vec2& v) { return std::max(std::abs(v.x), std::abs(v.y)); }
inline double dist(const Vec2& a, const Vec2& b) { return norm(a - b); }

// Reflection across the e2 axis (negates the e1 component).
constexpr Vec2 reflect_y(const Vec2& v) { return {-v.x, v.y}; }
// Reflection across the e1 axis.
constexpr Vec2 reflect_x(const Vec2& v) { return {v.x, -v.y}; }

inline Vec2 unit_at(double angle) { return {std::cos(angle), std::sin(angle)}; }

}  // namespace rfio

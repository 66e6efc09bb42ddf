#pragma once

#include <cmath>

namespace pfinv {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  Point2& operator+=(const Point2& o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  Point2& operator-=(const Point2& o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  Point2& operator*=(double s) {
    x *= s;
    y *= s;
    return *this;
  }
  friend Point2 operator+(Point2 a, const Point2& b) { return a += b; }
  friend Point2 operator-(Point2 a, const Point2& b) { return a -= b; }
  friend Point2 operator*(Point2 a, double s) { return a *= s; }
  friend Point2 operator*(double s, Point2 a) { return a *= s; }
  friend Point2 operator/(Point2 a, double s) { return a *= 1.0 / s; }
  friend bool operator==(const Point2&, const Point2&) = default;
};

inline double dot(const Point2& a, const Point2& b) { return a.x * b.x + a.y * b.y; }
inline double cross(const Point2& a, const Point2& b) { return a.x * b.y - a.y * b.x; }
inline double norm(const Point2& a) { return std::hypot(a.x, a.y); }
inline double distance(const Point2& a, const Point2& b) { return norm(a - b); }

/// Twice the signed area of (a, b, c); positive for counterclockwise order.
inline double orient(const Point2& a, const Point2& b, const Point2& c) {
  return cross(b - a, c - a);
}

}  // namespace pfinv

/**
 * @file geometry.hpp
 * @brief Axis-aligned boxes in pixel coordinates
 */
#pragma once

namespace falce {

/// Box with corners (x1, y1) inclusive and (x2, y2) exclusive; valid iff x1 < x2 and y1 < y2.
struct BBox {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;

    bool valid() const noexcept { return x1 < x2 && y1 < y2; }
    double width() const noexcept { return x2 - x1; }
    double height() const noexcept { return y2 - y1; }
    double area() const noexcept { return valid() ? width() * height() : 0.0; }

    friend bool operator==(const BBox&, const BBox&) = default;
};

/// Throws InvalidArgument unless the corners describe a valid box.
BBox make_box(double x1, double y1, double x2, double y2);

}  // namespace falce

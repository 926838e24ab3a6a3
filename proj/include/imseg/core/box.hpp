#pragma once

namespace imseg {

/// Axis-aligned prompt box in normalized image coordinates: x is the column
/// axis, y the row axis, both in [0, 1] with (0, 0) the top-left corner.
struct BoundingBox {
    double x0 = 0.0;
    double y0 = 0.0;
    double x1 = 1.0;
    double y1 = 1.0;

    double width() const noexcept { return x1 - x0; }
    double height() const noexcept { return y1 - y0; }
    bool contains(const BoundingBox& o) const noexcept {
        return x0 <= o.x0 && y0 <= o.y0 && x1 >= o.x1 && y1 >= o.y1;
    }
    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

} // namespace imseg

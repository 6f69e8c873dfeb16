#include "falce/error.hpp"
#include "falce/geometry.hpp"

#include <cmath>
#include <string>

namespace falce {

int exit_code(ExitStatus s) noexcept { return static_cast<int>(s); }

BBox make_box(double x1, double y1, double x2, double y2) {
    BBox b{x1, y1, x2, y2};
    if (!std::isfinite(x1) || !std::isfinite(y1) || !std::isfinite(x2) || !std::isfinite(y2) ||
        !b.valid()) {
        throw InvalidArgument("invalid box (" + std::to_string(x1) + "," + std::to_string(y1) +
                              "," + std::to_string(x2) + "," + std::to_string(y2) +
                              "): requires x1 < x2 and y1 < y2");
    }
    return b;
}

}  // namespace falce

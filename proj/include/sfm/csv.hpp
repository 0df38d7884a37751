#pragma once

#include <cstdio>
#include <string>

namespace sfm::csvfmt {

/// Stable shortest-ish decimal rendering; identical input bits give
/// identical text, which the deterministic-log guarantees rely on.
inline std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

/// Lossless rendering for files that are read back.
inline std::string num_exact(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace sfm::csvfmt

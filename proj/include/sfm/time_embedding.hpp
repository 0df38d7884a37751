#pragma once

#include <cmath>
#include <stdexcept>

#include "sfm/types.hpp"

namespace sfm {

/// H/2 angular frequencies in strictly decreasing geometric progression,
/// omega_k = 10000^(-k / (H/2)), the transformer convention.
inline Vec time_frequencies(int H) {
    if (H < 2 || H % 2 != 0) throw std::invalid_argument("time embedding width must be even, >= 2");
    const int half = H / 2;
    Vec w(half);
    for (int k = 0; k < half; ++k)
        w[k] = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(half));
    return w;
}

/// Sinusoidal timestep embedding, interleaved [sin(w_0 t), cos(w_0 t), ...].
/// Deterministic in t; every entry lies in [-1, 1].
inline Vec embed_time(double t, int H) {
    const Vec w = time_frequencies(H);
    Vec e(H);
    for (int k = 0; k < H / 2; ++k) {
        e[2 * k] = std::sin(w[k] * t);
        e[2 * k + 1] = std::cos(w[k] * t);
    }
    return e;
}

}  // namespace sfm

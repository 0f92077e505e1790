#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "mtlhg/raster.hpp"
#include "mtlhg/tensor.hpp"

namespace mtlhg {

/// One dataset record: a 3-channel image in [0,1] plus its ground truth.
struct Sample {
    Tensor image;  // 1 x 3 x size x size
    LabelMap labels;
    InstanceMap instances;
};

namespace detail {

// Distinct, stable per-class colors: golden-ratio hue stepping in HSV.
inline void class_color(int cls, double rgb[3]) {
    if (cls == 0) {
        rgb[0] = rgb[1] = rgb[2] = 0.15;
        return;
    }
    double hue = cls * 0.61803398874989485;
    hue -= std::floor(hue);
    const double s = 0.65, v = 0.85;
    const double h6 = hue * 6.0;
    const int sector = static_cast<int>(h6) % 6;
    const double f = h6 - std::floor(h6);
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    switch (sector) {
        case 0: rgb[0] = v; rgb[1] = t; rgb[2] = p; break;
        case 1: rgb[0] = q; rgb[1] = v; rgb[2] = p; break;
        case 2: rgb[0] = p; rgb[1] = v; rgb[2] = t; break;
        case 3: rgb[0] = p; rgb[1] = q; rgb[2] = v; break;
        case 4: rgb[0] = t; rgb[1] = p; rgb[2] = v; break;
        default: rgb[0] = v; rgb[1] = p; rgb[2] = q; break;
    }
}

}  // namespace detail

/// Deterministic synthetic-shapes sampler: 2-6 rectangles, circles, and
/// triangles per image, painted in order over a textured background. Each
/// shape carries a unique instance id; classes cycle from a random start so
/// every shape class shows up often across a dataset. Per-sample streams are
/// derived from (seed, index), so samples are independent of `count`.
inline std::vector<Sample> synth_shapes(std::uint64_t seed, int count, int size, int n_classes) {
    if (n_classes < 2) throw ConfigError("synth_shapes: need at least background plus one shape class");
    if (n_classes > 256) throw ConfigError("synth_shapes: at most 256 classes");
    if (count < 0) throw ConfigError("synth_shapes: negative sample count");
    if (size < 16) {
        throw ConfigError("synth_shapes: image size " + std::to_string(size) +
                          " too small to place shapes (minimum 16)");
    }

    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(count));
    const int max_half = std::max(3, size / 5);
    constexpr double noise_amp = 0.22;
    constexpr double color_jitter = 0.12;  // per-instance, keeps colors class-correlated but ambiguous

    for (int i = 0; i < count; ++i) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
        Sample s{Tensor(1, 3, size, size), LabelMap(size, size, n_classes), InstanceMap(size, size)};

        const int shapes = 2 + static_cast<int>(rng.uniform_int(5));
        const int first_class = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n_classes - 1)));
        std::vector<std::array<double, 3>> inst_jitter(static_cast<std::size_t>(shapes + 1), {0, 0, 0});
        for (int j = 0; j < shapes; ++j) {
            const std::uint8_t cls =
                static_cast<std::uint8_t>(1 + (first_class + j) % (n_classes - 1));
            const std::uint16_t inst = static_cast<std::uint16_t>(j + 1);
            const int kind = static_cast<int>(rng.uniform_int(3));
            const int hw = 2 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(max_half - 1)));
            const int hh = 2 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(max_half - 1)));
            const int cx = hw + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(size - 2 * hw)));
            const int cy = hh + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(size - 2 * hh)));
            for (int ch = 0; ch < 3; ++ch) {
                inst_jitter[static_cast<std::size_t>(inst)][static_cast<std::size_t>(ch)] =
                    rng.uniform(-color_jitter, color_jitter);
            }

            auto paint = [&](int x, int y) {
                s.labels.at(x, y) = cls;
                s.instances.at(x, y) = inst;
            };
            if (kind == 0) {  // axis-aligned rectangle
                for (int y = cy - hh; y <= cy + hh; ++y)
                    for (int x = cx - hw; x <= cx + hw; ++x) paint(x, y);
            } else if (kind == 1) {  // circle of radius hw
                for (int y = cy - hw; y <= cy + hw; ++y) {
                    if (y < 0 || y >= size) continue;
                    for (int x = cx - hw; x <= cx + hw; ++x) {
                        if (x < 0 || x >= size) continue;
                        const int dx = x - cx, dy = y - cy;
                        if (dx * dx + dy * dy <= hw * hw) paint(x, y);
                    }
                }
            } else {  // isoceles triangle, apex up
                for (int y = cy - hh; y <= cy + hh; ++y) {
                    const double t = static_cast<double>(y - (cy - hh)) / (2 * hh);
                    const int half = static_cast<int>(t * hw);
                    for (int x = cx - half; x <= cx + half; ++x) {
                        if (x >= 0 && x < size) paint(x, y);
                    }
                }
            }
        }

        // class-correlated colors, per-instance jitter, seeded noise
        double rgb[3];
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                detail::class_color(s.labels.at(x, y), rgb);
                const auto& jit = inst_jitter[s.instances.at(x, y)];
                for (int ch = 0; ch < 3; ++ch) {
                    const double v = rgb[ch] + jit[static_cast<std::size_t>(ch)] +
                                     noise_amp * (rng.uniform01() - 0.5);
                    s.image.at(0, ch, y, x) = std::clamp(v, 0.0, 1.0);
                }
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace mtlhg

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtlhg/common.hpp"

namespace mtlhg {

/// Per-pixel class ids in [0, n_classes). Class 0 is the background class by
/// convention throughout (synthesis, contours, evaluation).
struct LabelMap {
    int w = 0;
    int h = 0;
    int n_classes = 0;
    std::vector<std::uint8_t> ids;

    LabelMap() = default;
    LabelMap(int width, int height, int classes)
        : w(width), h(height), n_classes(classes),
          ids(static_cast<std::size_t>(width) * height, 0) {}

    std::uint8_t& at(int x, int y) { return ids[static_cast<std::size_t>(y) * w + x]; }
    std::uint8_t at(int x, int y) const { return ids[static_cast<std::size_t>(y) * w + x]; }

    void validate() const {
        for (std::uint8_t v : ids) {
            if (v >= n_classes) {
                throw DimensionError("label map holds class id " + std::to_string(v) +
                                     " >= class count " + std::to_string(n_classes));
            }
        }
    }
};

/// Per-pixel instance ids; 0 marks background. Id values carry no order
/// semantics.
struct InstanceMap {
    int w = 0;
    int h = 0;
    std::vector<std::uint16_t> ids;

    InstanceMap() = default;
    InstanceMap(int width, int height)
        : w(width), h(height), ids(static_cast<std::size_t>(width) * height, 0) {}

    std::uint16_t& at(int x, int y) { return ids[static_cast<std::size_t>(y) * w + x]; }
    std::uint16_t at(int x, int y) const { return ids[static_cast<std::size_t>(y) * w + x]; }
};

/// Boolean raster marking boundary pixels.
struct EdgeMap {
    int w = 0;
    int h = 0;
    std::vector<std::uint8_t> mask;

    EdgeMap() = default;
    EdgeMap(int width, int height)
        : w(width), h(height), mask(static_cast<std::size_t>(width) * height, 0) {}

    std::uint8_t& at(int x, int y) { return mask[static_cast<std::size_t>(y) * w + x]; }
    std::uint8_t at(int x, int y) const { return mask[static_cast<std::size_t>(y) * w + x]; }

    std::int64_t count() const {
        std::int64_t n = 0;
        for (auto v : mask) n += v ? 1 : 0;
        return n;
    }
};

struct DistanceTransformConfig {
    int truncation = 20;  // R, in pixels
    int bins = 6;         // K

    void validate() const {
        if (truncation < 1) throw ConfigError("distance transform truncation must be >= 1");
        if (bins < 2) throw ConfigError("distance transform bin count must be >= 2");
    }
};

/// Per-pixel bin index in [0, K) over the uniform partition of [0, R], plus
/// the representative value (lower edge) of each bin. Background pixels sit
/// in bin 0 because their truncated distance is 0.
struct QuantizedDistanceMap {
    int w = 0;
    int h = 0;
    int bins = 0;
    std::vector<std::uint8_t> bin_of;
    std::vector<double> bin_value;  // r_n, the bin lower edges

    QuantizedDistanceMap() = default;
    QuantizedDistanceMap(int width, int height, int k)
        : w(width), h(height), bins(k), bin_of(static_cast<std::size_t>(width) * height, 0),
          bin_value(static_cast<std::size_t>(k), 0.0) {}

    std::uint8_t at(int x, int y) const { return bin_of[static_cast<std::size_t>(y) * w + x]; }

    /// View of the bin indices as a K-class label map.
    LabelMap as_labels() const {
        LabelMap lm(w, h, bins);
        lm.ids = bin_of;
        return lm;
    }
};

/// Median-frequency balancing weights. Classes absent from the whole dataset
/// carry weight 0 and are excluded from the median.
struct ClassWeights {
    std::vector<double> weight;     // tau_c, 0 for absent classes
    std::vector<double> frequency;  // f(c), 0 for absent classes
    double median_frequency = 0.0;  // f-bar over the present classes
};

/// The four supervision rasters derived from one labeled sample.
struct TargetBundle {
    EdgeMap edge;
    LabelMap contour;
    QuantizedDistanceMap distq;
    LabelMap seg;
};

}  // namespace mtlhg

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "mtlhg/raster.hpp"

namespace mtlhg {

// Supervision-target synthesis: boundary extraction with D-4 connectivity,
// disk dilation, truncated + quantized distance transform, semantic contour
// selection, and median-frequency class balancing.

/// Pixels whose D-4 neighborhood (up, down, left, right) contains a
/// different instance id. Neighbors beyond the image border are ignored, so
/// the border itself never creates a boundary.
inline EdgeMap raw_boundary(const InstanceMap& instances) {
    EdgeMap out(instances.w, instances.h);
    for (int y = 0; y < instances.h; ++y) {
        for (int x = 0; x < instances.w; ++x) {
            const std::uint16_t v = instances.at(x, y);
            const bool hit = (x > 0 && instances.at(x - 1, y) != v) ||
                             (x + 1 < instances.w && instances.at(x + 1, y) != v) ||
                             (y > 0 && instances.at(x, y - 1) != v) ||
                             (y + 1 < instances.h && instances.at(x, y + 1) != v);
            if (hit) out.at(x, y) = 1;
        }
    }
    return out;
}

/// Morphological dilation by the disk {(dx,dy): dx^2+dy^2 <= 4} (13 pixels).
inline EdgeMap dilate_disk2(const EdgeMap& mask) {
    EdgeMap out(mask.w, mask.h);
    for (int y = 0; y < mask.h; ++y) {
        for (int x = 0; x < mask.w; ++x) {
            if (!mask.at(x, y)) continue;
            for (int dy = -2; dy <= 2; ++dy) {
                const int ny = y + dy;
                if (ny < 0 || ny >= mask.h) continue;
                for (int dx = -2; dx <= 2; ++dx) {
                    if (dx * dx + dy * dy > 4) continue;
                    const int nx = x + dx;
                    if (nx < 0 || nx >= mask.w) continue;
                    out.at(nx, ny) = 1;
                }
            }
        }
    }
    return out;
}

/// Dilated instance-boundary map: the edge-detection ground truth.
inline EdgeMap extract_edges(const InstanceMap& instances) {
    return dilate_disk2(raw_boundary(instances));
}

/// Class id where the edge mask is set, background class (0) elsewhere.
inline LabelMap extract_semantic_contours(const LabelMap& labels, const EdgeMap& edge) {
    if (labels.w != edge.w || labels.h != edge.h) {
        throw DimensionError("semantic contours: label map " + std::to_string(labels.w) + "x" +
                             std::to_string(labels.h) + " vs edge map " + std::to_string(edge.w) +
                             "x" + std::to_string(edge.h));
    }
    LabelMap out(labels.w, labels.h, labels.n_classes);
    for (std::size_t i = 0; i < out.ids.size(); ++i) {
        out.ids[i] = edge.mask[i] ? labels.ids[i] : 0;
    }
    return out;
}

namespace detail {

constexpr double kEdtInf = 1e30;

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher) for one row of
// squared distances. f holds source values, d receives min over q of
// (x-q)^2 + f(q).
inline void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
                   std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    int k = 0;
    v[0] = 0;
    z[0] = -kEdtInf;
    z[1] = kEdtInf;
    for (int q = 1; q < n; ++q) {
        if (f[static_cast<std::size_t>(q)] >= kEdtInf) continue;
        double s;
        while (true) {
            const int p = v[k];
            if (f[static_cast<std::size_t>(p)] >= kEdtInf) {
                // Envelope only holds seeded parabolas; an INF entry at k==0
                // means nothing is seeded yet.
                v[k] = q;
                break;
            }
            s = ((f[static_cast<std::size_t>(q)] + static_cast<double>(q) * q) -
                 (f[static_cast<std::size_t>(p)] + static_cast<double>(p) * p)) /
                (2.0 * q - 2.0 * p);
            if (s <= z[k]) {
                --k;
                continue;
            }
            ++k;
            v[k] = q;
            z[k] = s;
            z[k + 1] = kEdtInf;
            break;
        }
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const int p = v[k];
        const double fp = f[static_cast<std::size_t>(p)];
        d[static_cast<std::size_t>(q)] =
            fp >= kEdtInf ? kEdtInf : static_cast<double>(q - p) * (q - p) + fp;
    }
}

// Exact squared Euclidean distance to the nearest seed pixel; kEdtInf where
// no seed exists at all.
inline std::vector<double> edt_squared(const EdgeMap& seeds) {
    const int w = seeds.w, h = seeds.h;
    const std::size_t side = static_cast<std::size_t>(std::max(w, h));
    std::vector<double> dist(static_cast<std::size_t>(w) * h, kEdtInf);
    std::vector<double> d(side);
    std::vector<int> v(side);
    std::vector<double> z(side + 1);

    // columns first
    std::vector<double> col(static_cast<std::size_t>(h));
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) col[static_cast<std::size_t>(y)] = seeds.at(x, y) ? 0.0 : kEdtInf;
        edt_1d(col, d, v, z);
        for (int y = 0; y < h; ++y) dist[static_cast<std::size_t>(y) * w + x] = d[static_cast<std::size_t>(y)];
    }
    // then rows
    std::vector<double> row(static_cast<std::size_t>(w));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) row[static_cast<std::size_t>(x)] = dist[static_cast<std::size_t>(y) * w + x];
        edt_1d(row, d, v, z);
        for (int x = 0; x < w; ++x) dist[static_cast<std::size_t>(y) * w + x] = d[static_cast<std::size_t>(x)];
    }
    return dist;
}

// Smallest integer m with m*m >= d2; exact for the integer-valued squared
// distances the grid produces.
inline int ceil_sqrt(double d2) {
    if (d2 <= 0.0) return 0;
    int m = static_cast<int>(std::ceil(std::sqrt(d2)));
    while (static_cast<double>(m) * m < d2) ++m;
    while (m > 0 && static_cast<double>(m - 1) * (m - 1) >= d2) --m;
    return m;
}

}  // namespace detail

/// Truncated, quantized distance transform. `boundary` must be the raw
/// (pre-dilation) boundary set Q; distances are Euclidean, rounded up to the
/// next integer, truncated at R, and zeroed outside instance masks. Bin k of
/// the uniform partition of [0, R] covers [k*R/K, (k+1)*R/K), with the exact
/// value R clamped into the last bin; representatives are the lower edges.
inline QuantizedDistanceMap distance_transform(const InstanceMap& instances,
                                               const EdgeMap& boundary,
                                               const DistanceTransformConfig& cfg) {
    cfg.validate();
    if (instances.w != boundary.w || instances.h != boundary.h) {
        throw DimensionError("distance transform: instance map and boundary map sizes differ");
    }
    bool any_fg = false;
    for (auto v : instances.ids) {
        if (v != 0) {
            any_fg = true;
            break;
        }
    }
    const bool any_q = boundary.count() > 0;
    if (any_fg && !any_q) {
        throw DegenerateInputError("distance transform: foreground present but boundary set is empty");
    }

    QuantizedDistanceMap out(instances.w, instances.h, cfg.bins);
    for (int k = 0; k < cfg.bins; ++k) {
        out.bin_value[static_cast<std::size_t>(k)] =
            static_cast<double>(k) * cfg.truncation / cfg.bins;
    }
    if (!any_fg) return out;  // all background, everything stays in bin 0

    const std::vector<double> d2 = detail::edt_squared(boundary);
    for (std::size_t i = 0; i < out.bin_of.size(); ++i) {
        if (instances.ids[i] == 0) continue;  // gamma = 0
        const int dt = std::min(detail::ceil_sqrt(d2[i]), cfg.truncation);
        const std::int64_t bin =
            std::min<std::int64_t>(static_cast<std::int64_t>(dt) * cfg.bins / cfg.truncation,
                                   cfg.bins - 1);
        out.bin_of[i] = static_cast<std::uint8_t>(bin);
    }
    return out;
}

/// Unquantized truncated distance values (for tests and diagnostics).
inline std::vector<int> truncated_distance(const InstanceMap& instances, const EdgeMap& boundary,
                                           int truncation) {
    std::vector<int> out(instances.ids.size(), 0);
    if (boundary.count() == 0) return out;
    const std::vector<double> d2 = detail::edt_squared(boundary);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (instances.ids[i] == 0) continue;
        out[i] = std::min(detail::ceil_sqrt(d2[i]), truncation);
    }
    return out;
}

/// Median-frequency balancing over a dataset of label maps. f(c) is the
/// pixel count of class c divided by the total pixels of the images where c
/// appears; tau_c = median(f)/f(c). Absent classes get weight 0 and do not
/// enter the median (their frequency would be 0 and the weight infinite).
inline ClassWeights class_balance_weights(std::span<const LabelMap> dataset) {
    if (dataset.empty()) {
        throw DegenerateInputError("class balancing needs at least one image");
    }
    const int n_classes = dataset[0].n_classes;
    std::vector<std::int64_t> pixels(static_cast<std::size_t>(n_classes), 0);
    std::vector<std::int64_t> present_pixels(static_cast<std::size_t>(n_classes), 0);
    for (const LabelMap& lm : dataset) {
        if (lm.n_classes != n_classes) {
            throw DimensionError("class balancing: images disagree on class count");
        }
        std::vector<std::int64_t> local(static_cast<std::size_t>(n_classes), 0);
        for (std::uint8_t v : lm.ids) ++local[v];
        const std::int64_t total = static_cast<std::int64_t>(lm.ids.size());
        for (int c = 0; c < n_classes; ++c) {
            pixels[static_cast<std::size_t>(c)] += local[static_cast<std::size_t>(c)];
            if (local[static_cast<std::size_t>(c)] > 0) present_pixels[static_cast<std::size_t>(c)] += total;
        }
    }

    ClassWeights cw;
    cw.weight.assign(static_cast<std::size_t>(n_classes), 0.0);
    cw.frequency.assign(static_cast<std::size_t>(n_classes), 0.0);
    std::vector<double> present;
    for (int c = 0; c < n_classes; ++c) {
        if (pixels[static_cast<std::size_t>(c)] > 0) {
            cw.frequency[static_cast<std::size_t>(c)] =
                static_cast<double>(pixels[static_cast<std::size_t>(c)]) /
                static_cast<double>(present_pixels[static_cast<std::size_t>(c)]);
            present.push_back(cw.frequency[static_cast<std::size_t>(c)]);
        }
    }
    std::sort(present.begin(), present.end());
    const std::size_t m = present.size();
    if (m == 0) return cw;
    cw.median_frequency = (m % 2 == 1) ? present[m / 2]
                                       : 0.5 * (present[m / 2 - 1] + present[m / 2]);
    for (int c = 0; c < n_classes; ++c) {
        if (pixels[static_cast<std::size_t>(c)] > 0) {
            cw.weight[static_cast<std::size_t>(c)] =
                cw.median_frequency / cw.frequency[static_cast<std::size_t>(c)];
        }
    }
    return cw;
}

/// Composes the extractors into the full per-sample supervision bundle. The
/// distance transform is driven by the raw boundary set; the edge and
/// contour targets use the dilated set.
inline TargetBundle build_targets(const LabelMap& labels, const InstanceMap& instances,
                                  const DistanceTransformConfig& cfg) {
    if (labels.w != instances.w || labels.h != instances.h) {
        throw DimensionError("build_targets: label map and instance map sizes differ");
    }
    TargetBundle tb;
    const EdgeMap raw = raw_boundary(instances);
    tb.edge = dilate_disk2(raw);
    tb.contour = extract_semantic_contours(labels, tb.edge);
    tb.distq = distance_transform(instances, raw, cfg);
    tb.seg = labels;
    return tb;
}

}  // namespace mtlhg

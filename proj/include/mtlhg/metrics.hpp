#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "mtlhg/raster.hpp"
#include "mtlhg/targets.hpp"

namespace mtlhg {

/// N x N pixel counts; entry (gt, pred).
struct ConfusionMatrix {
    int n = 0;
    std::vector<std::int64_t> counts;

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(int classes)
        : n(classes), counts(static_cast<std::size_t>(classes) * classes, 0) {}

    std::int64_t& at(int gt, int pred) { return counts[static_cast<std::size_t>(gt) * n + pred]; }
    std::int64_t at(int gt, int pred) const { return counts[static_cast<std::size_t>(gt) * n + pred]; }

    std::int64_t total() const {
        std::int64_t s = 0;
        for (auto v : counts) s += v;
        return s;
    }

    void add(const ConfusionMatrix& o) {
        if (o.n != n) throw DimensionError("confusion matrix class counts differ");
        for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
    }
};

/// Tally of prediction vs ground truth over the unmasked pixels.
inline ConfusionMatrix confusion(const LabelMap& pred, const LabelMap& gt,
                                 const EdgeMap* mask = nullptr) {
    if (pred.w != gt.w || pred.h != gt.h) {
        throw DimensionError("confusion: prediction and ground truth sizes differ");
    }
    if (mask && (mask->w != gt.w || mask->h != gt.h)) {
        throw DimensionError("confusion: mask size differs");
    }
    const int n = std::max(pred.n_classes, gt.n_classes);
    ConfusionMatrix cm(n);
    for (std::size_t i = 0; i < gt.ids.size(); ++i) {
        if (mask && !mask->mask[i]) continue;
        ++cm.at(gt.ids[i], pred.ids[i]);
    }
    return cm;
}

struct SegMetrics {
    double miou = 0.0;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    std::vector<double> class_iou;
    std::vector<double> class_accuracy;
    std::vector<double> class_precision;
    std::vector<double> class_recall;
    std::vector<bool> class_in_gt;      // enters the aggregate means
    std::vector<bool> class_observed;   // present in gt or prediction
};

/// Per-class IoU, accuracy, precision, and recall from the confusion matrix.
/// Aggregates are means over the classes present in the ground truth;
/// classes absent from both gt and prediction are skipped entirely. A class
/// the model never predicts takes precision 0.
inline SegMetrics seg_metrics(const ConfusionMatrix& cm) {
    const std::int64_t total = cm.total();
    if (cm.n == 0 || total == 0) {
        throw DegenerateInputError("seg_metrics: empty confusion matrix");
    }
    SegMetrics m;
    m.class_iou.assign(static_cast<std::size_t>(cm.n), 0.0);
    m.class_accuracy.assign(static_cast<std::size_t>(cm.n), 0.0);
    m.class_precision.assign(static_cast<std::size_t>(cm.n), 0.0);
    m.class_recall.assign(static_cast<std::size_t>(cm.n), 0.0);
    m.class_in_gt.assign(static_cast<std::size_t>(cm.n), false);
    m.class_observed.assign(static_cast<std::size_t>(cm.n), false);

    int counted = 0;
    for (int c = 0; c < cm.n; ++c) {
        std::int64_t tp = cm.at(c, c);
        std::int64_t gt_row = 0, pred_col = 0;
        for (int j = 0; j < cm.n; ++j) {
            gt_row += cm.at(c, j);
            pred_col += cm.at(j, c);
        }
        const std::int64_t fn = gt_row - tp;
        const std::int64_t fp = pred_col - tp;
        const std::int64_t tn = total - tp - fn - fp;
        const std::size_t ci = static_cast<std::size_t>(c);
        m.class_observed[ci] = gt_row > 0 || pred_col > 0;
        m.class_in_gt[ci] = gt_row > 0;
        if (!m.class_observed[ci]) continue;
        m.class_iou[ci] = tp + fp + fn > 0
                              ? static_cast<double>(tp) / static_cast<double>(tp + fp + fn)
                              : 0.0;
        m.class_accuracy[ci] = static_cast<double>(tp + tn) / static_cast<double>(total);
        m.class_precision[ci] = tp + fp > 0
                                    ? static_cast<double>(tp) / static_cast<double>(tp + fp)
                                    : 0.0;
        m.class_recall[ci] = tp + fn > 0
                                 ? static_cast<double>(tp) / static_cast<double>(tp + fn)
                                 : 0.0;
        if (m.class_in_gt[ci]) {
            m.miou += m.class_iou[ci];
            m.accuracy += m.class_accuracy[ci];
            m.precision += m.class_precision[ci];
            m.recall += m.class_recall[ci];
            ++counted;
        }
    }
    if (counted == 0) throw DegenerateInputError("seg_metrics: no class present in ground truth");
    m.miou /= counted;
    m.accuracy /= counted;
    m.precision /= counted;
    m.recall /= counted;
    return m;
}

/// Narrow band of pixels within Euclidean distance `width` of a ground-truth
/// class contour (D-4 class changes). A gt without contours yields an empty
/// band.
struct TrimapBand {
    int width = 0;
    EdgeMap membership;
};

/// Squared distance field to the nearest class-contour pixel, or a large
/// sentinel when the gt is uniform. Shared by trimap_band so curve sweeps
/// reuse one transform.
inline std::vector<double> contour_distance_squared(const LabelMap& gt) {
    InstanceMap as_inst(gt.w, gt.h);
    for (std::size_t i = 0; i < gt.ids.size(); ++i) as_inst.ids[i] = gt.ids[i];
    EdgeMap contours = raw_boundary(as_inst);
    if (contours.count() == 0) {
        return std::vector<double>(gt.ids.size(), detail::kEdtInf);
    }
    return detail::edt_squared(contours);
}

inline TrimapBand trimap_band(const LabelMap& gt, int width) {
    if (width < 1) throw ConfigError("trimap band width must be >= 1");
    TrimapBand band{width, EdgeMap(gt.w, gt.h)};
    const std::vector<double> d2 = contour_distance_squared(gt);
    const double w2 = static_cast<double>(width) * width;
    for (std::size_t i = 0; i < d2.size(); ++i) band.membership.mask[i] = d2[i] <= w2 ? 1 : 0;
    return band;
}

struct TrimapPoint {
    int width = 0;
    double error_pct = 0.0;  // NaN when the band is empty
};

/// Percent of misclassified pixels inside the band, per width.
inline std::vector<TrimapPoint> trimap_curve(const LabelMap& pred, const LabelMap& gt,
                                             std::span<const int> widths) {
    if (pred.w != gt.w || pred.h != gt.h) {
        throw DimensionError("trimap_curve: prediction and ground truth sizes differ");
    }
    const std::vector<double> d2 = contour_distance_squared(gt);
    std::vector<TrimapPoint> out;
    for (int width : widths) {
        if (width < 1) throw ConfigError("trimap band width must be >= 1");
        const double w2 = static_cast<double>(width) * width;
        std::int64_t in_band = 0, wrong = 0;
        for (std::size_t i = 0; i < d2.size(); ++i) {
            if (d2[i] > w2) continue;
            ++in_band;
            if (pred.ids[i] != gt.ids[i]) ++wrong;
        }
        TrimapPoint p{width, std::numeric_limits<double>::quiet_NaN()};
        if (in_band > 0) p.error_pct = 100.0 * static_cast<double>(wrong) / static_cast<double>(in_band);
        out.push_back(p);
    }
    return out;
}

/// Dataset-level trimap curve: misclassification and band counts pooled over
/// image pairs before taking the percentage.
class TrimapAccumulator {
public:
    explicit TrimapAccumulator(std::vector<int> widths)
        : widths_(std::move(widths)), in_band_(widths_.size(), 0), wrong_(widths_.size(), 0) {
        for (int w : widths_) {
            if (w < 1) throw ConfigError("trimap band width must be >= 1");
        }
    }

    void add(const LabelMap& pred, const LabelMap& gt) {
        if (pred.w != gt.w || pred.h != gt.h) {
            throw DimensionError("trimap: prediction and ground truth sizes differ");
        }
        const std::vector<double> d2 = contour_distance_squared(gt);
        for (std::size_t wi = 0; wi < widths_.size(); ++wi) {
            const double w2 = static_cast<double>(widths_[wi]) * widths_[wi];
            for (std::size_t i = 0; i < d2.size(); ++i) {
                if (d2[i] > w2) continue;
                ++in_band_[wi];
                if (pred.ids[i] != gt.ids[i]) ++wrong_[wi];
            }
        }
    }

    std::vector<TrimapPoint> curve() const {
        std::vector<TrimapPoint> out;
        for (std::size_t wi = 0; wi < widths_.size(); ++wi) {
            TrimapPoint p{widths_[wi], std::numeric_limits<double>::quiet_NaN()};
            if (in_band_[wi] > 0) {
                p.error_pct = 100.0 * static_cast<double>(wrong_[wi]) / static_cast<double>(in_band_[wi]);
            }
            out.push_back(p);
        }
        return out;
    }

private:
    std::vector<int> widths_;
    std::vector<std::int64_t> in_band_;
    std::vector<std::int64_t> wrong_;
};

// ---- latent-space clustering metrics -------------------------------------

/// Points with a cluster id per point.
struct ClusterInput {
    std::int64_t dim = 0;
    std::vector<double> points;  // row-major, count x dim
    std::vector<int> labels;

    std::int64_t count() const { return dim == 0 ? 0 : static_cast<std::int64_t>(points.size()) / dim; }
};

namespace detail {

inline double euclid(const double* a, const double* b, std::int64_t dim) {
    double s = 0.0;
    for (std::int64_t i = 0; i < dim; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

// Maps arbitrary labels onto 0..k-1 preserving first-appearance order.
inline std::vector<int> compact_labels(std::span<const int> labels, int& k) {
    std::vector<int> uniq;
    std::vector<int> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        int idx = -1;
        for (std::size_t u = 0; u < uniq.size(); ++u) {
            if (uniq[u] == labels[i]) {
                idx = static_cast<int>(u);
                break;
            }
        }
        if (idx < 0) {
            idx = static_cast<int>(uniq.size());
            uniq.push_back(labels[i]);
        }
        out[i] = idx;
    }
    k = static_cast<int>(uniq.size());
    return out;
}

}  // namespace detail

/// Mean silhouette value (b-a)/max(a,b) with a the mean intra-cluster
/// distance (excluding self) and b the smallest mean distance to another
/// cluster. Singleton clusters and a=b=0 contribute 0.
inline double silhouette(const ClusterInput& in) {
    const std::int64_t n = in.count();
    int k = 0;
    const std::vector<int> lab = detail::compact_labels(in.labels, k);
    if (k < 2) throw ConfigError("silhouette needs at least two clusters");

    std::vector<std::int64_t> size(static_cast<std::size_t>(k), 0);
    for (int l : lab) ++size[static_cast<std::size_t>(l)];

    double acc = 0.0;
    std::vector<double> mean_to(static_cast<std::size_t>(k), 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
        std::fill(mean_to.begin(), mean_to.end(), 0.0);
        for (std::int64_t j = 0; j < n; ++j) {
            if (i == j) continue;
            mean_to[static_cast<std::size_t>(lab[static_cast<std::size_t>(j)])] +=
                detail::euclid(in.points.data() + i * in.dim, in.points.data() + j * in.dim, in.dim);
        }
        const int own = lab[static_cast<std::size_t>(i)];
        if (size[static_cast<std::size_t>(own)] <= 1) continue;  // singleton: contributes 0
        const double a = mean_to[static_cast<std::size_t>(own)] /
                         static_cast<double>(size[static_cast<std::size_t>(own)] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
            if (c == own || size[static_cast<std::size_t>(c)] == 0) continue;
            b = std::min(b, mean_to[static_cast<std::size_t>(c)] /
                                static_cast<double>(size[static_cast<std::size_t>(c)]));
        }
        const double denom = std::max(a, b);
        if (denom > 0.0) acc += (b - a) / denom;
    }
    return acc / static_cast<double>(n);
}

/// (SS_M / SS_W) * (N - k)/(k - 1), between- over within-cluster variance.
inline double calinski_harabasz(const ClusterInput& in) {
    const std::int64_t n = in.count();
    int k = 0;
    const std::vector<int> lab = detail::compact_labels(in.labels, k);
    if (k < 2) throw ConfigError("calinski_harabasz needs at least two clusters");

    std::vector<double> centroid(static_cast<std::size_t>(k) * in.dim, 0.0);
    std::vector<std::int64_t> size(static_cast<std::size_t>(k), 0);
    std::vector<double> overall(static_cast<std::size_t>(in.dim), 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
        const int c = lab[static_cast<std::size_t>(i)];
        ++size[static_cast<std::size_t>(c)];
        for (std::int64_t d = 0; d < in.dim; ++d) {
            centroid[static_cast<std::size_t>(c) * in.dim + d] += in.points[i * in.dim + d];
            overall[static_cast<std::size_t>(d)] += in.points[i * in.dim + d];
        }
    }
    for (int c = 0; c < k; ++c) {
        for (std::int64_t d = 0; d < in.dim; ++d) {
            centroid[static_cast<std::size_t>(c) * in.dim + d] /= static_cast<double>(size[static_cast<std::size_t>(c)]);
        }
    }
    for (std::int64_t d = 0; d < in.dim; ++d) overall[static_cast<std::size_t>(d)] /= static_cast<double>(n);

    double ss_m = 0.0, ss_w = 0.0;
    for (int c = 0; c < k; ++c) {
        double dist2 = 0.0;
        for (std::int64_t d = 0; d < in.dim; ++d) {
            const double diff = centroid[static_cast<std::size_t>(c) * in.dim + d] - overall[static_cast<std::size_t>(d)];
            dist2 += diff * diff;
        }
        ss_m += static_cast<double>(size[static_cast<std::size_t>(c)]) * dist2;
    }
    for (std::int64_t i = 0; i < n; ++i) {
        const int c = lab[static_cast<std::size_t>(i)];
        for (std::int64_t d = 0; d < in.dim; ++d) {
            const double diff = in.points[i * in.dim + d] - centroid[static_cast<std::size_t>(c) * in.dim + d];
            ss_w += diff * diff;
        }
    }
    if (ss_w == 0.0) throw DegenerateInputError("calinski_harabasz: within-cluster variance is zero");
    return (ss_m / ss_w) * (static_cast<double>(n - k) / static_cast<double>(k - 1));
}

/// (1/k) sum_i max_j (s_i + s_j)/d_ij over centroid distances.
inline double davies_bouldin(const ClusterInput& in) {
    const std::int64_t n = in.count();
    int k = 0;
    const std::vector<int> lab = detail::compact_labels(in.labels, k);
    if (k < 2) throw ConfigError("davies_bouldin needs at least two clusters");

    std::vector<double> centroid(static_cast<std::size_t>(k) * in.dim, 0.0);
    std::vector<std::int64_t> size(static_cast<std::size_t>(k), 0);
    for (std::int64_t i = 0; i < n; ++i) {
        const int c = lab[static_cast<std::size_t>(i)];
        ++size[static_cast<std::size_t>(c)];
        for (std::int64_t d = 0; d < in.dim; ++d) {
            centroid[static_cast<std::size_t>(c) * in.dim + d] += in.points[i * in.dim + d];
        }
    }
    for (int c = 0; c < k; ++c) {
        for (std::int64_t d = 0; d < in.dim; ++d) {
            centroid[static_cast<std::size_t>(c) * in.dim + d] /= static_cast<double>(size[static_cast<std::size_t>(c)]);
        }
    }
    std::vector<double> scatter(static_cast<std::size_t>(k), 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
        const int c = lab[static_cast<std::size_t>(i)];
        scatter[static_cast<std::size_t>(c)] += detail::euclid(
            in.points.data() + i * in.dim, centroid.data() + static_cast<std::size_t>(c) * in.dim, in.dim);
    }
    for (int c = 0; c < k; ++c) scatter[static_cast<std::size_t>(c)] /= static_cast<double>(size[static_cast<std::size_t>(c)]);

    double acc = 0.0;
    for (int i = 0; i < k; ++i) {
        double worst = 0.0;
        for (int j = 0; j < k; ++j) {
            if (i == j) continue;
            const double d = detail::euclid(centroid.data() + static_cast<std::size_t>(i) * in.dim,
                                            centroid.data() + static_cast<std::size_t>(j) * in.dim, in.dim);
            if (d == 0.0) {
                throw DegenerateInputError("davies_bouldin: coincident cluster centroids");
            }
            worst = std::max(worst, (scatter[static_cast<std::size_t>(i)] + scatter[static_cast<std::size_t>(j)]) / d);
        }
        acc += worst;
    }
    return acc / static_cast<double>(k);
}

struct ClusteringMetrics {
    double ssi = 0.0;
    double chi = 0.0;
    double dbi = 0.0;
};

/// The three clustering indices over a latent dump, clusters given by the
/// per-sample tags.
template <typename Dump>
ClusteringMetrics latent_metrics(const Dump& dump) {
    ClusterInput in;
    in.dim = dump.dim;
    in.points = dump.data;
    in.labels = dump.tags;
    int k = 0;
    detail::compact_labels(in.labels, k);
    if (k < 2) throw ConfigError("latent metrics need at least two distinct tags");
    return {silhouette(in), calinski_harabasz(in), davies_bouldin(in)};
}

}  // namespace mtlhg

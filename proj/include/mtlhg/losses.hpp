#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>

#include "mtlhg/ops.hpp"
#include "mtlhg/raster.hpp"
#include "mtlhg/tensor.hpp"

namespace mtlhg {

// Loss kernels. Each returns its scalar value together with the exact
// analytic gradient with respect to the logits (or probabilities) passed in.
// Probabilities are per-channel sigmoids throughout; logs are guarded by
// clamping probabilities to [eps, 1-eps] and the gradient is taken through
// the clamp (zero where clamped).

constexpr double kProbClamp = 1e-7;
constexpr double kIouGuard = 1e-12;

struct LossGrad {
    double value = 0.0;
    Tensor grad;
};

/// Per-component values of the Eq. 1 objective for one batch.
struct LossReport {
    double hed = 0.0, iou_edge = 0.0, edge = 0.0;
    double ce_seg = 0.0, iou_seg = 0.0, seg = 0.0;
    double ce_contour = 0.0, iou_contour = 0.0, contour = 0.0;
    double ce_energy = 0.0, iou_energy = 0.0, energy = 0.0;
    double total = 0.0;
};

/// Mixing weights: psi1..psi6 for the per-component sums, omega1/omega2 for
/// the semantic-contour counterparts of psi3/psi4, and the per-task lambdas.
struct LossWeights {
    double psi1 = 1.0, psi2 = 1.0;      // edge: HED + soft IoU
    double psi3 = 1.0, psi4 = 1.0;      // segmentation: balanced CE + IoU
    double omega1 = 1.0, omega2 = 1.0;  // semantic contour counterparts
    double psi5 = 1.0, psi6 = 1.0;      // energy bins: balanced CE + IoU
    double lambda_e = 1.0, lambda_s = 1.0, lambda_c = 1.0, lambda_d = 1.0;

    void validate() const {
        const double all[] = {psi1, psi2, psi3, psi4, omega1, omega2, psi5, psi6,
                              lambda_e, lambda_s, lambda_c, lambda_d};
        for (double v : all) {
            if (v < 0.0 || !std::isfinite(v)) throw ConfigError("loss weights must be non-negative");
        }
        if (lambda_e <= 0.0 && lambda_s <= 0.0 && lambda_c <= 0.0 && lambda_d <= 0.0) {
            throw ConfigError("at least one task weight must be positive");
        }
    }
};

namespace detail {
inline void check_logits_vs_map(const Tensor& logits, std::int64_t channels, int w, int h,
                                const char* who) {
    const Shape4 s = logits.shape();
    if (s.n != 1) throw DimensionError(std::string(who) + ": expected a single-sample tensor");
    if (s.c != channels) {
        throw DimensionError(std::string(who) + ": channel axis " + std::to_string(s.c) +
                             " does not match expected " + std::to_string(channels));
    }
    if (s.h != h || s.w != w) {
        throw DimensionError(std::string(who) + ": spatial axes " + std::to_string(s.h) + "x" +
                             std::to_string(s.w) + " do not match target " + std::to_string(h) +
                             "x" + std::to_string(w));
    }
}

inline double clamp_prob(double p) {
    if (p < kProbClamp) return kProbClamp;
    if (p > 1.0 - kProbClamp) return 1.0 - kProbClamp;
    return p;
}
}  // namespace detail

/// Class-balanced binary cross-entropy over edge logits (HED). beta is the
/// edge-pixel fraction |Y+|/|Y|; edge pixels are weighted by beta and
/// non-edge by 1-beta.
inline LossGrad hed_loss(const Tensor& logits, const EdgeMap& edges) {
    detail::check_logits_vs_map(logits, 1, edges.w, edges.h, "hed_loss");
    const std::int64_t total = static_cast<std::int64_t>(edges.mask.size());
    if (total == 0) throw DegenerateInputError("hed_loss: empty edge map");
    const std::int64_t positives = edges.count();
    const double beta = static_cast<double>(positives) / static_cast<double>(total);

    LossGrad out{0.0, Tensor(logits.shape())};
    for (std::int64_t i = 0; i < total; ++i) {
        const double raw = sigmoid_scalar(logits[i]);
        const double p = detail::clamp_prob(raw);
        const bool clamped = raw != p;
        if (edges.mask[static_cast<std::size_t>(i)]) {
            out.value -= beta * std::log(p);
            out.grad[i] = clamped ? 0.0 : -beta * (1.0 - p);
        } else {
            out.value -= (1.0 - beta) * std::log(1.0 - p);
            out.grad[i] = clamped ? 0.0 : (1.0 - beta) * p;
        }
    }
    return out;
}

/// Soft intersection-over-union loss, 1 - sum(PY)/sum(P+Y-PY), denominator
/// guarded. Gradient is with respect to the probabilities.
inline LossGrad soft_iou_loss(const Tensor& probs, const EdgeMap& target) {
    detail::check_logits_vs_map(probs, 1, target.w, target.h, "soft_iou_loss");
    const std::int64_t total = static_cast<std::int64_t>(target.mask.size());
    double inter = 0.0;
    double uni = 0.0;
    for (std::int64_t i = 0; i < total; ++i) {
        const double p = probs[i];
        const double y = target.mask[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
        inter += p * y;
        uni += p + y - p * y;
    }
    const double denom = uni + kIouGuard;
    LossGrad out{1.0 - inter / denom, Tensor(probs.shape())};
    for (std::int64_t i = 0; i < total; ++i) {
        const double y = target.mask[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
        out.grad[i] = -(y * denom - inter * (1.0 - y)) / (denom * denom);
    }
    return out;
}

/// Edge-detection objective: psi1 * HED + psi2 * soft IoU over sigmoid
/// probabilities. Gradient with respect to the logits.
inline LossGrad edge_loss(const Tensor& logits, const EdgeMap& edges, double psi1, double psi2,
                          double* hed_part = nullptr, double* iou_part = nullptr) {
    LossGrad hed = hed_loss(logits, edges);
    Tensor probs = sigmoid(logits);
    LossGrad iou = soft_iou_loss(probs, edges);
    LossGrad out{psi1 * hed.value + psi2 * iou.value, Tensor(logits.shape())};
    Tensor iou_chain = sigmoid_backward(probs, iou.grad);
    for (std::int64_t i = 0; i < out.grad.size(); ++i) {
        out.grad[i] = psi1 * hed.grad[i] + psi2 * iou_chain[i];
    }
    if (hed_part) *hed_part = hed.value;
    if (iou_part) *iou_part = iou.value;
    return out;
}

/// Multi-label balanced cross-entropy: per-channel sigmoid probabilities,
/// one-vs-rest targets from the label map, class weights alpha, mean over
/// the N channels.
inline LossGrad balanced_multilabel_ce(const Tensor& logits, const LabelMap& target,
                                       std::span<const double> alpha) {
    const std::int64_t n_classes = target.n_classes;
    detail::check_logits_vs_map(logits, n_classes, target.w, target.h, "balanced_multilabel_ce");
    if (static_cast<std::int64_t>(alpha.size()) != n_classes) {
        throw DimensionError("balanced_multilabel_ce: weight count " +
                             std::to_string(alpha.size()) + " does not match class count " +
                             std::to_string(n_classes));
    }
    const std::int64_t pixels = static_cast<std::int64_t>(target.ids.size());
    LossGrad out{0.0, Tensor(logits.shape())};
    const double inv_n = 1.0 / static_cast<double>(n_classes);
    for (std::int64_t c = 0; c < n_classes; ++c) {
        const double a = alpha[static_cast<std::size_t>(c)];
        for (std::int64_t i = 0; i < pixels; ++i) {
            const std::int64_t j = c * pixels + i;
            const double raw = sigmoid_scalar(logits[j]);
            const double p = detail::clamp_prob(raw);
            const bool clamped = raw != p;
            if (target.ids[static_cast<std::size_t>(i)] == c) {
                out.value -= inv_n * a * std::log(p);
                out.grad[j] = clamped ? 0.0 : -inv_n * a * (1.0 - p);
            } else {
                out.value -= inv_n * a * std::log(1.0 - p);
                out.grad[j] = clamped ? 0.0 : inv_n * a * p;
            }
        }
    }
    return out;
}

/// Multi-label soft IoU over one-hot targets, per-class ratios averaged over
/// the N classes so a perfect prediction scores 0. Both intersection and
/// union carry the guard, so a class absent from the target with a vanishing
/// prediction mass contributes a clean ratio of 1 rather than dragging the
/// mean down. Gradient with respect to the probabilities.
inline LossGrad multilabel_iou_loss(const Tensor& probs, const LabelMap& target) {
    const std::int64_t n_classes = target.n_classes;
    detail::check_logits_vs_map(probs, n_classes, target.w, target.h, "multilabel_iou_loss");
    const std::int64_t pixels = static_cast<std::int64_t>(target.ids.size());
    LossGrad out{0.0, Tensor(probs.shape())};
    const double inv_n = 1.0 / static_cast<double>(n_classes);
    double ratio_sum = 0.0;
    for (std::int64_t c = 0; c < n_classes; ++c) {
        double inter = 0.0;
        double uni = 0.0;
        for (std::int64_t i = 0; i < pixels; ++i) {
            const double p = probs[c * pixels + i];
            const double y = target.ids[static_cast<std::size_t>(i)] == c ? 1.0 : 0.0;
            inter += p * y;
            uni += p + y - p * y;
        }
        const double num = inter + kIouGuard;
        const double denom = uni + kIouGuard;
        ratio_sum += num / denom;
        for (std::int64_t i = 0; i < pixels; ++i) {
            const std::int64_t j = c * pixels + i;
            const double y = target.ids[static_cast<std::size_t>(i)] == c ? 1.0 : 0.0;
            out.grad[j] = -inv_n * (y * denom - num * (1.0 - y)) / (denom * denom);
        }
    }
    out.value = 1.0 - inv_n * ratio_sum;
    return out;
}

/// Weighted CE + IoU pair shared by the segmentation, contour, and energy
/// heads. Gradient with respect to the logits.
inline LossGrad composed_class_loss(const Tensor& logits, const LabelMap& target,
                                    std::span<const double> class_weights, double w_ce,
                                    double w_iou, double* ce_part = nullptr,
                                    double* iou_part = nullptr) {
    LossGrad ce = balanced_multilabel_ce(logits, target, class_weights);
    Tensor probs = sigmoid(logits);
    LossGrad iou = multilabel_iou_loss(probs, target);
    LossGrad out{w_ce * ce.value + w_iou * iou.value, Tensor(logits.shape())};
    Tensor iou_chain = sigmoid_backward(probs, iou.grad);
    for (std::int64_t i = 0; i < out.grad.size(); ++i) {
        out.grad[i] = w_ce * ce.grad[i] + w_iou * iou_chain[i];
    }
    if (ce_part) *ce_part = ce.value;
    if (iou_part) *iou_part = iou.value;
    return out;
}

/// Semantic segmentation objective (psi3, psi4, alpha weights).
inline LossGrad seg_loss(const Tensor& logits, const LabelMap& target,
                         std::span<const double> alpha, double psi3, double psi4,
                         double* ce_part = nullptr, double* iou_part = nullptr) {
    return composed_class_loss(logits, target, alpha, psi3, psi4, ce_part, iou_part);
}

/// Semantic contour objective: the segmentation losses with omega weights
/// over contour-class maps.
inline LossGrad contour_loss(const Tensor& logits, const LabelMap& contour_target,
                             std::span<const double> contour_weights, double omega1,
                             double omega2, double* ce_part = nullptr,
                             double* iou_part = nullptr) {
    return composed_class_loss(logits, contour_target, contour_weights, omega1, omega2, ce_part,
                               iou_part);
}

/// Energy-level objective over the K distance bins (psi5, psi6, mu weights
/// from bin occupancy).
inline LossGrad energy_loss(const Tensor& logits, const QuantizedDistanceMap& target,
                            std::span<const double> mu, double psi5, double psi6,
                            double* ce_part = nullptr, double* iou_part = nullptr) {
    return composed_class_loss(logits, target.as_labels(), mu, psi5, psi6, ce_part, iou_part);
}

/// Tasks in the fixed order used everywhere.
enum class Task : int { Edge = 0, Seg = 1, Contour = 2, Energy = 3 };
constexpr int kTaskCount = 4;

inline double task_lambda(const LossWeights& w, Task t) {
    switch (t) {
        case Task::Edge: return w.lambda_e;
        case Task::Seg: return w.lambda_s;
        case Task::Contour: return w.lambda_c;
        default: return w.lambda_d;
    }
}

/// Combined objective: (1 / (|T| * n)) * sum_t lambda_t * V_t, where V_t is
/// the batch-summed value of task t and |T| counts tasks with positive
/// lambda.
inline double total_loss(const std::array<double, kTaskCount>& task_values, const LossWeights& w,
                         std::int64_t batch) {
    if (batch <= 0) throw ConfigError("total_loss: batch size must be positive");
    int active = 0;
    for (int t = 0; t < kTaskCount; ++t) {
        if (task_lambda(w, static_cast<Task>(t)) > 0.0) ++active;
    }
    if (active == 0) throw ConfigError("total_loss: all task weights are zero");
    double sum = 0.0;
    for (int t = 0; t < kTaskCount; ++t) {
        const double lambda = task_lambda(w, static_cast<Task>(t));
        if (lambda > 0.0) sum += lambda * task_values[static_cast<std::size_t>(t)];
    }
    return sum / (static_cast<double>(active) * static_cast<double>(batch));
}

}  // namespace mtlhg

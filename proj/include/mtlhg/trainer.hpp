#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtlhg/checkpoint.hpp"
#include "mtlhg/losses.hpp"
#include "mtlhg/metrics.hpp"
#include "mtlhg/model.hpp"
#include "mtlhg/synth.hpp"
#include "mtlhg/targets.hpp"

namespace mtlhg {

// Deterministic training: every random choice flows from one seeded stream
// in a fixed order (batch indices, then per-sample augmentation draws), so a
// (seed, config, dataset) triple fully determines the parameter trajectory.

using TaskSet = std::array<bool, kTaskCount>;

inline TaskSet parse_task_set(const std::string& letters) {
    TaskSet set{false, false, false, false};
    for (char ch : letters) {
        switch (ch) {
            case 'E': set[static_cast<int>(Task::Edge)] = true; break;
            case 'S': set[static_cast<int>(Task::Seg)] = true; break;
            case 'C': set[static_cast<int>(Task::Contour)] = true; break;
            case 'D': set[static_cast<int>(Task::Energy)] = true; break;
            case ',':
            case ' ': break;
            default:
                throw ConfigError(std::string("unknown task letter '") + ch + "' (expected E,S,C,D)");
        }
    }
    if (!set[static_cast<int>(Task::Seg)]) {
        throw ConfigError("task set must contain the segmentation task S");
    }
    return set;
}

inline std::string task_set_string(const TaskSet& set) {
    std::string s;
    for (int t = 0; t < kTaskCount; ++t) {
        if (set[static_cast<std::size_t>(t)]) {
            if (!s.empty()) s += ',';
            s += task_name(static_cast<Task>(t));
        }
    }
    return s;
}

struct AugmentConfig {
    int crop = 0;  // 0 = full image
    double contrast_lo = 1.0, contrast_hi = 1.0;
    double brightness_lo = 0.0, brightness_hi = 0.0;
    double flip_prob = 0.0;
};

struct TrainConfig {
    TaskSet tasks{false, true, false, false};  // S mandatory
    LossWeights weights;
    double learning_rate = 0.01;
    double momentum = 0.9;
    int batch = 4;
    std::int64_t iterations = 100;
    std::uint64_t seed = 1;
    AugmentConfig augment;
    DistanceTransformConfig dt;
    int stages = 3;
    int base_width = 16;
    std::int64_t eval_every = 0;  // 0 = final evaluation only
    double holdout_fraction = 0.2;

    void validate() const {
        if (!tasks[static_cast<int>(Task::Seg)]) throw ConfigError("train: task S is mandatory");
        if (learning_rate <= 0.0) throw ConfigError("train: learning rate must be positive");
        if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train: momentum must be in [0,1)");
        if (batch < 1) throw ConfigError("train: batch size must be >= 1");
        if (iterations < 1) throw ConfigError("train: iteration count must be >= 1");
        if (holdout_fraction < 0.0 || holdout_fraction >= 1.0) {
            throw ConfigError("train: holdout fraction must be in [0,1)");
        }
        weights.validate();
        dt.validate();
    }
};

// ---- augmentation -----------------------------------------------------------

inline Sample flip_horizontal(const Sample& s) {
    Sample out{Tensor(s.image.shape()), LabelMap(s.labels.w, s.labels.h, s.labels.n_classes),
               InstanceMap(s.instances.w, s.instances.h)};
    const Shape4 is = s.image.shape();
    for (std::int64_t c = 0; c < is.c; ++c)
        for (std::int64_t y = 0; y < is.h; ++y)
            for (std::int64_t x = 0; x < is.w; ++x)
                out.image.at(0, c, y, x) = s.image.at(0, c, y, is.w - 1 - x);
    for (int y = 0; y < s.labels.h; ++y)
        for (int x = 0; x < s.labels.w; ++x) {
            out.labels.at(x, y) = s.labels.at(s.labels.w - 1 - x, y);
            out.instances.at(x, y) = s.instances.at(s.instances.w - 1 - x, y);
        }
    return out;
}

inline Sample crop_sample(const Sample& s, int ox, int oy, int size) {
    Sample out{Tensor(1, s.image.shape().c, size, size), LabelMap(size, size, s.labels.n_classes),
               InstanceMap(size, size)};
    for (std::int64_t c = 0; c < s.image.shape().c; ++c)
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                out.image.at(0, c, y, x) = s.image.at(0, c, oy + y, ox + x);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            out.labels.at(x, y) = s.labels.at(ox + x, oy + y);
            out.instances.at(x, y) = s.instances.at(ox + x, oy + y);
        }
    return out;
}

struct Augmented {
    Sample sample;
    int ox = 0, oy = 0;
    bool flipped = false;
};

/// Random crop, horizontal flip, then contrast scale and brightness offset
/// on the image only. Label and instance rasters are sliced and mirrored
/// exactly, never interpolated. Draw order is fixed: crop x, crop y, flip,
/// contrast, brightness.
inline Augmented augment(const Sample& s, Rng& rng, const AugmentConfig& cfg) {
    const int w = s.labels.w;
    const int h = s.labels.h;
    const int crop = cfg.crop > 0 ? cfg.crop : w;
    if (crop > w || crop > h) {
        throw ConfigError("augment: crop " + std::to_string(crop) + " exceeds image " +
                          std::to_string(w) + "x" + std::to_string(h));
    }
    Augmented out;
    out.ox = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(w - crop + 1)));
    out.oy = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(h - crop + 1)));
    out.flipped = rng.uniform01() < cfg.flip_prob;
    const double contrast = rng.uniform(cfg.contrast_lo, cfg.contrast_hi);
    const double brightness = rng.uniform(cfg.brightness_lo, cfg.brightness_hi);

    Sample cur = (crop == w && crop == h && out.ox == 0 && out.oy == 0)
                     ? s
                     : crop_sample(s, out.ox, out.oy, crop);
    if (out.flipped) cur = flip_horizontal(cur);
    if (contrast != 1.0 || brightness != 0.0) {
        for (std::int64_t i = 0; i < cur.image.size(); ++i) {
            const double v = cur.image[i] * contrast + brightness;
            cur.image[i] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        }
    }
    out.sample = std::move(cur);
    return out;
}

// ---- per-sample target assembly ----------------------------------------------

namespace detail {

inline EdgeMap slice_edge(const EdgeMap& e, int ox, int oy, int size, bool flip) {
    EdgeMap out(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            out.at(x, y) = e.at(ox + (flip ? size - 1 - x : x), oy + y);
    return out;
}

inline LabelMap slice_labels(const LabelMap& l, int ox, int oy, int size, bool flip) {
    LabelMap out(size, size, l.n_classes);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            out.at(x, y) = l.at(ox + (flip ? size - 1 - x : x), oy + y);
    return out;
}

}  // namespace detail

/// Supervision for an augmented view. Edge, contour, and segmentation rasters
/// slice the precomputed full-image bundle; the distance transform is
/// recomputed on the augmented instance map because cropping moves the
/// nearest boundaries.
inline TargetBundle targets_for_view(const TargetBundle& full, const Augmented& view,
                                     const DistanceTransformConfig& cfg) {
    const int size = view.sample.labels.w;
    TargetBundle tb;
    tb.edge = detail::slice_edge(full.edge, view.ox, view.oy, size, view.flipped);
    tb.contour = detail::slice_labels(full.contour, view.ox, view.oy, size, view.flipped);
    tb.seg = detail::slice_labels(full.seg, view.ox, view.oy, size, view.flipped);
    tb.distq = distance_transform(view.sample.instances, raw_boundary(view.sample.instances), cfg);
    return tb;
}

// ---- evaluation helpers -------------------------------------------------------

/// Argmax over the segmentation logits, ties to the lowest class index.
inline LabelMap predict_labels(const Tensor& seg_logits) {
    const Shape4 s = seg_logits.shape();
    LabelMap out(static_cast<int>(s.w), static_cast<int>(s.h), static_cast<int>(s.c));
    for (std::int64_t y = 0; y < s.h; ++y)
        for (std::int64_t x = 0; x < s.w; ++x) {
            int best = 0;
            double best_v = seg_logits.at(0, 0, y, x);
            for (std::int64_t c = 1; c < s.c; ++c) {
                const double v = seg_logits.at(0, c, y, x);
                if (v > best_v) {
                    best_v = v;
                    best = static_cast<int>(c);
                }
            }
            out.at(static_cast<int>(x), static_cast<int>(y)) = static_cast<std::uint8_t>(best);
        }
    return out;
}

inline LabelMap predict_sample(const ModelParams& params, const Sample& s) {
    TaskSet only_s{false, false, false, false};
    only_s[static_cast<int>(Task::Seg)] = true;
    ForwardResult fr = forward(params, s.image, false, only_s);
    LabelMap pred = predict_labels(fr.logits[static_cast<int>(Task::Seg)]);
    pred.n_classes = s.labels.n_classes;
    return pred;
}

/// Confusion-matrix metrics of the segmentation head over a dataset split.
inline SegMetrics evaluate_epoch(const ModelParams& params, std::span<const Sample> split) {
    if (split.empty()) throw DegenerateInputError("evaluate: empty dataset split");
    ConfusionMatrix cm(split[0].labels.n_classes);
    for (const Sample& s : split) {
        cm.add(confusion(predict_sample(params, s), s.labels));
    }
    return seg_metrics(cm);
}

/// Majority ground-truth class over the foreground pixels (background class
/// 0 when the sample has no foreground).
inline int dominant_class(const LabelMap& labels) {
    std::vector<std::int64_t> count(static_cast<std::size_t>(labels.n_classes), 0);
    for (auto v : labels.ids) ++count[v];
    int best = 0;
    std::int64_t best_n = -1;
    for (int c = 1; c < labels.n_classes; ++c) {
        if (count[static_cast<std::size_t>(c)] > best_n && count[static_cast<std::size_t>(c)] > 0) {
            best_n = count[static_cast<std::size_t>(c)];
            best = c;
        }
    }
    return best_n > 0 ? best : 0;
}

/// Bottleneck feature vectors over a split, one per bottleneck position,
/// tagged by the majority ground-truth class of its input block (ties to the
/// lowest class). Classes are balanced by an evenly-spaced deterministic
/// subsample of at most `per_class_cap` vectors each.
inline LatentDump capture_latent(const ModelParams& params, std::span<const Sample> split,
                                 int per_class_cap = 200) {
    TaskSet none{false, false, false, false};
    const int block = 1 << params.cfg.stages;
    std::int64_t dim = 0;
    std::vector<std::vector<double>> by_class_data;
    std::vector<std::int64_t> by_class_count;

    for (const Sample& s : split) {
        ForwardResult fr = forward(params, s.image, false, none);
        const Tensor& bott = fr.cache.bott_act;
        const Shape4 bs = bott.shape();
        dim = bs.c;
        if (by_class_data.empty()) {
            by_class_data.resize(static_cast<std::size_t>(s.labels.n_classes));
            by_class_count.assign(static_cast<std::size_t>(s.labels.n_classes), 0);
        }
        for (std::int64_t by = 0; by < bs.h; ++by) {
            for (std::int64_t bx = 0; bx < bs.w; ++bx) {
                std::vector<std::int64_t> count(by_class_data.size(), 0);
                for (int dy = 0; dy < block; ++dy)
                    for (int dx = 0; dx < block; ++dx)
                        ++count[s.labels.at(static_cast<int>(bx) * block + dx,
                                            static_cast<int>(by) * block + dy)];
                int tag = 0;
                for (std::size_t c = 1; c < count.size(); ++c) {
                    if (count[c] > count[static_cast<std::size_t>(tag)]) tag = static_cast<int>(c);
                }
                auto& bucket = by_class_data[static_cast<std::size_t>(tag)];
                for (std::int64_t c = 0; c < bs.c; ++c) bucket.push_back(bott.at(0, c, by, bx));
                ++by_class_count[static_cast<std::size_t>(tag)];
            }
        }
    }

    LatentDump dump;
    dump.dim = dim;
    for (std::size_t cls = 0; cls < by_class_data.size(); ++cls) {
        const std::int64_t n = by_class_count[cls];
        if (n == 0) continue;
        const std::int64_t take = std::min<std::int64_t>(n, per_class_cap);
        const double step = static_cast<double>(n) / static_cast<double>(take);
        for (std::int64_t i = 0; i < take; ++i) {
            const std::int64_t pick = static_cast<std::int64_t>(static_cast<double>(i) * step);
            const double* v = by_class_data[cls].data() + pick * dim;
            dump.data.insert(dump.data.end(), v, v + dim);
            dump.tags.push_back(static_cast<int>(cls));
        }
    }
    return dump;
}

// ---- the training loop ---------------------------------------------------------

struct TrainLogRow {
    std::int64_t iter = 0;
    double total = 0.0;
    std::array<std::optional<double>, kTaskCount> task_loss;  // batch means
    std::optional<double> holdout_miou;
};

struct TrainOutput {
    ModelParams params;
    std::vector<TrainLogRow> log;
    LatentDump latent;
};

namespace detail {

inline void sgd_step(ModelParams& params, const ParamGrads& grads, ModelParams& velocity,
                     double lr, double momentum) {
    auto step = [&](ConvParam& p, const ConvParam& g, ConvParam& v) {
        for (std::int64_t i = 0; i < p.w.size(); ++i) {
            v.w[i] = momentum * v.w[i] + g.w[i];
            p.w[i] -= lr * v.w[i];
        }
        for (std::size_t i = 0; i < p.b.size(); ++i) {
            v.b[i] = momentum * v.b[i] + g.b[i];
            p.b[i] -= lr * v.b[i];
        }
    };
    for (std::size_t i = 0; i < params.encoder.size(); ++i) {
        step(params.encoder[i], grads.encoder[i], velocity.encoder[i]);
    }
    step(params.bottleneck, grads.bottleneck, velocity.bottleneck);
    for (std::size_t i = 0; i < params.decoder.size(); ++i) {
        step(params.decoder[i], grads.decoder[i], velocity.decoder[i]);
    }
    for (int t = 0; t < kTaskCount; ++t) {
        step(params.heads[static_cast<std::size_t>(t)].pointwise,
             grads.heads[static_cast<std::size_t>(t)].pointwise,
             velocity.heads[static_cast<std::size_t>(t)].pointwise);
        step(params.heads[static_cast<std::size_t>(t)].spatial,
             grads.heads[static_cast<std::size_t>(t)].spatial,
             velocity.heads[static_cast<std::size_t>(t)].spatial);
    }
}

}  // namespace detail

/// SGD with momentum on the weighted multi-task objective over the enabled
/// tasks. Tasks that are disabled or carry weight zero contribute neither
/// loss nor gradient, so zeroing a weight is bit-identical to dropping the
/// task. Emits the final parameters, the per-iteration log, and a latent
/// dump over the held-out split.
inline TrainOutput train(const TrainConfig& cfg, std::span<const Sample> dataset) {
    cfg.validate();
    if (dataset.empty()) throw DegenerateInputError("train: empty dataset");

    const int img_w = dataset[0].labels.w;
    const int img_h = dataset[0].labels.h;
    const int crop = cfg.augment.crop > 0 ? cfg.augment.crop : img_w;
    if (crop > img_w || crop > img_h) throw ConfigError("train: crop exceeds image size");
    const int n_classes = dataset[0].labels.n_classes;

    const std::size_t holdout_count =
        static_cast<std::size_t>(cfg.holdout_fraction * static_cast<double>(dataset.size()));
    const std::size_t train_count = dataset.size() - holdout_count;
    if (train_count == 0) throw ConfigError("train: holdout split leaves no training samples");
    std::span<const Sample> train_split = dataset.subspan(0, train_count);
    std::span<const Sample> holdout_split = dataset.subspan(train_count);

    // effective per-task weights: disabled tasks are zeroed outright
    LossWeights w = cfg.weights;
    if (!cfg.tasks[static_cast<int>(Task::Edge)]) w.lambda_e = 0.0;
    if (!cfg.tasks[static_cast<int>(Task::Contour)]) w.lambda_c = 0.0;
    if (!cfg.tasks[static_cast<int>(Task::Energy)]) w.lambda_d = 0.0;
    int active = 0;
    std::array<bool, kTaskCount> run_task{};
    for (int t = 0; t < kTaskCount; ++t) {
        run_task[static_cast<std::size_t>(t)] = task_lambda(w, static_cast<Task>(t)) > 0.0;
        if (run_task[static_cast<std::size_t>(t)]) ++active;
    }
    if (active == 0) throw ConfigError("train: no task has positive weight");

    // full-image supervision, synthesized once
    std::vector<TargetBundle> full_targets;
    full_targets.reserve(train_count);
    for (const Sample& s : train_split) full_targets.push_back(build_targets(s.labels, s.instances, cfg.dt));

    // dataset-level class balancing: alpha over labels, contour weights over
    // contour maps, mu over bin occupancy
    std::vector<LabelMap> seg_maps, contour_maps, bin_maps;
    for (const auto& tb : full_targets) {
        seg_maps.push_back(tb.seg);
        contour_maps.push_back(tb.contour);
        bin_maps.push_back(tb.distq.as_labels());
    }
    const ClassWeights alpha = class_balance_weights(seg_maps);
    const ClassWeights contour_w = class_balance_weights(contour_maps);
    const ClassWeights mu = class_balance_weights(bin_maps);

    ModelConfig mc;
    mc.in_channels = static_cast<int>(dataset[0].image.shape().c);
    mc.classes = n_classes;
    mc.bins = cfg.dt.bins;
    mc.stages = cfg.stages;
    mc.base_width = cfg.base_width;
    mc.input_size = crop;
    mc.validate();

    ModelParams params = init_params(mc, cfg.seed);
    ModelParams velocity = zero_grads(params);
    Rng rng(mix_seed(cfg.seed, 0x7261696eULL));  // training stream

    const std::int64_t epoch_len =
        std::max<std::int64_t>(1, static_cast<std::int64_t>(train_count) / cfg.batch);

    TrainOutput out;
    out.log.reserve(static_cast<std::size_t>(cfg.iterations));

    for (std::int64_t iter = 1; iter <= cfg.iterations; ++iter) {
        // assemble the batch
        std::vector<Augmented> views;
        std::vector<TargetBundle> targets;
        views.reserve(static_cast<std::size_t>(cfg.batch));
        for (int b = 0; b < cfg.batch; ++b) {
            const std::size_t idx =
                train_count <= static_cast<std::size_t>(cfg.batch)
                    ? static_cast<std::size_t>(b) % train_count
                    : static_cast<std::size_t>(rng.uniform_int(train_count));
            Augmented view = augment(train_split[idx], rng, cfg.augment);
            targets.push_back(targets_for_view(full_targets[idx], view, cfg.dt));
            views.push_back(std::move(view));
        }
        Tensor batch(cfg.batch, mc.in_channels, crop, crop);
        for (int b = 0; b < cfg.batch; ++b) batch.set_sample(b, views[static_cast<std::size_t>(b)].sample.image);

        ForwardResult fr = forward(params, batch, false, run_task);

        // per-task batch-summed losses and logit gradients
        std::array<double, kTaskCount> task_values{};
        std::array<Tensor, kTaskCount> upstream;
        std::array<const Tensor*, kTaskCount> upstream_ptr{nullptr, nullptr, nullptr, nullptr};
        for (int t = 0; t < kTaskCount; ++t) {
            if (!run_task[static_cast<std::size_t>(t)]) continue;
            upstream[static_cast<std::size_t>(t)] = Tensor(fr.logits[static_cast<std::size_t>(t)].shape());
        }
        for (int b = 0; b < cfg.batch; ++b) {
            const TargetBundle& tb = targets[static_cast<std::size_t>(b)];
            for (int t = 0; t < kTaskCount; ++t) {
                if (!run_task[static_cast<std::size_t>(t)]) continue;
                const Task task = static_cast<Task>(t);
                Tensor logits = fr.logits[static_cast<std::size_t>(t)].slice_sample(b);
                LossGrad lg;
                switch (task) {
                    case Task::Edge:
                        lg = edge_loss(logits, tb.edge, w.psi1, w.psi2);
                        break;
                    case Task::Seg:
                        lg = seg_loss(logits, tb.seg, alpha.weight, w.psi3, w.psi4);
                        break;
                    case Task::Contour:
                        lg = contour_loss(logits, tb.contour, contour_w.weight, w.omega1, w.omega2);
                        break;
                    default:
                        lg = energy_loss(logits, tb.distq, mu.weight, w.psi5, w.psi6);
                        break;
                }
                task_values[static_cast<std::size_t>(t)] += lg.value;
                // d(total)/d(logit) carries the Eq. 1 prefactor
                const double scale = task_lambda(w, task) / (static_cast<double>(active) * cfg.batch);
                for (std::int64_t i = 0; i < lg.grad.size(); ++i) lg.grad[i] *= scale;
                upstream[static_cast<std::size_t>(t)].set_sample(b, lg.grad);
            }
        }
        const double total = total_loss(task_values, w, cfg.batch);
        if (!std::isfinite(total)) {
            throw DivergenceError("train: non-finite loss at iteration " + std::to_string(iter), iter);
        }

        for (int t = 0; t < kTaskCount; ++t) {
            if (run_task[static_cast<std::size_t>(t)]) upstream_ptr[static_cast<std::size_t>(t)] = &upstream[static_cast<std::size_t>(t)];
        }
        ParamGrads grads = backward(params, fr.cache, upstream_ptr);
        detail::sgd_step(params, grads, velocity, cfg.learning_rate, cfg.momentum);

        TrainLogRow row;
        row.iter = iter;
        row.total = total;
        for (int t = 0; t < kTaskCount; ++t) {
            if (cfg.tasks[static_cast<std::size_t>(t)] && run_task[static_cast<std::size_t>(t)]) {
                row.task_loss[static_cast<std::size_t>(t)] = task_values[static_cast<std::size_t>(t)] / cfg.batch;
            }
        }
        const bool eval_now =
            !holdout_split.empty() &&
            (iter == cfg.iterations ||
             (cfg.eval_every > 0 ? iter % cfg.eval_every == 0 : iter % epoch_len == 0));
        if (eval_now) {
            row.holdout_miou = evaluate_epoch(params, holdout_split).miou;
        }
        out.log.push_back(std::move(row));
    }

    if (!holdout_split.empty()) out.latent = capture_latent(params, holdout_split);
    out.params = std::move(params);
    return out;
}

inline void write_train_log_csv(const std::string& path, const std::vector<TrainLogRow>& log) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("csv: cannot open '" + path + "' for writing");
    os << "iter,total,loss_E,loss_S,loss_C,loss_D,holdout_miou\n";
    char buf[64];
    auto put = [&](const std::optional<double>& v) {
        os << ',';
        if (v) {
            std::snprintf(buf, sizeof(buf), "%.17g", *v);
            os << buf;
        }
    };
    for (const auto& row : log) {
        std::snprintf(buf, sizeof(buf), "%.17g", row.total);
        os << row.iter << ',' << buf;
        put(row.task_loss[static_cast<int>(Task::Edge)]);
        put(row.task_loss[static_cast<int>(Task::Seg)]);
        put(row.task_loss[static_cast<int>(Task::Contour)]);
        put(row.task_loss[static_cast<int>(Task::Energy)]);
        put(row.holdout_miou);
        os << '\n';
    }
}

}  // namespace mtlhg

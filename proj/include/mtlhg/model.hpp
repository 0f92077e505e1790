#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mtlhg/losses.hpp"
#include "mtlhg/ops.hpp"
#include "mtlhg/tensor.hpp"

namespace mtlhg {

// Minimal shared-trunk hourglass: encoder stages of (3x3 conv, ReLU, 2x2
// max-pool with indices), a bottleneck conv, a shared decoder of (unpool
// with the matching encoder indices, 3x3 conv, ReLU), and four task heads of
// (1x1 conv, ReLU, 8x8 "same" conv). Task heads produce logit maps at input
// resolution: edge 1 channel, segmentation and contour N channels, distance
// bins K channels.

struct ModelConfig {
    int in_channels = 3;
    int classes = 4;  // N
    int bins = 6;     // K
    int stages = 3;
    int base_width = 16;
    int input_size = 64;  // 0 accepts any pool-compatible size

    void validate() const {
        if (in_channels < 1) throw ConfigError("model: input channels must be >= 1");
        if (classes < 2) throw ConfigError("model: class count must be >= 2");
        if (bins < 2) throw ConfigError("model: bin count must be >= 2");
        if (stages < 1) throw ConfigError("model: need at least one encoder stage");
        if (base_width < 1) throw ConfigError("model: base width must be >= 1");
        if (input_size > 0 && input_size % (1 << stages) != 0) {
            throw ConfigError("model: input size " + std::to_string(input_size) +
                              " is not divisible by 2^" + std::to_string(stages));
        }
    }

    int encoder_out(int stage) const { return base_width << stage; }
    int trunk_out() const { return base_width; }
};

struct ConvParam {
    Tensor w;
    std::vector<double> b;
};

struct HeadParams {
    ConvParam pointwise;  // 1x1
    ConvParam spatial;    // 8x8, zero-pad 4 then crop
};

inline int head_depth(const ModelConfig& cfg, Task t) {
    switch (t) {
        case Task::Edge: return 1;
        case Task::Seg:
        case Task::Contour: return cfg.classes;
        default: return cfg.bins;
    }
}

inline const char* task_name(Task t) {
    switch (t) {
        case Task::Edge: return "E";
        case Task::Seg: return "S";
        case Task::Contour: return "C";
        default: return "D";
    }
}

struct ModelParams {
    ModelConfig cfg;
    std::vector<ConvParam> encoder;
    ConvParam bottleneck;
    std::vector<ConvParam> decoder;  // in application order, deepest first
    std::array<HeadParams, kTaskCount> heads;
};

/// Gradients in the same layout as the parameters.
using ParamGrads = ModelParams;

/// Fan-in-scaled uniform weights (variance 2/fan_in), zero biases,
/// deterministic per seed.
inline ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    auto make_conv = [&](int out_c, int in_c, int kh, int kw) {
        ConvParam p{Tensor(out_c, in_c, kh, kw), std::vector<double>(static_cast<std::size_t>(out_c), 0.0)};
        const double bound = std::sqrt(6.0 / (static_cast<double>(in_c) * kh * kw));
        for (std::int64_t i = 0; i < p.w.size(); ++i) p.w[i] = rng.uniform(-bound, bound);
        return p;
    };

    ModelParams mp;
    mp.cfg = cfg;
    int ch = cfg.in_channels;
    for (int s = 0; s < cfg.stages; ++s) {
        mp.encoder.push_back(make_conv(cfg.encoder_out(s), ch, 3, 3));
        ch = cfg.encoder_out(s);
    }
    mp.bottleneck = make_conv(ch, ch, 3, 3);
    for (int s = cfg.stages - 1; s >= 0; --s) {
        const int out_c = s > 0 ? cfg.encoder_out(s - 1) : cfg.base_width;
        mp.decoder.push_back(make_conv(out_c, ch, 3, 3));
        ch = out_c;
    }
    for (int t = 0; t < kTaskCount; ++t) {
        const int d = head_depth(cfg, static_cast<Task>(t));
        mp.heads[static_cast<std::size_t>(t)].pointwise = make_conv(d, cfg.trunk_out(), 1, 1);
        mp.heads[static_cast<std::size_t>(t)].spatial = make_conv(d, d, 8, 8);
    }
    return mp;
}

inline ParamGrads zero_grads(const ModelParams& params) {
    ParamGrads g;
    g.cfg = params.cfg;
    for (const auto& e : params.encoder) {
        g.encoder.push_back({Tensor(e.w.shape()), std::vector<double>(e.b.size(), 0.0)});
    }
    g.bottleneck = {Tensor(params.bottleneck.w.shape()),
                    std::vector<double>(params.bottleneck.b.size(), 0.0)};
    for (const auto& d : params.decoder) {
        g.decoder.push_back({Tensor(d.w.shape()), std::vector<double>(d.b.size(), 0.0)});
    }
    for (int t = 0; t < kTaskCount; ++t) {
        const auto& h = params.heads[static_cast<std::size_t>(t)];
        g.heads[static_cast<std::size_t>(t)].pointwise = {Tensor(h.pointwise.w.shape()),
                                                          std::vector<double>(h.pointwise.b.size(), 0.0)};
        g.heads[static_cast<std::size_t>(t)].spatial = {Tensor(h.spatial.w.shape()),
                                                        std::vector<double>(h.spatial.b.size(), 0.0)};
    }
    return g;
}

/// Applies `fn(name, conv)` over every parameter group in a fixed order.
template <typename P, typename Fn>
void visit_params(P& params, Fn&& fn) {
    for (std::size_t i = 0; i < params.encoder.size(); ++i) {
        fn("shared.enc" + std::to_string(i), params.encoder[i]);
    }
    fn(std::string("shared.bottleneck"), params.bottleneck);
    for (std::size_t i = 0; i < params.decoder.size(); ++i) {
        fn("shared.dec" + std::to_string(i), params.decoder[i]);
    }
    for (int t = 0; t < kTaskCount; ++t) {
        auto& h = params.heads[static_cast<std::size_t>(t)];
        const std::string base = std::string("head.") + task_name(static_cast<Task>(t));
        fn(base + ".conv1", h.pointwise);
        fn(base + ".conv2", h.spatial);
    }
}

struct StageCache {
    Tensor conv_in;
    Tensor preact;
    PoolIndices pool_idx;
    Tensor pooled;
};

struct DecoderCache {
    Tensor unpooled;
    Tensor preact;
    Tensor act;
};

struct HeadCache {
    Tensor p_preact;
    Tensor p_act;
};

struct ForwardCache {
    Shape4 input_shape{};
    Tensor input;
    std::vector<StageCache> enc;
    Tensor bott_preact;
    Tensor bott_act;
    std::vector<DecoderCache> dec;
    Tensor trunk_out;
    std::array<HeadCache, kTaskCount> heads;
    std::array<bool, kTaskCount> computed{};
};

/// Flattened bottleneck features, one row per sample, with a cluster tag per
/// sample (filled by the caller).
struct LatentDump {
    std::int64_t dim = 0;
    std::vector<double> data;
    std::vector<int> tags;

    std::int64_t count() const { return dim == 0 ? 0 : static_cast<std::int64_t>(data.size()) / dim; }
};

struct ForwardResult {
    std::array<Tensor, kTaskCount> logits;
    ForwardCache cache;
    LatentDump latent;
};

namespace detail {
// The 8x8 kernel cannot pad symmetrically; pad 4 overshoots by one row and
// column, which the crop drops again. The pair keeps head outputs exactly
// "same"-sized.
inline Tensor crop_last_row_col(const Tensor& t) {
    const Shape4 s = t.shape();
    Tensor out(s.n, s.c, s.h - 1, s.w - 1);
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t c = 0; c < s.c; ++c)
            for (std::int64_t y = 0; y + 1 < s.h; ++y)
                for (std::int64_t x = 0; x + 1 < s.w; ++x)
                    out.at(n, c, y, x) = t.at(n, c, y, x);
    return out;
}

inline Tensor pad_last_row_col(const Tensor& t) {
    const Shape4 s = t.shape();
    Tensor out(s.n, s.c, s.h + 1, s.w + 1);
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t c = 0; c < s.c; ++c)
            for (std::int64_t y = 0; y < s.h; ++y)
                for (std::int64_t x = 0; x < s.w; ++x)
                    out.at(n, c, y, x) = t.at(n, c, y, x);
    return out;
}
}  // namespace detail

/// Forward pass. `active` lets the trainer skip heads of disabled tasks;
/// logits of skipped heads stay empty. The latent dump, when requested,
/// flattens the post-activation bottleneck per sample.
inline ForwardResult forward(const ModelParams& params, const Tensor& images,
                             bool capture_latent = false,
                             std::array<bool, kTaskCount> active = {true, true, true, true}) {
    const ModelConfig& cfg = params.cfg;
    const Shape4 is = images.shape();
    if (is.c != cfg.in_channels) {
        throw DimensionError("forward: image channel axis " + std::to_string(is.c) +
                             " does not match model input channels " +
                             std::to_string(cfg.in_channels));
    }
    // fully convolutional: any size the pooling stack divides is acceptable,
    // cfg.input_size only records the training resolution
    const std::int64_t div = 1 << cfg.stages;
    if (is.h % div != 0 || is.w % div != 0 || is.h == 0 || is.w == 0) {
        throw DimensionError("forward: image size " + std::to_string(is.h) + "x" +
                             std::to_string(is.w) + " is not divisible by 2^" +
                             std::to_string(cfg.stages));
    }

    ForwardResult res;
    ForwardCache& c = res.cache;
    c.input_shape = is;
    c.input = images;

    Tensor cur = images;
    for (int s = 0; s < cfg.stages; ++s) {
        StageCache sc;
        sc.conv_in = cur;
        sc.preact = conv2d_forward(sc.conv_in, params.encoder[static_cast<std::size_t>(s)].w,
                                   params.encoder[static_cast<std::size_t>(s)].b, 1, 1);
        Tensor act = relu(sc.preact);
        auto [pooled, idx] = maxpool2x2(act);
        sc.pool_idx = std::move(idx);
        sc.pooled = pooled;
        cur = std::move(pooled);
        c.enc.push_back(std::move(sc));
    }

    c.bott_preact = conv2d_forward(cur, params.bottleneck.w, params.bottleneck.b, 1, 1);
    c.bott_act = relu(c.bott_preact);

    if (capture_latent) {
        const Shape4 bs = c.bott_act.shape();
        res.latent.dim = bs.c * bs.h * bs.w;
        res.latent.data.reserve(static_cast<std::size_t>(bs.size()));
        for (std::int64_t i = 0; i < bs.size(); ++i) res.latent.data.push_back(c.bott_act[i]);
        res.latent.tags.assign(static_cast<std::size_t>(bs.n), 0);
    }

    cur = c.bott_act;
    for (int d = 0; d < cfg.stages; ++d) {
        const int enc_stage = cfg.stages - 1 - d;
        DecoderCache dc;
        dc.unpooled = maxunpool2x2(cur, c.enc[static_cast<std::size_t>(enc_stage)].pool_idx);
        dc.preact = conv2d_forward(dc.unpooled, params.decoder[static_cast<std::size_t>(d)].w,
                                   params.decoder[static_cast<std::size_t>(d)].b, 1, 1);
        dc.act = relu(dc.preact);
        cur = dc.act;
        c.dec.push_back(std::move(dc));
    }
    c.trunk_out = cur;

    for (int t = 0; t < kTaskCount; ++t) {
        if (!active[static_cast<std::size_t>(t)]) continue;
        const HeadParams& h = params.heads[static_cast<std::size_t>(t)];
        HeadCache hc;
        hc.p_preact = conv2d_forward(c.trunk_out, h.pointwise.w, h.pointwise.b, 1, 0);
        hc.p_act = relu(hc.p_preact);
        Tensor wide = conv2d_forward(hc.p_act, h.spatial.w, h.spatial.b, 1, 4);
        res.logits[static_cast<std::size_t>(t)] = detail::crop_last_row_col(wide);
        c.heads[static_cast<std::size_t>(t)] = std::move(hc);
        c.computed[static_cast<std::size_t>(t)] = true;
    }
    return res;
}

/// Exact reverse-mode gradients. Each task's upstream is propagated through
/// the shared trunk separately and the per-task trunk gradients are summed
/// in fixed task order, so the shared gradient equals the sum of single-task
/// propagations bit for bit.
inline ParamGrads backward(const ModelParams& params, const ForwardCache& cache,
                           const std::array<const Tensor*, kTaskCount>& upstreams) {
    const ModelConfig& cfg = params.cfg;
    if (cache.enc.size() != static_cast<std::size_t>(cfg.stages) ||
        cache.dec.size() != static_cast<std::size_t>(cfg.stages)) {
        throw StateError("backward: cache does not match model configuration");
    }

    ParamGrads total = zero_grads(params);
    const Shape4 ts = cache.trunk_out.shape();

    for (int t = 0; t < kTaskCount; ++t) {
        const Tensor* up = upstreams[static_cast<std::size_t>(t)];
        if (up == nullptr) continue;
        if (!cache.computed[static_cast<std::size_t>(t)]) {
            throw StateError(std::string("backward: task ") + task_name(static_cast<Task>(t)) +
                             " was not computed in the forward pass");
        }
        const HeadParams& h = params.heads[static_cast<std::size_t>(t)];
        const HeadCache& hc = cache.heads[static_cast<std::size_t>(t)];
        const Shape4 want{ts.n, head_depth(cfg, static_cast<Task>(t)), ts.h, ts.w};
        if (up->shape() != want) {
            throw DimensionError(std::string("backward: task ") + task_name(static_cast<Task>(t)) +
                                 " upstream shape " + up->shape().str() + " does not match logits " +
                                 want.str());
        }

        // head: crop^-1, 8x8 conv, ReLU, 1x1 conv
        Tensor wide_up = detail::pad_last_row_col(*up);
        Conv2dGrads g2 = conv2d_backward(hc.p_act, h.spatial.w, wide_up, 1, 4);
        auto& hg = total.heads[static_cast<std::size_t>(t)];
        hg.spatial.w = std::move(g2.grad_weight);
        hg.spatial.b = std::move(g2.grad_bias);
        Tensor gp = relu_backward(hc.p_preact, g2.grad_input);
        Conv2dGrads g1 = conv2d_backward(cache.trunk_out, h.pointwise.w, gp, 1, 0);
        hg.pointwise.w = std::move(g1.grad_weight);
        hg.pointwise.b = std::move(g1.grad_bias);

        // shared trunk, this task's contribution alone
        Tensor g = std::move(g1.grad_input);
        for (int d = cfg.stages - 1; d >= 0; --d) {
            const DecoderCache& dc = cache.dec[static_cast<std::size_t>(d)];
            g = relu_backward(dc.preact, g);
            Conv2dGrads cg = conv2d_backward(dc.unpooled, params.decoder[static_cast<std::size_t>(d)].w, g, 1, 1);
            auto& dst = total.decoder[static_cast<std::size_t>(d)];
            for (std::int64_t i = 0; i < cg.grad_weight.size(); ++i) dst.w[i] += cg.grad_weight[i];
            for (std::size_t i = 0; i < cg.grad_bias.size(); ++i) dst.b[i] += cg.grad_bias[i];
            const int enc_stage = cfg.stages - 1 - d;
            g = maxunpool2x2_backward(cache.enc[static_cast<std::size_t>(enc_stage)].pool_idx,
                                      cg.grad_input);
        }

        g = relu_backward(cache.bott_preact, g);
        {
            Conv2dGrads cg = conv2d_backward(cache.enc.back().pooled, params.bottleneck.w, g, 1, 1);
            for (std::int64_t i = 0; i < cg.grad_weight.size(); ++i) total.bottleneck.w[i] += cg.grad_weight[i];
            for (std::size_t i = 0; i < cg.grad_bias.size(); ++i) total.bottleneck.b[i] += cg.grad_bias[i];
            g = std::move(cg.grad_input);
        }

        for (int s = cfg.stages - 1; s >= 0; --s) {
            const StageCache& sc = cache.enc[static_cast<std::size_t>(s)];
            g = maxpool2x2_backward(sc.pool_idx, g);
            g = relu_backward(sc.preact, g);
            Conv2dGrads cg = conv2d_backward(sc.conv_in, params.encoder[static_cast<std::size_t>(s)].w, g, 1, 1);
            auto& dst = total.encoder[static_cast<std::size_t>(s)];
            for (std::int64_t i = 0; i < cg.grad_weight.size(); ++i) dst.w[i] += cg.grad_weight[i];
            for (std::size_t i = 0; i < cg.grad_bias.size(); ++i) dst.b[i] += cg.grad_bias[i];
            g = std::move(cg.grad_input);
        }
    }
    return total;
}

}  // namespace mtlhg

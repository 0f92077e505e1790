#pragma once

#include <span>
#include <utility>
#include <vector>

#include "mtlhg/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mtlhg {

// Layer kernels. All of them are pure functions with one fixed accumulation
// order per output element (row-major loops, kernel loop innermost), so
// results are bit-deterministic across runs and thread counts; parallelism
// is only ever over independent output elements.

namespace detail {
inline void check_conv_shapes(const Shape4& in, const Shape4& w, std::int64_t bias_count,
                              std::int64_t stride, std::int64_t pad) {
    if (stride < 1) throw DimensionError("conv2d: stride must be >= 1");
    if (pad < 0) throw DimensionError("conv2d: pad must be >= 0");
    if (in.c != w.c) {
        throw DimensionError("conv2d: input channel axis " + std::to_string(in.c) +
                             " does not match weight in-channel axis " + std::to_string(w.c));
    }
    if (bias_count != w.n) {
        throw DimensionError("conv2d: bias length " + std::to_string(bias_count) +
                             " does not match weight out-channel axis " + std::to_string(w.n));
    }
    if (in.h + 2 * pad < w.h || in.w + 2 * pad < w.w) {
        throw DimensionError("conv2d: kernel " + w.str() + " does not fit padded input " + in.str());
    }
}
}  // namespace detail

/// Cross-correlation plus per-channel bias. Output spatial extent is
/// floor((h + 2*pad - kh)/stride) + 1 (same for width). Kernel ranges are
/// clipped per output position up front, so the inner loops run branch-free;
/// skipping out-of-bounds taps only drops exact-zero terms and leaves the
/// per-element accumulation order (ic, ky, kx ascending) intact.
inline Tensor conv2d_forward(const Tensor& input, const Tensor& weight,
                             std::span<const double> bias, std::int64_t stride = 1,
                             std::int64_t pad = 0) {
    const Shape4 is = input.shape();
    const Shape4 ws = weight.shape();
    detail::check_conv_shapes(is, ws, static_cast<std::int64_t>(bias.size()), stride, pad);

    const std::int64_t oh = (is.h + 2 * pad - ws.h) / stride + 1;
    const std::int64_t ow = (is.w + 2 * pad - ws.w) / stride + 1;
    Tensor out(is.n, ws.n, oh, ow);

    const double* in = input.data();
    const double* wt = weight.data();
    double* o = out.data();

#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t n = 0; n < is.n; ++n) {
        for (std::int64_t oc = 0; oc < ws.n; ++oc) {
            for (std::int64_t oy = 0; oy < oh; ++oy) {
                const std::int64_t ky0 = std::max<std::int64_t>(0, pad - oy * stride);
                const std::int64_t ky1 = std::min(ws.h, is.h + pad - oy * stride);
                for (std::int64_t ox = 0; ox < ow; ++ox) {
                    const std::int64_t kx0 = std::max<std::int64_t>(0, pad - ox * stride);
                    const std::int64_t kx1 = std::min(ws.w, is.w + pad - ox * stride);
                    double acc = bias[static_cast<std::size_t>(oc)];
                    for (std::int64_t ic = 0; ic < is.c; ++ic) {
                        const double* in_plane = in + (n * is.c + ic) * is.h * is.w;
                        const double* w_plane = wt + (oc * ws.c + ic) * ws.h * ws.w;
                        for (std::int64_t ky = ky0; ky < ky1; ++ky) {
                            const double* in_row = in_plane + (oy * stride + ky - pad) * is.w +
                                                   ox * stride - pad;
                            const double* w_row = w_plane + ky * ws.w;
                            for (std::int64_t kx = kx0; kx < kx1; ++kx) {
                                acc += in_row[kx] * w_row[kx];
                            }
                        }
                    }
                    o[((n * ws.n + oc) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    return out;
}

struct Conv2dGrads {
    Tensor grad_input;
    Tensor grad_weight;
    std::vector<double> grad_bias;
};

/// Analytic gradients of conv2d_forward. All three outputs are written as
/// gathers so each element has a fixed accumulation order.
inline Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weight,
                                   const Tensor& upstream, std::int64_t stride = 1,
                                   std::int64_t pad = 0) {
    const Shape4 is = input.shape();
    const Shape4 ws = weight.shape();
    const std::int64_t oh = (is.h + 2 * pad - ws.h) / stride + 1;
    const std::int64_t ow = (is.w + 2 * pad - ws.w) / stride + 1;
    const Shape4 expect{is.n, ws.n, oh, ow};
    if (upstream.shape() != expect) {
        throw DimensionError("conv2d_backward: upstream shape " + upstream.shape().str() +
                             " does not match forward output " + expect.str());
    }
    if (is.c != ws.c) {
        throw DimensionError("conv2d_backward: input channel axis " + std::to_string(is.c) +
                             " does not match weight in-channel axis " + std::to_string(ws.c));
    }

    Conv2dGrads g{Tensor(is), Tensor(ws), std::vector<double>(static_cast<std::size_t>(ws.n), 0.0)};
    const double* in = input.data();
    const double* wt = weight.data();
    const double* up = upstream.data();

    // grad_bias: plain sum over upstream per out-channel.
    for (std::int64_t n = 0; n < is.n; ++n) {
        for (std::int64_t oc = 0; oc < ws.n; ++oc) {
            double acc = 0.0;
            const double* u = up + (n * ws.n + oc) * oh * ow;
            for (std::int64_t i = 0; i < oh * ow; ++i) acc += u[i];
            g.grad_bias[static_cast<std::size_t>(oc)] += acc;
        }
    }

    // grad_weight(oc,ic,ky,kx) = sum over (n,oy,ox) of upstream * input, the
    // (oy, ox) windows clipped up front.
    double* gw = g.grad_weight.data();
#pragma omp parallel for schedule(static)
    for (std::int64_t oc = 0; oc < ws.n; ++oc) {
        for (std::int64_t ic = 0; ic < ws.c; ++ic) {
            for (std::int64_t ky = 0; ky < ws.h; ++ky) {
                // oy*stride + ky - pad in [0, h)
                const std::int64_t oy0 =
                    std::max<std::int64_t>(0, (pad - ky + stride - 1) / stride);
                const std::int64_t oy1 =
                    std::min(oh, (is.h - 1 + pad - ky) / stride + 1);
                for (std::int64_t kx = 0; kx < ws.w; ++kx) {
                    const std::int64_t ox0 =
                        std::max<std::int64_t>(0, (pad - kx + stride - 1) / stride);
                    const std::int64_t ox1 =
                        std::min(ow, (is.w - 1 + pad - kx) / stride + 1);
                    double acc = 0.0;
                    for (std::int64_t n = 0; n < is.n; ++n) {
                        const double* u_plane = up + (n * ws.n + oc) * oh * ow;
                        const double* in_plane = in + (n * is.c + ic) * is.h * is.w;
                        for (std::int64_t oy = oy0; oy < oy1; ++oy) {
                            const double* u_row = u_plane + oy * ow;
                            const double* in_row = in_plane + (oy * stride + ky - pad) * is.w;
                            if (stride == 1) {
                                const double* in_off = in_row + kx - pad;
                                for (std::int64_t ox = ox0; ox < ox1; ++ox) {
                                    acc += u_row[ox] * in_off[ox];
                                }
                            } else {
                                for (std::int64_t ox = ox0; ox < ox1; ++ox) {
                                    acc += u_row[ox] * in_row[ox * stride + kx - pad];
                                }
                            }
                        }
                    }
                    gw[((oc * ws.c + ic) * ws.h + ky) * ws.w + kx] = acc;
                }
            }
        }
    }

    // grad_input(n,ic,iy,ix) = sum over (oc,ky,kx) with oy,ox hitting it;
    // branch-free ranges for the dense stride-1 case, checked loop otherwise.
    double* gi = g.grad_input.data();
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t n = 0; n < is.n; ++n) {
        for (std::int64_t ic = 0; ic < is.c; ++ic) {
            for (std::int64_t iy = 0; iy < is.h; ++iy) {
                for (std::int64_t ix = 0; ix < is.w; ++ix) {
                    double acc = 0.0;
                    if (stride == 1) {
                        const std::int64_t ky0 = std::max<std::int64_t>(0, iy + pad - oh + 1);
                        const std::int64_t ky1 = std::min(ws.h, iy + pad + 1);
                        const std::int64_t kx0 = std::max<std::int64_t>(0, ix + pad - ow + 1);
                        const std::int64_t kx1 = std::min(ws.w, ix + pad + 1);
                        for (std::int64_t oc = 0; oc < ws.n; ++oc) {
                            const double* u_plane = up + (n * ws.n + oc) * oh * ow;
                            const double* w_plane = wt + (oc * ws.c + ic) * ws.h * ws.w;
                            for (std::int64_t ky = ky0; ky < ky1; ++ky) {
                                const double* u_row = u_plane + (iy + pad - ky) * ow + ix + pad;
                                const double* w_row = w_plane + ky * ws.w;
                                for (std::int64_t kx = kx0; kx < kx1; ++kx) {
                                    acc += u_row[-kx] * w_row[kx];
                                }
                            }
                        }
                    } else {
                        for (std::int64_t oc = 0; oc < ws.n; ++oc) {
                            const double* u_plane = up + (n * ws.n + oc) * oh * ow;
                            const double* w_plane = wt + (oc * ws.c + ic) * ws.h * ws.w;
                            for (std::int64_t ky = 0; ky < ws.h; ++ky) {
                                const std::int64_t num_y = iy + pad - ky;
                                if (num_y < 0 || num_y % stride != 0) continue;
                                const std::int64_t oy = num_y / stride;
                                if (oy >= oh) continue;
                                for (std::int64_t kx = 0; kx < ws.w; ++kx) {
                                    const std::int64_t num_x = ix + pad - kx;
                                    if (num_x < 0 || num_x % stride != 0) continue;
                                    const std::int64_t ox = num_x / stride;
                                    if (ox >= ow) continue;
                                    acc += u_plane[oy * ow + ox] * w_plane[ky * ws.w + kx];
                                }
                            }
                        }
                    }
                    gi[((n * is.c + ic) * is.h + iy) * is.w + ix] = acc;
                }
            }
        }
    }
    return g;
}

/// 2x2 max-pool with stride 2. Ties resolve to the lowest flat index so the
/// matching unpool placement is well defined.
inline std::pair<Tensor, PoolIndices> maxpool2x2(const Tensor& input) {
    const Shape4 is = input.shape();
    if (is.h % 2 != 0 || is.w % 2 != 0) {
        throw DimensionError("maxpool2x2: spatial extents must be even, got " + is.str());
    }
    const std::int64_t oh = is.h / 2;
    const std::int64_t ow = is.w / 2;
    Tensor out(is.n, is.c, oh, ow);
    PoolIndices ind{Shape4{is.n, is.c, oh, ow},
                    std::vector<std::int64_t>(static_cast<std::size_t>(is.n * is.c * oh * ow), 0)};
    const double* in = input.data();
    double* o = out.data();

    for (std::int64_t p = 0; p < is.n * is.c; ++p) {
        const double* plane = in + p * is.h * is.w;
        for (std::int64_t oy = 0; oy < oh; ++oy) {
            for (std::int64_t ox = 0; ox < ow; ++ox) {
                std::int64_t best = (2 * oy) * is.w + 2 * ox;
                double best_v = plane[best];
                for (std::int64_t dy = 0; dy < 2; ++dy) {
                    for (std::int64_t dx = 0; dx < 2; ++dx) {
                        const std::int64_t f = (2 * oy + dy) * is.w + 2 * ox + dx;
                        if (plane[f] > best_v) {
                            best_v = plane[f];
                            best = f;
                        }
                    }
                }
                o[(p * oh + oy) * ow + ox] = best_v;
                ind.idx[static_cast<std::size_t>((p * oh + oy) * ow + ox)] = best;
            }
        }
    }
    return {std::move(out), std::move(ind)};
}

/// Places pooled values back at their recorded argmax positions, zeros
/// elsewhere. Exact inverse of the placement that maxpool2x2 recorded.
inline Tensor maxunpool2x2(const Tensor& input, const PoolIndices& indices) {
    const Shape4 is = input.shape();
    if (indices.shape != is) {
        throw DimensionError("maxunpool2x2: indices shape " + indices.shape.str() +
                             " does not match input " + is.str());
    }
    const std::int64_t oh = is.h * 2;
    const std::int64_t ow = is.w * 2;
    Tensor out(is.n, is.c, oh, ow);
    const double* in = input.data();
    double* o = out.data();
    for (std::int64_t p = 0; p < is.n * is.c; ++p) {
        double* plane = o + p * oh * ow;
        for (std::int64_t i = 0; i < is.h * is.w; ++i) {
            const std::int64_t f = indices.idx[static_cast<std::size_t>(p * is.h * is.w + i)];
            const std::int64_t oy = f / ow;
            const std::int64_t ox = f % ow;
            const std::int64_t wy = (i / is.w) * 2;
            const std::int64_t wx = (i % is.w) * 2;
            if (oy < wy || oy > wy + 1 || ox < wx || ox > wx + 1) {
                throw DimensionError("maxunpool2x2: index " + std::to_string(f) +
                                     " escapes its 2x2 window");
            }
            plane[f] = in[p * is.h * is.w + i];
        }
    }
    return out;
}

/// Routes upstream gradient of the pooled output back to argmax positions.
/// Same scatter pattern as unpooling.
inline Tensor maxpool2x2_backward(const PoolIndices& indices, const Tensor& upstream) {
    if (indices.shape != upstream.shape()) {
        throw DimensionError("maxpool2x2_backward: upstream shape " + upstream.shape().str() +
                             " does not match indices " + indices.shape.str());
    }
    return maxunpool2x2(upstream, indices);
}

/// Gradient of maxunpool2x2: gathers upstream at the recorded positions.
inline Tensor maxunpool2x2_backward(const PoolIndices& indices, const Tensor& upstream) {
    const Shape4 us = upstream.shape();
    if (us.n != indices.shape.n || us.c != indices.shape.c || us.h != indices.shape.h * 2 ||
        us.w != indices.shape.w * 2) {
        throw DimensionError("maxunpool2x2_backward: upstream shape " + us.str() +
                             " does not double indices shape " + indices.shape.str());
    }
    Tensor out(indices.shape);
    const double* up = upstream.data();
    double* o = out.data();
    const std::int64_t per = indices.shape.h * indices.shape.w;
    for (std::int64_t p = 0; p < indices.shape.n * indices.shape.c; ++p) {
        for (std::int64_t i = 0; i < per; ++i) {
            o[p * per + i] = up[p * us.h * us.w + indices.idx[static_cast<std::size_t>(p * per + i)]];
        }
    }
    return out;
}

inline Tensor relu(const Tensor& input) {
    Tensor out(input.shape());
    for (std::int64_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0 ? input[i] : 0.0;
    return out;
}

/// Derivative taken as 0 at exactly 0.
inline Tensor relu_backward(const Tensor& input, const Tensor& upstream) {
    if (input.shape() != upstream.shape()) {
        throw DimensionError("relu_backward: upstream shape " + upstream.shape().str() +
                             " does not match input " + input.shape().str());
    }
    Tensor out(input.shape());
    for (std::int64_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0 ? upstream[i] : 0.0;
    return out;
}

inline double sigmoid_scalar(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& input) {
    Tensor out(input.shape());
    for (std::int64_t i = 0; i < input.size(); ++i) out[i] = sigmoid_scalar(input[i]);
    return out;
}

/// Backward from the cached forward output y: dy/dx = y*(1-y).
inline Tensor sigmoid_backward(const Tensor& output, const Tensor& upstream) {
    if (output.shape() != upstream.shape()) {
        throw DimensionError("sigmoid_backward: upstream shape " + upstream.shape().str() +
                             " does not match output " + output.shape().str());
    }
    Tensor out(output.shape());
    for (std::int64_t i = 0; i < output.size(); ++i) out[i] = output[i] * (1.0 - output[i]) * upstream[i];
    return out;
}

}  // namespace mtlhg

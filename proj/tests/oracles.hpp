#pragma once

// Test-only reference implementations. These stay independent of the library
// code paths they check: plain nested loops written straight from the
// definitions, no shared helpers beyond the data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "mtlhg/raster.hpp"
#include "mtlhg/tensor.hpp"

namespace oracle {

// Six nested loops over an explicitly zero-padded copy of the input. Same
// accumulation order as the production kernel (ic, ky, kx innermost), so
// equality is exact.
inline mtlhg::Tensor conv2d_naive(const mtlhg::Tensor& input, const mtlhg::Tensor& weight,
                                  const std::vector<double>& bias, std::int64_t stride,
                                  std::int64_t pad) {
    const auto is = input.shape();
    const auto ws = weight.shape();
    const std::int64_t ph = is.h + 2 * pad;
    const std::int64_t pw = is.w + 2 * pad;
    mtlhg::Tensor padded(is.n, is.c, ph, pw);
    for (std::int64_t n = 0; n < is.n; ++n)
        for (std::int64_t c = 0; c < is.c; ++c)
            for (std::int64_t y = 0; y < is.h; ++y)
                for (std::int64_t x = 0; x < is.w; ++x)
                    padded.at(n, c, y + pad, x + pad) = input.at(n, c, y, x);

    const std::int64_t oh = (ph - ws.h) / stride + 1;
    const std::int64_t ow = (pw - ws.w) / stride + 1;
    mtlhg::Tensor out(is.n, ws.n, oh, ow);
    for (std::int64_t n = 0; n < is.n; ++n)
        for (std::int64_t oc = 0; oc < ws.n; ++oc)
            for (std::int64_t oy = 0; oy < oh; ++oy)
                for (std::int64_t ox = 0; ox < ow; ++ox) {
                    double acc = bias[static_cast<std::size_t>(oc)];
                    for (std::int64_t ic = 0; ic < is.c; ++ic)
                        for (std::int64_t ky = 0; ky < ws.h; ++ky)
                            for (std::int64_t kx = 0; kx < ws.w; ++kx)
                                acc += padded.at(n, ic, oy * stride + ky, ox * stride + kx) *
                                       weight.at(oc, ic, ky, kx);
                    out.at(n, oc, oy, ox) = acc;
                }
    return out;
}

// Window-by-window scan.
inline mtlhg::Tensor maxpool_naive(const mtlhg::Tensor& input) {
    const auto is = input.shape();
    mtlhg::Tensor out(is.n, is.c, is.h / 2, is.w / 2);
    for (std::int64_t n = 0; n < is.n; ++n)
        for (std::int64_t c = 0; c < is.c; ++c)
            for (std::int64_t y = 0; y < is.h / 2; ++y)
                for (std::int64_t x = 0; x < is.w / 2; ++x) {
                    double m = input.at(n, c, 2 * y, 2 * x);
                    m = std::max(m, input.at(n, c, 2 * y, 2 * x + 1));
                    m = std::max(m, input.at(n, c, 2 * y + 1, 2 * x));
                    m = std::max(m, input.at(n, c, 2 * y + 1, 2 * x + 1));
                    out.at(n, c, y, x) = m;
                }
    return out;
}

// A pixel is a boundary pixel iff some D-4 neighbor carries a different
// instance id; neighbors beyond the image border are ignored.
inline std::vector<std::uint8_t> raw_boundary_naive(const mtlhg::InstanceMap& inst) {
    std::vector<std::uint8_t> out(static_cast<std::size_t>(inst.w * inst.h), 0);
    const int dx[4] = {0, 0, 1, -1};
    const int dy[4] = {-1, 1, 0, 0};
    for (int y = 0; y < inst.h; ++y)
        for (int x = 0; x < inst.w; ++x)
            for (int k = 0; k < 4; ++k) {
                const int ny = y + dy[k], nx = x + dx[k];
                if (ny < 0 || ny >= inst.h || nx < 0 || nx >= inst.w) continue;
                if (inst.at(nx, ny) != inst.at(x, y)) {
                    out[static_cast<std::size_t>(y * inst.w + x)] = 1;
                    break;
                }
            }
    return out;
}

// Per-pixel disk stamping with the radius-2 disk (dx*dx+dy*dy <= 4).
inline std::vector<std::uint8_t> dilate_naive(const std::vector<std::uint8_t>& mask, int w, int h) {
    std::vector<std::uint8_t> out(mask.size(), 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!mask[static_cast<std::size_t>(y * w + x)]) continue;
            for (int dy = -2; dy <= 2; ++dy)
                for (int dx = -2; dx <= 2; ++dx) {
                    if (dx * dx + dy * dy > 4) continue;
                    const int ny = y + dy, nx = x + dx;
                    if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                    out[static_cast<std::size_t>(ny * w + nx)] = 1;
                }
        }
    return out;
}

// All-pairs min over the boundary set Q, ceiling applied exactly through
// integer square comparison, then the truncation and the inside mask.
inline std::vector<int> truncated_dt_naive(const mtlhg::InstanceMap& inst,
                                           const std::vector<std::uint8_t>& q_mask, int R) {
    std::vector<int> out(static_cast<std::size_t>(inst.w * inst.h), 0);
    std::vector<std::pair<int, int>> q;
    for (int y = 0; y < inst.h; ++y)
        for (int x = 0; x < inst.w; ++x)
            if (q_mask[static_cast<std::size_t>(y * inst.w + x)]) q.emplace_back(x, y);
    for (int y = 0; y < inst.h; ++y)
        for (int x = 0; x < inst.w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y * inst.w + x);
            if (inst.at(x, y) == 0) {
                out[i] = 0;
                continue;
            }
            long best = -1;
            for (auto [qx, qy] : q) {
                const long d2 = static_cast<long>(qx - x) * (qx - x) +
                                static_cast<long>(qy - y) * (qy - y);
                if (best < 0 || d2 < best) best = d2;
            }
            int ceil_d = 0;
            if (best > 0) {
                ceil_d = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(best))));
                while (static_cast<long>(ceil_d) * ceil_d < best) ++ceil_d;
                while (ceil_d > 0 && static_cast<long>(ceil_d - 1) * (ceil_d - 1) >= best) --ceil_d;
            }
            out[i] = std::min(ceil_d, R);
        }
    return out;
}

}  // namespace oracle

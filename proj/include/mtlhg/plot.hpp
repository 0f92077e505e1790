#pragma once

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "mtlhg/common.hpp"

namespace mtlhg {

// Deterministic chart rendering: an RGB canvas with Bresenham lines and a
// tiny 3x5 block font, encoded as PNG through zlib. Same inputs, same bytes.

namespace detail {

inline void png_put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
    out.push_back(static_cast<unsigned char>(v & 0xff));
}

inline void png_chunk(std::vector<unsigned char>& out, const char type[4],
                      const std::vector<unsigned char>& data) {
    png_put_u32(out, static_cast<std::uint32_t>(data.size()));
    const std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const uLong crc = crc32(crc32(0L, Z_NULL, 0), out.data() + start,
                            static_cast<uInt>(out.size() - start));
    png_put_u32(out, static_cast<std::uint32_t>(crc));
}

// 3x5 glyphs, 5 rows of 3 bits each, uppercase-only alphabet.
inline const unsigned char* glyph3x5(char ch) {
    static const unsigned char digits[10][5] = {
        {7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 7, 1, 7}, {5, 5, 7, 1, 1},
        {7, 4, 7, 1, 7}, {7, 4, 7, 5, 7}, {7, 1, 1, 2, 2}, {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7}};
    static const unsigned char letters[26][5] = {
        {2, 5, 7, 5, 5},  // A
        {6, 5, 6, 5, 6},  // B
        {3, 4, 4, 4, 3},  // C
        {6, 5, 5, 5, 6},  // D
        {7, 4, 6, 4, 7},  // E
        {7, 4, 6, 4, 4},  // F
        {3, 4, 5, 5, 3},  // G
        {5, 5, 7, 5, 5},  // H
        {7, 2, 2, 2, 7},  // I
        {1, 1, 1, 5, 2},  // J
        {5, 5, 6, 5, 5},  // K
        {4, 4, 4, 4, 7},  // L
        {5, 7, 7, 5, 5},  // M
        {6, 5, 5, 5, 5},  // N
        {2, 5, 5, 5, 2},  // O
        {6, 5, 6, 4, 4},  // P
        {2, 5, 5, 2, 1},  // Q
        {6, 5, 6, 6, 5},  // R
        {3, 4, 2, 1, 6},  // S
        {7, 2, 2, 2, 2},  // T
        {5, 5, 5, 5, 7},  // U
        {5, 5, 5, 5, 2},  // V
        {5, 5, 7, 7, 5},  // W
        {5, 5, 2, 5, 5},  // X
        {5, 5, 2, 2, 2},  // Y
        {7, 1, 2, 4, 7},  // Z
    };
    static const unsigned char dot[5] = {0, 0, 0, 0, 2};
    static const unsigned char dash[5] = {0, 0, 7, 0, 0};
    static const unsigned char underscore[5] = {0, 0, 0, 0, 7};
    static const unsigned char percent[5] = {5, 1, 2, 4, 5};
    static const unsigned char comma[5] = {0, 0, 0, 2, 4};
    static const unsigned char plus[5] = {0, 2, 7, 2, 0};
    static const unsigned char blank[5] = {0, 0, 0, 0, 0};
    if (ch >= '0' && ch <= '9') return digits[ch - '0'];
    if (ch >= 'A' && ch <= 'Z') return letters[ch - 'A'];
    if (ch >= 'a' && ch <= 'z') return letters[ch - 'a'];
    switch (ch) {
        case '.': return dot;
        case '-': return dash;
        case '_': return underscore;
        case '%': return percent;
        case ',': return comma;
        case '+': return plus;
        default: return blank;
    }
}

}  // namespace detail

struct Rgb {
    unsigned char r = 0, g = 0, b = 0;
};

class Canvas {
public:
    Canvas(int w, int h, Rgb fill = {255, 255, 255})
        : w_(w), h_(h), px_(static_cast<std::size_t>(w) * h * 3) {
        for (int i = 0; i < w * h; ++i) set_index(i, fill);
    }

    int width() const { return w_; }
    int height() const { return h_; }

    void set(int x, int y, Rgb c) {
        if (x < 0 || x >= w_ || y < 0 || y >= h_) return;
        set_index(y * w_ + x, c);
    }

    void line(int x0, int y0, int x1, int y1, Rgb c) {
        const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
        const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        while (true) {
            set(x0, y0, c);
            if (x0 == x1 && y0 == y1) break;
            const int e2 = 2 * err;
            if (e2 >= dy) { err += dy; x0 += sx; }
            if (e2 <= dx) { err += dx; y0 += sy; }
        }
    }

    void fill_rect(int x, int y, int w, int h, Rgb c) {
        for (int yy = y; yy < y + h; ++yy)
            for (int xx = x; xx < x + w; ++xx) set(xx, yy, c);
    }

    /// 3x5 font at integer scale; lowercase renders as uppercase.
    void text(int x, int y, const std::string& s, Rgb c, int scale = 1) {
        int cx = x;
        for (char ch : s) {
            const unsigned char* g = detail::glyph3x5(ch);
            for (int row = 0; row < 5; ++row)
                for (int col = 0; col < 3; ++col)
                    if (g[row] & (4 >> col)) fill_rect(cx + col * scale, y + row * scale, scale, scale, c);
            cx += 4 * scale;
        }
    }

    static int text_width(const std::string& s, int scale = 1) {
        return static_cast<int>(s.size()) * 4 * scale;
    }

    void write_png(const std::string& path) const {
        // raw scanlines with filter byte 0
        std::vector<unsigned char> raw;
        raw.reserve(static_cast<std::size_t>(h_) * (1 + static_cast<std::size_t>(w_) * 3));
        for (int y = 0; y < h_; ++y) {
            raw.push_back(0);
            raw.insert(raw.end(), px_.begin() + static_cast<std::ptrdiff_t>(y) * w_ * 3,
                       px_.begin() + (static_cast<std::ptrdiff_t>(y) + 1) * w_ * 3);
        }
        uLongf bound = compressBound(static_cast<uLong>(raw.size()));
        std::vector<unsigned char> compressed(bound);
        if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK) {
            throw FormatError("png: compression failed");
        }
        compressed.resize(bound);

        std::vector<unsigned char> out;
        const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
        out.insert(out.end(), sig, sig + 8);
        std::vector<unsigned char> ihdr;
        detail::png_put_u32(ihdr, static_cast<std::uint32_t>(w_));
        detail::png_put_u32(ihdr, static_cast<std::uint32_t>(h_));
        ihdr.push_back(8);   // bit depth
        ihdr.push_back(2);   // RGB
        ihdr.push_back(0);   // compression
        ihdr.push_back(0);   // filter
        ihdr.push_back(0);   // no interlace
        detail::png_chunk(out, "IHDR", ihdr);
        detail::png_chunk(out, "IDAT", compressed);
        detail::png_chunk(out, "IEND", {});

        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        if (!os) throw FormatError("png: cannot open '" + path + "' for writing");
        os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
        if (!os) throw FormatError("png: write to '" + path + "' failed");
    }

private:
    void set_index(int i, Rgb c) {
        px_[static_cast<std::size_t>(i) * 3] = c.r;
        px_[static_cast<std::size_t>(i) * 3 + 1] = c.g;
        px_[static_cast<std::size_t>(i) * 3 + 2] = c.b;
    }

    int w_, h_;
    std::vector<unsigned char> px_;
};

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;  // NaN breaks the polyline
};

/// Line chart with auto-ranged axes, tick labels, and a legend.
inline void render_chart(const std::vector<Series>& series, const std::string& x_label,
                         const std::string& y_label, const std::string& out_path,
                         int width = 640, int height = 420) {
    if (series.empty()) throw ConfigError("plot: no series to draw");
    double x_min = 1e300, x_max = -1e300, y_min = 1e300, y_max = -1e300;
    bool any = false;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (std::isnan(s.y[i])) continue;
            any = true;
            x_min = std::min(x_min, s.x[i]);
            x_max = std::max(x_max, s.x[i]);
            y_min = std::min(y_min, s.y[i]);
            y_max = std::max(y_max, s.y[i]);
        }
    }
    if (!any) throw ConfigError("plot: series hold no finite points");
    if (x_max == x_min) { x_max += 1.0; x_min -= 1.0; }
    if (y_max == y_min) { y_max += 1.0; y_min -= 1.0; }
    const double y_pad = 0.05 * (y_max - y_min);
    y_min -= y_pad;
    y_max += y_pad;

    const int ml = 56, mr = 14, mt = 16, mb = 34;
    const int pw = width - ml - mr, ph = height - mt - mb;
    Canvas canvas(width, height);
    const Rgb black{0, 0, 0}, grey{200, 200, 200};
    static const Rgb palette[6] = {{31, 119, 180}, {214, 39, 40},  {44, 160, 44},
                                   {255, 127, 14}, {148, 103, 189}, {23, 190, 207}};

    auto to_px = [&](double x, double y) {
        const int px = ml + static_cast<int>(std::lround((x - x_min) / (x_max - x_min) * (pw - 1)));
        const int py = mt + ph - 1 - static_cast<int>(std::lround((y - y_min) / (y_max - y_min) * (ph - 1)));
        return std::pair<int, int>(px, py);
    };

    char buf[32];
    for (int tick = 0; tick <= 4; ++tick) {
        const double ty = y_min + (y_max - y_min) * tick / 4.0;
        const auto [gx, gy] = to_px(x_min, ty);
        canvas.line(ml, gy, ml + pw - 1, gy, grey);
        std::snprintf(buf, sizeof(buf), "%.4g", ty);
        canvas.text(ml - Canvas::text_width(buf) - 4, gy - 2, buf, black);
        (void)gx;
    }
    for (int tick = 0; tick <= 4; ++tick) {
        const double tx = x_min + (x_max - x_min) * tick / 4.0;
        const auto [gx, gy] = to_px(tx, y_min);
        std::snprintf(buf, sizeof(buf), "%.4g", tx);
        canvas.text(gx - Canvas::text_width(buf) / 2, mt + ph + 6, buf, black);
        (void)gy;
    }
    canvas.line(ml, mt, ml, mt + ph - 1, black);
    canvas.line(ml, mt + ph - 1, ml + pw - 1, mt + ph - 1, black);
    canvas.text(ml + pw / 2 - Canvas::text_width(x_label) / 2, height - 12, x_label, black);
    canvas.text(4, mt - 10, y_label, black);

    for (std::size_t s = 0; s < series.size(); ++s) {
        const Rgb color = palette[s % 6];
        bool have_prev = false;
        int prev_x = 0, prev_y = 0;
        for (std::size_t i = 0; i < series[s].x.size(); ++i) {
            if (std::isnan(series[s].y[i])) {
                have_prev = false;
                continue;
            }
            const auto [px, py] = to_px(series[s].x[i], series[s].y[i]);
            if (have_prev) canvas.line(prev_x, prev_y, px, py, color);
            canvas.fill_rect(px - 1, py - 1, 3, 3, color);
            prev_x = px;
            prev_y = py;
            have_prev = true;
        }
        // legend entry
        const int ly = mt + 6 + static_cast<int>(s) * 12;
        canvas.fill_rect(ml + 8, ly, 8, 8, color);
        canvas.text(ml + 20, ly + 1, series[s].label, black);
    }
    canvas.write_png(out_path);
}

}  // namespace mtlhg

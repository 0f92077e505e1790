#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "mtlhg/raster.hpp"
#include "mtlhg/tensor.hpp"

namespace mtlhg {

// Raster file IO. Label maps travel as 8-bit single-channel PGM, instance
// maps as 16-bit PGM (big-endian sample order per the PNM spec), images as
// 8-bit PPM. Everything is written with a fixed header layout so reruns are
// byte-identical.

namespace detail {

inline void read_pnm_header(std::istream& is, const char* magic, int& w, int& h, int& maxval) {
    std::string tag;
    is >> tag;
    if (tag != magic) throw FormatError(std::string("image: expected ") + magic + " header, got '" + tag + "'");
    auto next_int = [&is]() {
        // skip whitespace and '#' comments
        while (true) {
            const int c = is.peek();
            if (c == '#') {
                std::string line;
                std::getline(is, line);
            } else if (c == ' ' || c == '\n' || c == '\r' || c == '\t') {
                is.get();
            } else {
                break;
            }
        }
        int v = -1;
        is >> v;
        if (!is || v < 0) throw FormatError("image: malformed PNM header");
        return v;
    };
    w = next_int();
    h = next_int();
    maxval = next_int();
    is.get();  // single whitespace before raster data
}

}  // namespace detail

inline void write_pgm8(const std::string& path, int w, int h, const std::uint8_t* data) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("image: cannot open '" + path + "' for writing");
    os << "P5\n" << w << " " << h << "\n255\n";
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(w) * h);
    if (!os) throw FormatError("image: write to '" + path + "' failed");
}

inline void write_pgm16(const std::string& path, int w, int h, const std::uint16_t* data) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("image: cannot open '" + path + "' for writing");
    os << "P5\n" << w << " " << h << "\n65535\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * 2);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::uint16_t v = data[static_cast<std::size_t>(y) * w + x];
            row[static_cast<std::size_t>(x) * 2] = static_cast<unsigned char>(v >> 8);
            row[static_cast<std::size_t>(x) * 2 + 1] = static_cast<unsigned char>(v & 0xff);
        }
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!os) throw FormatError("image: write to '" + path + "' failed");
}

/// 3-channel [0,1] tensor quantized to 8-bit PPM.
inline void write_ppm8(const std::string& path, const Tensor& image) {
    const Shape4 s = image.shape();
    if (s.n != 1 || s.c != 3) throw DimensionError("image: PPM writer expects a 1x3xHxW tensor");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("image: cannot open '" + path + "' for writing");
    os << "P6\n" << s.w << " " << s.h << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(s.w) * 3);
    for (std::int64_t y = 0; y < s.h; ++y) {
        for (std::int64_t x = 0; x < s.w; ++x) {
            for (int c = 0; c < 3; ++c) {
                double v = image.at(0, c, y, x);
                v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
                row[static_cast<std::size_t>(x) * 3 + c] =
                    static_cast<unsigned char>(v * 255.0 + 0.5);
            }
        }
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!os) throw FormatError("image: write to '" + path + "' failed");
}

inline LabelMap read_pgm8_labels(const std::string& path, int n_classes) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("image: cannot open '" + path + "'");
    int w = 0, h = 0, maxval = 0;
    detail::read_pnm_header(is, "P5", w, h, maxval);
    if (maxval != 255) throw FormatError("image: '" + path + "' is not an 8-bit PGM");
    LabelMap lm(w, h, n_classes);
    if (!is.read(reinterpret_cast<char*>(lm.ids.data()), static_cast<std::streamsize>(lm.ids.size()))) {
        throw FormatError("image: truncated raster in '" + path + "'");
    }
    return lm;
}

inline InstanceMap read_pgm16_instances(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("image: cannot open '" + path + "'");
    int w = 0, h = 0, maxval = 0;
    detail::read_pnm_header(is, "P5", w, h, maxval);
    if (maxval != 65535) throw FormatError("image: '" + path + "' is not a 16-bit PGM");
    InstanceMap m(w, h);
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 2);
    if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
        throw FormatError("image: truncated raster in '" + path + "'");
    }
    for (std::size_t i = 0; i < m.ids.size(); ++i) {
        m.ids[i] = static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
    }
    return m;
}

inline Tensor read_ppm8(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("image: cannot open '" + path + "'");
    int w = 0, h = 0, maxval = 0;
    detail::read_pnm_header(is, "P6", w, h, maxval);
    if (maxval != 255) throw FormatError("image: '" + path + "' is not an 8-bit PPM");
    Tensor t(1, 3, h, w);
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
    if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
        throw FormatError("image: truncated raster in '" + path + "'");
    }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                t.at(0, c, y, x) = raw[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0;
    return t;
}

}  // namespace mtlhg

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "mtlhg/model.hpp"

namespace mtlhg {

// Checkpoint file layout (little endian):
//   magic "MTLHG1" | u16 version | u32 entry count | entries...
// entry: u32 name length | name bytes | 4 x u32 extents | extents-product
// f64 values. Weights are stored under their visit_params names with a
// ".weight"/".bias" suffix; biases use extents (1, c, 1, 1). A "__config__"
// entry carries the six model-configuration integers.

namespace detail {

constexpr char kMagic[6] = {'M', 'T', 'L', 'H', 'G', '1'};
constexpr std::uint16_t kVersion = 1;

inline void put_u16(std::ostream& os, std::uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                                static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
}
inline void put_u32(std::ostream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                                static_cast<unsigned char>((v >> 8) & 0xff),
                                static_cast<unsigned char>((v >> 16) & 0xff),
                                static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}
inline void put_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint16_t get_u16(std::istream& is) {
    unsigned char b[2];
    if (!is.read(reinterpret_cast<char*>(b), 2)) throw FormatError("checkpoint: truncated file");
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}
inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("checkpoint: truncated file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}
inline double get_f64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw FormatError("checkpoint: truncated file");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

struct Entry {
    Shape4 shape;
    std::vector<double> values;
};

inline void write_entry(std::ostream& os, const std::string& name, const Shape4& shape,
                        const double* data, std::int64_t count) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, static_cast<std::uint32_t>(shape.n));
    put_u32(os, static_cast<std::uint32_t>(shape.c));
    put_u32(os, static_cast<std::uint32_t>(shape.h));
    put_u32(os, static_cast<std::uint32_t>(shape.w));
    for (std::int64_t i = 0; i < count; ++i) put_f64(os, data[i]);
}

}  // namespace detail

inline void save_checkpoint(const ModelParams& params, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("checkpoint: cannot open '" + path + "' for writing");
    os.write(detail::kMagic, 6);
    detail::put_u16(os, detail::kVersion);

    std::uint32_t entries = 1;  // __config__
    visit_params(params, [&](const std::string&, const ConvParam&) {
        entries += 2;
    });
    detail::put_u32(os, entries);

    const double cfgv[6] = {static_cast<double>(params.cfg.in_channels),
                            static_cast<double>(params.cfg.classes),
                            static_cast<double>(params.cfg.bins),
                            static_cast<double>(params.cfg.stages),
                            static_cast<double>(params.cfg.base_width),
                            static_cast<double>(params.cfg.input_size)};
    detail::write_entry(os, "__config__", Shape4{1, 1, 1, 6}, cfgv, 6);

    visit_params(params, [&](const std::string& name, const ConvParam& p) {
        detail::write_entry(os, name + ".weight", p.w.shape(), p.w.data(), p.w.size());
        const Shape4 bs{1, static_cast<std::int64_t>(p.b.size()), 1, 1};
        detail::write_entry(os, name + ".bias", bs, p.b.data(),
                            static_cast<std::int64_t>(p.b.size()));
    });
    os.flush();
    if (!os) throw FormatError("checkpoint: write to '" + path + "' failed");
}

inline ModelParams load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("checkpoint: cannot open '" + path + "'");
    char magic[6];
    if (!is.read(magic, 6) || std::memcmp(magic, detail::kMagic, 6) != 0) {
        throw FormatError("checkpoint: bad magic bytes");
    }
    const std::uint16_t version = detail::get_u16(is);
    if (version != detail::kVersion) {
        throw FormatError("checkpoint: unsupported format version " + std::to_string(version));
    }
    const std::uint32_t count = detail::get_u32(is);

    std::map<std::string, detail::Entry> table;
    for (std::uint32_t e = 0; e < count; ++e) {
        const std::uint32_t name_len = detail::get_u32(is);
        if (name_len > 4096) throw FormatError("checkpoint: implausible name length");
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) throw FormatError("checkpoint: truncated file");
        detail::Entry entry;
        entry.shape.n = detail::get_u32(is);
        entry.shape.c = detail::get_u32(is);
        entry.shape.h = detail::get_u32(is);
        entry.shape.w = detail::get_u32(is);
        const std::int64_t n = entry.shape.size();
        if (n < 0 || n > (1LL << 32)) throw FormatError("checkpoint: implausible entry size");
        entry.values.resize(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) entry.values[static_cast<std::size_t>(i)] = detail::get_f64(is);
        table.emplace(std::move(name), std::move(entry));
    }

    const auto cfg_it = table.find("__config__");
    if (cfg_it == table.end() || cfg_it->second.values.size() != 6) {
        throw FormatError("checkpoint: missing model configuration entry");
    }
    ModelConfig cfg;
    cfg.in_channels = static_cast<int>(cfg_it->second.values[0]);
    cfg.classes = static_cast<int>(cfg_it->second.values[1]);
    cfg.bins = static_cast<int>(cfg_it->second.values[2]);
    cfg.stages = static_cast<int>(cfg_it->second.values[3]);
    cfg.base_width = static_cast<int>(cfg_it->second.values[4]);
    cfg.input_size = static_cast<int>(cfg_it->second.values[5]);
    cfg.validate();

    ModelParams params = init_params(cfg, 0);
    visit_params(params, [&](const std::string& name, ConvParam& p) {
        const auto w_it = table.find(name + ".weight");
        const auto b_it = table.find(name + ".bias");
        if (w_it == table.end() || b_it == table.end()) {
            throw FormatError("checkpoint: missing entry for '" + name + "'");
        }
        if (w_it->second.shape != p.w.shape()) {
            throw FormatError("checkpoint: shape mismatch for '" + name + ".weight'");
        }
        if (b_it->second.values.size() != p.b.size()) {
            throw FormatError("checkpoint: shape mismatch for '" + name + ".bias'");
        }
        for (std::int64_t i = 0; i < p.w.size(); ++i) p.w[i] = w_it->second.values[static_cast<std::size_t>(i)];
        p.b = b_it->second.values;
    });
    return params;
}

}  // namespace mtlhg

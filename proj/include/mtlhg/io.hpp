#pragma once

#include <zlib.h>

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mtlhg/image_io.hpp"
#include "mtlhg/metrics.hpp"
#include "mtlhg/model.hpp"
#include "mtlhg/synth.hpp"

namespace mtlhg {

// Text-side plumbing: the tab-separated dataset manifest, CSV emitters (comma
// separators, '.' decimal point, LF endings), and the checksummed JSON run
// manifest. Floats print with %.17g so files round-trip and reruns are
// byte-identical.

inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct ManifestRecord {
    std::string image;
    std::string labels;
    std::string instances;
};

inline void write_dataset_manifest(const std::string& path,
                                   const std::vector<ManifestRecord>& records) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("manifest: cannot open '" + path + "' for writing");
    for (const auto& r : records) {
        os << r.image << '\t' << r.labels << '\t' << r.instances << '\n';
    }
}

inline std::vector<ManifestRecord> read_dataset_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("manifest: cannot open '" + path + "'");
    std::vector<ManifestRecord> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto t1 = line.find('\t');
        const auto t2 = line.find('\t', t1 == std::string::npos ? t1 : t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos) {
            throw FormatError("manifest: malformed line '" + line + "'");
        }
        out.push_back({line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1), line.substr(t2 + 1)});
    }
    return out;
}

/// Loads manifest records relative to the manifest's own directory. The
/// class count is the smallest one covering every label seen.
inline std::vector<Sample> load_dataset(const std::string& manifest_path) {
    const auto records = read_dataset_manifest(manifest_path);
    const auto base = std::filesystem::path(manifest_path).parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp.string() : (base / fp).string();
    };

    std::vector<Sample> out;
    int max_label = 0;
    for (const auto& r : records) {
        Sample s;
        s.image = read_ppm8(resolve(r.image));
        s.labels = read_pgm8_labels(resolve(r.labels), 256);
        s.instances = read_pgm16_instances(resolve(r.instances));
        if (s.labels.w != s.instances.w || s.labels.h != s.instances.h ||
            s.labels.w != static_cast<int>(s.image.shape().w) ||
            s.labels.h != static_cast<int>(s.image.shape().h)) {
            throw FormatError("dataset: raster sizes disagree for '" + r.image + "'");
        }
        for (auto v : s.labels.ids) max_label = std::max(max_label, static_cast<int>(v));
        out.push_back(std::move(s));
    }
    for (auto& s : out) s.labels.n_classes = max_label + 1;
    return out;
}

// ---- CSV emitters ---------------------------------------------------------

inline void write_class_weights_csv(const std::string& path, const ClassWeights& cw) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("csv: cannot open '" + path + "' for writing");
    os << "class,freq,weight\n";
    for (std::size_t c = 0; c < cw.weight.size(); ++c) {
        os << c << ',' << fmt_double(cw.frequency[c]) << ',' << fmt_double(cw.weight[c]) << '\n';
    }
}

inline void write_metrics_csv(const std::string& path, const SegMetrics& m) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("csv: cannot open '" + path + "' for writing");
    os << "class,iou,acc,prec,rec\n";
    for (std::size_t c = 0; c < m.class_iou.size(); ++c) {
        if (!m.class_observed[c]) continue;
        os << c << ',' << fmt_double(m.class_iou[c]) << ',' << fmt_double(m.class_accuracy[c])
           << ',' << fmt_double(m.class_precision[c]) << ',' << fmt_double(m.class_recall[c])
           << '\n';
    }
    os << "mean," << fmt_double(m.miou) << ',' << fmt_double(m.accuracy) << ','
       << fmt_double(m.precision) << ',' << fmt_double(m.recall) << '\n';
}

inline void write_trimap_csv(const std::string& path, const std::vector<TrimapPoint>& curve) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("csv: cannot open '" + path + "' for writing");
    os << "width,error_pct\n";
    for (const auto& p : curve) {
        os << p.width << ',' << (std::isnan(p.error_pct) ? "nan" : fmt_double(p.error_pct)) << '\n';
    }
}

inline void write_latent_csv(const std::string& path, const LatentDump& dump) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("csv: cannot open '" + path + "' for writing");
    os << "tag";
    for (std::int64_t d = 0; d < dump.dim; ++d) os << ",v" << d;
    os << '\n';
    for (std::int64_t i = 0; i < dump.count(); ++i) {
        os << dump.tags[static_cast<std::size_t>(i)];
        for (std::int64_t d = 0; d < dump.dim; ++d) {
            os << ',' << fmt_double(dump.data[static_cast<std::size_t>(i * dump.dim + d)]);
        }
        os << '\n';
    }
}

inline void write_latent_metrics_csv(const std::string& path, const ClusteringMetrics& m) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("csv: cannot open '" + path + "' for writing");
    os << "ssi,chi,dbi\n";
    os << fmt_double(m.ssi) << ',' << fmt_double(m.chi) << ',' << fmt_double(m.dbi) << '\n';
}

// ---- key = value config files ----------------------------------------------

/// Parses `key = value` lines; '#' starts a comment, blank lines are
/// skipped. Values keep internal spaces.
inline std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open '" + path + "'");
    std::map<std::string, std::string> out;
    std::string line;
    auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config: line " + std::to_string(lineno) + " is not 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config: empty key on line " + std::to_string(lineno));
        out[key] = value;
    }
    return out;
}

// ---- run manifest -----------------------------------------------------------

inline std::uint32_t file_crc32(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("checksum: cannot open '" + path + "'");
    uLong crc = crc32(0L, Z_NULL, 0);
    char buf[65536];
    while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
        crc = crc32(crc, reinterpret_cast<const Bytef*>(buf), static_cast<uInt>(is.gcount()));
        if (!is) break;
    }
    return static_cast<std::uint32_t>(crc);
}

/// Snapshot of one CLI run: the command, its resolved configuration, inputs,
/// and CRC-32 checksums of every emitted file. Written to a temp file and
/// renamed into place, so failed runs never leave a partial manifest.
struct RunManifest {
    std::string command;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, std::string>> config;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
};

inline void write_run_manifest(const RunManifest& rm, const std::string& path) {
    nlohmann::ordered_json j;
    j["command"] = rm.command;
    j["seed"] = rm.seed;
    nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
    for (const auto& [k, v] : rm.config) cfg[k] = v;
    j["config"] = cfg;
    j["inputs"] = rm.inputs;
    nlohmann::ordered_json outs = nlohmann::ordered_json::array();
    for (const auto& out : rm.outputs) {
        char crc_hex[16];
        std::snprintf(crc_hex, sizeof(crc_hex), "%08x", file_crc32(out));
        outs.push_back({{"path", out}, {"crc32", crc_hex}});
    }
    j["outputs"] = outs;

    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw FormatError("manifest: cannot open '" + tmp + "' for writing");
        os << j.dump(2) << '\n';
        if (!os) throw FormatError("manifest: write to '" + tmp + "' failed");
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace mtlhg

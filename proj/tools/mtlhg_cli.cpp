// Command-line surface for the multi-task hourglass lab: dataset synthesis,
// target generation, training, evaluation, and chart rendering.
//
// Exit codes: 0 success, 2 usage/configuration/input error, 3 numerical
// divergence during training.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "mtlhg/checkpoint.hpp"
#include "mtlhg/io.hpp"
#include "mtlhg/metrics.hpp"
#include "mtlhg/plot.hpp"
#include "mtlhg/synth.hpp"
#include "mtlhg/trainer.hpp"

namespace fs = std::filesystem;
using namespace mtlhg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

void apply_thread_cap() {
#ifdef _OPENMP
    if (const char* env = std::getenv("MTL_THREADS")) {
        const int cap = std::atoi(env);
        if (cap > 0) omp_set_num_threads(std::min(cap, omp_get_max_threads()));
    }
#endif
}

std::string num_name(const char* prefix, int i, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%04d.%s", prefix, i, ext);
    return buf;
}

// ---- synth ------------------------------------------------------------------

int cmd_synth(std::uint64_t seed, int count, int size, int classes, const std::string& out_dir) {
    fs::create_directories(out_dir);
    auto samples = synth_shapes(seed, count, size, classes);

    RunManifest rm;
    rm.command = "synth";
    rm.seed = seed;
    rm.config = {{"count", std::to_string(count)},
                 {"size", std::to_string(size)},
                 {"classes", std::to_string(classes)}};

    std::vector<ManifestRecord> records;
    for (int i = 0; i < count; ++i) {
        ManifestRecord r{num_name("img", i, "ppm"), num_name("labels", i, "pgm"),
                         num_name("inst", i, "pgm")};
        const Sample& s = samples[static_cast<std::size_t>(i)];
        write_ppm8((fs::path(out_dir) / r.image).string(), s.image);
        write_pgm8((fs::path(out_dir) / r.labels).string(), s.labels.w, s.labels.h, s.labels.ids.data());
        write_pgm16((fs::path(out_dir) / r.instances).string(), s.instances.w, s.instances.h,
                    s.instances.ids.data());
        rm.outputs.push_back((fs::path(out_dir) / r.image).string());
        rm.outputs.push_back((fs::path(out_dir) / r.labels).string());
        rm.outputs.push_back((fs::path(out_dir) / r.instances).string());
        records.push_back(std::move(r));
    }
    const std::string manifest = (fs::path(out_dir) / "manifest.txt").string();
    write_dataset_manifest(manifest, records);
    rm.outputs.push_back(manifest);
    write_run_manifest(rm, (fs::path(out_dir) / "run_manifest.json").string());
    std::cout << "wrote " << count << " samples to " << out_dir << "\n";
    return kExitOk;
}

// ---- targets ------------------------------------------------------------------

int cmd_targets(const std::string& manifest, int truncation, int bins, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const DistanceTransformConfig dt{truncation, bins};
    dt.validate();
    auto samples = load_dataset(manifest);
    if (samples.empty()) throw ConfigError("targets: manifest lists no samples");

    RunManifest rm;
    rm.command = "targets";
    rm.config = {{"truncation", std::to_string(truncation)}, {"bins", std::to_string(bins)}};
    rm.inputs.push_back(manifest);

    std::vector<LabelMap> seg_maps;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        TargetBundle tb = build_targets(samples[i].labels, samples[i].instances, dt);
        const int n = static_cast<int>(i);

        std::vector<std::uint8_t> edge_px(tb.edge.mask.size());
        for (std::size_t p = 0; p < edge_px.size(); ++p) edge_px[p] = tb.edge.mask[p] ? 255 : 0;
        const std::string edge_path = (fs::path(out_dir) / num_name("edge", n, "pgm")).string();
        write_pgm8(edge_path, tb.edge.w, tb.edge.h, edge_px.data());

        const std::string contour_path = (fs::path(out_dir) / num_name("contour", n, "pgm")).string();
        write_pgm8(contour_path, tb.contour.w, tb.contour.h, tb.contour.ids.data());

        const std::string distq_path = (fs::path(out_dir) / num_name("distq", n, "pgm")).string();
        write_pgm8(distq_path, tb.distq.w, tb.distq.h, tb.distq.bin_of.data());

        rm.outputs.push_back(edge_path);
        rm.outputs.push_back(contour_path);
        rm.outputs.push_back(distq_path);
        seg_maps.push_back(tb.seg);
    }
    const ClassWeights cw = class_balance_weights(seg_maps);
    const std::string weights_path = (fs::path(out_dir) / "class_weights.csv").string();
    write_class_weights_csv(weights_path, cw);
    rm.outputs.push_back(weights_path);
    write_run_manifest(rm, (fs::path(out_dir) / "run_manifest.json").string());
    std::cout << "wrote targets for " << samples.size() << " samples to " << out_dir << "\n";
    return kExitOk;
}

// ---- train --------------------------------------------------------------------

double parse_double(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' holds a malformed number '" + v + "'");
    }
}

std::int64_t parse_int(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const std::int64_t i = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' holds a malformed integer '" + v + "'");
    }
}

std::pair<double, double> parse_range(const std::string& v, const std::string& key) {
    const auto comma = v.find(',');
    if (comma == std::string::npos) {
        throw ConfigError("config: key '" + key + "' expects 'lo,hi'");
    }
    return {parse_double(v.substr(0, comma), key), parse_double(v.substr(comma + 1), key)};
}

struct TrainFileConfig {
    TrainConfig train;
    std::string manifest;
    std::string out_dir = ".";
};

TrainFileConfig parse_train_config(const std::string& path) {
    TrainFileConfig out;
    TrainConfig& t = out.train;
    for (const auto& [key, value] : parse_kv_file(path)) {
        if (key == "manifest") out.manifest = value;
        else if (key == "out_dir") out.out_dir = value;
        else if (key == "tasks") t.tasks = parse_task_set(value);
        else if (key == "seed") t.seed = static_cast<std::uint64_t>(parse_int(value, key));
        else if (key == "iterations") t.iterations = parse_int(value, key);
        else if (key == "batch") t.batch = static_cast<int>(parse_int(value, key));
        else if (key == "lr") t.learning_rate = parse_double(value, key);
        else if (key == "momentum") t.momentum = parse_double(value, key);
        else if (key == "stages") t.stages = static_cast<int>(parse_int(value, key));
        else if (key == "base_width") t.base_width = static_cast<int>(parse_int(value, key));
        else if (key == "bins") t.dt.bins = static_cast<int>(parse_int(value, key));
        else if (key == "truncation") t.dt.truncation = static_cast<int>(parse_int(value, key));
        else if (key == "crop") t.augment.crop = static_cast<int>(parse_int(value, key));
        else if (key == "flip_prob") t.augment.flip_prob = parse_double(value, key);
        else if (key == "contrast") std::tie(t.augment.contrast_lo, t.augment.contrast_hi) = parse_range(value, key);
        else if (key == "brightness") std::tie(t.augment.brightness_lo, t.augment.brightness_hi) = parse_range(value, key);
        else if (key == "eval_every") t.eval_every = parse_int(value, key);
        else if (key == "holdout_fraction") t.holdout_fraction = parse_double(value, key);
        else if (key == "lambda_E") t.weights.lambda_e = parse_double(value, key);
        else if (key == "lambda_S") t.weights.lambda_s = parse_double(value, key);
        else if (key == "lambda_C") t.weights.lambda_c = parse_double(value, key);
        else if (key == "lambda_D") t.weights.lambda_d = parse_double(value, key);
        else if (key == "psi1") t.weights.psi1 = parse_double(value, key);
        else if (key == "psi2") t.weights.psi2 = parse_double(value, key);
        else if (key == "psi3") t.weights.psi3 = parse_double(value, key);
        else if (key == "psi4") t.weights.psi4 = parse_double(value, key);
        else if (key == "psi5") t.weights.psi5 = parse_double(value, key);
        else if (key == "psi6") t.weights.psi6 = parse_double(value, key);
        else if (key == "omega1") t.weights.omega1 = parse_double(value, key);
        else if (key == "omega2") t.weights.omega2 = parse_double(value, key);
        else throw ConfigError("config: unknown key '" + key + "'");
    }
    if (out.manifest.empty()) throw ConfigError("config: missing 'manifest' key");
    return out;
}

int cmd_train(const std::string& config_path) {
    TrainFileConfig cfg = parse_train_config(config_path);
    cfg.train.validate();
    fs::create_directories(cfg.out_dir);
    auto dataset = load_dataset(cfg.manifest);
    TrainOutput out = train(cfg.train, dataset);

    const std::string ckpt = (fs::path(cfg.out_dir) / "checkpoint.mtlhg").string();
    const std::string log = (fs::path(cfg.out_dir) / "train_log.csv").string();
    const std::string latent = (fs::path(cfg.out_dir) / "latent.csv").string();
    save_checkpoint(out.params, ckpt);
    write_train_log_csv(log, out.log);
    write_latent_csv(latent, out.latent);

    RunManifest rm;
    rm.command = "train";
    rm.seed = cfg.train.seed;
    rm.config = {{"config", config_path},
                 {"manifest", cfg.manifest},
                 {"tasks", task_set_string(cfg.train.tasks)},
                 {"iterations", std::to_string(cfg.train.iterations)},
                 {"batch", std::to_string(cfg.train.batch)},
                 {"lr", fmt_double(cfg.train.learning_rate)},
                 {"momentum", fmt_double(cfg.train.momentum)}};
    rm.inputs = {config_path, cfg.manifest};
    rm.outputs = {ckpt, log, latent};
    write_run_manifest(rm, (fs::path(cfg.out_dir) / "run_manifest.json").string());
    std::cout << "trained " << cfg.train.iterations << " iterations; final loss "
              << fmt_double(out.log.back().total) << "\n";
    return kExitOk;
}

// ---- eval ---------------------------------------------------------------------

int cmd_eval(const std::string& checkpoint, const std::string& manifest,
             const std::vector<int>& widths, const std::string& out_dir, bool perfect_stub) {
    fs::create_directories(out_dir);
    auto dataset = load_dataset(manifest);
    if (dataset.empty()) throw ConfigError("eval: manifest lists no samples");

    ConfusionMatrix cm(dataset[0].labels.n_classes);
    TrimapAccumulator trimap(widths);
    LatentDump dump;

    if (perfect_stub) {
        // test hook: ground truth stands in for the prediction; the latent
        // vectors are near-one-hot in the dominant class (jittered so the
        // within-cluster variance stays positive)
        int idx = 0;
        for (const Sample& s : dataset) {
            cm.add(confusion(s.labels, s.labels));
            trimap.add(s.labels, s.labels);
            const int tag = dominant_class(s.labels);
            dump.dim = dataset[0].labels.n_classes;
            for (int d = 0; d < dump.dim; ++d) {
                dump.data.push_back((d == tag ? 1.0 : 0.0) + 1e-3 * ((idx + d) % 7));
            }
            dump.tags.push_back(tag);
            ++idx;
        }
    } else {
        ModelParams params = load_checkpoint(checkpoint);
        TaskSet only_s{false, false, false, false};
        only_s[static_cast<int>(Task::Seg)] = true;
        for (const Sample& s : dataset) {
            ForwardResult fr = forward(params, s.image, false, only_s);
            LabelMap pred = predict_labels(fr.logits[static_cast<int>(Task::Seg)]);
            pred.n_classes = std::max(pred.n_classes, s.labels.n_classes);
            cm.add(confusion(pred, s.labels));
            trimap.add(pred, s.labels);
        }
        dump = capture_latent(params, dataset);
    }

    const std::string metrics_path = (fs::path(out_dir) / "metrics.csv").string();
    const std::string trimap_path = (fs::path(out_dir) / "trimap.csv").string();
    const std::string latent_path = (fs::path(out_dir) / "latent_metrics.csv").string();
    write_metrics_csv(metrics_path, seg_metrics(cm));
    write_trimap_csv(trimap_path, trimap.curve());
    write_latent_metrics_csv(latent_path, latent_metrics(dump));

    RunManifest rm;
    rm.command = "eval";
    std::ostringstream wl;
    for (std::size_t i = 0; i < widths.size(); ++i) wl << (i ? "," : "") << widths[i];
    rm.config = {{"checkpoint", perfect_stub ? "(perfect-stub)" : checkpoint},
                 {"widths", wl.str()},
                 {"perfect_stub", perfect_stub ? "true" : "false"}};
    rm.inputs = {manifest};
    if (!perfect_stub) rm.inputs.push_back(checkpoint);
    rm.outputs = {metrics_path, trimap_path, latent_path};
    write_run_manifest(rm, (fs::path(out_dir) / "run_manifest.json").string());
    std::cout << "evaluated " << dataset.size() << " samples; outputs in " << out_dir << "\n";
    return kExitOk;
}

// ---- plot ---------------------------------------------------------------------

int cmd_plot(const std::vector<std::string>& csv_paths, const std::string& out_png) {
    std::vector<Series> series;
    std::string x_label, y_label;
    for (const auto& path : csv_paths) {
        std::ifstream is(path);
        if (!is) throw ConfigError("plot: cannot open '" + path + "'");
        std::string header;
        if (!std::getline(is, header)) throw ConfigError("plot: '" + path + "' is empty");
        std::vector<std::string> cols;
        {
            std::stringstream ss(header);
            std::string col;
            while (std::getline(ss, col, ',')) cols.push_back(col);
        }
        if (cols.size() < 2) throw ConfigError("plot: '" + path + "' has fewer than two columns");
        if (x_label.empty()) {
            x_label = cols[0];
            y_label = cols[1];
        }
        Series s;
        s.label = fs::path(path).stem().string();
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            std::stringstream ss(line);
            std::string xs, ys;
            if (!std::getline(ss, xs, ',') || !std::getline(ss, ys, ',')) {
                throw ConfigError("plot: malformed row in '" + path + "'");
            }
            try {
                s.x.push_back(std::stod(xs));
                s.y.push_back(ys == "nan" || ys.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                        : std::stod(ys));
            } catch (const std::exception&) {
                throw ConfigError("plot: malformed row in '" + path + "'");
            }
        }
        if (s.x.empty()) throw ConfigError("plot: '" + path + "' holds no data rows");
        series.push_back(std::move(s));
    }
    render_chart(series, x_label, y_label, out_png);
    std::cout << "wrote " << out_png << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    apply_thread_cap();
    CLI::App app{"multi-task hourglass segmentation lab"};
    app.require_subcommand(1);

    std::uint64_t seed = 1;
    int count = 10, size = 64, classes = 4, truncation = 20, bins = 6;
    std::string out_dir = ".", manifest, config_path, checkpoint, out_png;
    std::vector<int> widths{1, 2, 4, 8, 16, 32};
    std::vector<std::string> csv_paths;
    bool perfect_stub = false;

    auto* synth = app.add_subcommand("synth", "generate a synthetic-shapes dataset");
    synth->add_option("--seed", seed);
    synth->add_option("--count", count);
    synth->add_option("--size", size);
    synth->add_option("--classes", classes);
    synth->add_option("--out", out_dir)->required();

    auto* targets = app.add_subcommand("targets", "derive supervision targets from a dataset");
    targets->add_option("--manifest", manifest)->required();
    targets->add_option("--truncation", truncation, "distance truncation R");
    targets->add_option("--bins", bins, "distance bin count K");
    targets->add_option("--out", out_dir)->required();

    auto* train_cmd = app.add_subcommand("train", "train from a key = value config file");
    train_cmd->add_option("--config", config_path)->required();

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint over a dataset");
    eval_cmd->add_option("--checkpoint", checkpoint);
    eval_cmd->add_option("--manifest", manifest)->required();
    eval_cmd->add_option("--widths", widths)->delimiter(',');
    eval_cmd->add_option("--out", out_dir)->required();
    eval_cmd->add_flag("--perfect-stub", perfect_stub,
                       "test hook: score the ground truth against itself");

    auto* plot = app.add_subcommand("plot", "render CSV curves to a PNG chart");
    plot->add_option("--out", out_png)->required();
    plot->add_option("csvs", csv_paths, "input CSV files")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*synth) return cmd_synth(seed, count, size, classes, out_dir);
        if (*targets) return cmd_targets(manifest, truncation, bins, out_dir);
        if (*train_cmd) return cmd_train(config_path);
        if (*eval_cmd) {
            if (!perfect_stub && checkpoint.empty()) {
                throw ConfigError("eval: --checkpoint is required unless --perfect-stub is set");
            }
            return cmd_eval(checkpoint, manifest, widths, out_dir, perfect_stub);
        }
        if (*plot) return cmd_plot(csv_paths, out_png);
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitConfig;
}

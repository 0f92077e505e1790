#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "mtlhg/trainer.hpp"

using namespace mtlhg;

namespace {

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.tasks = parse_task_set("S");
    cfg.batch = 2;
    cfg.iterations = 5;
    cfg.seed = 3;
    cfg.stages = 2;
    cfg.base_width = 4;
    cfg.dt = {.truncation = 10, .bins = 4};
    cfg.augment.flip_prob = 0.5;
    cfg.augment.contrast_lo = 0.9;
    cfg.augment.contrast_hi = 1.1;
    cfg.holdout_fraction = 0.2;
    return cfg;
}

bool params_equal(const ModelParams& a, const ModelParams& b) {
    bool same = true;
    visit_params(const_cast<ModelParams&>(a), [&](const std::string& name, ConvParam& pa) {
        visit_params(const_cast<ModelParams&>(b), [&](const std::string& name_b, ConvParam& pb) {
            if (name != name_b) return;
            if (!(pa.w == pb.w) || pa.b != pb.b) same = false;
        });
    });
    return same;
}

}  // namespace

TEST_CASE("task set parsing") {
    TaskSet set = parse_task_set("S,E,C,D");
    for (int t = 0; t < kTaskCount; ++t) CHECK(set[static_cast<std::size_t>(t)]);
    CHECK(task_set_string(parse_task_set("S,E")) == "E,S");
    CHECK_THROWS_AS(parse_task_set("E,C"), ConfigError);  // S mandatory
    CHECK_THROWS_AS(parse_task_set("S,X"), ConfigError);
}

TEST_CASE("augmentation") {
    auto ds = synth_shapes(5, 1, 32, 4);
    const Sample& s = ds[0];

    SECTION("flip is an involution") {
        Sample once = flip_horizontal(s);
        Sample twice = flip_horizontal(once);
        CHECK(twice.image == s.image);
        CHECK(twice.labels.ids == s.labels.ids);
        CHECK(twice.instances.ids == s.instances.ids);
    }
    SECTION("flipped label map is the column-reversed original") {
        Sample f = flip_horizontal(s);
        for (int y = 0; y < s.labels.h; ++y)
            for (int x = 0; x < s.labels.w; ++x)
                REQUIRE(f.labels.at(x, y) == s.labels.at(s.labels.w - 1 - x, y));
    }
    SECTION("identity configuration returns the sample unchanged") {
        AugmentConfig cfg;  // full crop, unit contrast, zero brightness, no flip
        Rng rng(1);
        Augmented a = augment(s, rng, cfg);
        CHECK(a.sample.image == s.image);
        CHECK(a.sample.labels.ids == s.labels.ids);
        CHECK_FALSE(a.flipped);
    }
    SECTION("crop slices exactly") {
        Sample c = crop_sample(s, 3, 5, 16);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) {
                REQUIRE(c.labels.at(x, y) == s.labels.at(3 + x, 5 + y));
                REQUIRE(c.instances.at(x, y) == s.instances.at(3 + x, 5 + y));
            }
    }
    SECTION("augmentation never invents labels") {
        AugmentConfig cfg;
        cfg.crop = 16;
        cfg.flip_prob = 0.5;
        cfg.contrast_lo = 0.8;
        cfg.contrast_hi = 1.2;
        Rng rng(2);
        std::set<int> before(s.labels.ids.begin(), s.labels.ids.end());
        for (int trial = 0; trial < 20; ++trial) {
            Augmented a = augment(s, rng, cfg);
            for (auto v : a.sample.labels.ids) REQUIRE(before.count(v) == 1);
        }
    }
    SECTION("oversized crop is a configuration error") {
        AugmentConfig cfg;
        cfg.crop = 64;
        Rng rng(3);
        CHECK_THROWS_AS(augment(s, rng, cfg), ConfigError);
    }
}

TEST_CASE("view targets match full-image targets for the identity view") {
    auto ds = synth_shapes(6, 1, 32, 4);
    const DistanceTransformConfig dt{.truncation = 10, .bins = 4};
    TargetBundle full = build_targets(ds[0].labels, ds[0].instances, dt);
    Augmented view{ds[0], 0, 0, false};
    TargetBundle tb = targets_for_view(full, view, dt);
    CHECK(tb.edge.mask == full.edge.mask);
    CHECK(tb.contour.ids == full.contour.ids);
    CHECK(tb.seg.ids == full.seg.ids);
    CHECK(tb.distq.bin_of == full.distq.bin_of);

    SECTION("flipped view flips the sliced targets and the recomputed bins") {
        Augmented fv{flip_horizontal(ds[0]), 0, 0, true};
        TargetBundle ft = targets_for_view(full, fv, dt);
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x) {
                REQUIRE(ft.edge.at(x, y) == full.edge.at(31 - x, y));
                REQUIRE(ft.distq.at(x, y) == full.distq.at(31 - x, y));
            }
    }
}

TEST_CASE("predict_labels breaks ties toward the lowest class") {
    Tensor logits(1, 3, 1, 2);
    // pixel 0: classes 0 and 2 tie; pixel 1: class 1 wins
    logits.at(0, 0, 0, 0) = 1.0;
    logits.at(0, 1, 0, 0) = 0.0;
    logits.at(0, 2, 0, 0) = 1.0;
    logits.at(0, 0, 0, 1) = 0.0;
    logits.at(0, 1, 0, 1) = 2.0;
    logits.at(0, 2, 0, 1) = 1.0;
    LabelMap pred = predict_labels(logits);
    CHECK(pred.at(0, 0) == 0);
    CHECK(pred.at(1, 0) == 1);
}

TEST_CASE("evaluate_epoch") {
    auto ds = synth_shapes(7, 4, 32, 4);
    SECTION("empty split raises") {
        ModelParams params = init_params({.in_channels = 3, .classes = 4, .bins = 4, .stages = 2,
                                          .base_width = 4, .input_size = 32}, 1);
        CHECK_THROWS_AS(evaluate_epoch(params, std::span<const Sample>()), DegenerateInputError);
    }
    SECTION("dominant class tags prefer foreground") {
        for (const auto& s : ds) {
            const int tag = dominant_class(s.labels);
            // synthetic shapes always contain foreground
            CHECK(tag > 0);
            CHECK(tag < 4);
        }
        LabelMap empty(8, 8, 4);
        CHECK(dominant_class(empty) == 0);
    }
}

TEST_CASE("short training runs are deterministic and loggable") {
    auto ds = synth_shapes(11, 10, 32, 4);
    TrainConfig cfg = tiny_config();

    TrainOutput a = train(cfg, ds);
    TrainOutput b = train(cfg, ds);
    REQUIRE(params_equal(a.params, b.params));
    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        REQUIRE(a.log[i].total == b.log[i].total);
    }
    REQUIRE(a.latent.data == b.latent.data);
    REQUIRE(a.latent.tags == b.latent.tags);

    SECTION("log rows are monotone, finite, and carry the S column") {
        for (std::size_t i = 0; i < a.log.size(); ++i) {
            CHECK(a.log[i].iter == static_cast<std::int64_t>(i) + 1);
            CHECK(std::isfinite(a.log[i].total));
            CHECK(a.log[i].task_loss[static_cast<int>(Task::Seg)].has_value());
            CHECK_FALSE(a.log[i].task_loss[static_cast<int>(Task::Edge)].has_value());
        }
        CHECK(a.log.back().holdout_miou.has_value());
    }
}

TEST_CASE("zero-weight task is bit-identical to removing the task") {
    auto ds = synth_shapes(12, 8, 32, 4);

    TrainConfig with_e = tiny_config();
    with_e.iterations = 10;
    with_e.tasks = parse_task_set("S,E");
    with_e.weights.lambda_e = 0.0;

    TrainConfig only_s = tiny_config();
    only_s.iterations = 10;
    only_s.tasks = parse_task_set("S");

    TrainOutput a = train(with_e, ds);
    TrainOutput b = train(only_s, ds);
    REQUIRE(params_equal(a.params, b.params));
    for (std::size_t i = 0; i < a.log.size(); ++i) REQUIRE(a.log[i].total == b.log[i].total);
}

TEST_CASE("training all four tasks produces four loss columns") {
    auto ds = synth_shapes(13, 8, 32, 4);
    TrainConfig cfg = tiny_config();
    cfg.tasks = parse_task_set("S,E,C,D");
    cfg.iterations = 3;
    TrainOutput out = train(cfg, ds);
    for (const auto& row : out.log) {
        for (int t = 0; t < kTaskCount; ++t) {
            CHECK(row.task_loss[static_cast<std::size_t>(t)].has_value());
            CHECK(*row.task_loss[static_cast<std::size_t>(t)] >= 0.0);
        }
    }
    SECTION("latent dump holds block vectors with consistent dimension and tags") {
        CHECK(out.latent.count() > 0);
        CHECK(out.latent.dim > 0);
        CHECK(static_cast<std::int64_t>(out.latent.data.size()) ==
              out.latent.dim * out.latent.count());
        for (int tag : out.latent.tags) {
            CHECK(tag >= 0);
            CHECK(tag < 4);
        }
    }
}

TEST_CASE("a non-finite loss raises divergence with the iteration number") {
    // The probability clamp keeps every loss finite for any finite logits;
    // the guard fires once a blown-up step overflows the parameters and the
    // un-activated head conv turns inf - inf into NaN logits.
    auto ds = synth_shapes(14, 5, 32, 4);
    TrainConfig cfg = tiny_config();
    cfg.holdout_fraction = 0.0;
    cfg.batch = 5;
    cfg.learning_rate = 1e300;
    cfg.iterations = 10;
    try {
        train(cfg, ds);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.iteration >= 1);
        CHECK(e.iteration <= 10);
    }
}

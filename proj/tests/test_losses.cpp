#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "mtlhg/gradcheck.hpp"
#include "mtlhg/losses.hpp"

using namespace mtlhg;

namespace {

Tensor random_logits(Rng& rng, Shape4 s, double amp = 3.0) {
    Tensor t(s);
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-amp, amp);
    return t;
}

EdgeMap random_edges(Rng& rng, int w, int h, double density = 0.3) {
    EdgeMap e(w, h);
    for (auto& v : e.mask) v = rng.uniform01() < density ? 1 : 0;
    return e;
}

LabelMap random_labels(Rng& rng, int w, int h, int n_classes) {
    LabelMap lm(w, h, n_classes);
    for (auto& v : lm.ids) v = static_cast<std::uint8_t>(rng.uniform_int(static_cast<std::uint64_t>(n_classes)));
    return lm;
}

// Finite-difference pass for a loss whose gradient is w.r.t. the tensor fed
// to `eval`.
template <typename Eval>
void check_loss_gradient(const Tensor& x, const LossGrad& lg, Eval eval, double tol = 1e-4) {
    std::vector<double> params(x.data(), x.data() + x.size());
    std::vector<double> analytic(lg.grad.data(), lg.grad.data() + lg.grad.size());
    auto f = [&](std::span<const double> p) {
        Tensor t(x.shape());
        for (std::int64_t i = 0; i < t.size(); ++i) t[i] = p[i];
        return eval(t);
    };
    auto rep = grad_check(f, params, analytic, tol);
    INFO("max rel err " << rep.max_rel_err << " over " << rep.checked << " params");
    CHECK(rep.pass);
}

}  // namespace

TEST_CASE("hed loss hand case: 4 pixels, 1 edge, probabilities one half") {
    Tensor logits(1, 1, 2, 2);  // sigmoid(0) = 0.5
    EdgeMap e(2, 2);
    e.at(0, 0) = 1;
    LossGrad lg = hed_loss(logits, e);
    // beta = 1/4; value = ln2 * (0.25*1 + 0.75*3)
    CHECK(lg.value == Catch::Approx(2.5 * std::log(2.0)).epsilon(1e-12));
    CHECK(lg.value == Catch::Approx(1.732868).margin(5e-7));
}

TEST_CASE("hed loss saturates to ~0 on perfect predictions") {
    EdgeMap e(4, 4);
    e.at(1, 1) = 1;
    e.at(2, 3) = 1;
    Tensor logits(1, 1, 4, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) logits.at(0, 0, y, x) = e.at(x, y) ? 40.0 : -40.0;
    LossGrad lg = hed_loss(logits, e);
    CHECK(lg.value <= 4.0 * 16 * kProbClamp);
    CHECK(lg.value >= 0.0);
}

TEST_CASE("hed loss rejects an empty map and passes finite differences") {
    Tensor empty(1, 1, 0, 0);
    EdgeMap none(0, 0);
    CHECK_THROWS_AS(hed_loss(empty, none), DegenerateInputError);

    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        EdgeMap e = random_edges(rng, 4, 4);
        Tensor logits = random_logits(rng, {1, 1, 4, 4});
        LossGrad lg = hed_loss(logits, e);
        check_loss_gradient(logits, lg, [&](const Tensor& t) { return hed_loss(t, e).value; });
    }
}

TEST_CASE("soft IoU loss") {
    SECTION("perfect binary overlap scores 0") {
        EdgeMap e(3, 3);
        e.at(0, 0) = 1;
        e.at(2, 1) = 1;
        Tensor probs(1, 1, 3, 3);
        for (int y = 0; y < 3; ++y)
            for (int x = 0; x < 3; ++x) probs.at(0, 0, y, x) = e.at(x, y) ? 1.0 : 0.0;
        CHECK(soft_iou_loss(probs, e).value == Catch::Approx(0.0).margin(1e-11));
    }
    SECTION("disjoint prediction scores 1") {
        EdgeMap e(2, 2);
        e.at(0, 0) = 1;
        Tensor probs(1, 1, 2, 2);
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 2; ++x) probs.at(0, 0, y, x) = e.at(x, y) ? 0.0 : 1.0;
        CHECK(soft_iou_loss(probs, e).value == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("P=0.5 on Y=[1,0] gives 2/3") {
        EdgeMap e(2, 1);
        e.at(0, 0) = 1;
        Tensor probs = Tensor::full({1, 1, 1, 2}, 0.5);
        CHECK(soft_iou_loss(probs, e).value == Catch::Approx(2.0 / 3.0).epsilon(1e-9));
    }
    SECTION("gradient matches finite differences") {
        Rng rng(22);
        for (int trial = 0; trial < 20; ++trial) {
            EdgeMap e = random_edges(rng, 5, 3);
            Tensor probs(1, 1, 3, 5);
            for (std::int64_t i = 0; i < probs.size(); ++i) probs[i] = rng.uniform(0.05, 0.95);
            LossGrad lg = soft_iou_loss(probs, e);
            check_loss_gradient(probs, lg, [&](const Tensor& t) { return soft_iou_loss(t, e).value; });
        }
    }
}

TEST_CASE("edge loss composition") {
    Rng rng(23);
    EdgeMap e = random_edges(rng, 4, 4);
    Tensor logits = random_logits(rng, {1, 1, 4, 4});
    SECTION("psi1=1, psi2=0 equals the HED loss") {
        LossGrad a = edge_loss(logits, e, 1.0, 0.0);
        LossGrad b = hed_loss(logits, e);
        CHECK(a.value == b.value);
        for (std::int64_t i = 0; i < a.grad.size(); ++i) CHECK(a.grad[i] == b.grad[i]);
    }
    SECTION("psi1=0, psi2=1 on a saturated perfect prediction is ~0") {
        Tensor sat(1, 1, 4, 4);
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) sat.at(0, 0, y, x) = e.at(x, y) ? 40.0 : -40.0;
        CHECK(edge_loss(sat, e, 0.0, 1.0).value == Catch::Approx(0.0).margin(1e-9));
    }
    SECTION("gradient matches finite differences") {
        for (int trial = 0; trial < 20; ++trial) {
            EdgeMap et = random_edges(rng, 4, 4);
            Tensor lt = random_logits(rng, {1, 1, 4, 4});
            const double p1 = rng.uniform(0.1, 2.0), p2 = rng.uniform(0.1, 2.0);
            LossGrad lg = edge_loss(lt, et, p1, p2);
            check_loss_gradient(lt, lg, [&](const Tensor& t) { return edge_loss(t, et, p1, p2).value; });
        }
    }
    SECTION("monotone mixing: raising psi2 never lowers the loss") {
        double hed_part = 0.0, iou_part = 0.0;
        LossGrad a = edge_loss(logits, e, 1.0, 0.5, &hed_part, &iou_part);
        LossGrad b = edge_loss(logits, e, 1.0, 1.5);
        REQUIRE(iou_part > 0.0);
        CHECK(b.value > a.value);
    }
}

TEST_CASE("balanced multilabel cross-entropy") {
    SECTION("N=1 with unit weight reduces to plain binary cross-entropy") {
        Rng rng(24);
        Tensor logits = random_logits(rng, {1, 1, 3, 3});
        LabelMap target(3, 3, 1);
        const std::vector<double> alpha{1.0};
        LossGrad lg = balanced_multilabel_ce(logits, target, alpha);
        double want = 0.0;
        for (std::int64_t i = 0; i < logits.size(); ++i) {
            want -= std::log(1.0 / (1.0 + std::exp(-logits[i])));
        }
        CHECK(lg.value == Catch::Approx(want).epsilon(1e-12));
    }
    SECTION("saturated correct logits are ~0") {
        LabelMap target(4, 4, 3);
        Rng rng(25);
        for (auto& v : target.ids) v = static_cast<std::uint8_t>(rng.uniform_int(3));
        Tensor logits(1, 3, 4, 4);
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < 16; ++i)
                logits[c * 16 + i] = target.ids[static_cast<std::size_t>(i)] == c ? 40.0 : -40.0;
        const std::vector<double> alpha{1.0, 1.0, 1.0};
        CHECK(balanced_multilabel_ce(logits, target, alpha).value <=
              3.0 * 16 * 2 * kProbClamp);
    }
    SECTION("random 3-class case matches an independent evaluation") {
        Rng rng(26);
        Tensor logits = random_logits(rng, {1, 3, 4, 4});
        LabelMap target = random_labels(rng, 4, 4, 3);
        const std::vector<double> alpha{0.7, 1.3, 2.1};
        LossGrad lg = balanced_multilabel_ce(logits, target, alpha);

        // direct evaluation, different traversal order and formulas
        double want = 0.0;
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x)
                for (int c = 0; c < 3; ++c) {
                    const double z = logits.at(0, c, y, x);
                    double p = 1.0 / (1.0 + std::exp(-z));
                    p = std::min(std::max(p, 1e-7), 1.0 - 1e-7);
                    const bool on = target.at(x, y) == c;
                    want += -(alpha[static_cast<std::size_t>(c)] / 3.0) *
                            (on ? std::log(p) : std::log(1.0 - p));
                }
        CHECK(lg.value == Catch::Approx(want).epsilon(1e-12));
        check_loss_gradient(logits, lg, [&](const Tensor& t) {
            return balanced_multilabel_ce(t, target, alpha).value;
        });
    }
    SECTION("channel mismatch is a dimension error") {
        Tensor logits(1, 2, 3, 3);
        LabelMap target(3, 3, 3);
        const std::vector<double> alpha{1.0, 1.0, 1.0};
        CHECK_THROWS_AS(balanced_multilabel_ce(logits, target, alpha), DimensionError);
    }
}

TEST_CASE("multilabel IoU loss") {
    SECTION("perfect one-hot prediction with all classes present scores ~0") {
        LabelMap target(4, 2, 3);
        const std::uint8_t pattern[] = {0, 1, 2, 0, 1, 2, 0, 1};
        for (std::size_t i = 0; i < 8; ++i) target.ids[i] = pattern[i];
        Tensor probs(1, 3, 2, 4);
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < 8; ++i)
                probs[c * 8 + i] = target.ids[static_cast<std::size_t>(i)] == c ? 1.0 : 0.0;
        CHECK(multilabel_iou_loss(probs, target).value == Catch::Approx(0.0).margin(1e-11));
    }
    SECTION("uniform probabilities on a one-class image") {
        // N=2 classes, image entirely class 0, probs = 1/2 everywhere:
        // class 0: I = 4*(1/2), U = 4*(1/2+1-1/2) = 4 -> ratio 1/2
        // class 1: I = 0, U = 4*(1/2) = 2 -> ratio 0
        // loss = 1 - (1/2)(1/2 + 0) = 3/4
        LabelMap target(2, 2, 2);
        Tensor probs = Tensor::full({1, 2, 2, 2}, 0.5);
        CHECK(multilabel_iou_loss(probs, target).value == Catch::Approx(0.75).epsilon(1e-9));
    }
    SECTION("gradient matches finite differences") {
        Rng rng(27);
        for (int trial = 0; trial < 20; ++trial) {
            LabelMap target = random_labels(rng, 4, 3, 3);
            Tensor probs(1, 3, 3, 4);
            for (std::int64_t i = 0; i < probs.size(); ++i) probs[i] = rng.uniform(0.05, 0.95);
            LossGrad lg = multilabel_iou_loss(probs, target);
            check_loss_gradient(probs, lg,
                                [&](const Tensor& t) { return multilabel_iou_loss(t, target).value; });
        }
    }
}

TEST_CASE("composed segmentation, contour, and energy losses") {
    Rng rng(28);
    LabelMap target = random_labels(rng, 4, 4, 3);
    const std::vector<double> alpha{1.0, 0.8, 1.5};
    Tensor logits = random_logits(rng, {1, 3, 4, 4});

    SECTION("psi4=0 reduces to psi3 * balanced CE") {
        LossGrad a = seg_loss(logits, target, alpha, 0.7, 0.0);
        LossGrad b = balanced_multilabel_ce(logits, target, alpha);
        CHECK(a.value == Catch::Approx(0.7 * b.value).epsilon(1e-13));
    }
    SECTION("energy target all bin 0 with saturated correct logits is ~0") {
        QuantizedDistanceMap q(4, 4, 2);
        Tensor sat(1, 2, 4, 4);
        for (int i = 0; i < 16; ++i) {
            sat[i] = 40.0;        // bin-0 channel on
            sat[16 + i] = -40.0;  // bin-1 channel off
        }
        const std::vector<double> mu{1.0, 1.0};
        CHECK(energy_loss(sat, q, mu, 1.0, 1.0).value == Catch::Approx(0.0).margin(1e-3));
    }
    SECTION("finite differences for all three compositions") {
        for (int trial = 0; trial < 20; ++trial) {
            LabelMap t2 = random_labels(rng, 3, 3, 3);
            Tensor l2 = random_logits(rng, {1, 3, 3, 3});
            const double w1 = rng.uniform(0.2, 1.8), w2 = rng.uniform(0.2, 1.8);
            LossGrad sg = seg_loss(l2, t2, alpha, w1, w2);
            check_loss_gradient(l2, sg,
                                [&](const Tensor& t) { return seg_loss(t, t2, alpha, w1, w2).value; });

            LossGrad cg = contour_loss(l2, t2, alpha, w1, w2);
            check_loss_gradient(
                l2, cg, [&](const Tensor& t) { return contour_loss(t, t2, alpha, w1, w2).value; });

            QuantizedDistanceMap q(3, 3, 3);
            for (std::size_t i = 0; i < q.bin_of.size(); ++i)
                q.bin_of[i] = static_cast<std::uint8_t>(rng.uniform_int(3));
            LossGrad eg = energy_loss(l2, q, alpha, w1, w2);
            check_loss_gradient(l2, eg,
                                [&](const Tensor& t) { return energy_loss(t, q, alpha, w1, w2).value; });
        }
    }
}

TEST_CASE("total loss") {
    LossWeights w;
    SECTION("single task with unit weight and batch 1 passes through") {
        w.lambda_e = 0.0;
        w.lambda_c = 0.0;
        w.lambda_d = 0.0;
        CHECK(total_loss({0.0, 3.25, 0.0, 0.0}, w, 1) == 3.25);
    }
    SECTION("two equal tasks with unit weights average back to the value") {
        w.lambda_e = 1.0;
        w.lambda_s = 1.0;
        w.lambda_c = 0.0;
        w.lambda_d = 0.0;
        const double v = 1.7;
        CHECK(total_loss({v, v, 0.0, 0.0}, w, 1) == Catch::Approx(v));
    }
    SECTION("random four-task case against the direct formula") {
        Rng rng(29);
        for (int trial = 0; trial < 10; ++trial) {
            LossWeights lw;
            lw.lambda_e = rng.uniform(0.1, 2.0);
            lw.lambda_s = rng.uniform(0.1, 2.0);
            lw.lambda_c = rng.uniform(0.1, 2.0);
            lw.lambda_d = rng.uniform(0.1, 2.0);
            std::array<double, 4> vals{rng.uniform(0, 3), rng.uniform(0, 3), rng.uniform(0, 3),
                                       rng.uniform(0, 3)};
            const std::int64_t n = 1 + static_cast<std::int64_t>(rng.uniform_int(5));
            const double want = (lw.lambda_e * vals[0] + lw.lambda_s * vals[1] +
                                 lw.lambda_c * vals[2] + lw.lambda_d * vals[3]) /
                                (4.0 * static_cast<double>(n));
            CHECK(total_loss(vals, lw, n) == Catch::Approx(want).epsilon(1e-14));
        }
    }
    SECTION("homogeneity: scaling lambda_t scales that contribution exactly") {
        LossWeights a;
        a.lambda_e = 0.5;
        LossWeights b = a;
        b.lambda_e = 1.5;
        const std::array<double, 4> vals{2.0, 1.0, 1.0, 1.0};
        const double base = total_loss(vals, a, 1);
        const double scaled = total_loss(vals, b, 1);
        // contribution of task E tripled: difference is 2*lambda*V/(|T|*n)
        CHECK(scaled - base == Catch::Approx(2.0 * 0.5 * 2.0 / 4.0).epsilon(1e-14));
    }
    SECTION("all-zero weights are a configuration error") {
        LossWeights z;
        z.lambda_e = z.lambda_s = z.lambda_c = z.lambda_d = 0.0;
        CHECK_THROWS_AS(total_loss({1, 1, 1, 1}, z, 1), ConfigError);
    }
}

TEST_CASE("loss values are finite and non-negative on random inputs") {
    Rng rng(30);
    for (int trial = 0; trial < 25; ++trial) {
        EdgeMap e = random_edges(rng, 5, 5, rng.uniform(0.05, 0.9));
        Tensor logits = random_logits(rng, {1, 1, 5, 5}, 10.0);
        const double h = hed_loss(logits, e).value;
        CHECK(std::isfinite(h));
        CHECK(h >= 0.0);

        LabelMap lm = random_labels(rng, 5, 5, 4);
        Tensor ml = random_logits(rng, {1, 4, 5, 5}, 10.0);
        const std::vector<double> alpha{1.0, 1.0, 1.0, 1.0};
        const double s = seg_loss(ml, lm, alpha, 1.0, 1.0).value;
        CHECK(std::isfinite(s));
        CHECK(s >= 0.0);
    }
}

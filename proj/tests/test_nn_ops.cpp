#include <doctest.h>

#include <cmath>

#include "fd_check.hpp"
#include "somlab/nn/adadelta.hpp"
#include "somlab/nn/losses.hpp"
#include "somlab/nn/ops.hpp"
#include "somlab/rng.hpp"

using namespace somlab;
using somlab::nn::conv_out_dim;

namespace {

// Test-only helper for the max-vs-average property.
TensorD avgpool(const TensorD& x, int k, int s) {
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int oh = (h - k) / s + 1, ow = (w - k) / s + 1;
    TensorD y({c, oh, ow});
    for (int ci = 0; ci < c; ++ci)
        for (int yy = 0; yy < oh; ++yy)
            for (int xx = 0; xx < ow; ++xx) {
                double s2 = 0;
                for (int dy = 0; dy < k; ++dy)
                    for (int dx = 0; dx < k; ++dx)
                        s2 += x.data[(std::size_t(ci) * h + yy * s + dy) * w + xx * s + dx];
                y.data[(std::size_t(ci) * oh + yy) * ow + xx] = s2 / (k * k);
            }
    return y;
}

}  // namespace

TEST_CASE("conv2d shapes: 28 valid 5x5 -> 24; chain arithmetic to 4096") {
    nn::Conv2d<double> c1;
    c1.in_ch = 1;
    c1.out_ch = 2;
    c1.k = 5;
    c1.pad = 0;
    c1.w = TensorD({2, 1, 5, 5});
    c1.b.assign(2, 0.0);
    TensorD x({1, 28, 28});
    const TensorD y = conv2d_forward(c1, x);
    CHECK(y.shape == std::vector<int>{2, 24, 24});
    CHECK(conv_out_dim(24, 5, 0) == 20);
    // 20x20 pooled by 5/5 gives 4x4: 256 maps * 16 = 4096
    CHECK(((20 - 5) / 5 + 1) == 4);
}

TEST_CASE("conv2d: delta kernel with same padding is the identity") {
    nn::Conv2d<double> c;
    c.in_ch = 1;
    c.out_ch = 1;
    c.k = 5;
    c.pad = 2;
    c.w = TensorD({1, 1, 5, 5});
    c.w.data[2 * 5 + 2] = 1.0;  // center tap
    c.b.assign(1, 0.0);
    Rng rng(3);
    TensorD x = fdcheck::random_tensor({1, 9, 9}, rng);
    const TensorD y = conv2d_forward(c, x);
    REQUIRE(y.shape == x.shape);
    for (std::size_t i = 0; i < x.numel(); ++i)
        CHECK(y.data[i] == doctest::Approx(x.data[i]).epsilon(1e-12));
}

TEST_CASE("conv2d: all-ones 3x3 kernel sums a 3x3 input to a scalar") {
    nn::Conv2d<double> c;
    c.in_ch = 1;
    c.out_ch = 1;
    c.k = 3;
    c.pad = 0;
    c.w = TensorD({1, 1, 3, 3});
    for (auto& v : c.w.data) v = 1.0;
    c.b.assign(1, 0.0);
    TensorD x({1, 3, 3});
    double sum = 0;
    for (int i = 0; i < 9; ++i) {
        x.data[i] = i * 0.25 - 1.0;
        sum += x.data[i];
    }
    const TensorD y = conv2d_forward(c, x);
    REQUIRE(y.shape == std::vector<int>{1, 1, 1});
    CHECK(y.data[0] == doctest::Approx(sum).epsilon(1e-12));
}

TEST_CASE("conv2d backward: zero upstream and single-pixel upstream") {
    Rng rng(17);
    nn::Conv2d<double> c;
    c.in_ch = 1;
    c.out_ch = 1;
    c.k = 3;
    c.pad = 0;
    c.w = fdcheck::random_tensor({1, 1, 3, 3}, rng);
    c.b.assign(1, 0.1);
    const TensorD x = fdcheck::random_tensor({1, 6, 6}, rng);

    TensorD zero({1, 4, 4});
    const auto gz = conv2d_backward(c, x, zero);
    for (const double v : gz.weight.data) CHECK(v == 0.0);
    CHECK(gz.bias[0] == 0.0);

    TensorD single({1, 4, 4});
    const int py = 1, px = 2;
    single.data[py * 4 + px] = 1.0;
    const auto gs = conv2d_backward(c, x, single);
    // kernel gradient equals the input patch under that output pixel
    for (int dy = 0; dy < 3; ++dy)
        for (int dx = 0; dx < 3; ++dx)
            CHECK(gs.weight.data[dy * 3 + dx] ==
                  doctest::Approx(x.data[(py + dy) * 6 + (px + dx)]).epsilon(1e-12));
}

TEST_CASE("conv2d/deconv2d gradients match central finite differences") {
    Rng rng(101);
    for (int i = 0; i < 6; ++i) {
        std::string why;
        CHECK_MESSAGE(fdcheck::conv_backward_fd(rng, &why) == 0, "conv case ", i, ": ", why);
    }
    for (int i = 0; i < 5; ++i) {
        std::string why;
        CHECK_MESSAGE(fdcheck::deconv_backward_fd(rng, &why) == 0, "deconv case ", i, ": ",
                      why);
    }
}

TEST_CASE("pool/upsample/dense/loss/penalty gradients match finite differences") {
    Rng rng(202);
    for (int i = 0; i < 4; ++i) {
        std::string why;
        CHECK_MESSAGE(fdcheck::pool_upsample_fd(rng, &why) == 0, "pool case ", i, ": ", why);
    }
    for (int i = 0; i < 3; ++i) {
        std::string why;
        CHECK_MESSAGE(fdcheck::dense_losses_fd(rng, &why) == 0, "dense case ", i, ": ", why);
    }
    for (int i = 0; i < 3; ++i) {
        std::string why;
        CHECK_MESSAGE(fdcheck::penalized_chain_fd(rng, &why) == 0, "chain case ", i, ": ",
                      why);
    }
}

TEST_CASE("deconv: 20->24->28 chain and delta-kernel placement") {
    nn::Deconv2d<double> d1;
    d1.in_ch = 3;
    d1.out_ch = 2;
    d1.k = 5;
    d1.pad = 0;
    d1.w = TensorD({3, 2, 5, 5});
    d1.b.assign(2, 0.0);
    const TensorD y1 = deconv2d_forward(d1, TensorD({3, 20, 20}));
    CHECK(y1.shape == std::vector<int>{2, 24, 24});

    nn::Deconv2d<double> d2;
    d2.in_ch = 2;
    d2.out_ch = 1;
    d2.k = 5;
    d2.pad = 0;
    d2.w = TensorD({2, 1, 5, 5});
    d2.b.assign(1, 0.0);
    CHECK(deconv2d_forward(d2, y1).shape == std::vector<int>{1, 28, 28});

    // delta kernel at (a,b) copies the input shifted by (a,b) into the canvas
    nn::Deconv2d<double> dd;
    dd.in_ch = 1;
    dd.out_ch = 1;
    dd.k = 3;
    dd.pad = 0;
    dd.w = TensorD({1, 1, 3, 3});
    const int a = 2, b = 1;
    dd.w.data[a * 3 + b] = 1.0;
    dd.b.assign(1, 0.0);
    Rng rng(5);
    const TensorD x = fdcheck::random_tensor({1, 4, 4}, rng);
    const TensorD y = deconv2d_forward(dd, x);
    REQUIRE(y.shape == std::vector<int>{1, 6, 6});
    for (int yy = 0; yy < 6; ++yy)
        for (int xx = 0; xx < 6; ++xx) {
            const int sy = yy - a, sx = xx - b;
            const double expect = (sy >= 0 && sy < 4 && sx >= 0 && sx < 4)
                                      ? x.data[sy * 4 + sx]
                                      : 0.0;
            CHECK(y.data[yy * 6 + xx] == doctest::Approx(expect).epsilon(1e-12));
        }
}

TEST_CASE("maxpool: sizes, constant input, tie rule, errors") {
    TensorD x({1, 20, 20});
    for (auto& v : x.data) v = 0.5;
    const auto r = nn::maxpool_forward(x, 5, 5);
    CHECK(r.y.shape == std::vector<int>{1, 4, 4});
    for (const double v : r.y.data) CHECK(v == 0.5);
    // ties go to the first row-major element of each window
    CHECK(r.argmax[0] == 0);
    CHECK(r.argmax[1] == 5);

    TensorD g({1, 4, 4});
    for (auto& v : g.data) v = 1.0;
    const TensorD gx = nn::maxpool_backward(g, r.argmax, x.shape);
    CHECK(gx.data[0] == 1.0);
    CHECK(gx.data[1] == 0.0);

    TensorD y({1, 24, 24});
    CHECK(nn::maxpool_forward(y, 2, 2).y.shape == std::vector<int>{1, 12, 12});
    TensorD tiny({1, 3, 3});
    CHECK_THROWS_AS(nn::maxpool_forward(tiny, 5, 5), std::invalid_argument);
}

TEST_CASE("maxpool dominates average pooling on every window") {
    Rng rng(31);
    const TensorD x = fdcheck::random_tensor({2, 8, 8}, rng);
    const auto mx = nn::maxpool_forward(x, 2, 2);
    const TensorD av = avgpool(x, 2, 2);
    for (std::size_t i = 0; i < mx.y.numel(); ++i) CHECK(mx.y.data[i] >= av.data[i]);
}

TEST_CASE("upsample: factor 5 on 4x4, identity at k=1, block-sum backward") {
    TensorD x({2, 4, 4});
    Rng rng(7);
    for (auto& v : x.data) v = rng.uniform();
    const TensorD y = nn::upsample_forward(x, 5);
    CHECK(y.shape == std::vector<int>{2, 20, 20});
    CHECK(y.data[0] == x.data[0]);
    CHECK(y.data[4] == x.data[0]);  // still inside the first 5x5 block

    const TensorD id = nn::upsample_forward(x, 1);
    CHECK(id.data == x.data);
    CHECK_THROWS_AS(nn::upsample_forward(x, 0), std::invalid_argument);

    TensorD g({2, 20, 20});
    for (auto& v : g.data) v = 1.0;
    const TensorD gx = nn::upsample_backward(g, 5);
    for (const double v : gx.data) CHECK(v == doctest::Approx(25.0));
}

TEST_CASE("losses: exact values") {
    TensorD a({4}), b({4});
    a.data = {0.1, 0.2, 0.3, 0.4};
    b.data = a.data;
    TensorD g;
    CHECK(nn::mse(a, b, &g) == 0.0);
    for (const double v : g.data) CHECK(v == 0.0);

    TensorD logits({10});
    for (auto& v : logits.data) v = 0.7;
    CHECK(nn::softmax_crossentropy(logits, 3) ==
          doctest::Approx(std::log(10.0)).epsilon(1e-12));
    CHECK_THROWS_AS(nn::softmax_crossentropy(logits, 10), std::invalid_argument);
    CHECK_THROWS_AS(nn::softmax_crossentropy(logits, -1), std::invalid_argument);
}

TEST_CASE("softmax normalizes to 1 within 1e-12") {
    Rng rng(41);
    for (int t = 0; t < 20; ++t) {
        TensorD logits = fdcheck::random_tensor({10}, rng, -30.0, 30.0);
        nn::softmax_inplace(logits);
        double s = 0;
        for (const double v : logits.data) s += v;
        CHECK(std::abs(s - 1.0) < 1e-12);
    }
}

TEST_CASE("penalties: exact values and no-op at lambda 0") {
    TensorD w({2});
    w.data = {1.0, -2.0};
    TensorD g({2});
    const double l2 = nn::l2_weight_penalty(w, 1e-4, &g);
    CHECK(l2 == doctest::Approx(5e-4).epsilon(1e-12));
    CHECK(g.data[0] == doctest::Approx(2e-4).epsilon(1e-12));
    CHECK(g.data[1] == doctest::Approx(-4e-4).epsilon(1e-12));

    TensorD a({3});
    a.data = {0.5, 0.0, -1.5};
    TensorD ga({3});
    const double l1 = nn::l1_activity_penalty(a, 2.0, &ga);
    CHECK(l1 == doctest::Approx(4.0));
    CHECK(ga.data[0] == 2.0);
    CHECK(ga.data[1] == 0.0);  // sign(0) = 0
    CHECK(ga.data[2] == -2.0);

    TensorD g0({2});
    CHECK(nn::l2_weight_penalty(w, 0.0, &g0) == 0.0);
    for (const double v : g0.data) CHECK(v == 0.0);
}

TEST_CASE("adadelta: zero gradient, first-step value, predicted trajectory") {
    nn::AdadeltaParams hp;  // rho 0.95, eps 1e-7, lr 1.0
    SUBCASE("zero gradient leaves parameters untouched and decays state") {
        std::vector<double> p{1.0, -2.0};
        std::vector<double> g{0.0, 0.0};
        nn::AdadeltaState<double> st;
        st.init(2);
        st.eg2 = {0.5, 0.5};
        adadelta_step<double>(p, g, st, hp);
        CHECK(p[0] == 1.0);
        CHECK(p[1] == -2.0);
        CHECK(st.eg2[0] == doctest::Approx(0.475));
    }
    SUBCASE("first step with unit gradient") {
        std::vector<double> p{0.0};
        std::vector<double> g{1.0};
        nn::AdadeltaState<double> st;
        adadelta_step<double>(p, g, st, hp);
        const double expected = -std::sqrt(1e-7 / (0.05 + 1e-7));
        CHECK(p[0] == doctest::Approx(expected).epsilon(1e-12));
    }
    SUBCASE("constant gradient follows the closed recurrence; ratio stabilizes") {
        std::vector<double> p{0.0};
        const std::vector<double> g{1.0};
        nn::AdadeltaState<double> st;
        // independent recurrence for the two moving averages
        double eg2 = 0.0, edx2 = 0.0, prev_p = 0.0, prev_dx = 0.0, dx = 0.0;
        for (int t = 0; t < 2000; ++t) {
            prev_p = p[0];
            adadelta_step<double>(p, g, st, hp);
            eg2 = 0.95 * eg2 + 0.05;
            dx = -std::sqrt((edx2 + 1e-7) / (eg2 + 1e-7));
            edx2 = 0.95 * edx2 + 0.05 * dx * dx;
            CHECK(p[0] - prev_p == doctest::Approx(dx).epsilon(1e-10));
            if (t > 1000 && prev_dx != 0.0)
                CHECK(std::abs(dx / prev_dx - 1.0) < 1e-3);
            prev_dx = dx;
        }
        CHECK(st.eg2[0] >= 0.0);
        CHECK(st.edx2[0] >= 0.0);
        CHECK(std::isfinite(st.eg2[0]));
    }
    SUBCASE("non-finite gradients are rejected") {
        std::vector<double> p{0.0};
        std::vector<double> g{std::numeric_limits<double>::quiet_NaN()};
        nn::AdadeltaState<double> st;
        CHECK_THROWS_AS(adadelta_step<double>(p, g, st, hp), std::runtime_error);
    }
}

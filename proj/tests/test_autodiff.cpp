#include <doctest.h>

#include "gradcheck.hpp"
#include "scaf/autodiff.hpp"

using namespace scaf;
using namespace scaf::ad;
using scaf::testutil::check_gradients;
using scaf::testutil::random_tensor;

TEST_SUITE_BEGIN("autodiff");

TEST_CASE("elementwise forward values") {
    Var a = constant(Tensor::scalar(3.0));
    Var b = constant(Tensor::scalar(4.0));
    CHECK(add(a, b)->value[0] == doctest::Approx(7.0));
    CHECK(sub(a, b)->value[0] == doctest::Approx(-1.0));
    CHECK(mul(a, b)->value[0] == doctest::Approx(12.0));
    CHECK(div(a, b)->value[0] == doctest::Approx(0.75));
    CHECK(relu(constant(Tensor::scalar(-2.0)))->value[0] == 0.0);
    CHECK(sigmoid(constant(Tensor::scalar(0.0)))->value[0] ==
          doctest::Approx(0.5));
}

TEST_CASE("elementwise gradients") {
    Rng rng(11);
    Var a = parameter(random_tensor({2, 3, 3}, rng, 0.2, 1.5));
    Var b = parameter(random_tensor({2, 3, 3}, rng, 0.2, 1.5));
    auto res = check_gradients(
        [&] {
            Var x = mul(add(a, b), sub(a, b));
            Var y = div(x, add_scalar(mul(b, b), 1.0));
            return mean_all(add(sigmoid(y), relu(mul_scalar(x, 0.3))));
        },
        {a, b});
    CHECK_MESSAGE(res.ok, res.where, " rel=", res.worst_rel);
}

TEST_CASE("abs gradient away from kink") {
    Rng rng(3);
    Tensor t = random_tensor({1, 4, 4}, rng, 0.1, 1.0);
    t[3] = -0.7;
    t[9] = -0.2;
    Var a = parameter(t);
    auto res = check_gradients([&] { return mean_all(ad::abs(a)); }, {a});
    CHECK(res.ok);
}

TEST_CASE("smul and broadcast multiplies") {
    Rng rng(5);
    Var s = parameter(Tensor::scalar(0.7));
    Var x = parameter(random_tensor({3, 4, 5}, rng));
    Var m = parameter(random_tensor({1, 4, 5}, rng));
    Var ch = parameter(random_tensor({3, 4, 1}, rng));
    Var cw = parameter(random_tensor({3, 1, 5}, rng));
    auto res = check_gradients(
        [&] {
            Var y = smul(s, x);
            y = bmul_map(y, m);
            y = bmul_cols(y, ch);
            y = bmul_rows(y, cw);
            return mean_all(y);
        },
        {s, x, m, ch, cw});
    CHECK_MESSAGE(res.ok, res.where, " rel=", res.worst_rel);
}

TEST_CASE("conv2d forward known value") {
    // 1x1 input channel, 3x3 kernel of ones, center pixel 1 -> sums
    Tensor x({1, 3, 3});
    x.at(0, 1, 1) = 1.0;
    Tensor w({1, 1, 3, 3}, 1.0);
    Var out = conv2d(constant(x), constant(w), constant(Tensor({1})), 1, 1);
    CHECK(out->value.at(0, 0, 0) == doctest::Approx(1.0));
    CHECK(out->value.at(0, 1, 1) == doctest::Approx(1.0));
    CHECK(out->value.at(0, 2, 2) == doctest::Approx(1.0));
}

TEST_CASE("conv2d gradients stride 1 and 2") {
    Rng rng(7);
    for (int stride : {1, 2}) {
        Var x = parameter(random_tensor({2, 6, 6}, rng));
        Var w = parameter(random_tensor({3, 2, 3, 3}, rng, -0.5, 0.5));
        Var b = parameter(random_tensor({3}, rng));
        auto res = check_gradients(
            [&] { return mean_all(conv2d(x, w, b, stride, 1)); }, {x, w, b});
        CHECK_MESSAGE(res.ok, "stride=", stride, " ", res.where, " rel=",
                      res.worst_rel);
    }
}

TEST_CASE("instance norm gradient and statistics") {
    Rng rng(9);
    Var x = parameter(random_tensor({2, 4, 4}, rng, -2.0, 2.0));
    Var g = parameter(random_tensor({2}, rng, 0.5, 1.5));
    Var b = parameter(random_tensor({2}, rng));
    Var out = instance_norm(x, g, b, 1e-5);
    // per-channel mean ~ bias
    for (int c = 0; c < 2; ++c) {
        double mu = 0;
        for (int y = 0; y < 4; ++y)
            for (int xx = 0; xx < 4; ++xx) mu += out->value.at(c, y, xx);
        CHECK(mu / 16.0 == doctest::Approx(b->value[c]).epsilon(1e-9));
    }
    auto res = check_gradients(
        [&] { return mean_all(mul(instance_norm(x, g, b, 1e-5),
                                  instance_norm(x, g, b, 1e-5))); },
        {x, g, b}, 2e-4);
    CHECK_MESSAGE(res.ok, res.where, " rel=", res.worst_rel);
}

TEST_CASE("linear, pools, concat, slice gradients") {
    Rng rng(13);
    Var v = parameter(random_tensor({5}, rng));
    Var w = parameter(random_tensor({3, 5}, rng));
    Var b = parameter(random_tensor({3}, rng));
    auto res = check_gradients([&] { return mean_all(linear(v, w, b)); },
                               {v, w, b});
    CHECK(res.ok);

    Var x = parameter(random_tensor({4, 3, 5}, rng));
    auto res2 = check_gradients(
        [&] {
            Var a = pool_mean_w(x);     // {4,3,1}
            Var c = pool_mean_h(x);     // {4,1,5}
            Var g = global_avg_pool(x); // {4}
            Var sl = slice_channels(x, 1, 3);
            Var cc = concat_channels({sl, sl});
            return add(mean_all(cc),
                       add(mean_all(a), add(mean_all(c), mean_all(g))));
        },
        {x});
    CHECK_MESSAGE(res2.ok, res2.where);
}

TEST_CASE("split/concat is lossless") {
    Rng rng(17);
    Var x = constant(random_tensor({8, 2, 2}, rng));
    std::vector<Var> parts;
    for (int k = 0; k < 4; ++k)
        parts.push_back(slice_channels(x, 2 * k, 2 * k + 2));
    Var back = concat_channels(parts);
    for (int64_t i = 0; i < x->value.numel(); ++i)
        CHECK(back->value[i] == x->value[i]);
}

TEST_CASE("resize_bilinear gradient") {
    Rng rng(19);
    Var x = parameter(random_tensor({2, 4, 4}, rng));
    auto up = check_gradients([&] { return mean_all(mul(resize_bilinear(x, 8, 8),
                                                        resize_bilinear(x, 8, 8))); },
                              {x});
    CHECK(up.ok);
    auto dn = check_gradients([&] { return mean_all(resize_bilinear(x, 2, 2)); },
                              {x});
    CHECK(dn.ok);
}

TEST_CASE("gather_hw matches manual permutation and backward scatters") {
    Rng rng(23);
    Var x = parameter(random_tensor({1, 2, 2}, rng));
    IndexMap map;
    map.out_h = 2;
    map.out_w = 2;
    map.src = {3, 2, 1, 0};
    Var y = gather_hw(x, map);
    CHECK(y->value[0] == x->value[3]);
    CHECK(y->value[3] == x->value[0]);
    auto res = check_gradients(
        [&] { return mean_all(mul(gather_hw(x, map), gather_hw(x, map))); }, {x});
    CHECK(res.ok);
}

TEST_CASE("filter2d_fixed gradient with replicate padding") {
    Rng rng(29);
    Tensor k({3, 3});
    for (auto& v : k.data) v = rng.uniform(0.0, 0.3);
    Var x = parameter(random_tensor({2, 5, 5}, rng));
    auto res = check_gradients(
        [&] { return mean_all(mul(filter2d_fixed(x, k), filter2d_fixed(x, k))); },
        {x});
    CHECK(res.ok);
}

TEST_CASE("masked_mean and bce_logits_masked") {
    Rng rng(31);
    Var x = parameter(random_tensor({1, 4, 4}, rng, -2.0, 2.0));
    Tensor mask({1, 4, 4});
    Tensor target({1, 4, 4});
    for (int i = 0; i < 16; ++i) {
        mask[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
        target[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
    }
    auto res = check_gradients(
        [&] { return masked_mean(mul(x, x), mask, 1e-8); }, {x});
    CHECK(res.ok);
    auto res2 = check_gradients(
        [&] { return bce_logits_masked(x, target, mask); }, {x});
    CHECK(res2.ok);

    // empty mask -> exact zero, no gradient explosion
    Tensor empty({1, 4, 4});
    CHECK(bce_logits_masked(x, target, empty)->value[0] == 0.0);
}

TEST_CASE("entropy_map values and gradient") {
    Tensor p({1, 1, 3});
    p[0] = 0.5;
    p[1] = 0.0;
    p[2] = 1.0;
    Var e = entropy_map(constant(p));
    CHECK(e->value[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(e->value[1] == 0.0);
    CHECK(e->value[2] == 0.0);

    Rng rng(37);
    Var q = parameter(random_tensor({1, 3, 3}, rng, 0.05, 0.95));
    auto res = check_gradients([&] { return mean_all(entropy_map(q)); }, {q});
    CHECK(res.ok);
}

TEST_CASE("pairwise_affinity gradient") {
    Rng rng(41);
    auto kernel = std::make_shared<PairwiseKernel>();
    const int h = 4, w = 4;
    for (auto [dy, dx] : {std::pair{0, 1}, std::pair{1, 0}, std::pair{0, -1},
                          std::pair{-1, 0}}) {
        Tensor wm({1, h, w});
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                int jy = y + dy, jx = x + dx;
                if (jy < 0 || jy >= h || jx < 0 || jx >= w) continue;
                wm.at(0, y, x) = rng.uniform(0.1, 1.0);
                kernel->pair_count += 1;
            }
        kernel->offsets.push_back({dy, dx});
        kernel->weights.push_back(std::move(wm));
    }
    Var p = parameter(random_tensor({1, h, w}, rng, 0.1, 0.9));
    auto res = check_gradients([&] { return pairwise_affinity(p, kernel); }, {p});
    CHECK(res.ok);
}

TEST_CASE("backward accumulates into shared parameters") {
    Var p = parameter(Tensor::scalar(2.0));
    Var loss1 = mul(p, p); // d/dp = 4
    backward(loss1);
    CHECK(p->grad[0] == doctest::Approx(4.0));
    Var loss2 = mul_scalar(p, 3.0); // d/dp = 3
    backward(loss2);
    CHECK(p->grad[0] == doctest::Approx(7.0));
    zero_grad({p});
    CHECK(p->grad[0] == 0.0);
}

TEST_SUITE_END();

#include <doctest.h>

#include <filesystem>

#include "gradcheck.hpp"
#include "scaf/discriminator.hpp"

using namespace scaf;
using scaf::testutil::random_tensor;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("discriminator");

TEST_CASE("fuse_neighborhood: constant field is a fixed point") {
    Tensor patches({3, 4, 4}, 0.0);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 16; ++i) patches.data[c * 16 + i] = 0.5 + c;
    Rng rng(1);
    Tensor w({3, 3});
    double sum = 0;
    for (auto& v : w.data) {
        v = rng.uniform(0.01, 1.0);
        sum += v;
    }
    for (auto& v : w.data) v /= sum;
    Tensor out = fuse_neighborhood(patches, w);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 16; ++i)
            CHECK(out.data[c * 16 + i] == doctest::Approx(0.5 + c).epsilon(1e-12));
}

TEST_CASE("fuse_neighborhood: 1x1 grid is identity") {
    Tensor p({5, 1, 1});
    for (int i = 0; i < 5; ++i) p.data[i] = i * 0.3;
    Tensor out = fuse_neighborhood(p, uniform_fusion_weights());
    for (int i = 0; i < 5; ++i)
        CHECK(out.data[i] == doctest::Approx(p.data[i]).epsilon(1e-12));
}

TEST_CASE("fuse_neighborhood matches a brute-force loop") {
    Rng rng(2);
    Tensor p = random_tensor({2, 4, 4}, rng);
    Tensor out = fuse_neighborhood(p, uniform_fusion_weights());
    auto cl = [](int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
    for (int c = 0; c < 2; ++c)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) {
                double acc = 0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx)
                        acc += p.at(c, cl(y + dy, 3), cl(x + dx, 3)) / 9.0;
                CHECK(out.at(c, y, x) == doctest::Approx(acc).epsilon(1e-12));
            }
}

TEST_CASE("fuse_neighborhood rejects unnormalized weights") {
    Tensor p({1, 2, 2});
    Tensor w({3, 3}, 0.2);
    CHECK_THROWS(fuse_neighborhood(p, w));
}

TEST_CASE("build_patch_bank: 2x2 grid yields 4 entries") {
    Tensor m({3, 2, 2}, 0.25);
    PatchBank bank = build_patch_bank({m}, uniform_fusion_weights(), 0, 1);
    CHECK(bank.size() == 4);
    CHECK(bank.dim == 3);
}

TEST_CASE("build_patch_bank subsampling is deterministic") {
    Rng rng(3);
    std::vector<Tensor> maps;
    for (int i = 0; i < 4; ++i) maps.push_back(random_tensor({2, 5, 5}, rng));
    PatchBank a = build_patch_bank(maps, uniform_fusion_weights(), 10, 77);
    PatchBank b = build_patch_bank(maps, uniform_fusion_weights(), 10, 77);
    CHECK(a.size() == 10);
    CHECK(a.data == b.data);
    PatchBank c = build_patch_bank(maps, uniform_fusion_weights(), 10, 78);
    CHECK(a.data != c.data);
}

TEST_CASE("build_patch_bank equals a brute-force per-image union") {
    Rng rng(4);
    std::vector<Tensor> maps;
    for (int i = 0; i < 3; ++i) maps.push_back(random_tensor({2, 3, 3}, rng));
    PatchBank bank = build_patch_bank(maps, uniform_fusion_weights(), 0, 1);
    REQUIRE(bank.size() == 27);
    int e = 0;
    for (const auto& m : maps) {
        Tensor fused = fuse_neighborhood(m, uniform_fusion_weights());
        for (int y = 0; y < 3; ++y)
            for (int x = 0; x < 3; ++x, ++e)
                for (int c = 0; c < 2; ++c)
                    CHECK(bank.entry(e)[c] ==
                          doctest::Approx((float)fused.at(c, y, x)).epsilon(1e-12));
    }
    CHECK_THROWS(build_patch_bank({}, uniform_fusion_weights(), 0, 1));
}

TEST_CASE("build_semantic_bank normalizes (3,4) to (0.6,0.8)") {
    SemanticBank b = build_semantic_bank({{3.0, 4.0}});
    CHECK(b.entry(0)[0] == doctest::Approx(0.6));
    CHECK(b.entry(0)[1] == doctest::Approx(0.8));

    SemanticBank unit = build_semantic_bank({{1.0, 0.0}});
    CHECK(unit.entry(0)[0] == doctest::Approx(1.0));
    CHECK(unit.entry(0)[1] == doctest::Approx(0.0));
}

TEST_CASE("semantic bank norms are 1 within 1e-6 (brute force)") {
    Rng rng(5);
    std::vector<std::vector<double>> descs;
    for (int i = 0; i < 20; ++i) {
        std::vector<double> v(16);
        for (auto& x : v) x = rng.uniform(-2.0, 2.0);
        descs.push_back(v);
    }
    SemanticBank b = build_semantic_bank(descs);
    for (int i = 0; i < b.size(); ++i) {
        double n = 0;
        for (int k = 0; k < b.dim; ++k) n += (double)b.entry(i)[k] * b.entry(i)[k];
        CHECK(std::fabs(std::sqrt(n) - 1.0) < 1e-6);
    }
}

TEST_CASE("zero descriptor errors with its index") {
    try {
        build_semantic_bank({{1.0, 0.0}, {0.0, 0.0}});
        FAIL("expected error");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("1") != std::string::npos);
    }
}

TEST_CASE("suppress identities") {
    SemanticBank b1 = build_semantic_bank({{1.0, 0.0}});
    auto r1 = suppress({1.0, 0.0}, b1); // perfect match annihilates
    CHECK(r1[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r1[1] == doctest::Approx(0.0).epsilon(1e-12));

    SemanticBank b2 = build_semantic_bank({{0.0, 1.0}});
    auto r2 = suppress({1.0, 0.0}, b2); // orthogonality preserves
    CHECK(r2[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r2[1] == doctest::Approx(0.0).epsilon(1e-12));

    auto r3 = suppress({1.0, 1.0}, b1); // (1 - 1/sqrt(2)) * q
    double expect = (1.0 - 1.0 / std::sqrt(2.0));
    CHECK(r3[0] == doctest::Approx(expect).epsilon(1e-9));
    CHECK(r3[1] == doctest::Approx(expect).epsilon(1e-9));

    auto r4 = suppress({0.0, 0.0}, b1); // zero passes through
    CHECK(r4[0] == 0.0);
    CHECK(r4[1] == 0.0);
}

TEST_CASE("suppression shrinks norms in the nonnegative regime") {
    Rng rng(6);
    std::vector<std::vector<double>> descs;
    for (int i = 0; i < 8; ++i) {
        std::vector<double> v(6);
        for (auto& x : v) x = rng.uniform(0.0, 1.0); // nonnegative features
        descs.push_back(v);
    }
    SemanticBank bank = build_semantic_bank(descs);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> q(6);
        double qn = 0;
        for (auto& x : q) {
            x = rng.uniform(0.0, 2.0);
            qn += x * x;
        }
        auto s = suppress(q, bank);
        double sn = 0;
        for (double x : s) sn += x * x;
        CHECK(std::sqrt(sn) <= std::sqrt(qn) + 1e-12);
    }
}

TEST_CASE("score identities and brute-force oracle") {
    PatchBank member_bank;
    member_bank.dim = 2;
    double e1[2] = {1.0, 2.0};
    member_bank.add(e1);
    CHECK(score({1.0, 2.0}, member_bank) == doctest::Approx(0.0)); // membership

    PatchBank origin_bank;
    origin_bank.dim = 2;
    double e0[2] = {0.0, 0.0};
    origin_bank.add(e0);
    CHECK(score({3.0, 4.0}, origin_bank) == doctest::Approx(5.0)); // 3-4-5

    Rng rng(7);
    PatchBank big;
    big.dim = 8;
    for (int i = 0; i < 50; ++i) {
        std::vector<double> e(8);
        for (auto& x : e) x = rng.uniform(-1.0, 1.0);
        big.add(e.data());
    }
    for (int t = 0; t < 100; ++t) {
        std::vector<double> q(8);
        for (auto& x : q) x = rng.uniform(-1.0, 1.0);
        double got = score(q, big);
        double best = 1e300;
        for (int i = 0; i < big.size(); ++i) {
            double d = 0;
            for (int k = 0; k < 8; ++k) {
                double diff = q[k] - big.entry(i)[k];
                d += diff * diff;
            }
            best = std::min(best, std::sqrt(d));
        }
        CHECK(got == doctest::Approx(best).epsilon(1e-12));
        // lower bound against sampled entries
        for (int probe = 0; probe < 5; ++probe) {
            int i = (int)rng.uniform_int(big.size());
            double d = 0;
            for (int k = 0; k < 8; ++k) {
                double diff = q[k] - big.entry(i)[k];
                d += diff * diff;
            }
            CHECK(got <= std::sqrt(d) + 1e-12);
        }
    }
}

TEST_CASE("score is invariant to bank entry order") {
    Rng rng(8);
    std::vector<std::vector<double>> entries;
    for (int i = 0; i < 20; ++i) {
        std::vector<double> e(4);
        for (auto& x : e) x = rng.uniform(-1.0, 1.0);
        entries.push_back(e);
    }
    PatchBank fwd, rev;
    fwd.dim = rev.dim = 4;
    for (const auto& e : entries) fwd.add(e.data());
    for (auto it = entries.rbegin(); it != entries.rend(); ++it)
        rev.add(it->data());
    std::vector<double> q = {0.3, -0.2, 0.9, 0.1};
    CHECK(score(q, fwd) == doctest::Approx(score(q, rev)).epsilon(1e-12));
}

TEST_CASE("minmax_normalize bounds and degenerate case") {
    Tensor m({1, 2, 2});
    m.data = {1.0, 3.0, 2.0, 5.0};
    Tensor n = minmax_normalize(m);
    CHECK(n.min() == doctest::Approx(0.0));
    CHECK(n.max() == doctest::Approx(1.0));
    Tensor c({1, 2, 2}, 0.7);
    Tensor nc = minmax_normalize(c);
    CHECK(nc.max() == 0.0);
}

TEST_CASE("purify gate behavior") {
    Tensor zero({1, 10, 10});
    Tensor mp({1, 10, 10});
    // ap_raw == 0 -> output 0
    CHECK(purify(mp, zero, 7, 0.7, 0.5).sum() == 0.0);

    // mp == 0 -> gate never fires, ap passes through
    Rng rng(9);
    Tensor ap = random_tensor({1, 10, 10}, rng, 0.0, 1.0);
    Tensor out = purify(zero, ap, 7, 0.7, 0.5);
    CHECK(out.data == ap.data);

    // identical block in both maps is zeroed exactly on the block
    Tensor mp2({1, 12, 12});
    Tensor ap2({1, 12, 12});
    for (int y = 3; y < 8; ++y)
        for (int x = 3; x < 8; ++x) {
            mp2.at(0, y, x) = 1.0;
            ap2.at(0, y, x) = 1.0;
        }
    Tensor p2 = purify(mp2, ap2, 7, 0.7, 0.5);
    for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 12; ++x) {
            bool in_block = y >= 3 && y < 8 && x >= 3 && x < 8;
            CHECK(p2.at(0, y, x) == (in_block ? 0.0 : ap2.at(0, y, x)));
        }

    // purify never increases ap (property)
    Tensor mpr = random_tensor({1, 10, 10}, rng, 0.0, 1.0);
    Tensor apr = random_tensor({1, 10, 10}, rng, 0.0, 1.0);
    Tensor pr = purify(mpr, apr, 7, 0.7, 0.5);
    for (int64_t i = 0; i < pr.numel(); ++i) CHECK(pr[i] <= apr[i]);
}

namespace {

MdConfig toy_md_config() {
    MdConfig cfg;
    cfg.descriptor_dim = 16;
    cfg.capacity = 2000;
    cfg.backbone.widths = {4, 8, 8, 8};
    cfg.extractor_seed = 55;
    return cfg;
}

Tensor flat_texture(Rng& rng, int n, double r, double g, double b) {
    Tensor t({3, n, n});
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            t.at(0, y, x) = std::clamp(r + rng.uniform(-0.05, 0.05), 0.0, 1.0);
            t.at(1, y, x) = std::clamp(g + rng.uniform(-0.05, 0.05), 0.0, 1.0);
            t.at(2, y, x) = std::clamp(b + rng.uniform(-0.05, 0.05), 0.0, 1.0);
        }
    return t;
}

} // namespace

TEST_CASE("prior pipeline: member query, separation, bounds, serialization") {
    Rng rng(10);
    std::vector<Tensor> authentic;
    for (int i = 0; i < 6; ++i)
        authentic.push_back(flat_texture(rng, 64, 0.3, 0.5, 0.4));
    std::vector<Tensor> manipulated;
    for (int i = 0; i < 4; ++i) {
        Tensor img = flat_texture(rng, 64, 0.3, 0.5, 0.4);
        for (int y = 20; y < 44; ++y)
            for (int x = 20; x < 44; ++x) {
                img.at(0, y, x) = 0.9;
                img.at(1, y, x) = 0.1;
                img.at(2, y, x) = 0.2;
            }
        manipulated.push_back(img);
    }

    ManipulatedDiscriminator md(toy_md_config());
    md.build(authentic, manipulated, 123);

    // a bank member scores (near) zero everywhere against its own class
    Tensor raw = md.raw_score_map(authentic[0], true);
    CHECK(raw.max() < 1e-5);

    // pasted alien block raises MP inside vs outside
    PriorPair p = md.prior_pair(manipulated[0]);
    CHECK(p.mp.min() >= 0.0);
    CHECK(p.mp.max() <= 1.0);
    CHECK(p.ap.min() >= 0.0);
    CHECK(p.ap.max() <= 1.0);
    const int ph = p.mp.height(), pw = p.mp.width();
    double in_sum = 0, out_sum = 0;
    int in_n = 0, out_n = 0;
    for (int y = 0; y < ph; ++y)
        for (int x = 0; x < pw; ++x) {
            int iy = y * 64 / ph, ix = x * 64 / pw;
            bool inside = iy >= 20 && iy < 44 && ix >= 20 && ix < 44;
            (inside ? in_sum : out_sum) += p.mp.at(0, y, x);
            (inside ? in_n : out_n) += 1;
        }
    CHECK(in_sum / in_n > out_sum / out_n);

    // serialization round trip reproduces priors exactly
    fs::path path = fs::temp_directory_path() / "scaf_test_bank.bin";
    md.save(path.string());
    ManipulatedDiscriminator loaded = ManipulatedDiscriminator::load(path.string());
    PriorPair p2 = loaded.prior_pair(manipulated[0]);
    CHECK(p2.mp.data == p.mp.data);
    CHECK(p2.ap.data == p.ap.data);
}

TEST_SUITE_END();

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "gradcheck.hpp"
#include "scaf/dataio.hpp"

using namespace scaf;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("dataio");

namespace {

fs::path fresh_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_toy_split(const fs::path& root, const std::string& split, int n,
                     bool with_scribbles = true) {
    fs::create_directories(root / split / "images");
    if (with_scribbles) fs::create_directories(root / split / "scribbles");
    for (int i = 0; i < n; ++i) {
        std::string id = "img_" + std::to_string(i);
        ImageU8 img;
        img.width = 8;
        img.height = 8;
        img.channels = 3;
        img.pixels.assign(8 * 8 * 3, (uint8_t)(i * 40));
        write_png((root / split / "images" / (id + ".png")).string(), img);
        if (with_scribbles) {
            TriStateMask m = TriStateMask::unlabeled(8, 8);
            m.set(0, 0, ScribbleLabel::kManipulated);
            m.set(7, 7, ScribbleLabel::kAuthentic);
            write_png((root / split / "scribbles" / (id + ".png")).string(),
                      encode_scribble(m));
        }
    }
}

} // namespace

TEST_CASE("load_dataset returns id-sorted samples") {
    fs::path root = fresh_dir("scaf_ds_sorted");
    write_toy_split(root, "train", 3);
    auto samples = load_dataset(root.string(), "train");
    REQUIRE(samples.size() == 3);
    CHECK(samples[0].id == "img_0");
    CHECK(samples[1].id == "img_1");
    CHECK(samples[2].id == "img_2");
    CHECK(samples[0].scribble.count(ScribbleLabel::kManipulated) == 1);
    CHECK(samples[0].scribble.count(ScribbleLabel::kAuthentic) == 1);
    // determinism
    auto again = load_dataset(root.string(), "train");
    CHECK(again.size() == 3);
    CHECK(again[1].image.data == samples[1].image.data);
}

TEST_CASE("missing scribble names the sample") {
    fs::path root = fresh_dir("scaf_ds_missing");
    write_toy_split(root, "train", 2);
    fs::remove(root / "train" / "scribbles" / "img_1.png");
    try {
        load_dataset(root.string(), "train");
        FAIL("expected error");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("img_1") != std::string::npos);
    }
}

TEST_CASE("malformed scribble value names the value") {
    fs::path root = fresh_dir("scaf_ds_badval");
    write_toy_split(root, "train", 1);
    ImageU8 bad;
    bad.width = 8;
    bad.height = 8;
    bad.channels = 1;
    bad.pixels.assign(64, 255);
    bad.pixels[5] = 7;
    write_png((root / "train" / "scribbles" / "img_0.png").string(), bad);
    try {
        load_dataset(root.string(), "train");
        FAIL("expected error");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("7") != std::string::npos);
    }
}

TEST_CASE("split without scribble dir loads as unlabeled") {
    fs::path root = fresh_dir("scaf_ds_noscrib");
    write_toy_split(root, "authentic", 2, false);
    auto samples = load_dataset(root.string(), "authentic");
    REQUIRE(samples.size() == 2);
    CHECK(samples[0].scribble.count(ScribbleLabel::kUnlabeled) == 64);
}

TEST_CASE("scribble encoding round-trips losslessly") {
    Rng rng(5);
    TriStateMask m = TriStateMask::unlabeled(13, 9);
    for (int y = 0; y < 13; ++y)
        for (int x = 0; x < 9; ++x) {
            double u = rng.uniform();
            if (u < 0.3)
                m.set(y, x, ScribbleLabel::kManipulated);
            else if (u < 0.6)
                m.set(y, x, ScribbleLabel::kAuthentic);
        }
    fs::path p = fresh_dir("scaf_ds_rt") / "m.png";
    write_png(p.string(), encode_scribble(m));
    TriStateMask back = decode_scribble(read_png(p.string()), "rt");
    CHECK(back.labels == m.labels);
}

TEST_CASE("synthesize_scribble full coverage marks every foreground pixel") {
    Tensor mask({1, 8, 8}, 1.0);
    TriStateMask m = synthesize_scribble(mask, 1.0, 3);
    CHECK(m.count(ScribbleLabel::kManipulated) == 64);
    CHECK(m.count(ScribbleLabel::kAuthentic) == 0);
}

TEST_CASE("synthesize_scribble is deterministic") {
    Tensor mask({1, 32, 32});
    for (int y = 10; y < 20; ++y)
        for (int x = 8; x < 24; ++x) mask.at(0, y, x) = 1.0;
    TriStateMask a = synthesize_scribble(mask, 0.1, 42);
    TriStateMask b = synthesize_scribble(mask, 0.1, 42);
    CHECK(a.labels == b.labels);
    TriStateMask c = synthesize_scribble(mask, 0.1, 43);
    CHECK(a.labels != c.labels);
}

TEST_CASE("centered square: count and containment oracle") {
    Tensor mask({1, 64, 64});
    for (int y = 24; y < 40; ++y)
        for (int x = 24; x < 40; ++x) mask.at(0, y, x) = 1.0;
    TriStateMask m = synthesize_scribble(mask, 0.1, 7);
    // brute-force containment scan + count
    int64_t inside = 0;
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
            if (m.at(y, x) == ScribbleLabel::kManipulated) {
                CHECK(mask.at(0, y, x) == 1.0);
                ++inside;
            }
    CHECK(inside >= 25);
    CHECK(inside <= 26);
}

TEST_CASE("scribble containment property over random masks and seeds") {
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor mask({1, 24, 24});
        int n_rects = 1 + (int)rng.uniform_int(3);
        for (int r = 0; r < n_rects; ++r) {
            int w = 3 + (int)rng.uniform_int(8), h = 3 + (int)rng.uniform_int(8);
            int x0 = (int)rng.uniform_int(24 - w), y0 = (int)rng.uniform_int(24 - h);
            for (int y = y0; y < y0 + h; ++y)
                for (int x = x0; x < x0 + w; ++x) mask.at(0, y, x) = 1.0;
        }
        double coverage = rng.uniform(0.05, 0.9);
        TriStateMask m = synthesize_scribble(mask, coverage, rng.next_u64());
        int64_t fg = 0, bg = 0, man = 0, aut = 0;
        for (int y = 0; y < 24; ++y)
            for (int x = 0; x < 24; ++x) {
                bool in = mask.at(0, y, x) > 0.5;
                fg += in;
                bg += !in;
                if (m.at(y, x) == ScribbleLabel::kManipulated) {
                    REQUIRE(in); // never outside the foreground
                    ++man;
                }
                if (m.at(y, x) == ScribbleLabel::kAuthentic) {
                    REQUIRE(!in);
                    ++aut;
                }
            }
        CHECK(std::abs(man - llround(coverage * fg)) <= 1);
        CHECK(std::abs(aut - llround(coverage * bg)) <= 1);
    }
}

TEST_CASE("synthesize_scribble error cases") {
    Tensor empty({1, 8, 8});
    CHECK_THROWS(synthesize_scribble(empty, 0.5, 1));
    Tensor ok({1, 8, 8}, 1.0);
    CHECK_THROWS(synthesize_scribble(ok, 0.0, 1));
    CHECK_THROWS(synthesize_scribble(ok, 1.5, 1));
}

TEST_CASE("apply_transform: 180 rotation is an involution") {
    Rng rng(4);
    Tensor x = scaf::testutil::random_tensor({3, 6, 6}, rng);
    AugmentationSpec spec;
    spec.kind = AugmentationSpec::Kind::kRotation;
    spec.angle_deg = 180;
    Tensor once = apply_transform_map(x, spec);
    Tensor twice = apply_transform_map(once, spec);
    CHECK(twice.data == x.data);
}

TEST_CASE("horizontal flip hand case") {
    Tensor x({1, 2, 2});
    x.at(0, 0, 0) = 1.0;
    AugmentationSpec spec;
    spec.kind = AugmentationSpec::Kind::kHFlip;
    Tensor f = apply_transform_map(x, spec);
    CHECK(f.at(0, 0, 0) == 0.0);
    CHECK(f.at(0, 0, 1) == 1.0);
    CHECK(f.at(0, 1, 0) == 0.0);
    CHECK(f.at(0, 1, 1) == 0.0);
    // self-inverse
    Tensor ff = apply_transform_map(f, spec);
    CHECK(ff.data == x.data);
}

TEST_CASE("constant map survives scale down + nearest upsample") {
    Tensor x({1, 64, 64}, 0.37);
    AugmentationSpec spec;
    spec.kind = AugmentationSpec::Kind::kScaling;
    spec.scale = 0.5;
    Tensor down = apply_transform_map(x, spec);
    CHECK(down.height() == 32);
    Tensor up = resize_nearest(down, 64, 64);
    CHECK(up.data == x.data);
}

TEST_CASE("image and map transforms agree on geometry") {
    Rng rng(8);
    Tensor x = scaf::testutil::random_tensor({1, 8, 8}, rng);
    for (int angle : {90, 180, 270}) {
        AugmentationSpec spec;
        spec.kind = AugmentationSpec::Kind::kRotation;
        spec.angle_deg = angle;
        Tensor a = apply_transform_image(x, spec);
        Tensor b = apply_transform_map(x, spec);
        CHECK(a.data == b.data); // rotations are exact in both paths
    }
}

TEST_CASE("unsupported rotation angle errors") {
    Tensor x({1, 4, 4});
    AugmentationSpec spec;
    spec.kind = AugmentationSpec::Kind::kRotation;
    spec.angle_deg = 45;
    CHECK_THROWS(apply_transform_map(x, spec));
    CHECK_THROWS(apply_transform_image(x, spec));
}

TEST_CASE("scaled extents stay divisible by 32") {
    for (double s : {0.5, 0.77, 1.0, 1.31, 1.5}) {
        int e = scaled_extent(128, s);
        CHECK(e % 32 == 0);
        CHECK(e >= 32);
    }
    CHECK(scaled_extent(128, 0.5) == 64);
    CHECK(scaled_extent(128, 1.0) == 128);
}

TEST_CASE("fixture generator rejects nonpositive sample counts") {
    FixtureConfig fc;
    fc.n_samples = 0;
    CHECK_THROWS(generate_fixture(
        (fs::temp_directory_path() / "scaf_fx_zero").string(), fc));
}

TEST_CASE("fixture generator writes the documented layout deterministically") {
    fs::path root = fresh_dir("scaf_fixture_test");
    FixtureConfig fc;
    fc.n_samples = 3;
    fc.n_authentic = 2;
    fc.image_size = 64;
    fc.seed = 11;
    generate_fixture(root.string(), fc);
    auto train = load_dataset(root.string(), "train");
    REQUIRE(train.size() == 3);
    CHECK(train[0].dense_mask.has_value());
    CHECK(train[0].scribble.count(ScribbleLabel::kManipulated) > 0);
    auto auth = load_dataset(root.string(), "authentic");
    REQUIRE(auth.size() == 2);

    fs::path root2 = fresh_dir("scaf_fixture_test2");
    generate_fixture(root2.string(), fc);
    std::ifstream a(root / "train" / "images" / "sample_000.png",
                    std::ios::binary);
    std::ifstream b(root2 / "train" / "images" / "sample_000.png",
                    std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)),
                   std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)),
                   std::istreambuf_iterator<char>());
    CHECK(sa == sb);
}

TEST_SUITE_END();

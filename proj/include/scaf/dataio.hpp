#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scaf/autodiff.hpp"
#include "scaf/image.hpp"
#include "scaf/rng.hpp"
#include "scaf/tensor.hpp"

namespace scaf {

// on-disk scribble encoding, bit-exact
enum class ScribbleLabel : uint8_t {
    kAuthentic = 0,
    kManipulated = 1,
    kUnlabeled = 255,
};

struct TriStateMask {
    int height = 0, width = 0;
    std::vector<uint8_t> labels; // row-major, values 0/1/255

    ScribbleLabel at(int y, int x) const {
        return (ScribbleLabel)labels[(size_t)y * width + x];
    }
    void set(int y, int x, ScribbleLabel l) {
        labels[(size_t)y * width + x] = (uint8_t)l;
    }
    int64_t count(ScribbleLabel l) const;
    static TriStateMask unlabeled(int h, int w);
};

struct Sample {
    std::string id;
    Tensor image;                    // {3,H,W} in [0,1]
    TriStateMask scribble;           // H x W
    std::optional<Tensor> dense_mask; // {1,H,W} in {0,1}, evaluation only
};

// Layout: <root>/<split>/images/<id>.png, .../scribbles/<id>.png,
// optional .../masks/<id>.png. If the scribbles directory is absent the
// split is treated as unscribbled (all pixels UNLABELED).
std::vector<Sample> load_dataset(const std::string& root,
                                 const std::string& split);

TriStateMask decode_scribble(const ImageU8& img, const std::string& context);
ImageU8 encode_scribble(const TriStateMask& m);

// Seeded random-walk scribbles inside each connected component of the mask
// foreground, plus authentic scribbles in the background at the same
// coverage. Per-class pixel count hits round(coverage * class_area) exactly.
TriStateMask synthesize_scribble(const Tensor& dense_mask, double coverage,
                                 uint64_t seed);

struct AugmentationSpec {
    enum class Kind { kRotation, kScaling, kHFlip };
    Kind kind = Kind::kHFlip;
    int angle_deg = 0;  // 90, 180, 270
    double scale = 1.0; // [0.5, 1.5]
    uint64_t seed = 0;
};

AugmentationSpec sample_augmentation(Rng& rng);

// round(scale * extent / 32) * 32, floored at 32 so the backbone contract
// holds for any scale in range
int scaled_extent(int extent, double scale);

Tensor apply_transform_image(const Tensor& x, const AugmentationSpec& spec);
Tensor apply_transform_map(const Tensor& x, const AugmentationSpec& spec);
// tape-side equivalent of apply_transform_map
ad::IndexMap transform_index_map(int h, int w, const AugmentationSpec& spec);

struct FixtureConfig {
    int n_samples = 20;
    int n_authentic = 20;
    int image_size = 128;
    double coverage = 0.1;
    uint64_t seed = 7;
};

// Procedural splice fixtures: a textured rectangle pasted from a second
// texture, with dense masks and synthesized scribbles. Writes the dataio
// layout under out_root (train/ and authentic/ splits).
void generate_fixture(const std::string& out_root, const FixtureConfig& cfg);

} // namespace scaf

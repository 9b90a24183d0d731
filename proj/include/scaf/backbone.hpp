#pragma once

#include <array>

#include "scaf/nn.hpp"

namespace scaf {

// f_i, i = 1..4, at strides 4/8/16/32 of the input
struct FeaturePyramid {
    std::array<ad::Var, 4> stages;
};

struct BackboneConfig {
    std::vector<int> widths = {32, 64, 128, 256};
    int semantic_dim = 256;
    double norm_eps = 1e-5;

    void validate() const;
};

// Small trainable convnet with the PVTv2 stride schedule: stride-4 stem,
// then one stride-2 downsample per later stage, two conv blocks each.
// A pretrained transformer can be dropped in behind the same extract()
// contract; nothing downstream depends on this choice.
class Backbone {
public:
    Backbone(ParamStore& params, const BackboneConfig& cfg, Rng& rng,
             const std::string& prefix = "backbone");

    FeaturePyramid extract(const ad::Var& image) const;
    FeaturePyramid extract(const Tensor& image) const;

    // global average pool + learned projection of the deepest stage
    ad::Var reduce_semantic(const ad::Var& stage4) const;

    const BackboneConfig& config() const { return cfg_; }

private:
    BackboneConfig cfg_;
    Conv2d stem1_, stem2_;
    NormLayer stem1_n_, stem2_n_;
    struct StageBlock {
        Conv2d c1, c2;
        NormLayer n1, n2;
    };
    std::array<StageBlock, 4> stages_;
    LinearLayer semantic_proj_;
};

} // namespace scaf

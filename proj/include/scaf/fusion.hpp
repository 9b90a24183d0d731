#pragma once

#include <array>
#include <optional>

#include "scaf/nn.hpp"

namespace scaf {

struct GateOutputs {
    ad::Var local;   // L
    ad::Var context; // C
    ad::Var theta;   // gate map {1,h,w}, values in (0,1)
    ad::Var gated;   // O = y + theta*L + (1-theta)*C
    ad::Var enhanced; // Me
    ad::Var diff;     // D
    ad::Var ey;       // Conv1(Me + D)
};

struct FusionOptions {
    bool enhance_attention_weighted = true; // Me = O + A*L (else O + L)
    bool diff_from_enhanced = true;         // D = Me - Bg (else O - Bg)
};

struct GmmBlock {
    Conv2d l1, l2, c1, c2;
    Conv2d gate; // 1x1, 2g -> 1
    Conv2d out;  // 1x1, g -> g
    FusionOptions opts;
    std::optional<double> gate_override; // test hook: constant theta

    static GmmBlock create(ParamStore& ps, const std::string& name, int g,
                           const FusionOptions& opts, Rng& rng);
    GateOutputs forward(const ad::Var& y) const;
    ad::Var operator()(const ad::Var& y) const { return forward(y).ey; }
};

// ordered lossless channel split into 4 equal groups
std::array<ad::Var, 4> split4(const ad::Var& ex);

struct ProgressiveOut {
    std::array<ad::Var, 4> y;  // pre-GMM stage inputs
    std::array<ad::Var, 4> ey; // GMM outputs
    ad::Var fused;             // concat(ey_0..ey_3)
};

// One pairwise fusion level: e_x from (x_i, x_{i+1}), CFEM split and
// progressive gated fusion, and the level's prediction head.
struct GafmLevel {
    int channels = 0;
    Conv2d lo_proj;   // 1x1, C_lo -> C
    Conv2d fuse_conv; // 3x3, C -> C
    std::array<Conv2d, 4> stage_conv;
    std::array<GmmBlock, 4> gmm;
    Conv2d head; // 1x1, C -> 1

    static GafmLevel create(ParamStore& ps, const std::string& name, int c_hi,
                            int c_lo, const FusionOptions& opts, Rng& rng);

    // x_lo upsampled x2 (bilinear), projected to C, added to x_hi, conv3
    ad::Var fuse_pair(const ad::Var& x_hi, const ad::Var& x_lo) const;
    ProgressiveOut progressive_fuse(const std::array<ad::Var, 4>& groups) const;
    ad::Var cfem(const ad::Var& ex) const {
        return progressive_fuse(split4(ex)).fused;
    }
    // logit head at the level's native resolution
    ad::Var predict(const ad::Var& ey) const { return head(ey); }
};

} // namespace scaf

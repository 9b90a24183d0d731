#include "scaf/fusion.hpp"

#include <stdexcept>

namespace scaf {

GmmBlock GmmBlock::create(ParamStore& ps, const std::string& name, int g,
                          const FusionOptions& opts, Rng& rng) {
    GmmBlock b;
    b.l1 = Conv2d::create(ps, name + ".l1", g, g, 3, 1, 1, rng);
    b.l2 = Conv2d::create(ps, name + ".l2", g, g, 3, 1, 1, rng, true, 1.0);
    b.c1 = Conv2d::create(ps, name + ".c1", g, g, 3, 1, 1, rng);
    b.c2 = Conv2d::create(ps, name + ".c2", g, g, 3, 1, 1, rng, true, 1.0);
    b.gate = Conv2d::create(ps, name + ".gate", 2 * g, 1, 1, 1, 0, rng, true, 1.0);
    b.out = Conv2d::create(ps, name + ".out", g, g, 1, 1, 0, rng, true, 1.0);
    b.opts = opts;
    return b;
}

GateOutputs GmmBlock::forward(const ad::Var& y) const {
    using namespace ad;
    GateOutputs r;
    r.local = l2(relu(l1(y)));
    r.context = c2(relu(c1(add(r.local, y))));
    if (gate_override) {
        Tensor t({1, y->value.height(), y->value.width()});
        t.fill(*gate_override);
        r.theta = constant(std::move(t));
    } else {
        r.theta = sigmoid(gate(concat_channels({r.local, r.context})));
    }
    Var inv_theta = add_scalar(neg(r.theta), 1.0);
    r.gated = add(y, add(bmul_map(r.local, r.theta),
                         bmul_map(r.context, inv_theta)));
    Var attn = sigmoid(r.gated); // mask semantics for the reverse path
    Var background = mul(add_scalar(neg(attn), 1.0), r.context);
    r.enhanced = opts.enhance_attention_weighted
                     ? add(r.gated, mul(attn, r.local))
                     : add(r.gated, r.local);
    r.diff = opts.diff_from_enhanced ? sub(r.enhanced, background)
                                     : sub(r.gated, background);
    r.ey = out(add(r.enhanced, r.diff));
    return r;
}

std::array<ad::Var, 4> split4(const ad::Var& ex) {
    const int c = ex->value.channels();
    if (c % 4 != 0)
        throw std::runtime_error("split4: channel count " + std::to_string(c) +
                                 " not divisible by 4");
    const int g = c / 4;
    return {ad::slice_channels(ex, 0, g), ad::slice_channels(ex, g, 2 * g),
            ad::slice_channels(ex, 2 * g, 3 * g),
            ad::slice_channels(ex, 3 * g, 4 * g)};
}

GafmLevel GafmLevel::create(ParamStore& ps, const std::string& name, int c_hi,
                            int c_lo, const FusionOptions& opts, Rng& rng) {
    if (c_hi % 4 != 0)
        throw std::runtime_error("gafm: fused width " + std::to_string(c_hi) +
                                 " must be divisible by 4");
    GafmLevel lvl;
    lvl.channels = c_hi;
    const int g = c_hi / 4;
    // bias-free so a zero coarse branch contributes exactly nothing
    lvl.lo_proj = Conv2d::create(ps, name + ".loproj", c_lo, c_hi, 1, 1, 0, rng,
                                 false, 1.0);
    lvl.fuse_conv =
        Conv2d::create(ps, name + ".fuse", c_hi, c_hi, 3, 1, 1, rng, true, 1.0);
    for (int k = 0; k < 4; ++k) {
        int in_w = (4 - k) * g + (k > 0 ? g : 0);
        lvl.stage_conv[k] = Conv2d::create(ps, name + ".y" + std::to_string(k),
                                           in_w, g, 3, 1, 1, rng, true, 1.0);
        lvl.gmm[k] = GmmBlock::create(ps, name + ".gmm" + std::to_string(k), g,
                                      opts, rng);
    }
    lvl.head =
        Conv2d::create(ps, name + ".head", c_hi, 1, 1, 1, 0, rng, true, 0.1);
    return lvl;
}

ad::Var GafmLevel::fuse_pair(const ad::Var& x_hi, const ad::Var& x_lo) const {
    using namespace ad;
    const int h = x_hi->value.height(), w = x_hi->value.width();
    if (x_lo->value.height() * 2 != h || x_lo->value.width() * 2 != w)
        throw std::runtime_error("fuse_pair: coarse stage must be half size");
    Var up = resize_bilinear(x_lo, h, w);
    return fuse_conv(add(x_hi, lo_proj(up)));
}

ProgressiveOut GafmLevel::progressive_fuse(
    const std::array<ad::Var, 4>& groups) const {
    using namespace ad;
    ProgressiveOut out;
    for (int k = 0; k < 4; ++k) {
        std::vector<Var> parts;
        for (int z = k; z < 4; ++z) parts.push_back(groups[z]);
        if (k > 0) parts.push_back(out.ey[k - 1]);
        out.y[k] = stage_conv[k](concat_channels(parts));
        out.ey[k] = gmm[k](out.y[k]);
    }
    out.fused = concat_channels({out.ey[0], out.ey[1], out.ey[2], out.ey[3]});
    return out;
}

} // namespace scaf

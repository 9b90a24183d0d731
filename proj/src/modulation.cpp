#include "scaf/modulation.hpp"

#include <stdexcept>

namespace scaf {

ad::Var response(const ad::Var& mp, const ad::Var& ap,
                 const ModulationParams& params) {
    if (!mp->value.same_shape(ap->value))
        throw std::runtime_error("response: MP/AP shape mismatch " +
                                 mp->value.shape_str() + " vs " +
                                 ap->value.shape_str());
    using namespace ad;
    Var num = smul(params.alpha, mp);
    Var den = add_scalar(add(num, smul(params.beta, ap)), params.epsilon);
    return div(num, den);
}

CoordAttention CoordAttention::create(ParamStore& ps, const std::string& name,
                                      int cin, int cout, int reduction,
                                      Rng& rng) {
    CoordAttention a;
    int mid = std::max(4, cin / reduction);
    a.reduce = Conv2d::create(ps, name + ".reduce", cin, mid, 1, 1, 0, rng);
    a.norm_h = NormLayer::create(ps, name + ".nh", mid);
    a.norm_w = NormLayer::create(ps, name + ".nw", mid);
    a.attn_h = Conv2d::create(ps, name + ".ah", mid, cin, 1, 1, 0, rng, true, 1.0);
    a.attn_w = Conv2d::create(ps, name + ".aw", mid, cin, 1, 1, 0, rng, true, 1.0);
    a.proj = Conv2d::create(ps, name + ".proj", cin, cout, 1, 1, 0, rng, true, 1.0);
    return a;
}

ad::Var CoordAttention::operator()(const ad::Var& x) const {
    using namespace ad;
    if (bypass) return proj(x);
    Var zh = pool_mean_w(x); // {C,H,1}
    Var zw = pool_mean_h(x); // {C,1,W}
    Var th = relu(norm_h(reduce(zh)));
    Var tw = relu(norm_w(reduce(zw)));
    Var ah = sigmoid(attn_h(th));
    Var aw = sigmoid(attn_w(tw));
    return proj(bmul_rows(bmul_cols(x, ah), aw));
}

FmmStage FmmStage::create(ParamStore& ps, const std::string& name, int channels,
                          int ca_reduction, Rng& rng) {
    FmmStage s;
    s.ge_conv = Conv2d::create(ps, name + ".ge", 1, 1, 1, 1, 0, rng, true, 1.0);
    s.ge_norm = NormLayer::create(ps, name + ".gen", 1);
    s.out_conv = Conv2d::create(ps, name + ".out", channels, channels, 1, 1, 0,
                                rng, true, 1.0);
    s.attn = CoordAttention::create(ps, name + ".ca", 2 * channels, channels,
                                    ca_reduction, rng);
    return s;
}

ad::Var FmmStage::modulate(const ad::Var& f, const ad::Var& g,
                           const ModulationParams& params) const {
    using namespace ad;
    Var gr = g;
    if (g->value.height() != f->value.height() ||
        g->value.width() != f->value.width())
        gr = resize_bilinear(g, f->value.height(), f->value.width());
    Var ge = sigmoid(ge_norm(ge_conv(gr)));
    Var modulated = add(f, smul(params.gamma, bmul_map(f, ge)));
    return out_conv(modulated);
}

} // namespace scaf

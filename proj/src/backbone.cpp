#include "scaf/backbone.hpp"

#include <stdexcept>

namespace scaf {

void BackboneConfig::validate() const {
    if (widths.size() != 4)
        throw std::runtime_error("backbone: exactly 4 stage widths required");
    for (int w : widths)
        if (w <= 0 || w % 4 != 0)
            throw std::runtime_error(
                "backbone: stage widths must be positive multiples of 4");
    if (semantic_dim <= 0)
        throw std::runtime_error("backbone: semantic_dim must be positive");
}

Backbone::Backbone(ParamStore& params, const BackboneConfig& cfg, Rng& rng,
                   const std::string& prefix)
    : cfg_(cfg) {
    cfg_.validate();
    const auto& w = cfg_.widths;
    stem1_ = Conv2d::create(params, prefix + ".stem1", 3, w[0], 3, 2, 1, rng);
    stem1_n_ = NormLayer::create(params, prefix + ".stem1n", w[0], cfg.norm_eps);
    stem2_ = Conv2d::create(params, prefix + ".stem2", w[0], w[0], 3, 2, 1, rng);
    stem2_n_ = NormLayer::create(params, prefix + ".stem2n", w[0], cfg.norm_eps);
    for (int i = 0; i < 4; ++i) {
        int cin = i == 0 ? w[0] : w[i - 1];
        int s = i == 0 ? 1 : 2;
        auto name = prefix + ".s" + std::to_string(i + 1);
        stages_[i].c1 = Conv2d::create(params, name + "a", cin, w[i], 3, s, 1, rng);
        stages_[i].n1 = NormLayer::create(params, name + "an", w[i], cfg.norm_eps);
        stages_[i].c2 = Conv2d::create(params, name + "b", w[i], w[i], 3, 1, 1, rng);
        stages_[i].n2 = NormLayer::create(params, name + "bn", w[i], cfg.norm_eps);
    }
    semantic_proj_ = LinearLayer::create(params, prefix + ".semproj", w[3],
                                         cfg_.semantic_dim, rng);
}

FeaturePyramid Backbone::extract(const ad::Var& image) const {
    const int h = image->value.height(), w = image->value.width();
    if (h % 32 != 0 || w % 32 != 0)
        throw std::runtime_error("backbone: input " + std::to_string(h) + "x" +
                                 std::to_string(w) +
                                 " must have sides divisible by 32");
    using namespace ad;
    Var x = relu(stem1_n_(stem1_(image)));
    x = relu(stem2_n_(stem2_(x)));
    FeaturePyramid p;
    for (int i = 0; i < 4; ++i) {
        x = relu(stages_[i].n1(stages_[i].c1(x)));
        x = relu(stages_[i].n2(stages_[i].c2(x)));
        p.stages[i] = x;
    }
    return p;
}

FeaturePyramid Backbone::extract(const Tensor& image) const {
    return extract(ad::constant(image));
}

ad::Var Backbone::reduce_semantic(const ad::Var& stage4) const {
    return semantic_proj_(ad::global_avg_pool(stage4));
}

} // namespace scaf

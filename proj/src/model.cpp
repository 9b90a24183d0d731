#include "scaf/model.hpp"

namespace scaf {

ScafModel::ScafModel(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.backbone.validate();
    Rng rng(Rng::mix(seed, 0x5caf));
    backbone_ = std::make_unique<Backbone>(params_, cfg_.backbone, rng);
    mod_ = ModulationParams::create(params_, cfg_.alpha_init, cfg_.beta_init,
                                    cfg_.gamma_init, cfg_.epsilon);
    const auto& w = cfg_.backbone.widths;
    for (int i = 0; i < 4; ++i)
        fmm_[i] = FmmStage::create(params_, "fmm" + std::to_string(i + 1), w[i],
                                   cfg_.ca_reduction, rng);
    for (int i = 0; i < 3; ++i)
        gafm_[i] = GafmLevel::create(params_, "gafm" + std::to_string(i + 1),
                                     w[i], w[i + 1], cfg_.fusion, rng);
}

PredictionBundle ScafModel::forward(const Tensor& image,
                                    const PriorPair& priors) {
    using namespace ad;
    const int h = image.height(), w = image.width();
    FeaturePyramid pyr = backbone_->extract(image);

    // priors live at one resolution; resize per stage, then respond
    std::array<Var, 4> x;
    for (int i = 0; i < 4; ++i) {
        int sh = pyr.stages[i]->value.height();
        int sw = pyr.stages[i]->value.width();
        Tensor mp_i = priors.mp.height() == sh && priors.mp.width() == sw
                          ? priors.mp
                          : resize_bilinear(priors.mp, sh, sw);
        Tensor ap_i = priors.ap.height() == sh && priors.ap.width() == sw
                          ? priors.ap
                          : resize_bilinear(priors.ap, sh, sw);
        Var g = response(constant(std::move(mp_i)), constant(std::move(ap_i)),
                         mod_);
        x[i] = fmm_[i](pyr.stages[i], g, mod_);
    }

    PredictionBundle out;
    Var* heads[3] = {&out.m1, &out.m2, &out.m3};
    for (int lvl = 0; lvl < 3; ++lvl) {
        Var ex = gafm_[lvl].fuse_pair(x[lvl], x[lvl + 1]);
        Var ey = gafm_[lvl].cfem(ex);
        Var logit = gafm_[lvl].predict(ey);
        *heads[lvl] = ad::resize_bilinear(logit, h, w);
    }
    return out;
}

} // namespace scaf

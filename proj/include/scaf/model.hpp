#pragma once

#include "scaf/backbone.hpp"
#include "scaf/discriminator.hpp"
#include "scaf/fusion.hpp"
#include "scaf/modulation.hpp"

namespace scaf {

struct ModelConfig {
    BackboneConfig backbone;
    double alpha_init = 1.0;
    double beta_init = 1.0;
    double gamma_init = 0.0;
    double epsilon = 1e-6;
    int ca_reduction = 8;
    FusionOptions fusion;
};

// logits at input resolution; m1 is the primary head
struct PredictionBundle {
    ad::Var m1, m2, m3;
};

// Backbone -> prior-modulated stages x_i -> three pairwise GAFM levels ->
// heads. Priors enter as constants (the discriminator is frozen during
// training).
class ScafModel {
public:
    ScafModel(const ModelConfig& cfg, uint64_t seed);

    PredictionBundle forward(const Tensor& image, const PriorPair& priors);

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    ModulationParams& modulation() { return mod_; }
    Backbone& backbone() { return *backbone_; }
    FmmStage& fmm(int i) { return fmm_[i]; }
    GafmLevel& gafm(int i) { return gafm_[i]; }
    const ModelConfig& config() const { return cfg_; }

private:
    ModelConfig cfg_;
    ParamStore params_;
    std::unique_ptr<Backbone> backbone_;
    ModulationParams mod_;
    std::array<FmmStage, 4> fmm_;
    std::array<GafmLevel, 3> gafm_;
};

} // namespace scaf

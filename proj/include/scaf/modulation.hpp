#pragma once

#include "scaf/nn.hpp"

namespace scaf {

// Learnable scalars: alpha/beta weight the two priors, gamma scales the
// residual modulation. alpha and beta are clamped nonnegative after every
// optimizer step.
struct ModulationParams {
    ad::Var alpha, beta, gamma;
    double epsilon = 1e-6;

    static ModulationParams create(ParamStore& ps, double alpha_init,
                                   double beta_init, double gamma_init,
                                   double epsilon) {
        ModulationParams p;
        p.alpha = ps.add("mod.alpha", Tensor::scalar(alpha_init));
        p.beta = ps.add("mod.beta", Tensor::scalar(beta_init));
        p.gamma = ps.add("mod.gamma", Tensor::scalar(gamma_init));
        p.epsilon = epsilon;
        return p;
    }
    void clamp_nonnegative() {
        alpha->value[0] = std::max(alpha->value[0], 0.0);
        beta->value[0] = std::max(beta->value[0], 0.0);
    }
};

// G = alpha*MP / (alpha*MP + beta*AP + eps), elementwise
ad::Var response(const ad::Var& mp, const ad::Var& ap,
                 const ModulationParams& params);

// Factorized H/W pooled attention with a shared reduction conv, applied to
// the channel concat, then projected back to the stage width.
struct CoordAttention {
    Conv2d reduce;
    NormLayer norm_h, norm_w;
    Conv2d attn_h, attn_w;
    Conv2d proj;
    bool bypass = false; // test hook: attention weights forced to 1

    static CoordAttention create(ParamStore& ps, const std::string& name,
                                 int cin, int cout, int reduction, Rng& rng);
    ad::Var operator()(const ad::Var& x) const;
};

struct FmmStage {
    Conv2d ge_conv; // 1x1, 1->1
    NormLayer ge_norm;
    Conv2d out_conv; // 1x1, C->C
    CoordAttention attn;

    static FmmStage create(ParamStore& ps, const std::string& name,
                           int channels, int ca_reduction, Rng& rng);

    // F = Conv1(f + gamma * Ge * f), Ge = sigmoid(norm(conv1(G)));
    // G is resized to f's spatial size if needed
    ad::Var modulate(const ad::Var& f, const ad::Var& g,
                     const ModulationParams& params) const;

    // coordinate attention over concat(F, f), projected to stage width
    ad::Var coord_attention(const ad::Var& fmod, const ad::Var& f) const {
        return attn(ad::concat_channels({fmod, f}));
    }

    ad::Var operator()(const ad::Var& f, const ad::Var& g,
                       const ModulationParams& params) const {
        return coord_attention(modulate(f, g, params), f);
    }
};

} // namespace scaf

#pragma once

#include <memory>

#include "scaf/autodiff.hpp"
#include "scaf/dataio.hpp"

namespace scaf {

struct CemConfig {
    double w_max = 0.1;
    double w_weak = 0.1;
    double entropy_threshold = 0.5; // natural-log units, must stay < ln 2
    int ramp = 20;
    double eps = 1e-8;

    void validate() const;
};

struct LossReport {
    double pce = 0, ca = 0, sc = 0;
    double cem_un = 0, cem_la = 0;
    double lambda_t = 0;
    double total = 0;
    double lr = 0;
    int epoch = 0, step = 0;
};

// binary cross-entropy on logits over scribbled pixels only;
// manipulated -> 1, authentic -> 0, unlabeled ignored; 0 if no labels
ad::Var pce_loss(const ad::Var& logits, const TriStateMask& scribble);

// color/position Gaussian affinity kernel for the context loss; weights
// depend only on the image, so callers cache it per sample
std::shared_ptr<ad::PairwiseKernel> make_ca_kernel(const Tensor& image,
                                                   int window,
                                                   double sigma_rgb,
                                                   double sigma_xy);
ad::Var ca_loss(const ad::Var& probs,
                const std::shared_ptr<ad::PairwiseKernel>& kernel);

// mean SSIM between two {1,h,w} maps, Gaussian 11x11 window (sigma 1.5,
// shrunk for tiny maps), standard stabilizers for unit dynamic range
ad::Var ssim_mean(const ad::Var& a, const ad::Var& b);

// L_SC = mean|m1_aug - T(m1)| + (1 - SSIM(m1_aug, T(m1)))/2; the transport
// T runs on the tape so gradients reach both branches
ad::Var sc_loss(const ad::Var& m1_probs, const ad::Var& m1_aug_probs,
                const AugmentationSpec& spec, bool use_ssim = true);

// H(m) = -[m ln m + (1-m) ln(1-m)], 0*ln 0 == 0
double pixel_entropy(double m);

// lambda(T) = w_max * exp(-(1 - min(T, ramp)/ramp)^2)
double lambda_ramp(int epoch, const CemConfig& cfg);

struct CemTerms {
    ad::Var un; // mean entropy over confident unlabeled pixels
    ad::Var la; // w_weak-scaled mean entropy over labeled pixels
    double lambda = 0;
};

// the confidence filter is a detached selection: no gradient flows through
// the indicator
CemTerms cem_loss(const ad::Var& m1_probs, const TriStateMask& scribble,
                  const CemConfig& cfg, int epoch);

} // namespace scaf

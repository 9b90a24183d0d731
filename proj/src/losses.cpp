#include "scaf/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace scaf {

void CemConfig::validate() const {
    if (!(entropy_threshold < std::log(2.0)))
        throw std::runtime_error(
            "cem: entropy_threshold must be below ln 2 for binary entropy");
    if (ramp < 1) throw std::runtime_error("cem: ramp must be >= 1");
}

ad::Var pce_loss(const ad::Var& logits, const TriStateMask& scribble) {
    const int h = logits->value.height(), w = logits->value.width();
    if (scribble.height != h || scribble.width != w)
        throw std::runtime_error("pce: scribble size mismatch");
    Tensor target({1, h, w});
    Tensor mask({1, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            switch (scribble.at(y, x)) {
            case ScribbleLabel::kManipulated:
                target.at(0, y, x) = 1.0;
                mask.at(0, y, x) = 1.0;
                break;
            case ScribbleLabel::kAuthentic:
                mask.at(0, y, x) = 1.0;
                break;
            case ScribbleLabel::kUnlabeled:
                break;
            }
        }
    return ad::bce_logits_masked(logits, target, mask);
}

std::shared_ptr<ad::PairwiseKernel> make_ca_kernel(const Tensor& image,
                                                   int window, double sigma_rgb,
                                                   double sigma_xy) {
    if (window < 3 || window % 2 == 0)
        throw std::runtime_error("ca: window must be odd and >= 3");
    const int h = image.height(), w = image.width(), r = window / 2;
    const int c = image.channels();
    auto kernel = std::make_shared<ad::PairwiseKernel>();
    const double inv2sr = 1.0 / (2.0 * sigma_rgb * sigma_rgb);
    const double inv2sx = 1.0 / (2.0 * sigma_xy * sigma_xy);
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
            if (dy == 0 && dx == 0) continue;
            Tensor wmap({1, h, w});
            double spatial = -(double)(dy * dy + dx * dx) * inv2sx;
            for (int y = 0; y < h; ++y) {
                int jy = y + dy;
                if (jy < 0 || jy >= h) continue;
                for (int x = 0; x < w; ++x) {
                    int jx = x + dx;
                    if (jx < 0 || jx >= w) continue;
                    double d2 = 0.0;
                    for (int ch = 0; ch < c; ++ch) {
                        double diff = image.at(ch, y, x) - image.at(ch, jy, jx);
                        d2 += diff * diff;
                    }
                    wmap.at(0, y, x) = std::exp(-d2 * inv2sr + spatial);
                    kernel->pair_count += 1.0;
                }
            }
            kernel->offsets.push_back({dy, dx});
            kernel->weights.push_back(std::move(wmap));
        }
    return kernel;
}

ad::Var ca_loss(const ad::Var& probs,
                const std::shared_ptr<ad::PairwiseKernel>& kernel) {
    return ad::pairwise_affinity(probs, kernel);
}

namespace {

Tensor gaussian_window(int k, double sigma) {
    Tensor g({k, k});
    double r = (k - 1) / 2.0, sum = 0.0;
    for (int y = 0; y < k; ++y)
        for (int x = 0; x < k; ++x) {
            double d2 = (y - r) * (y - r) + (x - r) * (x - r);
            g.at2(y, x) = std::exp(-d2 / (2.0 * sigma * sigma));
            sum += g.at2(y, x);
        }
    for (auto& v : g.data) v /= sum;
    return g;
}

} // namespace

ad::Var ssim_mean(const ad::Var& a, const ad::Var& b) {
    using namespace ad;
    if (!a->value.same_shape(b->value))
        throw std::runtime_error("ssim: shape mismatch");
    int k = std::min({11, a->value.height(), a->value.width()});
    if (k % 2 == 0) --k;
    const Tensor g = gaussian_window(k, 1.5);
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    Var mu1 = filter2d_fixed(a, g);
    Var mu2 = filter2d_fixed(b, g);
    Var mu1mu2 = mul(mu1, mu2);
    Var mu1sq = mul(mu1, mu1);
    Var mu2sq = mul(mu2, mu2);
    Var s1 = sub(filter2d_fixed(mul(a, a), g), mu1sq);
    Var s2 = sub(filter2d_fixed(mul(b, b), g), mu2sq);
    Var s12 = sub(filter2d_fixed(mul(a, b), g), mu1mu2);
    Var num = mul(add_scalar(mul_scalar(mu1mu2, 2.0), c1),
                  add_scalar(mul_scalar(s12, 2.0), c2));
    Var den = mul(add_scalar(add(mu1sq, mu2sq), c1),
                  add_scalar(add(s1, s2), c2));
    return mean_all(div(num, den));
}

ad::Var sc_loss(const ad::Var& m1_probs, const ad::Var& m1_aug_probs,
                const AugmentationSpec& spec, bool use_ssim) {
    using namespace ad;
    IndexMap map = transform_index_map(m1_probs->value.height(),
                                       m1_probs->value.width(), spec);
    if (map.out_h != m1_aug_probs->value.height() ||
        map.out_w != m1_aug_probs->value.width())
        throw std::runtime_error("sc: transported map size " +
                                 std::to_string(map.out_h) + "x" +
                                 std::to_string(map.out_w) +
                                 " does not match augmented prediction");
    Var transported = gather_hw(m1_probs, map);
    Var l1 = mean_all(abs(sub(m1_aug_probs, transported)));
    if (!use_ssim) return l1;
    Var ss = ssim_mean(m1_aug_probs, transported);
    return add(l1, mul_scalar(add_scalar(neg(ss), 1.0), 0.5));
}

double pixel_entropy(double m) {
    if (m <= 0.0 || m >= 1.0) return 0.0;
    return -(m * std::log(m) + (1.0 - m) * std::log(1.0 - m));
}

double lambda_ramp(int epoch, const CemConfig& cfg) {
    double t = std::min((double)epoch, (double)cfg.ramp) / (double)cfg.ramp;
    double d = 1.0 - t;
    return cfg.w_max * std::exp(-d * d);
}

CemTerms cem_loss(const ad::Var& m1_probs, const TriStateMask& scribble,
                  const CemConfig& cfg, int epoch) {
    const int h = m1_probs->value.height(), w = m1_probs->value.width();
    if (scribble.height != h || scribble.width != w)
        throw std::runtime_error("cem: scribble size mismatch");
    using namespace ad;
    Var ent = entropy_map(m1_probs);
    Tensor un_mask({1, h, w});
    Tensor la_mask({1, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            bool labeled = scribble.at(y, x) != ScribbleLabel::kUnlabeled;
            if (labeled) {
                la_mask.at(0, y, x) = 1.0;
            } else if (ent->value.at(0, y, x) < cfg.entropy_threshold) {
                un_mask.at(0, y, x) = 1.0; // detached confidence selection
            }
        }
    CemTerms t;
    t.un = masked_mean(ent, un_mask, cfg.eps);
    t.la = mul_scalar(masked_mean(ent, la_mask, cfg.eps), cfg.w_weak);
    t.lambda = lambda_ramp(epoch, cfg);
    return t;
}

} // namespace scaf

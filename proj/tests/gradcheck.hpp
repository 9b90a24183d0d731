#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "scaf/autodiff.hpp"
#include "scaf/rng.hpp"

namespace scaf::testutil {

struct GradCheckResult {
    bool ok = true;
    double worst_rel = 0.0;
    std::string where;
};

// Central finite differences against the tape, elementwise over each leaf.
// `build` must reconstruct the scalar output from the leaves' current values.
inline GradCheckResult check_gradients(
    const std::function<ad::Var()>& build, const std::vector<ad::Var>& leaves,
    double tol = 1e-4, double h_base = 1e-5) {
    GradCheckResult res;
    ad::zero_grad(leaves);
    ad::Var root = build();
    ad::backward(root);
    std::vector<Tensor> analytic;
    for (const auto& l : leaves)
        analytic.push_back(l->grad.shape == l->value.shape ? l->grad
                                                           : Tensor(l->value.shape));
    for (size_t li = 0; li < leaves.size(); ++li) {
        ad::Var leaf = leaves[li];
        for (int64_t i = 0; i < leaf->value.numel(); ++i) {
            double orig = leaf->value[i];
            double h = h_base * std::max(1.0, std::fabs(orig));
            leaf->value[i] = orig + h;
            double up = build()->value[0];
            leaf->value[i] = orig - h;
            double dn = build()->value[0];
            leaf->value[i] = orig;
            double fd = (up - dn) / (2.0 * h);
            double an = analytic[li][i];
            double err = std::fabs(fd - an) /
                         std::max({1.0, std::fabs(fd), std::fabs(an)});
            if (err > res.worst_rel) {
                res.worst_rel = err;
                res.where = "leaf " + std::to_string(li) + " elem " +
                            std::to_string(i);
            }
            if (err > tol) res.ok = false;
        }
    }
    return res;
}

inline Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

} // namespace scaf::testutil

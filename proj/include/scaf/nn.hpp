#pragma once

#include <string>
#include <utility>
#include <vector>

#include "scaf/autodiff.hpp"
#include "scaf/rng.hpp"

namespace scaf {

// Ordered, named parameter registry. Checkpoints serialize it by name;
// the optimizer walks it in insertion order.
struct ParamStore {
    std::vector<std::pair<std::string, ad::Var>> items;
    bool trainable = true;

    ad::Var add(const std::string& name, Tensor init) {
        ad::Var v = trainable ? ad::parameter(std::move(init))
                              : ad::constant(std::move(init));
        items.push_back({name, v});
        return v;
    }
    std::vector<ad::Var> vars() const {
        std::vector<ad::Var> out;
        out.reserve(items.size());
        for (const auto& [n, v] : items) out.push_back(v);
        return out;
    }
    ad::Var find(const std::string& name) const {
        for (const auto& [n, v] : items)
            if (n == name) return v;
        return nullptr;
    }
};

struct Conv2d {
    ad::Var w, b;
    int stride = 1, pad = 0;

    // gain 2 = He (conv feeding a relu), 1 = Xavier-style (linear output),
    // smaller for logit heads
    static Conv2d create(ParamStore& ps, const std::string& name, int cin,
                         int cout, int k, int stride, int pad, Rng& rng,
                         bool bias = true, double gain = 2.0) {
        Conv2d c;
        Tensor wt({cout, cin, k, k});
        double s = std::sqrt(gain / (cin * k * k));
        for (auto& v : wt.data) v = rng.normal() * s;
        c.w = ps.add(name + ".w", std::move(wt));
        c.b = bias ? ps.add(name + ".b", Tensor({cout}))
                   : ad::constant(Tensor({cout}));
        c.stride = stride;
        c.pad = pad;
        return c;
    }
    ad::Var operator()(const ad::Var& x) const {
        return ad::conv2d(x, w, b, stride, pad);
    }
};

struct NormLayer {
    ad::Var gain, bias;
    double eps = 1e-5;

    static NormLayer create(ParamStore& ps, const std::string& name, int c,
                            double eps = 1e-5) {
        NormLayer n;
        n.gain = ps.add(name + ".gain", Tensor({c}, 1.0));
        n.bias = ps.add(name + ".bias", Tensor({c}));
        n.eps = eps;
        return n;
    }
    ad::Var operator()(const ad::Var& x) const {
        return ad::instance_norm(x, gain, bias, eps);
    }
};

struct LinearLayer {
    ad::Var w, b;

    static LinearLayer create(ParamStore& ps, const std::string& name, int in,
                              int out, Rng& rng) {
        LinearLayer l;
        Tensor wt({out, in});
        double s = std::sqrt(1.0 / in);
        for (auto& v : wt.data) v = rng.normal() * s;
        l.w = ps.add(name + ".w", std::move(wt));
        l.b = ps.add(name + ".b", Tensor({out}));
        return l;
    }
    ad::Var operator()(const ad::Var& x) const { return ad::linear(x, w, b); }
};

} // namespace scaf

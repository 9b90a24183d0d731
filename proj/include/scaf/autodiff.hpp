#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "scaf/tensor.hpp"

namespace scaf::ad {

// Reverse-mode tape. Nodes own their value; gradients are accumulated into
// `grad` during backward(). Parameters are long-lived Vars reused across
// forward passes; intermediate nodes die with the last Var reference.
struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backprop;

    Tensor& g() {
        if (grad.shape != value.shape) grad = Tensor(value.shape);
        return grad;
    }
};

Var constant(Tensor v);
Var parameter(Tensor v);

// Seeds d(root)/d(root) = seed (root must be scalar) and runs the tape in
// reverse topological order. Gradients accumulate, so zero them between
// optimizer steps via zero_grad on the parameters.
void backward(const Var& root, double seed = 1.0);
void zero_grad(const std::vector<Var>& params);

// elementwise, same shape
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var add_scalar(const Var& a, double c);
Var mul_scalar(const Var& a, double c);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var abs(const Var& a);

// scalar Var ({1}) times tensor Var
Var smul(const Var& s, const Var& a);

// broadcasting multiplies over a {C,H,W} map
Var bmul_map(const Var& x, const Var& m);  // m {1,H,W}
Var bmul_cols(const Var& x, const Var& a); // a {C,H,1}
Var bmul_rows(const Var& x, const Var& a); // a {C,1,W}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var instance_norm(const Var& x, const Var& gain, const Var& bias,
                  double eps = 1e-5);
Var linear(const Var& v, const Var& w, const Var& b); // w {out,in}

Var global_avg_pool(const Var& x);  // {C,H,W} -> {C}
Var pool_mean_w(const Var& x);      // -> {C,H,1}
Var pool_mean_h(const Var& x);      // -> {C,1,W}

Var concat_channels(const std::vector<Var>& xs);
Var slice_channels(const Var& x, int c0, int c1); // [c0,c1)

Var resize_bilinear(const Var& x, int out_h, int out_w);

// Spatial remap: out(c,i) = x(c, src[i]); src indexes H*W, one entry per
// output pixel. Covers flips, 90-degree rotations and nearest resampling.
struct IndexMap {
    int out_h = 0, out_w = 0;
    std::vector<int> src;
};
Var gather_hw(const Var& x, const IndexMap& map);

// depthwise correlation with a fixed (non-learned) kernel, replicate pad
Var filter2d_fixed(const Var& x, const Tensor& kernel);

// reductions
Var mean_all(const Var& x);
Var sum_all(const Var& x);
// sum(x*mask) / (sum(mask) + denom_eps); mask is constant
Var masked_mean(const Var& x, const Tensor& mask, double denom_eps);

// numerically stable masked binary cross-entropy on logits; target/mask are
// constants, mean over mask>0 pixels, 0 if none
Var bce_logits_masked(const Var& logits, const Tensor& target,
                      const Tensor& mask);

// binary Shannon entropy of probabilities, elementwise, natural log
Var entropy_map(const Var& p);

// sum over window offsets of w_k(i)*|p_i - p_j(i,k)| / pair_count.
// One weight map per offset; weights are constants.
struct PairwiseKernel {
    std::vector<std::pair<int, int>> offsets; // (dy,dx)
    std::vector<Tensor> weights;              // each {1,H,W}, 0 where invalid
    double pair_count = 0;
};
Var pairwise_affinity(const Var& p, const std::shared_ptr<PairwiseKernel>& k);

} // namespace scaf::ad

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "scaf/backbone.hpp"
#include "scaf/tensor.hpp"

namespace scaf {

// Bank entries are stored as float32 (the serialized precision) so that a
// freshly built discriminator and one loaded from disk score identically.
struct PatchBank {
    int dim = 0;
    std::vector<float> data;

    int size() const { return dim ? (int)(data.size() / dim) : 0; }
    const float* entry(int i) const { return data.data() + (size_t)i * dim; }
    void add(const double* v) {
        for (int i = 0; i < dim; ++i) data.push_back((float)v[i]);
    }
};

struct SemanticBank {
    int dim = 0;
    std::vector<float> data;

    int size() const { return dim ? (int)(data.size() / dim) : 0; }
    const float* entry(int i) const { return data.data() + (size_t)i * dim; }
};

struct PriorPair {
    Tensor mp; // {1,h,w} in [0,1]
    Tensor ap; // purified
};

// weighted 3x3 neighborhood fusion of a patch-vector grid, replicate pad;
// weights must sum to 1
Tensor fuse_neighborhood(const Tensor& patches, const Tensor& weights);

Tensor uniform_fusion_weights(); // 1/9 kernel

// stride-1 patch vectors from each map, neighborhood-fused, pooled over all
// images; seeded uniform subsampling down to capacity
PatchBank build_patch_bank(const std::vector<Tensor>& stage_maps,
                           const Tensor& weights, int capacity, uint64_t seed);

SemanticBank build_semantic_bank(
    const std::vector<std::vector<double>>& descriptors);

// q_sup = (1 - max_m cos(q, v_m)) * q; zero q passes through unchanged
std::vector<double> suppress(const std::vector<double>& q,
                             const SemanticBank& bank);

// nearest-neighbor Euclidean distance
double score(const std::vector<double>& q_sup, const PatchBank& bank);

// per-image min-max to [0,1]; constant maps collapse to zero
Tensor minmax_normalize(const Tensor& m);

// zero ap where the local-window cosine between mp and ap exceeds tau and
// mp itself is high
Tensor purify(const Tensor& mp, const Tensor& ap_raw, int window, double tau,
              double mp_gate);

struct MdConfig {
    int descriptor_dim = 256;
    int capacity = 10000;
    std::vector<int> bank_stages = {2, 3}; // 1-based pyramid stages
    double purify_tau = 0.7;
    double purify_mp_gate = 0.5;
    int purify_window = 7;
    uint64_t extractor_seed = 101;
    BackboneConfig backbone;
};

// Builds per-class banks from a frozen, seeded feature extractor and scores
// query images into MP / purified-AP prior maps at the resolution of the
// first bank stage. The extractor never trains; bank files are fully
// reproducible from the stored config.
class ManipulatedDiscriminator {
public:
    explicit ManipulatedDiscriminator(const MdConfig& cfg);

    void build(const std::vector<Tensor>& authentic_images,
               const std::vector<Tensor>& manipulated_images, uint64_t seed);
    bool built() const { return built_; }

    PriorPair prior_pair(const Tensor& image) const;
    // raw (unnormalized) score map against one class, for tests
    Tensor raw_score_map(const Tensor& image, bool against_authentic) const;

    void save(const std::string& path) const;
    static ManipulatedDiscriminator load(const std::string& path);

    const MdConfig& config() const { return cfg_; }

private:
    struct ClassBanks {
        std::vector<PatchBank> patch; // one per bank stage
        SemanticBank semantic;
    };

    std::vector<Tensor> query_grids(const Tensor& image,
                                    std::vector<double>* semantic) const;

    MdConfig cfg_;
    ParamStore extractor_params_;
    std::unique_ptr<Backbone> extractor_;
    std::vector<Conv2d> stage_proj_;
    ClassBanks authentic_, manipulated_;
    bool built_ = false;
};

} // namespace scaf

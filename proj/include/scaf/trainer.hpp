#pragma once

#include <functional>
#include <string>

#include "scaf/losses.hpp"
#include "scaf/model.hpp"

namespace scaf {

struct TrainConfig {
    int image_size = 512;
    int batch_size = 32;
    double lr_init = 1e-4;
    double lr_decay_factor = 0.1;
    int lr_decay_every = 50;
    int epochs = 70;
    uint64_t seed = 7;
    double weight_decay = 1e-2;
    int checkpoint_every = 25;
    CemConfig cem;
    int ca_window = 5;
    double ca_sigma_rgb = 0.1;
    double ca_sigma_xy = 3.0;
    bool sc_use_ssim = true;
    // optional early exit once the eval callback clears this bar
    double early_stop_train_f1 = 0.0;
    int eval_every = 0;
    std::string out_dir = "runs/default";

    void validate() const;
};

class AdamW {
public:
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double weight_decay = 1e-2;

    void init(const ParamStore& params);
    void step(ParamStore& params, double lr);
    int64_t steps_taken() const { return t_; }

    // checkpoint plumbing
    int64_t t_ = 0;
    std::vector<Tensor> m_, v_;
    std::vector<uint8_t> decay_; // weight decay skips biases/gains/scalars
};

struct CheckpointMeta {
    int epoch = -1;
    uint64_t config_hash = 0;
    uint64_t seed = 0;
};

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const AdamW* opt, const CheckpointMeta& meta);
CheckpointMeta load_checkpoint(const std::string& path, ParamStore& params,
                               AdamW* opt);

// one sample, ready to train on: resized, priors cached, affinity kernel built
struct PreppedSample {
    std::string id;
    Tensor image;
    TriStateMask scribble;
    PriorPair priors;
    std::shared_ptr<ad::PairwiseKernel> ca_kernel;
};

class Trainer {
public:
    Trainer(ScafModel& model, const ManipulatedDiscriminator& md,
            const TrainConfig& cfg);

    void prepare(const std::vector<Sample>& dataset);

    LossReport train_step(const std::vector<int>& batch, int epoch, int step);

    // full protocol: epoch loop, step decay, periodic + final checkpoints,
    // line-delimited loss log. Returns the final checkpoint path.
    std::string fit(const std::vector<Sample>& dataset,
                    const std::string& resume_path = "",
                    std::function<double(int)> eval_cb = nullptr);

    double lr_at(int epoch) const;
    const std::vector<PreppedSample>& prepped() const { return data_; }
    AdamW& optimizer() { return opt_; }
    uint64_t config_hash = 0; // stamped into checkpoints by the CLI

private:
    ScafModel& model_;
    const ManipulatedDiscriminator& md_;
    TrainConfig cfg_;
    AdamW opt_;
    std::vector<PreppedSample> data_;
};

std::string format_loss_line(const LossReport& r);

} // namespace scaf

#pragma once

#include <string>

#include "scaf/discriminator.hpp"
#include "scaf/model.hpp"
#include "scaf/trainer.hpp"

namespace scaf {

struct DataConfig {
    std::string root;
    std::string train_split = "train";
    std::string eval_split = "train";
    std::string authentic_split = "authentic";
    std::string manipulated_split = "train";
};

// Declarative run configuration. Every tunable constant in the pipeline is
// a named key; unknown keys are rejected on load.
struct RunConfig {
    uint64_t seed = 7;
    bool deterministic = false;
    int image_size = 512;
    DataConfig data;
    std::string backbone_kind = "conv"; // extension point for other extractors
    BackboneConfig backbone;
    MdConfig md;
    // modulation
    double alpha_init = 1.0, beta_init = 1.0, gamma_init = 0.0;
    double mod_epsilon = 1e-6;
    int ca_reduction = 8;
    FusionOptions fusion;
    // losses
    int ca_window = 5;
    double ca_sigma_rgb = 0.1, ca_sigma_xy = 3.0;
    bool sc_use_ssim = true;
    CemConfig cem;
    // training
    int batch_size = 32;
    double lr_init = 1e-4;
    double lr_decay_factor = 0.1;
    int lr_decay_every = 50;
    int epochs = 70;
    double weight_decay = 1e-2;
    int checkpoint_every = 25;
    double early_stop_train_f1 = 0.0;
    int eval_every = 0;
    std::string out_dir = "runs/default";
    std::string bank_path;

    ModelConfig model_config() const;
    MdConfig md_config() const; // backbone widths mirrored into the extractor
    TrainConfig train_config() const;

    std::string to_json() const;           // full dump, all keys
    static RunConfig from_json(const std::string& text);
    static RunConfig load_file(const std::string& path);
    void save_file(const std::string& path) const;
    uint64_t hash() const; // FNV-1a over the canonical dump
};

} // namespace scaf

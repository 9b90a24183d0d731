#include "scaf/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

using nlohmann::json;

namespace scaf {

namespace {

void expect_keys(const json& j, std::initializer_list<const char*> allowed,
                 const std::string& scope) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok)
            throw std::runtime_error("config: unknown key '" + scope +
                                     it.key() + "'");
    }
}

template <typename T>
void get_to(const json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

} // namespace

ModelConfig RunConfig::model_config() const {
    ModelConfig m;
    m.backbone = backbone;
    m.alpha_init = alpha_init;
    m.beta_init = beta_init;
    m.gamma_init = gamma_init;
    m.epsilon = mod_epsilon;
    m.ca_reduction = ca_reduction;
    m.fusion = fusion;
    return m;
}

MdConfig RunConfig::md_config() const {
    MdConfig m = md;
    m.backbone = backbone;
    m.backbone.semantic_dim = md.descriptor_dim;
    return m;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig t;
    t.image_size = image_size;
    t.batch_size = batch_size;
    t.lr_init = lr_init;
    t.lr_decay_factor = lr_decay_factor;
    t.lr_decay_every = lr_decay_every;
    t.epochs = epochs;
    t.seed = seed;
    t.weight_decay = weight_decay;
    t.checkpoint_every = checkpoint_every;
    t.cem = cem;
    t.ca_window = ca_window;
    t.ca_sigma_rgb = ca_sigma_rgb;
    t.ca_sigma_xy = ca_sigma_xy;
    t.sc_use_ssim = sc_use_ssim;
    t.early_stop_train_f1 = early_stop_train_f1;
    t.eval_every = eval_every;
    t.out_dir = out_dir;
    return t;
}

std::string RunConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["deterministic"] = deterministic;
    j["image_size"] = image_size;
    j["data"] = {{"root", data.root},
                 {"train_split", data.train_split},
                 {"eval_split", data.eval_split},
                 {"authentic_split", data.authentic_split},
                 {"manipulated_split", data.manipulated_split}};
    j["backbone"] = {{"kind", backbone_kind},
                     {"widths", backbone.widths},
                     {"norm_eps", backbone.norm_eps}};
    j["md"] = {{"descriptor_dim", md.descriptor_dim},
               {"capacity", md.capacity},
               {"bank_stages", md.bank_stages},
               {"purify_tau", md.purify_tau},
               {"purify_mp_gate", md.purify_mp_gate},
               {"purify_window", md.purify_window},
               {"extractor_seed", md.extractor_seed}};
    j["modulation"] = {{"alpha_init", alpha_init},
                       {"beta_init", beta_init},
                       {"gamma_init", gamma_init},
                       {"epsilon", mod_epsilon},
                       {"ca_reduction", ca_reduction}};
    j["fusion"] = {{"enhance_attention_weighted", fusion.enhance_attention_weighted},
                   {"diff_from_enhanced", fusion.diff_from_enhanced}};
    j["losses"] = {{"ca_window", ca_window},
                   {"ca_sigma_rgb", ca_sigma_rgb},
                   {"ca_sigma_xy", ca_sigma_xy},
                   {"sc_use_ssim", sc_use_ssim},
                   {"cem",
                    {{"w_max", cem.w_max},
                     {"w_weak", cem.w_weak},
                     {"entropy_threshold", cem.entropy_threshold},
                     {"ramp", cem.ramp},
                     {"eps", cem.eps}}}};
    j["train"] = {{"batch_size", batch_size},
                  {"lr_init", lr_init},
                  {"lr_decay_factor", lr_decay_factor},
                  {"lr_decay_every", lr_decay_every},
                  {"epochs", epochs},
                  {"weight_decay", weight_decay},
                  {"checkpoint_every", checkpoint_every},
                  {"early_stop_train_f1", early_stop_train_f1},
                  {"eval_every", eval_every},
                  {"out_dir", out_dir},
                  {"bank_path", bank_path}};
    return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    RunConfig c;
    expect_keys(j,
                {"seed", "deterministic", "image_size", "data", "backbone", "md",
                 "modulation", "fusion", "losses", "train"},
                "");
    get_to(j, "seed", c.seed);
    get_to(j, "deterministic", c.deterministic);
    get_to(j, "image_size", c.image_size);
    if (j.contains("data")) {
        const json& d = j["data"];
        expect_keys(d,
                    {"root", "train_split", "eval_split", "authentic_split",
                     "manipulated_split"},
                    "data.");
        get_to(d, "root", c.data.root);
        get_to(d, "train_split", c.data.train_split);
        get_to(d, "eval_split", c.data.eval_split);
        get_to(d, "authentic_split", c.data.authentic_split);
        get_to(d, "manipulated_split", c.data.manipulated_split);
    }
    if (j.contains("backbone")) {
        const json& b = j["backbone"];
        expect_keys(b, {"kind", "widths", "norm_eps"}, "backbone.");
        get_to(b, "kind", c.backbone_kind);
        if (c.backbone_kind != "conv")
            throw std::runtime_error("config: unsupported backbone.kind '" +
                                     c.backbone_kind + "' (supported: conv)");
        get_to(b, "widths", c.backbone.widths);
        get_to(b, "norm_eps", c.backbone.norm_eps);
    }
    if (j.contains("md")) {
        const json& m = j["md"];
        expect_keys(m,
                    {"descriptor_dim", "capacity", "bank_stages", "purify_tau",
                     "purify_mp_gate", "purify_window", "extractor_seed"},
                    "md.");
        get_to(m, "descriptor_dim", c.md.descriptor_dim);
        get_to(m, "capacity", c.md.capacity);
        get_to(m, "bank_stages", c.md.bank_stages);
        get_to(m, "purify_tau", c.md.purify_tau);
        get_to(m, "purify_mp_gate", c.md.purify_mp_gate);
        get_to(m, "purify_window", c.md.purify_window);
        get_to(m, "extractor_seed", c.md.extractor_seed);
    }
    if (j.contains("modulation")) {
        const json& m = j["modulation"];
        expect_keys(m,
                    {"alpha_init", "beta_init", "gamma_init", "epsilon",
                     "ca_reduction"},
                    "modulation.");
        get_to(m, "alpha_init", c.alpha_init);
        get_to(m, "beta_init", c.beta_init);
        get_to(m, "gamma_init", c.gamma_init);
        get_to(m, "epsilon", c.mod_epsilon);
        get_to(m, "ca_reduction", c.ca_reduction);
    }
    if (j.contains("fusion")) {
        const json& f = j["fusion"];
        expect_keys(f, {"enhance_attention_weighted", "diff_from_enhanced"},
                    "fusion.");
        get_to(f, "enhance_attention_weighted",
               c.fusion.enhance_attention_weighted);
        get_to(f, "diff_from_enhanced", c.fusion.diff_from_enhanced);
    }
    if (j.contains("losses")) {
        const json& l = j["losses"];
        expect_keys(l, {"ca_window", "ca_sigma_rgb", "ca_sigma_xy", "sc_use_ssim",
                        "cem"},
                    "losses.");
        get_to(l, "ca_window", c.ca_window);
        get_to(l, "ca_sigma_rgb", c.ca_sigma_rgb);
        get_to(l, "ca_sigma_xy", c.ca_sigma_xy);
        get_to(l, "sc_use_ssim", c.sc_use_ssim);
        if (l.contains("cem")) {
            const json& e = l["cem"];
            expect_keys(e, {"w_max", "w_weak", "entropy_threshold", "ramp", "eps"},
                        "losses.cem.");
            get_to(e, "w_max", c.cem.w_max);
            get_to(e, "w_weak", c.cem.w_weak);
            get_to(e, "entropy_threshold", c.cem.entropy_threshold);
            get_to(e, "ramp", c.cem.ramp);
            get_to(e, "eps", c.cem.eps);
        }
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        expect_keys(t,
                    {"batch_size", "lr_init", "lr_decay_factor", "lr_decay_every",
                     "epochs", "weight_decay", "checkpoint_every",
                     "early_stop_train_f1", "eval_every", "out_dir", "bank_path"},
                    "train.");
        get_to(t, "batch_size", c.batch_size);
        get_to(t, "lr_init", c.lr_init);
        get_to(t, "lr_decay_factor", c.lr_decay_factor);
        get_to(t, "lr_decay_every", c.lr_decay_every);
        get_to(t, "epochs", c.epochs);
        get_to(t, "weight_decay", c.weight_decay);
        get_to(t, "checkpoint_every", c.checkpoint_every);
        get_to(t, "early_stop_train_f1", c.early_stop_train_f1);
        get_to(t, "eval_every", c.eval_every);
        get_to(t, "out_dir", c.out_dir);
        get_to(t, "bank_path", c.bank_path);
    }
    return c;
}

RunConfig RunConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

void RunConfig::save_file(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config " + path);
    out << to_json() << "\n";
}

uint64_t RunConfig::hash() const {
    RunConfig canonical = *this;
    canonical.deterministic = false; // runtime mode, not config identity
    uint64_t h = 1469598103934665603ULL;
    for (char ch : canonical.to_json()) {
        h ^= (uint8_t)ch;
        h *= 1099511628211ULL;
    }
    return h;
}

} // namespace scaf

#include "scaf/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <stdexcept>

namespace fs = std::filesystem;

namespace scaf {

void TrainConfig::validate() const {
    if (image_size % 32 != 0)
        throw std::runtime_error("train: image_size must be divisible by 32");
    if (epochs < 1) throw std::runtime_error("train: epochs must be >= 1");
    if (batch_size < 1) throw std::runtime_error("train: batch_size must be >= 1");
    if (lr_decay_every < 1)
        throw std::runtime_error("train: lr_decay_every must be >= 1");
    cem.validate();
}

void AdamW::init(const ParamStore& params) {
    t_ = 0;
    m_.clear();
    v_.clear();
    decay_.clear();
    for (const auto& [name, var] : params.items) {
        m_.push_back(Tensor(var->value.shape));
        v_.push_back(Tensor(var->value.shape));
        bool skip = name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0;
        skip = skip || name.find(".bias") != std::string::npos;
        skip = skip || name.find(".gain") != std::string::npos;
        skip = skip || name.rfind("mod.", 0) == 0;
        decay_.push_back(skip ? 0 : 1);
    }
}

void AdamW::step(ParamStore& params, double lr) {
    if (m_.size() != params.items.size())
        throw std::runtime_error("adamw: not initialized for this model");
    ++t_;
    double bc1 = 1.0 - std::pow(beta1, (double)t_);
    double bc2 = 1.0 - std::pow(beta2, (double)t_);
    for (size_t i = 0; i < params.items.size(); ++i) {
        ad::Var& p = params.items[i].second;
        if (p->grad.shape != p->value.shape) continue; // no gradient this step
        double wd = decay_[i] ? weight_decay : 0.0;
        for (int64_t k = 0; k < p->value.numel(); ++k) {
            double g = p->grad[k];
            m_[i][k] = beta1 * m_[i][k] + (1.0 - beta1) * g;
            v_[i][k] = beta2 * v_[i][k] + (1.0 - beta2) * g * g;
            double mhat = m_[i][k] / bc1;
            double vhat = v_[i][k] / bc2;
            p->value[k] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * p->value[k]);
        }
    }
}

namespace {

constexpr char kCkptMagic[8] = {'S', 'C', 'A', 'F', 'C', 'K', 'P', 'T'};
constexpr uint32_t kCkptVersion = 1;

void wr(FILE* f, const void* p, size_t n) {
    if (std::fwrite(p, 1, n, f) != n)
        throw std::runtime_error("checkpoint: short write");
}
void rd(FILE* f, void* p, size_t n) {
    if (std::fread(p, 1, n, f) != n)
        throw std::runtime_error("checkpoint: truncated");
}
void wr_str(FILE* f, const std::string& s) {
    uint32_t n = (uint32_t)s.size();
    wr(f, &n, 4);
    wr(f, s.data(), n);
}
std::string rd_str(FILE* f) {
    uint32_t n = 0;
    rd(f, &n, 4);
    std::string s(n, '\0');
    rd(f, s.data(), n);
    return s;
}
void wr_tensor(FILE* f, const Tensor& t) {
    uint32_t nd = (uint32_t)t.shape.size();
    wr(f, &nd, 4);
    for (int d : t.shape) {
        uint32_t u = (uint32_t)d;
        wr(f, &u, 4);
    }
    wr(f, t.data.data(), t.data.size() * 8);
}
Tensor rd_tensor(FILE* f) {
    uint32_t nd = 0;
    rd(f, &nd, 4);
    std::vector<int> shape(nd);
    for (auto& d : shape) {
        uint32_t u = 0;
        rd(f, &u, 4);
        d = (int)u;
    }
    Tensor t(shape);
    rd(f, t.data.data(), t.data.size() * 8);
    return t;
}

} // namespace

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const AdamW* opt, const CheckpointMeta& meta) {
    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot write checkpoint " + path);
    wr(f, kCkptMagic, 8);
    uint32_t version = kCkptVersion;
    wr(f, &version, 4);
    int32_t epoch = meta.epoch;
    wr(f, &epoch, 4);
    wr(f, &meta.config_hash, 8);
    wr(f, &meta.seed, 8);
    uint32_t n = (uint32_t)params.items.size();
    wr(f, &n, 4);
    for (const auto& [name, var] : params.items) {
        wr_str(f, name);
        wr_tensor(f, var->value);
    }
    uint8_t has_opt = opt && !opt->m_.empty() ? 1 : 0;
    wr(f, &has_opt, 1);
    if (has_opt) {
        int64_t t = opt->t_;
        wr(f, &t, 8);
        for (size_t i = 0; i < params.items.size(); ++i) {
            wr_tensor(f, opt->m_[i]);
            wr_tensor(f, opt->v_[i]);
        }
    }
    std::fclose(f);
}

CheckpointMeta load_checkpoint(const std::string& path, ParamStore& params,
                               AdamW* opt) {
    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("cannot open checkpoint " + path);
    try {
        char magic[8];
        rd(f, magic, 8);
        if (std::memcmp(magic, kCkptMagic, 8))
            throw std::runtime_error("not a checkpoint file: " + path);
        uint32_t version = 0;
        rd(f, &version, 4);
        if (version != kCkptVersion)
            throw std::runtime_error("unsupported checkpoint version");
        CheckpointMeta meta;
        int32_t epoch = 0;
        rd(f, &epoch, 4);
        meta.epoch = epoch;
        rd(f, &meta.config_hash, 8);
        rd(f, &meta.seed, 8);
        uint32_t n = 0;
        rd(f, &n, 4);
        if (n != params.items.size())
            throw std::runtime_error("checkpoint: parameter count mismatch");
        for (uint32_t i = 0; i < n; ++i) {
            std::string name = rd_str(f);
            Tensor t = rd_tensor(f);
            if (params.items[i].first != name)
                throw std::runtime_error("checkpoint: parameter order mismatch at " +
                                         name);
            if (t.shape != params.items[i].second->value.shape)
                throw std::runtime_error("checkpoint: shape mismatch for " + name);
            params.items[i].second->value = std::move(t);
        }
        uint8_t has_opt = 0;
        rd(f, &has_opt, 1);
        if (has_opt && opt) {
            opt->init(params);
            rd(f, &opt->t_, 8);
            for (uint32_t i = 0; i < n; ++i) {
                opt->m_[i] = rd_tensor(f);
                opt->v_[i] = rd_tensor(f);
            }
        }
        std::fclose(f);
        return meta;
    } catch (...) {
        std::fclose(f);
        throw;
    }
}

Trainer::Trainer(ScafModel& model, const ManipulatedDiscriminator& md,
                 const TrainConfig& cfg)
    : model_(model), md_(md), cfg_(cfg) {
    cfg_.validate();
    opt_.weight_decay = cfg_.weight_decay;
    opt_.init(model_.params());
}

namespace {

TriStateMask resize_scribble(const TriStateMask& m, int h, int w) {
    if (m.height == h && m.width == w) return m;
    TriStateMask out = TriStateMask::unlabeled(h, w);
    for (int y = 0; y < h; ++y) {
        int sy = std::min((int)((y + 0.5) * m.height / h), m.height - 1);
        for (int x = 0; x < w; ++x) {
            int sx = std::min((int)((x + 0.5) * m.width / w), m.width - 1);
            out.labels[(size_t)y * w + x] = m.labels[(size_t)sy * m.width + sx];
        }
    }
    return out;
}

PriorPair transport_priors(const PriorPair& p, const AugmentationSpec& spec) {
    // geometric transport only; the model resizes priors per stage anyway,
    // so scaling needs no work here
    if (spec.kind == AugmentationSpec::Kind::kScaling) return p;
    PriorPair out;
    out.mp = apply_transform_map(p.mp, spec);
    out.ap = apply_transform_map(p.ap, spec);
    return out;
}

void check_finite(double v, const char* term) {
    if (!std::isfinite(v))
        throw std::runtime_error(std::string("non-finite loss term: ") + term);
}

} // namespace

void Trainer::prepare(const std::vector<Sample>& dataset) {
    if (dataset.empty()) throw std::runtime_error("train: dataset is empty");
    if (!md_.built()) throw std::runtime_error("train: memory banks not built");
    data_.clear();
    data_.reserve(dataset.size());
    for (const auto& s : dataset) {
        PreppedSample p;
        p.id = s.id;
        p.image = (s.image.height() == cfg_.image_size &&
                   s.image.width() == cfg_.image_size)
                      ? s.image
                      : resize_bilinear(s.image, cfg_.image_size, cfg_.image_size);
        p.scribble = resize_scribble(s.scribble, cfg_.image_size, cfg_.image_size);
        p.priors = md_.prior_pair(p.image);
        p.ca_kernel = make_ca_kernel(p.image, cfg_.ca_window, cfg_.ca_sigma_rgb,
                                     cfg_.ca_sigma_xy);
        data_.push_back(std::move(p));
    }
}

double Trainer::lr_at(int epoch) const {
    return cfg_.lr_init *
           std::pow(cfg_.lr_decay_factor, epoch / cfg_.lr_decay_every);
}

LossReport Trainer::train_step(const std::vector<int>& batch, int epoch,
                               int step) {
    if (batch.empty()) throw std::runtime_error("train_step: empty batch");
    using namespace ad;
    zero_grad(model_.params().vars());

    LossReport rep;
    rep.epoch = epoch;
    rep.step = step;
    const double inv_b = 1.0 / (double)batch.size();

    for (size_t bi = 0; bi < batch.size(); ++bi) {
        const PreppedSample& s = data_[batch[bi]];
        Rng rng(Rng::mix(cfg_.seed,
                         ((uint64_t)epoch << 40) ^ ((uint64_t)step << 16) ^ bi));
        AugmentationSpec spec = sample_augmentation(rng);

        PredictionBundle orig = model_.forward(s.image, s.priors);
        Tensor aug_image = apply_transform_image(s.image, spec);
        PriorPair aug_priors = transport_priors(s.priors, spec);
        PredictionBundle aug = model_.forward(aug_image, aug_priors);

        Var p1 = sigmoid(orig.m1);
        Var p2 = sigmoid(orig.m2);
        Var p3 = sigmoid(orig.m3);
        Var p1_aug = sigmoid(aug.m1);

        Var pce = add(pce_loss(orig.m1, s.scribble),
                      add(pce_loss(orig.m2, s.scribble),
                          pce_loss(orig.m3, s.scribble)));
        Var ca = add(ca_loss(p1, s.ca_kernel),
                     add(ca_loss(p2, s.ca_kernel), ca_loss(p3, s.ca_kernel)));
        Var sc = sc_loss(p1, p1_aug, spec, cfg_.sc_use_ssim);
        CemTerms cem = cem_loss(p1, s.scribble, cfg_.cem, epoch);

        Var cem_sum = add(cem.un, cem.la);
        Var total = add(add(pce, ca), add(sc, mul_scalar(cem_sum, cem.lambda)));

        check_finite(pce->value[0], "pce");
        check_finite(ca->value[0], "ca");
        check_finite(sc->value[0], "sc");
        check_finite(cem.un->value[0], "cem_un");
        check_finite(cem.la->value[0], "cem_la");

        backward(total, inv_b);

        rep.pce += pce->value[0] * inv_b;
        rep.ca += ca->value[0] * inv_b;
        rep.sc += sc->value[0] * inv_b;
        rep.cem_un += cem.un->value[0] * inv_b;
        rep.cem_la += cem.la->value[0] * inv_b;
        rep.lambda_t = cem.lambda;
        rep.total += total->value[0] * inv_b;
    }

    rep.lr = lr_at(epoch);
    opt_.step(model_.params(), rep.lr);
    model_.modulation().clamp_nonnegative();
    return rep;
}

std::string format_loss_line(const LossReport& r) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "{\"epoch\":%d,\"step\":%d,\"pce\":%.12g,\"ca\":%.12g,"
                  "\"sc\":%.12g,\"cem_un\":%.12g,\"cem_la\":%.12g,"
                  "\"lambda\":%.12g,\"lr\":%.12g,\"total\":%.12g}",
                  r.epoch, r.step, r.pce, r.ca, r.sc, r.cem_un, r.cem_la,
                  r.lambda_t, r.lr, r.total);
    return buf;
}

std::string Trainer::fit(const std::vector<Sample>& dataset,
                         const std::string& resume_path,
                         std::function<double(int)> eval_cb) {
    prepare(dataset);
    fs::create_directories(cfg_.out_dir);

    int start_epoch = 0;
    if (!resume_path.empty()) {
        CheckpointMeta meta = load_checkpoint(resume_path, model_.params(), &opt_);
        start_epoch = meta.epoch + 1;
    }

    const std::string log_path = cfg_.out_dir + "/train_log.jsonl";
    FILE* log = std::fopen(log_path.c_str(), start_epoch ? "ab" : "wb");
    if (!log) throw std::runtime_error("cannot open training log " + log_path);

    const int n = (int)data_.size();
    std::string final_path = cfg_.out_dir + "/checkpoint.bin";
    for (int epoch = start_epoch; epoch < cfg_.epochs; ++epoch) {
        // seeded per-epoch shuffle
        std::vector<int> order(n);
        for (int i = 0; i < n; ++i) order[i] = i;
        Rng rng(Rng::mix(cfg_.seed, 0xe90c + (uint64_t)epoch));
        for (int i = n - 1; i > 0; --i)
            std::swap(order[i], order[(int)rng.uniform_int(i + 1)]);

        int step = 0;
        for (int off = 0; off < n; off += cfg_.batch_size, ++step) {
            std::vector<int> batch(order.begin() + off,
                                   order.begin() +
                                       std::min(n, off + cfg_.batch_size));
            LossReport rep = train_step(batch, epoch, step);
            std::string line = format_loss_line(rep);
            std::fwrite(line.data(), 1, line.size(), log);
            std::fputc('\n', log);
        }
        std::fflush(log);

        if (cfg_.checkpoint_every > 0 && (epoch + 1) % cfg_.checkpoint_every == 0 &&
            epoch + 1 < cfg_.epochs) {
            CheckpointMeta meta{epoch, config_hash, cfg_.seed};
            save_checkpoint(cfg_.out_dir + "/ckpt_epoch" + std::to_string(epoch) +
                                ".bin",
                            model_.params(), &opt_, meta);
        }
        if (eval_cb && cfg_.eval_every > 0 && (epoch + 1) % cfg_.eval_every == 0) {
            double f1 = eval_cb(epoch);
            if (cfg_.early_stop_train_f1 > 0 && f1 >= cfg_.early_stop_train_f1) {
                CheckpointMeta meta{epoch, config_hash, cfg_.seed};
                save_checkpoint(final_path, model_.params(), &opt_, meta);
                std::fclose(log);
                return final_path;
            }
        }
    }
    CheckpointMeta meta{cfg_.epochs - 1, config_hash, cfg_.seed};
    save_checkpoint(final_path, model_.params(), &opt_, meta);
    std::fclose(log);
    return final_path;
}

} // namespace scaf

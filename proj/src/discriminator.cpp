#include "scaf/discriminator.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>

namespace scaf {

Tensor uniform_fusion_weights() {
    Tensor w({3, 3});
    w.fill(1.0 / 9.0);
    return w;
}

Tensor fuse_neighborhood(const Tensor& patches, const Tensor& weights) {
    if (weights.ndim() != 2 || weights.dim(0) != 3 || weights.dim(1) != 3)
        throw std::runtime_error("fuse_neighborhood: weights must be 3x3");
    if (std::fabs(weights.sum() - 1.0) > 1e-6)
        throw std::runtime_error("fuse_neighborhood: weights must sum to 1");
    const int c = patches.channels(), h = patches.height(), w = patches.width();
    Tensor out({c, h, w});
    auto clampi = [](int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int ky = 0; ky < 3; ++ky)
                    for (int kx = 0; kx < 3; ++kx)
                        acc += weights.at2(ky, kx) *
                               patches.at(ch, clampi(y + ky - 1, h - 1),
                                          clampi(x + kx - 1, w - 1));
                out.at(ch, y, x) = acc;
            }
    return out;
}

PatchBank build_patch_bank(const std::vector<Tensor>& stage_maps,
                           const Tensor& weights, int capacity, uint64_t seed) {
    if (stage_maps.empty())
        throw std::runtime_error("build_patch_bank: no input images");
    const int dim = stage_maps[0].channels();
    PatchBank bank;
    bank.dim = dim;
    std::vector<double> col(dim);
    for (const auto& m : stage_maps) {
        if (m.channels() != dim)
            throw std::runtime_error("build_patch_bank: channel mismatch");
        Tensor fused = fuse_neighborhood(m, weights);
        for (int y = 0; y < fused.height(); ++y)
            for (int x = 0; x < fused.width(); ++x) {
                for (int ch = 0; ch < dim; ++ch) col[ch] = fused.at(ch, y, x);
                bank.add(col.data());
            }
    }
    int total = bank.size();
    if (capacity > 0 && total > capacity) {
        // seeded partial Fisher-Yates over entry indices
        std::vector<int> idx(total);
        for (int i = 0; i < total; ++i) idx[i] = i;
        Rng rng(Rng::mix(seed, 0xc0e5e7));
        for (int i = 0; i < capacity; ++i) {
            int j = i + (int)rng.uniform_int(total - i);
            std::swap(idx[i], idx[j]);
        }
        idx.resize(capacity);
        std::sort(idx.begin(), idx.end());
        PatchBank sub;
        sub.dim = dim;
        sub.data.reserve((size_t)capacity * dim);
        for (int i : idx)
            sub.data.insert(sub.data.end(), bank.entry(i), bank.entry(i) + dim);
        return sub;
    }
    return bank;
}

SemanticBank build_semantic_bank(
    const std::vector<std::vector<double>>& descriptors) {
    SemanticBank bank;
    if (descriptors.empty()) return bank;
    bank.dim = (int)descriptors[0].size();
    for (size_t m = 0; m < descriptors.size(); ++m) {
        const auto& v = descriptors[m];
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-12)
            throw std::runtime_error("build_semantic_bank: zero-norm descriptor "
                                     "at index " + std::to_string(m));
        for (double x : v) bank.data.push_back((float)(x / norm));
    }
    return bank;
}

std::vector<double> suppress(const std::vector<double>& q,
                             const SemanticBank& bank) {
    if (bank.size() == 0) throw std::runtime_error("suppress: empty bank");
    double qn = 0.0;
    for (double v : q) qn += v * v;
    qn = std::sqrt(qn);
    if (qn < 1e-12) return q; // cosine undefined, no evidence to suppress
    double max_cos = -2.0;
    for (int m = 0; m < bank.size(); ++m) {
        const float* e = bank.entry(m);
        double dot = 0.0, en = 0.0;
        for (size_t i = 0; i < q.size(); ++i) {
            dot += q[i] * e[i];
            en += (double)e[i] * e[i];
        }
        double c = dot / (qn * std::sqrt(en));
        max_cos = std::max(max_cos, c);
    }
    std::vector<double> out(q.size());
    double f = 1.0 - max_cos;
    for (size_t i = 0; i < q.size(); ++i) out[i] = f * q[i];
    return out;
}

double score(const std::vector<double>& q_sup, const PatchBank& bank) {
    if (bank.size() == 0) throw std::runtime_error("score: empty bank");
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < bank.size(); ++i) {
        const float* e = bank.entry(i);
        double d = 0.0;
        for (size_t k = 0; k < q_sup.size(); ++k) {
            double diff = q_sup[k] - e[k];
            d += diff * diff;
        }
        best = std::min(best, d);
    }
    return std::sqrt(best);
}

Tensor minmax_normalize(const Tensor& m) {
    double lo = m.min(), hi = m.max();
    Tensor out = m;
    if (hi - lo < 1e-12) {
        out.fill(0.0);
        return out;
    }
    for (auto& v : out.data) v = (v - lo) / (hi - lo);
    return out;
}

Tensor purify(const Tensor& mp, const Tensor& ap_raw, int window, double tau,
              double mp_gate) {
    if (!mp.same_shape(ap_raw))
        throw std::runtime_error("purify: shape mismatch");
    const int h = mp.height(), w = mp.width(), r = window / 2;
    Tensor out = ap_raw;
    auto clampi = [](int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (mp.at(0, y, x) <= mp_gate) continue;
            double dot = 0.0, na = 0.0, nb = 0.0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    double a = mp.at(0, clampi(y + dy, h - 1), clampi(x + dx, w - 1));
                    double b = ap_raw.at(0, clampi(y + dy, h - 1), clampi(x + dx, w - 1));
                    dot += a * b;
                    na += a * a;
                    nb += b * b;
                }
            double denom = std::sqrt(na) * std::sqrt(nb);
            double cos = denom > 1e-12 ? dot / denom : 0.0;
            if (cos > tau) out.at(0, y, x) = 0.0;
        }
    return out;
}

ManipulatedDiscriminator::ManipulatedDiscriminator(const MdConfig& cfg)
    : cfg_(cfg) {
    extractor_params_.trainable = false;
    Rng rng(Rng::mix(cfg_.extractor_seed, 0xd15c));
    BackboneConfig bc = cfg_.backbone;
    bc.semantic_dim = cfg_.descriptor_dim;
    extractor_ = std::make_unique<Backbone>(extractor_params_, bc, rng, "md");
    for (size_t i = 0; i < cfg_.bank_stages.size(); ++i) {
        int stage = cfg_.bank_stages[i];
        if (stage < 1 || stage > 4)
            throw std::runtime_error("md: bank stage out of range");
        stage_proj_.push_back(Conv2d::create(
            extractor_params_, "md.proj" + std::to_string(stage),
            bc.widths[stage - 1], cfg_.descriptor_dim, 1, 1, 0, rng));
    }
}

std::vector<Tensor> ManipulatedDiscriminator::query_grids(
    const Tensor& image, std::vector<double>* semantic) const {
    FeaturePyramid pyr = extractor_->extract(image);
    std::vector<Tensor> grids;
    for (size_t i = 0; i < cfg_.bank_stages.size(); ++i) {
        int stage = cfg_.bank_stages[i];
        ad::Var proj = stage_proj_[i](pyr.stages[stage - 1]);
        grids.push_back(fuse_neighborhood(proj->value, uniform_fusion_weights()));
    }
    if (semantic) {
        ad::Var v = extractor_->reduce_semantic(pyr.stages[3]);
        semantic->assign(v->value.data.begin(), v->value.data.end());
    }
    return grids;
}

void ManipulatedDiscriminator::build(
    const std::vector<Tensor>& authentic_images,
    const std::vector<Tensor>& manipulated_images, uint64_t seed) {
    auto build_class = [&](const std::vector<Tensor>& images, ClassBanks& out,
                           uint64_t salt) {
        if (images.empty())
            throw std::runtime_error("md build: class has no images");
        std::vector<std::vector<Tensor>> per_stage(cfg_.bank_stages.size());
        std::vector<std::vector<double>> descriptors;
        for (const auto& img : images) {
            std::vector<double> sem;
            std::vector<Tensor> grids = query_grids(img, &sem);
            for (size_t s = 0; s < grids.size(); ++s)
                per_stage[s].push_back(std::move(grids[s]));
            descriptors.push_back(std::move(sem));
        }
        out.semantic = build_semantic_bank(descriptors);
        // store entries in the same suppressed embedding queries use, so a
        // bank member scores zero against its own class
        std::vector<double> q(cfg_.descriptor_dim);
        for (auto& stage_grids : per_stage)
            for (Tensor& g : stage_grids)
                for (int y = 0; y < g.height(); ++y)
                    for (int x = 0; x < g.width(); ++x) {
                        for (int c = 0; c < cfg_.descriptor_dim; ++c)
                            q[c] = g.at(c, y, x);
                        std::vector<double> qs = suppress(q, out.semantic);
                        for (int c = 0; c < cfg_.descriptor_dim; ++c)
                            g.at(c, y, x) = qs[c];
                    }
        out.patch.clear();
        Tensor identity({3, 3});
        identity.at2(1, 1) = 1.0; // grids are pre-fused and pre-suppressed
        for (size_t s = 0; s < per_stage.size(); ++s)
            out.patch.push_back(build_patch_bank(per_stage[s], identity,
                                                 cfg_.capacity,
                                                 Rng::mix(seed, salt + s)));
    };
    build_class(authentic_images, authentic_, 0x10);
    build_class(manipulated_images, manipulated_, 0x20);
    built_ = true;
}

Tensor ManipulatedDiscriminator::raw_score_map(const Tensor& image,
                                               bool against_authentic) const {
    if (!built_) throw std::runtime_error("md: banks not built");
    const ClassBanks& banks = against_authentic ? authentic_ : manipulated_;
    std::vector<Tensor> grids = query_grids(image, nullptr);
    int out_h = grids[0].height(), out_w = grids[0].width();
    Tensor acc({1, out_h, out_w});
    std::vector<double> q(cfg_.descriptor_dim);
    for (size_t s = 0; s < grids.size(); ++s) {
        const Tensor& g = grids[s];
        Tensor map({1, g.height(), g.width()});
        for (int y = 0; y < g.height(); ++y)
            for (int x = 0; x < g.width(); ++x) {
                for (int ch = 0; ch < cfg_.descriptor_dim; ++ch)
                    q[ch] = g.at(ch, y, x);
                std::vector<double> qs = suppress(q, banks.semantic);
                map.at(0, y, x) = score(qs, banks.patch[s]);
            }
        if (map.height() != out_h || map.width() != out_w)
            map = resize_bilinear(map, out_h, out_w);
        for (int64_t i = 0; i < acc.numel(); ++i) acc[i] += map[i];
    }
    for (auto& v : acc.data) v /= (double)grids.size();
    return acc;
}

PriorPair ManipulatedDiscriminator::prior_pair(const Tensor& image) const {
    Tensor mp = minmax_normalize(raw_score_map(image, true));
    Tensor ap_raw = minmax_normalize(raw_score_map(image, false));
    PriorPair p;
    p.ap = purify(mp, ap_raw, cfg_.purify_window, cfg_.purify_tau,
                  cfg_.purify_mp_gate);
    p.mp = std::move(mp);
    return p;
}

namespace {

constexpr char kBankMagic[8] = {'S', 'C', 'A', 'F', 'B', 'A', 'N', 'K'};
constexpr uint32_t kBankVersion = 1;

void write_u32(FILE* f, uint32_t v) { std::fwrite(&v, 4, 1, f); }
void write_u64(FILE* f, uint64_t v) { std::fwrite(&v, 8, 1, f); }
void write_f64(FILE* f, double v) { std::fwrite(&v, 8, 1, f); }
uint32_t read_u32(FILE* f) {
    uint32_t v = 0;
    if (std::fread(&v, 4, 1, f) != 1) throw std::runtime_error("bank: truncated");
    return v;
}
uint64_t read_u64(FILE* f) {
    uint64_t v = 0;
    if (std::fread(&v, 8, 1, f) != 1) throw std::runtime_error("bank: truncated");
    return v;
}
double read_f64(FILE* f) {
    double v = 0;
    if (std::fread(&v, 8, 1, f) != 1) throw std::runtime_error("bank: truncated");
    return v;
}

void write_section(FILE* f, const std::string& name, uint32_t rows,
                   uint32_t dim, const float* data) {
    write_u32(f, (uint32_t)name.size());
    std::fwrite(name.data(), 1, name.size(), f);
    write_u32(f, rows);
    write_u32(f, dim);
    std::fwrite(data, 4, (size_t)rows * dim, f);
}

struct Section {
    std::string name;
    uint32_t rows = 0, dim = 0;
    std::vector<float> data;
};

Section read_section(FILE* f) {
    Section s;
    uint32_t nl = read_u32(f);
    s.name.resize(nl);
    if (std::fread(s.name.data(), 1, nl, f) != nl)
        throw std::runtime_error("bank: truncated");
    s.rows = read_u32(f);
    s.dim = read_u32(f);
    s.data.resize((size_t)s.rows * s.dim);
    if (!s.data.empty() &&
        std::fread(s.data.data(), 4, s.data.size(), f) != s.data.size())
        throw std::runtime_error("bank: truncated");
    return s;
}

} // namespace

void ManipulatedDiscriminator::save(const std::string& path) const {
    if (!built_) throw std::runtime_error("md save: banks not built");
    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot write bank file " + path);
    std::fwrite(kBankMagic, 1, 8, f);
    write_u32(f, kBankVersion);
    write_u32(f, (uint32_t)cfg_.descriptor_dim);
    write_u32(f, (uint32_t)cfg_.capacity);
    write_u32(f, (uint32_t)cfg_.purify_window);
    write_f64(f, cfg_.purify_tau);
    write_f64(f, cfg_.purify_mp_gate);
    write_u64(f, cfg_.extractor_seed);
    write_u32(f, (uint32_t)cfg_.bank_stages.size());
    for (int s : cfg_.bank_stages) write_u32(f, (uint32_t)s);
    write_u32(f, (uint32_t)cfg_.backbone.widths.size());
    for (int w : cfg_.backbone.widths) write_u32(f, (uint32_t)w);
    write_f64(f, cfg_.backbone.norm_eps);

    uint32_t n_sections = 2 * (1 + (uint32_t)cfg_.bank_stages.size());
    write_u32(f, n_sections);
    auto dump_class = [&](const ClassBanks& b, const std::string& prefix) {
        write_section(f, prefix + ".semantic", b.semantic.size(),
                      b.semantic.dim, b.semantic.data.data());
        for (size_t s = 0; s < b.patch.size(); ++s)
            write_section(f, prefix + ".patch" + std::to_string(s),
                          b.patch[s].size(), b.patch[s].dim,
                          b.patch[s].data.data());
    };
    dump_class(authentic_, "authentic");
    dump_class(manipulated_, "manipulated");
    std::fclose(f);
}

ManipulatedDiscriminator ManipulatedDiscriminator::load(const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("cannot open bank file " + path);
    char magic[8];
    if (std::fread(magic, 1, 8, f) != 8 || std::memcmp(magic, kBankMagic, 8)) {
        std::fclose(f);
        throw std::runtime_error("not a bank file: " + path);
    }
    try {
        uint32_t version = read_u32(f);
        if (version != kBankVersion)
            throw std::runtime_error("unsupported bank version " +
                                     std::to_string(version));
        MdConfig cfg;
        cfg.descriptor_dim = (int)read_u32(f);
        cfg.capacity = (int)read_u32(f);
        cfg.purify_window = (int)read_u32(f);
        cfg.purify_tau = read_f64(f);
        cfg.purify_mp_gate = read_f64(f);
        cfg.extractor_seed = read_u64(f);
        cfg.bank_stages.resize(read_u32(f));
        for (auto& s : cfg.bank_stages) s = (int)read_u32(f);
        cfg.backbone.widths.resize(read_u32(f));
        for (auto& w : cfg.backbone.widths) w = (int)read_u32(f);
        cfg.backbone.norm_eps = read_f64(f);

        ManipulatedDiscriminator md(cfg);
        uint32_t n_sections = read_u32(f);
        for (uint32_t i = 0; i < n_sections; ++i) {
            Section s = read_section(f);
            ClassBanks& cls = s.name.rfind("authentic", 0) == 0 ? md.authentic_
                                                                : md.manipulated_;
            if (s.name.find(".semantic") != std::string::npos) {
                cls.semantic.dim = (int)s.dim;
                cls.semantic.data = std::move(s.data);
            } else {
                size_t pos = s.name.find(".patch");
                size_t idx = std::stoul(s.name.substr(pos + 6));
                if (cls.patch.size() <= idx) cls.patch.resize(idx + 1);
                cls.patch[idx].dim = (int)s.dim;
                cls.patch[idx].data = std::move(s.data);
            }
        }
        md.built_ = true;
        std::fclose(f);
        return md;
    } catch (...) {
        std::fclose(f);
        throw;
    }
}

} // namespace scaf

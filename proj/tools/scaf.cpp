#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "scaf/config.hpp"
#include "scaf/dataio.hpp"
#include "scaf/metrics.hpp"

namespace fs = std::filesystem;
using namespace scaf;

namespace {

void ensure_outdir(const std::string& dir, bool force) {
    fs::path p(dir);
    if (fs::exists(p) && !fs::is_empty(p) && !force)
        throw std::runtime_error("output directory " + dir +
                                 " is not empty (use --force to overwrite)");
    fs::create_directories(p);
}

std::vector<Tensor> split_images(const std::string& root,
                                 const std::string& split, int image_size) {
    std::vector<Tensor> out;
    for (const auto& s : load_dataset(root, split)) {
        Tensor img = s.image;
        if (img.height() != image_size || img.width() != image_size)
            img = resize_bilinear(img, image_size, image_size);
        out.push_back(std::move(img));
    }
    return out;
}

ManipulatedDiscriminator obtain_banks(const RunConfig& cfg, bool rebuild) {
    if (cfg.bank_path.empty())
        throw std::runtime_error("config: train.bank_path is not set");
    if (!rebuild && fs::exists(cfg.bank_path))
        return ManipulatedDiscriminator::load(cfg.bank_path);
    ManipulatedDiscriminator md(cfg.md_config());
    std::printf("building memory banks from '%s' (authentic) and '%s' "
                "(manipulated)\n",
                cfg.data.authentic_split.c_str(),
                cfg.data.manipulated_split.c_str());
    md.build(split_images(cfg.data.root, cfg.data.authentic_split, cfg.image_size),
             split_images(cfg.data.root, cfg.data.manipulated_split,
                          cfg.image_size),
             cfg.seed);
    fs::path p(cfg.bank_path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    md.save(cfg.bank_path);
    // reload so scoring uses exactly the serialized (float32) precision
    return ManipulatedDiscriminator::load(cfg.bank_path);
}

ImageU8 gray_from_map(const Tensor& m) {
    ImageU8 img;
    img.width = m.width();
    img.height = m.height();
    img.channels = 1;
    img.pixels.resize((size_t)img.width * img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            img.at(y, x) =
                (uint8_t)std::lround(std::clamp(m.at(0, y, x), 0.0, 1.0) * 255.0);
    return img;
}

int cmd_fixture(const std::string& out, int n, int n_auth, int size,
                double coverage, uint64_t seed, bool force) {
    ensure_outdir(out, force);
    FixtureConfig fc;
    fc.n_samples = n;
    fc.n_authentic = n_auth;
    fc.image_size = size;
    fc.coverage = coverage;
    fc.seed = seed;
    generate_fixture(out, fc);

    RunConfig cfg;
    cfg.seed = seed;
    cfg.image_size = size;
    cfg.data.root = out;
    cfg.backbone.widths = {8, 16, 32, 64};
    cfg.md.descriptor_dim = 64;
    cfg.md.extractor_seed = 101;
    cfg.batch_size = 4;
    cfg.epochs = 60;
    cfg.lr_init = 2e-3;
    cfg.lr_decay_every = 50;
    cfg.checkpoint_every = 50;
    cfg.out_dir = out + "/runs/toy";
    cfg.bank_path = out + "/runs/toy/bank.bin";
    cfg.save_file(out + "/toy_config.json");
    std::printf("fixture: %d train samples, %d authentic textures at %s\n", n,
                n_auth, out.c_str());
    return 0;
}

int cmd_scribble(const std::string& masks_dir, const std::string& out,
                 double coverage, uint64_t seed, bool force) {
    ensure_outdir(out, force);
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(masks_dir))
        if (e.path().extension() == ".png") ids.push_back(e.path().stem().string());
    std::sort(ids.begin(), ids.end());
    for (const auto& id : ids) {
        ImageU8 m = read_png((fs::path(masks_dir) / (id + ".png")).string());
        Tensor mask({1, m.height, m.width});
        for (int y = 0; y < m.height; ++y)
            for (int x = 0; x < m.width; ++x)
                mask.at(0, y, x) = m.at(y, x, 0) > 127 ? 1.0 : 0.0;
        TriStateMask scr =
            synthesize_scribble(mask, coverage, Rng::mix(seed, std::hash<std::string>{}(id)));
        write_png((fs::path(out) / (id + ".png")).string(), encode_scribble(scr));
    }
    std::printf("scribbled %zu masks into %s\n", ids.size(), out.c_str());
    return 0;
}

int cmd_bank_build(const std::string& config_path, const std::string& out_path) {
    RunConfig cfg = RunConfig::load_file(config_path);
    if (!out_path.empty()) cfg.bank_path = out_path;
    obtain_banks(cfg, true);
    std::printf("bank written to %s\n", cfg.bank_path.c_str());
    return 0;
}

int cmd_bank_score(const std::string& bank_path, const std::string& image_path,
                   const std::string& out_prefix) {
    ManipulatedDiscriminator md = ManipulatedDiscriminator::load(bank_path);
    Tensor img = image_to_tensor(read_png(image_path));
    if (img.height() % 32 || img.width() % 32) {
        int h = std::max(32, img.height() / 32 * 32);
        int w = std::max(32, img.width() / 32 * 32);
        img = resize_bilinear(img, h, w);
    }
    PriorPair p = md.prior_pair(img);
    write_png(out_prefix + "_mp.png", gray_from_map(p.mp));
    write_png(out_prefix + "_ap.png", gray_from_map(p.ap));
    std::printf("prior maps written: %s_mp.png, %s_ap.png\n", out_prefix.c_str(),
                out_prefix.c_str());
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& resume,
              uint64_t seed_override, bool has_seed, bool deterministic) {
    RunConfig cfg = RunConfig::load_file(config_path);
    if (has_seed) cfg.seed = seed_override;
    if (deterministic) cfg.deterministic = true;

    std::vector<Sample> dataset = load_dataset(cfg.data.root, cfg.data.train_split);
    ManipulatedDiscriminator md = obtain_banks(cfg, false);

    ScafModel model(cfg.model_config(), cfg.seed);
    Trainer trainer(model, md, cfg.train_config());
    trainer.config_hash = cfg.hash();

    fs::create_directories(cfg.out_dir);
    cfg.save_file(cfg.out_dir + "/config.json"); // resolved reference

    std::function<double(int)> eval_cb;
    if (cfg.eval_every > 0) {
        eval_cb = [&](int epoch) {
            EvalResult r = evaluate(model, md, dataset, cfg.image_size,
                                    cfg.data.train_split);
            std::printf("epoch %d: train mean F1@0.5 = %.4f\n", epoch, r.mean_f1);
            std::fflush(stdout);
            return r.mean_f1;
        };
    }
    std::string ckpt = trainer.fit(dataset, resume, eval_cb);
    std::printf("training done, checkpoint: %s\n", ckpt.c_str());
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint,
             const std::string& split_override, const std::string& out_dir) {
    RunConfig cfg = RunConfig::load_file(config_path);
    std::string split =
        split_override.empty() ? cfg.data.eval_split : split_override;
    std::vector<Sample> dataset = load_dataset(cfg.data.root, split);

    ManipulatedDiscriminator md = obtain_banks(cfg, false);
    ScafModel model(cfg.model_config(), cfg.seed);
    CheckpointMeta meta = load_checkpoint(checkpoint, model.params(), nullptr);
    if (meta.config_hash != cfg.hash())
        std::fprintf(stderr,
                     "warning: checkpoint was trained with a different config\n");

    EvalResult r = evaluate(model, md, dataset, cfg.image_size, split);
    fs::create_directories(out_dir);
    write_eval_report(out_dir + "/eval_" + split + ".jsonl", r);
    write_f1_bar_chart(out_dir + "/eval_" + split + ".svg", r.per_image_f1);
    std::printf("%s: mean F1@0.5 = %.4f over %zu images (%d skipped)\n",
                split.c_str(), r.mean_f1, r.per_image_f1.size(), r.warnings);
    return 0;
}

int cmd_robust(const std::string& config_path, const std::string& checkpoint,
               const std::string& qualities_csv, const std::string& out_dir) {
    RunConfig cfg = RunConfig::load_file(config_path);
    std::vector<int> qualities;
    std::stringstream ss(qualities_csv);
    for (std::string tok; std::getline(ss, tok, ',');)
        if (!tok.empty()) qualities.push_back(std::stoi(tok));
    if (qualities.empty())
        throw std::runtime_error("robust: no qualities given");

    std::vector<Sample> dataset =
        load_dataset(cfg.data.root, cfg.data.eval_split);
    ManipulatedDiscriminator md = obtain_banks(cfg, false);
    ScafModel model(cfg.model_config(), cfg.seed);
    load_checkpoint(checkpoint, model.params(), nullptr);

    auto rows = robustness_sweep(model, md, dataset, cfg.image_size, qualities);
    fs::create_directories(out_dir);
    write_robustness_table(out_dir + "/robustness.tsv", rows);
    write_robustness_plot(out_dir + "/robustness.svg", rows);
    for (const auto& r : rows)
        std::printf("quality %3d: mean F1@0.5 = %.4f\n", r.quality, r.mean_f1);
    return 0;
}

int cmd_report(const std::vector<std::string>& eval_files,
               const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::vector<std::pair<std::string, double>> bars;
    std::string md_text = "# Evaluation report\n\n";
    md_text += "| dataset | images | mean F1@0.5 | skipped |\n";
    md_text += "|---|---|---|---|\n";
    for (const auto& f : eval_files) {
        if (!fs::exists(f))
            throw std::runtime_error("report: missing eval result file " + f);
        EvalResult r = read_eval_report(f);
        char row[256];
        std::snprintf(row, sizeof(row), "| %s | %zu | %.4f | %d |\n",
                      r.dataset.c_str(), r.per_image_f1.size(), r.mean_f1,
                      r.warnings);
        md_text += row;
        bars.push_back({r.dataset, r.mean_f1});
        md_text += "";
    }
    md_text += "\n![per-dataset mean F1](report_bars.svg)\n";
    std::ofstream out(out_dir + "/report.md");
    out << md_text;
    write_f1_bar_chart(out_dir + "/report_bars.svg", bars);
    std::printf("report written to %s/report.md\n", out_dir.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"SCAF: scribble-supervised image manipulation localization"};
    app.require_subcommand(1);

    // fixture
    auto* fixture = app.add_subcommand("fixture", "generate the toy splice dataset");
    std::string fx_out;
    int fx_n = 20, fx_auth = 20, fx_size = 128;
    double fx_cov = 0.1;
    uint64_t fx_seed = 7;
    bool fx_force = false;
    fixture->add_option("--out", fx_out, "output directory")->required();
    fixture->add_option("--n", fx_n, "number of manipulated samples");
    fixture->add_option("--authentic", fx_auth, "number of authentic textures");
    fixture->add_option("--size", fx_size, "image size (divisible by 32)");
    fixture->add_option("--coverage", fx_cov, "scribble coverage fraction");
    fixture->add_option("--seed", fx_seed, "rng seed");
    fixture->add_flag("--force", fx_force, "overwrite non-empty directory");

    // scribble
    auto* scribble = app.add_subcommand("scribble",
                                        "synthesize scribbles from dense masks");
    std::string sc_masks, sc_out;
    double sc_cov = 0.1;
    uint64_t sc_seed = 7;
    bool sc_force = false;
    scribble->add_option("--masks", sc_masks, "directory of mask PNGs")->required();
    scribble->add_option("--out", sc_out, "output scribble directory")->required();
    scribble->add_option("--coverage", sc_cov, "coverage fraction");
    scribble->add_option("--seed", sc_seed, "rng seed");
    scribble->add_flag("--force", sc_force, "overwrite non-empty directory");

    // bank build/score
    auto* bank = app.add_subcommand("bank", "memory bank operations");
    bank->require_subcommand(1);
    auto* bank_build = bank->add_subcommand("build", "build banks from config");
    std::string bb_config, bb_out;
    bank_build->add_option("--config", bb_config, "run config")->required();
    bank_build->add_option("--out", bb_out, "bank file (default: config bank_path)");
    auto* bank_score = bank->add_subcommand("score", "score an image into priors");
    std::string bs_bank, bs_image, bs_prefix;
    bank_score->add_option("--bank", bs_bank, "bank file")->required();
    bank_score->add_option("--image", bs_image, "input image")->required();
    bank_score->add_option("--out-prefix", bs_prefix, "output prefix")->required();

    // train
    auto* train = app.add_subcommand("train", "train the model");
    std::string tr_config, tr_resume;
    uint64_t tr_seed = 0;
    bool tr_det = false;
    train->add_option("--config", tr_config, "run config")->required();
    train->add_option("--resume", tr_resume, "checkpoint to resume from");
    auto* tr_seed_opt = train->add_option("--seed", tr_seed, "seed override");
    train->add_flag("--deterministic", tr_det, "force deterministic mode");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string ev_config, ev_ckpt, ev_split, ev_out = "eval_out";
    eval->add_option("--config", ev_config, "run config")->required();
    eval->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
    eval->add_option("--split", ev_split, "dataset split override");
    eval->add_option("--out", ev_out, "output directory");

    // robust
    auto* robust = app.add_subcommand("robust", "JPEG-quality robustness sweep");
    std::string rb_config, rb_ckpt, rb_qual = "90,50,10", rb_out = "robust_out";
    robust->add_option("--config", rb_config, "run config")->required();
    robust->add_option("--checkpoint", rb_ckpt, "checkpoint file")->required();
    robust->add_option("--qualities", rb_qual, "comma-separated JPEG qualities");
    robust->add_option("--out", rb_out, "output directory");

    // report
    auto* report = app.add_subcommand("report", "summarize evaluation results");
    std::vector<std::string> rp_eval;
    std::string rp_out = "report_out";
    report->add_option("--eval", rp_eval, "eval report files")->required();
    report->add_option("--out", rp_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*fixture)
            return cmd_fixture(fx_out, fx_n, fx_auth, fx_size, fx_cov, fx_seed,
                               fx_force);
        if (*scribble)
            return cmd_scribble(sc_masks, sc_out, sc_cov, sc_seed, sc_force);
        if (*bank_build) return cmd_bank_build(bb_config, bb_out);
        if (*bank_score) return cmd_bank_score(bs_bank, bs_image, bs_prefix);
        if (*train)
            return cmd_train(tr_config, tr_resume, tr_seed, tr_seed_opt->count() > 0,
                             tr_det);
        if (*eval) return cmd_eval(ev_config, ev_ckpt, ev_split, ev_out);
        if (*robust) return cmd_robust(rb_config, rb_ckpt, rb_qual, rb_out);
        if (*report) return cmd_report(rp_eval, rp_out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

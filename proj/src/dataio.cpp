#include "scaf/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <queue>
#include <stdexcept>

namespace fs = std::filesystem;

namespace scaf {

int64_t TriStateMask::count(ScribbleLabel l) const {
    return std::count(labels.begin(), labels.end(), (uint8_t)l);
}

TriStateMask TriStateMask::unlabeled(int h, int w) {
    TriStateMask m;
    m.height = h;
    m.width = w;
    m.labels.assign((size_t)h * w, (uint8_t)ScribbleLabel::kUnlabeled);
    return m;
}

TriStateMask decode_scribble(const ImageU8& img, const std::string& context) {
    if (img.channels != 1)
        throw std::runtime_error("scribble for " + context +
                                 " must be single channel");
    TriStateMask m;
    m.height = img.height;
    m.width = img.width;
    m.labels.resize(img.pixels.size());
    for (size_t i = 0; i < img.pixels.size(); ++i) {
        uint8_t v = img.pixels[i];
        if (v != 0 && v != 1 && v != 255)
            throw std::runtime_error("invalid scribble label value " +
                                     std::to_string((int)v) + " in " + context);
        m.labels[i] = v;
    }
    return m;
}

ImageU8 encode_scribble(const TriStateMask& m) {
    ImageU8 img;
    img.width = m.width;
    img.height = m.height;
    img.channels = 1;
    img.pixels.assign(m.labels.begin(), m.labels.end());
    return img;
}

std::vector<Sample> load_dataset(const std::string& root,
                                 const std::string& split) {
    fs::path base = fs::path(root) / split;
    fs::path images_dir = base / "images";
    if (!fs::is_directory(images_dir))
        throw std::runtime_error("dataset split not found: " +
                                 images_dir.string());
    bool have_scribbles = fs::is_directory(base / "scribbles");
    bool have_masks = fs::is_directory(base / "masks");

    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(images_dir)) {
        if (e.path().extension() == ".png")
            ids.push_back(e.path().stem().string());
    }
    std::sort(ids.begin(), ids.end());

    std::vector<Sample> samples;
    samples.reserve(ids.size());
    for (const auto& id : ids) {
        Sample s;
        s.id = id;
        ImageU8 img = read_png((images_dir / (id + ".png")).string());
        if (img.channels == 1) { // tolerate grayscale inputs
            ImageU8 rgb;
            rgb.width = img.width;
            rgb.height = img.height;
            rgb.channels = 3;
            rgb.pixels.resize((size_t)img.width * img.height * 3);
            for (size_t i = 0; i < img.pixels.size(); ++i)
                rgb.pixels[i * 3] = rgb.pixels[i * 3 + 1] = rgb.pixels[i * 3 + 2] =
                    img.pixels[i];
            img = std::move(rgb);
        }
        s.image = image_to_tensor(img);

        if (have_scribbles) {
            fs::path sp = base / "scribbles" / (id + ".png");
            if (!fs::exists(sp))
                throw std::runtime_error("missing scribble for sample '" + id +
                                         "'");
            s.scribble = decode_scribble(read_png(sp.string()), "sample '" + id + "'");
        } else {
            s.scribble = TriStateMask::unlabeled(img.height, img.width);
        }
        if (s.scribble.height != img.height || s.scribble.width != img.width)
            throw std::runtime_error("scribble size mismatch for sample '" + id +
                                     "'");

        if (have_masks) {
            fs::path mp = base / "masks" / (id + ".png");
            if (fs::exists(mp)) {
                ImageU8 mask = read_png(mp.string());
                Tensor t({1, mask.height, mask.width});
                for (int y = 0; y < mask.height; ++y)
                    for (int x = 0; x < mask.width; ++x)
                        t.at(0, y, x) = mask.at(y, x, 0) > 127 ? 1.0 : 0.0;
                s.dense_mask = std::move(t);
            }
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

namespace {

// 4-connected components; returns label per pixel (-1 for off-class) and
// pixel lists per component
struct Components {
    std::vector<std::vector<int>> pixels; // flat indices
};

Components find_components(const std::vector<uint8_t>& cls, int h, int w,
                           uint8_t want) {
    Components comps;
    std::vector<int> label((size_t)h * w, -1);
    for (int start = 0; start < h * w; ++start) {
        if (cls[start] != want || label[start] >= 0) continue;
        std::vector<int> members;
        std::queue<int> q;
        q.push(start);
        label[start] = (int)comps.pixels.size();
        while (!q.empty()) {
            int p = q.front();
            q.pop();
            members.push_back(p);
            int y = p / w, x = p % w;
            const int ny[4] = {y - 1, y + 1, y, y};
            const int nx[4] = {x, x, x - 1, x + 1};
            for (int k = 0; k < 4; ++k) {
                if (ny[k] < 0 || ny[k] >= h || nx[k] < 0 || nx[k] >= w) continue;
                int np = ny[k] * w + nx[k];
                if (cls[np] == want && label[np] < 0) {
                    label[np] = label[start];
                    q.push(np);
                }
            }
        }
        comps.pixels.push_back(std::move(members));
    }
    return comps;
}

// walk quota pixels inside one component
void walk_component(const std::vector<int>& comp, const std::vector<uint8_t>& cls,
                    uint8_t want, int h, int w, int64_t quota, Rng& rng,
                    std::vector<uint8_t>& out, uint8_t mark) {
    if (quota <= 0) return;
    if (quota >= (int64_t)comp.size()) {
        for (int p : comp) out[p] = mark;
        return;
    }
    int64_t marked = 0;
    int pos = comp[rng.uniform_int(comp.size())];
    if (out[pos] != mark) {
        out[pos] = mark;
        ++marked;
    }
    int64_t budget = 200 * quota + 1000;
    while (marked < quota && budget-- > 0) {
        int y = pos / w, x = pos % w;
        int dir = (int)rng.uniform_int(4);
        int ny = y + (dir == 0) - (dir == 1);
        int nx = x + (dir == 2) - (dir == 3);
        if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
        int np = ny * w + nx;
        if (cls[np] != want) continue;
        pos = np;
        if (out[pos] != mark) {
            out[pos] = mark;
            ++marked;
        }
    }
    // stuck walks top up from random unmarked component pixels
    while (marked < quota) {
        int p = comp[rng.uniform_int(comp.size())];
        if (out[p] != mark) {
            out[p] = mark;
            ++marked;
        }
    }
}

// largest-remainder apportionment of `total` over component sizes
std::vector<int64_t> apportion(const Components& comps, int64_t total) {
    int64_t area = 0;
    for (const auto& c : comps.pixels) area += (int64_t)c.size();
    std::vector<int64_t> quota(comps.pixels.size(), 0);
    std::vector<std::pair<double, size_t>> rema;
    int64_t assigned = 0;
    for (size_t i = 0; i < comps.pixels.size(); ++i) {
        double exact = (double)total * comps.pixels[i].size() / (double)area;
        quota[i] = (int64_t)std::floor(exact);
        quota[i] = std::min(quota[i], (int64_t)comps.pixels[i].size());
        assigned += quota[i];
        rema.push_back({exact - std::floor(exact), i});
    }
    std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (const auto& [frac, i] : rema) {
        if (assigned >= total) break;
        if (quota[i] < (int64_t)comps.pixels[i].size()) {
            ++quota[i];
            ++assigned;
        }
    }
    return quota;
}

void scribble_class(const std::vector<uint8_t>& cls, uint8_t want, int h, int w,
                    double coverage, Rng& rng, std::vector<uint8_t>& out,
                    uint8_t mark) {
    Components comps = find_components(cls, h, w, want);
    if (comps.pixels.empty()) return;
    int64_t area = 0;
    for (const auto& c : comps.pixels) area += (int64_t)c.size();
    int64_t total = llround(coverage * (double)area);
    if (coverage > 0 && total == 0) total = 1;
    auto quota = apportion(comps, total);
    for (size_t i = 0; i < comps.pixels.size(); ++i)
        walk_component(comps.pixels[i], cls, want, h, w, quota[i], rng, out, mark);
}

} // namespace

TriStateMask synthesize_scribble(const Tensor& dense_mask, double coverage,
                                 uint64_t seed) {
    if (!(coverage > 0.0 && coverage <= 1.0))
        throw std::runtime_error("coverage must be in (0,1], got " +
                                 std::to_string(coverage));
    const int h = dense_mask.height(), w = dense_mask.width();
    std::vector<uint8_t> cls((size_t)h * w);
    int64_t fg = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            bool m = dense_mask.at(0, y, x) > 0.5;
            cls[(size_t)y * w + x] = m ? 1 : 0;
            fg += m;
        }
    if (fg == 0)
        throw std::runtime_error("synthesize_scribble: mask has no foreground");

    TriStateMask out = TriStateMask::unlabeled(h, w);
    Rng rng(Rng::mix(seed, 0xa11ce));
    scribble_class(cls, 1, h, w, coverage, rng,
                   out.labels, (uint8_t)ScribbleLabel::kManipulated);
    scribble_class(cls, 0, h, w, coverage, rng,
                   out.labels, (uint8_t)ScribbleLabel::kAuthentic);
    return out;
}

AugmentationSpec sample_augmentation(Rng& rng) {
    AugmentationSpec spec;
    spec.seed = rng.next_u64();
    switch (rng.uniform_int(3)) {
    case 0:
        spec.kind = AugmentationSpec::Kind::kRotation;
        spec.angle_deg = 90 * (int)(1 + rng.uniform_int(3));
        break;
    case 1:
        spec.kind = AugmentationSpec::Kind::kScaling;
        spec.scale = rng.uniform(0.5, 1.5);
        break;
    default:
        spec.kind = AugmentationSpec::Kind::kHFlip;
        break;
    }
    return spec;
}

int scaled_extent(int extent, double scale) {
    int units = (int)llround(scale * extent / 32.0);
    return std::max(32, units * 32);
}

ad::IndexMap transform_index_map(int h, int w, const AugmentationSpec& spec) {
    ad::IndexMap map;
    switch (spec.kind) {
    case AugmentationSpec::Kind::kHFlip: {
        map.out_h = h;
        map.out_w = w;
        map.src.resize((size_t)h * w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                map.src[(size_t)y * w + x] = y * w + (w - 1 - x);
        return map;
    }
    case AugmentationSpec::Kind::kRotation: {
        int q = spec.angle_deg / 90;
        if (q < 1 || q > 3 || spec.angle_deg % 90 != 0)
            throw std::runtime_error("unsupported rotation angle " +
                                     std::to_string(spec.angle_deg));
        if (q == 2) {
            map.out_h = h;
            map.out_w = w;
            map.src.resize((size_t)h * w);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    map.src[(size_t)y * w + x] = (h - 1 - y) * w + (w - 1 - x);
        } else {
            map.out_h = w;
            map.out_w = h;
            map.src.resize((size_t)h * w);
            for (int y = 0; y < map.out_h; ++y)
                for (int x = 0; x < map.out_w; ++x)
                    map.src[(size_t)y * map.out_w + x] =
                        q == 1 ? x * w + (w - 1 - y) : (h - 1 - x) * w + y;
        }
        return map;
    }
    case AugmentationSpec::Kind::kScaling: {
        map.out_h = scaled_extent(h, spec.scale);
        map.out_w = scaled_extent(w, spec.scale);
        map.src.resize((size_t)map.out_h * map.out_w);
        for (int oy = 0; oy < map.out_h; ++oy) {
            int sy = std::min((int)((oy + 0.5) * h / map.out_h), h - 1);
            for (int ox = 0; ox < map.out_w; ++ox) {
                int sx = std::min((int)((ox + 0.5) * w / map.out_w), w - 1);
                map.src[(size_t)oy * map.out_w + ox] = sy * w + sx;
            }
        }
        return map;
    }
    }
    throw std::runtime_error("unsupported augmentation kind");
}

Tensor apply_transform_map(const Tensor& x, const AugmentationSpec& spec) {
    ad::IndexMap map = transform_index_map(x.height(), x.width(), spec);
    const int c = x.channels();
    const int64_t in_hw = (int64_t)x.height() * x.width();
    const int64_t out_hw = (int64_t)map.out_h * map.out_w;
    Tensor out({c, map.out_h, map.out_w});
    for (int ch = 0; ch < c; ++ch)
        for (int64_t i = 0; i < out_hw; ++i)
            out.data[(size_t)ch * out_hw + i] =
                x.data[(size_t)ch * in_hw + map.src[i]];
    return out;
}

Tensor apply_transform_image(const Tensor& x, const AugmentationSpec& spec) {
    switch (spec.kind) {
    case AugmentationSpec::Kind::kHFlip:
        return hflip(x);
    case AugmentationSpec::Kind::kRotation:
        if (spec.angle_deg % 90 != 0 || spec.angle_deg < 90 ||
            spec.angle_deg > 270)
            throw std::runtime_error("unsupported rotation angle " +
                                     std::to_string(spec.angle_deg));
        return rotate90(x, spec.angle_deg / 90);
    case AugmentationSpec::Kind::kScaling:
        return resize_bilinear(x, scaled_extent(x.height(), spec.scale),
                               scaled_extent(x.width(), spec.scale));
    }
    throw std::runtime_error("unsupported augmentation kind");
}

namespace {

Tensor make_texture(Rng& rng, int size, const double base[3]) {
    Tensor t({3, size, size});
    double gx = rng.uniform(-1.0, 1.0), gy = rng.uniform(-1.0, 1.0);
    double amp = rng.uniform(0.02, 0.1);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            double shade = amp * (gx * x + gy * y) / size;
            for (int c = 0; c < 3; ++c) {
                double v = base[c] + shade + rng.uniform(-0.06, 0.06);
                t.at(c, y, x) = std::clamp(v, 0.0, 1.0);
            }
        }
    return t;
}

std::string zero_pad(int v, int width) {
    std::string s = std::to_string(v);
    while ((int)s.size() < width) s = "0" + s;
    return s;
}

} // namespace

void generate_fixture(const std::string& out_root, const FixtureConfig& cfg) {
    if (cfg.n_samples <= 0)
        throw std::runtime_error("fixture: n_samples must be positive");
    const int n = cfg.image_size;
    Rng rng(Rng::mix(cfg.seed, 0xf1c5));

    fs::path root(out_root);
    fs::create_directories(root / "authentic" / "images");
    fs::create_directories(root / "train" / "images");
    fs::create_directories(root / "train" / "scribbles");
    fs::create_directories(root / "train" / "masks");

    for (int i = 0; i < cfg.n_authentic; ++i) {
        double base[3] = {rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85),
                          rng.uniform(0.15, 0.85)};
        Tensor img = make_texture(rng, n, base);
        write_png((root / "authentic" / "images" /
                   ("auth_" + zero_pad(i, 3) + ".png")).string(),
                  tensor_to_image(img));
    }

    for (int i = 0; i < cfg.n_samples; ++i) {
        double bg[3] = {rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85),
                        rng.uniform(0.15, 0.85)};
        double fg[3];
        do {
            for (int c = 0; c < 3; ++c) fg[c] = rng.uniform(0.15, 0.85);
        } while (std::max({std::fabs(fg[0] - bg[0]), std::fabs(fg[1] - bg[1]),
                           std::fabs(fg[2] - bg[2])}) < 0.3);
        Tensor img = make_texture(rng, n, bg);
        Tensor alien = make_texture(rng, n, fg);

        int rw = (int)(n / 5 + rng.uniform_int(n / 4));
        int rh = (int)(n / 5 + rng.uniform_int(n / 4));
        int x0 = 2 + (int)rng.uniform_int(n - rw - 4);
        int y0 = 2 + (int)rng.uniform_int(n - rh - 4);

        Tensor mask({1, n, n});
        for (int y = y0; y < y0 + rh; ++y)
            for (int x = x0; x < x0 + rw; ++x) {
                mask.at(0, y, x) = 1.0;
                for (int c = 0; c < 3; ++c) img.at(c, y, x) = alien.at(c, y, x);
            }

        TriStateMask scribble =
            synthesize_scribble(mask, cfg.coverage, Rng::mix(cfg.seed, 1000 + i));

        std::string id = "sample_" + zero_pad(i, 3);
        write_png((root / "train" / "images" / (id + ".png")).string(),
                  tensor_to_image(img));
        write_png((root / "train" / "scribbles" / (id + ".png")).string(),
                  encode_scribble(scribble));
        ImageU8 mimg;
        mimg.width = n;
        mimg.height = n;
        mimg.channels = 1;
        mimg.pixels.resize((size_t)n * n);
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x)
                mimg.at(y, x) = mask.at(0, y, x) > 0.5 ? 255 : 0;
        write_png((root / "train" / "masks" / (id + ".png")).string(), mimg);
    }
}

} // namespace scaf

#include "scaf/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "scaf/dataio.hpp"

namespace scaf {

double f1_at_threshold(const Tensor& probs, const Tensor& gt, double threshold) {
    if (!probs.same_shape(gt))
        throw std::runtime_error("f1: shape mismatch " + probs.shape_str() +
                                 " vs " + gt.shape_str());
    int64_t tp = 0, fp = 0, fn = 0;
    for (int64_t i = 0; i < probs.numel(); ++i) {
        bool pred = probs[i] > threshold;
        bool pos = gt[i] > 0.5;
        tp += pred && pos;
        fp += pred && !pos;
        fn += !pred && pos;
    }
    int64_t denom = 2 * tp + fp + fn;
    if (denom == 0) return 1.0; // both empty: agreement
    return 2.0 * (double)tp / (double)denom;
}

Tensor sigmoid_map(const Tensor& logits) {
    Tensor out = logits;
    for (auto& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    return out;
}

Tensor predict_probs(ScafModel& model, const ManipulatedDiscriminator& md,
                     const Tensor& image, int image_size) {
    Tensor input = (image.height() == image_size && image.width() == image_size)
                       ? image
                       : resize_bilinear(image, image_size, image_size);
    PriorPair priors = md.prior_pair(input);
    PredictionBundle out = model.forward(input, priors);
    Tensor probs = sigmoid_map(out.m1->value);
    if (probs.height() != image.height() || probs.width() != image.width())
        probs = resize_bilinear(probs, image.height(), image.width());
    return probs;
}

EvalResult evaluate(ScafModel& model, const ManipulatedDiscriminator& md,
                    const std::vector<Sample>& dataset, int image_size,
                    const std::string& dataset_name) {
    EvalResult r;
    r.dataset = dataset_name;
    double sum = 0.0;
    for (const auto& s : dataset) {
        if (!s.dense_mask) {
            ++r.warnings;
            continue;
        }
        Tensor probs = predict_probs(model, md, s.image, image_size);
        double f1 = f1_at_threshold(probs, *s.dense_mask, r.threshold);
        r.per_image_f1.push_back({s.id, f1});
        sum += f1;
    }
    r.mean_f1 = r.per_image_f1.empty() ? 0.0 : sum / r.per_image_f1.size();
    return r;
}

std::vector<RobustnessRow> robustness_sweep(ScafModel& model,
                                            const ManipulatedDiscriminator& md,
                                            const std::vector<Sample>& dataset,
                                            int image_size,
                                            const std::vector<int>& qualities) {
    for (int q : qualities)
        if (q < 1 || q > 100)
            throw std::runtime_error("robustness: quality " + std::to_string(q) +
                                     " outside [1,100]");
    std::vector<RobustnessRow> rows;
    for (int q : qualities) {
        std::vector<Sample> degraded;
        degraded.reserve(dataset.size());
        for (const auto& s : dataset) {
            Sample d = s;
            d.image = image_to_tensor(jpeg_roundtrip(tensor_to_image(s.image), q));
            degraded.push_back(std::move(d));
        }
        EvalResult r = evaluate(model, md, degraded, image_size,
                                "q" + std::to_string(q));
        rows.push_back({q, r.mean_f1});
    }
    return rows;
}

void write_eval_report(const std::string& path, const EvalResult& r) {
    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot write eval report " + path);
    for (const auto& [id, f1] : r.per_image_f1)
        std::fprintf(f, "{\"id\":\"%s\",\"f1\":%.12g}\n", id.c_str(), f1);
    std::fprintf(f,
                 "{\"summary\":{\"dataset\":\"%s\",\"mean_f1\":%.12g,"
                 "\"threshold\":%.3g,\"images\":%zu,\"warnings\":%d}}\n",
                 r.dataset.c_str(), r.mean_f1, r.threshold,
                 r.per_image_f1.size(), r.warnings);
    std::fclose(f);
}

namespace {
// minimal field scanner for our own fixed report format
bool find_json_number(const std::string& line, const std::string& key,
                      double* out) {
    auto pos = line.find("\"" + key + "\":");
    if (pos == std::string::npos) return false;
    *out = std::strtod(line.c_str() + pos + key.size() + 3, nullptr);
    return true;
}
bool find_json_string(const std::string& line, const std::string& key,
                      std::string* out) {
    auto pos = line.find("\"" + key + "\":\"");
    if (pos == std::string::npos) return false;
    size_t start = pos + key.size() + 4;
    size_t end = line.find('"', start);
    if (end == std::string::npos) return false;
    *out = line.substr(start, end - start);
    return true;
}
} // namespace

EvalResult read_eval_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open eval report " + path);
    EvalResult r;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find("\"summary\"") != std::string::npos) {
            find_json_number(line, "mean_f1", &r.mean_f1);
            double wv = 0;
            if (find_json_number(line, "warnings", &wv)) r.warnings = (int)wv;
            find_json_string(line, "dataset", &r.dataset);
        } else {
            std::string id;
            double f1 = 0;
            if (find_json_string(line, "id", &id) &&
                find_json_number(line, "f1", &f1))
                r.per_image_f1.push_back({id, f1});
        }
    }
    return r;
}

void write_robustness_table(const std::string& path,
                            const std::vector<RobustnessRow>& rows) {
    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot write robustness table " + path);
    std::fprintf(f, "quality\tmean_f1\n");
    for (const auto& r : rows) std::fprintf(f, "%d\t%.12g\n", r.quality, r.mean_f1);
    std::fclose(f);
}

namespace {

void svg_header(std::ostringstream& s, int w, int h) {
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
      << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << " " << h << "\">\n"
      << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
}

} // namespace

void write_robustness_plot(const std::string& svg_path,
                           const std::vector<RobustnessRow>& rows) {
    const int W = 480, H = 320, L = 56, B = 40, T = 24, R = 16;
    std::ostringstream s;
    svg_header(s, W, H);
    s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R
      << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\""
      << H - B << "\" stroke=\"black\"/>\n";
    auto px = [&](double q) {
        return L + (q - 0.0) / 100.0 * (W - L - R);
    };
    auto py = [&](double f1) { return H - B - f1 * (H - T - B); };
    std::ostringstream pts;
    for (const auto& r : rows) pts << px(r.quality) << "," << py(r.mean_f1) << " ";
    s << "<polyline points=\"" << pts.str()
      << "\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\"/>\n";
    for (const auto& r : rows)
        s << "<circle cx=\"" << px(r.quality) << "\" cy=\"" << py(r.mean_f1)
          << "\" r=\"3\" fill=\"steelblue\"/>\n";
    s << "<text x=\"" << (W / 2) << "\" y=\"" << (H - 8)
      << "\" text-anchor=\"middle\" font-size=\"12\">JPEG quality</text>\n";
    s << "<text x=\"14\" y=\"" << (H / 2)
      << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 "
      << (H / 2) << ")\">mean F1@0.5</text>\n";
    for (int i = 0; i <= 4; ++i) {
        double f1 = i / 4.0;
        s << "<text x=\"" << (L - 6) << "\" y=\"" << (py(f1) + 4)
          << "\" text-anchor=\"end\" font-size=\"10\">" << f1 << "</text>\n";
    }
    for (int q = 0; q <= 100; q += 25)
        s << "<text x=\"" << px(q) << "\" y=\"" << (H - B + 14)
          << "\" text-anchor=\"middle\" font-size=\"10\">" << q << "</text>\n";
    s << "</svg>\n";
    std::ofstream out(svg_path);
    if (!out) throw std::runtime_error("cannot write plot " + svg_path);
    out << s.str();
}

void write_f1_bar_chart(const std::string& svg_path,
                        const std::vector<std::pair<std::string, double>>& bars) {
    const int W = 560, H = 320, L = 56, B = 64, T = 24, R = 16;
    std::ostringstream s;
    svg_header(s, W, H);
    s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R
      << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\""
      << H - B << "\" stroke=\"black\"/>\n";
    const int n = (int)bars.size();
    double bw = (double)(W - L - R) / std::max(1, n);
    for (int i = 0; i < n; ++i) {
        double x = L + i * bw + bw * 0.15;
        double h = bars[i].second * (H - T - B);
        s << "<rect x=\"" << x << "\" y=\"" << (H - B - h) << "\" width=\""
          << bw * 0.7 << "\" height=\"" << h << "\" fill=\"darkseagreen\"/>\n";
        s << "<text x=\"" << (L + i * bw + bw / 2) << "\" y=\"" << (H - B + 14)
          << "\" text-anchor=\"middle\" font-size=\"10\">" << bars[i].first
          << "</text>\n";
        char val[32];
        std::snprintf(val, sizeof(val), "%.3f", bars[i].second);
        s << "<text x=\"" << (L + i * bw + bw / 2) << "\" y=\""
          << (H - B - h - 4) << "\" text-anchor=\"middle\" font-size=\"10\">"
          << val << "</text>\n";
    }
    for (int i = 0; i <= 4; ++i) {
        double f1 = i / 4.0;
        double y = H - B - f1 * (H - T - B);
        s << "<text x=\"" << (L - 6) << "\" y=\"" << (y + 4)
          << "\" text-anchor=\"end\" font-size=\"10\">" << f1 << "</text>\n";
    }
    s << "</svg>\n";
    std::ofstream out(svg_path);
    if (!out) throw std::runtime_error("cannot write plot " + svg_path);
    out << s.str();
}

} // namespace scaf

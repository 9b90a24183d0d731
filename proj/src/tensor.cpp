#include "scaf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace scaf {

Tensor::Tensor(std::vector<int> s, double fill) : shape(std::move(s)) {
    int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::runtime_error("tensor dim must be positive");
        n *= d;
    }
    data.assign((size_t)n, fill);
}

Tensor Tensor::scalar(double v) {
    Tensor t({1});
    t.data[0] = v;
    return t;
}

std::string Tensor::shape_str() const {
    std::string s = "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

double Tensor::min() const {
    return *std::min_element(data.begin(), data.end());
}
double Tensor::max() const {
    return *std::max_element(data.begin(), data.end());
}
double Tensor::sum() const {
    return std::accumulate(data.begin(), data.end(), 0.0);
}
bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w) {
    const int c = x.channels(), h = x.height(), w = x.width();
    Tensor out({c, out_h, out_w});
    const double sy = (double)h / out_h, sx = (double)w / out_w;
    for (int oy = 0; oy < out_h; ++oy) {
        double fy = (oy + 0.5) * sy - 0.5;
        int y0 = (int)std::floor(fy);
        double wy = fy - y0;
        int y1 = std::min(std::max(y0 + 1, 0), h - 1);
        y0 = std::min(std::max(y0, 0), h - 1);
        for (int ox = 0; ox < out_w; ++ox) {
            double fx = (ox + 0.5) * sx - 0.5;
            int x0 = (int)std::floor(fx);
            double wx = fx - x0;
            int x1 = std::min(std::max(x0 + 1, 0), w - 1);
            x0 = std::min(std::max(x0, 0), w - 1);
            for (int ch = 0; ch < c; ++ch) {
                double top = x.at(ch, y0, x0) * (1 - wx) + x.at(ch, y0, x1) * wx;
                double bot = x.at(ch, y1, x0) * (1 - wx) + x.at(ch, y1, x1) * wx;
                out.at(ch, oy, ox) = top * (1 - wy) + bot * wy;
            }
        }
    }
    return out;
}

Tensor resize_nearest(const Tensor& x, int out_h, int out_w) {
    const int c = x.channels(), h = x.height(), w = x.width();
    Tensor out({c, out_h, out_w});
    for (int oy = 0; oy < out_h; ++oy) {
        int sy = std::min((int)((oy + 0.5) * h / out_h), h - 1);
        for (int ox = 0; ox < out_w; ++ox) {
            int sx = std::min((int)((ox + 0.5) * w / out_w), w - 1);
            for (int ch = 0; ch < c; ++ch) out.at(ch, oy, ox) = x.at(ch, sy, sx);
        }
    }
    return out;
}

Tensor rotate90(const Tensor& x, int quarter_turns) {
    int q = ((quarter_turns % 4) + 4) % 4;
    if (q == 0) return x;
    const int c = x.channels(), h = x.height(), w = x.width();
    if (q == 2) {
        Tensor out({c, h, w});
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx)
                    out.at(ch, y, xx) = x.at(ch, h - 1 - y, w - 1 - xx);
        return out;
    }
    Tensor out({c, w, h});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < w; ++y)
            for (int xx = 0; xx < h; ++xx) {
                if (q == 1) // CCW: out(y,x) = in(x, W-1-y)
                    out.at(ch, y, xx) = x.at(ch, xx, w - 1 - y);
                else // q == 3, CW
                    out.at(ch, y, xx) = x.at(ch, h - 1 - xx, y);
            }
    return out;
}

Tensor hflip(const Tensor& x) {
    const int c = x.channels(), h = x.height(), w = x.width();
    Tensor out({c, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
                out.at(ch, y, xx) = x.at(ch, y, w - 1 - xx);
    return out;
}

} // namespace scaf

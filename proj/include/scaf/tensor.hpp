#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace scaf {

// Dense row-major tensor of doubles. Feature maps are {C,H,W}, matrices
// {rows,cols}, vectors {n}, scalars {1}.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, double fill = 0.0);

    static Tensor scalar(double v);

    int64_t numel() const { return (int64_t)data.size(); }
    int ndim() const { return (int)shape.size(); }
    int dim(int i) const { return shape[i]; }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    std::string shape_str() const;

    double& operator[](int64_t i) { return data[(size_t)i]; }
    double operator[](int64_t i) const { return data[(size_t)i]; }

    // {C,H,W} accessors
    int channels() const { return shape[0]; }
    int height() const { return shape[1]; }
    int width() const { return shape[2]; }
    double& at(int c, int y, int x) {
        return data[((size_t)c * shape[1] + y) * shape[2] + x];
    }
    double at(int c, int y, int x) const {
        return data[((size_t)c * shape[1] + y) * shape[2] + x];
    }
    // {rows,cols}
    double& at2(int r, int c) { return data[(size_t)r * shape[1] + c]; }
    double at2(int r, int c) const { return data[(size_t)r * shape[1] + c]; }

    void fill(double v);
    double min() const;
    double max() const;
    double sum() const;
    double mean() const { return numel() ? sum() / (double)numel() : 0.0; }
    bool all_finite() const;
};

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w);
Tensor resize_nearest(const Tensor& x, int out_h, int out_w);
Tensor rotate90(const Tensor& x, int quarter_turns); // CCW multiples of 90
Tensor hflip(const Tensor& x);

} // namespace scaf

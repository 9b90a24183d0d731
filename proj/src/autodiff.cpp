#include "scaf/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace scaf::ad {

namespace {

Var make_node(Tensor value, std::vector<Var> parents,
              std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    bool rg = false;
    for (const auto& p : parents) rg = rg || p->requires_grad;
    n->requires_grad = rg;
    if (rg) {
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a->value.same_shape(b->value))
        throw std::runtime_error(std::string(op) + ": shape mismatch " +
                                 a->value.shape_str() + " vs " +
                                 b->value.shape_str());
}

} // namespace

Var constant(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = false;
    return n;
}

Var parameter(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = true;
    return n;
}

void backward(const Var& root, double seed) {
    if (root->value.numel() != 1)
        throw std::runtime_error("backward: root must be scalar");
    if (!root->requires_grad) return;

    // iterative postorder over the grad-relevant subgraph
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.push_back({root.get(), 0});
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->g()[0] += seed;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backprop) (*it)->backprop(**it);
}

void zero_grad(const std::vector<Var>& params) {
    for (const auto& p : params)
        if (p->grad.shape == p->value.shape) p->grad.fill(0.0);
}

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) {
            Tensor& ga = a->g();
            for (int64_t i = 0; i < n.grad.numel(); ++i) ga[i] += n.grad[i];
        }
        if (b->requires_grad) {
            Tensor& gb = b->g();
            for (int64_t i = 0; i < n.grad.numel(); ++i) gb[i] += n.grad[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) {
            Tensor& ga = a->g();
            for (int64_t i = 0; i < n.grad.numel(); ++i) ga[i] += n.grad[i];
        }
        if (b->requires_grad) {
            Tensor& gb = b->g();
            for (int64_t i = 0; i < n.grad.numel(); ++i) gb[i] -= n.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) {
            Tensor& ga = a->g();
            for (int64_t i = 0; i < n.grad.numel(); ++i)
                ga[i] += n.grad[i] * b->value[i];
        }
        if (b->requires_grad) {
            Tensor& gb = b->g();
            for (int64_t i = 0; i < n.grad.numel(); ++i)
                gb[i] += n.grad[i] * a->value[i];
        }
    });
}

Var div(const Var& a, const Var& b) {
    check_same_shape(a, b, "div");
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] /= b->value[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) {
            Tensor& ga = a->g();
            for (int64_t i = 0; i < n.grad.numel(); ++i)
                ga[i] += n.grad[i] / b->value[i];
        }
        if (b->requires_grad) {
            Tensor& gb = b->g();
            for (int64_t i = 0; i < n.grad.numel(); ++i)
                gb[i] -= n.grad[i] * a->value[i] / (b->value[i] * b->value[i]);
        }
    });
}

Var neg(const Var& a) { return mul_scalar(a, -1.0); }

Var add_scalar(const Var& a, double c) {
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += c;
    return make_node(std::move(out), {a}, [a](Node& n) {
        if (!a->requires_grad) return;
        Tensor& ga = a->g();
        for (int64_t i = 0; i < n.grad.numel(); ++i) ga[i] += n.grad[i];
    });
}

Var mul_scalar(const Var& a, double c) {
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= c;
    return make_node(std::move(out), {a}, [a, c](Node& n) {
        if (!a->requires_grad) return;
        Tensor& ga = a->g();
        for (int64_t i = 0; i < n.grad.numel(); ++i) ga[i] += n.grad[i] * c;
    });
}

Var relu(const Var& a) {
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::max(out[i], 0.0);
    return make_node(std::move(out), {a}, [a](Node& n) {
        if (!a->requires_grad) return;
        Tensor& ga = a->g();
        for (int64_t i = 0; i < n.grad.numel(); ++i)
            if (a->value[i] > 0.0) ga[i] += n.grad[i];
    });
}

Var sigmoid(const Var& a) {
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = 1.0 / (1.0 + std::exp(-out[i]));
    auto n = make_node(std::move(out), {a}, nullptr);
    if (n->requires_grad) {
        Tensor s = n->value;
        n->backprop = [a, s](Node& n2) {
            if (!a->requires_grad) return;
            Tensor& ga = a->g();
            for (int64_t i = 0; i < n2.grad.numel(); ++i)
                ga[i] += n2.grad[i] * s[i] * (1.0 - s[i]);
        };
    }
    return n;
}

Var abs(const Var& a) {
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::fabs(out[i]);
    return make_node(std::move(out), {a}, [a](Node& n) {
        if (!a->requires_grad) return;
        Tensor& ga = a->g();
        for (int64_t i = 0; i < n.grad.numel(); ++i) {
            double v = a->value[i];
            ga[i] += n.grad[i] * (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
        }
    });
}

Var smul(const Var& s, const Var& a) {
    if (s->value.numel() != 1) throw std::runtime_error("smul: s not scalar");
    double sv = s->value[0];
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= sv;
    return make_node(std::move(out), {s, a}, [s, a, sv](Node& n) {
        if (a->requires_grad) {
            Tensor& ga = a->g();
            for (int64_t i = 0; i < n.grad.numel(); ++i)
                ga[i] += n.grad[i] * sv;
        }
        if (s->requires_grad) {
            double acc = 0.0;
            for (int64_t i = 0; i < n.grad.numel(); ++i)
                acc += n.grad[i] * a->value[i];
            s->g()[0] += acc;
        }
    });
}

Var bmul_map(const Var& x, const Var& m) {
    const int c = x->value.channels(), h = x->value.height(),
              w = x->value.width();
    if (m->value.channels() != 1 || m->value.height() != h ||
        m->value.width() != w)
        throw std::runtime_error("bmul_map: map shape mismatch");
    Tensor out = x->value;
    const int64_t hw = (int64_t)h * w;
    for (int ch = 0; ch < c; ++ch)
        for (int64_t i = 0; i < hw; ++i) out[ch * hw + i] *= m->value[i];
    return make_node(std::move(out), {x, m}, [x, m, c, hw](Node& n) {
        if (x->requires_grad) {
            Tensor& gx = x->g();
            for (int ch = 0; ch < c; ++ch)
                for (int64_t i = 0; i < hw; ++i)
                    gx[ch * hw + i] += n.grad[ch * hw + i] * m->value[i];
        }
        if (m->requires_grad) {
            Tensor& gm = m->g();
            for (int ch = 0; ch < c; ++ch)
                for (int64_t i = 0; i < hw; ++i)
                    gm[i] += n.grad[ch * hw + i] * x->value[ch * hw + i];
        }
    });
}

Var bmul_cols(const Var& x, const Var& a) {
    const int c = x->value.channels(), h = x->value.height(),
              w = x->value.width();
    if (a->value.channels() != c || a->value.height() != h ||
        a->value.width() != 1)
        throw std::runtime_error("bmul_cols: shape mismatch");
    Tensor out = x->value;
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y) {
            double av = a->value.at(ch, y, 0);
            for (int xx = 0; xx < w; ++xx) out.at(ch, y, xx) *= av;
        }
    return make_node(std::move(out), {x, a}, [x, a, c, h, w](Node& n) {
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y) {
                double av = a->value.at(ch, y, 0), acc = 0.0;
                for (int xx = 0; xx < w; ++xx) {
                    double g = n.grad.at(ch, y, xx);
                    if (x->requires_grad) x->g().at(ch, y, xx) += g * av;
                    acc += g * x->value.at(ch, y, xx);
                }
                if (a->requires_grad) a->g().at(ch, y, 0) += acc;
            }
    });
}

Var bmul_rows(const Var& x, const Var& a) {
    const int c = x->value.channels(), h = x->value.height(),
              w = x->value.width();
    if (a->value.channels() != c || a->value.height() != 1 ||
        a->value.width() != w)
        throw std::runtime_error("bmul_rows: shape mismatch");
    Tensor out = x->value;
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
                out.at(ch, y, xx) *= a->value.at(ch, 0, xx);
    return make_node(std::move(out), {x, a}, [x, a, c, h, w](Node& n) {
        for (int ch = 0; ch < c; ++ch)
            for (int xx = 0; xx < w; ++xx) {
                double av = a->value.at(ch, 0, xx), acc = 0.0;
                for (int y = 0; y < h; ++y) {
                    double g = n.grad.at(ch, y, xx);
                    if (x->requires_grad) x->g().at(ch, y, xx) += g * av;
                    acc += g * x->value.at(ch, y, xx);
                }
                if (a->requires_grad) a->g().at(ch, 0, xx) += acc;
            }
    });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    const int cin = x->value.channels(), h = x->value.height(),
              win = x->value.width();
    const int cout = w->value.dim(0), k = w->value.dim(2);
    if (w->value.dim(1) != cin)
        throw std::runtime_error("conv2d: channel mismatch");
    const int oh = (h + 2 * pad - k) / stride + 1;
    const int ow = (win + 2 * pad - k) / stride + 1;
    Tensor out({cout, oh, ow});
    for (int oc = 0; oc < cout; ++oc) {
        double bias = b->value[oc];
        for (int64_t i = 0; i < (int64_t)oh * ow; ++i)
            out.data[(size_t)oc * oh * ow + i] = bias;
        for (int ic = 0; ic < cin; ++ic)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    double wv = w->value.data[(((size_t)oc * cin + ic) * k + ky) * k + kx];
                    if (wv == 0.0) continue;
                    for (int oy = 0; oy < oh; ++oy) {
                        int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= h) continue;
                        const double* xrow = &x->value.data[((size_t)ic * h + iy) * win];
                        double* orow = &out.data[((size_t)oc * oh + oy) * ow];
                        for (int ox = 0; ox < ow; ++ox) {
                            int ix = ox * stride + kx - pad;
                            if (ix < 0 || ix >= win) continue;
                            orow[ox] += wv * xrow[ix];
                        }
                    }
                }
    }
    return make_node(std::move(out), {x, w, b},
                     [x, w, b, stride, pad, cin, h, win, cout, k, oh,
                      ow](Node& n) {
        Tensor* gx = x->requires_grad ? &x->g() : nullptr;
        Tensor* gw = w->requires_grad ? &w->g() : nullptr;
        Tensor* gb = b->requires_grad ? &b->g() : nullptr;
        for (int oc = 0; oc < cout; ++oc) {
            if (gb) {
                double acc = 0.0;
                for (int64_t i = 0; i < (int64_t)oh * ow; ++i)
                    acc += n.grad.data[(size_t)oc * oh * ow + i];
                (*gb)[oc] += acc;
            }
            if (!gx && !gw) continue;
            for (int ic = 0; ic < cin; ++ic)
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                        size_t wi = (((size_t)oc * cin + ic) * k + ky) * k + kx;
                        double wv = w->value.data[wi];
                        double gw_acc = 0.0;
                        for (int oy = 0; oy < oh; ++oy) {
                            int iy = oy * stride + ky - pad;
                            if (iy < 0 || iy >= h) continue;
                            const double* grow = &n.grad.data[((size_t)oc * oh + oy) * ow];
                            const double* xrow = &x->value.data[((size_t)ic * h + iy) * win];
                            double* gxrow = gx ? &gx->data[((size_t)ic * h + iy) * win] : nullptr;
                            for (int ox = 0; ox < ow; ++ox) {
                                int ix = ox * stride + kx - pad;
                                if (ix < 0 || ix >= win) continue;
                                double g = grow[ox];
                                gw_acc += g * xrow[ix];
                                if (gxrow) gxrow[ix] += g * wv;
                            }
                        }
                        if (gw) (*gw)[wi] += gw_acc;
                    }
        }
    });
}

Var instance_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
    const int c = x->value.channels(), h = x->value.height(),
              w = x->value.width();
    const int64_t hw = (int64_t)h * w;
    if (gain->value.numel() != c || bias->value.numel() != c)
        throw std::runtime_error("instance_norm: affine param size mismatch");
    Tensor out({c, h, w});
    Tensor xhat({c, h, w});
    std::vector<double> inv_sigma(c);
    for (int ch = 0; ch < c; ++ch) {
        const double* xd = &x->value.data[(size_t)ch * hw];
        double mu = 0.0;
        for (int64_t i = 0; i < hw; ++i) mu += xd[i];
        mu /= (double)hw;
        double var = 0.0;
        for (int64_t i = 0; i < hw; ++i) var += (xd[i] - mu) * (xd[i] - mu);
        var /= (double)hw;
        double is = 1.0 / std::sqrt(var + eps);
        inv_sigma[ch] = is;
        double g = gain->value[ch], bb = bias->value[ch];
        for (int64_t i = 0; i < hw; ++i) {
            double xh = (xd[i] - mu) * is;
            xhat.data[(size_t)ch * hw + i] = xh;
            out.data[(size_t)ch * hw + i] = g * xh + bb;
        }
    }
    return make_node(std::move(out), {x, gain, bias},
                     [x, gain, bias, c, hw, xhat = std::move(xhat),
                      inv_sigma = std::move(inv_sigma)](Node& n) {
        for (int ch = 0; ch < c; ++ch) {
            const double* gd = &n.grad.data[(size_t)ch * hw];
            const double* xh = &xhat.data[(size_t)ch * hw];
            double sum_g = 0.0, sum_gx = 0.0;
            for (int64_t i = 0; i < hw; ++i) {
                sum_g += gd[i];
                sum_gx += gd[i] * xh[i];
            }
            if (gain->requires_grad) gain->g()[ch] += sum_gx;
            if (bias->requires_grad) bias->g()[ch] += sum_g;
            if (x->requires_grad) {
                double* gx = &x->g().data[(size_t)ch * hw];
                double scale = gain->value[ch] * inv_sigma[ch];
                double mg = sum_g / (double)hw, mgx = sum_gx / (double)hw;
                for (int64_t i = 0; i < hw; ++i)
                    gx[i] += scale * (gd[i] - mg - xh[i] * mgx);
            }
        }
    });
}

Var linear(const Var& v, const Var& w, const Var& b) {
    const int in = (int)v->value.numel();
    const int out_dim = w->value.dim(0);
    if (w->value.dim(1) != in || b->value.numel() != out_dim)
        throw std::runtime_error("linear: shape mismatch");
    Tensor out({out_dim});
    for (int o = 0; o < out_dim; ++o) {
        double acc = b->value[o];
        for (int i = 0; i < in; ++i) acc += w->value.at2(o, i) * v->value[i];
        out[o] = acc;
    }
    return make_node(std::move(out), {v, w, b}, [v, w, b, in, out_dim](Node& n) {
        for (int o = 0; o < out_dim; ++o) {
            double g = n.grad[o];
            if (b->requires_grad) b->g()[o] += g;
            for (int i = 0; i < in; ++i) {
                if (w->requires_grad) w->g().at2(o, i) += g * v->value[i];
                if (v->requires_grad) v->g()[i] += g * w->value.at2(o, i);
            }
        }
    });
}

Var global_avg_pool(const Var& x) {
    const int c = x->value.channels();
    const int64_t hw = (int64_t)x->value.height() * x->value.width();
    Tensor out({c});
    for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int64_t i = 0; i < hw; ++i) acc += x->value.data[(size_t)ch * hw + i];
        out[ch] = acc / (double)hw;
    }
    return make_node(std::move(out), {x}, [x, c, hw](Node& n) {
        if (!x->requires_grad) return;
        Tensor& gx = x->g();
        for (int ch = 0; ch < c; ++ch) {
            double g = n.grad[ch] / (double)hw;
            for (int64_t i = 0; i < hw; ++i) gx.data[(size_t)ch * hw + i] += g;
        }
    });
}

Var pool_mean_w(const Var& x) {
    const int c = x->value.channels(), h = x->value.height(),
              w = x->value.width();
    Tensor out({c, h, 1});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y) {
            double acc = 0.0;
            for (int xx = 0; xx < w; ++xx) acc += x->value.at(ch, y, xx);
            out.at(ch, y, 0) = acc / w;
        }
    return make_node(std::move(out), {x}, [x, c, h, w](Node& n) {
        if (!x->requires_grad) return;
        Tensor& gx = x->g();
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y) {
                double g = n.grad.at(ch, y, 0) / w;
                for (int xx = 0; xx < w; ++xx) gx.at(ch, y, xx) += g;
            }
    });
}

Var pool_mean_h(const Var& x) {
    const int c = x->value.channels(), h = x->value.height(),
              w = x->value.width();
    Tensor out({c, 1, w});
    for (int ch = 0; ch < c; ++ch)
        for (int xx = 0; xx < w; ++xx) {
            double acc = 0.0;
            for (int y = 0; y < h; ++y) acc += x->value.at(ch, y, xx);
            out.at(ch, 0, xx) = acc / h;
        }
    return make_node(std::move(out), {x}, [x, c, h, w](Node& n) {
        if (!x->requires_grad) return;
        Tensor& gx = x->g();
        for (int ch = 0; ch < c; ++ch)
            for (int xx = 0; xx < w; ++xx) {
                double g = n.grad.at(ch, 0, xx) / h;
                for (int y = 0; y < h; ++y) gx.at(ch, y, xx) += g;
            }
    });
}

Var concat_channels(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::runtime_error("concat_channels: empty");
    const int h = xs[0]->value.height(), w = xs[0]->value.width();
    int ctot = 0;
    for (const auto& v : xs) {
        if (v->value.height() != h || v->value.width() != w)
            throw std::runtime_error("concat_channels: spatial mismatch");
        ctot += v->value.channels();
    }
    Tensor out({ctot, h, w});
    const int64_t hw = (int64_t)h * w;
    int64_t off = 0;
    for (const auto& v : xs) {
        std::copy(v->value.data.begin(), v->value.data.end(),
                  out.data.begin() + off);
        off += v->value.numel();
    }
    return make_node(std::move(out), xs, [xs, hw](Node& n) {
        int64_t off = 0;
        for (const auto& v : xs) {
            int64_t sz = v->value.numel();
            if (v->requires_grad) {
                Tensor& gv = v->g();
                for (int64_t i = 0; i < sz; ++i) gv[i] += n.grad[off + i];
            }
            off += sz;
        }
        (void)hw;
    });
}

Var slice_channels(const Var& x, int c0, int c1) {
    const int c = x->value.channels(), h = x->value.height(),
              w = x->value.width();
    if (c0 < 0 || c1 > c || c0 >= c1)
        throw std::runtime_error("slice_channels: bad range");
    const int64_t hw = (int64_t)h * w;
    Tensor out({c1 - c0, h, w});
    std::copy(x->value.data.begin() + (int64_t)c0 * hw,
              x->value.data.begin() + (int64_t)c1 * hw, out.data.begin());
    return make_node(std::move(out), {x}, [x, c0, hw](Node& n) {
        if (!x->requires_grad) return;
        Tensor& gx = x->g();
        int64_t off = (int64_t)c0 * hw;
        for (int64_t i = 0; i < n.grad.numel(); ++i) gx[off + i] += n.grad[i];
    });
}

Var resize_bilinear(const Var& x, int out_h, int out_w) {
    const int c = x->value.channels(), h = x->value.height(),
              w = x->value.width();
    // precompute sampling taps so forward and backward agree exactly
    struct Tap {
        int i0, i1;
        double w1;
    };
    auto taps = std::make_shared<std::pair<std::vector<Tap>, std::vector<Tap>>>();
    auto make_taps = [](int in, int out) {
        std::vector<Tap> t(out);
        double s = (double)in / out;
        for (int o = 0; o < out; ++o) {
            double f = (o + 0.5) * s - 0.5;
            int i0 = (int)std::floor(f);
            double frac = f - i0;
            int i1 = std::min(std::max(i0 + 1, 0), in - 1);
            i0 = std::min(std::max(i0, 0), in - 1);
            t[o] = {i0, i1, frac};
        }
        return t;
    };
    taps->first = make_taps(h, out_h);
    taps->second = make_taps(w, out_w);
    Tensor out({c, out_h, out_w});
    for (int ch = 0; ch < c; ++ch)
        for (int oy = 0; oy < out_h; ++oy) {
            const Tap& ty = taps->first[oy];
            for (int ox = 0; ox < out_w; ++ox) {
                const Tap& tx = taps->second[ox];
                double top = x->value.at(ch, ty.i0, tx.i0) * (1 - tx.w1) +
                             x->value.at(ch, ty.i0, tx.i1) * tx.w1;
                double bot = x->value.at(ch, ty.i1, tx.i0) * (1 - tx.w1) +
                             x->value.at(ch, ty.i1, tx.i1) * tx.w1;
                out.at(ch, oy, ox) = top * (1 - ty.w1) + bot * ty.w1;
            }
        }
    return make_node(std::move(out), {x}, [x, c, out_h, out_w, taps](Node& n) {
        if (!x->requires_grad) return;
        Tensor& gx = x->g();
        for (int ch = 0; ch < c; ++ch)
            for (int oy = 0; oy < out_h; ++oy) {
                const Tap& ty = taps->first[oy];
                for (int ox = 0; ox < out_w; ++ox) {
                    const Tap& tx = taps->second[ox];
                    double g = n.grad.at(ch, oy, ox);
                    gx.at(ch, ty.i0, tx.i0) += g * (1 - ty.w1) * (1 - tx.w1);
                    gx.at(ch, ty.i0, tx.i1) += g * (1 - ty.w1) * tx.w1;
                    gx.at(ch, ty.i1, tx.i0) += g * ty.w1 * (1 - tx.w1);
                    gx.at(ch, ty.i1, tx.i1) += g * ty.w1 * tx.w1;
                }
            }
    });
}

Var gather_hw(const Var& x, const IndexMap& map) {
    const int c = x->value.channels();
    const int64_t in_hw = (int64_t)x->value.height() * x->value.width();
    const int64_t out_hw = (int64_t)map.out_h * map.out_w;
    if ((int64_t)map.src.size() != out_hw)
        throw std::runtime_error("gather_hw: index map size mismatch");
    auto src = std::make_shared<std::vector<int>>(map.src);
    Tensor out({c, map.out_h, map.out_w});
    for (int ch = 0; ch < c; ++ch)
        for (int64_t i = 0; i < out_hw; ++i)
            out.data[(size_t)ch * out_hw + i] =
                x->value.data[(size_t)ch * in_hw + (*src)[i]];
    return make_node(std::move(out), {x}, [x, c, in_hw, out_hw, src](Node& n) {
        if (!x->requires_grad) return;
        Tensor& gx = x->g();
        for (int ch = 0; ch < c; ++ch)
            for (int64_t i = 0; i < out_hw; ++i)
                gx.data[(size_t)ch * in_hw + (*src)[i]] +=
                    n.grad.data[(size_t)ch * out_hw + i];
    });
}

Var filter2d_fixed(const Var& x, const Tensor& kernel) {
    const int c = x->value.channels(), h = x->value.height(),
              w = x->value.width();
    const int k = kernel.dim(0), r = k / 2;
    auto ker = std::make_shared<Tensor>(kernel);
    Tensor out({c, h, w});
    auto clampi = [](int v, int lo, int hi) {
        return v < lo ? lo : (v > hi ? hi : v);
    };
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
                double acc = 0.0;
                for (int ky = 0; ky < k; ++ky) {
                    int sy = clampi(y + ky - r, 0, h - 1);
                    for (int kx = 0; kx < k; ++kx) {
                        int sx = clampi(xx + kx - r, 0, w - 1);
                        acc += ker->at2(ky, kx) * x->value.at(ch, sy, sx);
                    }
                }
                out.at(ch, y, xx) = acc;
            }
    return make_node(std::move(out), {x}, [x, c, h, w, k, r, ker](Node& n) {
        if (!x->requires_grad) return;
        auto clampi = [](int v, int lo, int hi) {
            return v < lo ? lo : (v > hi ? hi : v);
        };
        Tensor& gx = x->g();
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx) {
                    double g = n.grad.at(ch, y, xx);
                    for (int ky = 0; ky < k; ++ky) {
                        int sy = clampi(y + ky - r, 0, h - 1);
                        for (int kx = 0; kx < k; ++kx) {
                            int sx = clampi(xx + kx - r, 0, w - 1);
                            gx.at(ch, sy, sx) += g * ker->at2(ky, kx);
                        }
                    }
                }
    });
}

Var mean_all(const Var& x) {
    const int64_t n = x->value.numel();
    Tensor out = Tensor::scalar(x->value.sum() / (double)n);
    return make_node(std::move(out), {x}, [x, n](Node& nd) {
        if (!x->requires_grad) return;
        double g = nd.grad[0] / (double)n;
        Tensor& gx = x->g();
        for (int64_t i = 0; i < n; ++i) gx[i] += g;
    });
}

Var sum_all(const Var& x) {
    Tensor out = Tensor::scalar(x->value.sum());
    return make_node(std::move(out), {x}, [x](Node& nd) {
        if (!x->requires_grad) return;
        double g = nd.grad[0];
        Tensor& gx = x->g();
        for (int64_t i = 0; i < x->value.numel(); ++i) gx[i] += g;
    });
}

Var masked_mean(const Var& x, const Tensor& mask, double denom_eps) {
    if (!x->value.same_shape(mask))
        throw std::runtime_error("masked_mean: mask shape mismatch");
    auto m = std::make_shared<Tensor>(mask);
    double msum = mask.sum();
    double denom = msum + denom_eps;
    double acc = 0.0;
    for (int64_t i = 0; i < mask.numel(); ++i) acc += x->value[i] * mask[i];
    Tensor out = Tensor::scalar(acc / denom);
    return make_node(std::move(out), {x}, [x, m, denom](Node& nd) {
        if (!x->requires_grad) return;
        double g = nd.grad[0] / denom;
        Tensor& gx = x->g();
        for (int64_t i = 0; i < m->numel(); ++i) gx[i] += g * (*m)[i];
    });
}

Var bce_logits_masked(const Var& logits, const Tensor& target,
                      const Tensor& mask) {
    if (!logits->value.same_shape(target) || !logits->value.same_shape(mask))
        throw std::runtime_error("bce_logits_masked: shape mismatch");
    auto t = std::make_shared<Tensor>(target);
    auto m = std::make_shared<Tensor>(mask);
    int64_t count = 0;
    double acc = 0.0;
    for (int64_t i = 0; i < mask.numel(); ++i) {
        if (mask[i] <= 0.0) continue;
        ++count;
        double xv = logits->value[i];
        // softplus(x) - t*x, computed stably
        double sp = std::max(xv, 0.0) + std::log1p(std::exp(-std::fabs(xv)));
        acc += sp - target[i] * xv;
    }
    Tensor out = Tensor::scalar(count ? acc / (double)count : 0.0);
    return make_node(std::move(out), {logits}, [logits, t, m, count](Node& nd) {
        if (!logits->requires_grad || count == 0) return;
        double g = nd.grad[0] / (double)count;
        Tensor& gx = logits->g();
        for (int64_t i = 0; i < m->numel(); ++i) {
            if ((*m)[i] <= 0.0) continue;
            double s = 1.0 / (1.0 + std::exp(-logits->value[i]));
            gx[i] += g * (s - (*t)[i]);
        }
    });
}

Var entropy_map(const Var& p) {
    Tensor out = p->value;
    for (int64_t i = 0; i < out.numel(); ++i) {
        double v = out[i];
        out[i] = (v <= 0.0 || v >= 1.0)
                     ? 0.0
                     : -(v * std::log(v) + (1.0 - v) * std::log(1.0 - v));
    }
    return make_node(std::move(out), {p}, [p](Node& nd) {
        if (!p->requires_grad) return;
        Tensor& gp = p->g();
        for (int64_t i = 0; i < nd.grad.numel(); ++i) {
            double v = p->value[i];
            if (v <= 0.0 || v >= 1.0) continue;
            gp[i] += nd.grad[i] * std::log((1.0 - v) / v);
        }
    });
}

Var pairwise_affinity(const Var& p, const std::shared_ptr<PairwiseKernel>& k) {
    const int h = p->value.height(), w = p->value.width();
    if (p->value.channels() != 1)
        throw std::runtime_error("pairwise_affinity: expects one channel");
    double acc = 0.0;
    for (size_t oi = 0; oi < k->offsets.size(); ++oi) {
        auto [dy, dx] = k->offsets[oi];
        const Tensor& wmap = k->weights[oi];
        for (int y = 0; y < h; ++y) {
            int jy = y + dy;
            if (jy < 0 || jy >= h) continue;
            for (int x = 0; x < w; ++x) {
                int jx = x + dx;
                if (jx < 0 || jx >= w) continue;
                acc += wmap.at(0, y, x) *
                       std::fabs(p->value.at(0, y, x) - p->value.at(0, jy, jx));
            }
        }
    }
    Tensor out = Tensor::scalar(k->pair_count > 0 ? acc / k->pair_count : 0.0);
    return make_node(std::move(out), {p}, [p, k, h, w](Node& nd) {
        if (!p->requires_grad || k->pair_count <= 0) return;
        double g = nd.grad[0] / k->pair_count;
        Tensor& gp = p->g();
        for (size_t oi = 0; oi < k->offsets.size(); ++oi) {
            auto [dy, dx] = k->offsets[oi];
            const Tensor& wmap = k->weights[oi];
            for (int y = 0; y < h; ++y) {
                int jy = y + dy;
                if (jy < 0 || jy >= h) continue;
                for (int x = 0; x < w; ++x) {
                    int jx = x + dx;
                    if (jx < 0 || jx >= w) continue;
                    double diff = p->value.at(0, y, x) - p->value.at(0, jy, jx);
                    double s = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
                    double gv = g * wmap.at(0, y, x) * s;
                    gp.at(0, y, x) += gv;
                    gp.at(0, jy, jx) -= gv;
                }
            }
        }
    });
}

} // namespace scaf::ad

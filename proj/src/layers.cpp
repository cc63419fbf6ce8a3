#include "mvd/layers.hpp"

#include <cmath>
#include <cstring>

namespace mvd {

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::linear: return "linear";
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
    }
    return "?";
}

Activation parse_activation(const std::string& s) {
    if (s == "linear") return Activation::linear;
    if (s == "relu") return Activation::relu;
    if (s == "sigmoid") return Activation::sigmoid;
    throw InvalidArgument("unknown activation '" + s + "'");
}

void apply_activation(Tensor& t, Activation act) {
    switch (act) {
        case Activation::linear: return;
        case Activation::relu:
            for (float& v : t.values()) v = v > 0.0f ? v : 0.0f;
            return;
        case Activation::sigmoid:
            for (float& v : t.values()) v = 1.0f / (1.0f + std::exp(-v));
            return;
    }
}

void apply_activation_grad(Tensor& dy, const Tensor& y, Activation act) {
    switch (act) {
        case Activation::linear: return;
        case Activation::relu: {
            const float* yv = y.data();
            float* g = dy.data();
            for (long i = 0; i < dy.size(); ++i)
                if (yv[i] <= 0.0f) g[i] = 0.0f;
            return;
        }
        case Activation::sigmoid: {
            const float* yv = y.data();
            float* g = dy.data();
            for (long i = 0; i < dy.size(); ++i) g[i] *= yv[i] * (1.0f - yv[i]);
            return;
        }
    }
}

Tensor softmax(const Tensor& logits) {
    if (logits.rank() != 2) throw ShapeError("softmax expects (N, K) logits");
    Tensor out = logits;
    const long n = logits.dim(0), k = logits.dim(1);
    for (long r = 0; r < n; ++r) {
        float* row = out.row(r);
        float mx = row[0];
        for (long j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (long j = 0; j < k; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        const float inv = static_cast<float>(1.0 / sum);
        for (long j = 0; j < k; ++j) row[j] *= inv;
    }
    return out;
}

namespace {

/// Glorot-uniform fill: limit = sqrt(6 / (fan_in + fan_out)).
void glorot_init(Tensor& w, long fan_in, long fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (float& v : w.values()) v = static_cast<float>(rng.uniform(-limit, limit));
}

}  // namespace

// ---------------------------------------------------------------------------
// Dense

DenseLayer::DenseLayer(long in, long out, Activation act, Rng& init_rng) : in_(in), out_(out), act_(act) {
    weight_ = {"w", Tensor({in, out}), Tensor({in, out})};
    bias_ = {"b", Tensor({out}), Tensor({out})};
    glorot_init(weight_.value, in, out, init_rng);
}

Tensor DenseLayer::forward(const Tensor& x, bool) {
    const long n = x.dim(0);
    if (x.row_size() != in_)
        throw ShapeError("dense input width " + std::to_string(x.row_size()) + " != " + std::to_string(in_));
    x_cache_ = x;
    Tensor y({n, out_});
    matmul(x.data(), weight_.value.data(), y.data(), n, in_, out_);
    for (long r = 0; r < n; ++r) {
        float* row = y.row(r);
        for (long j = 0; j < out_; ++j) row[j] += bias_.value[j];
    }
    apply_activation(y, act_);
    y_cache_ = y;
    return y;
}

Tensor DenseLayer::backward(const Tensor& dy, bool want_param_grads) {
    const long n = dy.dim(0);
    Tensor dz = dy;
    apply_activation_grad(dz, y_cache_, act_);
    if (want_param_grads) {
        matmul_at_acc(x_cache_.data(), dz.data(), weight_.grad.data(), in_, n, out_);
        for (long r = 0; r < n; ++r) {
            const float* row = dz.row(r);
            for (long j = 0; j < out_; ++j) bias_.grad[j] += row[j];
        }
    }
    Tensor dx({n, in_});
    matmul_bt(dz.data(), weight_.value.data(), dx.data(), n, out_, in_);
    return dx;
}

// ---------------------------------------------------------------------------
// im2col / col2im (channels-last)

void im2col(const float* x, long batch, const ConvGeometry& g, float* cols) {
    const long kk = g.kernel, c = g.in_c;
    const long col_w = kk * kk * c;
    for (long n = 0; n < batch; ++n) {
        const float* xn = x + n * g.in_h * g.in_w * c;
        float* cn = cols + n * g.out_h * g.out_w * col_w;
        for (long oy = 0; oy < g.out_h; ++oy) {
            for (long ox = 0; ox < g.out_w; ++ox) {
                float* dst = cn + (oy * g.out_w + ox) * col_w;
                const long iy0 = oy * g.stride - g.pad;
                const long ix0 = ox * g.stride - g.pad;
                for (long ky = 0; ky < kk; ++ky) {
                    const long iy = iy0 + ky;
                    for (long kx = 0; kx < kk; ++kx) {
                        const long ix = ix0 + kx;
                        float* cell = dst + (ky * kk + kx) * c;
                        if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) {
                            std::memset(cell, 0, sizeof(float) * static_cast<size_t>(c));
                        } else {
                            std::memcpy(cell, xn + (iy * g.in_w + ix) * c, sizeof(float) * static_cast<size_t>(c));
                        }
                    }
                }
            }
        }
    }
}

void col2im(const float* cols, long batch, const ConvGeometry& g, float* x) {
    const long kk = g.kernel, c = g.in_c;
    const long col_w = kk * kk * c;
    std::memset(x, 0, sizeof(float) * static_cast<size_t>(batch * g.in_h * g.in_w * c));
    for (long n = 0; n < batch; ++n) {
        float* xn = x + n * g.in_h * g.in_w * c;
        const float* cn = cols + n * g.out_h * g.out_w * col_w;
        for (long oy = 0; oy < g.out_h; ++oy) {
            for (long ox = 0; ox < g.out_w; ++ox) {
                const float* src = cn + (oy * g.out_w + ox) * col_w;
                const long iy0 = oy * g.stride - g.pad;
                const long ix0 = ox * g.stride - g.pad;
                for (long ky = 0; ky < kk; ++ky) {
                    const long iy = iy0 + ky;
                    if (iy < 0 || iy >= g.in_h) continue;
                    for (long kx = 0; kx < kk; ++kx) {
                        const long ix = ix0 + kx;
                        if (ix < 0 || ix >= g.in_w) continue;
                        float* cell = xn + (iy * g.in_w + ix) * c;
                        const float* s = src + (ky * kk + kx) * c;
                        for (long ch = 0; ch < c; ++ch) cell[ch] += s[ch];
                    }
                }
            }
        }
    }
}

namespace {

ConvGeometry make_geometry(Shape3 in, long kernel, long stride, bool same_pad, const char* what) {
    ConvGeometry g;
    g.in_h = in[0];
    g.in_w = in[1];
    g.in_c = in[2];
    g.kernel = kernel;
    g.stride = stride;
    if (same_pad) {
        g.out_h = (in[0] + stride - 1) / stride;
        g.out_w = (in[1] + stride - 1) / stride;
        g.pad = ((g.out_h - 1) * stride + kernel - in[0]) / 2;
        if (g.pad < 0) g.pad = 0;
    } else {
        if (in[0] < kernel || in[1] < kernel)
            throw ArchitectureError(std::string(what) + ": kernel " + std::to_string(kernel) + " exceeds input " +
                                    std::to_string(in[0]) + "x" + std::to_string(in[1]));
        g.out_h = (in[0] - kernel) / stride + 1;
        g.out_w = (in[1] - kernel) / stride + 1;
        g.pad = 0;
    }
    return g;
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2D

Conv2DLayer::Conv2DLayer(Shape3 in, long filters, long kernel, long stride, bool same_pad, Activation act, Rng& init_rng)
    : geo_(make_geometry(in, kernel, stride, same_pad, "conv")), filters_(filters), act_(act) {
    const long fan_in = kernel * kernel * in[2];
    weight_ = {"w", Tensor({fan_in, filters}), Tensor({fan_in, filters})};
    bias_ = {"b", Tensor({filters}), Tensor({filters})};
    glorot_init(weight_.value, fan_in, filters, init_rng);
}

Tensor Conv2DLayer::forward(const Tensor& x, bool) {
    const long n = x.dim(0);
    if (x.row_size() != geo_.in_h * geo_.in_w * geo_.in_c)
        throw ShapeError("conv input mismatch: got " + shape_string(x.shape()));
    batch_cache_ = n;
    const long rows = n * geo_.out_h * geo_.out_w;
    const long col_w = geo_.kernel * geo_.kernel * geo_.in_c;
    col_cache_ = Tensor({rows, col_w});
    im2col(x.data(), n, geo_, col_cache_.data());
    Tensor y({n, geo_.out_h, geo_.out_w, filters_});
    matmul(col_cache_.data(), weight_.value.data(), y.data(), rows, col_w, filters_);
    float* yd = y.data();
    for (long r = 0; r < rows; ++r)
        for (long f = 0; f < filters_; ++f) yd[r * filters_ + f] += bias_.value[f];
    apply_activation(y, act_);
    y_cache_ = y;
    return y;
}

Tensor Conv2DLayer::backward(const Tensor& dy, bool want_param_grads) {
    const long n = batch_cache_;
    const long rows = n * geo_.out_h * geo_.out_w;
    const long col_w = geo_.kernel * geo_.kernel * geo_.in_c;
    Tensor dz = dy;
    apply_activation_grad(dz, y_cache_, act_);
    if (want_param_grads) {
        matmul_at_acc(col_cache_.data(), dz.data(), weight_.grad.data(), col_w, rows, filters_);
        const float* dzd = dz.data();
        for (long r = 0; r < rows; ++r)
            for (long f = 0; f < filters_; ++f) bias_.grad[f] += dzd[r * filters_ + f];
    }
    Tensor dcols({rows, col_w});
    matmul_bt(dz.data(), weight_.value.data(), dcols.data(), rows, filters_, col_w);
    Tensor dx({n, geo_.in_h, geo_.in_w, geo_.in_c});
    col2im(dcols.data(), n, geo_, dx.data());
    return dx;
}

// ---------------------------------------------------------------------------
// ConvT2D

ConvT2DLayer::ConvT2DLayer(Shape3 in, long filters, long kernel, long stride, long pad, Activation act, Rng& init_rng)
    : in_(in), filters_(filters), act_(act) {
    out_h_ = (in[0] - 1) * stride + kernel - 2 * pad;
    out_w_ = (in[1] - 1) * stride + kernel - 2 * pad;
    if (out_h_ < 1 || out_w_ < 1) throw ArchitectureError("deconv collapses spatial dims");
    // The adjoint convolution runs over the *output* grid and produces the
    // input grid, which is exactly how the forward pass is computed.
    adjoint_.in_h = out_h_;
    adjoint_.in_w = out_w_;
    adjoint_.in_c = filters;
    adjoint_.kernel = kernel;
    adjoint_.stride = stride;
    adjoint_.pad = pad;
    adjoint_.out_h = in[0];
    adjoint_.out_w = in[1];

    const long fan_in = in[2];
    const long cols = kernel * kernel * filters;
    weight_ = {"w", Tensor({fan_in, cols}), Tensor({fan_in, cols})};
    bias_ = {"b", Tensor({filters}), Tensor({filters})};
    glorot_init(weight_.value, fan_in, filters * kernel * kernel, init_rng);
}

Tensor ConvT2DLayer::forward(const Tensor& x, bool) {
    const long n = x.dim(0);
    if (x.row_size() != flat_size(in_)) throw ShapeError("deconv input mismatch: got " + shape_string(x.shape()));
    x_cache_ = x;
    const long rows = n * in_[0] * in_[1];
    const long col_w = adjoint_.kernel * adjoint_.kernel * filters_;
    Tensor cols({rows, col_w});
    matmul(x.data(), weight_.value.data(), cols.data(), rows, in_[2], col_w);
    Tensor y({n, out_h_, out_w_, filters_});
    col2im(cols.data(), n, adjoint_, y.data());
    float* yd = y.data();
    const long cells = n * out_h_ * out_w_;
    for (long r = 0; r < cells; ++r)
        for (long f = 0; f < filters_; ++f) yd[r * filters_ + f] += bias_.value[f];
    apply_activation(y, act_);
    y_cache_ = y;
    return y;
}

Tensor ConvT2DLayer::backward(const Tensor& dy, bool want_param_grads) {
    const long n = dy.dim(0);
    Tensor dz = dy;
    apply_activation_grad(dz, y_cache_, act_);
    const long rows = n * in_[0] * in_[1];
    const long col_w = adjoint_.kernel * adjoint_.kernel * filters_;
    Tensor cols({rows, col_w});
    im2col(dz.data(), n, adjoint_, cols.data());
    if (want_param_grads) {
        matmul_at_acc(x_cache_.data(), cols.data(), weight_.grad.data(), in_[2], rows, col_w);
        const float* dzd = dz.data();
        const long cells = n * out_h_ * out_w_;
        for (long r = 0; r < cells; ++r)
            for (long f = 0; f < filters_; ++f) bias_.grad[f] += dzd[r * filters_ + f];
    }
    Tensor dx({n, in_[0], in_[1], in_[2]});
    matmul_bt(cols.data(), weight_.value.data(), dx.data(), rows, col_w, in_[2]);
    return dx;
}

// ---------------------------------------------------------------------------
// MaxPool

MaxPool2DLayer::MaxPool2DLayer(Shape3 in, long kernel) : in_(in), kernel_(kernel) {
    out_h_ = in[0] / kernel;
    out_w_ = in[1] / kernel;
    if (out_h_ < 1 || out_w_ < 1)
        throw ArchitectureError("maxpool " + std::to_string(kernel) + "x" + std::to_string(kernel) + " on " +
                                std::to_string(in[0]) + "x" + std::to_string(in[1]));
}

Tensor MaxPool2DLayer::forward(const Tensor& x, bool) {
    const long n = x.dim(0), c = in_[2];
    batch_cache_ = n;
    Tensor y({n, out_h_, out_w_, c});
    argmax_.assign(static_cast<size_t>(y.size()), 0);
    for (long b = 0; b < n; ++b) {
        const float* xb = x.row(b);
        float* yb = y.row(b);
        for (long oy = 0; oy < out_h_; ++oy)
            for (long ox = 0; ox < out_w_; ++ox)
                for (long ch = 0; ch < c; ++ch) {
                    float best = -1e30f;
                    long best_at = 0;
                    for (long ky = 0; ky < kernel_; ++ky)
                        for (long kx = 0; kx < kernel_; ++kx) {
                            const long iy = oy * kernel_ + ky, ix = ox * kernel_ + kx;
                            const long at = (iy * in_[1] + ix) * c + ch;
                            if (xb[at] > best) {
                                best = xb[at];
                                best_at = at;
                            }
                        }
                    const long out_at = (oy * out_w_ + ox) * c + ch;
                    yb[out_at] = best;
                    argmax_[static_cast<size_t>(b * y.row_size() + out_at)] = best_at;
                }
    }
    return y;
}

Tensor MaxPool2DLayer::backward(const Tensor& dy, bool) {
    const long n = batch_cache_;
    Tensor dx({n, in_[0], in_[1], in_[2]});
    const long out_row = dy.row_size();
    for (long b = 0; b < n; ++b) {
        const float* gyb = dy.row(b);
        float* gxb = dx.row(b);
        for (long i = 0; i < out_row; ++i) gxb[argmax_[static_cast<size_t>(b * out_row + i)]] += gyb[i];
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Dropout

DropoutLayer::DropoutLayer(Shape3 in, double rate, uint64_t seed) : in_(in), rate_(rate), rng_(seed) {
    if (rate < 0.0 || rate >= 1.0) throw InvalidArgument("dropout rate must be in [0,1)");
}

Tensor DropoutLayer::forward(const Tensor& x, bool training) {
    active_ = training && rate_ > 0.0;
    if (!active_) return x;
    Tensor y = x;
    mask_.resize(static_cast<size_t>(x.size()));
    const float keep_scale = static_cast<float>(1.0 / (1.0 - rate_));
    for (long i = 0; i < x.size(); ++i) {
        const bool keep = rng_.uniform() >= rate_;
        mask_[static_cast<size_t>(i)] = keep ? keep_scale : 0.0f;
        y[i] *= mask_[static_cast<size_t>(i)];
    }
    return y;
}

Tensor DropoutLayer::backward(const Tensor& dy, bool) {
    if (!active_) return dy;
    Tensor dx = dy;
    for (long i = 0; i < dx.size(); ++i) dx[i] *= mask_[static_cast<size_t>(i)];
    return dx;
}

}  // namespace mvd

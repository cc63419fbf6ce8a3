#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "mvd/tensor.hpp"

namespace mvd {

enum class Activation { linear, relu, sigmoid };

std::string activation_name(Activation a);
Activation parse_activation(const std::string& s);

struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
};

/// Spatial extent bookkeeping: flat vectors are carried as (1, 1, D).
using Shape3 = std::array<long, 3>;

inline long flat_size(const Shape3& s) { return s[0] * s[1] * s[2]; }

class Layer {
public:
    virtual ~Layer() = default;
    virtual Shape3 output_shape() const = 0;
    /// x is (N, ...) matching the layer's input shape.
    virtual Tensor forward(const Tensor& x, bool training) = 0;
    /// dy matches forward's output; returns d(loss)/d(input). Param gradients
    /// accumulate into Param::grad only when want_param_grads is set (frozen
    /// models skip that half of the work).
    virtual Tensor backward(const Tensor& dy, bool want_param_grads) = 0;
    virtual std::vector<Param*> params() { return {}; }
};

class DenseLayer final : public Layer {
public:
    DenseLayer(long in, long out, Activation act, Rng& init_rng);
    Shape3 output_shape() const override { return {1, 1, out_}; }
    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& dy, bool want_param_grads) override;
    std::vector<Param*> params() override { return {&weight_, &bias_}; }

private:
    long in_, out_;
    Activation act_;
    Param weight_;  // (in, out)
    Param bias_;    // (out)
    Tensor x_cache_, y_cache_;
};

struct ConvGeometry {
    long in_h = 0, in_w = 0, in_c = 0;
    long kernel = 1, stride = 1, pad = 0;
    long out_h = 0, out_w = 0;
};

class Conv2DLayer final : public Layer {
public:
    Conv2DLayer(Shape3 in, long filters, long kernel, long stride, bool same_pad, Activation act, Rng& init_rng);
    Shape3 output_shape() const override { return {geo_.out_h, geo_.out_w, filters_}; }
    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& dy, bool want_param_grads) override;
    std::vector<Param*> params() override { return {&weight_, &bias_}; }

private:
    ConvGeometry geo_;
    long filters_;
    Activation act_;
    Param weight_;  // (k*k*in_c, filters)
    Param bias_;    // (filters)
    Tensor col_cache_, y_cache_;
    long batch_cache_ = 0;
};

/// Transposed convolution; output is (H-1)*stride + kernel - 2*pad.
class ConvT2DLayer final : public Layer {
public:
    ConvT2DLayer(Shape3 in, long filters, long kernel, long stride, long pad, Activation act, Rng& init_rng);
    Shape3 output_shape() const override { return {out_h_, out_w_, filters_}; }
    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& dy, bool want_param_grads) override;
    std::vector<Param*> params() override { return {&weight_, &bias_}; }

private:
    Shape3 in_;
    long filters_, out_h_, out_w_;
    Activation act_;
    ConvGeometry adjoint_;  // the conv that maps output grid back to input grid
    Param weight_;          // (in_c, k*k*filters)
    Param bias_;
    Tensor x_cache_, y_cache_;
};

class MaxPool2DLayer final : public Layer {
public:
    MaxPool2DLayer(Shape3 in, long kernel);
    Shape3 output_shape() const override { return {out_h_, out_w_, in_[2]}; }
    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& dy, bool want_param_grads) override;

private:
    Shape3 in_;
    long kernel_, out_h_, out_w_;
    std::vector<long> argmax_;
    long batch_cache_ = 0;
};

/// Inverted dropout; identity outside training mode.
class DropoutLayer final : public Layer {
public:
    DropoutLayer(Shape3 in, double rate, uint64_t seed);
    Shape3 output_shape() const override { return in_; }
    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& dy, bool want_param_grads) override;

private:
    Shape3 in_;
    double rate_;
    Rng rng_;
    std::vector<float> mask_;
    bool active_ = false;
};

class ReshapeLayer final : public Layer {
public:
    ReshapeLayer(Shape3 in, Shape3 out) : in_(in), out_(out) {}
    Shape3 output_shape() const override { return out_; }
    Tensor forward(const Tensor& x, bool) override {
        return x.reshaped({x.dim(0), out_[0], out_[1], out_[2]});
    }
    Tensor backward(const Tensor& dy, bool) override {
        return dy.reshaped({dy.dim(0), in_[0], in_[1], in_[2]});
    }

private:
    Shape3 in_, out_;
};

void apply_activation(Tensor& t, Activation act);
/// In place: dy *= act'(y) given post-activation values y.
void apply_activation_grad(Tensor& dy, const Tensor& y, Activation act);

/// Row-wise softmax of (N, K) logits.
Tensor softmax(const Tensor& logits);

void im2col(const float* x, long batch, const ConvGeometry& g, float* cols);
void col2im(const float* cols, long batch, const ConvGeometry& g, float* x);

}  // namespace mvd

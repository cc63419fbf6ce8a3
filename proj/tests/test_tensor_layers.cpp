#include <doctest.h>

#include "mvd/layers.hpp"
#include "mvd/model.hpp"
#include "reference_oracle.hpp"
#include "support.hpp"

using namespace mvd;

TEST_CASE("matmul matches a hand computation") {
    const float a[6] = {1, 2, 3, 4, 5, 6};  // 2x3
    const float b[6] = {7, 8, 9, 10, 11, 12};  // 3x2
    float c[4];
    matmul(a, b, c, 2, 3, 2);
    CHECK(c[0] == doctest::Approx(58));
    CHECK(c[1] == doctest::Approx(64));
    CHECK(c[2] == doctest::Approx(139));
    CHECK(c[3] == doctest::Approx(154));
}

TEST_CASE("derive_eps is a pure function of (seed, id)") {
    Tensor a = derive_eps(42, 7, 16);
    Tensor b = derive_eps(42, 7, 16);
    Tensor c = derive_eps(42, 8, 16);
    CHECK(a.values() == b.values());
    CHECK(a.values() != c.values());
}

TEST_CASE("rng streams are reproducible") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("softmax rows sum to one") {
    Rng rng(5);
    Tensor logits({64, 10});
    rng.fill_normal(logits, 3.0);
    Tensor p = softmax(logits);
    for (long r = 0; r < 64; ++r) {
        double sum = 0.0;
        for (long j = 0; j < 10; ++j) {
            CHECK(p.row(r)[j] >= 0.0f);
            sum += p.row(r)[j];
        }
        CHECK(std::abs(sum - 1.0) < 1e-5);
    }
}

namespace {

/// Forward/backward agreement against the double-precision reference: the
/// float forward must reproduce the reference values, and the analytic
/// gradients must match central differences taken on the reference.
void check_network_gradients(const ArchitectureSpec& spec, uint64_t seed, const Tensor& x) {
    Network net(spec, seed);
    Tensor y = net.forward(x, false);
    double float_sum = 0.0;
    for (float v : y.values()) float_sum += v;
    const double ref_sum = mvd::testing::ref::sum_loss(spec, net.params(), x);
    CHECK(float_sum == doctest::Approx(ref_sum).epsilon(1e-4));

    Tensor dy = Tensor::full(y.shape(), 1.0f);
    mvd::testing::zero_grads(net.params());
    Tensor dx = net.backward(dy, true);

    const double param_err = mvd::testing::max_gradient_error(
        net.params(), [&] { return mvd::testing::ref::sum_loss(spec, net.params(), x); });
    CHECK(param_err < 1e-3);

    Param input{"x", x, dx};
    const double input_err = mvd::testing::max_gradient_error(
        {&input}, [&] { return mvd::testing::ref::sum_loss(spec, net.params(), input.value); });
    CHECK(input_err < 1e-3);
}

}  // namespace

TEST_CASE("dense layer gradients match central differences") {
    ArchitectureSpec spec;
    spec.input = {1, 1, 6};
    spec.dense(4, Activation::sigmoid);
    Tensor x({3, 6});
    Rng rng(9);
    rng.fill_normal(x, 0.5);
    check_network_gradients(spec, 3, x);
}

TEST_CASE("conv layer gradients match central differences") {
    ArchitectureSpec spec;
    spec.input = {5, 5, 2};
    spec.conv(3, 3, 1, false, Activation::sigmoid);
    Tensor x({2, 5, 5, 2});
    Rng rng(10);
    rng.fill_normal(x, 0.5);
    check_network_gradients(spec, 4, x);
}

TEST_CASE("same-padded strided conv composes and backpropagates") {
    ArchitectureSpec spec;
    spec.input = {6, 6, 2};
    spec.conv(4, 2, 2, true, Activation::linear);
    Network probe(spec, 5);
    CHECK(probe.output_shape()[0] == 3);
    Tensor x({2, 6, 6, 2});
    Rng rng(11);
    rng.fill_normal(x, 0.5);
    check_network_gradients(spec, 5, x);
}

TEST_CASE("deconv layers invert the conv geometry and backpropagate") {
    ArchitectureSpec up2;
    up2.input = {3, 3, 2};
    up2.deconv(4, 2, 2, 0, Activation::linear);
    Network probe(up2, 6);
    CHECK(probe.output_shape()[0] == 6);
    CHECK(probe.output_shape()[2] == 4);
    Tensor x({2, 3, 3, 2});
    Rng rng(12);
    rng.fill_normal(x, 0.5);
    check_network_gradients(up2, 6, x);

    ArchitectureSpec same;
    same.input = {4, 4, 3};
    same.deconv(2, 3, 1, 1, Activation::sigmoid);
    Network probe2(same, 7);
    CHECK(probe2.output_shape()[0] == 4);
    Tensor x2({2, 4, 4, 3});
    rng.fill_normal(x2, 0.5);
    check_network_gradients(same, 7, x2);
}

TEST_CASE("gradients flow correctly through pooled stacks") {
    ArchitectureSpec spec;
    spec.input = {6, 6, 1};
    spec.conv(3, 3, 1, false, Activation::sigmoid).maxpool(2).flatten().dense(4, Activation::sigmoid);
    Tensor x({2, 6, 6, 1});
    Rng rng(13);
    rng.fill_normal(x, 0.5);
    check_network_gradients(spec, 8, x);
}

TEST_CASE("maxpool routes gradients to the argmax") {
    MaxPool2DLayer pool({4, 4, 1}, 2);
    Tensor x({1, 4, 4, 1});
    for (long i = 0; i < 16; ++i) x[i] = static_cast<float>(i);
    Tensor y = pool.forward(x, false);
    CHECK(y.size() == 4);
    CHECK(y[0] == 5.0f);
    CHECK(y[3] == 15.0f);
    Tensor dy = Tensor::full(y.shape(), 1.0f);
    Tensor dx = pool.backward(dy, false);
    CHECK(dx[5] == 1.0f);
    CHECK(dx[15] == 1.0f);
    CHECK(dx[0] == 0.0f);
}

TEST_CASE("dropout is identity at inference and an unbiased mask in training") {
    DropoutLayer drop({1, 1, 1000}, 0.25, 77);
    Tensor x = Tensor::full({2, 1000}, 1.0f);
    Tensor eval_out = drop.forward(x, false);
    CHECK(eval_out.values() == x.values());

    Tensor train_out = drop.forward(x, true);
    long zeros = 0;
    double sum = 0.0;
    for (float v : train_out.values()) {
        if (v == 0.0f) {
            ++zeros;
        } else {
            CHECK(v == doctest::Approx(1.0f / 0.75f));
        }
        sum += v;
    }
    CHECK(zeros > 300);
    CHECK(zeros < 700);
    CHECK(sum / train_out.size() == doctest::Approx(1.0).epsilon(0.1));
}

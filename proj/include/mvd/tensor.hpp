#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "mvd/errors.hpp"

namespace mvd {

/// Dense row-major float32 tensor. The leading axis is the batch axis by
/// convention; feature maps are stored channels-last as (N, H, W, C).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<long> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<size_t>(count(shape_)), 0.0f);
    }
    Tensor(std::vector<long> shape, std::vector<float> values) : shape_(std::move(shape)), data_(std::move(values)) {
        if (static_cast<long>(data_.size()) != count(shape_))
            throw ShapeError("tensor value count does not match shape");
    }

    static Tensor zeros(std::vector<long> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<long> shape, float v) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }
    static Tensor scalar(float v) { return Tensor({1}, {v}); }

    const std::vector<long>& shape() const { return shape_; }
    long rank() const { return static_cast<long>(shape_.size()); }
    long dim(long i) const { return shape_.at(static_cast<size_t>(i)); }
    long size() const { return static_cast<long>(data_.size()); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    float& operator[](long i) { return data_[static_cast<size_t>(i)]; }
    float operator[](long i) const { return data_[static_cast<size_t>(i)]; }

    std::vector<float>& values() { return data_; }
    const std::vector<float>& values() const { return data_; }

    /// Number of elements per batch row (product of all non-leading dims).
    long row_size() const {
        if (shape_.empty()) return 0;
        return size() / shape_[0];
    }
    float* row(long n) { return data() + n * row_size(); }
    const float* row(long n) const { return data() + n * row_size(); }

    /// Reinterpret the element layout under a new shape; element count must match.
    Tensor reshaped(std::vector<long> shape) const {
        if (count(shape) != size()) throw ShapeError("reshape changes element count");
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = data_;
        return t;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    static long count(const std::vector<long>& shape) {
        long n = shape.empty() ? 0 : 1;
        for (long d : shape) {
            if (d < 0) throw ShapeError("negative dimension");
            n *= d;
        }
        return n;
    }

private:
    std::vector<long> shape_;
    std::vector<float> data_;
};

std::string shape_string(const std::vector<long>& shape);

bool all_finite(const Tensor& t);

/// C = A(m×k) * B(k×n), row-major, via the Eigen kernel.
void matmul(const float* a, const float* b, float* c, long m, long k, long n);
/// C = A(m×k) * B(n×k)^T
void matmul_bt(const float* a, const float* b, float* c, long m, long k, long n);
/// C = A(k×m)^T * B(k×n)
void matmul_at(const float* a, const float* b, float* c, long m, long k, long n);
/// C += A(k×m)^T * B(k×n)
void matmul_at_acc(const float* a, const float* b, float* c, long m, long k, long n);

/// Deterministic generator: fixed engine + explicit Box-Muller so streams do
/// not depend on the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed == 0 ? 0x9e3779b97f4a7c15ULL : seed) {}

    uint64_t next_u64() {
        // splitmix64
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    long uniform_int(long n) { return static_cast<long>(next_u64() % static_cast<uint64_t>(n)); }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 1e-300) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586477 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    void fill_normal(Tensor& t, double stddev = 1.0) {
        for (float& v : t.values()) v = static_cast<float>(normal() * stddev);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(next_u64() % i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

/// Stable per-request noise: the same (seed, request id) always yields the
/// same draw, independent of call order. Used by the encoder service, the
/// evaluation-subset filter and the in-process pipeline so that their
/// sampled latents agree.
Tensor derive_eps(uint64_t session_seed, uint64_t request_id, long dim);

}  // namespace mvd

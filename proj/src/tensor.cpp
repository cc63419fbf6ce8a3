#include "mvd/tensor.hpp"

#include <Eigen/Core>

#include <cmath>
#include <sstream>

namespace mvd {

namespace {
using MatMap = Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
}  // namespace

std::string shape_string(const std::vector<long>& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ")";
    return os.str();
}

bool all_finite(const Tensor& t) {
    for (float v : t.values())
        if (!std::isfinite(v)) return false;
    return true;
}

void matmul(const float* a, const float* b, float* c, long m, long k, long n) {
    ConstMatMap A(a, m, k), B(b, k, n);
    MatMap C(c, m, n);
    C.noalias() = A * B;
}

void matmul_bt(const float* a, const float* b, float* c, long m, long k, long n) {
    ConstMatMap A(a, m, k), B(b, n, k);
    MatMap C(c, m, n);
    C.noalias() = A * B.transpose();
}

void matmul_at(const float* a, const float* b, float* c, long m, long k, long n) {
    ConstMatMap A(a, k, m), B(b, k, n);
    MatMap C(c, m, n);
    C.noalias() = A.transpose() * B;
}

void matmul_at_acc(const float* a, const float* b, float* c, long m, long k, long n) {
    ConstMatMap A(a, k, m), B(b, k, n);
    MatMap C(c, m, n);
    C.noalias() += A.transpose() * B;
}

Tensor derive_eps(uint64_t session_seed, uint64_t request_id, long dim) {
    // Mix seed and id through one splitmix round each so neighbouring ids
    // give unrelated streams.
    uint64_t mixed = session_seed * 0x9e3779b97f4a7c15ULL + (request_id + 1) * 0xbf58476d1ce4e5b9ULL;
    Rng rng(mixed);
    Tensor eps({dim});
    rng.fill_normal(eps);
    return eps;
}

}  // namespace mvd

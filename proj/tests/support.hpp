#pragma once

#include <cmath>
#include <functional>

#include "mvd/dataset.hpp"
#include "mvd/model.hpp"

namespace mvd::testing {

/// Central-difference gradient oracle. The caller runs its analytic
/// forward+backward beforehand so Param::grad holds the gradients under
/// test; this reperturbs every coordinate and compares. The loss callback
/// should evaluate through the double-precision reference pipeline
/// (reference_oracle.hpp) so the probe is not drowned by single-precision
/// forward rounding. |gradient| values below `floor` are compared
/// absolutely against the floor.
inline double max_gradient_error(const std::vector<Param*>& params, const std::function<double()>& loss,
                                 double eps = 1e-3, double floor = 1e-2) {
    auto probe = [&](Param* p, long i, double step) {
        const float saved = p->value[i];
        const float up_v = saved + static_cast<float>(step);
        const float dn_v = saved - static_cast<float>(step);
        p->value[i] = up_v;
        const double up = loss();
        p->value[i] = dn_v;
        const double down = loss();
        p->value[i] = saved;
        const double numeric = (up - down) / (static_cast<double>(up_v) - static_cast<double>(dn_v));
        const double analytic = p->grad[i];
        const double denom = std::max({std::abs(numeric), std::abs(analytic), floor});
        return std::abs(numeric - analytic) / denom;
    };

    double worst = 0.0;
    for (Param* p : params) {
        for (long i = 0; i < p->value.size(); ++i) {
            double err = probe(p, i, eps);
            // A coordinate whose probe straddles a relu/max kink reports a
            // large mismatch that vanishes as the step shrinks; a wrong
            // gradient does not. Retry suspects with smaller steps.
            if (err > 1e-3) err = std::min(err, probe(p, i, eps / 8.0));
            if (err > 1e-3) err = std::min(err, probe(p, i, eps / 64.0));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

inline void zero_grads(const std::vector<Param*>& params) {
    for (Param* p : params)
        for (float& g : p->grad.values()) g = 0.0f;
}

inline void set_all(const std::vector<Param*>& params, float v) {
    for (Param* p : params)
        for (float& x : p->value.values()) x = v;
}

inline Tensor batch_of(const Dataset& d, long n) {
    std::vector<long> idx;
    for (long i = 0; i < std::min(n, d.size()); ++i) idx.push_back(i);
    return d.gather(idx);
}

inline std::vector<uint8_t> labels_of(const Dataset& d, long n) {
    std::vector<long> idx;
    for (long i = 0; i < std::min(n, d.size()); ++i) idx.push_back(i);
    return d.gather_labels(idx);
}

}  // namespace mvd::testing

#include "mvd/train.hpp"

#include <cmath>
#include <optional>

namespace mvd {

Adam::Adam(std::vector<Param*> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (Param* p : params_) {
        m_.emplace_back(p->value.shape());
        v_.emplace_back(p->value.shape());
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        Param* p = params_[i];
        float* w = p->value.data();
        float* g = p->grad.data();
        float* m = m_[i].data();
        float* v = v_[i].data();
        const long n = p->value.size();
        for (long j = 0; j < n; ++j) {
            m[j] = static_cast<float>(beta1_ * m[j] + (1.0 - beta1_) * g[j]);
            v[j] = static_cast<float>(beta2_ * v[j] + (1.0 - beta2_) * static_cast<double>(g[j]) * g[j]);
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            w[j] -= static_cast<float>(lr_ * mhat / (std::sqrt(vhat) + eps_));
            g[j] = 0.0f;
        }
    }
}

void Adam::zero_grad() {
    for (Param* p : params_)
        for (float& g : p->grad.values()) g = 0.0f;
}

MomentumSgd::MomentumSgd(std::vector<Param*> params, double lr, double momentum)
    : params_(std::move(params)), lr_(lr), momentum_(momentum) {
    velocity_.reserve(params_.size());
    for (Param* p : params_) velocity_.emplace_back(p->value.shape());
}

void MomentumSgd::step() {
    for (size_t i = 0; i < params_.size(); ++i) {
        Param* p = params_[i];
        float* w = p->value.data();
        float* g = p->grad.data();
        float* v = velocity_[i].data();
        const long n = p->value.size();
        for (long j = 0; j < n; ++j) {
            v[j] = static_cast<float>(momentum_ * v[j] - lr_ * g[j]);
            w[j] += v[j];
            g[j] = 0.0f;
        }
    }
}

double softmax_cross_entropy(const Tensor& logits, const std::vector<uint8_t>& labels, Tensor* d_logits) {
    const long n = logits.dim(0), k = logits.dim(1);
    if (n != static_cast<long>(labels.size())) throw ShapeError("logit/label count mismatch");
    Tensor probs = softmax(logits);
    double loss = 0.0;
    for (long r = 0; r < n; ++r) {
        const float p = std::max(probs.row(r)[labels[static_cast<size_t>(r)]], 1e-12f);
        loss -= std::log(static_cast<double>(p));
    }
    loss /= static_cast<double>(n);
    if (d_logits) {
        *d_logits = probs;
        const float inv_n = 1.0f / static_cast<float>(n);
        for (long r = 0; r < n; ++r) {
            float* row = d_logits->row(r);
            row[labels[static_cast<size_t>(r)]] -= 1.0f;
            for (long j = 0; j < k; ++j) row[j] *= inv_n;
        }
    }
    return loss;
}

BatchSampler::BatchSampler(long n, long batch, uint64_t seed) : n_(n), batch_(std::min(batch, n)), rng_(seed) {
    if (n <= 0) throw InvalidArgument("empty sample pool");
    if (batch <= 0) throw InvalidArgument("batch size must be positive");
    reshuffle();
}

void BatchSampler::reshuffle() {
    order_.resize(static_cast<size_t>(n_));
    for (long i = 0; i < n_; ++i) order_[static_cast<size_t>(i)] = i;
    rng_.shuffle(order_);
    at_ = 0;
}

std::vector<long> BatchSampler::next() {
    if (at_ >= n_) reshuffle();
    const long take = std::min(batch_, n_ - at_);
    std::vector<long> idx(order_.begin() + at_, order_.begin() + at_ + take);
    at_ += take;
    return idx;
}

TrainingReport train_classifier(ClassifierModel& model, const Dataset& train, const Dataset* test, long epochs, double lr,
                                long batch_size, uint64_t seed, OptimizerKind optimizer) {
    if (train.size() == 0) throw InvalidArgument("training split is empty");
    if (epochs < 1) throw InvalidArgument("epochs must be >= 1");

    TrainingReport report;
    std::optional<Adam> adam;
    std::optional<MomentumSgd> sgd;
    if (optimizer == OptimizerKind::adam) {
        adam.emplace(model.params(), lr);
    } else {
        sgd.emplace(model.params(), lr);
    }
    BatchSampler sampler(train.size(), batch_size, seed);
    const long per_epoch = sampler.batches_per_epoch();

    for (long epoch = 0; epoch < epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (long it = 0; it < per_epoch; ++it) {
            const auto idx = sampler.next();
            Tensor x = train.gather(idx);
            const auto y = train.gather_labels(idx);
            Tensor logits = model.logits(x, /*training=*/true);
            Tensor dlogits;
            const double loss = softmax_cross_entropy(logits, y, &dlogits);
            if (!std::isfinite(loss)) throw DivergenceError("classifier loss is not finite", epoch);
            model.backward(dlogits, /*want_param_grads=*/true);
            adam ? adam->step() : sgd->step();
            epoch_loss += loss;
            report.per_iteration_loss.push_back(loss);
        }
        report.per_epoch_loss.push_back(epoch_loss / static_cast<double>(per_epoch));
    }
    report.epochs = epochs;
    if (test && test->size() > 0) report.final_test_accuracy = classifier_accuracy(model, *test);
    return report;
}

double classifier_accuracy(ClassifierModel& model, const Dataset& data) {
    const auto preds = model.predict(data.features());
    long hits = 0;
    for (long i = 0; i < data.size(); ++i)
        if (preds[static_cast<size_t>(i)] == data.label_of(i)) ++hits;
    return data.size() ? static_cast<double>(hits) / static_cast<double>(data.size()) : 0.0;
}

}  // namespace mvd

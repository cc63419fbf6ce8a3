#pragma once

#include <functional>

#include "mvd/dataset.hpp"
#include "mvd/model.hpp"

namespace mvd {

/// Adaptive-moment gradient descent over a fixed parameter set. step() applies
/// the accumulated gradients and clears them.
class Adam {
public:
    Adam(std::vector<Param*> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step();
    void zero_grad();
    double lr() const { return lr_; }

private:
    std::vector<Param*> params_;
    std::vector<Tensor> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
};

/// Momentum SGD companion for classifier training, where unconstrained
/// weight growth (and with it the sharp logit landscape of a converged
/// victim) matters; Adam caps per-coordinate drift at lr per step.
class MomentumSgd {
public:
    MomentumSgd(std::vector<Param*> params, double lr, double momentum = 0.9);
    void step();

private:
    std::vector<Param*> params_;
    std::vector<Tensor> velocity_;
    double lr_, momentum_;
};

/// Mean cross-entropy of softmax(logits) against integer labels. d_logits is
/// (softmax - onehot) / N, ready for backward().
double softmax_cross_entropy(const Tensor& logits, const std::vector<uint8_t>& labels, Tensor* d_logits);

struct TrainingReport {
    std::vector<double> per_epoch_loss;
    std::vector<double> per_iteration_loss;
    double final_test_accuracy = -1.0;
    long epochs = 0;
};

enum class OptimizerKind { adam, sgd_momentum };

TrainingReport train_classifier(ClassifierModel& model, const Dataset& train, const Dataset* test, long epochs, double lr,
                                long batch_size, uint64_t seed, OptimizerKind optimizer = OptimizerKind::adam);

double classifier_accuracy(ClassifierModel& model, const Dataset& data);

/// Deterministic minibatch index stream: a fresh seeded shuffle per epoch.
class BatchSampler {
public:
    BatchSampler(long n, long batch, uint64_t seed);
    std::vector<long> next();
    long batches_per_epoch() const { return (n_ + batch_ - 1) / batch_; }

private:
    long n_, batch_, at_ = 0;
    Rng rng_;
    std::vector<long> order_;
    void reshuffle();
};

}  // namespace mvd

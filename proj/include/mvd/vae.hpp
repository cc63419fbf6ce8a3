#pragma once

#include "mvd/dataset.hpp"
#include "mvd/model.hpp"
#include "mvd/train.hpp"

namespace mvd {

/// z = mu + exp(log_var / 2) * eps, elementwise. eps must match (N, D).
Tensor reparameterize(const GaussianPosterior& post, const Tensor& eps);

/// Per-example KL(N(mu, sigma^2) || N(0, I)) = -1/2 sum_j (1 + lv_j - e^lv_j - mu_j^2).
std::vector<double> kl_per_example(const GaussianPosterior& post);
/// Batch mean of the above.
double kl_to_standard_normal(const GaussianPosterior& post);

/// Per-pixel binary cross-entropy against targets in [0,1], summed over
/// pixels and averaged over the batch. Predictions are clamped to
/// [1e-6, 1 - 1e-6] before the logs. d_xhat, when requested, already carries
/// the 1/N batch factor.
double reconstruction_loss(const Tensor& x, const Tensor& x_hat, Tensor* d_xhat = nullptr);

struct VaeLossParts {
    double total = 0.0;
    double kl = 0.0;
    double reconstruction = 0.0;
};

/// Single-sample ELBO estimate of the batch. With want_grads set, parameter
/// gradients accumulate into both models (reconstruction path into the
/// decoder, KL + reconstruction into the encoder).
VaeLossParts vae_loss(EncoderModel& encoder, DecoderModel& decoder, const Tensor& batch, const Tensor& eps,
                      bool want_grads = false, bool training = false);

struct VaeTrainingReport {
    std::vector<double> per_iteration_loss;
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

/// Joint encoder/decoder training; one eps draw per example per step. Marks
/// the decoder vae_trained on success.
VaeTrainingReport train_vae(EncoderModel& encoder, DecoderModel& decoder, const Dataset& data, long vae_iter, double lr,
                            long batch_size, uint64_t seed);

}  // namespace mvd

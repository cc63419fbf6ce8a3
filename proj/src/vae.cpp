#include "mvd/vae.hpp"

#include <cmath>

namespace mvd {

Tensor reparameterize(const GaussianPosterior& post, const Tensor& eps) {
    if (!post.mu.same_shape(post.log_var)) throw ShapeError("posterior mu/log_var shape mismatch");
    if (!eps.same_shape(post.mu))
        throw ShapeError("eps shape " + shape_string(eps.shape()) + " != posterior shape " + shape_string(post.mu.shape()));
    Tensor z = post.mu;
    for (long i = 0; i < z.size(); ++i) z[i] += std::exp(post.log_var[i] * 0.5f) * eps[i];
    return z;
}

std::vector<double> kl_per_example(const GaussianPosterior& post) {
    if (!all_finite(post.mu) || !all_finite(post.log_var)) throw NumericalError("non-finite posterior");
    const long n = post.batch(), d = post.latent_dim();
    std::vector<double> out(static_cast<size_t>(n), 0.0);
    for (long r = 0; r < n; ++r) {
        const float* mu = post.mu.row(r);
        const float* lv = post.log_var.row(r);
        double acc = 0.0;
        for (long j = 0; j < d; ++j)
            acc += 1.0 + static_cast<double>(lv[j]) - std::exp(static_cast<double>(lv[j])) -
                   static_cast<double>(mu[j]) * mu[j];
        out[static_cast<size_t>(r)] = -0.5 * acc;
    }
    return out;
}

double kl_to_standard_normal(const GaussianPosterior& post) {
    const auto per = kl_per_example(post);
    double acc = 0.0;
    for (double v : per) acc += v;
    return per.empty() ? 0.0 : acc / static_cast<double>(per.size());
}

double reconstruction_loss(const Tensor& x, const Tensor& x_hat, Tensor* d_xhat) {
    if (x.size() != x_hat.size() || x.dim(0) != x_hat.dim(0))
        throw ShapeError("reconstruction target/prediction shape mismatch: " + shape_string(x.shape()) + " vs " +
                         shape_string(x_hat.shape()));
    const long n = x.dim(0);
    const long row = x.row_size();
    constexpr float eps_c = 1e-6f;
    double total = 0.0;
    if (d_xhat) *d_xhat = Tensor(x_hat.shape());
    const float inv_n = 1.0f / static_cast<float>(n);
    for (long r = 0; r < n; ++r) {
        const float* xv = x.row(r);
        const float* pv = x_hat.row(r);
        float* gv = d_xhat ? d_xhat->row(r) : nullptr;
        double acc = 0.0;
        for (long i = 0; i < row; ++i) {
            const float p = std::min(1.0f - eps_c, std::max(eps_c, pv[i]));
            const float t = xv[i];
            acc -= static_cast<double>(t) * std::log(static_cast<double>(p)) +
                   (1.0 - static_cast<double>(t)) * std::log(1.0 - static_cast<double>(p));
            if (gv) gv[i] = ((p - t) / (p * (1.0f - p))) * inv_n;
        }
        total += acc;
    }
    return total / static_cast<double>(n);
}

VaeLossParts vae_loss(EncoderModel& encoder, DecoderModel& decoder, const Tensor& batch, const Tensor& eps, bool want_grads,
                      bool training) {
    GaussianPosterior post = encoder.encode(batch, training);
    Tensor z = reparameterize(post, eps);
    Tensor x_hat = decoder.decode(z, training);

    VaeLossParts parts;
    Tensor d_xhat;
    parts.reconstruction = reconstruction_loss(batch.reshaped({batch.dim(0), batch.row_size()}),
                                               x_hat.reshaped({x_hat.dim(0), x_hat.row_size()}),
                                               want_grads ? &d_xhat : nullptr);
    parts.kl = kl_to_standard_normal(post);
    parts.total = parts.kl + parts.reconstruction;

    if (want_grads) {
        const long n = batch.dim(0), d = post.latent_dim();
        Tensor dz = decoder.backward(d_xhat.reshaped(x_hat.shape()), /*want_param_grads=*/true);
        dz = dz.reshaped({n, d});
        Tensor dmu({n, d}), dlv({n, d});
        const float inv_n = 1.0f / static_cast<float>(n);
        for (long r = 0; r < n; ++r) {
            const float* mu = post.mu.row(r);
            const float* lv = post.log_var.row(r);
            const float* ev = eps.row(r);
            const float* dzr = dz.row(r);
            float* gmu = dmu.row(r);
            float* glv = dlv.row(r);
            for (long j = 0; j < d; ++j) {
                const float sigma = std::exp(lv[j] * 0.5f);
                gmu[j] = dzr[j] + mu[j] * inv_n;
                glv[j] = dzr[j] * ev[j] * sigma * 0.5f + 0.5f * (std::exp(lv[j]) - 1.0f) * inv_n;
            }
        }
        encoder.backward(dmu, dlv, /*want_param_grads=*/true);
    }
    return parts;
}

VaeTrainingReport train_vae(EncoderModel& encoder, DecoderModel& decoder, const Dataset& data, long vae_iter, double lr,
                            long batch_size, uint64_t seed) {
    if (vae_iter < 1) throw InvalidArgument("vae_iter must be >= 1");
    if (data.size() == 0) throw InvalidArgument("training split is empty");
    if (decoder.latent_dim() != encoder.latent_dim()) throw ShapeError("encoder/decoder latent widths differ");

    std::vector<Param*> params = encoder.params();
    for (Param* p : decoder.params()) params.push_back(p);
    Adam opt(params, lr);
    BatchSampler sampler(data.size(), batch_size, seed);
    Rng eps_rng(seed ^ 0x7be6fca2151dULL);

    VaeTrainingReport report;
    for (long it = 0; it < vae_iter; ++it) {
        const auto idx = sampler.next();
        Tensor x = data.gather(idx);
        Tensor eps({static_cast<long>(idx.size()), encoder.latent_dim()});
        eps_rng.fill_normal(eps);
        const VaeLossParts parts = vae_loss(encoder, decoder, x, eps, /*want_grads=*/true, /*training=*/true);
        if (!std::isfinite(parts.total)) throw DivergenceError("vae loss is not finite", it);
        opt.step();
        report.per_iteration_loss.push_back(parts.total);
    }
    report.initial_loss = report.per_iteration_loss.front();
    report.final_loss = report.per_iteration_loss.back();
    if (decoder.stage() == DecoderStage::fresh) decoder.set_stage(DecoderStage::vae_trained);
    return report;
}

}  // namespace mvd

#include "mvd/attack.hpp"

#include <cmath>
#include <cstring>

namespace mvd {

double margin_loss(std::span<const float> logits, long target, double kappa) {
    if (target < 0 || target >= static_cast<long>(logits.size()))
        throw InvalidArgument("target class " + std::to_string(target) + " out of range");
    double best_other = -1e30;
    for (long i = 0; i < static_cast<long>(logits.size()); ++i)
        if (i != target) best_other = std::max(best_other, static_cast<double>(logits[static_cast<size_t>(i)]));
    return std::max(best_other - static_cast<double>(logits[static_cast<size_t>(target)]), -kappa);
}

double nontargeted_margin_loss(std::span<const float> logits, long current, double kappa) {
    if (current < 0 || current >= static_cast<long>(logits.size()))
        throw InvalidArgument("class " + std::to_string(current) + " out of range");
    double best_other = -1e30;
    for (long i = 0; i < static_cast<long>(logits.size()); ++i)
        if (i != current) best_other = std::max(best_other, static_cast<double>(logits[static_cast<size_t>(i)]));
    return std::max(static_cast<double>(logits[static_cast<size_t>(current)]) - best_other, -kappa);
}

double margin_loss_grad(std::span<const float> logits, long target, double kappa, float* grad) {
    if (target < 0 || target >= static_cast<long>(logits.size()))
        throw InvalidArgument("target class " + std::to_string(target) + " out of range");
    long best = -1;
    double best_other = -1e30;
    for (long i = 0; i < static_cast<long>(logits.size()); ++i) {
        if (i == target) continue;
        if (logits[static_cast<size_t>(i)] > best_other) {
            best_other = logits[static_cast<size_t>(i)];
            best = i;
        }
    }
    const double margin = best_other - static_cast<double>(logits[static_cast<size_t>(target)]);
    std::memset(grad, 0, sizeof(float) * logits.size());
    if (margin > -kappa) {
        grad[best] = 1.0f;
        grad[target] = -1.0f;
        return margin;
    }
    return -kappa;
}

double nontargeted_margin_loss_grad(std::span<const float> logits, long current, double kappa, float* grad) {
    if (current < 0 || current >= static_cast<long>(logits.size()))
        throw InvalidArgument("class " + std::to_string(current) + " out of range");
    long best = -1;
    double best_other = -1e30;
    for (long i = 0; i < static_cast<long>(logits.size()); ++i) {
        if (i == current) continue;
        if (logits[static_cast<size_t>(i)] > best_other) {
            best_other = logits[static_cast<size_t>(i)];
            best = i;
        }
    }
    const double margin = static_cast<double>(logits[static_cast<size_t>(current)]) - best_other;
    std::memset(grad, 0, sizeof(float) * logits.size());
    if (margin > -kappa) {
        grad[current] = 1.0f;
        grad[best] = -1.0f;
        return margin;
    }
    return -kappa;
}

// ---------------------------------------------------------------------------
// EncoderHandle

EncoderHandle EncoderHandle::white_box(EncoderModel* encoder, const Dataset* data, uint64_t eps_seed) {
    if (!encoder || !data) throw InvalidArgument("white-box handle needs an encoder and a dataset");
    EncoderHandle h;
    h.enc_ = encoder;
    h.data_ = data;
    h.eps_seed_ = eps_seed;
    return h;
}

EncoderHandle EncoderHandle::black_box(const CalibrationSet* pairs) {
    if (!pairs || pairs->size() == 0) throw InvalidArgument("black-box handle needs calibration pairs");
    EncoderHandle h;
    h.cal_ = pairs;
    return h;
}

long EncoderHandle::latent_dim() const { return cal_ ? cal_->z.dim(1) : enc_->latent_dim(); }
long EncoderHandle::pool_size() const { return cal_ ? cal_->size() : data_->size(); }

std::array<long, 3> EncoderHandle::example_shape() const {
    if (cal_) return {cal_->x.dim(1), cal_->x.dim(2), cal_->x.dim(3)};
    return data_->shape();
}

namespace {

EncoderHandle::Sample gather_pairs(const CalibrationSet& cal, const std::vector<long>& idx) {
    EncoderHandle::Sample s;
    const long d = cal.z.dim(1), row = cal.x.row_size();
    s.z = Tensor({static_cast<long>(idx.size()), d});
    s.x = Tensor({static_cast<long>(idx.size()), row});
    s.labels.resize(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) {
        std::memcpy(s.z.row(static_cast<long>(i)), cal.z.row(idx[i]), sizeof(float) * static_cast<size_t>(d));
        std::memcpy(s.x.row(static_cast<long>(i)), cal.x.row(idx[i]), sizeof(float) * static_cast<size_t>(row));
        s.labels[i] = cal.labels[static_cast<size_t>(idx[i])];
    }
    return s;
}

}  // namespace

EncoderHandle::Sample EncoderHandle::sample(const std::vector<long>& indices) {
    if (cal_) return gather_pairs(*cal_, indices);
    Sample s;
    Tensor batch = data_->gather(indices);
    GaussianPosterior post = enc_->encode(batch);
    Tensor eps({static_cast<long>(indices.size()), enc_->latent_dim()});
    for (size_t i = 0; i < indices.size(); ++i) {
        Tensor e = derive_eps(eps_seed_ ^ 0x5eedULL, draw_counter_++, enc_->latent_dim());
        std::memcpy(eps.row(static_cast<long>(i)), e.data(), sizeof(float) * static_cast<size_t>(e.size()));
    }
    s.z = reparameterize(post, eps);
    s.x = batch.reshaped({batch.dim(0), batch.row_size()});
    s.labels = data_->gather_labels(indices);
    return s;
}

EncoderHandle::Sample EncoderHandle::canonical(const std::vector<long>& indices) {
    if (cal_) return gather_pairs(*cal_, indices);
    Sample s;
    Tensor batch = data_->gather(indices);
    GaussianPosterior post = enc_->encode(batch);
    Tensor eps({static_cast<long>(indices.size()), enc_->latent_dim()});
    for (size_t i = 0; i < indices.size(); ++i) {
        Tensor e = derive_eps(eps_seed_, static_cast<uint64_t>(indices[i]), enc_->latent_dim());
        std::memcpy(eps.row(static_cast<long>(i)), e.data(), sizeof(float) * static_cast<size_t>(e.size()));
    }
    s.z = reparameterize(post, eps);
    s.x = batch.reshaped({batch.dim(0), batch.row_size()});
    s.labels = data_->gather_labels(indices);
    return s;
}

// ---------------------------------------------------------------------------
// Shared objective step

namespace {

struct ObjectiveParts {
    double objective = 0.0;
    double adversarial = 0.0;
    double distortion = 0.0;
};

/// Forward (and optionally backward into the decoder) pass of
/// balance * L_adv + L2 over one batch of latents/targets.
ObjectiveParts objective_step(ClassifierModel& classifier, DecoderModel& decoder, const Tensor& z, const Tensor& x_flat,
                              const AttackConfig& cfg, const std::vector<int>& refs, bool want_grads, bool training) {
    const long n = z.dim(0);
    Tensor x_hat = decoder.decode(z, training);
    Tensor flat_hat = x_hat.reshaped({n, x_hat.row_size()});
    Tensor logits = classifier.logits(x_hat);
    const long k = classifier.class_count();

    ObjectiveParts parts;
    Tensor dlogits({n, k});
    Tensor d_flat({n, flat_hat.row_size()});
    const float inv_n = 1.0f / static_cast<float>(n);

    for (long r = 0; r < n; ++r) {
        std::span<const float> row(logits.row(r), static_cast<size_t>(k));
        double adv;
        if (cfg.targeted()) {
            adv = margin_loss_grad(row, *cfg.target, cfg.confidence, dlogits.row(r));
        } else {
            adv = nontargeted_margin_loss_grad(row, refs[static_cast<size_t>(r)], cfg.confidence, dlogits.row(r));
        }
        double l2 = 0.0;
        const float* xh = flat_hat.row(r);
        const float* xr = x_flat.row(r);
        for (long i = 0; i < flat_hat.row_size(); ++i) {
            const double d = static_cast<double>(xh[i]) - xr[i];
            l2 += d * d;
        }
        l2 = std::sqrt(l2);
        parts.adversarial += adv;
        parts.distortion += l2;
        parts.objective += cfg.balance * adv + l2;
        if (want_grads) {
            float* g = dlogits.row(r);
            const float scale = static_cast<float>(cfg.balance) * inv_n;
            for (long j = 0; j < k; ++j) g[j] *= scale;
            float* gx = d_flat.row(r);
            const float il2 = l2 > 1e-8 ? static_cast<float>(1.0 / l2) * inv_n : 0.0f;
            for (long i = 0; i < flat_hat.row_size(); ++i) gx[i] = (xh[i] - xr[i]) * il2;
        }
    }
    parts.objective /= static_cast<double>(n);
    parts.adversarial /= static_cast<double>(n);
    parts.distortion /= static_cast<double>(n);

    if (want_grads) {
        Tensor dxh_cls = classifier.backward(dlogits, /*want_param_grads=*/false);
        Tensor total = dxh_cls.reshaped({n, d_flat.row_size()});
        for (long i = 0; i < total.size(); ++i) total[i] += d_flat[i];
        decoder.backward(total.reshaped(x_hat.shape()), /*want_param_grads=*/true);
    }
    return parts;
}

std::vector<int> reference_predictions(ClassifierModel& classifier, DecoderModel& benign, EncoderHandle& enc) {
    std::vector<int> refs(static_cast<size_t>(enc.pool_size()));
    const long chunk = 256;
    std::vector<long> idx;
    for (long at = 0; at < enc.pool_size(); at += chunk) {
        idx.clear();
        for (long i = at; i < std::min(enc.pool_size(), at + chunk); ++i) idx.push_back(i);
        auto s = enc.canonical(idx);
        Tensor recon = benign.decode(s.z);
        const auto preds = classifier.predict(recon);
        for (size_t i = 0; i < idx.size(); ++i) refs[static_cast<size_t>(idx[i])] = preds[i];
    }
    return refs;
}

}  // namespace

// ---------------------------------------------------------------------------
// Phase 2

MvdTrainingReport train_mvd(DecoderModel& decoder, EncoderHandle& encoder, ClassifierModel& classifier,
                            const AttackConfig& cfg) {
    cfg.validate();
    if (cfg.adv_iter < 1) throw InvalidArgument("adv_iter must be >= 1 for training");
    if (decoder.stage() == DecoderStage::fresh)
        throw ContractViolation("adversarial training before VAE training: decoder stage is fresh");
    if (encoder.is_black_box() && decoder.stage() != DecoderStage::calibrated &&
        decoder.stage() != DecoderStage::adversarial)
        throw ContractViolation("black-box encoder requires a calibrated decoder, stage is " +
                                decoder_stage_name(decoder.stage()));
    if (encoder.latent_dim() != decoder.latent_dim()) throw ShapeError("encoder/decoder latent widths differ");

    const uint64_t classifier_before = classifier.parameter_digest();

    // Non-targeted runs score against the clean predictions of the benign
    // reconstructions, fixed before any parameter moves.
    DecoderModel benign = decoder.clone();
    std::vector<int> refs;
    if (!cfg.targeted()) refs = reference_predictions(classifier, benign, encoder);

    MvdTrainingReport report;
    Adam opt(decoder.params(), cfg.lr);
    BatchSampler sampler(encoder.pool_size(), cfg.batch, cfg.seed);
    for (long it = 0; it < cfg.adv_iter; ++it) {
        const auto idx = sampler.next();
        auto s = encoder.sample(idx);
        std::vector<int> batch_refs;
        if (!cfg.targeted()) {
            batch_refs.reserve(idx.size());
            for (long i : idx) batch_refs.push_back(refs[static_cast<size_t>(i)]);
        }
        const ObjectiveParts parts =
            objective_step(classifier, decoder, s.z, s.x, cfg, batch_refs, /*want_grads=*/true, /*training=*/true);
        if (!std::isfinite(parts.objective)) throw DivergenceError("adversarial objective is not finite", it);
        opt.step();
        report.objective_curve.push_back(parts.objective);
        report.adversarial_curve.push_back(parts.adversarial);
        report.distortion_curve.push_back(parts.distortion);
    }
    report.iterations = cfg.adv_iter;

    if (classifier.parameter_digest() != classifier_before)
        throw ContractViolation("classifier parameters changed during adversarial training");
    decoder.set_stage(DecoderStage::adversarial);
    return report;
}

double mvd_objective(ClassifierModel& classifier, EncoderModel& encoder, DecoderModel& decoder, const Tensor& batch,
                     const AttackConfig& cfg, std::span<const int> reference_labels, bool want_decoder_grads) {
    cfg.validate();
    const long n = batch.dim(0);
    GaussianPosterior post = encoder.encode(batch);
    Tensor eps({n, encoder.latent_dim()});
    for (long i = 0; i < n; ++i) {
        Tensor e = derive_eps(cfg.seed, static_cast<uint64_t>(i), encoder.latent_dim());
        std::memcpy(eps.row(i), e.data(), sizeof(float) * static_cast<size_t>(e.size()));
    }
    Tensor z = reparameterize(post, eps);
    Tensor x_flat = batch.reshaped({n, batch.row_size()});

    std::vector<int> refs(reference_labels.begin(), reference_labels.end());
    if (!cfg.targeted() && refs.empty()) {
        Tensor recon = decoder.decode(z);
        refs = classifier.predict(recon);
    }
    return objective_step(classifier, decoder, z, x_flat, cfg, refs, want_decoder_grads, false).objective;
}

// ---------------------------------------------------------------------------
// Phase 3

namespace {

void fill_l2(AdversarialBatch& out) {
    const long n = out.originals.dim(0);
    const long row = out.originals.row_size();
    out.l2_vs_original.assign(static_cast<size_t>(n), 0.0);
    const bool with_recon = out.reconstructions.size() == out.originals.size();
    if (with_recon) out.l2_vs_reconstruction.assign(static_cast<size_t>(n), 0.0);
    for (long r = 0; r < n; ++r) {
        const float* adv = out.adversarials.row(r);
        const float* orig = out.originals.row(r);
        double acc = 0.0;
        for (long i = 0; i < row; ++i) {
            const double d = static_cast<double>(adv[i]) - orig[i];
            acc += d * d;
        }
        out.l2_vs_original[static_cast<size_t>(r)] = std::sqrt(acc);
        if (with_recon) {
            const float* rec = out.reconstructions.row(r);
            acc = 0.0;
            for (long i = 0; i < row; ++i) {
                const double d = static_cast<double>(adv[i]) - rec[i];
                acc += d * d;
            }
            out.l2_vs_reconstruction[static_cast<size_t>(r)] = std::sqrt(acc);
        }
    }
}

}  // namespace

AdversarialBatch generate_from_latents(DecoderModel& mvd, const Tensor& latents, const Tensor& originals,
                                       DecoderModel* benign) {
    AdversarialBatch out;
    out.originals = originals;
    out.adversarials = mvd.decode(latents);
    if (benign) out.reconstructions = benign->decode(latents);
    fill_l2(out);
    return out;
}

AdversarialBatch generate(DecoderModel& mvd, EncoderModel& encoder, const Tensor& batch, uint64_t eps_seed,
                          uint64_t id_base, DecoderModel* benign) {
    const long n = batch.dim(0);
    GaussianPosterior post = encoder.encode(batch);
    Tensor eps({n, encoder.latent_dim()});
    for (long i = 0; i < n; ++i) {
        Tensor e = derive_eps(eps_seed, id_base + static_cast<uint64_t>(i), encoder.latent_dim());
        std::memcpy(eps.row(i), e.data(), sizeof(float) * static_cast<size_t>(e.size()));
    }
    Tensor z = reparameterize(post, eps);
    return generate_from_latents(mvd, z, batch, benign);
}

// ---------------------------------------------------------------------------
// Baselines

Tensor fgsm(ClassifierModel& classifier, const Tensor& batch, const std::vector<uint8_t>& labels, double eta) {
    if (batch.dim(0) != static_cast<long>(labels.size())) throw ShapeError("batch/label count mismatch");
    Tensor logits = classifier.logits(batch);
    Tensor dlogits;
    softmax_cross_entropy(logits, labels, &dlogits);
    Tensor dx = classifier.backward(dlogits, /*want_param_grads=*/false);
    Tensor out = batch;
    for (long i = 0; i < out.size(); ++i) {
        const float s = dx[i] > 0.0f ? 1.0f : (dx[i] < 0.0f ? -1.0f : 0.0f);
        out[i] = std::clamp(out[i] + static_cast<float>(eta) * s, 0.0f, 1.0f);
    }
    return out;
}

CwResult cw_l2(ClassifierModel& classifier, const Tensor& batch, const std::vector<uint8_t>& labels,
               std::optional<int> target, double kappa, double c, long iters, double lr) {
    if (batch.dim(0) != static_cast<long>(labels.size())) throw ShapeError("batch/label count mismatch");
    const long n = batch.dim(0);
    const long row = batch.row_size();
    const long k = classifier.class_count();

    CwResult result;
    result.adversarials = batch;
    result.success.assign(static_cast<size_t>(n), false);
    result.l2.assign(static_cast<size_t>(n), 0.0);
    if (iters <= 0) return result;

    // Optimize w with x' = (tanh(w) + 1) / 2, which keeps x' inside the box.
    Param w{"w", Tensor(batch.shape()), Tensor(batch.shape())};
    for (long i = 0; i < w.value.size(); ++i) {
        const double x = std::clamp(static_cast<double>(batch[i]), 1e-6, 1.0 - 1e-6);
        w.value[i] = static_cast<float>(std::atanh(2.0 * x - 1.0));
    }
    Adam opt({&w}, lr);

    std::vector<double> best_l2(static_cast<size_t>(n), 1e30);
    Tensor best = batch;
    Tensor x_adv(batch.shape());

    for (long it = 0; it < iters; ++it) {
        for (long i = 0; i < x_adv.size(); ++i) x_adv[i] = 0.5f * (std::tanh(w.value[i]) + 1.0f);
        Tensor logits = classifier.logits(x_adv);
        Tensor dlogits({n, k});
        for (long r = 0; r < n; ++r) {
            std::span<const float> lrow(logits.row(r), static_cast<size_t>(k));
            if (target) {
                margin_loss_grad(lrow, *target, kappa, dlogits.row(r));
            } else {
                nontargeted_margin_loss_grad(lrow, labels[static_cast<size_t>(r)], kappa, dlogits.row(r));
            }
            int pred = 0;
            for (long j = 1; j < k; ++j)
                if (lrow[static_cast<size_t>(j)] > lrow[static_cast<size_t>(pred)]) pred = static_cast<int>(j);
            const bool hit = target ? pred == *target : pred != labels[static_cast<size_t>(r)];
            if (hit) {
                double l2 = 0.0;
                const float* a = x_adv.row(r);
                const float* o = batch.row(r);
                for (long i = 0; i < row; ++i) {
                    const double d = static_cast<double>(a[i]) - o[i];
                    l2 += d * d;
                }
                l2 = std::sqrt(l2);
                if (l2 < best_l2[static_cast<size_t>(r)]) {
                    best_l2[static_cast<size_t>(r)] = l2;
                    std::memcpy(best.row(r), a, sizeof(float) * static_cast<size_t>(row));
                    result.success[static_cast<size_t>(r)] = true;
                }
            }
            float* g = dlogits.row(r);
            for (long j = 0; j < k; ++j) g[j] *= static_cast<float>(c);
        }
        Tensor dx = classifier.backward(dlogits, /*want_param_grads=*/false);
        if (!all_finite(dx)) throw DivergenceError("non-finite attack gradient", it);
        for (long i = 0; i < dx.size(); ++i) {
            const float diff = 2.0f * (x_adv[i] - batch[i]);
            const float dxdw = 2.0f * x_adv[i] * (1.0f - x_adv[i]);  // d tanh-box / dw
            w.grad[i] = (dx[i] + diff) * dxdw;
        }
        opt.step();
    }

    for (long r = 0; r < n; ++r) {
        if (result.success[static_cast<size_t>(r)]) {
            std::memcpy(result.adversarials.row(r), best.row(r), sizeof(float) * static_cast<size_t>(row));
            result.l2[static_cast<size_t>(r)] = best_l2[static_cast<size_t>(r)];
        } else {
            std::memcpy(result.adversarials.row(r), x_adv.row(r), sizeof(float) * static_cast<size_t>(row));
            double l2 = 0.0;
            const float* a = x_adv.row(r);
            const float* o = batch.row(r);
            for (long i = 0; i < row; ++i) {
                const double d = static_cast<double>(a[i]) - o[i];
                l2 += d * d;
            }
            result.l2[static_cast<size_t>(r)] = std::sqrt(l2);
        }
    }
    return result;
}

}  // namespace mvd

#include <doctest.h>

#include <cmath>

#include "mvd/attack.hpp"
#include "mvd/vae.hpp"
#include "reference_oracle.hpp"
#include "support.hpp"

using namespace mvd;

TEST_CASE("targeted margin hand values") {
    const float z[3] = {2, 5, 1};
    CHECK(margin_loss({z, 3}, 1, 0.0) == doctest::Approx(0.0));
    CHECK(margin_loss({z, 3}, 0, 0.0) == doctest::Approx(3.0));
    CHECK(margin_loss({z, 3}, 1, 5.0) == doctest::Approx(-3.0));
    CHECK_THROWS_AS(margin_loss({z, 3}, 7, 0.0), InvalidArgument);
}

TEST_CASE("non-targeted margin hand values") {
    const float z[3] = {2, 5, 1};
    CHECK(nontargeted_margin_loss({z, 3}, 1, 0.0) == doctest::Approx(3.0));
    CHECK(nontargeted_margin_loss({z, 3}, 0, 0.0) == doctest::Approx(0.0));
    // Floor reached exactly when the runner-up beats y by at least kappa.
    CHECK(nontargeted_margin_loss({z, 3}, 0, 3.0) == doctest::Approx(-3.0));
    CHECK(nontargeted_margin_loss({z, 3}, 0, 2.0) == doctest::Approx(-2.0));
}

TEST_CASE("margin floor and scale covariance hold on random logits") {
    Rng rng(44);
    for (int trial = 0; trial < 2000; ++trial) {
        float z[5];
        for (float& v : z) v = static_cast<float>(rng.normal() * 4.0);
        const long t = rng.uniform_int(5);
        const double kappa = rng.uniform(0.0, 3.0);
        const double m = margin_loss({z, 5}, t, kappa);
        CHECK(m >= -kappa - 1e-9);

        double best_other = -1e30;
        for (long i = 0; i < 5; ++i)
            if (i != t) best_other = std::max(best_other, static_cast<double>(z[i]));
        const bool beats_all = z[t] - best_other >= kappa;
        CHECK((m == doctest::Approx(-kappa)) == beats_all);

        const double a = rng.uniform(0.1, 3.0);
        float az[5];
        for (int i = 0; i < 5; ++i) az[i] = static_cast<float>(a * z[i]);
        CHECK(margin_loss({az, 5}, t, a * kappa) == doctest::Approx(a * m).epsilon(1e-4));
    }
}

namespace {

struct FixedWorld {
    ClassifierModel classifier;  // constant logits via bias
    EncoderModel encoder;
    DecoderModel decoder;  // zero params: constant 0.5 output
    Tensor x_zero;         // all-zero originals, 8x8

    FixedWorld(std::vector<float> bias_logits) {
        ArchitectureSpec cls;
        cls.input = {12, 12, 1};
        cls.flatten().dense(static_cast<long>(bias_logits.size()), Activation::linear);
        classifier = build_classifier(cls, 1);
        auto params = classifier.params();
        mvd::testing::set_all(params, 0.0f);
        for (size_t j = 0; j < bias_logits.size(); ++j) params[1]->value[static_cast<long>(j)] = bias_logits[j];

        encoder = build_encoder(preset("encoder_toy"), 2);
        decoder = build_decoder(preset("decoder_toy"), 3);
        mvd::testing::set_all(decoder.params(), 0.0f);
        decoder.set_stage(DecoderStage::vae_trained);
        x_zero = Tensor({2, 12, 12, 1});
    }
};

}  // namespace

TEST_CASE("mvd objective hand value: 0.01 * 3 + 4") {
    FixedWorld w({2.0f, 5.0f, 1.0f});
    AttackConfig cfg;
    cfg.balance = 0.01;
    cfg.confidence = 0.0;
    cfg.target = 0;  // margin = max(5,1) - 2 = 3
    // Decoder outputs 0.5 everywhere; originals at 1/6 put every pixel off by
    // exactly 1/3, so the flat L2 is sqrt(144 / 9) = 4.
    Tensor x = Tensor::full({2, 12, 12, 1}, 1.0f / 6.0f);
    const double obj = mvd_objective(w.classifier, w.encoder, w.decoder, x, cfg);
    CHECK(obj == doctest::Approx(4.03).epsilon(1e-5));
}

TEST_CASE("mvd objective floors at -balance * kappa") {
    FixedWorld w({10.0f, 0.0f, 0.0f});
    AttackConfig cfg;
    cfg.balance = 0.01;
    cfg.confidence = 5.0;
    cfg.target = 0;  // target already dominates by 10 >= kappa -> margin = -kappa
    Tensor x_half = Tensor::full({2, 12, 12, 1}, 0.5f);  // matches the decoder exactly
    const double obj = mvd_objective(w.classifier, w.encoder, w.decoder, x_half, cfg);
    CHECK(obj == doctest::Approx(-0.05).epsilon(1e-6));
}

TEST_CASE("objective approaches the mean decoder distortion as balance vanishes") {
    Dataset blobs = synthesize_dataset(3, {12, 12, 1}, 6, 11);
    EncoderModel enc = build_encoder(preset("encoder_toy"), 21);
    DecoderModel dec = build_decoder(preset("decoder_toy"), 22);
    dec.set_stage(DecoderStage::vae_trained);
    ClassifierModel cls = build_classifier(preset("classifier_toy"), 23);

    Tensor x = mvd::testing::batch_of(blobs, 8);
    AttackConfig cfg;
    cfg.balance = 1e-8;
    cfg.confidence = 0.0;
    cfg.target = 1;
    cfg.seed = 5;
    const double obj = mvd_objective(cls, enc, dec, x, cfg);

    // Independent distortion: decode the same canonical latents by hand.
    GaussianPosterior post = enc.encode(x);
    Tensor eps({8, enc.latent_dim()});
    for (long i = 0; i < 8; ++i) {
        Tensor e = derive_eps(cfg.seed, static_cast<uint64_t>(i), enc.latent_dim());
        for (long j = 0; j < e.size(); ++j) eps.row(i)[j] = e[j];
    }
    Tensor xh = dec.decode(reparameterize(post, eps));
    double mean_l2 = 0.0;
    for (long r = 0; r < 8; ++r) {
        double acc = 0.0;
        for (long i = 0; i < xh.row_size(); ++i) {
            const double d = static_cast<double>(xh.row(r)[i]) - x.row(r)[i];
            acc += d * d;
        }
        mean_l2 += std::sqrt(acc);
    }
    mean_l2 /= 8.0;
    CHECK(std::abs(obj - mean_l2) < 1e-4);
}

TEST_CASE("objective gradients in the decoder parameters match central differences") {
    // Smooth activations keep the finite-difference probe away from relu
    // kinks; the margin term stays piecewise linear, which central
    // differences handle as long as no logit tie sits inside the probe step.
    Dataset blobs = synthesize_dataset(3, {12, 12, 1}, 4, 12);
    EncoderModel enc = build_encoder(preset("encoder_toy"), 31);
    ArchitectureSpec dec_spec;
    dec_spec.input = {1, 1, 8};
    dec_spec.dense(24, Activation::sigmoid).dense(144, Activation::sigmoid).reshape({12, 12, 1});
    DecoderModel dec = build_decoder(dec_spec, 32);
    dec.set_stage(DecoderStage::vae_trained);
    ArchitectureSpec cls_spec;
    cls_spec.input = {12, 12, 1};
    cls_spec.flatten().dense(12, Activation::sigmoid).dense(10, Activation::linear);
    ClassifierModel cls = build_classifier(cls_spec, 33);

    Tensor x = mvd::testing::batch_of(blobs, 4);
    AttackConfig cfg;
    cfg.balance = 0.5;
    cfg.target = 2;
    cfg.seed = 9;

    mvd::testing::zero_grads(dec.params());
    const double float_value = mvd_objective(cls, enc, dec, x, cfg, {}, /*want_decoder_grads=*/true);
    auto ref_value = [&] {
        return mvd::testing::ref::mvd_objective(cls_spec, cls.params(), enc.spec(), enc.params(), dec_spec,
                                                dec.params(), x, cfg);
    };
    CHECK(float_value == doctest::Approx(ref_value()).epsilon(1e-4));
    const double err = mvd::testing::max_gradient_error(dec.params(), ref_value);
    CHECK(err < 1e-3);
}

namespace {

struct ToyPipeline {
    Dataset train;
    ClassifierModel classifier;
    EncoderModel encoder;
    DecoderModel decoder;

    ToyPipeline() : train(synthesize_dataset(4, {12, 12, 1}, 30, 17)) {
        ArchitectureSpec cls = preset("classifier_toy_linear");
        cls.layers.back().units = 4;
        classifier = build_classifier(cls, 41);
        train_classifier(classifier, train, nullptr, 10, 5e-3, 32, 41);
        encoder = build_encoder(preset("encoder_toy"), 42);
        decoder = build_decoder(preset("decoder_toy"), 43);
        train_vae(encoder, decoder, train, 400, 2e-3, 32, 42);
    }
};

}  // namespace

TEST_CASE("phase 2 reduces the adversarial loss and freezes everything else") {
    ToyPipeline p;
    const uint64_t enc_before = p.encoder.parameter_digest();
    const uint64_t cls_before = p.classifier.parameter_digest();

    EncoderHandle handle = EncoderHandle::white_box(&p.encoder, &p.train, 7);
    AttackConfig cfg;
    cfg.balance = 0.05;
    cfg.adv_iter = 500;
    cfg.lr = 2e-3;
    cfg.batch = 32;
    cfg.seed = 3;
    DecoderModel decoder = p.decoder.clone();
    const MvdTrainingReport report = train_mvd(decoder, handle, p.classifier, cfg);
    CHECK(report.adversarial_curve.back() < report.adversarial_curve.front());
    CHECK(decoder.stage() == DecoderStage::adversarial);
    CHECK(p.encoder.parameter_digest() == enc_before);
    CHECK(p.classifier.parameter_digest() == cls_before);

    SUBCASE("invalid balance is rejected") {
        AttackConfig bad = cfg;
        bad.balance = 0.0;
        DecoderModel d2 = p.decoder.clone();
        CHECK_THROWS_AS(train_mvd(d2, handle, p.classifier, bad), InvalidArgument);
    }
    SUBCASE("phase order is enforced by the decoder stage tag") {
        DecoderModel fresh = build_decoder(preset("decoder_toy"), 99);
        CHECK_THROWS_AS(train_mvd(fresh, handle, p.classifier, cfg), ContractViolation);
    }
    SUBCASE("black-box encoders demand a calibrated decoder") {
        BlackBoxEncoder oracle(p.encoder.clone(), 5);
        CalibrationSet cal = query_encoder(oracle, p.train);
        EncoderHandle bb = EncoderHandle::black_box(&cal);
        DecoderModel d3 = p.decoder.clone();  // vae_trained, not calibrated
        CHECK_THROWS_AS(train_mvd(d3, bb, p.classifier, cfg), ContractViolation);
    }
}

TEST_CASE("generation is order-preserving and needs no classifier at all") {
    ToyPipeline p;
    Tensor batch = mvd::testing::batch_of(p.train, 6);
    AdversarialBatch out = generate(p.decoder, p.encoder, batch, 13, 0, &p.decoder);
    CHECK(out.adversarials.dim(0) == 6);
    // Benign decoder as the "attack": adversarials equal the reconstructions.
    CHECK(out.adversarials.values() == out.reconstructions.values());
    for (double l2 : out.l2_vs_reconstruction) CHECK(l2 == 0.0);

    // Per-example calls reproduce the batch rows in order (up to the kernel's
    // batch-dependent float summation order).
    for (long i = 0; i < 6; ++i) {
        Tensor one({1, 12, 12, 1});
        for (long j = 0; j < 144; ++j) one[j] = batch.row(i)[j];
        AdversarialBatch single = generate(p.decoder, p.encoder, one, 13, static_cast<uint64_t>(i));
        for (long j = 0; j < 144; ++j)
            CHECK(single.adversarials[j] == doctest::Approx(out.adversarials.row(i)[j]).epsilon(1e-4));
    }
}

TEST_CASE("fgsm hand arithmetic and box property") {
    ArchitectureSpec spec;
    spec.input = {1, 1, 1};
    spec.dense(2, Activation::linear);
    ClassifierModel cls = build_classifier(spec, 1);
    auto params = cls.params();
    mvd::testing::set_all(params, 0.0f);
    params[0]->value[1] = 1.0f;  // logits = [0, x]

    Tensor x({1, 1}, {0.5f});
    Tensor adv = fgsm(cls, x, {0}, 0.3);
    CHECK(adv[0] == doctest::Approx(0.8));

    Tensor x_hi({1, 1}, {0.9f});
    CHECK(fgsm(cls, x_hi, {0}, 0.3)[0] == doctest::Approx(1.0));

    CHECK(fgsm(cls, x, {0}, 0.0)[0] == doctest::Approx(0.5));

    // Random nets: outputs in the box, infinity norm within eta.
    ClassifierModel rnd = build_classifier(preset("classifier_toy"), 77);
    Dataset blobs = synthesize_dataset(10, {12, 12, 1}, 3, 3);
    Tensor batch = mvd::testing::batch_of(blobs, 16);
    const auto labels = mvd::testing::labels_of(blobs, 16);
    const double eta = 0.25;
    Tensor out = fgsm(rnd, batch, labels, eta);
    for (long i = 0; i < out.size(); ++i) {
        CHECK(out[i] >= 0.0f);
        CHECK(out[i] <= 1.0f);
        CHECK(std::abs(out[i] - batch[i]) <= eta + 1e-6);
    }
}

TEST_CASE("cw distortion approaches the linear boundary distance") {
    // Two-class linear net: logits = W^T x + b.
    ArchitectureSpec spec;
    spec.input = {1, 1, 4};
    spec.dense(2, Activation::linear);
    ClassifierModel cls = build_classifier(spec, 5);
    auto params = cls.params();
    Rng rng(15);
    for (long i = 0; i < params[0]->value.size(); ++i) params[0]->value[i] = static_cast<float>(rng.normal());
    params[1]->value[0] = 0.1f;
    params[1]->value[1] = -0.1f;

    // Points solidly inside the box and on a known side of the boundary.
    Tensor batch({6, 4});
    std::vector<uint8_t> labels(6);
    long filled = 0;
    while (filled < 6) {
        Tensor x({1, 4});
        for (long j = 0; j < 4; ++j) x[j] = static_cast<float>(rng.uniform(0.25, 0.75));
        Tensor z = cls.logits(x);
        const int pred = z[0] > z[1] ? 0 : 1;
        if (std::abs(z[0] - z[1]) < 0.05) continue;
        for (long j = 0; j < 4; ++j) batch.row(filled)[j] = x[j];
        labels[static_cast<size_t>(filled)] = static_cast<uint8_t>(pred);
        ++filled;
    }

    CwResult res = cw_l2(cls, batch, labels, std::nullopt, 0.0, 5.0, 400, 5e-3);
    // Analytic oracle: |(w0 - w1) . x + (b0 - b1)| / ||w0 - w1||.
    double wdiff[4];
    double norm = 0.0;
    for (long j = 0; j < 4; ++j) {
        wdiff[j] = params[0]->value[j * 2 + 0] - params[0]->value[j * 2 + 1];
        norm += wdiff[j] * wdiff[j];
    }
    norm = std::sqrt(norm);
    for (long i = 0; i < 6; ++i) {
        CHECK(res.success[static_cast<size_t>(i)]);
        double margin = params[1]->value[0] - params[1]->value[1];
        for (long j = 0; j < 4; ++j) margin += wdiff[j] * batch.row(i)[j];
        const double distance = std::abs(margin) / norm;
        CHECK(res.l2[static_cast<size_t>(i)] == doctest::Approx(distance).epsilon(0.10));
    }

    SUBCASE("zero iterations returns the originals, flagged") {
        CwResult none = cw_l2(cls, batch, labels, std::nullopt, 0.0, 5.0, 0, 1e-2);
        CHECK(none.adversarials.values() == batch.values());
        for (bool s : none.success) CHECK_FALSE(s);
    }
}

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mvd/vae.hpp"
#include "reference_oracle.hpp"
#include "support.hpp"

using namespace mvd;

namespace {

GaussianPosterior posterior_of(std::vector<float> mu, std::vector<float> lv) {
    GaussianPosterior p;
    const long d = static_cast<long>(mu.size());
    p.mu = Tensor({1, d}, std::move(mu));
    p.log_var = Tensor({1, d}, std::move(lv));
    return p;
}

/// Independent closed form: KL = 1/2 sum (mu^2 + sigma^2 - 1 - ln sigma^2).
double kl_closed_form(const GaussianPosterior& p) {
    double acc = 0.0;
    for (long j = 0; j < p.latent_dim(); ++j) {
        const double mu = p.mu[j];
        const double s2 = std::exp(static_cast<double>(p.log_var[j]));
        acc += 0.5 * (mu * mu + s2 - 1.0 - std::log(s2));
    }
    return acc;
}

}  // namespace

TEST_CASE("reparameterization hand values") {
    Tensor eps1({1, 1}, {0.0f});
    CHECK(reparameterize(posterior_of({0.2f}, {0.0f}), eps1)[0] == doctest::Approx(0.2));
    Tensor eps2({1, 1}, {1.0f});
    CHECK(reparameterize(posterior_of({0.2f}, {0.0f}), eps2)[0] == doctest::Approx(1.2));
    Tensor eps3({1, 1}, {-1.0f});
    CHECK(reparameterize(posterior_of({0.0f}, {static_cast<float>(2.0 * std::log(2.0))}), eps3)[0] ==
          doctest::Approx(-2.0));
    Tensor bad({1, 2}, {0.0f, 0.0f});
    CHECK_THROWS_AS(reparameterize(posterior_of({0.0f}, {0.0f}), bad), ShapeError);
}

TEST_CASE("reparameterization is affine in eps with slope exp(log_var/2)") {
    Rng rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        const float mu = static_cast<float>(rng.normal());
        const float lv = static_cast<float>(rng.normal());
        const float e = static_cast<float>(rng.normal());
        const float step = 0.5f;
        GaussianPosterior p = posterior_of({mu}, {lv});
        Tensor ea({1, 1}, {e});
        Tensor eb({1, 1}, {e + step});
        const double za = reparameterize(p, ea)[0];
        const double zb = reparameterize(p, eb)[0];
        CHECK((zb - za) / step == doctest::Approx(std::exp(lv / 2.0)).epsilon(1e-4));
        CHECK(za == doctest::Approx(mu + std::exp(lv / 2.0) * e).epsilon(1e-4));
    }
}

TEST_CASE("KL spot values: 0, 1/2 and (e-2)/2") {
    CHECK(kl_to_standard_normal(posterior_of({0.0f}, {0.0f})) == doctest::Approx(0.0));
    CHECK(kl_to_standard_normal(posterior_of({1.0f}, {0.0f})) == doctest::Approx(0.5));
    CHECK(kl_to_standard_normal(posterior_of({0.0f}, {1.0f})) == doctest::Approx((std::exp(1.0) - 2.0) / 2.0));
    GaussianPosterior inf_post = posterior_of({std::numeric_limits<float>::infinity()}, {0.0f});
    CHECK_THROWS_AS(kl_to_standard_normal(inf_post), NumericalError);
}

TEST_CASE("KL is nonnegative, zero only at the prior, and matches the closed form") {
    Rng rng(99);
    for (int trial = 0; trial < 10000; ++trial) {
        GaussianPosterior p = posterior_of({static_cast<float>(rng.normal() * 2.0)},
                                           {static_cast<float>(rng.normal() * 1.5)});
        const double kl = kl_to_standard_normal(p);
        CHECK(kl >= 0.0);
        CHECK(kl == doctest::Approx(kl_closed_form(p)).epsilon(1e-6));
        if (kl < 1e-9) {
            CHECK(std::abs(p.mu[0]) < 1e-3);
            CHECK(std::abs(p.log_var[0]) < 1e-3);
        }
    }
    CHECK(kl_to_standard_normal(posterior_of({0.0f, 0.0f}, {0.0f, 0.0f})) < 1e-12);
}

TEST_CASE("reconstruction loss hand values and minimality") {
    const long npix = 6;
    Tensor half({2, npix});
    for (long i = 0; i < half.size(); ++i) half[i] = 0.5f;
    CHECK(reconstruction_loss(half, half) == doctest::Approx(npix * std::log(2.0)).epsilon(1e-5));

    Tensor bin({1, 4}, {0.0f, 1.0f, 1.0f, 0.0f});
    CHECK(reconstruction_loss(bin, bin) < 1e-4);

    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        Tensor target({1, 4});
        Tensor off({1, 4});
        for (long i = 0; i < 4; ++i) {
            target[i] = rng.uniform() < 0.5 ? 0.0f : 1.0f;
            off[i] = static_cast<float>(rng.uniform(0.05, 0.95));
        }
        CHECK(reconstruction_loss(target, off) >= reconstruction_loss(target, target));
    }

    Tensor wrong({1, 3}, {0.1f, 0.2f, 0.3f});
    CHECK_THROWS_AS(reconstruction_loss(bin, wrong), ShapeError);
}

TEST_CASE("vae loss: collapsed posterior leaves only the reconstruction term") {
    EncoderModel enc = build_encoder(preset("encoder_toy"), 5);
    DecoderModel dec = build_decoder(preset("decoder_toy"), 6);
    mvd::testing::set_all(enc.params(), 0.0f);  // mu = 0, log_var = 0

    Dataset blobs = synthesize_dataset(3, {12, 12, 1}, 4, 7);
    Tensor x = mvd::testing::batch_of(blobs, 6);
    Tensor eps({6, 8});
    const VaeLossParts parts = vae_loss(enc, dec, x, eps);
    CHECK(parts.kl == doctest::Approx(0.0));
    CHECK(parts.total == doctest::Approx(parts.reconstruction));
    CHECK(parts.total >= 0.0);
}

TEST_CASE("vae gradients match central differences on toy nets") {
    EncoderModel enc = build_encoder(preset("encoder_toy"), 15);
    DecoderModel dec = build_decoder(preset("decoder_toy"), 16);
    Dataset blobs = synthesize_dataset(3, {12, 12, 1}, 3, 8);
    Tensor x = mvd::testing::batch_of(blobs, 4);
    Tensor eps({4, 8});
    Rng rng(2);
    rng.fill_normal(eps);

    std::vector<Param*> params = enc.params();
    for (Param* p : dec.params()) params.push_back(p);
    mvd::testing::zero_grads(params);
    const VaeLossParts float_parts = vae_loss(enc, dec, x, eps, /*want_grads=*/true);

    auto ref_value = [&] {
        return mvd::testing::ref::vae_loss(enc.spec(), enc.params(), dec.spec(), dec.params(), x, eps);
    };
    CHECK(float_parts.total == doctest::Approx(ref_value()).epsilon(1e-4));
    const double err = mvd::testing::max_gradient_error(params, ref_value);
    CHECK(err < 1e-3);
}

TEST_CASE("vae training reduces the loss deterministically") {
    Dataset blobs = synthesize_dataset(4, {12, 12, 1}, 30, 9);

    EncoderModel enc_a = build_encoder(preset("encoder_toy"), 25);
    DecoderModel dec_a = build_decoder(preset("decoder_toy"), 26);
    const VaeTrainingReport ra = train_vae(enc_a, dec_a, blobs, 200, 2e-3, 32, 12);
    CHECK(ra.final_loss < ra.initial_loss);
    CHECK(dec_a.stage() == DecoderStage::vae_trained);

    // Monotone trend: median of the last tenth below the median of the first.
    auto median_of = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
    };
    const size_t tenth = ra.per_iteration_loss.size() / 10;
    std::vector<double> head(ra.per_iteration_loss.begin(), ra.per_iteration_loss.begin() + tenth);
    std::vector<double> tail(ra.per_iteration_loss.end() - tenth, ra.per_iteration_loss.end());
    CHECK(median_of(tail) < median_of(head));

    EncoderModel enc_b = build_encoder(preset("encoder_toy"), 25);
    DecoderModel dec_b = build_decoder(preset("decoder_toy"), 26);
    const VaeTrainingReport rb = train_vae(enc_b, dec_b, blobs, 200, 2e-3, 32, 12);
    CHECK(ra.final_loss == rb.final_loss);
    CHECK(enc_a.parameter_digest() == enc_b.parameter_digest());

    CHECK_THROWS_AS(train_vae(enc_a, dec_a, blobs, 0, 1e-3, 32, 1), InvalidArgument);
}

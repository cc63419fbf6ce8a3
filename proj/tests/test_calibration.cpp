#include <doctest.h>

#include <cstring>
#include <type_traits>

#include "mvd/calibration.hpp"
#include "support.hpp"

using namespace mvd;

namespace {

// The black-box wrapper must not leak parameter access at the type level.
template <typename T, typename = void>
struct exposes_params : std::false_type {};
template <typename T>
struct exposes_params<T, std::void_t<decltype(std::declval<T&>().params())>> : std::true_type {};
static_assert(!exposes_params<BlackBoxEncoder>::value, "oracle must be query-only");
static_assert(exposes_params<EncoderModel>::value);

/// Counting spy that fails the run if anything asks beyond query access.
class SpyOracle final : public EncoderOracle {
public:
    explicit SpyOracle(EncoderModel model, uint64_t seed) : inner_(std::move(model), seed) {}
    long latent_dim() const override { return inner_.latent_dim(); }
    Tensor query(const Tensor& example) override {
        ++queries_;
        return inner_.query(example);
    }
    long query_count() const override { return inner_.query_count(); }
    long observed_queries() const { return queries_; }

private:
    BlackBoxEncoder inner_;
    long queries_ = 0;
};

class FailingOracle final : public EncoderOracle {
public:
    long latent_dim() const override { return 4; }
    Tensor query(const Tensor&) override {
        if (at_++ == 3) throw NumericalError("synthetic oracle fault");
        Tensor z({4});
        return z;
    }
    long query_count() const override { return at_; }

private:
    long at_ = 0;
};

}  // namespace

TEST_CASE("query pairing counts every oracle call exactly once") {
    Dataset blobs = synthesize_dataset(3, {12, 12, 1}, 5, 4);
    std::vector<long> idx{0, 1, 2, 3, 4};
    Dataset five = blobs.subset(idx, Split::train);

    SpyOracle oracle(build_encoder(preset("encoder_toy"), 3), 17);
    CalibrationSet cal = query_encoder(oracle, five);
    CHECK(cal.size() == 5);
    CHECK(cal.query_count == 5);
    CHECK(oracle.observed_queries() == 5);
    CHECK(oracle.query_count() == 5);
    CHECK(cal.z.dim(1) == 8);
}

TEST_CASE("oracle faults carry the example index") {
    Dataset blobs = synthesize_dataset(3, {12, 12, 1}, 5, 4);
    FailingOracle oracle;
    try {
        query_encoder(oracle, blobs);
        FAIL("expected OracleError");
    } catch (const OracleError& e) {
        CHECK(e.index == 3);
    }
}

TEST_CASE("black-box queries are reproducible per request id") {
    Dataset blobs = synthesize_dataset(3, {12, 12, 1}, 4, 4);
    BlackBoxEncoder a(build_encoder(preset("encoder_toy"), 3), 21);
    BlackBoxEncoder b(build_encoder(preset("encoder_toy"), 3), 21);
    CalibrationSet ca = query_encoder(a, blobs);
    CalibrationSet cb = query_encoder(b, blobs);
    CHECK(ca.z.values() == cb.z.values());
}

TEST_CASE("calibration learns the oracle's latent convention") {
    Dataset blobs = synthesize_dataset(4, {12, 12, 1}, 25, 5);
    SpyOracle oracle(build_encoder(preset("encoder_toy"), 31), 23);
    CalibrationSet cal = query_encoder(oracle, blobs);

    DecoderModel decoder = build_decoder(preset("decoder_toy"), 32);
    decoder.set_stage(DecoderStage::vae_trained);
    CalibrationReport report = calibrate_decoder(decoder, cal, 300, 2e-3, 32, 6);
    CHECK(report.final_loss < 0.5 * report.initial_loss);
    CHECK(report.holdout_after < report.holdout_before);
    CHECK(report.query_count == cal.query_count);
    CHECK(decoder.stage() == DecoderStage::calibrated);
}

TEST_CASE("an already perfect decoder does not move") {
    // A constant decoder paired with its own output is an exact fixed point:
    // the reconstruction gradient is identically zero whatever the batch, so
    // calibration may not move a single parameter.
    DecoderModel decoder = build_decoder(preset("decoder_toy"), 41);
    mvd::testing::set_all(decoder.params(), 0.0f);  // decode(z) = sigmoid(0) = 0.5
    decoder.set_stage(DecoderStage::vae_trained);
    Rng rng(7);
    Tensor z({30, 8});
    rng.fill_normal(z);
    Tensor x = decoder.decode(z);

    CalibrationSet cal;
    cal.z = z;
    cal.x = x;
    cal.labels.assign(30, 0);
    cal.query_count = 30;

    auto digest = [](DecoderModel& d) {
        uint64_t h = 1469598103934665603ull;
        for (Param* p : d.params())
            for (float v : p->value.values()) {
                uint32_t bits;
                std::memcpy(&bits, &v, 4);
                h = (h ^ bits) * 1099511628211ull;
            }
        return h;
    };
    const uint64_t before = digest(decoder);
    CalibrationReport report = calibrate_decoder(decoder, cal, 50, 1e-3, 16, 3);
    CHECK(digest(decoder) == before);
    // Same fixed holdout before and after: the loss cannot change.
    CHECK(std::abs(report.holdout_after - report.holdout_before) < 1e-6);
}

TEST_CASE("latent width mismatches are rejected") {
    DecoderModel decoder = build_decoder(preset("decoder_toy"), 51);
    decoder.set_stage(DecoderStage::vae_trained);
    CalibrationSet cal;
    cal.z = Tensor({4, 5});
    cal.x = Tensor({4, 12, 12, 1});
    cal.labels.assign(4, 0);
    cal.query_count = 4;
    CHECK_THROWS_AS(calibrate_decoder(decoder, cal, 10, 1e-3, 4, 1), ShapeError);
}

TEST_CASE("calibration sweep walks the rates and accounts queries") {
    Dataset blobs = synthesize_dataset(4, {12, 12, 1}, 20, 6);
    BlackBoxEncoder oracle(build_encoder(preset("encoder_toy"), 61), 29);
    DecoderModel seed_decoder = build_decoder(preset("decoder_toy"), 62);
    seed_decoder.set_stage(DecoderStage::vae_trained);

    auto factory = [&] { return seed_decoder.clone(); };
    auto pipeline = [](DecoderModel&, const CalibrationSet& cal) {
        return std::pair<double, double>{1.0, static_cast<double>(cal.size())};
    };
    const auto rows = calibration_sweep({0.25, 0.5, 1.0}, blobs, oracle, factory, pipeline, 40, 2e-3, 16, 7);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].query_count == 20);   // ceil(0.25 * 20) per class, 4 classes
    CHECK(rows[1].query_count == 40);
    CHECK(rows[2].query_count == 80);
    CHECK(rows[2].mean_l2 == doctest::Approx(80.0));

    CHECK_THROWS_AS(calibration_sweep({0.0, 0.5}, blobs, oracle, factory, pipeline, 10, 1e-3, 8, 1), InvalidArgument);

    const std::string tsv = sweep_table_tsv(rows);
    CHECK(tsv.find("rate\tsuccess_rate\tmean_l2\tquery_count") == 0);
}

#pragma once

#include <functional>

#include "mvd/dataset.hpp"
#include "mvd/model.hpp"
#include "mvd/vae.hpp"

namespace mvd {

/// Query-only access to an encoder. Implementations expose sampled latents
/// and a query counter, never parameters or gradients.
class EncoderOracle {
public:
    virtual ~EncoderOracle() = default;
    virtual long latent_dim() const = 0;
    /// Encode a single example (flat row or (1,H,W,C)); returns a (D) latent.
    /// One sampled z per query.
    virtual Tensor query(const Tensor& example) = 0;
    virtual long query_count() const = 0;
};

/// Wraps a trained encoder behind the oracle interface. The wrapped model is
/// private; the eps for query number i is derive_eps(seed, i), matching the
/// wire service behaviour.
class BlackBoxEncoder final : public EncoderOracle {
public:
    BlackBoxEncoder(EncoderModel model, uint64_t seed, bool return_mean = false)
        : model_(std::move(model)), seed_(seed), return_mean_(return_mean) {}

    long latent_dim() const override { return model_.latent_dim(); }
    Tensor query(const Tensor& example) override;
    long query_count() const override { return queries_; }

private:
    EncoderModel model_;
    uint64_t seed_;
    bool return_mean_;
    long queries_ = 0;
};

/// Paired (z, x) training set obtained by querying a black-box encoder.
struct CalibrationSet {
    Tensor z;  // (N, D)
    Tensor x;  // (N, H, W, C)
    std::vector<uint8_t> labels;
    std::string source;
    long query_count = 0;

    long size() const { return z.rank() == 2 ? z.dim(0) : 0; }
};

/// One query per example, sequential, exact accounting.
CalibrationSet query_encoder(EncoderOracle& oracle, const Dataset& data, const std::string& source_name = "oracle");

struct CalibrationReport {
    std::vector<double> per_iteration_loss;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double holdout_before = 0.0;  // mean reconstruction loss on the reserved 10%
    double holdout_after = 0.0;
    long query_count = 0;
};

/// Trains the decoder to map each stored z back to its x under the Phase-1
/// reconstruction loss. Marks the decoder calibrated.
CalibrationReport calibrate_decoder(DecoderModel& decoder, const CalibrationSet& cal, long iters, double lr,
                                    long batch_size, uint64_t seed);

struct CalibrationSweepRow {
    double rate = 0.0;
    double success_rate = 0.0;
    double mean_l2 = 0.0;
    long query_count = 0;
};

/// For each rate: stratified_sample -> query -> calibrate a fresh decoder ->
/// run the supplied adversarial pipeline -> record the row.
using DecoderFactory = std::function<DecoderModel()>;
/// Receives the calibrated decoder and its calibration pairs; returns
/// (success rate, mean L2 vs benign reconstruction).
using AttackPipelineFn = std::function<std::pair<double, double>(DecoderModel&, const CalibrationSet&)>;

std::vector<CalibrationSweepRow> calibration_sweep(const std::vector<double>& rates, const Dataset& data,
                                                   EncoderOracle& oracle, const DecoderFactory& decoder_factory,
                                                   const AttackPipelineFn& attack_pipeline, long cal_iters, double cal_lr,
                                                   long cal_batch, uint64_t seed);

std::string sweep_table_tsv(const std::vector<CalibrationSweepRow>& rows);

}  // namespace mvd

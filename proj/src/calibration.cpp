#include "mvd/calibration.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace mvd {

Tensor BlackBoxEncoder::query(const Tensor& example) {
    Tensor row = example;
    if (row.rank() != 2 || row.dim(0) != 1) row = example.reshaped({1, example.size()});
    GaussianPosterior post = model_.encode(row);
    const long d = model_.latent_dim();
    Tensor z({d});
    if (return_mean_) {
        std::memcpy(z.data(), post.mu.data(), sizeof(float) * static_cast<size_t>(d));
    } else {
        Tensor eps = derive_eps(seed_, static_cast<uint64_t>(queries_), d);
        for (long j = 0; j < d; ++j) z[j] = post.mu[j] + std::exp(post.log_var[j] * 0.5f) * eps[j];
    }
    ++queries_;
    return z;
}

CalibrationSet query_encoder(EncoderOracle& oracle, const Dataset& data, const std::string& source_name) {
    CalibrationSet cal;
    cal.source = source_name;
    const long n = data.size();
    const long d = oracle.latent_dim();
    cal.z = Tensor({n, d});
    cal.x = Tensor({n, data.shape()[0], data.shape()[1], data.shape()[2]});
    cal.labels.resize(static_cast<size_t>(n));
    for (long i = 0; i < n; ++i) {
        Tensor example({1, data.shape()[0], data.shape()[1], data.shape()[2]});
        std::memcpy(example.data(), data.features().row(i), sizeof(float) * static_cast<size_t>(data.feature_size()));
        Tensor z;
        try {
            z = oracle.query(example);
        } catch (const Error&) {
            throw OracleError("oracle failed on example " + std::to_string(i), i);
        }
        if (z.size() != d) throw OracleError("oracle returned latent of width " + std::to_string(z.size()), i);
        std::memcpy(cal.z.row(i), z.data(), sizeof(float) * static_cast<size_t>(d));
        std::memcpy(cal.x.row(i), data.features().row(i), sizeof(float) * static_cast<size_t>(data.feature_size()));
        cal.labels[static_cast<size_t>(i)] = static_cast<uint8_t>(data.label_of(i));
        ++cal.query_count;
    }
    return cal;
}

namespace {

double holdout_loss(DecoderModel& decoder, const CalibrationSet& cal, const std::vector<long>& idx) {
    if (idx.empty()) return 0.0;
    Tensor z({static_cast<long>(idx.size()), cal.z.dim(1)});
    Tensor x({static_cast<long>(idx.size()), cal.x.row_size()});
    for (size_t i = 0; i < idx.size(); ++i) {
        std::memcpy(z.row(static_cast<long>(i)), cal.z.row(idx[i]), sizeof(float) * static_cast<size_t>(cal.z.dim(1)));
        std::memcpy(x.row(static_cast<long>(i)), cal.x.row(idx[i]), sizeof(float) * static_cast<size_t>(cal.x.row_size()));
    }
    Tensor xh = decoder.decode(z);
    return reconstruction_loss(x, xh.reshaped({xh.dim(0), xh.row_size()}));
}

}  // namespace

CalibrationReport calibrate_decoder(DecoderModel& decoder, const CalibrationSet& cal, long iters, double lr,
                                    long batch_size, uint64_t seed) {
    if (iters < 1) throw InvalidArgument("calibration iters must be >= 1");
    if (cal.size() == 0) throw InvalidArgument("empty calibration set");
    if (cal.z.dim(1) != decoder.latent_dim())
        throw ShapeError("calibration latent width " + std::to_string(cal.z.dim(1)) + " != decoder latent width " +
                         std::to_string(decoder.latent_dim()));

    // Reserve the tail 10% (at least one example) for the improvement check.
    const long holdout = std::max<long>(1, cal.size() / 10);
    const long train_n = std::max<long>(1, cal.size() - holdout);
    std::vector<long> holdout_idx;
    for (long i = train_n; i < cal.size(); ++i) holdout_idx.push_back(i);

    CalibrationReport report;
    report.query_count = cal.query_count;
    report.holdout_before = holdout_loss(decoder, cal, holdout_idx);

    Adam opt(decoder.params(), lr);
    BatchSampler sampler(train_n, batch_size, seed);
    const long d = cal.z.dim(1);
    const long row = cal.x.row_size();
    for (long it = 0; it < iters; ++it) {
        const auto idx = sampler.next();
        Tensor z({static_cast<long>(idx.size()), d});
        Tensor x({static_cast<long>(idx.size()), row});
        for (size_t i = 0; i < idx.size(); ++i) {
            std::memcpy(z.row(static_cast<long>(i)), cal.z.row(idx[i]), sizeof(float) * static_cast<size_t>(d));
            std::memcpy(x.row(static_cast<long>(i)), cal.x.row(idx[i]), sizeof(float) * static_cast<size_t>(row));
        }
        Tensor xh = decoder.decode(z, /*training=*/true);
        Tensor dxh;
        const double loss = reconstruction_loss(x, xh.reshaped({xh.dim(0), row}), &dxh);
        if (!std::isfinite(loss)) throw DivergenceError("calibration loss is not finite", it);
        decoder.backward(dxh.reshaped(xh.shape()), /*want_param_grads=*/true);
        opt.step();
        report.per_iteration_loss.push_back(loss);
    }
    report.initial_loss = report.per_iteration_loss.front();
    report.final_loss = report.per_iteration_loss.back();
    report.holdout_after = holdout_loss(decoder, cal, holdout_idx);
    decoder.set_stage(DecoderStage::calibrated);
    return report;
}

std::vector<CalibrationSweepRow> calibration_sweep(const std::vector<double>& rates, const Dataset& data,
                                                   EncoderOracle& oracle, const DecoderFactory& decoder_factory,
                                                   const AttackPipelineFn& attack_pipeline, long cal_iters, double cal_lr,
                                                   long cal_batch, uint64_t seed) {
    for (double r : rates)
        if (!(r > 0.0 && r <= 1.0)) throw InvalidArgument("sweep rate " + std::to_string(r) + " outside (0,1]");

    std::vector<CalibrationSweepRow> rows;
    for (size_t i = 0; i < rates.size(); ++i) {
        const double rate = rates[i];
        Dataset sampled = stratified_sample(data, rate, seed + i);
        CalibrationSet cal = query_encoder(oracle, sampled);
        DecoderModel decoder = decoder_factory();
        calibrate_decoder(decoder, cal, cal_iters, cal_lr, cal_batch, seed + 31 * i);
        const auto [success, mean_l2] = attack_pipeline(decoder, cal);
        rows.push_back({rate, success, mean_l2, cal.query_count});
    }
    return rows;
}

std::string sweep_table_tsv(const std::vector<CalibrationSweepRow>& rows) {
    std::ostringstream os;
    os << "rate\tsuccess_rate\tmean_l2\tquery_count\n";
    for (const auto& r : rows)
        os << r.rate << "\t" << r.success_rate << "\t" << r.mean_l2 << "\t" << r.query_count << "\n";
    return os.str();
}

}  // namespace mvd

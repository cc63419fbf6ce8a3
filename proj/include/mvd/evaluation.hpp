#pragma once

#include <functional>
#include <span>
#include <string>

#include "mvd/attack.hpp"

namespace mvd {

struct StatTriple {
    double min = 0.0, mean = 0.0, max = 0.0;
};

enum class SuccessMode { non_targeted, targeted };

/// Non-targeted: fraction with adv != reference. Targeted: fraction with
/// adv == target, over the examples whose reference differs from the target.
double attack_success_rate(std::span<const int> adv_preds, std::span<const int> references, SuccessMode mode,
                           int target = -1);

struct ClassMetrics {
    std::vector<double> precision, recall, f1;
    std::vector<bool> degenerate;  // empty-denominator classes, scored 0
    double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
};

ClassMetrics classification_metrics(std::span<const int> preds, std::span<const int> labels, long class_count);

/// (vs-original, vs-reconstruction) per-example flat L2 statistics.
std::pair<StatTriple, StatTriple> distortion_stats(const AdversarialBatch& batch);

/// Wall-clock seconds per example; one untimed warm-up pass, then
/// `repetitions` timed passes of the n-example workload.
double runtime_benchmark(const std::function<void()>& run_batch, long n, long repetitions);

struct AttackReport {
    std::string threat_model;
    std::string attack_name;
    std::string dataset;
    SuccessMode mode = SuccessMode::non_targeted;
    int target = -1;
    double success_rate = 0.0;
    long successes = 0;
    long evaluated = 0;
    ClassMetrics metrics;
    StatTriple l2_vs_original;
    StatTriple l2_vs_reconstruction;
    double per_example_seconds = 0.0;
    std::string config_echo;
    uint64_t seed = 0;

    std::string to_json() const;
    std::string to_table_tsv() const;
};

struct TargetedMatrixSummary {
    std::vector<double> per_target;
    StatTriple summary;  // worst / average / best
};

/// reports/<run-id>/ layout: report.json + tables/*.tsv + plots/*.svg and,
/// when a demo batch is supplied, a first-n-by-index image grid with its
/// predicted labels (demo_grid.pgm/.ppm + demo_grid_labels.tsv).
void render_report(const std::vector<AttackReport>& reports, const std::string& out_dir,
                   const AdversarialBatch* demo = nullptr, std::array<long, 3> demo_shape = {0, 0, 0},
                   long demo_columns = 10);

std::string targeted_matrix_tsv(const std::string& dataset, const std::vector<std::pair<std::string, TargetedMatrixSummary>>& rows);

/// Simple line/bar plot rendering used by render_report; standalone SVG.
void write_svg_line_plot(const std::string& path, const std::string& title, const std::vector<double>& xs,
                         const std::vector<std::pair<std::string, std::vector<double>>>& series);
void write_svg_bar_plot(const std::string& path, const std::string& title, const std::vector<std::string>& labels,
                        const std::vector<double>& values);

void write_image_grid(const std::string& path, const std::vector<const Tensor*>& rows, std::array<long, 3> shape,
                      long columns);

}  // namespace mvd

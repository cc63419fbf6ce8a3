#include <doctest.h>

#include <filesystem>
#include <thread>

#include "mvd/evaluation.hpp"
#include "support.hpp"

using namespace mvd;
namespace fs = std::filesystem;

TEST_CASE("success rates by hand") {
    const std::vector<int> adv{1, 2, 3}, ref{1, 2, 4};
    CHECK(attack_success_rate(adv, ref, SuccessMode::non_targeted) == doctest::Approx(1.0 / 3.0));
    const std::vector<int> adv_t{7, 7, 3};
    CHECK(attack_success_rate(adv_t, ref, SuccessMode::targeted, 7) == doctest::Approx(2.0 / 3.0));
    CHECK(attack_success_rate(ref, ref, SuccessMode::non_targeted) == doctest::Approx(0.0));
    const std::vector<int> short_ref{1};
    CHECK_THROWS_AS(attack_success_rate(adv, short_ref, SuccessMode::non_targeted), ShapeError);
}

TEST_CASE("targeted denominators exclude examples already at the target") {
    const std::vector<int> ref{7, 1, 2, 7};
    const std::vector<int> adv{7, 7, 0, 0};
    // Considered: indices 1 and 2; hits: index 1 only.
    CHECK(attack_success_rate(adv, ref, SuccessMode::targeted, 7) == doctest::Approx(0.5));
}

TEST_CASE("classification metrics by hand") {
    std::vector<int> perfect{0, 1, 2, 1, 0};
    ClassMetrics m = classification_metrics(perfect, perfect, 3);
    CHECK(m.macro_precision == doctest::Approx(1.0));
    CHECK(m.macro_recall == doctest::Approx(1.0));
    CHECK(m.macro_f1 == doctest::Approx(1.0));

    // Everything predicted class 0 on balanced binary labels.
    std::vector<int> preds(10, 0);
    std::vector<int> labels;
    for (int i = 0; i < 10; ++i) labels.push_back(i % 2);
    ClassMetrics all0 = classification_metrics(preds, labels, 2);
    CHECK(all0.precision[0] == doctest::Approx(0.5));
    CHECK(all0.recall[0] == doctest::Approx(1.0));
    CHECK(all0.f1[0] == doctest::Approx(2.0 / 3.0));
    CHECK(all0.recall[1] == doctest::Approx(0.0));
    CHECK(all0.degenerate[1]);  // no predictions for class 1

    // A class absent from both labels and predictions is flagged, scored 0.
    ClassMetrics absent = classification_metrics(perfect, perfect, 4);
    CHECK(absent.degenerate[3]);
    CHECK(absent.f1[3] == doctest::Approx(0.0));
}

TEST_CASE("accuracy equals micro recall; macro F1 stays in the unit interval") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const long n = 40, k = 5;
        std::vector<int> preds, labels;
        for (long i = 0; i < n; ++i) {
            preds.push_back(static_cast<int>(rng.uniform_int(k)));
            labels.push_back(static_cast<int>(rng.uniform_int(k)));
        }
        ClassMetrics m = classification_metrics(preds, labels, k);
        double acc = 0.0;
        for (long i = 0; i < n; ++i) acc += preds[static_cast<size_t>(i)] == labels[static_cast<size_t>(i)] ? 1.0 : 0.0;
        acc /= static_cast<double>(n);
        // Micro recall = sum tp / sum (tp + fn) = accuracy.
        double tp = 0.0, denom = 0.0;
        std::vector<long> per_class_tp(k, 0), per_class_total(k, 0);
        for (long i = 0; i < n; ++i) {
            ++per_class_total[static_cast<size_t>(labels[static_cast<size_t>(i)])];
            if (preds[static_cast<size_t>(i)] == labels[static_cast<size_t>(i)])
                ++per_class_tp[static_cast<size_t>(labels[static_cast<size_t>(i)])];
        }
        for (long c = 0; c < k; ++c) {
            tp += per_class_tp[static_cast<size_t>(c)];
            denom += per_class_total[static_cast<size_t>(c)];
        }
        CHECK(tp / denom == doctest::Approx(acc));
        CHECK(m.macro_f1 >= 0.0);
        CHECK(m.macro_f1 <= 1.0);

        // Success-rate complement on the same predictions.
        const double flip = attack_success_rate(preds, labels, SuccessMode::non_targeted);
        CHECK(flip + acc == doctest::Approx(1.0));
    }
}

TEST_CASE("distortion stats match a brute-force recomputation") {
    AdversarialBatch batch;
    Rng rng(17);
    batch.originals = Tensor({5, 12});
    batch.reconstructions = Tensor({5, 12});
    batch.adversarials = Tensor({5, 12});
    for (long i = 0; i < batch.originals.size(); ++i) {
        batch.originals[i] = static_cast<float>(rng.uniform());
        batch.reconstructions[i] = static_cast<float>(rng.uniform());
        batch.adversarials[i] = static_cast<float>(rng.uniform());
    }
    for (long r = 0; r < 5; ++r) {
        double o = 0.0, c = 0.0;
        for (long j = 0; j < 12; ++j) {
            const double dv = static_cast<double>(batch.adversarials.row(r)[j]) - batch.originals.row(r)[j];
            const double dr = static_cast<double>(batch.adversarials.row(r)[j]) - batch.reconstructions.row(r)[j];
            o += dv * dv;
            c += dr * dr;
        }
        batch.l2_vs_original.push_back(std::sqrt(o));
        batch.l2_vs_reconstruction.push_back(std::sqrt(c));
    }
    const auto [vs_orig, vs_recon] = distortion_stats(batch);

    // Independent pass in plain doubles.
    double mn = 1e30, mx = -1e30, acc = 0.0;
    for (double v : batch.l2_vs_original) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
        acc += v;
    }
    CHECK(vs_orig.min == doctest::Approx(mn).epsilon(1e-6));
    CHECK(vs_orig.max == doctest::Approx(mx).epsilon(1e-6));
    CHECK(vs_orig.mean == doctest::Approx(acc / 5.0).epsilon(1e-6));
    CHECK(vs_recon.min <= vs_recon.mean);
    CHECK(vs_recon.mean <= vs_recon.max);

    AdversarialBatch empty;
    CHECK_THROWS_AS(distortion_stats(empty), InvalidArgument);
}

TEST_CASE("ordered stat triples from fixed values") {
    AdversarialBatch batch;
    batch.originals = Tensor({3, 1});
    batch.adversarials = Tensor({3, 1});
    batch.l2_vs_original = {1.0, 2.0, 3.0};
    const auto [triple, _] = distortion_stats(batch);
    CHECK(triple.min == doctest::Approx(1.0));
    CHECK(triple.mean == doctest::Approx(2.0));
    CHECK(triple.max == doctest::Approx(3.0));
}

TEST_CASE("runtime benchmark is stable and guards its inputs") {
    auto work = [] {
        volatile double acc = 0.0;
        for (int i = 0; i < 200000; ++i) acc += std::sqrt(static_cast<double>(i));
    };
    const double a = runtime_benchmark(work, 10, 3);
    const double b = runtime_benchmark(work, 10, 3);
    CHECK(a > 0.0);
    CHECK(std::abs(a - b) / std::max(a, b) < 0.5);
    CHECK_THROWS_AS(runtime_benchmark(work, 0, 1), InvalidArgument);
}

TEST_CASE("report rendering writes records, tables, plots and the demo grid") {
    AttackReport r;
    r.threat_model = "double_white_box";
    r.attack_name = "mvd";
    r.dataset = "digits";
    r.success_rate = 0.97;
    r.successes = 97;
    r.evaluated = 100;
    r.metrics = classification_metrics(std::vector<int>{0, 1, 1, 0}, std::vector<int>{0, 1, 0, 1}, 2);
    r.l2_vs_original = {1.0, 2.0, 3.0};
    r.l2_vs_reconstruction = {0.5, 1.0, 1.5};

    AdversarialBatch demo;
    demo.originals = Tensor::full({4, 6, 6, 1}, 0.2f);
    demo.reconstructions = Tensor::full({4, 6, 6, 1}, 0.5f);
    demo.adversarials = Tensor::full({4, 6, 6, 1}, 0.8f);
    demo.l2_vs_original.assign(4, 1.0);
    demo.clean_predictions = {0, 1, 0, 1};
    demo.adversarial_predictions = {1, 0, 1, 0};

    const fs::path dir = fs::temp_directory_path() / "mvd_report_test";
    fs::remove_all(dir);
    render_report({r}, dir.string(), &demo, {6, 6, 1}, 4);
    CHECK(fs::exists(dir / "report.json"));
    CHECK(fs::exists(dir / "tables" / "mvd_double_white_box.tsv"));
    CHECK(fs::exists(dir / "plots" / "mvd_double_white_box_f1.svg"));
    CHECK(fs::exists(dir / "demo_grid.pgm"));
    CHECK(fs::exists(dir / "demo_grid_labels.tsv"));
    fs::remove_all(dir);

    CHECK_THROWS_AS(render_report({}, dir.string()), InvalidArgument);
}

TEST_CASE("targeted matrix table mirrors the worst/average/best layout") {
    TargetedMatrixSummary s;
    s.per_target = {0.9, 0.95, 1.0};
    s.summary = {0.9, 0.95, 1.0};
    const std::string tsv = targeted_matrix_tsv("digits", {{"double_white_box", s}});
    CHECK(tsv.find("threat_model\tdataset\tworst\taverage\tbest") == 0);
    CHECK(tsv.find("double_white_box\tdigits\t0.9\t0.95\t1") != std::string::npos);
}

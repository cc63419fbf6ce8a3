#include <doctest.h>

#include <filesystem>
#include <set>

#include "mvd/dataset.hpp"
#include "mvd/train.hpp"
#include "mvd/vae.hpp"
#include "support.hpp"

using namespace mvd;

TEST_CASE("synthetic blobs: counts, labels and determinism") {
    Dataset d = synthesize_dataset(2, {8, 8, 1}, 10, 7);
    CHECK(d.size() == 20);
    long per_class[2] = {0, 0};
    for (long i = 0; i < d.size(); ++i) ++per_class[d.label_of(i)];
    CHECK(per_class[0] == 10);
    CHECK(per_class[1] == 10);

    Dataset again = synthesize_dataset(2, {8, 8, 1}, 10, 7);
    CHECK(d.features().values() == again.features().values());
    CHECK(d.labels() == again.labels());

    Dataset ten = synthesize_dataset(10, {8, 8, 1}, 5, 1);
    CHECK(ten.size() == 50);
    std::vector<long> hist(10, 0);
    for (long i = 0; i < ten.size(); ++i) ++hist[static_cast<size_t>(ten.label_of(i))];
    for (long k = 0; k < 10; ++k) CHECK(hist[static_cast<size_t>(k)] == 5);

    CHECK_THROWS_AS(synthesize_dataset(1, {8, 8, 1}, 10, 7), InvalidArgument);
    CHECK_THROWS_AS(synthesize_dataset(2, {8, 8, 1}, 0, 7), InvalidArgument);
}

TEST_CASE("stratified sampling keeps per-class ceilings") {
    Dataset d = synthesize_dataset(10, {6, 6, 1}, 100, 3);
    Dataset half = stratified_sample(d, 0.5, 5);
    CHECK(half.size() == 500);
    std::vector<long> hist(10, 0);
    for (long i = 0; i < half.size(); ++i) ++hist[static_cast<size_t>(half.label_of(i))];
    for (long k = 0; k < 10; ++k) CHECK(hist[static_cast<size_t>(k)] == 50);

    CHECK_THROWS_AS(stratified_sample(d, 0.0, 5), InvalidArgument);
    CHECK_THROWS_AS(stratified_sample(d, 1.5, 5), InvalidArgument);
}

TEST_CASE("stratified sampling: rate 1 permutes, odd sizes take ceilings") {
    // Classes of sizes 3 and 7 at rate 0.5 -> 2 and 4.
    Dataset base = synthesize_dataset(2, {4, 4, 1}, 7, 9);
    std::vector<long> keep;
    long dropped = 0;
    for (long i = 0; i < base.size(); ++i) {
        if (base.label_of(i) == 0 && dropped < 4) {
            ++dropped;
            continue;
        }
        keep.push_back(i);
    }
    Dataset lopsided = base.subset(keep, Split::train);  // sizes {3, 7}
    Dataset half = stratified_sample(lopsided, 0.5, 3);
    long c0 = 0, c1 = 0;
    for (long i = 0; i < half.size(); ++i) (half.label_of(i) == 0 ? c0 : c1)++;
    CHECK(c0 == 2);
    CHECK(c1 == 4);

    Dataset all = stratified_sample(lopsided, 1.0, 11);
    CHECK(all.size() == lopsided.size());
    // Permutation: same multiset of rows.
    auto key = [](const Dataset& ds, long i) {
        double acc = ds.label_of(i) * 1000.0;
        for (long j = 0; j < ds.feature_size(); ++j) acc += ds.features().row(i)[j];
        return acc;
    };
    std::multiset<double> lhs, rhs;
    for (long i = 0; i < all.size(); ++i) {
        lhs.insert(key(all, i));
        rhs.insert(key(lopsided, i));
    }
    CHECK(lhs == rhs);
}

TEST_CASE("stratified samples never fabricate examples") {
    Dataset d = synthesize_dataset(4, {5, 5, 1}, 12, 21);
    std::set<std::vector<float>> source_rows;
    for (long i = 0; i < d.size(); ++i)
        source_rows.insert(std::vector<float>(d.features().row(i), d.features().row(i) + d.feature_size()));
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        Dataset s = stratified_sample(d, 0.4, seed);
        for (long i = 0; i < s.size(); ++i) {
            std::vector<float> row(s.features().row(i), s.features().row(i) + s.feature_size());
            CHECK(source_rows.count(row) == 1);
        }
    }
}

TEST_CASE("dataset cache round-trips bitwise") {
    Dataset d = synthesize_dataset(3, {7, 5, 2}, 4, 13);
    const std::string path = (std::filesystem::temp_directory_path() / "mvd_cache_test.mvdd").string();
    write_cache(d, path);
    Dataset back = read_cache(path, Split::train);
    CHECK(back.features().values() == d.features().values());
    CHECK(back.labels() == d.labels());
    CHECK(back.class_count() == 3);
    std::filesystem::remove(path);
}

TEST_CASE("digit substrate is deterministic with MNIST geometry") {
    DatasetSplits a = synthesize_digits(12, 6, 29);
    DatasetSplits b = synthesize_digits(12, 6, 29);
    CHECK(a.train.size() == 120);
    CHECK(a.test.size() == 60);
    CHECK(a.train.shape()[0] == 28);
    CHECK(a.train.shape()[2] == 1);
    CHECK(a.train.class_count() == 10);
    CHECK(a.train.features().values() == b.train.features().values());
    CHECK(a.test.features().values() == b.test.features().values());
    // Train and test streams differ.
    CHECK(a.train.features().values() != b.test.features().values());
}

TEST_CASE("load_dataset rejects unknown names and missing files") {
    CHECK_THROWS_AS(load_dataset("fashion", "data"), UnknownDataset);
    CHECK_THROWS_AS(load_dataset("mnist", (std::filesystem::temp_directory_path() / "definitely_missing").string()),
                    DataLoadError);
}

namespace {

struct ToyWorld {
    DatasetSplits data;
    ClassifierModel classifier;
    EncoderModel encoder;
    DecoderModel decoder;
};

ToyWorld trained_toy_world() {
    ToyWorld w;
    w.data.train = synthesize_dataset(4, {12, 12, 1}, 40, 3);
    Dataset test_src = synthesize_dataset(4, {12, 12, 1}, 15, 4);
    std::vector<long> idx;
    for (long i = 0; i < test_src.size(); ++i) idx.push_back(i);
    w.data.test = test_src.subset(idx, Split::test);

    ArchitectureSpec cls = preset("classifier_toy_linear");
    cls.layers.back().units = 4;
    w.classifier = build_classifier(cls, 1);
    train_classifier(w.classifier, w.data.train, &w.data.test, 12, 5e-3, 32, 1);

    w.encoder = build_encoder(preset("encoder_toy"), 2);
    w.decoder = build_decoder(preset("decoder_toy"), 3);
    train_vae(w.encoder, w.decoder, w.data.train, 600, 2e-3, 32, 2);
    return w;
}

}  // namespace

TEST_CASE("evaluation subset holds both attributes and re-verifies") {
    ToyWorld w = trained_toy_world();
    EvaluationSubset subset = select_evaluation_subset(w.data.test, w.classifier, w.encoder, w.decoder, 20, 99);
    CHECK(subset.data.size() == 20);
    CHECK(subset.data.split() == Split::eval);
    CHECK(reverify_evaluation_subset(subset, w.data.test, w.classifier, w.encoder, w.decoder) == 20);

    // Determinism under the seed.
    EvaluationSubset again = select_evaluation_subset(w.data.test, w.classifier, w.encoder, w.decoder, 20, 99);
    CHECK(again.source_indices == subset.source_indices);
}

TEST_CASE("evaluation subset reports the qualifying count when starved") {
    ToyWorld w = trained_toy_world();
    // A classifier that never matches: logits fixed, argmax constant 0, labels forced to 1.
    ClassifierModel broken = build_classifier(preset("classifier_toy_linear"), 5);
    mvd::testing::set_all(broken.params(), 0.0f);
    std::vector<long> ones;
    for (long i = 0; i < w.data.test.size(); ++i)
        if (w.data.test.label_of(i) == 1) ones.push_back(i);
    Dataset only_ones = w.data.test.subset(ones, Split::test);
    try {
        select_evaluation_subset(only_ones, broken, w.encoder, w.decoder, 5, 1);
        FAIL("expected InsufficientData");
    } catch (const InsufficientData& e) {
        CHECK(e.qualifying == 0);
    }
}

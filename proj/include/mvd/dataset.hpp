#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mvd/tensor.hpp"

namespace mvd {

class ClassifierModel;
class EncoderModel;
class DecoderModel;

enum class Split { train, test, eval };

std::string split_name(Split s);

struct ExampleView {
    std::span<const float> features;
    int label = 0;
};

/// Labeled feature tensors in [0,1] with uniform shape (H, W, C).
class Dataset {
public:
    Dataset() = default;
    Dataset(Tensor features, std::vector<uint8_t> labels, long class_count, Split split);

    long size() const { return labels_.empty() ? 0 : static_cast<long>(labels_.size()); }
    long class_count() const { return class_count_; }
    Split split() const { return split_; }
    const std::array<long, 3>& shape() const { return shape_; }
    long feature_size() const { return shape_[0] * shape_[1] * shape_[2]; }

    const Tensor& features() const { return features_; }
    const std::vector<uint8_t>& labels() const { return labels_; }

    ExampleView at(long i) const {
        return {std::span<const float>(features_.row(i), static_cast<size_t>(feature_size())), labels_[static_cast<size_t>(i)]};
    }
    int label_of(long i) const { return labels_[static_cast<size_t>(i)]; }

    /// Gather selected rows into a fresh (n, H, W, C) batch tensor.
    Tensor gather(const std::vector<long>& indices) const;
    std::vector<uint8_t> gather_labels(const std::vector<long>& indices) const;
    Dataset subset(const std::vector<long>& indices, Split split) const;

    /// Enforces the type invariants: values finite in [0,1], labels < K, K >= 2.
    void validate() const;

private:
    Tensor features_;  // (N, H, W, C)
    std::vector<uint8_t> labels_;
    long class_count_ = 0;
    Split split_ = Split::train;
    std::array<long, 3> shape_{0, 0, 0};
};

struct DatasetSplits {
    Dataset train;
    Dataset test;
};

/// Loads one of {mnist, cifar10, synthetic, digits} from `root`.
/// mnist expects the decompressed IDX files, cifar10 the binary batches;
/// both also accept previously written MVDD cache files. The synthetic
/// families need no files at all.
DatasetSplits load_dataset(const std::string& name, const std::string& root);

/// Deterministic, linearly separable class blobs rendered into the feature
/// tensor. Same seed, same dataset, bit for bit.
Dataset synthesize_dataset(long class_count, std::array<long, 3> shape, long per_class, uint64_t seed);

/// Deterministic procedurally rendered digit glyphs at MNIST geometry
/// (28x28x1, 10 classes): jittered affine warps of dot-matrix strokes with
/// per-example contrast and noise. Used as the offline stand-in corpus when
/// the real archives are not on disk.
DatasetSplits synthesize_digits(long train_per_class, long test_per_class, uint64_t seed);

/// Per-class downsampling to ceil(rate * class size) examples.
Dataset stratified_sample(const Dataset& dataset, double rate, uint64_t seed);

/// MVDD cache files: magic "MVDD", version u16, rank u16, rank x u32 dims
/// (little-endian), features as f32 LE, labels as u8. Image splits are rank 4.
void write_cache(const Dataset& dataset, const std::string& path);
Dataset read_cache(const std::string& path, Split split);

/// Test examples that (1) the classifier labels correctly raw and (2) it
/// labels correctly after a benign encode/decode round trip. The latent for
/// output slot k is sampled with derive_eps(seed, k), which is what makes the
/// subset re-verifiable and lets the wire pipeline reproduce it exactly.
struct EvaluationSubset {
    Dataset data;                       // split = eval
    uint64_t seed = 0;                  // eps derivation base
    std::vector<long> source_indices;   // positions in the test split
    std::vector<long> class_histogram;  // composition note (sampling is unbalanced)
};

EvaluationSubset select_evaluation_subset(const Dataset& test, ClassifierModel& classifier, EncoderModel& encoder,
                                          DecoderModel& decoder, long n, uint64_t seed);

/// Re-runs both attribute checks on an already selected subset; returns the
/// number of examples that still pass. Used by the property suite.
long reverify_evaluation_subset(const EvaluationSubset& subset, const Dataset& test, ClassifierModel& classifier,
                                EncoderModel& encoder, DecoderModel& decoder);

}  // namespace mvd

#include <cstring>

#include "mvd/dataset.hpp"
#include "mvd/model.hpp"
#include "mvd/vae.hpp"

namespace mvd {

namespace {

Tensor one_example(const Dataset& data, long i) {
    Tensor x({1, data.shape()[0], data.shape()[1], data.shape()[2]});
    std::memcpy(x.data(), data.features().row(i), sizeof(float) * static_cast<size_t>(data.feature_size()));
    return x;
}

int reconstruction_prediction(ClassifierModel& classifier, EncoderModel& encoder, DecoderModel& decoder, const Tensor& x,
                              uint64_t seed, uint64_t slot) {
    GaussianPosterior post = encoder.encode(x);
    Tensor eps = derive_eps(seed, slot, encoder.latent_dim()).reshaped({1, encoder.latent_dim()});
    Tensor z = reparameterize(post, eps);
    Tensor recon = decoder.decode(z);
    return classifier.predict(recon)[0];
}

}  // namespace

EvaluationSubset select_evaluation_subset(const Dataset& test, ClassifierModel& classifier, EncoderModel& encoder,
                                          DecoderModel& decoder, long n, uint64_t seed) {
    if (n < 1) throw InvalidArgument("subset size must be >= 1");
    std::vector<long> order(static_cast<size_t>(test.size()));
    for (long i = 0; i < test.size(); ++i) order[static_cast<size_t>(i)] = i;
    Rng rng(seed ^ 0xe5a1ULL);
    rng.shuffle(order);

    // Attribute 1 is slot-independent; screen everything in one batched pass.
    const auto raw_preds = classifier.predict(test.features());
    std::vector<long> candidates;
    candidates.reserve(order.size());
    for (long i : order)
        if (raw_preds[static_cast<size_t>(i)] == test.label_of(i)) candidates.push_back(i);

    EvaluationSubset subset;
    subset.seed = seed;
    subset.class_histogram.assign(static_cast<size_t>(test.class_count()), 0);

    size_t cursor = 0;
    while (static_cast<long>(subset.source_indices.size()) < n && cursor < candidates.size()) {
        const long slot = static_cast<long>(subset.source_indices.size());
        const long cand = candidates[cursor++];
        Tensor x = one_example(test, cand);
        const int recon_pred =
            reconstruction_prediction(classifier, encoder, decoder, x, seed, static_cast<uint64_t>(slot));
        if (recon_pred == test.label_of(cand)) {
            subset.source_indices.push_back(cand);
            ++subset.class_histogram[static_cast<size_t>(test.label_of(cand))];
        }
    }
    if (static_cast<long>(subset.source_indices.size()) < n)
        throw InsufficientData("only " + std::to_string(subset.source_indices.size()) + " of " + std::to_string(n) +
                                   " examples satisfy both evaluation attributes",
                               static_cast<long>(subset.source_indices.size()));
    subset.data = test.subset(subset.source_indices, Split::eval);
    return subset;
}

long reverify_evaluation_subset(const EvaluationSubset& subset, const Dataset& test, ClassifierModel& classifier,
                                EncoderModel& encoder, DecoderModel& decoder) {
    long ok = 0;
    for (size_t k = 0; k < subset.source_indices.size(); ++k) {
        const long src = subset.source_indices[k];
        Tensor x = one_example(test, src);
        if (classifier.predict(x)[0] != test.label_of(src)) continue;
        if (reconstruction_prediction(classifier, encoder, decoder, x, subset.seed, k) != test.label_of(src)) continue;
        ++ok;
    }
    return ok;
}

}  // namespace mvd

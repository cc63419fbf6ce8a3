#pragma once

#include <optional>
#include <span>

#include "mvd/calibration.hpp"
#include "mvd/dataset.hpp"
#include "mvd/model.hpp"
#include "mvd/train.hpp"

namespace mvd {

/// Knobs of the adversarial objective. balance is the constant trading the
/// adversarial margin against the L2 distortion term; confidence is the
/// margin the winning logit must clear.
struct AttackConfig {
    double balance = 0.01;
    double confidence = 0.0;
    int norm_order = 2;
    std::optional<int> target;
    long adv_iter = 300;
    double lr = 1e-3;
    long batch = 64;
    uint64_t seed = 0;
    std::optional<double> budget_epsilon;  // reported, never enforced

    void validate() const {
        if (!(balance > 0.0)) throw InvalidArgument("balance constant must be > 0");
        if (confidence < 0.0) throw InvalidArgument("confidence margin must be >= 0");
        if (norm_order != 2) throw InvalidArgument("only the 2-norm is supported");
        if (adv_iter < 0) throw InvalidArgument("adv_iter must be >= 0");
    }
    bool targeted() const { return target.has_value(); }
};

/// max( max_{i != t} Z_i - Z_t , -kappa )
double margin_loss(std::span<const float> logits, long target, double kappa);
/// max( Z_y - max_{i != y} Z_i , -kappa )
double nontargeted_margin_loss(std::span<const float> logits, long current, double kappa);

/// Same values, with the subgradient written into grad (length = logits).
double margin_loss_grad(std::span<const float> logits, long target, double kappa, float* grad);
double nontargeted_margin_loss_grad(std::span<const float> logits, long current, double kappa, float* grad);

/// Latent supplier for Phase 2 and generation: either a white-box encoder
/// over a dataset, or the stored query pairs of a calibrated black box.
class EncoderHandle {
public:
    static EncoderHandle white_box(EncoderModel* encoder, const Dataset* data, uint64_t eps_seed);
    static EncoderHandle black_box(const CalibrationSet* pairs);

    bool is_black_box() const { return cal_ != nullptr; }
    long latent_dim() const;
    long pool_size() const;
    std::array<long, 3> example_shape() const;

    struct Sample {
        Tensor x;  // (n, rowsize) flat targets
        Tensor z;  // (n, d)
        std::vector<uint8_t> labels;
    };
    /// Fresh-eps draw for white boxes; stored pairs for black boxes.
    Sample sample(const std::vector<long>& indices);
    /// Reproducible draw: eps = derive_eps(eps_seed, pool index).
    Sample canonical(const std::vector<long>& indices);

private:
    EncoderModel* enc_ = nullptr;
    const Dataset* data_ = nullptr;
    const CalibrationSet* cal_ = nullptr;
    uint64_t eps_seed_ = 0;
    uint64_t draw_counter_ = 0;
};

struct MvdTrainingReport {
    std::vector<double> objective_curve;
    std::vector<double> adversarial_curve;
    std::vector<double> distortion_curve;
    long iterations = 0;
};

/// Algorithm Phase 2: only the decoder parameters move; the classifier and
/// encoder are frozen (verified by parameter digests). The decoder must have
/// been VAE-trained first, and calibrated when the encoder is a black box.
MvdTrainingReport train_mvd(DecoderModel& decoder, EncoderHandle& encoder, ClassifierModel& classifier,
                            const AttackConfig& cfg);

/// Mean over the batch of balance * L_adv(f(g(e(x)))) + ||g(e(x)) - x||_2.
/// reference_labels supply the non-targeted y per example; when omitted they
/// are taken from the current pipeline's own predictions. Decoder parameter
/// gradients accumulate when requested.
double mvd_objective(ClassifierModel& classifier, EncoderModel& encoder, DecoderModel& decoder, const Tensor& batch,
                     const AttackConfig& cfg, std::span<const int> reference_labels = {}, bool want_decoder_grads = false);

struct AdversarialBatch {
    Tensor originals;        // (N, H, W, C)
    Tensor reconstructions;  // benign decode of the same latents (empty if not requested)
    Tensor adversarials;     // (N, H, W, C)
    std::vector<int> clean_predictions;
    std::vector<int> adversarial_predictions;
    std::vector<double> l2_vs_original;
    std::vector<double> l2_vs_reconstruction;
};

/// Phase 3: one forward pass per example, no classifier involved.
AdversarialBatch generate(DecoderModel& mvd, EncoderModel& encoder, const Tensor& batch, uint64_t eps_seed,
                          uint64_t id_base = 0, DecoderModel* benign = nullptr);
AdversarialBatch generate_from_latents(DecoderModel& mvd, const Tensor& latents, const Tensor& originals,
                                       DecoderModel* benign = nullptr);

/// x + eta * sign(d CE / dx), clipped to [0,1].
Tensor fgsm(ClassifierModel& classifier, const Tensor& batch, const std::vector<uint8_t>& labels, double eta);

struct CwResult {
    Tensor adversarials;
    std::vector<bool> success;
    std::vector<double> l2;  // of the returned iterate, vs original
};

/// Iterative L2 attack in tanh space with a fixed balance constant: minimizes
/// c * margin + ||x' - x||_2^2, returning each example's lowest-distortion
/// successful iterate (or the final iterate flagged unsuccessful).
CwResult cw_l2(ClassifierModel& classifier, const Tensor& batch, const std::vector<uint8_t>& labels,
               std::optional<int> target, double kappa, double c, long iters, double lr);

}  // namespace mvd

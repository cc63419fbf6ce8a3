#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mvd/layers.hpp"

namespace mvd {

struct LayerSpec {
    enum class Kind { dense, conv, deconv, maxpool, dropout, flatten, reshape, gaussian };
    Kind kind;
    long units = 0;  // dense width, conv/deconv filters, gaussian latent width
    long kernel = 0;
    long stride = 1;
    long pad = 0;         // deconv only
    bool same_pad = false;  // conv only
    Activation act = Activation::linear;
    double rate = 0.0;  // dropout
    Shape3 shape{0, 0, 0};  // reshape
};

struct ArchitectureSpec {
    std::string name = "custom";
    Shape3 input{0, 0, 0};
    std::vector<LayerSpec> layers;

    std::string to_text() const;
    static ArchitectureSpec from_text(const std::string& text);

    // Builder helpers used by the presets and tests.
    ArchitectureSpec& dense(long units, Activation act);
    ArchitectureSpec& conv(long filters, long kernel, long stride, bool same_pad, Activation act);
    ArchitectureSpec& deconv(long filters, long kernel, long stride, long pad, Activation act);
    ArchitectureSpec& maxpool(long kernel);
    ArchitectureSpec& dropout(double rate);
    ArchitectureSpec& flatten();
    ArchitectureSpec& reshape(Shape3 s);
    ArchitectureSpec& gaussian(long latent);
};

enum class ModelKind : uint8_t { classifier = 0, encoder = 1, decoder = 2 };
enum class DecoderStage : uint8_t { fresh = 0, vae_trained = 1, calibrated = 2, adversarial = 3 };

std::string decoder_stage_name(DecoderStage s);

/// Sequential net shared by the three model families.
class Network {
public:
    Network() = default;
    Network(const ArchitectureSpec& spec, uint64_t seed, bool stop_before_gaussian = false);

    Tensor forward(const Tensor& x, bool training = false);
    Tensor backward(const Tensor& dy, bool want_param_grads = true);
    std::vector<Param*> params();
    const ArchitectureSpec& spec() const { return spec_; }
    Shape3 output_shape() const { return out_shape_; }
    uint64_t seed() const { return seed_; }

private:
    ArchitectureSpec spec_;
    std::vector<std::unique_ptr<Layer>> layers_;
    Shape3 out_shape_{0, 0, 0};
    uint64_t seed_ = 0;
};

/// Encoder output: per-example mean and log-variance of the latent Gaussian.
struct GaussianPosterior {
    Tensor mu;       // (N, D)
    Tensor log_var;  // (N, D)
    long latent_dim() const { return mu.rank() == 2 ? mu.dim(1) : 0; }
    long batch() const { return mu.rank() == 2 ? mu.dim(0) : 0; }
};

class ClassifierModel {
public:
    ClassifierModel() = default;
    ClassifierModel(const ArchitectureSpec& spec, uint64_t seed);

    long class_count() const { return class_count_; }
    const ArchitectureSpec& spec() const { return net_.spec(); }

    /// Pre-softmax scores, (N, class_count).
    Tensor logits(const Tensor& batch, bool training = false);
    /// d(loss)/d(input) given d(loss)/d(logits) from the last forward pass.
    Tensor backward(const Tensor& dlogits, bool want_param_grads = true);
    std::vector<Param*> params() { return net_.params(); }

    std::vector<int> predict(const Tensor& batch);

    /// Stable digest of all parameter bytes; used by freeze contract checks.
    uint64_t parameter_digest() const;
    ClassifierModel clone() const;

private:
    Network net_;
    long class_count_ = 0;
};

class EncoderModel {
public:
    EncoderModel() = default;
    EncoderModel(const ArchitectureSpec& spec, uint64_t seed);

    long latent_dim() const { return latent_dim_; }
    const ArchitectureSpec& spec() const { return spec_; }

    GaussianPosterior encode(const Tensor& batch, bool training = false);
    Tensor backward(const Tensor& dmu, const Tensor& dlog_var, bool want_param_grads = true);
    std::vector<Param*> params();

    /// Stable digest of all parameter bytes; used by the freeze contract check.
    uint64_t parameter_digest() const;
    EncoderModel clone() const;

private:
    ArchitectureSpec spec_;
    Network trunk_;
    std::unique_ptr<DenseLayer> mu_head_, log_var_head_;
    long latent_dim_ = 0;
};

class DecoderModel {
public:
    DecoderModel() = default;
    DecoderModel(const ArchitectureSpec& spec, uint64_t seed);

    const ArchitectureSpec& spec() const { return net_.spec(); }
    Shape3 output_shape() const { return net_.output_shape(); }
    long latent_dim() const { return latent_dim_; }

    /// Maps (N, latent) codes to (N, H, W, C) tensors in [0,1].
    Tensor decode(const Tensor& z, bool training = false);
    Tensor backward(const Tensor& dy, bool want_param_grads = true);
    std::vector<Param*> params() { return net_.params(); }

    DecoderStage stage() const { return stage_; }
    void set_stage(DecoderStage s) { stage_ = s; }
    DecoderModel clone() const;

private:
    Network net_;
    long latent_dim_ = 0;
    DecoderStage stage_ = DecoderStage::fresh;
};

/// Built-in presets: one per column of the classifier/encoder/decoder tables
/// plus reduced toy variants for fast tests.
ArchitectureSpec preset(const std::string& name);
std::vector<std::string> preset_names();
ModelKind preset_kind(const std::string& name);

ClassifierModel build_classifier(const ArchitectureSpec& spec, uint64_t seed);
EncoderModel build_encoder(const ArchitectureSpec& spec, uint64_t seed);
DecoderModel build_decoder(const ArchitectureSpec& spec, uint64_t seed);

// Checkpoints: magic "MVDM", version u16, kind/stage bytes, canonical spec
// text block, then named f32 little-endian parameter arrays.
void save_model(const ClassifierModel& m, const std::string& path);
void save_model(const EncoderModel& m, const std::string& path);
void save_model(const DecoderModel& m, const std::string& path);
ModelKind checkpoint_kind(const std::string& path);
ClassifierModel load_classifier(const std::string& path);
EncoderModel load_encoder(const std::string& path);
DecoderModel load_decoder(const std::string& path);

}  // namespace mvd

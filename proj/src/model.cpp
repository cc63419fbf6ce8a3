#include "mvd/model.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace mvd {

// ---------------------------------------------------------------------------
// ArchitectureSpec text codec

namespace {

std::string layer_text(const LayerSpec& l) {
    std::ostringstream os;
    switch (l.kind) {
        case LayerSpec::Kind::dense: os << "dense " << l.units << " " << activation_name(l.act); break;
        case LayerSpec::Kind::conv:
            os << "conv " << l.units << " " << l.kernel << " " << l.stride << " " << (l.same_pad ? "same" : "valid") << " "
               << activation_name(l.act);
            break;
        case LayerSpec::Kind::deconv:
            os << "deconv " << l.units << " " << l.kernel << " " << l.stride << " " << l.pad << " " << activation_name(l.act);
            break;
        case LayerSpec::Kind::maxpool: os << "maxpool " << l.kernel; break;
        case LayerSpec::Kind::dropout: os << "dropout " << l.rate; break;
        case LayerSpec::Kind::flatten: os << "flatten"; break;
        case LayerSpec::Kind::reshape: os << "reshape " << l.shape[0] << " " << l.shape[1] << " " << l.shape[2]; break;
        case LayerSpec::Kind::gaussian: os << "gaussian " << l.units; break;
    }
    return os.str();
}

}  // namespace

std::string ArchitectureSpec::to_text() const {
    std::ostringstream os;
    os << "name " << name << "\n";
    os << "input " << input[0] << " " << input[1] << " " << input[2] << "\n";
    for (const auto& l : layers) os << layer_text(l) << "\n";
    return os.str();
}

ArchitectureSpec ArchitectureSpec::from_text(const std::string& text) {
    ArchitectureSpec spec;
    spec.layers.clear();
    std::istringstream is(text);
    std::string line;
    bool have_input = false;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "name") {
            ls >> spec.name;
        } else if (kind == "input") {
            ls >> spec.input[0] >> spec.input[1] >> spec.input[2];
            have_input = true;
        } else if (kind == "dense") {
            long u;
            std::string act;
            ls >> u >> act;
            spec.dense(u, parse_activation(act));
        } else if (kind == "conv") {
            long f, k, s;
            std::string pad, act;
            ls >> f >> k >> s >> pad >> act;
            spec.conv(f, k, s, pad == "same", parse_activation(act));
        } else if (kind == "deconv") {
            long f, k, s, p;
            std::string act;
            ls >> f >> k >> s >> p >> act;
            spec.deconv(f, k, s, p, parse_activation(act));
        } else if (kind == "maxpool") {
            long k;
            ls >> k;
            spec.maxpool(k);
        } else if (kind == "dropout") {
            double r;
            ls >> r;
            spec.dropout(r);
        } else if (kind == "flatten") {
            spec.flatten();
        } else if (kind == "reshape") {
            Shape3 s{};
            ls >> s[0] >> s[1] >> s[2];
            spec.reshape(s);
        } else if (kind == "gaussian") {
            long d;
            ls >> d;
            spec.gaussian(d);
        } else {
            throw CheckpointCorrupt("unknown layer kind '" + kind + "' in spec text");
        }
        if (ls.fail()) throw CheckpointCorrupt("malformed spec line '" + line + "'");
    }
    if (!have_input) throw CheckpointCorrupt("spec text lacks an input line");
    return spec;
}

ArchitectureSpec& ArchitectureSpec::dense(long units, Activation act) {
    LayerSpec l;
    l.kind = LayerSpec::Kind::dense;
    l.units = units;
    l.act = act;
    layers.push_back(l);
    return *this;
}
ArchitectureSpec& ArchitectureSpec::conv(long filters, long kernel, long stride, bool same_pad, Activation act) {
    LayerSpec l;
    l.kind = LayerSpec::Kind::conv;
    l.units = filters;
    l.kernel = kernel;
    l.stride = stride;
    l.same_pad = same_pad;
    l.act = act;
    layers.push_back(l);
    return *this;
}
ArchitectureSpec& ArchitectureSpec::deconv(long filters, long kernel, long stride, long pad, Activation act) {
    LayerSpec l;
    l.kind = LayerSpec::Kind::deconv;
    l.units = filters;
    l.kernel = kernel;
    l.stride = stride;
    l.pad = pad;
    l.act = act;
    layers.push_back(l);
    return *this;
}
ArchitectureSpec& ArchitectureSpec::maxpool(long kernel) {
    LayerSpec l;
    l.kind = LayerSpec::Kind::maxpool;
    l.kernel = kernel;
    layers.push_back(l);
    return *this;
}
ArchitectureSpec& ArchitectureSpec::dropout(double rate) {
    LayerSpec l;
    l.kind = LayerSpec::Kind::dropout;
    l.rate = rate;
    layers.push_back(l);
    return *this;
}
ArchitectureSpec& ArchitectureSpec::flatten() {
    LayerSpec l;
    l.kind = LayerSpec::Kind::flatten;
    layers.push_back(l);
    return *this;
}
ArchitectureSpec& ArchitectureSpec::reshape(Shape3 s) {
    LayerSpec l;
    l.kind = LayerSpec::Kind::reshape;
    l.shape = s;
    layers.push_back(l);
    return *this;
}
ArchitectureSpec& ArchitectureSpec::gaussian(long latent) {
    LayerSpec l;
    l.kind = LayerSpec::Kind::gaussian;
    l.units = latent;
    layers.push_back(l);
    return *this;
}

std::string decoder_stage_name(DecoderStage s) {
    switch (s) {
        case DecoderStage::fresh: return "fresh";
        case DecoderStage::vae_trained: return "vae_trained";
        case DecoderStage::calibrated: return "calibrated";
        case DecoderStage::adversarial: return "adversarial";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Network

Network::Network(const ArchitectureSpec& spec, uint64_t seed, bool stop_before_gaussian) : spec_(spec), seed_(seed) {
    Rng init_rng(seed ^ 0xa02bdbf7bb3c0a7ULL);
    Shape3 cur = spec.input;
    if (flat_size(cur) <= 0) throw ArchitectureError("empty input shape");
    auto describe = [&](size_t i) {
        return "layer " + std::to_string(i) + " (" + layer_text(spec.layers[i]) + ")";
    };
    for (size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        const std::string prev = i == 0 ? "input " + shape_string({cur[0], cur[1], cur[2]}) : describe(i - 1);
        switch (l.kind) {
            case LayerSpec::Kind::dense:
                layers_.push_back(std::make_unique<DenseLayer>(flat_size(cur), l.units, l.act, init_rng));
                cur = {1, 1, l.units};
                break;
            case LayerSpec::Kind::conv:
                try {
                    layers_.push_back(std::make_unique<Conv2DLayer>(cur, l.units, l.kernel, l.stride, l.same_pad, l.act, init_rng));
                } catch (const ArchitectureError& e) {
                    throw ArchitectureError(describe(i) + " cannot follow " + prev + ": " + e.what());
                }
                cur = layers_.back()->output_shape();
                break;
            case LayerSpec::Kind::deconv:
                try {
                    layers_.push_back(std::make_unique<ConvT2DLayer>(cur, l.units, l.kernel, l.stride, l.pad, l.act, init_rng));
                } catch (const ArchitectureError& e) {
                    throw ArchitectureError(describe(i) + " cannot follow " + prev + ": " + e.what());
                }
                cur = layers_.back()->output_shape();
                break;
            case LayerSpec::Kind::maxpool:
                try {
                    layers_.push_back(std::make_unique<MaxPool2DLayer>(cur, l.kernel));
                } catch (const ArchitectureError& e) {
                    throw ArchitectureError(describe(i) + " cannot follow " + prev + ": " + e.what());
                }
                cur = layers_.back()->output_shape();
                break;
            case LayerSpec::Kind::dropout:
                layers_.push_back(std::make_unique<DropoutLayer>(cur, l.rate, seed ^ (0x9e37ULL + i * 1315423911ULL)));
                break;
            case LayerSpec::Kind::flatten:
                layers_.push_back(std::make_unique<ReshapeLayer>(cur, Shape3{1, 1, flat_size(cur)}));
                cur = {1, 1, flat_size(cur)};
                break;
            case LayerSpec::Kind::reshape:
                if (flat_size(l.shape) != flat_size(cur))
                    throw ArchitectureError(describe(i) + " cannot follow " + prev + ": " + std::to_string(flat_size(cur)) +
                                            " elements vs " + std::to_string(flat_size(l.shape)));
                layers_.push_back(std::make_unique<ReshapeLayer>(cur, l.shape));
                cur = l.shape;
                break;
            case LayerSpec::Kind::gaussian:
                if (!stop_before_gaussian) throw ArchitectureError("gaussian head is only valid in encoder specs");
                if (i + 1 != spec.layers.size()) throw ArchitectureError("gaussian head must be the final layer");
                i = spec.layers.size();
                break;
        }
        if (i >= spec.layers.size()) break;
    }
    out_shape_ = cur;
    for (size_t i = 0; i < layers_.size(); ++i)
        for (Param* p : layers_[i]->params()) p->name = "layer" + std::to_string(i) + "." + p->name;
}

Tensor Network::forward(const Tensor& x, bool training) {
    Tensor cur = x;
    for (auto& l : layers_) cur = l->forward(cur, training);
    return cur;
}

Tensor Network::backward(const Tensor& dy, bool want_param_grads) {
    Tensor cur = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur, want_param_grads);
    return cur;
}

std::vector<Param*> Network::params() {
    std::vector<Param*> out;
    for (auto& l : layers_)
        for (Param* p : l->params()) out.push_back(p);
    return out;
}

// ---------------------------------------------------------------------------
// Model families

ClassifierModel::ClassifierModel(const ArchitectureSpec& spec, uint64_t seed) : net_(spec, seed) {
    const Shape3 out = net_.output_shape();
    if (out[0] != 1 || out[1] != 1) throw ArchitectureError("classifier must end in a flat dense layer");
    class_count_ = out[2];
    if (class_count_ < 2) throw ArchitectureError("classifier needs at least two logits");
}

Tensor ClassifierModel::logits(const Tensor& batch, bool training) {
    Tensor out = net_.forward(batch, training);
    return out.reshaped({out.dim(0), class_count_});
}

Tensor ClassifierModel::backward(const Tensor& dlogits, bool want_param_grads) {
    return net_.backward(dlogits, want_param_grads);
}

std::vector<int> ClassifierModel::predict(const Tensor& batch) {
    const long n = batch.dim(0);
    std::vector<int> out(static_cast<size_t>(n));
    const long chunk = 256;
    for (long at = 0; at < n; at += chunk) {
        const long take = std::min(chunk, n - at);
        std::vector<long> shape = batch.shape();
        shape[0] = take;
        Tensor piece(shape);
        std::memcpy(piece.data(), batch.row(at), sizeof(float) * static_cast<size_t>(piece.size()));
        Tensor z = logits(piece);
        for (long r = 0; r < take; ++r) {
            const float* row = z.row(r);
            int best = 0;
            for (long j = 1; j < class_count_; ++j)
                if (row[j] > row[best]) best = static_cast<int>(j);
            out[static_cast<size_t>(at + r)] = best;
        }
    }
    return out;
}

EncoderModel::EncoderModel(const ArchitectureSpec& spec, uint64_t seed) : spec_(spec) {
    if (spec.layers.empty() || spec.layers.back().kind != LayerSpec::Kind::gaussian)
        throw ArchitectureError("encoder spec must end with a gaussian head");
    latent_dim_ = spec.layers.back().units;
    trunk_ = Network(spec, seed, /*stop_before_gaussian=*/true);
    Rng head_rng(seed ^ 0x51ed270b7a0fULL);
    const long trunk_out = flat_size(trunk_.output_shape());
    mu_head_ = std::make_unique<DenseLayer>(trunk_out, latent_dim_, Activation::linear, head_rng);
    log_var_head_ = std::make_unique<DenseLayer>(trunk_out, latent_dim_, Activation::linear, head_rng);
}

GaussianPosterior EncoderModel::encode(const Tensor& batch, bool training) {
    Tensor h = trunk_.forward(batch, training);
    Tensor flat = h.reshaped({h.dim(0), h.row_size()});
    GaussianPosterior p;
    p.mu = mu_head_->forward(flat, training);
    p.log_var = log_var_head_->forward(flat, training);
    return p;
}

Tensor EncoderModel::backward(const Tensor& dmu, const Tensor& dlog_var, bool want_param_grads) {
    Tensor dh = mu_head_->backward(dmu, want_param_grads);
    Tensor dh2 = log_var_head_->backward(dlog_var, want_param_grads);
    for (long i = 0; i < dh.size(); ++i) dh[i] += dh2[i];
    return trunk_.backward(dh, want_param_grads);
}

std::vector<Param*> EncoderModel::params() {
    std::vector<Param*> out = trunk_.params();
    for (Param* p : mu_head_->params()) {
        p->name = "mu." + p->name.substr(p->name.find_last_of('.') + 1);
        out.push_back(p);
    }
    for (Param* p : log_var_head_->params()) {
        p->name = "log_var." + p->name.substr(p->name.find_last_of('.') + 1);
        out.push_back(p);
    }
    return out;
}

uint64_t EncoderModel::parameter_digest() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const Tensor& t) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
        const size_t n = sizeof(float) * static_cast<size_t>(t.size());
        for (size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    };
    auto* self = const_cast<EncoderModel*>(this);
    for (Param* p : self->params()) mix(p->value);
    return h;
}

DecoderModel::DecoderModel(const ArchitectureSpec& spec, uint64_t seed) : net_(spec, seed) {
    latent_dim_ = flat_size(spec.input);
    const Shape3 out = net_.output_shape();
    if (flat_size(out) <= 0) throw ArchitectureError("decoder output is empty");
    if (spec.layers.empty()) throw ArchitectureError("decoder needs layers");
}

Tensor DecoderModel::decode(const Tensor& z, bool training) {
    if (z.row_size() != latent_dim_)
        throw ShapeError("decoder expects latent width " + std::to_string(latent_dim_) + ", got " +
                         std::to_string(z.row_size()));
    return net_.forward(z, training);
}

Tensor DecoderModel::backward(const Tensor& dy, bool want_param_grads) { return net_.backward(dy, want_param_grads); }

// ---------------------------------------------------------------------------
// Presets

namespace {

ArchitectureSpec conv_stack_cifar(const std::string& name, long head_width, bool head_dropout) {
    ArchitectureSpec s;
    s.name = name;
    s.input = {32, 32, 3};
    s.conv(32, 3, 1, true, Activation::relu).conv(32, 3, 1, false, Activation::relu).maxpool(2).dropout(0.2);
    s.conv(64, 3, 1, true, Activation::relu).conv(64, 3, 1, false, Activation::relu).maxpool(2).dropout(0.2);
    s.conv(128, 3, 1, true, Activation::relu).conv(128, 3, 1, false, Activation::relu).maxpool(2).dropout(0.2);
    s.flatten().dense(head_width, Activation::relu);
    if (head_dropout) s.dropout(0.2);
    s.dense(10, Activation::linear);
    return s;
}

}  // namespace

ArchitectureSpec preset(const std::string& name) {
    ArchitectureSpec s;
    s.name = name;
    if (name == "classifier_mnist_victim") {
        s.input = {28, 28, 1};
        s.conv(32, 3, 1, false, Activation::relu).conv(32, 3, 1, false, Activation::relu).dropout(0.2);
        s.flatten().dense(128, Activation::relu).dropout(0.2).dense(10, Activation::linear);
        return s;
    }
    if (name == "classifier_mnist_shadow") {
        s.input = {28, 28, 1};
        s.conv(32, 3, 1, false, Activation::relu).conv(32, 3, 1, false, Activation::relu).maxpool(2);
        s.conv(64, 3, 1, false, Activation::relu).conv(64, 3, 1, false, Activation::relu).maxpool(2);
        s.flatten().dense(200, Activation::relu).dense(200, Activation::relu).dense(10, Activation::linear);
        return s;
    }
    if (name == "classifier_cifar10_victim") return conv_stack_cifar(name, 200, false);
    if (name == "classifier_cifar10_shadow") return conv_stack_cifar(name, 512, true);

    if (name == "encoder_mnist_victim") {
        s.input = {28, 28, 1};
        s.flatten().dense(600, Activation::relu).gaussian(10);
        return s;
    }
    if (name == "encoder_mnist_shadow") {
        s.input = {28, 28, 1};
        s.flatten().dense(512, Activation::relu).gaussian(10);
        return s;
    }
    if (name == "encoder_cifar10_victim" || name == "encoder_cifar10_shadow") {
        s.input = {32, 32, 3};
        s.conv(3, 2, 1, true, Activation::relu).conv(32, 2, 2, true, Activation::relu);
        s.conv(32, 3, 1, true, Activation::relu).conv(32, 3, 1, true, Activation::relu).flatten();
        s.dense(name == "encoder_cifar10_victim" ? 1024 : 512, Activation::relu).gaussian(128);
        return s;
    }

    if (name == "mvd_mnist") {
        s.input = {1, 1, 10};
        s.dense(512, Activation::relu).dense(784, Activation::sigmoid).reshape({28, 28, 1});
        return s;
    }
    if (name == "mvd_cifar10") {
        s.input = {1, 1, 128};
        s.dense(512, Activation::relu).dense(8192, Activation::relu).reshape({16, 16, 32});
        s.deconv(32, 3, 1, 1, Activation::relu).deconv(32, 3, 1, 1, Activation::relu);
        s.deconv(32, 2, 2, 0, Activation::relu).deconv(3, 1, 1, 0, Activation::sigmoid);
        return s;
    }

    if (name == "classifier_toy") {
        s.input = {12, 12, 1};
        s.flatten().dense(16, Activation::relu).dense(10, Activation::linear);
        return s;
    }
    if (name == "classifier_toy_linear") {
        s.input = {12, 12, 1};
        s.flatten().dense(10, Activation::linear);
        return s;
    }
    if (name == "encoder_toy") {
        s.input = {12, 12, 1};
        s.flatten().dense(32, Activation::relu).gaussian(8);
        return s;
    }
    if (name == "decoder_toy") {
        s.input = {1, 1, 8};
        s.dense(32, Activation::relu).dense(144, Activation::sigmoid).reshape({12, 12, 1});
        return s;
    }
    throw InvalidArgument("unknown preset '" + name + "'");
}

std::vector<std::string> preset_names() {
    return {"classifier_mnist_victim", "classifier_mnist_shadow", "classifier_cifar10_victim", "classifier_cifar10_shadow",
            "encoder_mnist_victim",    "encoder_mnist_shadow",    "encoder_cifar10_victim",    "encoder_cifar10_shadow",
            "mvd_mnist",               "mvd_cifar10",             "classifier_toy",            "classifier_toy_linear",
            "encoder_toy",             "decoder_toy"};
}

ModelKind preset_kind(const std::string& name) {
    if (name.rfind("classifier", 0) == 0) return ModelKind::classifier;
    if (name.rfind("encoder", 0) == 0) return ModelKind::encoder;
    if (name.rfind("mvd", 0) == 0 || name.rfind("decoder", 0) == 0) return ModelKind::decoder;
    throw InvalidArgument("cannot infer model kind for preset '" + name + "'");
}

ClassifierModel build_classifier(const ArchitectureSpec& spec, uint64_t seed) { return ClassifierModel(spec, seed); }
EncoderModel build_encoder(const ArchitectureSpec& spec, uint64_t seed) { return EncoderModel(spec, seed); }
DecoderModel build_decoder(const ArchitectureSpec& spec, uint64_t seed) { return DecoderModel(spec, seed); }

namespace {

template <typename M>
void copy_params(const M& src, M& dst) {
    auto& s = const_cast<M&>(src);
    auto sp = s.params();
    auto dp = dst.params();
    for (size_t i = 0; i < sp.size(); ++i) dp[i]->value = sp[i]->value;
}

uint64_t digest_params(std::vector<Param*> params) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (Param* p : params) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
        const size_t n = sizeof(float) * static_cast<size_t>(p->value.size());
        for (size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

}  // namespace

uint64_t ClassifierModel::parameter_digest() const { return digest_params(const_cast<ClassifierModel*>(this)->params()); }

ClassifierModel ClassifierModel::clone() const {
    ClassifierModel out(spec(), net_.seed());
    copy_params(*this, out);
    return out;
}

EncoderModel EncoderModel::clone() const {
    EncoderModel out(spec_, trunk_.seed());
    copy_params(*this, out);
    return out;
}

DecoderModel DecoderModel::clone() const {
    DecoderModel out(spec(), net_.seed());
    copy_params(*this, out);
    out.set_stage(stage_);
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr uint16_t kModelVersion = 1;

void put_u16(std::ofstream& f, uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>(v >> 8)};
    f.write(reinterpret_cast<char*>(b), 2);
}
void put_u32(std::ofstream& f, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    f.write(reinterpret_cast<char*>(b), 4);
}
uint16_t get_u16(std::ifstream& f) {
    unsigned char b[2];
    f.read(reinterpret_cast<char*>(b), 2);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
}
uint32_t get_u32(std::ifstream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) | (static_cast<uint32_t>(b[2]) << 16) |
           (static_cast<uint32_t>(b[3]) << 24);
}

void write_checkpoint(const std::string& path, ModelKind kind, uint8_t stage, const ArchitectureSpec& spec,
                      std::vector<Param*> params) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write checkpoint " + path);
    f.write("MVDM", 4);
    put_u16(f, kModelVersion);
    const uint8_t kind_b = static_cast<uint8_t>(kind);
    f.write(reinterpret_cast<const char*>(&kind_b), 1);
    f.write(reinterpret_cast<const char*>(&stage), 1);
    const std::string text = spec.to_text();
    put_u32(f, static_cast<uint32_t>(text.size()));
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    put_u32(f, static_cast<uint32_t>(params.size()));
    for (Param* p : params) {
        put_u16(f, static_cast<uint16_t>(p->name.size()));
        f.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        put_u32(f, static_cast<uint32_t>(p->value.size()));
        f.write(reinterpret_cast<const char*>(p->value.data()),
                static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(p->value.size())));
    }
    if (!f) throw IoError("short write to checkpoint " + path);
}

struct ReadHeader {
    ModelKind kind;
    uint8_t stage;
    ArchitectureSpec spec;
};

ReadHeader read_header(std::ifstream& f, const std::string& path) {
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "MVDM", 4) != 0) throw CheckpointCorrupt("bad checkpoint magic in " + path);
    const uint16_t version = get_u16(f);
    if (version != kModelVersion)
        throw CheckpointVersionError("checkpoint " + path + " has format version " + std::to_string(version) +
                                     ", reader supports " + std::to_string(kModelVersion));
    uint8_t kind_b = 0, stage = 0;
    f.read(reinterpret_cast<char*>(&kind_b), 1);
    f.read(reinterpret_cast<char*>(&stage), 1);
    if (kind_b > 2) throw CheckpointCorrupt("bad model kind in " + path);
    const uint32_t text_len = get_u32(f);
    if (text_len > (1u << 20)) throw CheckpointCorrupt("implausible spec block in " + path);
    std::string text(text_len, '\0');
    f.read(text.data(), text_len);
    if (!f) throw CheckpointCorrupt("truncated checkpoint " + path);
    return {static_cast<ModelKind>(kind_b), stage, ArchitectureSpec::from_text(text)};
}

void read_params(std::ifstream& f, const std::string& path, std::vector<Param*> params) {
    const uint32_t count = get_u32(f);
    if (count != params.size())
        throw CheckpointCorrupt("checkpoint " + path + " carries " + std::to_string(count) + " arrays, spec needs " +
                                std::to_string(params.size()));
    for (Param* p : params) {
        const uint16_t name_len = get_u16(f);
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        const uint32_t n = get_u32(f);
        if (!f || name != p->name || n != static_cast<uint32_t>(p->value.size()))
            throw CheckpointCorrupt("checkpoint " + path + ": array '" + name + "' does not match spec array '" + p->name +
                                    "'");
        f.read(reinterpret_cast<char*>(p->value.data()), static_cast<std::streamsize>(sizeof(float) * n));
    }
    if (!f) throw CheckpointCorrupt("truncated parameter payload in " + path);
}

}  // namespace

void save_model(const ClassifierModel& m, const std::string& path) {
    auto& self = const_cast<ClassifierModel&>(m);
    write_checkpoint(path, ModelKind::classifier, 0, m.spec(), self.params());
}
void save_model(const EncoderModel& m, const std::string& path) {
    auto& self = const_cast<EncoderModel&>(m);
    write_checkpoint(path, ModelKind::encoder, 0, m.spec(), self.params());
}
void save_model(const DecoderModel& m, const std::string& path) {
    auto& self = const_cast<DecoderModel&>(m);
    write_checkpoint(path, ModelKind::decoder, static_cast<uint8_t>(m.stage()), m.spec(), self.params());
}

ModelKind checkpoint_kind(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint " + path);
    return read_header(f, path).kind;
}

ClassifierModel load_classifier(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint " + path);
    ReadHeader h = read_header(f, path);
    if (h.kind != ModelKind::classifier) throw CheckpointCorrupt(path + " is not a classifier checkpoint");
    ClassifierModel m(h.spec, 0);
    read_params(f, path, m.params());
    return m;
}

EncoderModel load_encoder(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint " + path);
    ReadHeader h = read_header(f, path);
    if (h.kind != ModelKind::encoder) throw CheckpointCorrupt(path + " is not an encoder checkpoint");
    EncoderModel m(h.spec, 0);
    read_params(f, path, m.params());
    return m;
}

DecoderModel load_decoder(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint " + path);
    ReadHeader h = read_header(f, path);
    if (h.kind != ModelKind::decoder) throw CheckpointCorrupt(path + " is not a decoder checkpoint");
    DecoderModel m(h.spec, 0);
    read_params(f, path, m.params());
    m.set_stage(static_cast<DecoderStage>(h.stage));
    return m;
}

}  // namespace mvd

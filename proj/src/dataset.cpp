#include "mvd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace mvd {

namespace fs = std::filesystem;

std::string split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::test: return "test";
        case Split::eval: return "eval";
    }
    return "?";
}

Dataset::Dataset(Tensor features, std::vector<uint8_t> labels, long class_count, Split split)
    : features_(std::move(features)), labels_(std::move(labels)), class_count_(class_count), split_(split) {
    if (features_.rank() != 4) throw ShapeError("dataset features must be (N,H,W,C), got " + shape_string(features_.shape()));
    if (features_.dim(0) != static_cast<long>(labels_.size()))
        throw ShapeError("feature/label count mismatch");
    shape_ = {features_.dim(1), features_.dim(2), features_.dim(3)};
    validate();
}

void Dataset::validate() const {
    if (class_count_ < 2) throw InvalidArgument("class_count must be >= 2");
    for (float v : features_.values()) {
        if (!(v >= 0.0f && v <= 1.0f)) throw InvalidArgument("feature value outside [0,1] or non-finite");
    }
    for (uint8_t l : labels_) {
        if (l >= class_count_) throw InvalidArgument("label " + std::to_string(l) + " >= class count");
    }
}

Tensor Dataset::gather(const std::vector<long>& indices) const {
    Tensor out({static_cast<long>(indices.size()), shape_[0], shape_[1], shape_[2]});
    const long row = feature_size();
    for (size_t i = 0; i < indices.size(); ++i)
        std::memcpy(out.row(static_cast<long>(i)), features_.row(indices[i]), sizeof(float) * static_cast<size_t>(row));
    return out;
}

std::vector<uint8_t> Dataset::gather_labels(const std::vector<long>& indices) const {
    std::vector<uint8_t> out(indices.size());
    for (size_t i = 0; i < indices.size(); ++i) out[i] = labels_[static_cast<size_t>(indices[i])];
    return out;
}

Dataset Dataset::subset(const std::vector<long>& indices, Split split) const {
    return Dataset(gather(indices), gather_labels(indices), class_count_, split);
}

// ---------------------------------------------------------------------------
// Synthetic blobs

Dataset synthesize_dataset(long class_count, std::array<long, 3> shape, long per_class, uint64_t seed) {
    if (class_count < 2) throw InvalidArgument("class_count must be >= 2");
    if (per_class < 1) throw InvalidArgument("per_class must be >= 1");
    if (shape[0] < 2 || shape[1] < 2 || shape[2] < 1) throw InvalidArgument("degenerate shape");

    const long h = shape[0], w = shape[1], c = shape[2];
    const long n = class_count * per_class;
    Tensor features({n, h, w, c});
    std::vector<uint8_t> labels(static_cast<size_t>(n));
    Rng rng(seed);

    // One grid cell per class: blob centres sit on a ceil(sqrt(K)) grid with
    // spacing well above both the positional jitter and a VAE's blur, so the
    // classes are linearly separable in pixel space and survive an
    // encode/decode round trip.
    const long cols = static_cast<long>(std::ceil(std::sqrt(static_cast<double>(class_count))));
    const long rows_g = (class_count + cols - 1) / cols;
    const double margin_x = 0.18 * (w - 1), margin_y = 0.18 * (h - 1);
    const double step_x = cols > 1 ? (w - 1 - 2 * margin_x) / (cols - 1) : 0.0;
    const double step_y = rows_g > 1 ? (h - 1 - 2 * margin_y) / (rows_g - 1) : 0.0;
    const double sigma = 0.085 * std::min(h, w) + 0.25;
    const double jitter = 0.03 * std::min(h, w);

    long row = 0;
    for (long k = 0; k < class_count; ++k) {
        const double bx = margin_x + step_x * (k % cols);
        const double by = margin_y + step_y * (k / cols);
        for (long e = 0; e < per_class; ++e, ++row) {
            const double px = bx + jitter * (rng.uniform() - 0.5) * 2.0;
            const double py = by + jitter * (rng.uniform() - 0.5) * 2.0;
            const double amp = 0.82 + 0.1 * rng.uniform();
            float* dst = features.row(row);
            for (long y = 0; y < h; ++y) {
                for (long x = 0; x < w; ++x) {
                    const double d2 = (x - px) * (x - px) + (y - py) * (y - py);
                    const double v = amp * std::exp(-d2 / (2.0 * sigma * sigma));
                    for (long ch = 0; ch < c; ++ch) dst[(y * w + x) * c + ch] = static_cast<float>(v);
                }
            }
            labels[static_cast<size_t>(row)] = static_cast<uint8_t>(k);
        }
    }
    return Dataset(std::move(features), std::move(labels), class_count, Split::train);
}

// ---------------------------------------------------------------------------
// Digit glyph renderer

namespace {

// 7x5 dot-matrix digit bitmaps, rows top to bottom.
const char* const kGlyphs[10][7] = {
    {"01110", "10001", "10011", "10101", "11001", "10001", "01110"},  // 0
    {"00100", "01100", "00100", "00100", "00100", "00100", "01110"},  // 1
    {"01110", "10001", "00001", "00110", "01000", "10000", "11111"},  // 2
    {"01110", "10001", "00001", "00110", "00001", "10001", "01110"},  // 3
    {"00010", "00110", "01010", "10010", "11111", "00010", "00010"},  // 4
    {"11111", "10000", "11110", "00001", "00001", "10001", "01110"},  // 5
    {"00110", "01000", "10000", "11110", "10001", "10001", "01110"},  // 6
    {"11111", "00001", "00010", "00100", "01000", "01000", "01000"},  // 7
    {"01110", "10001", "10001", "01110", "10001", "10001", "01110"},  // 8
    {"01110", "10001", "10001", "01111", "00001", "00010", "01100"},  // 9
};

struct GlyphCells {
    std::vector<std::pair<float, float>> on;  // (u, v) centres in glyph space
};

GlyphCells glyph_cells(int digit) {
    GlyphCells g;
    for (int r = 0; r < 7; ++r)
        for (int col = 0; col < 5; ++col)
            if (kGlyphs[digit][r][col] == '1') g.on.emplace_back(static_cast<float>(col), static_cast<float>(r));
    return g;
}

void render_digit(float* dst, int digit, Rng& rng, const std::vector<GlyphCells>& cells) {
    const int hw = 28;
    const double rot = (rng.uniform() - 0.5) * 0.7;           // +-0.35 rad
    const double scale = 2.85 * (0.75 + 0.45 * rng.uniform()); // glyph cell -> pixels
    const double shear = (rng.uniform() - 0.5) * 0.5;
    const double tx = 13.5 + (rng.uniform() - 0.5) * 7.0;
    const double ty = 13.5 + (rng.uniform() - 0.5) * 7.0;
    const double stroke = 0.36 + 0.2 * rng.uniform();         // in glyph cells
    const double contrast = 0.65 + 0.35 * rng.uniform();
    const double wobble_amp = 0.35 * rng.uniform();
    const double wobble_phase = rng.uniform() * 6.283185307179586;

    const double ca = std::cos(rot), sa = std::sin(rot);
    const double inv_sigma2 = 1.0 / (2.0 * stroke * stroke);
    const auto& on = cells[static_cast<size_t>(digit)].on;

    for (int y = 0; y < hw; ++y) {
        for (int x = 0; x < hw; ++x) {
            // Map pixel back into glyph space (centre of the 5x7 box at origin).
            const double dx = x - tx, dy = y - ty;
            double u = (ca * dx + sa * dy) / scale;
            double v = (-sa * dx + ca * dy) / scale;
            u -= shear * v;
            u += wobble_amp * std::sin(wobble_phase + v * 1.9);
            u += 2.0;  // glyph columns 0..4
            v += 3.0;  // glyph rows 0..6
            double best = 1e9;
            for (const auto& cell : on) {
                const double du = u - cell.first, dv = v - cell.second;
                const double d2 = du * du + dv * dv;
                if (d2 < best) best = d2;
            }
            double val = contrast * std::exp(-best * inv_sigma2);
            val += 0.02 * rng.uniform();  // sensor noise floor
            dst[y * hw + x] = static_cast<float>(std::clamp(val, 0.0, 1.0));
        }
    }
}

Dataset render_digit_split(long per_class, uint64_t seed, Split split) {
    const long n = 10 * per_class;
    Tensor features({n, 28, 28, 1});
    std::vector<uint8_t> labels(static_cast<size_t>(n));
    std::vector<GlyphCells> cells;
    cells.reserve(10);
    for (int d = 0; d < 10; ++d) cells.push_back(glyph_cells(d));

    // Interleave classes so any prefix is roughly balanced.
    Rng rng(seed);
    long row = 0;
    for (long e = 0; e < per_class; ++e) {
        for (int d = 0; d < 10; ++d, ++row) {
            render_digit(features.row(row), d, rng, cells);
            labels[static_cast<size_t>(row)] = static_cast<uint8_t>(d);
        }
    }
    return Dataset(std::move(features), std::move(labels), 10, split);
}

}  // namespace

DatasetSplits synthesize_digits(long train_per_class, long test_per_class, uint64_t seed) {
    if (train_per_class < 1 || test_per_class < 1) throw InvalidArgument("per-class sizes must be >= 1");
    DatasetSplits out;
    out.train = render_digit_split(train_per_class, seed * 2 + 1, Split::train);
    out.test = render_digit_split(test_per_class, seed * 2 + 2, Split::test);
    return out;
}

// ---------------------------------------------------------------------------
// Stratified sampling

Dataset stratified_sample(const Dataset& dataset, double rate, uint64_t seed) {
    if (!(rate > 0.0 && rate <= 1.0)) throw InvalidArgument("rate must be in (0,1]");
    std::vector<std::vector<long>> by_class(static_cast<size_t>(dataset.class_count()));
    for (long i = 0; i < dataset.size(); ++i) by_class[static_cast<size_t>(dataset.label_of(i))].push_back(i);
    for (long k = 0; k < dataset.class_count(); ++k)
        if (by_class[static_cast<size_t>(k)].empty())
            throw InvalidArgument("class " + std::to_string(k) + " absent from dataset");

    Rng rng(seed);
    std::vector<long> picked;
    for (auto& members : by_class) {
        rng.shuffle(members);
        const long take = static_cast<long>(std::ceil(rate * static_cast<double>(members.size())));
        for (long i = 0; i < take; ++i) picked.push_back(members[static_cast<size_t>(i)]);
    }
    rng.shuffle(picked);
    return dataset.subset(picked, dataset.split());
}

// ---------------------------------------------------------------------------
// MVDD cache format

namespace {

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

constexpr uint16_t kCacheVersion = 1;

}  // namespace

void write_cache(const Dataset& dataset, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write cache file " + path);
    f.write("MVDD", 4);
    put_u16(f, kCacheVersion);
    put_u16(f, 4);
    put_u32(f, static_cast<uint32_t>(dataset.size()));
    put_u32(f, static_cast<uint32_t>(dataset.shape()[0]));
    put_u32(f, static_cast<uint32_t>(dataset.shape()[1]));
    put_u32(f, static_cast<uint32_t>(dataset.shape()[2]));
    // Class count rides along after the dims so the file is self-contained.
    put_u32(f, static_cast<uint32_t>(dataset.class_count()));
    static_assert(sizeof(float) == 4);
    f.write(reinterpret_cast<const char*>(dataset.features().data()),
            static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(dataset.features().size())));
    f.write(reinterpret_cast<const char*>(dataset.labels().data()), static_cast<std::streamsize>(dataset.labels().size()));
    if (!f) throw IoError("short write to " + path);
}

Dataset read_cache(const std::string& path, Split split) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataLoadError("cannot open cache file " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "MVDD", 4) != 0) throw DataLoadError("bad cache magic in " + path);
    const uint16_t version = get_u16(f);
    if (version != kCacheVersion) throw DataLoadError("unsupported cache version in " + path);
    const uint16_t rank = get_u16(f);
    if (rank != 4) throw DataLoadError("unexpected cache rank in " + path);
    const long n = get_u32(f), h = get_u32(f), w = get_u32(f), c = get_u32(f);
    const long classes = get_u32(f);
    Tensor features({n, h, w, c});
    f.read(reinterpret_cast<char*>(features.data()),
           static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(features.size())));
    std::vector<uint8_t> labels(static_cast<size_t>(n));
    f.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
    if (!f) throw DataLoadError("truncated cache file " + path);
    return Dataset(std::move(features), std::move(labels), classes, split);
}

// ---------------------------------------------------------------------------
// MNIST / CIFAR10 loaders

namespace {

uint32_t read_be_u32(std::ifstream& f, const std::string& path) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (!f) throw DataLoadError("truncated IDX file " + path);
    return (static_cast<uint32_t>(b[0]) << 24) | (static_cast<uint32_t>(b[1]) << 16) | (static_cast<uint32_t>(b[2]) << 8) |
           static_cast<uint32_t>(b[3]);
}

Dataset load_mnist_split(const fs::path& images, const fs::path& labels_path, Split split) {
    std::ifstream fi(images, std::ios::binary);
    if (!fi) throw DataLoadError("missing MNIST image file " + images.string());
    if (read_be_u32(fi, images.string()) != 2051) throw DataLoadError("bad IDX image magic in " + images.string());
    const long n = read_be_u32(fi, images.string());
    const long rows = read_be_u32(fi, images.string());
    const long cols = read_be_u32(fi, images.string());
    if (rows != 28 || cols != 28) throw DataLoadError("unexpected MNIST geometry in " + images.string());

    std::vector<unsigned char> raw(static_cast<size_t>(n) * 784);
    fi.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!fi) throw DataLoadError("truncated MNIST image payload in " + images.string());

    std::ifstream fl(labels_path, std::ios::binary);
    if (!fl) throw DataLoadError("missing MNIST label file " + labels_path.string());
    if (read_be_u32(fl, labels_path.string()) != 2049) throw DataLoadError("bad IDX label magic in " + labels_path.string());
    const long nl = read_be_u32(fl, labels_path.string());
    if (nl != n) throw DataLoadError("MNIST image/label count mismatch");
    std::vector<uint8_t> labels(static_cast<size_t>(n));
    fl.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
    if (!fl) throw DataLoadError("truncated MNIST label payload in " + labels_path.string());

    Tensor features({n, 28, 28, 1});
    for (size_t i = 0; i < raw.size(); ++i) features[static_cast<long>(i)] = static_cast<float>(raw[i]) / 255.0f;
    return Dataset(std::move(features), std::move(labels), 10, split);
}

Dataset load_cifar_batches(const std::vector<fs::path>& files, Split split) {
    constexpr long kRecord = 3073;
    std::vector<unsigned char> raw;
    for (const auto& p : files) {
        std::ifstream f(p, std::ios::binary);
        if (!f) throw DataLoadError("missing CIFAR batch " + p.string());
        f.seekg(0, std::ios::end);
        const auto sz = static_cast<size_t>(f.tellg());
        f.seekg(0);
        if (sz % kRecord != 0) throw DataLoadError("corrupt CIFAR batch " + p.string());
        const size_t at = raw.size();
        raw.resize(at + sz);
        f.read(reinterpret_cast<char*>(raw.data() + at), static_cast<std::streamsize>(sz));
        if (!f) throw DataLoadError("truncated CIFAR batch " + p.string());
    }
    const long n = static_cast<long>(raw.size()) / kRecord;
    Tensor features({n, 32, 32, 3});
    std::vector<uint8_t> labels(static_cast<size_t>(n));
    for (long i = 0; i < n; ++i) {
        const unsigned char* rec = raw.data() + i * kRecord;
        labels[static_cast<size_t>(i)] = rec[0];
        const unsigned char* px = rec + 1;  // planar R, G, B
        float* dst = features.row(i);
        for (long ch = 0; ch < 3; ++ch)
            for (long p = 0; p < 1024; ++p) dst[p * 3 + ch] = static_cast<float>(px[ch * 1024 + p]) / 255.0f;
    }
    return Dataset(std::move(features), std::move(labels), 10, split);
}

}  // namespace

DatasetSplits load_dataset(const std::string& name, const std::string& root) {
    if (name == "synthetic") {
        DatasetSplits out;
        out.train = synthesize_dataset(10, {12, 12, 1}, 64, 11);
        Dataset test = synthesize_dataset(10, {12, 12, 1}, 16, 12);
        out.test = test.subset([&] {
            std::vector<long> idx(static_cast<size_t>(test.size()));
            for (long i = 0; i < test.size(); ++i) idx[static_cast<size_t>(i)] = i;
            return idx;
        }(), Split::test);
        return out;
    }
    if (name == "digits") return synthesize_digits(400, 200, 29);

    if (name != "mnist" && name != "cifar10") throw UnknownDataset("unknown dataset name '" + name + "'");

    const fs::path base = fs::path(root) / name;
    const fs::path cache_train = base / "train.mvdd";
    const fs::path cache_test = base / "test.mvdd";
    if (fs::exists(cache_train) && fs::exists(cache_test)) {
        DatasetSplits out;
        out.train = read_cache(cache_train.string(), Split::train);
        out.test = read_cache(cache_test.string(), Split::test);
        return out;
    }

    DatasetSplits out;
    if (name == "mnist") {
        out.train = load_mnist_split(base / "train-images-idx3-ubyte", base / "train-labels-idx1-ubyte", Split::train);
        out.test = load_mnist_split(base / "t10k-images-idx3-ubyte", base / "t10k-labels-idx1-ubyte", Split::test);
    } else {
        fs::path bin = base;
        if (fs::exists(base / "cifar-10-batches-bin")) bin = base / "cifar-10-batches-bin";
        std::vector<fs::path> train_files;
        for (int i = 1; i <= 5; ++i) train_files.push_back(bin / ("data_batch_" + std::to_string(i) + ".bin"));
        out.train = load_cifar_batches(train_files, Split::train);
        out.test = load_cifar_batches({bin / "test_batch.bin"}, Split::test);
    }
    return out;
}

}  // namespace mvd
